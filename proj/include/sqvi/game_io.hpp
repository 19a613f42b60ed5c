#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "sqvi/markov_game.hpp"

namespace sqvi {

class GameIoError : public std::runtime_error {
 public:
  explicit GameIoError(const std::string& what) : std::runtime_error(what) {}
};

/**
 * Game file format: a JSON object with fields
 *   num_states, num_leader_actions, num_follower_actions, gamma,
 *   transition      nested array [s][a][b][s']
 *   reward_leader   nested array [s][a][b]
 *   reward_follower nested array [s][a][b]
 * All indices 0-based; reals are written with 17 significant decimal digits,
 * so load(save(g)) reproduces every double bit-exactly.
 */
MarkovGame<double> load_game(const std::string& text);
std::string save_game(const MarkovGame<double>& g);

MarkovGame<double> load_game_file(const std::filesystem::path& path);
void save_game_file(const MarkovGame<double>& g, const std::filesystem::path& path);

/// %.17g rendering used by every text format in this project.
std::string format_real(double x);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace sqvi
