#include "sqvi/game_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace sqvi {

using nlohmann::json;

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

const json& require_field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) {
    throw GameIoError(std::string("game file: missing field '") + name + "'");
  }
  return *it;
}

int require_positive_int(const json& j, const char* name) {
  const json& f = require_field(j, name);
  if (!f.is_number_integer() || f.get<long long>() <= 0) {
    throw GameIoError(std::string("game file: field '") + name +
                      "' must be a positive integer");
  }
  return f.get<int>();
}

double require_number(const json& arr, const char* field, const std::string& at) {
  if (!arr.is_number()) {
    throw GameIoError(std::string("game file: ") + field + at + " is not a number");
  }
  return arr.get<double>();
}

void require_array_size(const json& arr, std::size_t expected, const char* field,
                        const std::string& at) {
  if (!arr.is_array()) {
    throw GameIoError(std::string("game file: dimension mismatch in ") + field + at +
                      ": expected an array of length " + std::to_string(expected));
  }
  if (arr.size() != expected) {
    throw GameIoError(std::string("game file: dimension mismatch in ") + field + at +
                      ": length " + std::to_string(arr.size()) + ", expected " +
                      std::to_string(expected));
  }
}

}  // namespace

MarkovGame<double> load_game(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw GameIoError(std::string("game file: parse error: ") + e.what());
  }
  if (!j.is_object()) {
    throw GameIoError("game file: top level must be a JSON object");
  }

  MarkovGame<double> g;
  g.num_states = require_positive_int(j, "num_states");
  g.num_leader_actions = require_positive_int(j, "num_leader_actions");
  g.num_follower_actions = require_positive_int(j, "num_follower_actions");

  const json& gamma = require_field(j, "gamma");
  if (!gamma.is_number()) throw GameIoError("game file: field 'gamma' must be a number");
  g.gamma = gamma.get<double>();

  const int S = g.num_states;
  const int A = g.num_leader_actions;
  const int B = g.num_follower_actions;

  auto load_reward = [&](const char* field, MatrixX<double>& out) {
    const json& arr = require_field(j, field);
    require_array_size(arr, static_cast<std::size_t>(S), field, "");
    out.resize(S, Eigen::Index(A) * B);
    for (int s = 0; s < S; ++s) {
      const std::string at_s = "[" + std::to_string(s) + "]";
      require_array_size(arr[s], static_cast<std::size_t>(A), field, at_s);
      for (int a = 0; a < A; ++a) {
        const std::string at_a = at_s + "[" + std::to_string(a) + "]";
        require_array_size(arr[s][a], static_cast<std::size_t>(B), field, at_a);
        for (int b = 0; b < B; ++b) {
          const std::string at_b = at_a + "[" + std::to_string(b) + "]";
          out(s, Eigen::Index(a) * B + b) = require_number(arr[s][a][b], field, at_b);
        }
      }
    }
  };
  load_reward("reward_leader", g.reward_leader);
  load_reward("reward_follower", g.reward_follower);

  const json& tr = require_field(j, "transition");
  require_array_size(tr, static_cast<std::size_t>(S), "transition", "");
  g.transition.resize(g.num_joint(), S);
  for (int s = 0; s < S; ++s) {
    const std::string at_s = "[" + std::to_string(s) + "]";
    require_array_size(tr[s], static_cast<std::size_t>(A), "transition", at_s);
    for (int a = 0; a < A; ++a) {
      const std::string at_a = at_s + "[" + std::to_string(a) + "]";
      require_array_size(tr[s][a], static_cast<std::size_t>(B), "transition", at_a);
      for (int b = 0; b < B; ++b) {
        const std::string at_b = at_a + "[" + std::to_string(b) + "]";
        require_array_size(tr[s][a][b], static_cast<std::size_t>(S), "transition", at_b);
        for (int s2 = 0; s2 < S; ++s2) {
          const std::string at_s2 = at_b + "[" + std::to_string(s2) + "]";
          g.transition(g.transition_row_index(s, a, b), s2) =
              require_number(tr[s][a][b][s2], "transition", at_s2);
        }
      }
    }
  }
  return g;
}

namespace {

void append_reward(std::string& out, const MarkovGame<double>& g,
                   const MatrixX<double>& rw) {
  out += "[";
  for (int s = 0; s < g.num_states; ++s) {
    if (s) out += ",";
    out += "\n    [";
    for (int a = 0; a < g.num_leader_actions; ++a) {
      if (a) out += ", ";
      out += "[";
      for (int b = 0; b < g.num_follower_actions; ++b) {
        if (b) out += ", ";
        out += format_real(rw(s, g.action_col(a, b)));
      }
      out += "]";
    }
    out += "]";
  }
  out += "\n  ]";
}

}  // namespace

std::string save_game(const MarkovGame<double>& g) {
  std::string out;
  out += "{\n";
  out += "  \"num_states\": " + std::to_string(g.num_states) + ",\n";
  out += "  \"num_leader_actions\": " + std::to_string(g.num_leader_actions) + ",\n";
  out += "  \"num_follower_actions\": " + std::to_string(g.num_follower_actions) + ",\n";
  out += "  \"gamma\": " + format_real(g.gamma) + ",\n";
  out += "  \"reward_leader\": ";
  append_reward(out, g, g.reward_leader);
  out += ",\n  \"reward_follower\": ";
  append_reward(out, g, g.reward_follower);
  out += ",\n  \"transition\": [";
  for (int s = 0; s < g.num_states; ++s) {
    if (s) out += ",";
    out += "\n    [";
    for (int a = 0; a < g.num_leader_actions; ++a) {
      if (a) out += ", ";
      out += "[";
      for (int b = 0; b < g.num_follower_actions; ++b) {
        if (b) out += ", ";
        out += "[";
        for (int s2 = 0; s2 < g.num_states; ++s2) {
          if (s2) out += ", ";
          out += format_real(g.p(s, a, b, s2));
        }
        out += "]";
      }
      out += "]";
    }
    out += "]";
  }
  out += "\n  ]\n}\n";
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GameIoError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw GameIoError("cannot open file for writing: " + tmp.string());
    out << content;
    if (!out) throw GameIoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MarkovGame<double> load_game_file(const std::filesystem::path& path) {
  return load_game(read_file(path));
}

void save_game_file(const MarkovGame<double>& g, const std::filesystem::path& path) {
  write_file_atomic(path, save_game(g));
}

}  // namespace sqvi
