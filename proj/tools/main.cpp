#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sqvi/comparison.hpp"
#include "sqvi/game_io.hpp"
#include "sqvi/linear_ops.hpp"
#include "sqvi/markov_game.hpp"
#include "sqvi/oracle.hpp"
#include "sqvi/qvi.hpp"
#include "sqvi/splitmix.hpp"
#include "sqvi/trace_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sqvi;

using Game = MarkovGame<double>;
using Tensor = QTensor<double>;

namespace {

constexpr const char* kBuiltinGameName = "paper-sec5";

// ---------------------------------------------------------------------------
// Argument parsing helpers
// ---------------------------------------------------------------------------

long long parse_ll(const std::string& tok, const char* flag) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw CLI::ValidationError(flag, "not an integer: '" + tok + "'");
  }
}

std::vector<long long> parse_seeds(const std::string& text) {
  std::vector<long long> seeds;
  const auto range_pos = text.find("..");
  if (range_pos != std::string::npos) {
    const long long lo = parse_ll(text.substr(0, range_pos), "--seeds");
    const long long hi = parse_ll(text.substr(range_pos + 2), "--seeds");
    if (hi < lo) throw CLI::ValidationError("--seeds", "empty range " + text);
    for (long long s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos
                                                 ? std::string::npos
                                                 : comma - pos);
    if (!tok.empty()) seeds.push_back(parse_ll(tok, "--seeds"));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (seeds.empty()) throw CLI::ValidationError("--seeds", "no seeds in " + text);
  return seeds;
}

enum class InitMode { uniform, zero, file };
enum class EpsMode { adaptive, global, fixed };

struct RunConfig {
  std::string game_spec = kBuiltinGameName;
  int iterations = 60;
  std::vector<long long> seeds = {0, 1, 2, 3, 4};
  InitMode init_mode = InitMode::uniform;
  fs::path init_file;
  EpsMode eps_mode = EpsMode::global;
  double eps_fixed = 0.0;
  bool eps_iterates_only = false;
  fs::path out_dir;
  double oracle_budget = 1e6;
  int cycle_window = 16;
};

InitMode parse_init_mode(const std::string& text, fs::path& file_out) {
  if (text == "uniform") return InitMode::uniform;
  if (text == "zero") return InitMode::zero;
  if (text.rfind("file:", 0) == 0) {
    file_out = text.substr(5);
    return InitMode::file;
  }
  throw CLI::ValidationError("--init", "expected uniform, zero or file:PATH");
}

EpsMode parse_eps_mode(const std::string& text, double& fixed_out) {
  if (text == "adaptive") return EpsMode::adaptive;
  if (text == "global") return EpsMode::global;
  if (text.rfind("fixed:", 0) == 0) {
    try {
      fixed_out = std::stod(text.substr(6));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--eps", "not a number: '" + text.substr(6) + "'");
    }
    if (fixed_out < 0) throw CLI::ValidationError("--eps", "fixed value must be >= 0");
    return EpsMode::fixed;
  }
  throw CLI::ValidationError("--eps", "expected adaptive, global or fixed:VALUE");
}

GameDims parse_dims(const std::string& text) {
  GameDims dims;
  int parts[3] = {0, 0, 0};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto comma = text.find(',', pos);
    const std::string tok = text.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    parts[i] = static_cast<int>(parse_ll(tok, "--dims"));
    if (parts[i] <= 0) throw CLI::ValidationError("--dims", "dimensions must be positive");
    if (comma == std::string::npos && i < 2) {
      throw CLI::ValidationError("--dims", "expected S,A,B");
    }
    pos = comma + 1;
  }
  dims.num_states = parts[0];
  dims.num_leader_actions = parts[1];
  dims.num_follower_actions = parts[2];
  return dims;
}

fs::path resolve_out_dir(const fs::path& from_flag, const char* fallback) {
  // SQVI_OUT_DIR overrides the output directory when set.
  if (const char* env = std::getenv("SQVI_OUT_DIR"); env != nullptr && *env != '\0') {
    return fs::path(env);
  }
  return from_flag.empty() ? fs::path(fallback) : from_flag;
}

Game resolve_game(const std::string& spec) {
  if (spec == kBuiltinGameName) return single_state_example_game<double>();
  if (!fs::exists(spec)) {
    throw GameIoError("game file not found: " + spec);
  }
  return load_game_file(spec);
}

// ---------------------------------------------------------------------------
// Initial tensors
// ---------------------------------------------------------------------------

/// Uniform [-1,1) entries from the counter-based stream of `seed`: first all
/// leader entries in (s,a,b) lexicographic order, then all follower entries.
std::pair<Tensor, Tensor> uniform_initial_tensors(const Game& g, long long seed) {
  SplitMixStream stream(static_cast<std::uint64_t>(seed));
  Tensor q1 = Tensor::zero(g, Player::leader);
  Tensor q2 = Tensor::zero(g, Player::follower);
  for (Tensor* q : {&q1, &q2}) {
    for (int s = 0; s < g.num_states; ++s) {
      for (int a = 0; a < g.num_leader_actions; ++a) {
        for (int b = 0; b < g.num_follower_actions; ++b) {
          (*q)(s, a, b) = stream.next_symmetric();
        }
      }
    }
  }
  return {std::move(q1), std::move(q2)};
}

std::pair<Tensor, Tensor> file_initial_tensors(const Game& g, const fs::path& path) {
  json j = json::parse(read_file(path));
  auto load_tensor = [&](const char* field, Player who) {
    Tensor q = Tensor::zero(g, who);
    const json& arr = j.at(field);
    for (int s = 0; s < g.num_states; ++s) {
      for (int a = 0; a < g.num_leader_actions; ++a) {
        for (int b = 0; b < g.num_follower_actions; ++b) {
          q(s, a, b) = arr.at(s).at(a).at(b).get<double>();
        }
      }
    }
    return q;
  };
  return {load_tensor("q1", Player::leader), load_tensor("q2", Player::follower)};
}

std::pair<Tensor, Tensor> initial_tensors(const Game& g, const RunConfig& cfg,
                                          long long seed) {
  switch (cfg.init_mode) {
    case InitMode::uniform: return uniform_initial_tensors(g, seed);
    case InitMode::zero:
      return {Tensor::zero(g, Player::leader), Tensor::zero(g, Player::follower)};
    case InitMode::file: return file_initial_tensors(g, cfg.init_file);
  }
  throw std::logic_error("unreachable init mode");
}

// ---------------------------------------------------------------------------
// Seed pipeline
// ---------------------------------------------------------------------------

struct SeedResult {
  long long seed = 0;
  IterationTrace<double> trace;
  std::optional<ComparisonTrace<double>> comparison;
  TraceExportContext ctx;  // comparison pointer is bound at use, not here
  CycleReport cycle;

  TraceExportContext export_context() const {
    TraceExportContext out = ctx;
    out.comparison = comparison ? &*comparison : nullptr;
    return out;
  }
};

SeedResult run_one_seed(const Game& g, const std::optional<EquilibriumRefs<double>>& refs,
                        const RunConfig& cfg, long long seed) {
  SeedResult result;
  result.seed = seed;

  auto [q1_0, q2_0] = initial_tensors(g, cfg, seed);
  RunOptions<double> opts;
  opts.seed = seed;
  opts.eps_include_star = !cfg.eps_iterates_only;
  result.trace = run_qvi(g, q1_0, q2_0, cfg.iterations, refs, opts);
  result.cycle = detect_cycle(result.trace, cfg.cycle_window);

  result.ctx.bounds_available = refs.has_value();
  if (refs) {
    const double eps_run = cfg.eps_mode == EpsMode::fixed ? cfg.eps_fixed
                                                          : result.trace.eps_global();
    result.ctx.eps_run = eps_run;
    if (cfg.eps_mode == EpsMode::adaptive) {
      result.comparison = run_comparison_adaptive(g, result.trace, *refs);
    } else {
      result.comparison = run_comparison(g, result.trace, *refs, eps_run);
    }
  }
  return result;
}

void write_seed_outputs(const fs::path& dir, const SeedResult& r) {
  const std::string tag = std::to_string(r.seed);
  const TraceExportContext ctx = r.export_context();
  write_file_atomic(dir / ("trace_seed" + tag + ".csv"), trace_to_csv(r.trace, ctx));
  write_file_atomic(dir / ("summary_seed" + tag + ".json"),
                    run_summary_to_json(r.trace, ctx, r.cycle));
}

std::vector<SeedResult> run_all_seeds(const Game& g,
                                      const std::optional<EquilibriumRefs<double>>& refs,
                                      const RunConfig& cfg) {
  std::vector<SeedResult> results(cfg.seeds.size());
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  std::vector<std::thread> workers;
  workers.reserve(cfg.seeds.size());
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    workers.emplace_back([&, i] {
      try {
        results[i] = run_one_seed(g, refs, cfg, cfg.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::optional<EquilibriumRefs<double>> oracle_reference(const Game& g, double budget,
                                                        std::string& note) {
  try {
    auto certs = enumerate_equilibria(g, budget);
    if (certs.empty()) {
      note = "no deterministic Stackelberg equilibrium; bounds skipped";
      return std::nullopt;
    }
    if (certs.size() > 1) {
      note = "multiple equilibria (" + std::to_string(certs.size()) +
             "); using the lexicographically smallest pair";
    }
    return to_refs(certs.front());
  } catch (const EnumerationBudgetError& e) {
    note = std::string("oracle skipped: ") + e.what();
    return std::nullopt;
  }
}

json aggregate_summary(const Game& g, const RunConfig& cfg,
                       const std::vector<SeedResult>& results,
                       const std::string& oracle_note) {
  json j;
  {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(game_hash(g)));
    j["game_hash"] = std::string(buf);
  }
  j["game"] = cfg.game_spec;
  j["iterations"] = cfg.iterations;
  j["oracle_note"] = oracle_note;
  double eps_global_max = 0.0;
  bool all_bounds_hold = true;
  bool bounds_available = !results.empty() && results.front().ctx.bounds_available;
  json seeds = json::array();
  for (const auto& r : results) {
    const double eg = r.trace.eps_global();
    eps_global_max = std::max(eps_global_max, eg);
    json js;
    js["seed"] = r.seed;
    js["eps_global"] = eg;
    js["cycle"] = r.cycle.to_string();
    js["converged_at"] =
        r.trace.converged_at >= 0 ? json(r.trace.converged_at) : json(nullptr);
    if (r.ctx.bounds_available) {
      bool ok = true;
      for (std::size_t k = 0; k < r.trace.records.size(); ++k) {
        const double bound = theorem_bound<double>(k, g.gamma, r.ctx.eps_run);
        const auto& rec = r.trace.records[k];
        if (!(rec.err_leader <= bound) || !(rec.err_follower <= bound)) ok = false;
      }
      js["theorem_holds"] = ok;
      all_bounds_hold = all_bounds_hold && ok;
    }
    seeds.push_back(js);
  }
  j["seeds"] = seeds;
  j["eps_global_max"] = eps_global_max;
  j["bounds_available"] = bounds_available;
  if (bounds_available) j["all_bounds_hold"] = all_bounds_hold;
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_run(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.out_dir = resolve_out_dir(cfg.out_dir, "sqvi-out");

  Game g = resolve_game(cfg.game_spec);
  auto report = validate_game(g);
  if (!report.ok()) {
    std::cerr << "invalid game:\n" << report.to_string();
    return 1;
  }

  std::string oracle_note;
  auto refs = oracle_reference(g, cfg.oracle_budget, oracle_note);
  if (!oracle_note.empty()) std::cerr << oracle_note << "\n";

  fs::create_directories(cfg.out_dir);
  auto results = run_all_seeds(g, refs, cfg);
  for (const auto& r : results) write_seed_outputs(cfg.out_dir, r);
  write_file_atomic(cfg.out_dir / "summary.json",
                    aggregate_summary(g, cfg, results, oracle_note).dump(2) + "\n");

  std::cout << "wrote " << results.size() << " trace(s) to " << cfg.out_dir.string()
            << "\n";
  return 0;
}

int cmd_experiment(RunConfig cfg) {
  cfg.game_spec = kBuiltinGameName;
  cfg.out_dir = resolve_out_dir(cfg.out_dir, "sqvi-experiment");

  Game g = single_state_example_game<double>();
  std::string oracle_note;
  auto refs = oracle_reference(g, cfg.oracle_budget, oracle_note);

  fs::create_directories(cfg.out_dir);
  auto results = run_all_seeds(g, refs, cfg);
  for (const auto& r : results) write_seed_outputs(cfg.out_dir, r);

  const std::size_t n = static_cast<std::size_t>(cfg.iterations) + 1;
  const std::size_t num_seeds = results.size();

  std::vector<double> eps_max(n, 0.0), eps_mean(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (const auto& r : results) {
      const double e = r.trace.records[k].eps.eps_k;
      eps_max[k] = std::max(eps_max[k], e);
      eps_mean[k] += e / static_cast<double>(num_seeds);
    }
  }
  double eps_global = 0.0;
  for (double e : eps_max) eps_global = std::max(eps_global, e);

  // Dataset 1: per-iteration max/mean eps across seeds plus the global line.
  std::string fig1 = "k,eps_max,eps_mean,eps_global\n";
  for (std::size_t k = 0; k < n; ++k) {
    fig1 += std::to_string(k) + "," + format_real(eps_max[k]) + "," +
            format_real(eps_mean[k]) + "," + format_real(eps_global) + "\n";
  }
  write_file_atomic(cfg.out_dir / "fig1_epsilon.csv", fig1);

  // Datasets 2 and 3: per-seed error curves plus global and adaptive bounds.
  auto error_csv = [&](bool leader) {
    std::string header = "k";
    for (const auto& r : results) header += ",err_seed" + std::to_string(r.seed);
    header += ",err_max,err_mean,bound_global,bound_adaptive\n";
    std::string body;
    for (std::size_t k = 0; k < n; ++k) {
      body += std::to_string(k);
      double emax = 0.0, emean = 0.0;
      for (const auto& r : results) {
        const auto& rec = r.trace.records[k];
        const double e = leader ? rec.err_leader : rec.err_follower;
        body += "," + format_real(e);
        emax = std::max(emax, e);
        emean += e / static_cast<double>(num_seeds);
      }
      body += "," + format_real(emax) + "," + format_real(emean);
      body += "," + format_real(theorem_bound<double>(k, g.gamma, eps_global));
      body += "," + format_real(theorem_bound<double>(k, g.gamma, eps_max[k]));
      body += "\n";
    }
    return header + body;
  };
  write_file_atomic(cfg.out_dir / "fig2_leader_error.csv", error_csv(true));
  write_file_atomic(cfg.out_dir / "fig3_follower_error.csv", error_csv(false));

  // Qualitative checks reported alongside the datasets.
  std::size_t burnin = 0;
  for (std::size_t k = n; k-- > 1;) {
    if (eps_max[k] > eps_max[k - 1] + 1e-12) {
      burnin = k;
      break;
    }
  }
  bool errors_below = refs.has_value();
  if (refs) {
    for (const auto& r : results) {
      for (std::size_t k = 0; k < n; ++k) {
        const double bound = theorem_bound<double>(k, g.gamma, eps_global);
        const auto& rec = r.trace.records[k];
        if (!(rec.err_leader <= bound) || !(rec.err_follower <= bound)) {
          errors_below = false;
        }
      }
    }
  }
  const double asymptote = 3.0 * eps_global / (1.0 - g.gamma);

  json js;
  js["seeds"] = cfg.seeds;
  js["iterations"] = cfg.iterations;
  js["eps_global"] = eps_global;
  js["late_eps"] = eps_max[n - 1];
  js["bound_asymptote"] = asymptote;
  js["eps_nonincreasing_after_burnin"] = burnin <= std::max<std::size_t>(1, n / 4);
  js["burnin_iteration"] = burnin;
  js["errors_below_bounds"] = errors_below;
  js["bounds_nonvanishing"] = asymptote > 0.0;
  js["oracle_note"] = oracle_note;
  write_file_atomic(cfg.out_dir / "experiment_summary.json", js.dump(2) + "\n");

  std::cout << "experiment data written to " << cfg.out_dir.string() << "\n";
  return 0;
}

int cmd_oracle(const std::string& game_spec, double budget, const fs::path& out_file) {
  Game g = resolve_game(game_spec);
  auto report = validate_game(g);
  if (!report.ok()) {
    std::cerr << "invalid game:\n" << report.to_string();
    return 1;
  }
  std::vector<EquilibriumCertificate<double>> certs;
  try {
    certs = enumerate_equilibria(g, budget);
  } catch (const EnumerationBudgetError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  if (certs.empty()) {
    std::cout << "no deterministic Stackelberg equilibrium found\n";
    return 1;
  }
  const auto& selected = certs.front();
  std::cout << "equilibria found: " << certs.size() << "\n";
  std::cout << "selected pair (0-based): leader=" << to_digits(selected.pair.leader)
            << " follower=" << to_digits(selected.pair.follower) << "\n";
  std::cout << "residuals: follower=" << format_real(selected.follower_residual)
            << " leader=" << format_real(selected.leader_residual)
            << " evaluation=" << format_real(selected.evaluation_residual) << "\n";

  std::vector<PolicyPair> pairs;
  pairs.reserve(certs.size());
  for (const auto& c : certs) pairs.push_back(c.pair);
  const std::string doc = certificate_to_json(selected, certs.size(), pairs);
  if (!out_file.empty()) {
    write_file_atomic(out_file, doc);
    std::cout << "certificate written to " << out_file.string() << "\n";
  } else {
    std::cout << doc;
  }
  return 0;
}

int cmd_gen(long long seed, const std::string& dims_str, double gamma,
            const fs::path& out_file) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw CLI::ValidationError("--gamma", "must lie in [0,1)");
  }
  const GameDims dims = parse_dims(dims_str);
  Game g = random_game<double>(static_cast<std::uint64_t>(seed), dims, gamma);
  save_game_file(g, out_file);
  std::cout << "wrote " << out_file.string() << "\n";
  return 0;
}

int cmd_check(const std::string& game_spec) {
  Game g = resolve_game(game_spec);
  auto report = validate_game(g);
  if (report.ok()) {
    std::cout << "valid\n";
    return 0;
  }
  std::cout << report.to_string();
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stackelberg Q-value iteration for two-player general-sum Markov games"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string seeds_str, init_str, eps_str;

  auto add_run_options = [&](CLI::App* cmd, bool with_game) {
    if (with_game) {
      cmd->add_option("--game", cfg.game_spec,
                      std::string("game file path or builtin '") + kBuiltinGameName + "'");
    }
    cmd->add_option("--iters", cfg.iterations, "number of iterations (K)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--seeds", seeds_str, "seed list: 0..4 or 0,3,7");
    cmd->add_option("--init", init_str, "uniform | zero | file:PATH");
    cmd->add_option("--eps", eps_str, "adaptive | global | fixed:VALUE");
    cmd->add_flag("--eps-iterates-only", cfg.eps_iterates_only,
                  "exclude the equilibrium slacks from eps_k");
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_option("--oracle-budget", cfg.oracle_budget,
                    "max candidate pairs for the equilibrium search");
    cmd->add_option("--cycle-window", cfg.cycle_window, "cycle detection window");
  };

  auto* run_cmd = app.add_subcommand("run", "run Q-value iteration, export traces");
  add_run_options(run_cmd, true);

  auto* exp_cmd = app.add_subcommand(
      "experiment", "builtin single-state experiment: traces and figure datasets");
  add_run_options(exp_cmd, false);

  std::string oracle_game = kBuiltinGameName;
  double oracle_limit = 1e6;
  fs::path oracle_out;
  auto* oracle_cmd =
      app.add_subcommand("oracle", "enumerate and certify Stackelberg equilibria");
  oracle_cmd->add_option("--game", oracle_game, "game file path or builtin");
  oracle_cmd->add_option("--limit", oracle_limit, "candidate pair budget");
  oracle_cmd->add_option("--out", oracle_out, "write the certificate JSON here");

  long long gen_seed = 0;
  std::string gen_dims = "3,2,2";
  double gen_gamma = 0.9;
  fs::path gen_out = "game.json";
  auto* gen_cmd = app.add_subcommand("gen", "generate a random valid game file");
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--dims", gen_dims, "S,A,B");
  gen_cmd->add_option("--gamma", gen_gamma, "discount factor in [0,1)")
      ->check(CLI::Range(0.0, 1.0).description("FLOAT in [0 - 1)"));
  gen_cmd->add_option("--out", gen_out, "output game file");

  std::string check_game;
  auto* check_cmd = app.add_subcommand("check", "validate a game file");
  check_cmd->add_option("--game", check_game, "game file path or builtin")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (!seeds_str.empty()) cfg.seeds = parse_seeds(seeds_str);
    if (!init_str.empty()) cfg.init_mode = parse_init_mode(init_str, cfg.init_file);
    if (!eps_str.empty()) cfg.eps_mode = parse_eps_mode(eps_str, cfg.eps_fixed);

    if (run_cmd->parsed()) return cmd_run(cfg);
    if (exp_cmd->parsed()) return cmd_experiment(cfg);
    if (oracle_cmd->parsed()) return cmd_oracle(oracle_game, oracle_limit, oracle_out);
    if (gen_cmd->parsed()) return cmd_gen(gen_seed, gen_dims, gen_gamma, gen_out);
    if (check_cmd->parsed()) return cmd_check(check_game);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
