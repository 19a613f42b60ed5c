// End-to-end acceptance suite. Runs every shipping criterion at its stated
// tolerance and prints one [PASS]/[FAIL] line per criterion. The CLI binary
// path is expected as argv[1] for the command-line criteria.

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>
#include <vector>

#include "sqvi/comparison.hpp"
#include "sqvi/game_io.hpp"
#include "sqvi/linear_ops.hpp"
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

int g_failures = 0;

class Criterion {
 public:
  Criterion(int id, std::string name)
      : id_(id), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}

  void require(bool ok, const std::string& detail) {
    if (!ok && failures_ < 5) details_.push_back(detail);
    if (!ok) ++failures_;
  }

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
        .count();
  }

  void finish(std::optional<double> time_limit = std::nullopt) {
    const double secs = seconds();
    if (time_limit && secs > *time_limit) {
      require(false, "runtime " + std::to_string(secs) + " s exceeds " +
                         std::to_string(*time_limit) + " s");
    }
    const bool ok = failures_ == 0;
    if (!ok) ++g_failures;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", secs);
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << id_ << ": " << name_
              << " (" << buf << " s)\n";
    for (const auto& d : details_) std::cout << "       " << d << "\n";
    if (failures_ > static_cast<int>(details_.size())) {
      std::cout << "       ... " << failures_ << " failing checks total\n";
    }
  }

 private:
  int id_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> details_;
  int failures_ = 0;
};

Tensor uniform_tensor(const Game& g, Player who, SplitMixStream& stream) {
  Tensor q = Tensor::zero(g, who);
  for (int s = 0; s < g.num_states; ++s) {
    for (int a = 0; a < g.num_leader_actions; ++a) {
      for (int b = 0; b < g.num_follower_actions; ++b) {
        q(s, a, b) = stream.next_symmetric();
      }
    }
  }
  return q;
}

std::pair<Tensor, Tensor> seed_init(const Game& g, long long seed) {
  SplitMixStream stream(static_cast<std::uint64_t>(seed));
  Tensor q1 = uniform_tensor(g, Player::leader, stream);
  Tensor q2 = uniform_tensor(g, Player::follower, stream);
  return {std::move(q1), std::move(q2)};
}

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CorpusInstance {
  Game game;
  Tensor q1_0, q2_0;
  IterationTrace<double> trace;  // no-reference run, 100 iterations
};

struct CertifiedInstance {
  std::size_t corpus_index;
  EquilibriumRefs<double> refs;
  IterationTrace<double> trace;  // reference-aware rerun of the same seed data
  ComparisonTrace<double> comparison;
  double eps_global = 0.0;
};

constexpr int kCorpusSize = 200;
constexpr int kCorpusIters = 100;

std::vector<CorpusInstance> build_corpus() {
  std::vector<CorpusInstance> corpus;
  corpus.reserve(kCorpusSize);
  SplitMixStream dims_stream(2024);
  const double gammas[3] = {0.5, 0.8, 0.95};
  for (int i = 0; i < kCorpusSize; ++i) {
    GameDims dims;
    dims.num_states = 1 + static_cast<int>(dims_stream.next_u64() % 5);
    dims.num_leader_actions = 1 + static_cast<int>(dims_stream.next_u64() % 4);
    dims.num_follower_actions = 1 + static_cast<int>(dims_stream.next_u64() % 4);
    const double gamma = gammas[i % 3];
    CorpusInstance inst{random_game<double>(10000 + i, dims, gamma), {}, {}, {}};
    auto [q1, q2] = seed_init(inst.game, 20000 + i);
    inst.q1_0 = std::move(q1);
    inst.q2_0 = std::move(q2);
    corpus.push_back(std::move(inst));
  }
  return corpus;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  ::unsetenv("SQVI_OUT_DIR");
  const fs::path work =
      fs::temp_directory_path() / ("sqvi_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  const Game sec5 = single_state_example_game<double>();

  // -- criterion 1: bundled-game equilibrium reproduction --------------------
  EquilibriumRefs<double> sec5_refs;
  {
    Criterion c(1, "bundled single-state game: unique certified equilibrium");
    auto certs = enumerate_equilibria(sec5);
    c.require(certs.size() == 1,
              "expected exactly one certificate, got " + std::to_string(certs.size()));
    if (!certs.empty()) {
      const auto& cert = certs.front();
      c.require(cert.pair.leader(0) == 1, "leader action is not 2 (1-based)");
      c.require(cert.pair.follower(0, 0) == 1 && cert.pair.follower(0, 1) == 0,
                "follower map is not (2,1) (1-based)");
      c.require(cert.follower_residual <= 1e-8 && cert.leader_residual <= 1e-8 &&
                    cert.evaluation_residual <= 1e-8,
                "residuals exceed 1e-8");
      c.require(std::abs(cert.q1_star(0, 1, 0) - 2.5) <= 1e-10,
                "Q1*(s,2,1) != 2.5 within 1e-10");
      c.require(std::abs(cert.q2_star(0, 1, 0) - 4.0) <= 1e-10,
                "Q2*(s,2,1) != 4.0 within 1e-10");
      sec5_refs = to_refs(cert);
    }
    if (!cli.empty()) {
      const fs::path cert_file = work / "cert.json";
      const int rc = run_command("'" + cli + "' oracle --game paper-sec5 --out '" +
                                 cert_file.string() + "' > '" +
                                 (work / "oracle.log").string() + "' 2>&1");
      c.require(rc == 0, "CLI oracle exit code " + std::to_string(rc));
      if (rc == 0) {
        json j = json::parse(slurp(cert_file));
        c.require(j.at("multiplicity").get<int>() == 1, "CLI multiplicity != 1");
        c.require(j.at("pair").at("leader").at(0).get<int>() == 1,
                  "CLI leader pair mismatch");
        c.require(std::abs(j.at("q1_star").at(2).get<double>() - 2.5) <= 1e-10,
                  "CLI Q1* mismatch");
      }
    } else {
      c.require(false, "CLI path missing (pass it as argv[1])");
    }
    c.finish(1.0);
  }

  // -- criterion 2: finite-time bound dominance on the bundled game ----------
  std::vector<IterationTrace<double>> sec5_traces;
  {
    Criterion c(2, "theorem bound dominates both players' errors, 5 seeds, K=60");
    for (long long seed = 0; seed < 5; ++seed) {
      auto [q1, q2] = seed_init(sec5, seed);
      RunOptions<double> opts;
      opts.seed = seed;
      auto trace = run_qvi(sec5, q1, q2, 60, sec5_refs, opts);
      const double eps_global = trace.eps_global();
      for (std::size_t k = 0; k < trace.records.size(); ++k) {
        const double bound = theorem_bound<double>(k, sec5.gamma, eps_global);
        const auto& rec = trace.records[k];
        c.require(rec.err_leader <= bound,
                  "seed " + std::to_string(seed) + " leader error above bound at k=" +
                      std::to_string(k));
        c.require(rec.err_follower <= bound,
                  "seed " + std::to_string(seed) +
                      " follower error above bound at k=" + std::to_string(k));
      }
      sec5_traces.push_back(std::move(trace));
    }
    c.finish(5.0);
  }

  // -- criterion 3: iterate boundedness on the random corpus -----------------
  auto corpus = build_corpus();
  {
    Criterion c(3, "Lemma-style boundedness on 200 random games, 100 steps");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      auto& inst = corpus[i];
      RunOptions<double> opts;
      opts.seed = 20000 + static_cast<long long>(i);
      opts.enforce_unit_init = true;
      inst.trace = run_qvi(inst.game, inst.q1_0, inst.q2_0, kCorpusIters,
                           std::nullopt, opts);
      const double cap = 1.0 / (1.0 - inst.game.gamma) + 1e-9;
      for (const auto& rec : inst.trace.records) {
        c.require(rec.norm_q1 <= cap && rec.norm_q2 <= cap,
                  "norm bound violated on corpus game " + std::to_string(i));
      }
    }
    c.finish(30.0);
  }

  // -- criterion 4: sandwich property where an equilibrium is certified ------
  std::vector<CertifiedInstance> certified;
  {
    Criterion c(4, "comparison systems sandwich the iterates (eps = eps_global)");
    // Enumeration is independent per game; fan the corpus out over a few
    // workers and keep the results in corpus order.
    std::vector<std::optional<CertifiedInstance>> slots(corpus.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < corpus.size();
           i = next.fetch_add(1)) {
        const auto& inst = corpus[i];
        if (enumeration_budget_required(inst.game) > 1e6) continue;
        auto certs = enumerate_equilibria(inst.game);
        if (certs.empty()) continue;
        CertifiedInstance ci;
        ci.corpus_index = i;
        ci.refs = to_refs(certs.front());
        RunOptions<double> opts;
        opts.seed = 20000 + static_cast<long long>(i);
        ci.trace = run_qvi(inst.game, inst.q1_0, inst.q2_0, kCorpusIters, ci.refs, opts);
        ci.eps_global = ci.trace.eps_global();
        ci.comparison = run_comparison(inst.game, ci.trace, ci.refs, ci.eps_global);
        slots[i] = std::move(ci);
      }
    };
    const unsigned n_workers = std::max(2u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i]) continue;
      CertifiedInstance& ci = *slots[i];
      c.require(ci.comparison.max_violation_upper() <= 1e-9,
                "upper sandwich violated on corpus game " + std::to_string(i));
      c.require(ci.comparison.max_violation_lower() <= 1e-9,
                "lower sandwich violated on corpus game " + std::to_string(i));
      certified.push_back(std::move(ci));
    }
    c.require(!certified.empty(), "no corpus game produced a certified equilibrium");
    std::cout << "       (criterion 4 covers " << certified.size()
              << " certified corpus games)\n";
    c.finish();
  }

  // -- criterion 5: scalar/matrix step equivalence ----------------------------
  {
    Criterion c(5, "matrix form reproduces the scalar step below 1e-12");
    SplitMixStream dims_stream(777);
    for (int i = 0; i < 100; ++i) {
      GameDims dims;
      dims.num_states = 1 + static_cast<int>(dims_stream.next_u64() % 5);
      dims.num_leader_actions = 1 + static_cast<int>(dims_stream.next_u64() % 4);
      dims.num_follower_actions = 1 + static_cast<int>(dims_stream.next_u64() % 4);
      auto g = random_game<double>(30000 + i, dims, i % 2 ? 0.9 : 0.6);
      auto [q1, q2] = seed_init(g, 40000 + i);
      const double residual = vector_qvi_residual(g, q1, q2);
      c.require(residual < 1e-12,
                "residual " + format_real(residual) + " on instance " + std::to_string(i));
    }
    c.finish();
  }

  // -- criterion 6: epsilon range and exhaustive deviation sufficiency -------
  {
    Criterion c(6, "eps_k within [0, 2/(1-gamma)] and sufficient for all deviations");
    auto check_range = [&](const IterationTrace<double>& trace, double gamma,
                           const std::string& tag) {
      const double cap = epsilon_existence_bound(gamma) + 1e-9;
      for (const auto& rec : trace.records) {
        c.require(rec.eps.eps_k >= 0.0, "negative eps_k in " + tag);
        c.require(rec.eps.eps_k <= cap, "eps_k above existence bound in " + tag);
      }
    };
    for (std::size_t s = 0; s < sec5_traces.size(); ++s) {
      check_range(sec5_traces[s], sec5.gamma, "sec5 seed " + std::to_string(s));
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      check_range(corpus[i].trace, corpus[i].game.gamma,
                  "corpus game " + std::to_string(i));
    }

    // Exhaustive deviation check: every flat map mu1: S->A and mu2: S->B.
    auto sufficiency = [&](const Game& g, const TraceRecord<double>& rec,
                           const EquilibriumRefs<double>& refs, const std::string& tag) {
      const double eps = rec.eps.eps_k + 1e-12;
      auto all_maps = [](int slots, int base, auto&& f) {
        std::vector<int> m(static_cast<std::size_t>(slots), 0);
        while (true) {
          f(m);
          int i = slots - 1;
          while (i >= 0 && m[std::size_t(i)] + 1 == base) m[std::size_t(i--)] = 0;
          if (i < 0) return;
          m[std::size_t(i)] += 1;
        }
      };
      bool ok = true;
      auto check_ineqs = [&](const Tensor& q1, const Tensor& q2, const PolicyPair& pair) {
        all_maps(g.num_states, g.num_follower_actions, [&](const std::vector<int>& mu2) {
          for (int s = 0; s < g.num_states; ++s) {
            const int a = pair.leader(s);
            if (q1(s, a, pair.follower(s, a)) > q1(s, a, mu2[std::size_t(s)]) + eps) {
              ok = false;
            }
          }
        });
        all_maps(g.num_states, g.num_leader_actions, [&](const std::vector<int>& mu1) {
          for (int s = 0; s < g.num_states; ++s) {
            const int a = pair.leader(s);
            const int bbar = pair.follower(s, a);
            if (q2(s, a, bbar) > q2(s, mu1[std::size_t(s)], bbar) + eps) ok = false;
          }
        });
      };
      check_ineqs(rec.q1, rec.q2, rec.pair);
      check_ineqs(refs.q1_star, refs.q2_star, refs.pair);
      c.require(ok, "a deviation beats eps_k at " + tag);
    };

    for (std::size_t s = 0; s < sec5_traces.size(); ++s) {
      for (std::size_t k = 0; k < sec5_traces[s].records.size(); ++k) {
        sufficiency(sec5, sec5_traces[s].records[k], sec5_refs,
                    "sec5 seed " + std::to_string(s) + " k=" + std::to_string(k));
      }
    }
    const std::size_t sample_ks[4] = {0, 1, 50, 100};
    for (const auto& ci : certified) {
      const Game& g = corpus[ci.corpus_index].game;
      const double policies = std::pow(double(g.num_leader_actions), g.num_states) +
                              std::pow(double(g.num_follower_actions), g.num_states);
      if (policies > 1e4) continue;
      for (std::size_t k : sample_ks) {
        sufficiency(g, ci.trace.records[k], ci.refs,
                    "corpus game " + std::to_string(ci.corpus_index) +
                        " k=" + std::to_string(k));
      }
    }
    c.finish();
  }

  // -- criterion 7: per-system envelope ---------------------------------------
  {
    Criterion c(7, "per-system bound holds for upper and lower trajectories");
    for (const auto& ci : certified) {
      const double gamma = corpus[ci.corpus_index].game.gamma;
      for (std::size_t k = 0; k < ci.comparison.records.size(); ++k) {
        const double cap = upper_bound_norm<double>(k, gamma, ci.eps_global) + 1e-9;
        c.require(ci.comparison.records[k].err_upper <= cap,
                  "upper trajectory outside the envelope, corpus game " +
                      std::to_string(ci.corpus_index) + " k=" + std::to_string(k));
        c.require(ci.comparison.records[k].err_lower <= cap,
                  "lower trajectory outside the envelope, corpus game " +
                      std::to_string(ci.corpus_index) + " k=" + std::to_string(k));
      }
    }
    c.finish();
  }

  // -- criterion 8: fixed-point stationarity ----------------------------------
  {
    Criterion c(8, "runs started at certified tensors stay within 1e-10 for 20 steps");
    auto stationary = [&](const Game& g, const EquilibriumRefs<double>& refs,
                          const std::string& tag) {
      auto trace = run_qvi(g, refs.q1_star, refs.q2_star, 20, refs);
      for (const auto& rec : trace.records) {
        c.require(rec.err_leader <= 1e-10 && rec.err_follower <= 1e-10,
                  "drift above 1e-10 for " + tag);
      }
    };
    stationary(sec5, sec5_refs, "the bundled game");
    for (const auto& ci : certified) {
      stationary(corpus[ci.corpus_index].game, ci.refs,
                 "corpus game " + std::to_string(ci.corpus_index));
    }
    c.finish();
  }

  // -- criterion 9: non-vanishing residual ------------------------------------
  {
    Criterion c(9, "late eps_k converges to 0.5 and the bound asymptote to 7.5");
    for (std::size_t s = 0; s < sec5_traces.size(); ++s) {
      const double late = sec5_traces[s].records.back().eps.eps_k;
      c.require(std::abs(late - 0.5) <= 1e-6,
                "seed " + std::to_string(s) + ": late eps_k = " + format_real(late));
      const double asymptote = 3.0 * late / (1.0 - sec5.gamma);
      c.require(std::abs(asymptote - 7.5) <= 1e-6,
                "seed " + std::to_string(s) + ": asymptote = " + format_real(asymptote));
    }
    c.finish();
  }

  // -- criterion 10: byte-identical reruns through the CLI --------------------
  {
    Criterion c(10, "identical command lines give byte-identical CSVs");
    if (cli.empty()) {
      c.require(false, "CLI path missing (pass it as argv[1])");
    } else {
      const fs::path dir_a = work / "rerun_a";
      const fs::path dir_b = work / "rerun_b";
      for (const fs::path& dir : {dir_a, dir_b}) {
        const int rc = run_command(
            "'" + cli + "' run --game paper-sec5 --iters 60 --seeds 0..4 --out '" +
            dir.string() + "' > /dev/null 2>&1");
        c.require(rc == 0, "CLI run exit code " + std::to_string(rc));
      }
      for (long long seed = 0; seed < 5; ++seed) {
        const std::string name = "trace_seed" + std::to_string(seed) + ".csv";
        const std::string a = slurp(dir_a / name);
        const std::string b = slurp(dir_b / name);
        c.require(!a.empty(), name + " missing or empty");
        c.require(a == b, name + " differs between reruns");
      }
      c.require(slurp(dir_a / "summary.json") == slurp(dir_b / "summary.json"),
                "summary.json differs between reruns");
    }
    c.finish();
  }

  fs::remove_all(work);
  if (g_failures == 0) {
    std::cout << "all acceptance criteria passed\n";
    return 0;
  }
  std::cout << g_failures << " criterion(s) failed\n";
  return 1;
}
