#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <sstream>
#include <vector>

#include "sqvi/game_io.hpp"
#include "sqvi/oracle.hpp"
#include "sqvi/splitmix.hpp"
#include "sqvi/trace_io.hpp"

using namespace sqvi;
using json = nlohmann::json;

namespace {

using Game = MarkovGame<double>;
using Tensor = QTensor<double>;

Tensor random_tensor(const Game& g, Player who, std::uint64_t seed) {
  SplitMixStream stream(seed);
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

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

struct Artifacts {
  IterationTrace<double> trace;
  ComparisonTrace<double> comparison;
  TraceExportContext ctx;
};

Artifacts example_artifacts(int iters = 20) {
  auto g = single_state_example_game<double>();
  auto certs = enumerate_equilibria(g);
  auto refs = to_refs(certs.front());
  Artifacts art;
  RunOptions<double> opts;
  opts.seed = 3;
  art.trace = run_qvi(g, random_tensor(g, Player::leader, 3),
                      random_tensor(g, Player::follower, 1003), iters, refs, opts);
  art.comparison = run_comparison(g, art.trace, refs, art.trace.eps_global());
  art.ctx.bounds_available = true;
  art.ctx.eps_run = art.trace.eps_global();
  art.ctx.comparison = &art.comparison;
  return art;
}

}  // namespace

TEST_CASE("the CSV header names every column in order") {
  auto art = example_artifacts(2);
  const std::string csv = trace_to_csv(art.trace, art.ctx);
  const std::string header = csv.substr(0, csv.find('\n'));
  CHECK(header ==
        "k,err_leader,err_follower,eps_k,bound_eps_k,bound_eps_global,"
        "norm_q1,norm_q2,leader_policy,follower_policy,"
        "bound_theorem_global,bound_theorem_adaptive,"
        "sandwich_violation_upper,sandwich_violation_lower");
}

TEST_CASE("the CSV has one row per iteration with parseable fields") {
  auto art = example_artifacts(12);
  const std::string csv = trace_to_csv(art.trace, art.ctx);
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);  // header
  int k = 0;
  while (std::getline(ss, line)) {
    auto fields = split_csv_line(line);
    REQUIRE(fields.size() == 14);
    CHECK(std::stoi(fields[0]) == k);
    const double err = std::stod(fields[1]);
    const double bound_global = std::stod(fields[5]);
    CHECK(err <= bound_global);  // example game satisfies the bound everywhere
    CHECK(std::stod(fields[3]) >= 0.0);
    ++k;
  }
  CHECK(k == 13);
}

TEST_CASE("policy columns lock onto the equilibrium digits") {
  auto art = example_artifacts(30);
  const std::string csv = trace_to_csv(art.trace, art.ctx);
  const auto last = csv.find_last_of('\n', csv.size() - 2);
  auto fields = split_csv_line(csv.substr(last + 1));
  CHECK(fields[8] == "1");    // leader plays 2 in 1-based labels
  CHECK(fields[9] == "10");   // follower map (b(s,1), b(s,2)) = (2, 1)
}

TEST_CASE("missing references render as nan errors") {
  auto g = single_state_example_game<double>();
  IterationTrace<double> trace = run_qvi(g, Tensor::zero(g, Player::leader),
                                         Tensor::zero(g, Player::follower), 3);
  TraceExportContext ctx;  // no bounds, no comparison
  const std::string csv = trace_to_csv(trace, ctx);
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  std::getline(ss, line);
  auto fields = split_csv_line(line);
  CHECK(fields[1] == "nan");
  CHECK(fields[10] == "nan");
  CHECK(fields[12] == "nan");
}

TEST_CASE("identical runs serialize identically") {
  auto a = example_artifacts(25);
  auto b = example_artifacts(25);
  CHECK(trace_to_csv(a.trace, a.ctx) == trace_to_csv(b.trace, b.ctx));
}

TEST_CASE("CSV reals carry full precision") {
  auto art = example_artifacts(6);
  const std::string csv = trace_to_csv(art.trace, art.ctx);
  std::stringstream ss(csv);
  std::string line;
  std::getline(ss, line);
  std::getline(ss, line);
  auto fields = split_csv_line(line);
  // Round-tripping the printed value must reproduce the stored double.
  CHECK(std::stod(fields[6]) == art.trace.records[0].norm_q1);
  CHECK(std::stod(fields[3]) == art.trace.records[0].eps.eps_k);
}

TEST_CASE("the run summary carries flags, cycle and eps_global") {
  auto art = example_artifacts(40);
  auto cycle = detect_cycle(art.trace, 8);
  json j = json::parse(run_summary_to_json(art.trace, art.ctx, cycle));
  CHECK(j.at("seed").get<long long>() == 3);
  CHECK(j.at("iterations").get<int>() == 40);
  CHECK(j.at("eps_global").get<double>() == art.trace.eps_global());
  CHECK(j.at("cycle").at("kind").get<std::string>() == "none");
  CHECK(j.at("bounds").at("available").get<bool>());
  CHECK(j.at("bounds").at("theorem_holds_leader").get<bool>());
  CHECK(j.at("bounds").at("theorem_holds_follower").get<bool>());
  CHECK(j.at("bounds").at("per_system_holds").get<bool>());
  CHECK(j.at("bounds").at("max_sandwich_violation_upper").get<double>() <= 1e-12);
  CHECK(j.at("final_err_leader").get<double>() <= 1e-3);
}

TEST_CASE("certificates serialize with pair, tensors and residuals") {
  auto g = single_state_example_game<double>();
  auto certs = enumerate_equilibria(g);
  REQUIRE(certs.size() == 1);
  std::vector<PolicyPair> pairs{certs[0].pair};
  json j = json::parse(certificate_to_json(certs[0], certs.size(), pairs));
  CHECK(j.at("multiplicity").get<int>() == 1);
  CHECK(j.at("pair").at("leader").get<std::vector<int>>() == std::vector<int>{1});
  CHECK(j.at("pair").at("follower").at(0).get<std::vector<int>>() ==
        std::vector<int>({1, 0}));
  // Stacked position 3 of 4 holds Q(s, 2, 1) in 1-based labels.
  CHECK(j.at("q1_star").at(2).get<double>() == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(j.at("q2_star").at(2).get<double>() == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(j.at("residuals").at("evaluation").get<double>() <= 1e-10);
  CHECK(j.at("all_pairs").size() == 1);
}
