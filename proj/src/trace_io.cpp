#include "sqvi/trace_io.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>

#include "sqvi/game_io.hpp"
#include "sqvi/linear_ops.hpp"

namespace sqvi {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double x) {
  return std::isfinite(x) ? json(x) : json(nullptr);
}

json pair_to_json(const PolicyPair& pair) {
  json leader = json::array();
  for (Eigen::Index s = 0; s < pair.leader.action_for_state.size(); ++s) {
    leader.push_back(pair.leader.action_for_state(s));
  }
  json follower = json::array();
  const auto& f = pair.follower.action_for_state_and_leader_action;
  for (Eigen::Index s = 0; s < f.rows(); ++s) {
    json row = json::array();
    for (Eigen::Index a = 0; a < f.cols(); ++a) row.push_back(f(s, a));
    follower.push_back(row);
  }
  return json{{"leader", leader}, {"follower", follower}};
}

}  // namespace

std::string trace_to_csv(const IterationTrace<double>& trace,
                         const TraceExportContext& ctx) {
  const double gamma = trace.gamma;
  const double eps_global = trace.eps_global();

  std::string out =
      "k,err_leader,err_follower,eps_k,bound_eps_k,bound_eps_global,"
      "norm_q1,norm_q2,leader_policy,follower_policy,"
      "bound_theorem_global,bound_theorem_adaptive,"
      "sandwich_violation_upper,sandwich_violation_lower\n";

  for (std::size_t k = 0; k < trace.records.size(); ++k) {
    const auto& rec = trace.records[k];
    const double bound_adaptive = theorem_bound<double>(k, gamma, rec.eps.eps_k);
    const double bound_global = theorem_bound<double>(k, gamma, eps_global);
    const double bound_run =
        ctx.bounds_available ? theorem_bound<double>(k, gamma, ctx.eps_run) : kNaN;
    double viol_upper = kNaN, viol_lower = kNaN;
    if (ctx.comparison != nullptr && k < ctx.comparison->records.size()) {
      viol_upper = ctx.comparison->records[k].violation_upper;
      viol_lower = ctx.comparison->records[k].violation_lower;
    }

    out += std::to_string(k);
    out += ',';
    out += format_real(rec.err_leader);
    out += ',';
    out += format_real(rec.err_follower);
    out += ',';
    out += format_real(rec.eps.eps_k);
    out += ',';
    out += format_real(bound_adaptive);
    out += ',';
    out += format_real(bound_global);
    out += ',';
    out += format_real(rec.norm_q1);
    out += ',';
    out += format_real(rec.norm_q2);
    out += ',';
    out += to_digits(rec.pair.leader);
    out += ',';
    out += to_digits(rec.pair.follower);
    out += ',';
    out += format_real(bound_run);
    out += ',';
    out += format_real(bound_adaptive);
    out += ',';
    out += format_real(viol_upper);
    out += ',';
    out += format_real(viol_lower);
    out += '\n';
  }
  return out;
}

std::string run_summary_to_json(const IterationTrace<double>& trace,
                                const TraceExportContext& ctx,
                                const CycleReport& cycle) {
  const double eps_global = trace.eps_global();
  const auto& last = trace.records.back();

  json j;
  {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(trace.game_hash));
    j["game_hash"] = std::string(buf);
  }
  j["seed"] = trace.seed;
  j["iterations"] = trace.iterations;
  j["gamma"] = trace.gamma;
  j["has_reference"] = trace.has_refs;
  j["eps_includes_star"] = trace.eps_includes_star;
  j["eps_global"] = eps_global;
  j["final_err_leader"] = number_or_null(last.err_leader);
  j["final_err_follower"] = number_or_null(last.err_follower);
  j["final_slacks"] = {{"leader_k", last.eps.slack_leader_k},
                       {"follower_k", last.eps.slack_follower_k},
                       {"leader_star", number_or_null(last.eps.slack_leader_star)},
                       {"follower_star", number_or_null(last.eps.slack_follower_star)}};
  j["converged_at"] =
      trace.converged_at >= 0 ? json(trace.converged_at) : json(nullptr);

  json jc;
  switch (cycle.kind) {
    case CycleReport::Kind::none: jc["kind"] = "none"; break;
    case CycleReport::Kind::cycle:
      jc["kind"] = "cycle";
      jc["period"] = cycle.period;
      break;
    case CycleReport::Kind::aperiodic: jc["kind"] = "aperiodic"; break;
  }
  j["cycle"] = jc;

  json jb;
  jb["available"] = ctx.bounds_available;
  if (ctx.bounds_available) {
    jb["eps_run"] = ctx.eps_run;
    bool leader_ok = true, follower_ok = true;
    for (std::size_t k = 0; k < trace.records.size(); ++k) {
      const double bound = theorem_bound<double>(k, trace.gamma, ctx.eps_run);
      const auto& rec = trace.records[k];
      if (!(rec.err_leader <= bound)) leader_ok = false;
      if (!(rec.err_follower <= bound)) follower_ok = false;
    }
    jb["theorem_holds_leader"] = leader_ok;
    jb["theorem_holds_follower"] = follower_ok;
    if (ctx.comparison != nullptr) {
      jb["max_sandwich_violation_upper"] = ctx.comparison->max_violation_upper();
      jb["max_sandwich_violation_lower"] = ctx.comparison->max_violation_lower();
      bool per_system_ok = true;
      for (std::size_t k = 0; k < ctx.comparison->records.size(); ++k) {
        const double bound = upper_bound_norm<double>(k, trace.gamma, ctx.eps_run);
        if (!(ctx.comparison->records[k].err_upper <= bound) ||
            !(ctx.comparison->records[k].err_lower <= bound)) {
          per_system_ok = false;
        }
      }
      jb["per_system_holds"] = per_system_ok;
    }
  }
  j["bounds"] = jb;
  return j.dump(2) + "\n";
}

std::string certificate_to_json(const EquilibriumCertificate<double>& cert,
                                std::size_t multiplicity,
                                const std::vector<PolicyPair>& all_pairs) {
  json j;
  j["multiplicity"] = multiplicity;
  j["pair"] = pair_to_json(cert.pair);
  j["dims"] = {{"num_states", cert.q1_star.num_states()},
               {"num_leader_actions", cert.q1_star.num_leader_actions},
               {"num_follower_actions", cert.q1_star.num_follower_actions}};
  auto flat_json = [](const QTensor<double>& q) {
    json arr = json::array();
    const VectorX<double> v = flatten(q);
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
  };
  j["q1_star"] = flat_json(cert.q1_star);
  j["q2_star"] = flat_json(cert.q2_star);
  j["residuals"] = {{"follower", cert.follower_residual},
                    {"leader", cert.leader_residual},
                    {"evaluation", cert.evaluation_residual}};
  json pairs = json::array();
  for (const auto& p : all_pairs) pairs.push_back(pair_to_json(p));
  j["all_pairs"] = pairs;
  return j.dump(2) + "\n";
}

}  // namespace sqvi
