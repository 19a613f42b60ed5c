#pragma once

#include <string>
#include <vector>

#include "sqvi/comparison.hpp"
#include "sqvi/oracle.hpp"
#include "sqvi/qvi.hpp"

namespace sqvi {

/// Bound/comparison context for one exported trace. `eps_run` is the
/// mode-resolved constant epsilon the comparison systems were driven with.
struct TraceExportContext {
  bool bounds_available = false;
  double eps_run = 0.0;
  const ComparisonTrace<double>* comparison = nullptr;  // may be null
};

/**
 * One CSV row per iteration. Columns:
 *   k, err_leader, err_follower, eps_k, bound_eps_k, bound_eps_global,
 *   norm_q1, norm_q2, leader_policy, follower_policy,
 *   bound_theorem_global, bound_theorem_adaptive,
 *   sandwich_violation_upper, sandwich_violation_lower
 * bound_eps_k / bound_theorem_adaptive use the per-iteration eps_k,
 * bound_eps_global uses the trace's own max eps_k, bound_theorem_global uses
 * eps_run. Unavailable values are written as nan. Reals carry 17 significant
 * digits; identical inputs produce byte-identical text.
 */
std::string trace_to_csv(const IterationTrace<double>& trace,
                         const TraceExportContext& ctx);

/// Per-seed summary: final errors, eps_global, cycle report, bound flags.
std::string run_summary_to_json(const IterationTrace<double>& trace,
                                const TraceExportContext& ctx,
                                const CycleReport& cycle);

/// Certificate export with multiplicity of the enumeration it came from.
std::string certificate_to_json(const EquilibriumCertificate<double>& cert,
                                std::size_t multiplicity,
                                const std::vector<PolicyPair>& all_pairs);

}  // namespace sqvi
