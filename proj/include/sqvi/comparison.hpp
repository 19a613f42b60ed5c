#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sqvi/epsilon.hpp"
#include "sqvi/linear_ops.hpp"
#include "sqvi/markov_game.hpp"
#include "sqvi/qvi.hpp"

namespace sqvi {

/// State of the upper/lower comparison iterations around one reference tensor.
template <typename Scalar = double>
struct ComparisonState {
  QTensor<Scalar> q_upper;
  QTensor<Scalar> q_lower;
  Scalar eps{0};
  QTensor<Scalar> reference;  // fixed-point tensor the systems contract around
  PolicyPair star_pair;
};

/**
 * Upper comparison step:
 *   flatten(Q^U_{k+1} - Q*) = gamma * P * M_{[lp_k, b*]} * flatten(Q^U_k - Q*) + gamma*eps*1
 * with the selection matrix built from the running leader policy composed
 * with the star follower policy.
 */
template <typename Scalar>
QTensor<Scalar> upper_step(const MarkovGame<Scalar>& g,
                           const ComparisonState<Scalar>& cs,
                           const LeaderPolicy& lp_k) {
  const MatrixX<Scalar> P = build_transition_matrix(g);
  const SelectionMatrix M =
      build_selection_matrix(lp_k, cs.star_pair.follower, g.num_follower_actions);
  const VectorX<Scalar> ref = flatten(cs.reference);
  const VectorX<Scalar> diff = flatten(cs.q_upper) - ref;
  VectorX<Scalar> next = g.gamma * (P * apply_selection(M, diff));
  next.array() += g.gamma * cs.eps;
  return unflatten<Scalar>((ref + next).eval(), g.num_states, g.num_leader_actions,
                           g.num_follower_actions, cs.reference.player);
}

/// Mirrored recursion with M_{[a*, fp_k]} and affine term -gamma*eps*1.
template <typename Scalar>
QTensor<Scalar> lower_step(const MarkovGame<Scalar>& g,
                           const ComparisonState<Scalar>& cs,
                           const FollowerPolicy& fp_k) {
  const MatrixX<Scalar> P = build_transition_matrix(g);
  const SelectionMatrix M =
      build_selection_matrix(cs.star_pair.leader, fp_k, g.num_follower_actions);
  const VectorX<Scalar> ref = flatten(cs.reference);
  const VectorX<Scalar> diff = flatten(cs.q_lower) - ref;
  VectorX<Scalar> next = g.gamma * (P * apply_selection(M, diff));
  next.array() -= g.gamma * cs.eps;
  return unflatten<Scalar>((ref + next).eval(), g.num_states, g.num_leader_actions,
                           g.num_follower_actions, cs.reference.player);
}

template <typename Scalar = double>
struct ComparisonRecord {
  QTensor<Scalar> q_upper;
  QTensor<Scalar> q_lower;
  Scalar eps_used{0};
  /// max(0, max entry of Q1_k - Q^U_k) and max(0, max entry of Q^L_k - Q1_k).
  Scalar violation_upper{0};
  Scalar violation_lower{0};
  Scalar err_upper{0};  // ||Q^U_k - Q*||_inf
  Scalar err_lower{0};
};

template <typename Scalar = double>
struct ComparisonTrace {
  std::vector<ComparisonRecord<Scalar>> records;

  Scalar max_violation_upper() const {
    Scalar m(0);
    for (const auto& r : records) m = std::max(m, r.violation_upper);
    return m;
  }
  Scalar max_violation_lower() const {
    Scalar m(0);
    for (const auto& r : records) m = std::max(m, r.violation_lower);
    return m;
  }
};

namespace detail {

template <typename Scalar>
ComparisonTrace<Scalar> run_comparison_impl(
    const MarkovGame<Scalar>& g, const IterationTrace<Scalar>& main_trace,
    const EquilibriumRefs<Scalar>& refs,
    const std::function<Scalar(std::size_t)>& eps_at) {
  if (main_trace.records.empty()) {
    throw std::invalid_argument("run_comparison: empty main trace");
  }

  ComparisonState<Scalar> cs;
  cs.reference = refs.q1_star;
  cs.star_pair = refs.pair;
  cs.q_upper = main_trace.records.front().q1;
  cs.q_lower = main_trace.records.front().q1;

  ComparisonTrace<Scalar> out;
  out.records.reserve(main_trace.records.size());
  for (std::size_t k = 0; k < main_trace.records.size(); ++k) {
    const auto& main_rec = main_trace.records[k];
    ComparisonRecord<Scalar> rec;
    rec.q_upper = cs.q_upper;
    rec.q_lower = cs.q_lower;
    rec.eps_used = eps_at(k);
    rec.violation_upper =
        std::max(Scalar(0), (main_rec.q1.values - cs.q_upper.values).maxCoeff());
    rec.violation_lower =
        std::max(Scalar(0), (cs.q_lower.values - main_rec.q1.values).maxCoeff());
    rec.err_upper = sup_diff(cs.q_upper, refs.q1_star);
    rec.err_lower = sup_diff(cs.q_lower, refs.q1_star);
    out.records.push_back(std::move(rec));

    if (k + 1 < main_trace.records.size()) {
      cs.eps = eps_at(k);
      QTensor<Scalar> up = upper_step(g, cs, main_rec.pair.leader);
      QTensor<Scalar> lo = lower_step(g, cs, main_rec.pair.follower);
      cs.q_upper = std::move(up);
      cs.q_lower = std::move(lo);
    }
  }
  return out;
}

}  // namespace detail

/**
 * Advances both comparison systems along the main trace's greedy policies,
 * starting from Q^U_0 = Q^L_0 = Q1_0, with a constant eps. Records the
 * sandwich-violation magnitudes per iteration; violations are data, not
 * errors (they appear when eps is below the slack the run required).
 */
template <typename Scalar>
ComparisonTrace<Scalar> run_comparison(const MarkovGame<Scalar>& g,
                                       const IterationTrace<Scalar>& main_trace,
                                       const EquilibriumRefs<Scalar>& refs,
                                       Scalar eps) {
  return detail::run_comparison_impl<Scalar>(g, main_trace, refs,
                                             [eps](std::size_t) { return eps; });
}

/// Diagnostic variant driving the affine term with the per-iteration eps_k
/// recorded in the main trace. Not covered by the constant-eps theory.
template <typename Scalar>
ComparisonTrace<Scalar> run_comparison_adaptive(
    const MarkovGame<Scalar>& g, const IterationTrace<Scalar>& main_trace,
    const EquilibriumRefs<Scalar>& refs) {
  return detail::run_comparison_impl<Scalar>(
      g, main_trace, refs,
      [&main_trace](std::size_t k) { return main_trace.records[k].eps.eps_k; });
}

namespace detail {
template <typename Scalar>
void check_bound_args(Scalar gamma, Scalar eps, long long k) {
  if (!(gamma >= Scalar(0) && gamma < Scalar(1))) {
    throw std::invalid_argument("bound: gamma must lie in [0,1)");
  }
  if (eps < Scalar(0)) throw std::invalid_argument("bound: eps must be >= 0");
  if (k < 0) throw std::invalid_argument("bound: k must be >= 0");
}
}  // namespace detail

/// Finite-time error bound:  (6/(1-gamma)) * gamma^k + 3*eps/(1-gamma).
template <typename Scalar>
Scalar theorem_bound(long long k, Scalar gamma, Scalar eps) {
  detail::check_bound_args(gamma, eps, k);
  return Scalar(6) / (Scalar(1) - gamma) * std::pow(gamma, Scalar(k)) +
         Scalar(3) * eps / (Scalar(1) - gamma);
}

/// Per-system bound on ||Q^{U/L}_k - Q*||_inf before the triangle-inequality
/// combination:  (2/(1-gamma)) * gamma^k + eps/(1-gamma).
template <typename Scalar>
Scalar upper_bound_norm(long long k, Scalar gamma, Scalar eps) {
  detail::check_bound_args(gamma, eps, k);
  return Scalar(2) / (Scalar(1) - gamma) * std::pow(gamma, Scalar(k)) +
         eps / (Scalar(1) - gamma);
}

}  // namespace sqvi
