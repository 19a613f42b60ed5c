#pragma once

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "sqvi/markov_game.hpp"
#include "sqvi/policies.hpp"

namespace sqvi {

/**
 * Slack quantities of the relaxed best-response condition. Each slack is the
 * smallest epsilon that makes one of the four inequalities hold against every
 * deterministic deviation policy simultaneously; states decouple, so a min
 * over single actions per state is exact.
 */
template <typename Scalar = double>
struct EpsilonRecord {
  Scalar slack_leader_k{0};
  Scalar slack_follower_k{0};
  Scalar slack_leader_star = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar slack_follower_star = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar eps_k{0};
};

/// Equilibrium reference produced by the oracle: fixed-point tensors and the
/// equilibrium policy pair.
template <typename Scalar = double>
struct EquilibriumRefs {
  QTensor<Scalar> q1_star;
  QTensor<Scalar> q2_star;
  PolicyPair pair;
};

/// max over s of [ Q1(s, lp(s), fp(s,lp(s))) - min_b Q1(s, lp(s), b) ].
/// Requires (lp, fp) to be the greedy pair for the current tensors.
template <typename Scalar>
Scalar slack_leader(const QTensor<Scalar>& q1, const LeaderPolicy& lp,
                    const FollowerPolicy& fp) {
  Scalar worst(0);
  const int S = q1.num_states();
  const int B = q1.num_follower_actions;
  for (int s = 0; s < S; ++s) {
    const int a = lp(s);
    const Scalar selected = q1(s, a, fp(s, a));
    Scalar low = selected;
    for (int b = 0; b < B; ++b) low = std::min(low, q1(s, a, b));
    worst = std::max(worst, selected - low);
  }
  return worst;
}

/// With bbar(s) = fp(s, lp(s)) held fixed:
/// max over s of [ Q2(s, lp(s), bbar(s)) - min_a Q2(s, a, bbar(s)) ].
template <typename Scalar>
Scalar slack_follower(const QTensor<Scalar>& q2, const LeaderPolicy& lp,
                      const FollowerPolicy& fp) {
  Scalar worst(0);
  const int S = q2.num_states();
  const int A = q2.num_leader_actions;
  for (int s = 0; s < S; ++s) {
    const int bbar = fp(s, lp(s));
    const Scalar selected = q2(s, lp(s), bbar);
    Scalar low = selected;
    for (int a = 0; a < A; ++a) low = std::min(low, q2(s, a, bbar));
    worst = std::max(worst, selected - low);
  }
  return worst;
}

/// Star slacks are constants of the equilibrium reference; callers evaluating
/// many iterations compute them once.
template <typename Scalar>
std::pair<Scalar, Scalar> star_slacks(const EquilibriumRefs<Scalar>& refs) {
  return {slack_leader(refs.q1_star, refs.pair.leader, refs.pair.follower),
          slack_follower(refs.q2_star, refs.pair.leader, refs.pair.follower)};
}

/**
 * Per-iteration epsilon. With a reference, eps_k is the max of all four
 * slacks (the starred inequalities are part of the relaxed condition);
 * `include_star = false` exposes the iterates-only variant. Without a
 * reference only the iterate slacks exist.
 */
template <typename Scalar>
EpsilonRecord<Scalar> epsilon_k(const QTensor<Scalar>& q1_k,
                                const QTensor<Scalar>& q2_k,
                                const PolicyPair& pair_k,
                                const EquilibriumRefs<Scalar>* refs = nullptr,
                                bool include_star = true) {
  EpsilonRecord<Scalar> rec;
  rec.slack_leader_k = slack_leader(q1_k, pair_k.leader, pair_k.follower);
  rec.slack_follower_k = slack_follower(q2_k, pair_k.leader, pair_k.follower);
  rec.eps_k = std::max(rec.slack_leader_k, rec.slack_follower_k);
  if (refs != nullptr) {
    auto [ls, fs] = star_slacks(*refs);
    rec.slack_leader_star = ls;
    rec.slack_follower_star = fs;
    if (include_star) {
      rec.eps_k = std::max({rec.eps_k, ls, fs});
    }
  }
  return rec;
}

/// 2/(1-gamma): a constant epsilon this large always satisfies the relaxed
/// best-response condition when iterates obey the 1/(1-gamma) bound.
template <typename Scalar>
Scalar epsilon_existence_bound(Scalar gamma) {
  if (!(gamma >= Scalar(0) && gamma < Scalar(1))) {
    throw std::invalid_argument("epsilon_existence_bound: gamma must lie in [0,1)");
  }
  return Scalar(2) / (Scalar(1) - gamma);
}

}  // namespace sqvi
