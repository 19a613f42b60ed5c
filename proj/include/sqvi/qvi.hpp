#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "sqvi/epsilon.hpp"
#include "sqvi/markov_game.hpp"
#include "sqvi/policies.hpp"

namespace sqvi {

/// Follower best response to every leader action: for each (s,a) the smallest
/// b attaining max_b Q2(s,a,b). Ties break to the lowest index.
template <typename Scalar>
FollowerPolicy follower_greedy(const QTensor<Scalar>& q2) {
  const int S = q2.num_states();
  const int A = q2.num_leader_actions;
  const int B = q2.num_follower_actions;
  FollowerPolicy fp;
  fp.action_for_state_and_leader_action.resize(S, A);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      int best = 0;
      Scalar best_value = q2(s, a, 0);
      for (int b = 1; b < B; ++b) {
        if (q2(s, a, b) > best_value) {
          best_value = q2(s, a, b);
          best = b;
        }
      }
      fp.action_for_state_and_leader_action(s, a) = best;
    }
  }
  return fp;
}

/// Leader greedy choice anticipating the follower response: for each s the
/// smallest a attaining max_a Q1(s, a, bp(s,a)).
template <typename Scalar>
LeaderPolicy leader_greedy(const QTensor<Scalar>& q1, const FollowerPolicy& bp) {
  const int S = q1.num_states();
  const int A = q1.num_leader_actions;
  LeaderPolicy lp;
  lp.action_for_state.resize(S);
  for (int s = 0; s < S; ++s) {
    int best = 0;
    Scalar best_value = q1(s, 0, bp(s, 0));
    for (int a = 1; a < A; ++a) {
      const Scalar v = q1(s, a, bp(s, a));
      if (v > best_value) {
        best_value = v;
        best = a;
      }
    }
    lp.action_for_state(s) = best;
  }
  return lp;
}

template <typename Scalar = double>
struct QviStepResult {
  QTensor<Scalar> q1;
  QTensor<Scalar> q2;
  PolicyPair pair;
};

/// Update order of one iteration step. `jacobi` computes both greedy
/// policies from the pre-update tensors (the analyzed recursion);
/// `gauss_seidel` updates the follower tensor first and recomputes its
/// greedy policy before the leader update. The staggered variant is exposed
/// for experimentation only; the error bounds are stated for `jacobi`.
enum class UpdateOrder { jacobi, gauss_seidel };

namespace detail {

// One discounted backup per (s,a,b) with continuation values w; the sum over
// next states runs in ascending order so runs are bit-reproducible.
template <typename Scalar>
void backup(const MarkovGame<Scalar>& g, const MatrixX<Scalar>& rewards,
            const VectorX<Scalar>& w, QTensor<Scalar>& out) {
  for (int s = 0; s < g.num_states; ++s) {
    for (int a = 0; a < g.num_leader_actions; ++a) {
      for (int b = 0; b < g.num_follower_actions; ++b) {
        Scalar acc(0);
        for (int s2 = 0; s2 < g.num_states; ++s2) acc += g.p(s, a, b, s2) * w(s2);
        out(s, a, b) = rewards(s, g.action_col(a, b)) + g.gamma * acc;
      }
    }
  }
}

}  // namespace detail

/**
 * One Q-value-iteration step:
 *
 *   Qi'(s,a,b) = ri(s,a,b) + gamma * sum_{s'} P(s'|s,a,b) * Qi(s', lp(s'), bp(s', lp(s')))
 *
 * where (lp, bp) are the greedy policies. Returns the pair that selected the
 * leader's continuation values.
 */
template <typename Scalar>
QviStepResult<Scalar> qvi_step(const MarkovGame<Scalar>& g,
                               const QTensor<Scalar>& q1,
                               const QTensor<Scalar>& q2,
                               UpdateOrder order = UpdateOrder::jacobi) {
  if (!q1.all_finite() || !q2.all_finite()) {
    throw std::invalid_argument("qvi_step: non-finite Q entries");
  }
  if (!q1.shape_matches(g) || !q2.shape_matches(g)) {
    throw std::invalid_argument("qvi_step: tensor shape does not match game");
  }

  const int S = g.num_states;

  FollowerPolicy bp = follower_greedy(q2);
  LeaderPolicy lp = leader_greedy(q1, bp);

  // Continuation values at the greedy pair, one per next state.
  VectorX<Scalar> w1(S), w2(S);
  for (int s = 0; s < S; ++s) {
    const int a = lp(s);
    const int b = bp(s, a);
    w1(s) = q1(s, a, b);
    w2(s) = q2(s, a, b);
  }

  QviStepResult<Scalar> out;
  out.q1 = QTensor<Scalar>::zero(g, Player::leader);
  out.q2 = QTensor<Scalar>::zero(g, Player::follower);
  detail::backup(g, g.reward_follower, w2, out.q2);

  if (order == UpdateOrder::gauss_seidel) {
    // Re-derive the follower response from the freshly updated tensor and
    // let the leader react to it.
    bp = follower_greedy(out.q2);
    lp = leader_greedy(q1, bp);
    for (int s = 0; s < S; ++s) {
      const int a = lp(s);
      w1(s) = q1(s, a, bp(s, a));
    }
  }
  detail::backup(g, g.reward_leader, w1, out.q1);
  out.pair = PolicyPair{lp, bp};
  return out;
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

template <typename Scalar = double>
struct TraceRecord {
  QTensor<Scalar> q1;
  QTensor<Scalar> q2;
  PolicyPair pair;  // greedy pair computed from (q1, q2)
  Scalar norm_q1{0};
  Scalar norm_q2{0};
  Scalar err_leader = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar err_follower = std::numeric_limits<Scalar>::quiet_NaN();
  EpsilonRecord<Scalar> eps;
};

template <typename Scalar = double>
struct IterationTrace {
  std::vector<TraceRecord<Scalar>> records;  // k = 0 .. iterations
  std::uint64_t game_hash = 0;
  std::int64_t seed = -1;
  int iterations = 0;
  Scalar gamma{0};
  bool has_refs = false;
  bool eps_includes_star = true;
  /// First k with max_i ||Q^i_{k} - Q^i_{k-1}||_inf < 1e-10, or -1.
  /// Reporting only; never truncates a run.
  int converged_at = -1;

  Scalar eps_global() const {
    Scalar m(0);
    for (const auto& r : records) m = std::max(m, r.eps.eps_k);
    return m;
  }

  /// Copy keeping every `stride`-th record plus the last one.
  IterationTrace thinned(int stride) const {
    if (stride <= 1) return *this;
    IterationTrace out = *this;
    out.records.clear();
    for (std::size_t k = 0; k < records.size(); ++k) {
      if (k % static_cast<std::size_t>(stride) == 0 || k + 1 == records.size()) {
        out.records.push_back(records[k]);
      }
    }
    return out;
  }
};

template <typename Scalar = double>
struct RunOptions {
  /// Reject initial tensors with sup norm above 1 (unit-interval start,
  /// the precondition of the 1/(1-gamma) iterate bound).
  bool enforce_unit_init = false;
  /// Include the star slacks in eps_k when a reference is available.
  bool eps_include_star = true;
  UpdateOrder order = UpdateOrder::jacobi;
  std::int64_t seed = -1;  // metadata only
  Scalar convergence_tol = Scalar(1e-10);
};

/**
 * Runs `iterations` synchronous QVI steps from (q1_0, q2_0) and records the
 * full per-iteration state: tensors, greedy pair, sup norms, slacks, and
 * sup-norm errors against the reference when one is supplied.
 */
template <typename Scalar>
IterationTrace<Scalar> run_qvi(
    const MarkovGame<Scalar>& g, const QTensor<Scalar>& q1_0,
    const QTensor<Scalar>& q2_0, int iterations,
    const std::optional<EquilibriumRefs<std::type_identity_t<Scalar>>>& refs = {},
    const RunOptions<std::type_identity_t<Scalar>>& opts = {}) {
  if (iterations < 0) throw std::invalid_argument("run_qvi: negative iteration count");
  if (opts.enforce_unit_init &&
      (sup_norm(q1_0) > Scalar(1) || sup_norm(q2_0) > Scalar(1))) {
    throw std::invalid_argument("run_qvi: initial tensors exceed the unit bound");
  }

  Scalar star_l(0), star_f(0);
  if (refs) {
    auto [ls, fs] = star_slacks(*refs);
    star_l = ls;
    star_f = fs;
  }

  IterationTrace<Scalar> trace;
  trace.records.reserve(static_cast<std::size_t>(iterations) + 1);
  trace.game_hash = game_hash(g);
  trace.seed = opts.seed;
  trace.iterations = iterations;
  trace.gamma = g.gamma;
  trace.has_refs = refs.has_value();
  trace.eps_includes_star = opts.eps_include_star;

  auto make_record = [&](const QTensor<Scalar>& q1, const QTensor<Scalar>& q2,
                         const PolicyPair& pair) {
    TraceRecord<Scalar> rec;
    rec.q1 = q1;
    rec.q2 = q2;
    rec.pair = pair;
    rec.norm_q1 = sup_norm(q1);
    rec.norm_q2 = sup_norm(q2);
    if (refs) {
      rec.err_leader = sup_diff(q1, refs->q1_star);
      rec.err_follower = sup_diff(q2, refs->q2_star);
    }
    rec.eps.slack_leader_k = slack_leader(q1, pair.leader, pair.follower);
    rec.eps.slack_follower_k = slack_follower(q2, pair.leader, pair.follower);
    rec.eps.eps_k = std::max(rec.eps.slack_leader_k, rec.eps.slack_follower_k);
    if (refs) {
      rec.eps.slack_leader_star = star_l;
      rec.eps.slack_follower_star = star_f;
      if (opts.eps_include_star) {
        rec.eps.eps_k = std::max({rec.eps.eps_k, star_l, star_f});
      }
    }
    return rec;
  };

  QTensor<Scalar> q1 = q1_0;
  QTensor<Scalar> q2 = q2_0;
  q1.player = Player::leader;
  q2.player = Player::follower;

  for (int k = 0; k < iterations; ++k) {
    QviStepResult<Scalar> step = qvi_step(g, q1, q2, opts.order);
    trace.records.push_back(make_record(q1, q2, step.pair));
    const Scalar delta = std::max(sup_diff(step.q1, q1), sup_diff(step.q2, q2));
    if (trace.converged_at < 0 && delta < opts.convergence_tol) {
      trace.converged_at = k + 1;
    }
    q1 = std::move(step.q1);
    q2 = std::move(step.q2);
  }
  // Final record: greedy pair recomputed from the last tensors.
  FollowerPolicy bp = follower_greedy(q2);
  LeaderPolicy lp = leader_greedy(q1, bp);
  trace.records.push_back(make_record(q1, q2, PolicyPair{lp, bp}));
  return trace;
}

// ---------------------------------------------------------------------------
// Cycle detection
// ---------------------------------------------------------------------------

struct CycleReport {
  enum class Kind { none, cycle, aperiodic };
  Kind kind = Kind::none;
  int period = 0;  // set when kind == cycle

  std::string to_string() const {
    switch (kind) {
      case Kind::none: return "none";
      case Kind::cycle: return "period " + std::to_string(period);
      case Kind::aperiodic: return "aperiodic";
    }
    return "?";
  }
};

/**
 * Looks for the smallest period p <= window with pi_{k+p} = pi_k over the
 * final 2*window policy pairs (or the whole trace when shorter). A constant
 * suffix reports `none`; no admissible period reports `aperiodic`.
 */
template <typename Scalar>
CycleReport detect_cycle(const IterationTrace<Scalar>& trace, int window) {
  CycleReport report;
  const auto& recs = trace.records;
  const std::size_t n = recs.size();
  if (n < 2 || window < 1) return report;

  const std::size_t len = std::min<std::size_t>(n, 2 * static_cast<std::size_t>(window));
  const std::size_t start = n - len;
  for (int p = 1; p <= window && static_cast<std::size_t>(p) < len; ++p) {
    bool periodic = true;
    for (std::size_t k = start; k + p < n; ++k) {
      if (recs[k].pair != recs[k + p].pair) {
        periodic = false;
        break;
      }
    }
    if (periodic) {
      if (p == 1) return report;  // constant suffix
      report.kind = CycleReport::Kind::cycle;
      report.period = p;
      return report;
    }
  }
  report.kind = CycleReport::Kind::aperiodic;
  return report;
}

}  // namespace sqvi
