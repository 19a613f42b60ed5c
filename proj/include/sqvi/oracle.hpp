#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sqvi/epsilon.hpp"
#include "sqvi/markov_game.hpp"
#include "sqvi/policies.hpp"

namespace sqvi {

/**
 * A policy pair with its fixed-point Q-tensors and the residuals of the
 * equilibrium conditions:
 *   follower_residual   max_{s,a} [ max_b Q2(s,a,b) - Q2(s,a,b*(s,a)) ]
 *   leader_residual     max_s [ max_a Q1(s,a,b*(s,a)) - Q1(s,a*(s),b*(s,a*(s))) ]
 *   evaluation_residual max fixed-point equation violation of both tensors
 */
template <typename Scalar = double>
struct EquilibriumCertificate {
  PolicyPair pair;
  QTensor<Scalar> q1_star;
  QTensor<Scalar> q2_star;
  Scalar follower_residual{0};
  Scalar leader_residual{0};
  Scalar evaluation_residual{0};

  bool verified(Scalar tol = Scalar(1e-8)) const {
    return follower_residual <= tol && leader_residual <= tol &&
           evaluation_residual <= tol;
  }
};

template <typename Scalar>
EquilibriumRefs<Scalar> to_refs(const EquilibriumCertificate<Scalar>& cert) {
  return EquilibriumRefs<Scalar>{cert.q1_star, cert.q2_star, cert.pair};
}

class EnumerationBudgetError : public std::runtime_error {
 public:
  EnumerationBudgetError(double required, double limit)
      : std::runtime_error("enumerate_equilibria: " + std::to_string(required) +
                           " candidate pairs exceed the budget of " +
                           std::to_string(limit)),
        required_budget(required) {}
  double required_budget;
};

namespace detail {

inline int evaluation_iteration_cap(double gamma, double tol) {
  if (gamma <= 0.0) return 4;
  const double sweeps = 10.0 * std::log(tol) / std::log(gamma);
  return std::max(16, static_cast<int>(std::ceil(sweeps)));
}

/// Reusable workspace for repeated policy evaluations on one game.
template <typename Scalar>
struct EvaluationWorkspace {
  MatrixX<Scalar> t_sel;            // S x S, rows of P at the selected pair
  VectorX<Scalar> r1_sel, r2_sel;   // selected rewards
  VectorX<Scalar> v1, v2, v1_next, v2_next;
  bool warm = false;

  void resize(int S) {
    t_sel.resize(S, S);
    r1_sel.resize(S);
    r2_sel.resize(S);
    v1.resize(S);
    v2.resize(S);
    v1_next.resize(S);
    v2_next.resize(S);
  }
};

/**
 * Fixed-point iteration for the selected-value vectors
 *   v_i = r_i_sel + gamma * T_sel * v_i ,
 * the restriction of the full Q fixed-point equation to the entries the
 * selection matrix extracts (the full equation only reads Q through those
 * entries, and T_sel is row-stochastic, so the map is a gamma-contraction
 * with the same unique fixed point). Sweep deltas land in `sweep_deltas`
 * when given.
 */
template <typename Scalar>
void evaluate_selected_values(const MarkovGame<Scalar>& g, const PolicyPair& pair,
                              Scalar tol, EvaluationWorkspace<Scalar>& ws,
                              std::vector<Scalar>* sweep_deltas = nullptr) {
  const int S = g.num_states;
  for (int s = 0; s < S; ++s) {
    const int a = pair.leader(s);
    const int b = pair.follower(s, a);
    ws.t_sel.row(s) = g.transition_row(s, a, b);
    ws.r1_sel(s) = g.r1(s, a, b);
    ws.r2_sel(s) = g.r2(s, a, b);
  }
  if (!ws.warm) {
    ws.v1 = ws.r1_sel;
    ws.v2 = ws.r2_sel;
  }

  const int cap = evaluation_iteration_cap(static_cast<double>(g.gamma),
                                           static_cast<double>(tol));
  // Sweep-delta threshold that keeps the assembled tensors within tol of the
  // true fixed point: ||v_t - v*|| <= gamma * delta / (1 - gamma).
  const Scalar stop = tol * (Scalar(1) - g.gamma) / Scalar(2);
  for (int it = 0; it < cap; ++it) {
    ws.v1_next.noalias() = ws.r1_sel + g.gamma * (ws.t_sel * ws.v1);
    ws.v2_next.noalias() = ws.r2_sel + g.gamma * (ws.t_sel * ws.v2);
    const Scalar delta = std::max(sup_norm((ws.v1_next - ws.v1).eval()),
                                  sup_norm((ws.v2_next - ws.v2).eval()));
    ws.v1.swap(ws.v1_next);
    ws.v2.swap(ws.v2_next);
    if (sweep_deltas) sweep_deltas->push_back(delta);
    if (delta <= stop) return;
  }
  throw std::runtime_error(
      "evaluate_policy_pair: fixed-point iteration failed to reach tolerance " +
      std::to_string(static_cast<double>(tol)) + " within " + std::to_string(cap) +
      " sweeps; this indicates a bug");
}

template <typename Scalar>
void assemble_q_from_values(const MarkovGame<Scalar>& g, const VectorX<Scalar>& v,
                            Player who, QTensor<Scalar>& out) {
  out = QTensor<Scalar>::zero(g, who);
  const auto& rewards = g.reward(who);
  for (int s = 0; s < g.num_states; ++s) {
    for (int a = 0; a < g.num_leader_actions; ++a) {
      for (int b = 0; b < g.num_follower_actions; ++b) {
        Scalar acc(0);
        for (int s2 = 0; s2 < g.num_states; ++s2) acc += g.p(s, a, b, s2) * v(s2);
        out(s, a, b) = rewards(s, g.action_col(a, b)) + g.gamma * acc;
      }
    }
  }
}

}  // namespace detail

/**
 * Unique solution of Q^i = r^i + gamma * P * M_{[pair]} * Q^i for both
 * players, computed by fixed-point iteration (the map is a contraction with
 * modulus gamma). Throws when the sweep budget is exhausted, which would
 * signal a bug rather than a data condition.
 */
template <typename Scalar>
std::pair<QTensor<Scalar>, QTensor<Scalar>> evaluate_policy_pair(
    const MarkovGame<Scalar>& g, const PolicyPair& pair, Scalar tol = Scalar(1e-12),
    std::vector<Scalar>* sweep_deltas = nullptr) {
  detail::EvaluationWorkspace<Scalar> ws;
  ws.resize(g.num_states);
  detail::evaluate_selected_values(g, pair, tol, ws, sweep_deltas);
  std::pair<QTensor<Scalar>, QTensor<Scalar>> out;
  detail::assemble_q_from_values(g, ws.v1, Player::leader, out.first);
  detail::assemble_q_from_values(g, ws.v2, Player::follower, out.second);
  return out;
}

/// Residuals of the equilibrium conditions for (q1, q2) obtained from
/// evaluate_policy_pair. All residuals are >= 0 by construction.
template <typename Scalar>
EquilibriumCertificate<Scalar> verify_equilibrium(const MarkovGame<Scalar>& g,
                                                  const PolicyPair& pair,
                                                  const QTensor<Scalar>& q1,
                                                  const QTensor<Scalar>& q2) {
  EquilibriumCertificate<Scalar> cert;
  cert.pair = pair;
  cert.q1_star = q1;
  cert.q2_star = q2;

  const int S = g.num_states;
  const int A = g.num_leader_actions;
  const int B = g.num_follower_actions;

  Scalar follower_residual(0);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      Scalar best = q2(s, a, 0);
      for (int b = 1; b < B; ++b) best = std::max(best, q2(s, a, b));
      follower_residual = std::max(follower_residual, best - q2(s, a, pair.follower(s, a)));
    }
  }
  cert.follower_residual = follower_residual;

  Scalar leader_residual(0);
  for (int s = 0; s < S; ++s) {
    const Scalar chosen = q1(s, pair.leader(s), pair.follower(s, pair.leader(s)));
    Scalar best = chosen;
    for (int a = 0; a < A; ++a) best = std::max(best, q1(s, a, pair.follower(s, a)));
    leader_residual = std::max(leader_residual, best - chosen);
  }
  cert.leader_residual = leader_residual;

  // Fixed-point equation residual, both players.
  VectorX<Scalar> w1(S), w2(S);
  for (int s = 0; s < S; ++s) {
    const int a = pair.leader(s);
    const int b = pair.follower(s, a);
    w1(s) = q1(s, a, b);
    w2(s) = q2(s, a, b);
  }
  Scalar eval_residual(0);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      for (int b = 0; b < B; ++b) {
        Scalar acc1(0), acc2(0);
        for (int s2 = 0; s2 < S; ++s2) {
          const Scalar p = g.p(s, a, b, s2);
          acc1 += p * w1(s2);
          acc2 += p * w2(s2);
        }
        eval_residual = std::max(
            eval_residual, std::abs(q1(s, a, b) - g.r1(s, a, b) - g.gamma * acc1));
        eval_residual = std::max(
            eval_residual, std::abs(q2(s, a, b) - g.r2(s, a, b) - g.gamma * acc2));
      }
    }
  }
  cert.evaluation_residual = eval_residual;
  return cert;
}

/// Number of deterministic policy pairs, as a double (overflows gracefully).
template <typename Scalar>
double enumeration_budget_required(const MarkovGame<Scalar>& g) {
  const double log_count =
      g.num_states * std::log(double(g.num_leader_actions)) +
      double(g.num_states) * g.num_leader_actions * std::log(double(g.num_follower_actions));
  return std::exp(log_count);
}

/**
 * Evaluates and verifies every deterministic policy pair and returns the
 * verified certificates in lexicographic pair order (possibly none: the
 * greedy dynamics admit games without a deterministic equilibrium). Refuses
 * games whose pair count exceeds `limit`.
 *
 * The search exploits that the fixed-point tensors depend on the follower
 * policy only through its composition with the leader policy: one evaluation
 * per (leader policy, composed map) family covers the whole B^(S*(A-1))
 * block of follower policies sharing it, and a follower policy can only
 * verify when every free slot lies in the argmax set of the shared Q2, so
 * candidates are constructed from those sets instead of enumerated blindly.
 */
template <typename Scalar>
std::vector<EquilibriumCertificate<Scalar>> enumerate_equilibria(
    const MarkovGame<Scalar>& g, double limit = 1e6,
    Scalar eval_tol = Scalar(1e-12), Scalar verify_tol = Scalar(1e-8)) {
  const double required = enumeration_budget_required(g);
  if (!(required <= limit)) {
    throw EnumerationBudgetError(required, limit);
  }

  const int S = g.num_states;
  const int A = g.num_leader_actions;
  const int B = g.num_follower_actions;

  std::vector<EquilibriumCertificate<Scalar>> found;
  detail::EvaluationWorkspace<Scalar> ws;
  ws.resize(S);

  PolicyPair pair;
  pair.leader.action_for_state = Eigen::VectorXi::Zero(S);
  pair.follower.action_for_state_and_leader_action = Eigen::MatrixXi::Zero(S, A);
  Eigen::VectorXi composed = Eigen::VectorXi::Zero(S);  // s -> b at (s, leader(s))

  QTensor<Scalar> q1, q2;
  std::vector<std::vector<int>> admissible(static_cast<std::size_t>(S) * A);
  std::vector<EquilibriumCertificate<Scalar>> leader_certs;

  auto advance = [](Eigen::VectorXi& digits, int base) {
    for (Eigen::Index i = digits.size(); i-- > 0;) {
      if (digits(i) + 1 < base) {
        digits(i) += 1;
        return true;
      }
      digits(i) = 0;
    }
    return false;
  };

  bool more_leader = true;
  while (more_leader) {
    leader_certs.clear();
    composed.setZero();
    bool more_composed = true;
    while (more_composed) {
      auto& f = pair.follower.action_for_state_and_leader_action;
      for (int s = 0; s < S; ++s) f(s, pair.leader(s)) = composed(s);

      // The evaluation reads the follower policy only at (s, leader(s)).
      detail::evaluate_selected_values(g, pair, eval_tol, ws);
      ws.warm = true;
      detail::assemble_q_from_values(g, ws.v2, Player::follower, q2);

      // The composed slots are forced; reject the family if any misses the
      // argmax. Free slots collect their admissible actions.
      bool family_ok = true;
      for (int s = 0; s < S && family_ok; ++s) {
        for (int a = 0; a < A; ++a) {
          Scalar best = q2(s, a, 0);
          for (int b = 1; b < B; ++b) best = std::max(best, q2(s, a, b));
          if (a == pair.leader(s)) {
            if (best - q2(s, a, composed(s)) > verify_tol) {
              family_ok = false;
              break;
            }
            continue;
          }
          auto& slot = admissible[static_cast<std::size_t>(s) * A + a];
          slot.clear();
          for (int b = 0; b < B; ++b) {
            if (best - q2(s, a, b) <= verify_tol) slot.push_back(b);
          }
        }
      }

      if (family_ok) {
        detail::assemble_q_from_values(g, ws.v1, Player::leader, q1);
        // Odometer over the product of admissible sets of the free slots.
        std::vector<std::size_t> choice(static_cast<std::size_t>(S) * A, 0);
        bool more_candidates = true;
        while (more_candidates) {
          for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
              if (a == pair.leader(s)) continue;
              const auto& slot = admissible[static_cast<std::size_t>(s) * A + a];
              f(s, a) = slot[choice[static_cast<std::size_t>(s) * A + a]];
            }
          }
          EquilibriumCertificate<Scalar> cert = verify_equilibrium(g, pair, q1, q2);
          if (cert.verified(verify_tol)) leader_certs.push_back(std::move(cert));

          more_candidates = false;
          for (std::size_t i = choice.size(); i-- > 0;) {
            const int s = static_cast<int>(i) / A;
            const int a = static_cast<int>(i) % A;
            if (a == pair.leader(s)) continue;
            if (choice[i] + 1 < admissible[i].size()) {
              ++choice[i];
              more_candidates = true;
              break;
            }
            choice[i] = 0;
          }
        }
      }
      more_composed = advance(composed, B);
    }

    std::sort(leader_certs.begin(), leader_certs.end(),
              [](const auto& x, const auto& y) { return pair_less(x.pair, y.pair); });
    for (auto& cert : leader_certs) found.push_back(std::move(cert));

    more_leader = advance(pair.leader.action_for_state, A);
  }
  return found;
}

/**
 * Closed-form equilibrium of a single-state self-loop game: the greedy pair
 * comes straight from the reward tables (the continuation value shifts every
 * entry equally), and
 *   Q^i(s,a,b) = r^i(s,a,b) + gamma * r^i(s, a*, b*(a*)) / (1 - gamma).
 */
template <typename Scalar>
std::tuple<QTensor<Scalar>, QTensor<Scalar>, PolicyPair> closed_form_single_state(
    const MarkovGame<Scalar>& g) {
  if (g.num_states != 1) {
    throw std::invalid_argument("closed_form_single_state: game must have one state");
  }
  for (int a = 0; a < g.num_leader_actions; ++a) {
    for (int b = 0; b < g.num_follower_actions; ++b) {
      if (std::abs(g.p(0, a, b, 0) - Scalar(1)) > Scalar(1e-12)) {
        throw std::invalid_argument(
            "closed_form_single_state: transition must be a self-loop");
      }
    }
  }

  PolicyPair pair;
  pair.follower.action_for_state_and_leader_action.resize(1, g.num_leader_actions);
  for (int a = 0; a < g.num_leader_actions; ++a) {
    int best = 0;
    Scalar best_value = g.r2(0, a, 0);
    for (int b = 1; b < g.num_follower_actions; ++b) {
      if (g.r2(0, a, b) > best_value) {
        best_value = g.r2(0, a, b);
        best = b;
      }
    }
    pair.follower.action_for_state_and_leader_action(0, a) = best;
  }
  pair.leader.action_for_state.resize(1);
  {
    int best = 0;
    Scalar best_value = g.r1(0, 0, pair.follower(0, 0));
    for (int a = 1; a < g.num_leader_actions; ++a) {
      const Scalar v = g.r1(0, a, pair.follower(0, a));
      if (v > best_value) {
        best_value = v;
        best = a;
      }
    }
    pair.leader.action_for_state(0) = best;
  }

  const int a_star = pair.leader(0);
  const int b_star = pair.follower(0, a_star);
  QTensor<Scalar> q1 = QTensor<Scalar>::from_rewards(g, Player::leader);
  QTensor<Scalar> q2 = QTensor<Scalar>::from_rewards(g, Player::follower);
  q1.values.array() += g.gamma * g.r1(0, a_star, b_star) / (Scalar(1) - g.gamma);
  q2.values.array() += g.gamma * g.r2(0, a_star, b_star) / (Scalar(1) - g.gamma);
  return {std::move(q1), std::move(q2), std::move(pair)};
}

}  // namespace sqvi
