#pragma once

#include <stdexcept>
#include <vector>

#include "sqvi/markov_game.hpp"
#include "sqvi/policies.hpp"
#include "sqvi/qvi.hpp"

namespace sqvi {

/// Position of Q(s,a,b) in the stacked Q-vector: blocks Q_{a,b} of length S,
/// ordered with b fastest, entry s inside the block.
inline Eigen::Index flat_index(int s, int a, int b, int num_states,
                               int num_follower_actions) {
  return (Eigen::Index(a) * num_follower_actions + b) * num_states + s;
}

/// Stacked Q-vector of a tensor. With the S x (A*B) storage this is the
/// column-major linearization of `values`.
template <typename Scalar>
VectorX<Scalar> flatten(const QTensor<Scalar>& q) {
  return q.values.reshaped();
}

template <typename Scalar>
QTensor<Scalar> unflatten(const VectorX<Scalar>& v, int num_states,
                          int num_leader_actions, int num_follower_actions,
                          Player who = Player::leader) {
  const Eigen::Index expected =
      Eigen::Index(num_states) * num_leader_actions * num_follower_actions;
  if (v.size() != expected) {
    throw std::invalid_argument("unflatten: vector length " +
                                std::to_string(v.size()) + ", expected " +
                                std::to_string(expected));
  }
  QTensor<Scalar> q;
  q.values = v.reshaped(num_states,
                        Eigen::Index(num_leader_actions) * num_follower_actions);
  q.player = who;
  q.num_leader_actions = num_leader_actions;
  q.num_follower_actions = num_follower_actions;
  return q;
}

/// Stacked transition matrix: blocks P_{a,b} of shape S x S ordered with b
/// fastest; block (a,b) row s holds P(.|s,a,b). (The game itself stores rows
/// grouped by state, so this is a genuine row permutation.)
template <typename Scalar>
MatrixX<Scalar> build_transition_matrix(const MarkovGame<Scalar>& g) {
  MatrixX<Scalar> P(g.num_joint(), g.num_states);
  for (int a = 0; a < g.num_leader_actions; ++a) {
    for (int b = 0; b < g.num_follower_actions; ++b) {
      for (int s = 0; s < g.num_states; ++s) {
        P.row(flat_index(s, a, b, g.num_states, g.num_follower_actions)) =
            g.transition_row(s, a, b);
      }
    }
  }
  return P;
}

/**
 * Action-selection matrix for a policy pair: logically the S x (S*A*B) 0/1
 * matrix whose row s extracts Q(s, phi(s), psi(s)) from the stacked Q-vector,
 * with phi(s) = lp(s) and psi(s) = fp(s, lp(s)). Stored as one flat column
 * index per row; the dense Kronecker form exists only in tests.
 */
struct SelectionMatrix {
  std::vector<Eigen::Index> selected_col;  // one per state (row)
  int num_states = 0;
  int num_leader_actions = 0;
  int num_follower_actions = 0;

  Eigen::Index cols() const {
    return Eigen::Index(num_states) * num_leader_actions * num_follower_actions;
  }
};

inline SelectionMatrix build_selection_matrix(const LeaderPolicy& lp,
                                              const FollowerPolicy& fp,
                                              int num_follower_actions) {
  const int S = static_cast<int>(lp.num_states());
  if (fp.num_states() != S) {
    throw std::invalid_argument("build_selection_matrix: policy state counts differ");
  }
  SelectionMatrix m;
  m.num_states = S;
  m.num_leader_actions = static_cast<int>(fp.num_leader_actions());
  m.num_follower_actions = num_follower_actions;
  m.selected_col.resize(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    const int a = lp(s);
    const int b = fp(s, a);
    m.selected_col[static_cast<std::size_t>(s)] =
        flat_index(s, a, b, S, num_follower_actions);
  }
  return m;
}

/// M * v: gathers the selected entries of a stacked Q-vector.
template <typename Scalar>
VectorX<Scalar> apply_selection(const SelectionMatrix& m, const VectorX<Scalar>& v) {
  if (v.size() != m.cols()) {
    throw std::invalid_argument("apply_selection: vector length mismatch");
  }
  VectorX<Scalar> out(m.num_states);
  for (int s = 0; s < m.num_states; ++s) {
    out(s) = v(m.selected_col[static_cast<std::size_t>(s)]);
  }
  return out;
}

/**
 * Max absolute deviation between one scalar QVI step and its matrix form
 *   flatten(r^i) + gamma * P * M_{[a_k,b_k]} * flatten(Q^i)
 * over both players. The two routes share no arithmetic: the scalar step
 * loops over transitions, the matrix form multiplies the stacked operators.
 */
template <typename Scalar>
Scalar vector_qvi_residual(const MarkovGame<Scalar>& g, const QTensor<Scalar>& q1,
                           const QTensor<Scalar>& q2) {
  QviStepResult<Scalar> scalar_step = qvi_step(g, q1, q2);

  const MatrixX<Scalar> P = build_transition_matrix(g);
  const SelectionMatrix M = build_selection_matrix(
      scalar_step.pair.leader, scalar_step.pair.follower, g.num_follower_actions);

  QTensor<Scalar> r1 = QTensor<Scalar>::from_rewards(g, Player::leader);
  QTensor<Scalar> r2 = QTensor<Scalar>::from_rewards(g, Player::follower);

  const VectorX<Scalar> v1 =
      flatten(r1) + g.gamma * (P * apply_selection(M, flatten(q1))).eval();
  const VectorX<Scalar> v2 =
      flatten(r2) + g.gamma * (P * apply_selection(M, flatten(q2))).eval();

  const Scalar d1 = sup_norm((flatten(scalar_step.q1) - v1).eval());
  const Scalar d2 = sup_norm((flatten(scalar_step.q2) - v2).eval());
  return std::max(d1, d2);
}

}  // namespace sqvi
