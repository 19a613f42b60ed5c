#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqvi/splitmix.hpp"

namespace sqvi {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Max absolute entry of an Eigen expression; zero for empty expressions.
template <typename Derived>
typename Derived::Scalar sup_norm(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? typename Derived::Scalar(0) : m.cwiseAbs().maxCoeff();
}

enum class Player { leader, follower };

/**
 * Tabular two-player general-sum Markov game.
 *
 * Layouts (all indices 0-based):
 *   transition       (S*A*B) x S, row (s*A + a)*B + b holds P(. | s,a,b)
 *   reward_leader    S x (A*B), column a*B + b
 *   reward_follower  S x (A*B), column a*B + b
 */
template <typename Scalar = double>
struct MarkovGame {
  using Matrix = MatrixX<Scalar>;

  int num_states = 0;
  int num_leader_actions = 0;
  int num_follower_actions = 0;
  Scalar gamma{0};
  Matrix transition;
  Matrix reward_leader;
  Matrix reward_follower;

  Eigen::Index num_joint() const {
    return Eigen::Index(num_states) * num_leader_actions * num_follower_actions;
  }
  Eigen::Index action_col(int a, int b) const {
    return Eigen::Index(a) * num_follower_actions + b;
  }
  Eigen::Index transition_row_index(int s, int a, int b) const {
    return (Eigen::Index(s) * num_leader_actions + a) * num_follower_actions + b;
  }

  Scalar p(int s, int a, int b, int s_next) const {
    return transition(transition_row_index(s, a, b), s_next);
  }
  auto transition_row(int s, int a, int b) const {
    return transition.row(transition_row_index(s, a, b));
  }
  Scalar r1(int s, int a, int b) const { return reward_leader(s, action_col(a, b)); }
  Scalar r2(int s, int a, int b) const { return reward_follower(s, action_col(a, b)); }
  const Matrix& reward(Player who) const {
    return who == Player::leader ? reward_leader : reward_follower;
  }
};

/**
 * One player's Q-function over (state, leader action, follower action).
 * Stored as an S x (A*B) matrix, column a*B + b, so the stacked Q-vector of
 * the matrix formulation is the column-major linearization of `values`.
 */
template <typename Scalar = double>
struct QTensor {
  using Matrix = MatrixX<Scalar>;

  Matrix values;
  Player player = Player::leader;
  int num_leader_actions = 0;
  int num_follower_actions = 0;

  int num_states() const { return static_cast<int>(values.rows()); }
  Eigen::Index size() const { return values.size(); }

  Scalar operator()(int s, int a, int b) const {
    return values(s, Eigen::Index(a) * num_follower_actions + b);
  }
  Scalar& operator()(int s, int a, int b) {
    return values(s, Eigen::Index(a) * num_follower_actions + b);
  }

  bool all_finite() const { return values.allFinite(); }

  template <typename S2>
  bool shape_matches(const MarkovGame<S2>& g) const {
    return values.rows() == g.num_states &&
           values.cols() == Eigen::Index(g.num_leader_actions) * g.num_follower_actions &&
           num_leader_actions == g.num_leader_actions &&
           num_follower_actions == g.num_follower_actions;
  }

  static QTensor zero(const MarkovGame<Scalar>& g, Player who) {
    QTensor q;
    q.values = Matrix::Zero(g.num_states,
                            Eigen::Index(g.num_leader_actions) * g.num_follower_actions);
    q.player = who;
    q.num_leader_actions = g.num_leader_actions;
    q.num_follower_actions = g.num_follower_actions;
    return q;
  }

  static QTensor from_rewards(const MarkovGame<Scalar>& g, Player who) {
    QTensor q = zero(g, who);
    q.values = g.reward(who);
    return q;
  }
};

template <typename Scalar>
Scalar sup_norm(const QTensor<Scalar>& q) {
  return sup_norm(q.values);
}

template <typename Scalar>
Scalar sup_diff(const QTensor<Scalar>& x, const QTensor<Scalar>& y) {
  return sup_norm((x.values - y.values).eval());
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationKind {
  shape_mismatch,
  gamma_out_of_range,
  reward_out_of_bounds,
  transition_entry_out_of_range,
  transition_row_sum,
  non_finite_entry,
};

template <typename Scalar = double>
struct Violation {
  ViolationKind kind;
  int s = -1, a = -1, b = -1;
  Scalar value{0};
  std::string detail;

  std::string message() const {
    auto idx = [this]() {
      return "(s=" + std::to_string(s) + ",a=" + std::to_string(a) +
             ",b=" + std::to_string(b) + ")";
    };
    switch (kind) {
      case ViolationKind::shape_mismatch:
        return "shape mismatch: " + detail;
      case ViolationKind::gamma_out_of_range:
        return "gamma=" + std::to_string(static_cast<double>(value)) +
               " outside [0,1)";
      case ViolationKind::reward_out_of_bounds:
        return "reward " + detail + idx() + " = " +
               std::to_string(static_cast<double>(value)) + " exceeds unit bound";
      case ViolationKind::transition_entry_out_of_range:
        return "transition entry at " + idx() + " = " +
               std::to_string(static_cast<double>(value)) + " outside [0,1]";
      case ViolationKind::transition_row_sum:
        return "transition row " + idx() + " sums to " +
               std::to_string(static_cast<double>(value)) + " (expected 1)";
      case ViolationKind::non_finite_entry:
        return "non-finite entry in " + detail + " at " + idx();
    }
    return "unknown violation";
  }
};

template <typename Scalar = double>
struct ValidationReport {
  std::vector<Violation<Scalar>> violations;

  bool ok() const { return violations.empty(); }

  std::string to_string() const {
    if (ok()) return "valid";
    std::string out;
    for (const auto& v : violations) {
      out += v.message();
      out += '\n';
    }
    return out;
  }
};

/// Checks shapes, gamma range, unit reward bound, transition entries and
/// row-stochasticity. Violations are reported, never thrown.
template <typename Scalar>
ValidationReport<Scalar> validate_game(const MarkovGame<Scalar>& g,
                                       Scalar row_sum_tol = Scalar(1e-9)) {
  ValidationReport<Scalar> report;
  auto add = [&report](Violation<Scalar> v) { report.violations.push_back(std::move(v)); };

  if (g.num_states <= 0 || g.num_leader_actions <= 0 || g.num_follower_actions <= 0) {
    add({ViolationKind::shape_mismatch, -1, -1, -1, Scalar(0),
         "dimensions must be positive"});
    return report;
  }
  const Eigen::Index joint = g.num_joint();
  const Eigen::Index ab = Eigen::Index(g.num_leader_actions) * g.num_follower_actions;
  if (g.transition.rows() != joint || g.transition.cols() != g.num_states) {
    add({ViolationKind::shape_mismatch, -1, -1, -1, Scalar(0),
         "transition is " + std::to_string(g.transition.rows()) + "x" +
             std::to_string(g.transition.cols()) + ", expected " +
             std::to_string(joint) + "x" + std::to_string(g.num_states)});
    return report;
  }
  for (const auto* rw : {&g.reward_leader, &g.reward_follower}) {
    if (rw->rows() != g.num_states || rw->cols() != ab) {
      add({ViolationKind::shape_mismatch, -1, -1, -1, Scalar(0),
           "reward tensor is " + std::to_string(rw->rows()) + "x" +
               std::to_string(rw->cols()) + ", expected " +
               std::to_string(g.num_states) + "x" + std::to_string(ab)});
      return report;
    }
  }

  if (!(g.gamma >= Scalar(0) && g.gamma < Scalar(1))) {
    add({ViolationKind::gamma_out_of_range, -1, -1, -1, g.gamma, ""});
  }

  for (int s = 0; s < g.num_states; ++s) {
    for (int a = 0; a < g.num_leader_actions; ++a) {
      for (int b = 0; b < g.num_follower_actions; ++b) {
        const Scalar v1 = g.r1(s, a, b);
        const Scalar v2 = g.r2(s, a, b);
        if (!std::isfinite(static_cast<double>(v1))) {
          add({ViolationKind::non_finite_entry, s, a, b, v1, "reward_leader"});
        } else if (std::abs(v1) > Scalar(1)) {
          add({ViolationKind::reward_out_of_bounds, s, a, b, v1, "r1"});
        }
        if (!std::isfinite(static_cast<double>(v2))) {
          add({ViolationKind::non_finite_entry, s, a, b, v2, "reward_follower"});
        } else if (std::abs(v2) > Scalar(1)) {
          add({ViolationKind::reward_out_of_bounds, s, a, b, v2, "r2"});
        }

        Scalar row_sum(0);
        bool row_ok = true;
        for (int s2 = 0; s2 < g.num_states; ++s2) {
          const Scalar p = g.p(s, a, b, s2);
          if (!std::isfinite(static_cast<double>(p))) {
            add({ViolationKind::non_finite_entry, s, a, b, p, "transition"});
            row_ok = false;
            break;
          }
          if (p < Scalar(0) || p > Scalar(1)) {
            add({ViolationKind::transition_entry_out_of_range, s, a, b, p, ""});
          }
          row_sum += p;
        }
        if (row_ok && std::abs(row_sum - Scalar(1)) > row_sum_tol) {
          add({ViolationKind::transition_row_sum, s, a, b, row_sum, ""});
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct GameDims {
  int num_states = 1;
  int num_leader_actions = 1;
  int num_follower_actions = 1;
};

/**
 * Deterministic random game. One SplitMix64 stream seeded with `seed`,
 * consumed in this fixed counter order:
 *   [0, N)        leader rewards, (s,a,b) lexicographic, uniform [-1,1)
 *   [N, 2N)       follower rewards, same order
 *   [2N, 2N+N*S)  transition rows, (s,a,b) lexicographic, S uniform [0,1)
 *                 draws per row, normalized to sum 1
 * with N = S*A*B. A row drawn all-zero falls back to the uniform distribution.
 */
template <typename Scalar = double>
MarkovGame<Scalar> random_game(std::uint64_t seed, GameDims dims, Scalar gamma) {
  if (dims.num_states <= 0 || dims.num_leader_actions <= 0 ||
      dims.num_follower_actions <= 0) {
    throw std::invalid_argument("random_game: dimensions must be positive");
  }
  if (!(gamma >= Scalar(0) && gamma < Scalar(1))) {
    throw std::invalid_argument("random_game: gamma must lie in [0,1)");
  }

  MarkovGame<Scalar> g;
  g.num_states = dims.num_states;
  g.num_leader_actions = dims.num_leader_actions;
  g.num_follower_actions = dims.num_follower_actions;
  g.gamma = gamma;

  const int S = dims.num_states;
  const Eigen::Index ab =
      Eigen::Index(dims.num_leader_actions) * dims.num_follower_actions;
  const Eigen::Index joint = g.num_joint();

  SplitMixStream stream(seed);
  g.reward_leader.resize(S, ab);
  g.reward_follower.resize(S, ab);
  for (auto* rw : {&g.reward_leader, &g.reward_follower}) {
    for (int s = 0; s < S; ++s) {
      for (Eigen::Index c = 0; c < ab; ++c) {
        (*rw)(s, c) = Scalar(stream.next_symmetric());
      }
    }
  }

  g.transition.resize(joint, S);
  for (Eigen::Index row = 0; row < joint; ++row) {
    Scalar row_sum(0);
    for (int s2 = 0; s2 < S; ++s2) {
      const Scalar u = Scalar(stream.next_unit());
      g.transition(row, s2) = u;
      row_sum += u;
    }
    if (row_sum > Scalar(0)) {
      g.transition.row(row) /= row_sum;
    } else {
      g.transition.row(row).setConstant(Scalar(1) / Scalar(S));
    }
  }
  return g;
}

/// Bundled single-state 2x2 example game with a self-loop transition
/// (the `paper-sec5` builtin of the CLI).
template <typename Scalar = double>
MarkovGame<Scalar> single_state_example_game() {
  MarkovGame<Scalar> g;
  g.num_states = 1;
  g.num_leader_actions = 2;
  g.num_follower_actions = 2;
  g.gamma = Scalar(0.8);
  g.transition = MatrixX<Scalar>::Ones(4, 1);
  g.reward_leader.resize(1, 4);
  g.reward_leader << Scalar(0.8), Scalar(0.2), Scalar(0.5), Scalar(0.9);
  g.reward_follower.resize(1, 4);
  g.reward_follower << Scalar(0.3), Scalar(0.9), Scalar(0.8), Scalar(0.1);
  return g;
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

/// FNV-1a over dims, gamma and all tensor entries (as IEEE doubles,
/// lexicographic index order). Identifies a game in traces and summaries.
template <typename Scalar>
std::uint64_t game_hash(const MarkovGame<Scalar>& g) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto mix_double = [&h](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    h = fnv1a64(&bits, sizeof(bits), h);
  };
  const std::int64_t dims[3] = {g.num_states, g.num_leader_actions,
                                g.num_follower_actions};
  h = fnv1a64(dims, sizeof(dims), h);
  mix_double(static_cast<double>(g.gamma));
  for (const auto* m : {&g.reward_leader, &g.reward_follower, &g.transition}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) {
        mix_double(static_cast<double>((*m)(r, c)));
      }
    }
  }
  return h;
}

}  // namespace sqvi
