#pragma once

#include <Eigen/Dense>

#include <string>

namespace sqvi {

/// Deterministic leader policy: one action index per state.
struct LeaderPolicy {
  Eigen::VectorXi action_for_state;

  int operator()(int s) const { return action_for_state(s); }
  Eigen::Index num_states() const { return action_for_state.size(); }
};

/// Deterministic follower policy: one action index per (state, leader action).
struct FollowerPolicy {
  Eigen::MatrixXi action_for_state_and_leader_action;  // S x A

  int operator()(int s, int a) const {
    return action_for_state_and_leader_action(s, a);
  }
  Eigen::Index num_states() const {
    return action_for_state_and_leader_action.rows();
  }
  Eigen::Index num_leader_actions() const {
    return action_for_state_and_leader_action.cols();
  }
};

struct PolicyPair {
  LeaderPolicy leader;
  FollowerPolicy follower;
};

inline bool operator==(const LeaderPolicy& x, const LeaderPolicy& y) {
  return x.action_for_state.size() == y.action_for_state.size() &&
         (x.action_for_state.array() == y.action_for_state.array()).all();
}
inline bool operator!=(const LeaderPolicy& x, const LeaderPolicy& y) { return !(x == y); }

inline bool operator==(const FollowerPolicy& x, const FollowerPolicy& y) {
  return x.action_for_state_and_leader_action.rows() ==
             y.action_for_state_and_leader_action.rows() &&
         x.action_for_state_and_leader_action.cols() ==
             y.action_for_state_and_leader_action.cols() &&
         (x.action_for_state_and_leader_action.array() ==
          y.action_for_state_and_leader_action.array())
             .all();
}
inline bool operator!=(const FollowerPolicy& x, const FollowerPolicy& y) { return !(x == y); }

inline bool operator==(const PolicyPair& x, const PolicyPair& y) {
  return x.leader == y.leader && x.follower == y.follower;
}
inline bool operator!=(const PolicyPair& x, const PolicyPair& y) { return !(x == y); }

/// Lexicographic order over (leader actions, follower actions row-major).
/// Used to merge enumeration results deterministically.
inline bool pair_less(const PolicyPair& x, const PolicyPair& y) {
  const auto& xl = x.leader.action_for_state;
  const auto& yl = y.leader.action_for_state;
  for (Eigen::Index s = 0; s < xl.size(); ++s) {
    if (xl(s) != yl(s)) return xl(s) < yl(s);
  }
  const auto& xf = x.follower.action_for_state_and_leader_action;
  const auto& yf = y.follower.action_for_state_and_leader_action;
  for (Eigen::Index s = 0; s < xf.rows(); ++s) {
    for (Eigen::Index a = 0; a < xf.cols(); ++a) {
      if (xf(s, a) != yf(s, a)) return xf(s, a) < yf(s, a);
    }
  }
  return false;
}

/// Compact trace encoding: 0-based action indices, one digit per entry when
/// every index fits in one digit, otherwise '-'-separated. Follower entries
/// are ordered (s, a) lexicographic.
inline std::string to_digits(const LeaderPolicy& p) {
  bool wide = (p.action_for_state.size() > 0) && (p.action_for_state.maxCoeff() > 9);
  std::string out;
  for (Eigen::Index s = 0; s < p.action_for_state.size(); ++s) {
    if (wide && s > 0) out += '-';
    out += std::to_string(p.action_for_state(s));
  }
  return out;
}

inline std::string to_digits(const FollowerPolicy& p) {
  const auto& m = p.action_for_state_and_leader_action;
  bool wide = (m.size() > 0) && (m.maxCoeff() > 9);
  std::string out;
  for (Eigen::Index s = 0; s < m.rows(); ++s) {
    for (Eigen::Index a = 0; a < m.cols(); ++a) {
      if (wide && !(s == 0 && a == 0)) out += '-';
      out += std::to_string(m(s, a));
    }
  }
  return out;
}

}  // namespace sqvi
