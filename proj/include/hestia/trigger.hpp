// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Event-triggering layer. The triggering decision at each sample sees the
// sufficient statistic (x, y, l): the current state, the last communicated
// state and the number of samples since that communication. Holding (a=0)
// replays the stored input plan at offset l; triggering (a=1) communicates,
// solves fresh MPC problems and resets (y, l).

#ifndef HESTIA_TRIGGER_HPP_
#define HESTIA_TRIGGER_HPP_

#include <utility>

#include "hestia/common.hpp"

namespace hestia::trigger {

struct TriggerState {
  Vec x;     // current stacked plant state
  Vec y;     // last communicated state
  int l = 0; // samples since last communication
};

struct TriggerConfig {
  double lambda = 0.0;  // communication penalty
  int t_s = 7;          // forced-trigger cap
  Mat Q, R;             // stage cost weights
  Vec x_ref;
  int horizon = 0;      // episode length H

  void validate() const {
    if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
    if (t_s < 1) throw ConfigError("forced-trigger cap must be at least 1");
    if (horizon < 1) throw ConfigError("episode horizon must be positive");
    if (Q.rows() != Q.cols() || Q.rows() != x_ref.size())
      throw ConfigError("Q/x_ref dimension mismatch");
    if (R.rows() != R.cols()) throw ConfigError("R must be square");
  }
};

/// Control sequence received at the last trigger, one column per offset.
struct StoredPlan {
  Mat inputs;  // n_u x T

  int length() const { return static_cast<int>(inputs.cols()); }

  Vec at(int offset) const {
    if (offset < 0 || offset >= length())
      throw StateError("stored plan does not cover the requested offset");
    return inputs.col(offset);
  }
};

/// Markovian update of the augmented state:
///   y+ = (1-a) y + a x,   l+ = (1-a)(l+1),   x+ = x_next.
inline TriggerState advance_trigger_state(const TriggerState& s, int a,
                                          const Vec& x_next) {
  TriggerState next;
  next.x = x_next;
  next.y = a ? s.x : s.y;
  next.l = a ? 0 : s.l + 1;
  return next;
}

/// Stage cost of the communication-aware control problem:
///   (x - xr)' Q (x - xr) + u' R u + lambda a.
inline double stage_cost(const TriggerState& s, const Vec& u, int a,
                         const TriggerConfig& cfg) {
  const Vec dx = s.x - cfg.x_ref;
  return dx.dot(cfg.Q * dx) + u.dot(cfg.R * u) + cfg.lambda * a;
}

/// Terminal cost: the quadratic state term only.
inline double terminal_cost(const Vec& x, const TriggerConfig& cfg) {
  const Vec dx = x - cfg.x_ref;
  return dx.dot(cfg.Q * dx);
}

/// Communication is forced once the hold counter reaches the cap, so a
/// stored plan of length T >= t_s always covers the replay offset.
inline bool forced_trigger(const TriggerState& s, const TriggerConfig& cfg) {
  return s.l >= cfg.t_s;
}

/// Threshold baseline: trigger when the infinity norm of the deviation from
/// the last communicated state exceeds alpha.
inline int threshold_policy(const TriggerState& s, double alpha) {
  if (alpha < 0.0) throw ArgError("threshold must be nonnegative");
  return (s.x - s.y).cwiseAbs().maxCoeff() > alpha ? 1 : 0;
}

/// Input selection: fresh plan head on a trigger, stored plan at offset l
/// otherwise.
inline Vec select_input(const TriggerState& s, int a, const StoredPlan& stored,
                        const StoredPlan& fresh) {
  return a ? fresh.at(0) : stored.at(s.l);
}

}  // namespace hestia::trigger

#endif  // HESTIA_TRIGGER_HPP_
