// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Stochastic triggering policies and their training. The policy is a
// two-layer network over the normalized sufficient statistic (x, y, l)
// producing the trigger probability through a sigmoid. Training is
// episodic stochastic gradient descent with either the plain score-function
// (REINFORCE) estimator or the entropy-regularized estimator, whose
// objective subtracts beta times the per-step policy entropy and whose
// gradient carries an extra correction term
//   beta * E[ sum_t grad pi(1|s) log pi(1|s) + grad pi(0|s) log pi(0|s) ]
// that the standard policy-gradient theorem does not produce.

#ifndef HESTIA_POLICY_HPP_
#define HESTIA_POLICY_HPP_

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "hestia/common.hpp"
#include "hestia/trigger.hpp"

namespace hestia::policy {

constexpr double kProbClamp = 1e-6;

/// Feature map for the sufficient statistic: both state copies are centered
/// and scaled componentwise, the hold counter is scaled by the cap.
struct Normalizer {
  Vec center;
  Vec scale;
  int t_s = 1;

  int feature_dim() const { return static_cast<int>(2 * center.size() + 1); }

  Vec features(const trigger::TriggerState& s) const {
    Vec f(feature_dim());
    const auto n = center.size();
    f.head(n) = (s.x - center).cwiseQuotient(scale);
    f.segment(n, n) = (s.y - center).cwiseQuotient(scale);
    f(2 * n) = static_cast<double>(s.l) / static_cast<double>(t_s);
    return f;
  }
};

struct PolicyParams {
  Mat w1;   // hidden x input
  Vec b1;   // hidden
  Vec w2;   // hidden
  double b2 = 0.0;

  static PolicyParams zeros(int input_dim, int hidden = 100) {
    PolicyParams p;
    p.w1 = Mat::Zero(hidden, input_dim);
    p.b1 = Vec::Zero(hidden);
    p.w2 = Vec::Zero(hidden);
    p.b2 = 0.0;
    return p;
  }

  static PolicyParams random(int input_dim, Rng& rng, int hidden = 100,
                             double stddev = 0.1) {
    PolicyParams p = zeros(input_dim, hidden);
    for (int i = 0; i < p.w1.rows(); ++i)
      for (int j = 0; j < p.w1.cols(); ++j) p.w1(i, j) = rng.normal(0, stddev);
    for (int i = 0; i < p.w2.size(); ++i) p.w2(i) = rng.normal(0, stddev);
    return p;
  }

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int num_params() const {
    return hidden_dim() * input_dim() + 2 * hidden_dim() + 1;
  }

  Vec flatten() const {
    Vec v(num_params());
    int k = 0;
    for (int i = 0; i < w1.rows(); ++i)
      for (int j = 0; j < w1.cols(); ++j) v(k++) = w1(i, j);
    v.segment(k, b1.size()) = b1;
    k += static_cast<int>(b1.size());
    v.segment(k, w2.size()) = w2;
    k += static_cast<int>(w2.size());
    v(k) = b2;
    return v;
  }

  void unflatten(const Vec& v) {
    int k = 0;
    for (int i = 0; i < w1.rows(); ++i)
      for (int j = 0; j < w1.cols(); ++j) w1(i, j) = v(k++);
    b1 = v.segment(k, b1.size());
    k += static_cast<int>(b1.size());
    w2 = v.segment(k, w2.size());
    k += static_cast<int>(w2.size());
    b2 = v(k);
  }
};

struct Forward {
  double prob = 0.5;   // clamped trigger probability
  double logit = 0.0;
  Vec hidden;          // tanh activations
};

inline Forward policy_forward(const PolicyParams& p, const Vec& features) {
  Forward f;
  f.hidden = (p.w1 * features + p.b1).array().tanh().matrix();
  f.logit = p.w2.dot(f.hidden) + p.b2;
  const double raw = 1.0 / (1.0 + std::exp(-f.logit));
  f.prob = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
  return f;
}

inline double policy_prob(const PolicyParams& p, const Vec& features) {
  return policy_forward(p, features).prob;
}

/// Gradient of the pre-sigmoid logit with respect to the flattened
/// parameters.
inline Vec logit_gradient(const PolicyParams& p, const Vec& features,
                          const Forward& f) {
  Vec g(p.num_params());
  const Vec dh = p.w2.cwiseProduct(
      (1.0 - f.hidden.array().square()).matrix());  // dz/d(pre-activation)
  int k = 0;
  for (int i = 0; i < p.w1.rows(); ++i)
    for (int j = 0; j < p.w1.cols(); ++j) g(k++) = dh(i) * features(j);
  g.segment(k, p.b1.size()) = dh;
  k += static_cast<int>(p.b1.size());
  g.segment(k, p.w2.size()) = f.hidden;
  k += static_cast<int>(p.w2.size());
  g(k) = 1.0;
  return g;
}

/// grad log pi(a | s) = (a - p) * grad z for the sigmoid policy.
inline Vec log_prob_gradient(const PolicyParams& p, const Vec& features,
                             int action) {
  const Forward f = policy_forward(p, features);
  return (static_cast<double>(action) - f.prob) *
         logit_gradient(p, features, f);
}

/// Binary entropy, natural log. The probability clamp keeps this finite.
/// Evaluated symmetrically in {p, 1-p} so the p <-> 1-p identity is exact.
inline double entropy_of(double prob) {
  const double a = std::min(prob, 1.0 - prob);
  const double b = std::max(prob, 1.0 - prob);
  return -a * std::log(a) - b * std::log(b);
}

/// epsilon-randomized wrapper: follow the given action with probability
/// 1 - epsilon, otherwise transmit or hold with probability epsilon/2 each.
inline int epsilon_randomize(int a_star, double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) throw ArgError("epsilon must be in [0,1]");
  const double u = rng.next_double();
  if (u < 1.0 - epsilon) return a_star;
  return u < 1.0 - epsilon / 2.0 ? 1 : 0;
}

struct StepRecord {
  Vec features;
  int action = 0;
  double stage_cost = 0.0;
  double log_prob = 0.0;
  double entropy = 0.0;
  // False for actions not drawn from the policy (forced triggers); those
  // steps contribute cost but no score or entropy terms.
  bool policy_backed = true;
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;
  double terminal_cost = 0.0;
  std::size_t total_bytes = 0;

  double total_cost() const {
    double c = terminal_cost;
    for (const auto& s : steps) c += s.stage_cost;
    return c;
  }

  int triggers() const {
    int n = 0;
    for (const auto& s : steps) n += s.action;
    return n;
  }

  double mean_entropy() const {
    if (steps.empty()) return 0.0;
    double e = 0.0;
    for (const auto& s : steps) e += s.entropy;
    return e / static_cast<double>(steps.size());
  }
};

struct LearnerConfig {
  double beta = 0.0;
  double epsilon = 0.0;
  double learning_rate = 1e-3;
  int iterations = 200;
  int batch_size = 8;
  bool subtract_baseline = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (beta < 0.0) throw ConfigError("beta must be nonnegative");
    if (epsilon < 0.0 || epsilon > 1.0)
      throw ConfigError("epsilon must be in [0,1]");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (iterations < 1 || batch_size < 1)
      throw ConfigError("iterations and batch size must be positive");
  }
};

/// Plain score-function estimator of the episodic cost gradient:
///   mean over the batch of (total cost - baseline) * sum_t grad log pi.
inline Vec reinforce_gradient(const PolicyParams& p,
                              const std::vector<EpisodeTrace>& traces,
                              const LearnerConfig& cfg) {
  if (traces.empty()) throw ArgError("empty trace batch");
  double baseline = 0.0;
  if (cfg.subtract_baseline) {
    for (const auto& t : traces) baseline += t.total_cost();
    baseline /= static_cast<double>(traces.size());
  }
  Vec grad = Vec::Zero(p.num_params());
  for (const auto& t : traces) {
    Vec score = Vec::Zero(p.num_params());
    for (const auto& s : t.steps) {
      if (!s.policy_backed) continue;
      score += log_prob_gradient(p, s.features, s.action);
    }
    grad += (t.total_cost() - baseline) * score;
  }
  return grad / static_cast<double>(traces.size());
}

/// Entropy-regularized estimator. The per-trajectory loss subtracts
/// beta * entropy at every step, and the estimator adds the correction term
/// described in the header comment; with beta = 0 it reduces exactly to
/// reinforce_gradient.
inline Vec entropy_regularized_gradient(const PolicyParams& p,
                                        const std::vector<EpisodeTrace>& traces,
                                        const LearnerConfig& cfg) {
  if (traces.empty()) throw ArgError("empty trace batch");
  auto regularized_cost = [&](const EpisodeTrace& t) {
    double c = t.terminal_cost;
    for (const auto& s : t.steps) c += s.stage_cost - cfg.beta * s.entropy;
    return c;
  };
  double baseline = 0.0;
  if (cfg.subtract_baseline) {
    for (const auto& t : traces) baseline += regularized_cost(t);
    baseline /= static_cast<double>(traces.size());
  }
  Vec grad = Vec::Zero(p.num_params());
  for (const auto& t : traces) {
    Vec score = Vec::Zero(p.num_params());
    Vec correction = Vec::Zero(p.num_params());
    for (const auto& s : t.steps) {
      if (!s.policy_backed) continue;
      const Forward f = policy_forward(p, s.features);
      const Vec dz = logit_gradient(p, s.features, f);
      score += (static_cast<double>(s.action) - f.prob) * dz;
      // grad pi(1|s) log pi(1|s) + grad pi(0|s) log pi(0|s)
      //   = p(1-p) (log p - log(1-p)) grad z.
      correction += f.prob * (1.0 - f.prob) *
                    (std::log(f.prob) - std::log(1.0 - f.prob)) * dz;
    }
    grad += (regularized_cost(t) - baseline) * score + cfg.beta * correction;
  }
  return grad / static_cast<double>(traces.size());
}

/// Closed-loop episode generator: rolls one episode under the given policy
/// parameters, sampling actions and recording per-step data.
using EpisodeGenerator =
    std::function<EpisodeTrace(const PolicyParams&, Rng&)>;

struct CurvePoint {
  int iteration = 0;
  double mean_cost = 0.0;
  double comm_rate = 0.0;
  double mean_entropy = 0.0;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
};

/// Episodic SGD with the selected estimator. Deterministic given the seed.
inline TrainResult train(PolicyParams& params, const EpisodeGenerator& env,
                         const LearnerConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  TrainResult result;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<EpisodeTrace> traces;
    traces.reserve(cfg.batch_size);
    double cost_sum = 0.0;
    long step_sum = 0, trigger_sum = 0;
    double entropy_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Rng episode_rng = root.derive(
          static_cast<std::uint64_t>(iter) * cfg.batch_size + b + 1);
      traces.push_back(env(params, episode_rng));
      const auto& t = traces.back();
      cost_sum += t.total_cost();
      step_sum += static_cast<long>(t.steps.size());
      trigger_sum += t.triggers();
      entropy_sum += t.mean_entropy();
    }
    const Vec grad = cfg.beta > 0.0
                         ? entropy_regularized_gradient(params, traces, cfg)
                         : reinforce_gradient(params, traces, cfg);
    if (!grad.allFinite()) throw StateError("training diverged: gradient is not finite");
    Vec theta = params.flatten() - cfg.learning_rate * grad;
    if (!theta.allFinite()) throw StateError("training diverged: parameters not finite");
    params.unflatten(theta);

    CurvePoint pt;
    pt.iteration = iter;
    pt.mean_cost = cost_sum / cfg.batch_size;
    pt.comm_rate = step_sum > 0 ? static_cast<double>(trigger_sum) / step_sum : 0.0;
    pt.mean_entropy = entropy_sum / cfg.batch_size;
    result.curve.push_back(pt);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Trained policy serialization
// ---------------------------------------------------------------------------

constexpr std::uint32_t kPolicyMagic = 0x50545348;  // "HSTP"
constexpr std::uint16_t kPolicyVersion = 1;

struct TrainedPolicy {
  PolicyParams params;
  Normalizer normalizer;
  std::uint64_t config_hash = 0;
};

namespace detail {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(const std::uint8_t*& p, const std::uint8_t* end) {
  if (p + sizeof(T) > end) throw ArgError("truncated policy blob");
  T v;
  std::memcpy(&v, p, sizeof(T));
  p += sizeof(T);
  return v;
}

inline void put_vec(std::vector<std::uint8_t>& out, const Vec& v) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(v.size()));
  for (int i = 0; i < v.size(); ++i) put<double>(out, v(i));
}

inline Vec get_vec(const std::uint8_t*& p, const std::uint8_t* end) {
  const auto n = get<std::uint32_t>(p, end);
  Vec v(n);
  for (std::uint32_t i = 0; i < n; ++i) v(i) = get<double>(p, end);
  return v;
}

}  // namespace detail

/// Versioned binary: magic, version, dims, flattened weights, normalization
/// constants, configuration hash.
inline std::vector<std::uint8_t> serialize(const TrainedPolicy& tp) {
  std::vector<std::uint8_t> out;
  detail::put<std::uint32_t>(out, kPolicyMagic);
  detail::put<std::uint16_t>(out, kPolicyVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tp.params.input_dim()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tp.params.hidden_dim()));
  detail::put_vec(out, tp.params.flatten());
  detail::put_vec(out, tp.normalizer.center);
  detail::put_vec(out, tp.normalizer.scale);
  detail::put<std::int32_t>(out, tp.normalizer.t_s);
  detail::put<std::uint64_t>(out, tp.config_hash);
  return out;
}

inline TrainedPolicy deserialize_policy(std::span<const std::uint8_t> bytes) {
  const std::uint8_t* p = bytes.data();
  const std::uint8_t* end = p + bytes.size();
  if (detail::get<std::uint32_t>(p, end) != kPolicyMagic)
    throw ArgError("not a trained policy blob");
  if (detail::get<std::uint16_t>(p, end) != kPolicyVersion)
    throw ArgError("unsupported policy version");
  const auto input_dim = detail::get<std::uint32_t>(p, end);
  const auto hidden = detail::get<std::uint32_t>(p, end);
  TrainedPolicy tp;
  tp.params = PolicyParams::zeros(static_cast<int>(input_dim),
                                  static_cast<int>(hidden));
  tp.params.unflatten(detail::get_vec(p, end));
  tp.normalizer.center = detail::get_vec(p, end);
  tp.normalizer.scale = detail::get_vec(p, end);
  tp.normalizer.t_s = detail::get<std::int32_t>(p, end);
  tp.config_hash = detail::get<std::uint64_t>(p, end);
  return tp;
}

inline void save_policy(const TrainedPolicy& tp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write policy file: " + path);
  const auto bytes = serialize(tp);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline TrainedPolicy load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open policy file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_policy(bytes);
}

}  // namespace hestia::policy

#endif  // HESTIA_POLICY_HPP_
