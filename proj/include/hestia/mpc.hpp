// Copyright (c) 2026 The hestia Authors.
// SPDX-License-Identifier: Apache-2.0
//
// Receding-horizon regulation as a dense box-constrained QP in the stacked
// input trajectory, solved with the projected fast gradient method.
//
// For the model x_{k+1} = A x_k + B u_k + m_k and the averaged tracking
// objective (1/T) sum (x_{k+1}-r)'Q(x_{k+1}-r) + u_k'R u_k, substituting the
// dynamics gives gradient  H u + F x0 + g  with
//   H = (2/T)(Su'Qb Su + Rb),  F = (2/T) Su'Qb Sx,
//   g = (2/T) Su'Qb (Sm - 1 (x) r),
// where Sx, Su, Sm stack the free response, the forced response and the
// accumulated disturbance. The solver needs only H/L, F/L, g/L and the box.

#ifndef HESTIA_MPC_HPP_
#define HESTIA_MPC_HPP_

#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "hestia/common.hpp"

namespace hestia::mpc {

struct MpcProblem {
  Mat A, B;       // prediction model
  Mat Q, R;       // positive definite weights
  Vec x_ref;      // reference
  int horizon = 0;
  std::vector<Vec> mean_disturbance;  // per-step m_k; size 1 means constant
  Vec box_lo, box_hi;                 // per input, repeated across the horizon

  void validate() const {
    if (horizon <= 0) throw ConfigError("horizon must be positive");
    const auto n = A.rows();
    const auto m = B.cols();
    if (A.cols() != n || B.rows() != n) throw ConfigError("A/B shape mismatch");
    if (Q.rows() != n || Q.cols() != n || R.rows() != m || R.cols() != m)
      throw ConfigError("weight shape mismatch");
    if (x_ref.size() != n) throw ConfigError("reference size mismatch");
    if (box_lo.size() != m || box_hi.size() != m)
      throw ConfigError("box bound size mismatch");
    if ((box_lo.array() > box_hi.array()).any())
      throw ConfigError("box lower bound exceeds upper bound");
    if (mean_disturbance.empty())
      throw ConfigError("mean disturbance trajectory required");
    for (const auto& mk : mean_disturbance)
      if (mk.size() != n) throw ConfigError("mean disturbance size mismatch");
    Eigen::LLT<Mat> llt_q(Q), llt_r(R);
    if (llt_q.info() != Eigen::Success || llt_r.info() != Eigen::Success)
      throw ConfigError("Q and R must be symmetric positive definite");
  }

  const Vec& mean_at(int k) const {
    return mean_disturbance.size() == 1 ? mean_disturbance[0]
                                        : mean_disturbance.at(k);
  }
};

struct CondensedQP {
  Mat H;                // Hessian of the condensed objective
  Mat state_coupling;   // F: gradient = H u + F x0 + offset
  Vec offset;           // g
  double L = 0.0;       // lambda_max(H)
  double eta = 0.0;     // (sqrt(kappa)-1)/(sqrt(kappa)+1)
  Vec lo, hi;           // stacked box
  double constant = 0.0;  // objective constant (x0-independent part)
  Mat x0_quadratic;     // objective term x0' M x0 (for exact objectives)
  Vec x0_linear;        // objective term c' x0
  // Affine map from a stacked per-step disturbance window to the offset,
  // so receding-horizon callers can refresh g without re-condensing.
  Mat mean_to_offset;
  Vec offset_ref_part;

  int dim() const { return static_cast<int>(H.rows()); }

  /// Offset vector for a new window of per-step mean disturbances.
  Vec offset_for(const std::vector<Vec>& window) const {
    const auto n = state_coupling.cols();
    const int horizon = static_cast<int>(mean_to_offset.cols() / n);
    if (static_cast<int>(window.size()) != horizon)
      throw ArgError("mean window length does not match the horizon");
    Vec stacked(n * horizon);
    for (int k = 0; k < horizon; ++k) stacked.segment(k * n, n) = window[k];
    return mean_to_offset * stacked + offset_ref_part;
  }

  /// Condensed objective value including all x0-dependent terms, equal to
  /// the horizon sum of the stage costs.
  double objective(const Vec& u, const Vec& x0) const {
    return 0.5 * u.dot(H * u) + u.dot(state_coupling * x0 + offset) +
           x0.dot(x0_quadratic * x0) + x0_linear.dot(x0) + constant;
  }

  Vec gradient(const Vec& u, const Vec& x0) const {
    return H * u + state_coupling * x0 + offset;
  }
};

inline CondensedQP condense(const MpcProblem& p) {
  p.validate();
  const int n = static_cast<int>(p.A.rows());
  const int m = static_cast<int>(p.B.cols());
  const int T = p.horizon;

  // X = Sx x0 + Su U + Sm with X = [x_1; ...; x_T].
  Mat sx(n * T, n), su = Mat::Zero(n * T, m * T);
  Vec sm(n * T);
  Mat apow = p.A;
  Vec acc = p.mean_at(0);
  for (int i = 0; i < T; ++i) {
    sx.middleRows(i * n, n) = apow;
    if (i > 0) acc = p.A * acc + p.mean_at(i);
    sm.segment(i * n, n) = acc;
    Mat block = p.B;
    for (int j = i; j >= 0; --j) {
      su.block(i * n, j * m, n, m) = block;
      if (j > 0) block = p.A * block;
    }
    if (i + 1 < T) apow = p.A * apow;
  }

  Mat qb = Mat::Zero(n * T, n * T);
  Mat rb = Mat::Zero(m * T, m * T);
  for (int i = 0; i < T; ++i) {
    qb.block(i * n, i * n, n, n) = p.Q;
    rb.block(i * m, i * m, m, m) = p.R;
  }
  Vec ref(n * T);
  for (int i = 0; i < T; ++i) ref.segment(i * n, n) = p.x_ref;

  const double w = 2.0 / static_cast<double>(T);
  CondensedQP qp;
  qp.H = w * (su.transpose() * qb * su + rb);
  qp.H = 0.5 * (qp.H + qp.H.transpose());  // enforce exact symmetry
  qp.state_coupling = w * su.transpose() * qb * sx;
  qp.offset = w * su.transpose() * qb * (sm - ref);
  qp.x0_quadratic = 0.5 * w * sx.transpose() * qb * sx;
  qp.x0_linear = w * sx.transpose() * qb * (sm - ref);
  qp.constant = 0.5 * w * (sm - ref).dot(qb * (sm - ref));

  // Sm = sm_map * stacked window: block row i accumulates A^(i-j) m_j.
  Mat sm_map = Mat::Zero(n * T, n * T);
  for (int i = 0; i < T; ++i) {
    Mat block = Mat::Identity(n, n);
    for (int j = i; j >= 0; --j) {
      sm_map.block(i * n, j * n, n, n) = block;
      if (j > 0) block = p.A * block;
    }
  }
  qp.mean_to_offset = w * su.transpose() * qb * sm_map;
  qp.offset_ref_part = -w * su.transpose() * qb * ref;

  Eigen::SelfAdjointEigenSolver<Mat> eig(qp.H);
  if (eig.info() != Eigen::Success)
    throw ConfigError("eigendecomposition of the condensed Hessian failed");
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (lmin <= 0.0)
    throw ConfigError("condensed Hessian is not positive definite");
  qp.L = lmax;
  const double sqrt_kappa = std::sqrt(lmax / lmin);
  qp.eta = (sqrt_kappa - 1.0) / (sqrt_kappa + 1.0);

  qp.lo.resize(m * T);
  qp.hi.resize(m * T);
  for (int i = 0; i < T; ++i) {
    qp.lo.segment(i * m, m) = p.box_lo;
    qp.hi.segment(i * m, m) = p.box_hi;
  }
  return qp;
}

/// Componentwise clamp to [lo, hi].
inline Vec project_box(const Vec& d, const Vec& lo, const Vec& hi) {
  return d.cwiseMax(lo).cwiseMin(hi);
}

/// Projected fast gradient method. One iteration computes
///   d = (I - H/L) xi - (F/L) x0 - g/L,
/// clamps d to the box and applies the momentum update
///   xi+ = (1+eta) u+ - eta u.
/// The optional per-iteration callback observes every iterate (used by the
/// feasibility and trend properties in the tests).
template <typename Callback = std::nullptr_t>
Vec fgm_solve(const CondensedQP& qp, const Vec& x0, const Vec& u_init, int k_max,
              Callback&& per_iterate = nullptr) {
  if (k_max <= 0) throw ArgError("iteration count must be positive");
  if (u_init.size() != qp.dim()) throw ArgError("warm start size mismatch");
  if (((u_init.array() < qp.lo.array()) || (u_init.array() > qp.hi.array()))
          .any())
    throw ArgError("warm start outside the box");

  const Vec constant = (qp.state_coupling * x0 + qp.offset) / qp.L;
  Vec u = u_init;
  Vec xi = u_init;
  for (int k = 0; k < k_max; ++k) {
    const Vec d = xi - (qp.H * xi) / qp.L - constant;
    const Vec u_next = project_box(d, qp.lo, qp.hi);
    xi = (1.0 + qp.eta) * u_next - qp.eta * u;
    u = u_next;
    if constexpr (!std::is_same_v<std::decay_t<Callback>, std::nullptr_t>)
      per_iterate(k, u);
  }
  return u;
}

/// The HVAC unit executes the larger of the two per-zone flow requests.
inline Vec arbitrate_flows(const Vec& flow_a, const Vec& flow_b) {
  if (flow_a.size() != flow_b.size()) throw ArgError("flow size mismatch");
  if (flow_a.minCoeff() < 0.0 || flow_b.minCoeff() < 0.0)
    throw ArgError("flows must be nonnegative");
  return flow_a.cwiseMax(flow_b);
}

/// Warm start for the next trigger: shift the stored plan by the elapsed
/// number of samples, repeat the last block, clamp into the box.
inline Vec shift_plan(const CondensedQP& qp, const Vec& plan, int shift,
                      int block) {
  const int dim = qp.dim();
  Vec out(dim);
  for (int i = 0; i < dim; i += block) {
    const int src = std::min(i + shift * block, dim - block);
    out.segment(i, block) = plan.segment(src, block);
  }
  return project_box(out, qp.lo, qp.hi);
}

}  // namespace hestia::mpc

#endif  // HESTIA_MPC_HPP_
