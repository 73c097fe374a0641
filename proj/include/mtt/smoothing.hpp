#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mtt/common.hpp"
#include "mtt/data.hpp"
#include "mtt/kalman.hpp"
#include "mtt/model.hpp"
#include "mtt/stats.hpp"

namespace mtt {

// Step sizes for the smoothing recursions. gamma = 1 keeps the exact
// cumulative recursion; gamma < 1 discounts carried terms by (1 - gamma) and
// scales fresh increments by gamma. The slow rate drives the transition
// statistics (m = 3, 4, 5) and the duplicated survival count; everything else
// runs at the fast rate.
struct SmoothGammas {
  double fast = 1.0;
  double slow = 1.0;
  SmoothGammas() = default;
  SmoothGammas(double g) : fast(g), slow(g) {}
  SmoothGammas(double f, double s) : fast(f), slow(s) {}
};

namespace detail {
inline double carry_coeff(double gamma) { return gamma == 1.0 ? 1.0 : 1.0 - gamma; }
}  // namespace detail

// One quadratic form T(x) = x^T P x + q^T x + r.
struct QuadForm {
  Mat4 P = Mat4::Zero();
  Vec4 q = Vec4::Zero();
  double r = 0.0;
};

// Linear-only form for the statistics whose P stays identically zero.
struct LinForm {
  Vec4 q = Vec4::Zero();
  double r = 0.0;
};

inline constexpr int kSymPairs = kStateDim * (kStateDim + 1) / 2;
inline constexpr int kFullPairs = kStateDim * kStateDim;
inline constexpr int kObsPairs = kStateDim * kObsDim;

// Position of (i, j) with i <= j in the packed upper triangle.
inline constexpr int sym_index(int i, int j) { return i * kStateDim - i * (i + 1) / 2 + j; }

// Per-target recursion variables for the seven x-dependent statistics:
//   m1  detections:  sum c_d x x^T         (symmetric, stored for j >= i)
//   m2  detections:  sum c_d x y^T         (q, r only)
//   m3  transitions: sum x_prev x_prev^T   (symmetric)
//   m4  transitions: sum x_next x_next^T   (symmetric)
//   m5  transitions: sum x_prev x_next^T   (all index pairs)
//   m6  birth:       x_birth               (q, r only)
//   m7  birth:       x_birth x_birth^T     (symmetric)
struct RecursionVars {
  std::array<QuadForm, kSymPairs> m1, m3, m4, m7;
  std::array<QuadForm, kFullPairs> m5;
  std::array<LinForm, kObsPairs> m2;
  std::array<LinForm, kStateDim> m6;
};

// Values of the seven statistics for one target (or an accumulation thereof).
struct SmoothedStats {
  Mat4 m1 = Mat4::Zero();
  Mat42 m2 = Mat42::Zero();
  Mat4 m3 = Mat4::Zero();
  Mat4 m4 = Mat4::Zero();
  Mat4 m5 = Mat4::Zero();
  Vec4 m6 = Vec4::Zero();
  Mat4 m7 = Mat4::Zero();
};

inline SmoothedStats& operator+=(SmoothedStats& a, const SmoothedStats& b) {
  a.m1 += b.m1;
  a.m2 += b.m2;
  a.m3 += b.m3;
  a.m4 += b.m4;
  a.m5 += b.m5;
  a.m6 += b.m6;
  a.m7 += b.m7;
  return a;
}

// Initial conditions at a target's birth step.
inline RecursionVars init_vars(int c_d, const std::optional<Vec>& y) {
  RecursionVars v;
  for (int i = 0; i < kStateDim; ++i) {
    for (int j = i; j < kStateDim; ++j) {
      if (c_d) v.m1[sym_index(i, j)].P(i, j) = 1.0;
      v.m7[sym_index(i, j)].P(i, j) = 1.0;
    }
    if (c_d)
      for (int j = 0; j < kObsDim; ++j) v.m2[i * kObsDim + j].q(i) = (*y)(j);
    v.m6[i].q(i) = 1.0;
  }
  return v;
}

// Scales every recursion variable; applies the birth-step gamma weight.
inline void scale_vars(RecursionVars& v, double s) {
  auto sq = [s](QuadForm& f) {
    f.P *= s;
    f.q *= s;
    f.r *= s;
  };
  auto sl = [s](LinForm& f) {
    f.q *= s;
    f.r *= s;
  };
  for (auto& f : v.m1) sq(f);
  for (auto& f : v.m3) sq(f);
  for (auto& f : v.m4) sq(f);
  for (auto& f : v.m5) sq(f);
  for (auto& f : v.m7) sq(f);
  for (auto& f : v.m2) sl(f);
  for (auto& f : v.m6) sl(f);
}

// One forward-smoothing step across a survived transition. bp holds the
// backward parameters of the target's previous filtering distribution; c_d and
// y describe the detection at the new step.
inline void step_vars(RecursionVars& v, const BackwardParams& bp, int c_d,
                      const std::optional<Vec>& y, const SmoothGammas& g) {
  const Mat4 B = bp.B;
  const Mat4 Bt = B.transpose();
  const Vec4 b = bp.b;
  const Mat4 Sc = bp.Sigma_cross;
  const double cf = detail::carry_coeff(g.fast), nf = g.fast;
  const double cs = detail::carry_coeff(g.slow), ns = g.slow;

  // Generic carried parts of propagating T(x_prev) through x_prev | x_next.
  auto carry = [&](QuadForm& f, double c_old) {
    Mat4 Pc = Bt * f.P * B;
    Vec4 qc = Bt * f.q + Bt * ((f.P + f.P.transpose()) * b);
    double rc = f.r + f.P.cwiseProduct(Sc).sum() + f.q.dot(b) + b.dot(f.P * b);
    f.P = c_old * Pc;
    f.q = c_old * qc;
    f.r = c_old * rc;
  };

  for (int i = 0; i < kStateDim; ++i) {
    for (int j = i; j < kStateDim; ++j) {
      const int p = sym_index(i, j);

      // m1: fresh term c_d e_i e_j^T on the new state.
      carry(v.m1[p], cf);
      if (c_d) v.m1[p].P(i, j) += nf;

      // m3: the fresh previous-state term rides inside the backward map.
      {
        QuadForm& f = v.m3[p];
        Mat4 Pin = cs * f.P;
        Pin(i, j) += ns;
        Vec4 qin = cs * (f.q + (f.P + f.P.transpose()) * b);
        qin(i) += ns * b(j);
        qin(j) += ns * b(i);
        double rc = f.r + f.P.cwiseProduct(Sc).sum() + f.q.dot(b) + b.dot(f.P * b);
        f.r = cs * rc + ns * (Sc(i, j) + b(i) * b(j));
        f.P = Bt * Pin * B;
        f.q = Bt * qin;
      }

      // m4: fresh term e_i e_j^T on the new state.
      carry(v.m4[p], cs);
      v.m4[p].P(i, j) += ns;

      // m7: carry only.
      carry(v.m7[p], cf);
    }

    // m2: linear fresh term c_d y(j) e_i; r uses the pre-update q.
    for (int j = 0; j < kObsDim; ++j) {
      LinForm& f = v.m2[i * kObsDim + j];
      double rc = f.r + f.q.dot(b);
      f.q = cf * (Bt * f.q);
      if (c_d) f.q(i) += nf * (*y)(j);
      f.r = cf * rc;
    }

    // m6: carry only; r uses the pre-update q.
    {
      LinForm& f = v.m6[i];
      double rc = f.r + f.q.dot(b);
      f.q = cf * (Bt * f.q);
      f.r = cf * rc;
    }
  }

  // m5: cross term over all index pairs; fresh parts B^T e_i e_j^T and b(i) e_j.
  for (int i = 0; i < kStateDim; ++i) {
    for (int j = 0; j < kStateDim; ++j) {
      QuadForm& f = v.m5[i * kStateDim + j];
      carry(f, cs);
      f.P.col(j) += ns * Bt.col(i);
      f.q(j) += ns * b(i);
    }
  }
}

// Expected statistic values at the target's current filtering moments:
// element (i, j) is tr(P (Sigma + mu mu^T)) + q^T mu + r.
inline SmoothedStats eval_statistic(const RecursionVars& v, const GaussianMoments& filt) {
  SmoothedStats out;
  const Vec4 mu = filt.mu;
  const Mat4 M = filt.Sigma + mu * mu.transpose();
  auto evq = [&](const QuadForm& f) { return f.P.cwiseProduct(M).sum() + f.q.dot(mu) + f.r; };
  for (int i = 0; i < kStateDim; ++i) {
    for (int j = i; j < kStateDim; ++j) {
      const int p = sym_index(i, j);
      out.m1(i, j) = out.m1(j, i) = evq(v.m1[p]);
      out.m3(i, j) = out.m3(j, i) = evq(v.m3[p]);
      out.m4(i, j) = out.m4(j, i) = evq(v.m4[p]);
      out.m7(i, j) = out.m7(j, i) = evq(v.m7[p]);
    }
    for (int j = 0; j < kStateDim; ++j) out.m5(i, j) = evq(v.m5[i * kStateDim + j]);
    for (int j = 0; j < kObsDim; ++j) {
      const LinForm& f = v.m2[i * kObsDim + j];
      out.m2(i, j) = f.q.dot(mu) + f.r;
    }
    out.m6(i) = v.m6[i].q.dot(mu) + v.m6[i].r;
  }
  return out;
}

// One tracked target: filtering moments plus its recursion variables.
struct TargetSmoother {
  GaussianMoments filt;
  RecursionVars vars;
  int label = 0;
};

// z-only statistics, accumulated at the fast rate (plus the slow duplicate).
struct ZStats {
  Mat2 s8 = Mat2::Zero();
  double s9 = 0, s10 = 0, s11 = 0, s12 = 0, s13 = 0, s14 = 0, s15 = 0;
  double s11_slow = 0;
};

// Complete per-association-sequence smoothing state.
struct MttState {
  std::vector<TargetSmoother> targets;
  SmoothedStats dead;
  ZStats z;
  int t = 0;
  int next_label = 0;
};

// Absorbs one step (z_t, y_t): relabels survivors, steps their filters and
// recursion variables, folds dying targets into the dead pool, initializes
// births, and updates the z-only statistics. Returns the complete-data log
// density log p(z_t, y_t | past) under theta.
inline double mtt_step(MttState& state, const AssociationRecord& z_t,
                       const ObservationScan& scan, const ModelParams& theta,
                       const SmoothGammas& g) {
  const GlssmParams& psi = theta.glssm;
  const int k_prev = static_cast<int>(state.targets.size());
  z_t.validate();
  if (static_cast<int>(z_t.c_s.size()) != k_prev)
    throw DataError("mtt_step: c_s length does not match the target count");
  const int k_y = static_cast<int>(scan.points.size());
  if (z_t.k_y() != k_y) throw DataError("mtt_step: k_d + k_f does not match the scan size");

  double loglik = poisson_logpmf(z_t.k_b, theta.lambda_b);
  for (int c : z_t.c_s) loglik += c ? std::log(theta.p_s) : std::log1p(-theta.p_s);
  for (int c : z_t.c_d) loglik += c ? std::log(theta.p_d) : std::log1p(-theta.p_d);
  loglik += poisson_logpmf(z_t.k_f, theta.lambda_f);
  loglik += log_factorial(z_t.k_f) - log_factorial(k_y);
  loglik -= z_t.k_f * std::log(theta.region_volume());

  std::vector<TargetSmoother> next;
  next.reserve(z_t.k_x());
  SmoothedStats dying;
  int i_d = 0;
  for (int i = 0; i < k_prev; ++i) {
    TargetSmoother& ts = state.targets[i];
    if (!z_t.c_s[i]) {
      dying += eval_statistic(ts.vars, ts.filt);
      continue;
    }
    const int i_x = static_cast<int>(next.size());
    const int c_d = z_t.c_d[i_x];
    GaussianMoments pred = predict(ts.filt, psi);
    BackwardParams bp = backward_params(ts.filt, psi);
    std::optional<Vec> y;
    if (c_d) y = Vec(scan.points[z_t.a[i_d++]]);
    auto [filt, ll] = update(pred, y, psi);
    loglik += ll;
    step_vars(ts.vars, bp, c_d, y, g);
    ts.filt = filt;
    next.push_back(std::move(ts));
  }
  for (int bidx = 0; bidx < z_t.k_b; ++bidx) {
    const int i_x = static_cast<int>(next.size());
    const int c_d = z_t.c_d[i_x];
    GaussianMoments pred{psi.mu_b, psi.Sigma_b};
    std::optional<Vec> y;
    if (c_d) y = Vec(scan.points[z_t.a[i_d++]]);
    auto [filt, ll] = update(pred, y, psi);
    loglik += ll;
    TargetSmoother ts;
    ts.vars = init_vars(c_d, y);
    scale_vars(ts.vars, g.fast);
    ts.filt = filt;
    ts.label = state.next_label++;
    next.push_back(std::move(ts));
  }

  const double cf = detail::carry_coeff(g.fast), nf = g.fast;
  const double cs = detail::carry_coeff(g.slow), ns = g.slow;
  state.dead.m1 = cf * (state.dead.m1 + dying.m1);
  state.dead.m2 = cf * (state.dead.m2 + dying.m2);
  state.dead.m3 = cs * (state.dead.m3 + dying.m3);
  state.dead.m4 = cs * (state.dead.m4 + dying.m4);
  state.dead.m5 = cs * (state.dead.m5 + dying.m5);
  state.dead.m6 = cf * (state.dead.m6 + dying.m6);
  state.dead.m7 = cf * (state.dead.m7 + dying.m7);

  Mat2 s8 = Mat2::Zero();
  for (int k = 0; k < z_t.k_d(); ++k) {
    const Vec2& yk = scan.points[z_t.a[k]];
    s8 += yk * yk.transpose();
  }
  state.z.s8 = cf * state.z.s8 + nf * s8;
  state.z.s9 = cf * state.z.s9 + nf * z_t.k_d();
  state.z.s10 = cf * state.z.s10 + nf * z_t.k_x();
  state.z.s11 = cf * state.z.s11 + nf * z_t.k_s();
  state.z.s12 = cf * state.z.s12 + nf * k_prev;
  state.z.s13 = cf * state.z.s13 + nf * z_t.k_b;
  state.z.s14 = cf * state.z.s14 + nf * z_t.k_f;
  state.z.s15 = cf * state.z.s15 + nf * 1.0;
  state.z.s11_slow = cs * state.z.s11_slow + ns * z_t.k_s();

  state.targets = std::move(next);
  state.t += 1;
  return loglik;
}

// Alive + dead totals as a full sufficient-statistic set.
inline SufficientStatSet total_expectations(const MttState& state) {
  SmoothedStats tot = state.dead;
  for (const auto& ts : state.targets) tot += eval_statistic(ts.vars, ts.filt);
  SufficientStatSet s;
  s.s1 = tot.m1;
  s.s2 = tot.m2;
  s.s3 = tot.m3;
  s.s4 = tot.m4;
  s.s5 = tot.m5;
  s.s6 = tot.m6;
  s.s7 = tot.m7;
  s.s8 = state.z.s8;
  s.s9 = state.z.s9;
  s.s10 = state.z.s10;
  s.s11 = state.z.s11;
  s.s12 = state.z.s12;
  s.s13 = state.z.s13;
  s.s14 = state.z.s14;
  s.s15 = state.z.s15;
  s.s11_slow = state.z.s11_slow;
  return s;
}

}  // namespace mtt
