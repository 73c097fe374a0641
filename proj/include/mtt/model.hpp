#pragma once

#include <cmath>

#include "mtt/common.hpp"
#include "mtt/stats.hpp"

namespace mtt {

// Single-target linear-Gaussian state-space matrices
// psi = (mu_b, Sigma_b, F, G, W, V).
struct GlssmParams {
  Vec mu_b;
  Mat Sigma_b;
  Mat F;
  Mat G;
  Mat W;
  Mat V;
};

// Full static parameter vector theta = (psi, p_s, p_d, lambda_b, lambda_f)
// plus the observation region [-kappa, kappa]^2.
struct ModelParams {
  GlssmParams glssm;
  double p_s = 0;
  double p_d = 0;
  double lambda_b = 0;
  double lambda_f = 0;
  double kappa = 0;

  double region_volume() const { return std::pow(2.0 * kappa, kObsDim); }
};

// Constant-velocity parametrization; the eleven estimable entries plus the
// fixed time step and region half-width. rho damps the position/velocity
// diagonal blocks of F (1.0 recovers the plain constant-velocity model).
struct CvParams {
  double lambda_b = 0;
  double lambda_f = 0;
  double p_d = 0;
  double p_s = 0;
  double mu_bx = 0;
  double mu_by = 0;
  double sigma_bp2 = 0;
  double sigma_bv2 = 0;
  double sigma_xp2 = 0;
  double sigma_xv2 = 0;
  double sigma_y2 = 0;
  double delta = 1.0;
  double kappa = 0;
  double rho = 1.0;
};

struct CostModelConstants {
  double c1 = 1, c2 = 1, c3 = 1, c4 = 1, c5 = 1, c6 = 1, c7 = 1, c8 = 1, c9 = 1;
  double L = 1;
  double N = 1;
  double d_x = kStateDim;
};

inline void validate_cv(const CvParams& cv) {
  if (cv.sigma_bp2 < 0 || cv.sigma_bv2 < 0 || cv.sigma_xp2 < 0 || cv.sigma_xv2 < 0 ||
      cv.sigma_y2 < 0)
    throw UsageError("negative variance in constant-velocity parameters");
  if (cv.p_s < 0 || cv.p_s > 1 || cv.p_d < 0 || cv.p_d > 1)
    throw UsageError("survival/detection probabilities must lie in [0,1]");
  if (cv.lambda_b < 0 || cv.lambda_f < 0) throw UsageError("negative rate parameter");
  if (cv.kappa <= 0) throw UsageError("region half-width kappa must be positive");
}

// Builds theta with F diagonal blocks rho*I (rho = 1 is the plain
// constant-velocity model).
inline ModelParams cv_assemble_stationary(const CvParams& cv, double rho) {
  validate_cv(cv);
  if (!(rho > 0.0 && rho <= 1.0)) throw UsageError("rho must lie in (0, 1]");
  ModelParams theta;
  theta.p_s = cv.p_s;
  theta.p_d = cv.p_d;
  theta.lambda_b = cv.lambda_b;
  theta.lambda_f = cv.lambda_f;
  theta.kappa = cv.kappa;

  GlssmParams& g = theta.glssm;
  g.mu_b = Vec::Zero(kStateDim);
  g.mu_b(0) = cv.mu_bx;
  g.mu_b(1) = cv.mu_by;
  g.Sigma_b = Vec4(cv.sigma_bp2, cv.sigma_bp2, cv.sigma_bv2, cv.sigma_bv2).asDiagonal();
  g.F = Mat::Zero(kStateDim, kStateDim);
  g.F.topLeftCorner(2, 2) = rho * Mat2::Identity();
  g.F.bottomRightCorner(2, 2) = rho * Mat2::Identity();
  g.F.topRightCorner(2, 2) = cv.delta * Mat2::Identity();
  g.G = Mat::Zero(kObsDim, kStateDim);
  g.G.leftCols(2) = Mat2::Identity();
  g.W = Vec4(cv.sigma_xp2, cv.sigma_xp2, cv.sigma_xv2, cv.sigma_xv2).asDiagonal();
  g.V = cv.sigma_y2 * Mat2::Identity();
  return theta;
}

inline ModelParams cv_assemble(const CvParams& cv) { return cv_assemble_stationary(cv, 1.0); }

namespace detail {
// Denominator floor: parameters whose statistics have effectively vanished
// keep their previous value.
inline constexpr double kDenomFloor = 1e-12;
inline constexpr double kProbClamp = 1e-6;
inline constexpr double kVarFloor = 1e-12;
inline constexpr double kRateFloor = 1e-12;

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }
inline double clamp_var(double v) { return std::max(v, kVarFloor); }
inline double clamp_rate(double r) { return std::max(r, kRateFloor); }
}  // namespace detail

// Which components the M-step may update; the fixed-target-count online mode
// freezes birth-distribution and birth/survival-rate components.
struct MstepMask {
  bool lambda_b = true;
  bool lambda_f = true;
  bool p_d = true;
  bool p_s = true;
  bool birth_moments = true;  // mu_bx, mu_by, sigma_bp2, sigma_bv2
  bool sigma_xv2 = true;
  bool sigma_y2 = true;
};

// Closed-form M-step for the constant-velocity parametrization. sigma_xp2 is
// a structural zero and is carried from prev untouched.
inline CvParams lambda_mstep(const SufficientStatSet& s, const CvParams& prev,
                             const MstepMask& mask = MstepMask{}) {
  using namespace detail;
  CvParams out = prev;

  const Mat24 Mp = (Mat24() << 1, 0, 0, 0, 0, 1, 0, 0).finished();
  const Mat24 Mv = (Mat24() << 0, 0, 1, 0, 0, 0, 0, 1).finished();
  const Mat4 F = cv_assemble_stationary(prev, prev.rho).glssm.F;
  const Mat24 Fv = Mv * F;
  const Mat24 G = Mp;

  if (mask.p_d && s.s10 > kDenomFloor) out.p_d = clamp_prob(s.s9 / s.s10);
  if (mask.p_s && s.s12 > kDenomFloor) out.p_s = clamp_prob(s.s11 / s.s12);
  if (mask.lambda_b && s.s15 > kDenomFloor) out.lambda_b = clamp_rate(s.s13 / s.s15);
  if (mask.lambda_f && s.s15 > kDenomFloor) out.lambda_f = clamp_rate(s.s14 / s.s15);

  if (mask.birth_moments && s.s13 > kDenomFloor) {
    out.mu_bx = s.s6(0) / s.s13;
    out.mu_by = s.s6(1) / s.s13;
    Vec4 mu_b(out.mu_bx, out.mu_by, 0.0, 0.0);
    Mat4 centered = s.s7 - s.s6 * mu_b.transpose() - mu_b * s.s6.transpose() +
                    s.s13 * mu_b * mu_b.transpose();
    out.sigma_bp2 = clamp_var((Mp * centered * Mp.transpose()).trace() / (2.0 * s.s13));
    out.sigma_bv2 = clamp_var((Mv * centered * Mv.transpose()).trace() / (2.0 * s.s13));
  }

  if (mask.sigma_xv2 && s.s11_slow > kDenomFloor) {
    double num = (Mv * s.s4 * Mv.transpose()).trace() -
                 2.0 * (Fv * s.s5 * Mv.transpose()).trace() +
                 (Fv * s.s3 * Fv.transpose()).trace();
    out.sigma_xv2 = clamp_var(num / (2.0 * s.s11_slow));
  }

  if (mask.sigma_y2 && s.s9 > kDenomFloor) {
    double num = s.s8.trace() - 2.0 * (G * s.s2).trace() + (G * s.s1 * G.transpose()).trace();
    out.sigma_y2 = clamp_var(num / (2.0 * s.s9));
  }

  return out;
}

// Expected per-step cost of the L-best-assignment particle filter at
// stationarity; a planning aid, not a benchmark.
inline double expected_smc_cost(const ModelParams& theta, const CostModelConstants& c) {
  if (theta.p_s >= 1.0)
    throw UsageError("expected_smc_cost: p_s = 1 has no stationary target count");
  if (c.N == 0) return 0.0;
  double lambda_x = theta.lambda_b / (1.0 - theta.p_s);
  double lambda_y = lambda_x * (1.0 + theta.p_d) + theta.lambda_f;
  double dx3 = c.d_x * c.d_x * c.d_x;
  double third_moment = lambda_y * lambda_y * lambda_y + 3.0 * lambda_y * lambda_y + lambda_y;
  return c.N * (c.c1 + c.c3 +
                (c.c2 + dx3 * (c.c4 + c.c5 * (theta.p_d + theta.lambda_f))) * lambda_x +
                c.c5 * theta.p_d * lambda_x * lambda_x + c.c6 * c.L * third_moment);
}

}  // namespace mtt
