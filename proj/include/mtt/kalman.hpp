#pragma once

#include <cmath>
#include <optional>

#include "mtt/common.hpp"
#include "mtt/model.hpp"

namespace mtt {

struct GaussianMoments {
  Vec mu;
  Mat Sigma;
};

// Parameters of the backward transition x_t | x_{t+1} ~ N(B x_{t+1} + b, Sigma_cross).
struct BackwardParams {
  Mat B;
  Vec b;
  Mat Sigma_cross;
};

namespace detail {
inline Eigen::LLT<Mat> checked_llt(const Mat& m, const char* what) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string("Cholesky factorization failed in ") + what);
  return llt;
}
}  // namespace detail

inline GaussianMoments predict(const GaussianMoments& filt, const GlssmParams& psi) {
  GaussianMoments out;
  out.mu = psi.F * filt.mu;
  out.Sigma = symmetrize(psi.F * filt.Sigma * psi.F.transpose() + psi.W);
  return out;
}

// log N(y; mean, Gamma) via Cholesky of Gamma.
inline double gaussian_loglik(const Vec& y, const Vec& mean, const Mat& Gamma) {
  auto llt = detail::checked_llt(Gamma, "gaussian_loglik");
  Vec r = y - mean;
  Vec half = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (int i = 0; i < Gamma.rows(); ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * half.squaredNorm() - logdet - 0.5 * Gamma.rows() * std::log(2.0 * M_PI);
}

// Measurement update; a missing y is a missed detection, which leaves the
// moments untouched and contributes zero log-likelihood.
inline std::pair<GaussianMoments, double> update(const GaussianMoments& pred,
                                                 const std::optional<Vec>& y,
                                                 const GlssmParams& psi) {
  if (!y) return {pred, 0.0};
  Mat Gamma = symmetrize(psi.G * pred.Sigma * psi.G.transpose() + psi.V);
  auto llt = detail::checked_llt(Gamma, "kalman update");
  Vec mean = psi.G * pred.mu;
  double ll = gaussian_loglik(*y, mean, Gamma);
  // Gain K = Sigma G^T Gamma^{-1}, applied through the factorization.
  Mat K = llt.solve(psi.G * pred.Sigma).transpose();
  GaussianMoments out;
  out.mu = pred.mu + K * (*y - mean);
  out.Sigma = symmetrize(pred.Sigma - K * psi.G * pred.Sigma);
  return {out, ll};
}

// B = Sigma F^T (F Sigma F^T + W)^{-1}, b = (I - BF) mu, Sigma_cross = (I - BF) Sigma.
inline BackwardParams backward_params(const GaussianMoments& filt, const GlssmParams& psi) {
  Mat pred_cov = symmetrize(psi.F * filt.Sigma * psi.F.transpose() + psi.W);
  auto llt = detail::checked_llt(pred_cov, "backward_params");
  BackwardParams bp;
  bp.B = llt.solve(psi.F * filt.Sigma).transpose();
  Mat IB = Mat::Identity(filt.mu.size(), filt.mu.size()) - bp.B * psi.F;
  bp.b = IB * filt.mu;
  bp.Sigma_cross = symmetrize(IB * filt.Sigma);
  return bp;
}

// log of the observation predictive density N(y; G mu, G Sigma G^T + V).
inline double predictive_loglik(const GaussianMoments& pred, const Vec& y,
                                const GlssmParams& psi) {
  Mat Gamma = symmetrize(psi.G * pred.Sigma * psi.G.transpose() + psi.V);
  return gaussian_loglik(y, psi.G * pred.mu, Gamma);
}

}  // namespace mtt
