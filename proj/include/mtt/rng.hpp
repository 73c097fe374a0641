#pragma once

#include <cmath>
#include <cstdint>

#include "mtt/common.hpp"

namespace mtt {

// Counter-based generator: every draw is a pure function of
// (seed, time index, stream id, counter), so results do not depend on the
// order in which independent streams are consumed.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t t, std::uint64_t stream)
      : key_(mix64(mix64(seed) ^ 0xa24baed4963ee407ULL * t) ^
             mix64(0x9fb21c651e98df25ULL * (stream + 1))) {}

  std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_); }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; consumes two uniforms per call, no cached spare.
  double normal() {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Inversion by cdf walk; exact Poisson splitting keeps exp(-lambda) away
  // from underflow for large rates.
  int poisson(double lambda) {
    if (!(lambda > 0.0)) return 0;
    if (lambda > 60.0) {
      int half = poisson(lambda * 0.5);
      return half + poisson(lambda * 0.5);
    }
    double u = uniform();
    double p = std::exp(-lambda);
    double cdf = p;
    int k = 0;
    while (u >= cdf) {
      ++k;
      p *= lambda / k;
      cdf += p;
      if (p < 1e-300 && k > lambda) break;
    }
    return k;
  }

  Vec normal_vec(int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
};

// Draws x ~ N(mu, Sigma) through a symmetric eigendecomposition square root,
// so PSD (including singular) covariances are valid.
inline Vec sample_gaussian(Rng& rng, const Vec& mu, const Mat& sigma) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
  Vec scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return mu + es.eigenvectors() * scale.asDiagonal() * rng.normal_vec(mu.size());
}

}  // namespace mtt
