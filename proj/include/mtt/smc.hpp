#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mtt/assignment.hpp"
#include "mtt/common.hpp"
#include "mtt/rng.hpp"
#include "mtt/smoothing.hpp"

namespace mtt {

// One association-sequence hypothesis: smoothing state, its latest step, and
// the normalized log weight.
struct Particle {
  MttState state;
  AssociationRecord record;
  double log_weight = 0.0;
};

struct ParticleSet {
  std::vector<Particle> particles;
  double log_norm_const = 0.0;  // running log p(y_1:t)
  int t = 0;
};

struct SmcConfig {
  int N = 100;
  int L = 10;
  double ess_threshold = 0.5;
  std::uint64_t seed = 0;
  // All particles hold exactly this many targets, born at the first step.
  std::optional<int> fixed_k;
  // Known birth-death ablation: take (k_b, c_s) per step from this truth.
  const GroundTruth* forced = nullptr;
};

inline ParticleSet init_particles(int N) {
  if (N < 1) throw UsageError("particle count must be >= 1");
  ParticleSet set;
  set.particles.resize(N);
  for (auto& p : set.particles) p.log_weight = -std::log(static_cast<double>(N));
  return set;
}

inline double ess(const std::vector<double>& weights) {
  double s2 = 0.0;
  for (double w : weights) s2 += w * w;
  return 1.0 / s2;
}

// Systematic resampling when the ESS drops below threshold * N. Returns the
// ancestry map: pi[i] = j means the i'th particle after the call is a copy of
// the j'th before it. Without resampling, pi is the identity.
inline std::vector<int> resample(ParticleSet& set, double threshold, Rng& rng) {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw UsageError("resample: threshold must lie in (0, 1]");
  const int N = static_cast<int>(set.particles.size());
  std::vector<double> w(N);
  for (int i = 0; i < N; ++i) w[i] = std::exp(set.particles[i].log_weight);
  std::vector<int> pi(N);
  for (int i = 0; i < N; ++i) pi[i] = i;
  if (ess(w) >= threshold * N) return pi;

  const double u0 = rng.uniform() / N;
  int j = 0;
  double c = w[0];
  for (int i = 0; i < N; ++i) {
    const double pos = u0 + static_cast<double>(i) / N;
    while (pos > c && j + 1 < N) c += w[++j];
    pi[i] = j;
  }
  std::vector<Particle> next;
  next.reserve(N);
  const double lw = -std::log(static_cast<double>(N));
  for (int i = 0; i < N; ++i) {
    next.push_back(set.particles[pi[i]]);
    next.back().log_weight = lw;
  }
  set.particles = std::move(next);
  return pi;
}

// Samples z_t for one particle (birth-death prior, then an association from
// the softmax over the L best assignments), applies the smoothing update, and
// returns the exact incremental log weight
//   -lambda_f - log k_y! + (k_y - k_x) log lambda_f + (k_x - k_y) log |Y|
//   + log sum_j exp d(D, alpha_j).
// A particle with no feasible assignment keeps its state and gets -inf.
inline double propose_step(Particle& p, const ObservationScan& scan, const ModelParams& theta,
                           const SmcConfig& cfg, const SmoothGammas& g, Rng& rng) {
  const GlssmParams& psi = theta.glssm;
  const int k_prev = static_cast<int>(p.state.targets.size());
  const int k_y = static_cast<int>(scan.points.size());

  AssociationRecord z;
  if (cfg.forced) {
    const auto& rec = cfg.forced->records.at(p.state.t);
    if (static_cast<int>(rec.c_s.size()) != k_prev)
      throw DataError("forced birth-death record inconsistent with the particle");
    z.c_s = rec.c_s;
    z.k_b = rec.k_b;
  } else if (cfg.fixed_k) {
    z.c_s.assign(k_prev, 1);
    z.k_b = p.state.t == 0 ? *cfg.fixed_k : 0;
  } else {
    z.c_s.resize(k_prev);
    for (int i = 0; i < k_prev; ++i) z.c_s[i] = rng.bernoulli(theta.p_s) ? 1 : 0;
    z.k_b = rng.poisson(theta.lambda_b);
  }

  std::vector<GaussianMoments> preds;
  for (int i = 0; i < k_prev; ++i)
    if (z.c_s[i]) preds.push_back(predict(p.state.targets[i].filt, psi));
  for (int b = 0; b < z.k_b; ++b) preds.push_back({psi.mu_b, psi.Sigma_b});
  const int k_x = static_cast<int>(preds.size());

  CostMatrix cm = build_cost_matrix(preds, theta, scan);
  std::vector<Assignment> lbest = murty_lbest(cm, cfg.L);
  if (lbest.empty()) return kNegInf;

  std::vector<double> scores;
  scores.reserve(lbest.size());
  for (const auto& a : lbest) scores.push_back(a.score);
  const double lse = log_sum_exp(scores);

  int pick = static_cast<int>(lbest.size()) - 1;
  const double u = rng.uniform();
  double acc = 0.0;
  for (int j = 0; j < static_cast<int>(lbest.size()); ++j) {
    acc += std::exp(scores[j] - lse);
    if (u < acc) {
      pick = j;
      break;
    }
  }

  AssociationRecord dec = decode_association(lbest[pick], k_x, k_y);
  z.c_d = std::move(dec.c_d);
  z.a = std::move(dec.a);
  z.k_f = dec.k_f;

  double log_incr = -theta.lambda_f - log_factorial(k_y) + lse +
                    (k_x - k_y) * std::log(theta.region_volume());
  if (k_y != k_x) log_incr += (k_y - k_x) * std::log(theta.lambda_f);

  mtt_step(p.state, z, scan, theta, g);
  p.record = std::move(z);
  return log_incr;
}

// One filter step: resample if degenerate, propose every particle, accumulate
// the marginal-likelihood increment, renormalize in the log domain. Returns
// the resampling ancestry map.
inline std::vector<int> smc_step(ParticleSet& set, const ObservationScan& scan,
                                 const ModelParams& theta, const SmcConfig& cfg,
                                 const SmoothGammas& g) {
  const int N = static_cast<int>(set.particles.size());
  const int t_new = set.t + 1;
  Rng rng_res(cfg.seed, t_new, 0);
  std::vector<int> pi = resample(set, cfg.ess_threshold, rng_res);

  std::vector<double> incr(N);
  parallel_for(N, [&](int i) {
    Rng rng(cfg.seed, t_new, 1 + static_cast<std::uint64_t>(i));
    incr[i] = propose_step(set.particles[i], scan, theta, cfg, g, rng);
  });

  std::vector<double> lw(N);
  for (int i = 0; i < N; ++i) lw[i] = set.particles[i].log_weight + incr[i];
  const double lse = log_sum_exp(lw);
  if (!std::isfinite(lse))
    throw NumericalError("particle filter collapsed at time step " + std::to_string(t_new));
  set.log_norm_const += lse;
  for (int i = 0; i < N; ++i) set.particles[i].log_weight = lw[i] - lse;
  set.t = t_new;
  return pi;
}

inline double log_marginal_likelihood(const ParticleSet& set) { return set.log_norm_const; }

}  // namespace mtt
