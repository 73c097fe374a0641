#pragma once

#include <vector>

#include "mtt/common.hpp"
#include "mtt/data.hpp"
#include "mtt/model.hpp"
#include "mtt/rng.hpp"

namespace mtt {

struct SimulationOutput {
  std::vector<ObservationScan> scans;
  GroundTruth truth;
};

namespace detail {

// RNG stream ids, one per source of randomness within a time step.
enum SimStream : std::uint64_t {
  kStreamSurvival = 0,
  kStreamTransition,
  kStreamBirthCount,
  kStreamBirthState,
  kStreamDetection,
  kStreamObsNoise,
  kStreamClutterCount,
  kStreamClutterPos,
  kStreamShuffle,
};

inline bool in_region(const Vec2& y, double kappa) {
  return std::abs(y(0)) <= kappa && std::abs(y(1)) <= kappa;
}

// Draws the scan for the already-formed target list at time t. Observations of
// targets falling outside the region are dropped and the target recorded as
// missed. Detected-target points and clutter are interleaved by a uniform
// shuffle so observation order carries no information.
inline void emit_scan(const ModelParams& theta, const std::vector<Vec4>& states, int t,
                      std::uint64_t seed, AssociationRecord& rec, ObservationScan& scan) {
  const int k_x = static_cast<int>(states.size());
  Rng rng_det(seed, t, kStreamDetection);
  Rng rng_noise(seed, t, kStreamObsNoise);
  Rng rng_clutter_n(seed, t, kStreamClutterCount);
  Rng rng_clutter_p(seed, t, kStreamClutterPos);
  Rng rng_shuffle(seed, t, kStreamShuffle);

  rec.c_d.assign(k_x, 0);
  std::vector<int> det_target;  // target index per generated target point
  std::vector<Vec2> points;
  for (int i = 0; i < k_x; ++i) {
    if (!rng_det.bernoulli(theta.p_d)) continue;
    Vec noise = sample_gaussian(rng_noise, Vec::Zero(kObsDim), theta.glssm.V);
    Vec2 y = (theta.glssm.G * states[i] + noise).head<2>();
    if (!in_region(y, theta.kappa)) continue;  // recorded as a missed detection
    rec.c_d[i] = 1;
    det_target.push_back(i);
    points.push_back(y);
  }
  rec.k_f = rng_clutter_n.poisson(theta.lambda_f);
  const int n_det = static_cast<int>(points.size());
  for (int j = 0; j < rec.k_f; ++j) {
    Vec2 y;
    y << rng_clutter_p.uniform(-theta.kappa, theta.kappa),
        rng_clutter_p.uniform(-theta.kappa, theta.kappa);
    points.push_back(y);
  }

  // Fisher-Yates over the merged point list; `slot[k]` is where point k lands.
  const int k_y = static_cast<int>(points.size());
  std::vector<int> slot(k_y);
  for (int k = 0; k < k_y; ++k) slot[k] = k;
  for (int k = k_y - 1; k > 0; --k) {
    int j = static_cast<int>(rng_shuffle.uniform() * (k + 1));
    if (j > k) j = k;
    std::swap(slot[k], slot[j]);
  }
  scan.t = t;
  scan.points.assign(k_y, Vec2::Zero());
  for (int k = 0; k < k_y; ++k) scan.points[slot[k]] = points[k];
  rec.a.resize(n_det);
  for (int k = 0; k < n_det; ++k) rec.a[k] = slot[k];
}

}  // namespace detail

// Samples n scans plus full latent trajectory from the generative model.
// Targets are indexed survivors-first then births at every step.
inline SimulationOutput simulate(const ModelParams& theta, int n, std::uint64_t seed) {
  if (n < 0) throw UsageError("simulate: n must be >= 0");
  SimulationOutput out;
  out.scans.reserve(n);
  out.truth.records.reserve(n);
  out.truth.states.reserve(n);

  std::vector<Vec4> prev_states;
  for (int t = 1; t <= n; ++t) {
    Rng rng_surv(seed, t, detail::kStreamSurvival);
    Rng rng_trans(seed, t, detail::kStreamTransition);
    Rng rng_birth_n(seed, t, detail::kStreamBirthCount);
    Rng rng_birth_x(seed, t, detail::kStreamBirthState);

    AssociationRecord rec;
    std::vector<Vec4> states;
    rec.c_s.assign(prev_states.size(), 0);
    for (std::size_t i = 0; i < prev_states.size(); ++i) {
      if (!rng_surv.bernoulli(theta.p_s)) continue;
      rec.c_s[i] = 1;
      Vec noise = sample_gaussian(rng_trans, Vec::Zero(kStateDim), theta.glssm.W);
      states.push_back((theta.glssm.F * prev_states[i] + noise).head<4>());
    }
    rec.k_b = rng_birth_n.poisson(theta.lambda_b);
    for (int b = 0; b < rec.k_b; ++b) {
      Vec x = sample_gaussian(rng_birth_x, theta.glssm.mu_b, theta.glssm.Sigma_b);
      states.push_back(x.head<4>());
    }

    ObservationScan scan;
    detail::emit_scan(theta, states, t, seed, rec, scan);
    rec.validate();

    out.scans.push_back(std::move(scan));
    out.truth.records.push_back(std::move(rec));
    prev_states = states;
    out.truth.states.push_back(std::move(states));
  }
  return out;
}

// Variant with a fixed population: exactly K targets born at t = 1, no later
// births, guaranteed survival. theta.lambda_b and theta.p_s are ignored.
inline SimulationOutput simulate_fixed_k(const ModelParams& theta, int K, int n,
                                         std::uint64_t seed) {
  if (K < 0) throw UsageError("simulate_fixed_k: K must be >= 0");
  if (n < 0) throw UsageError("simulate_fixed_k: n must be >= 0");
  SimulationOutput out;
  out.scans.reserve(n);
  out.truth.records.reserve(n);
  out.truth.states.reserve(n);

  std::vector<Vec4> prev_states;
  for (int t = 1; t <= n; ++t) {
    Rng rng_trans(seed, t, detail::kStreamTransition);
    Rng rng_birth_x(seed, t, detail::kStreamBirthState);

    AssociationRecord rec;
    std::vector<Vec4> states;
    if (t == 1) {
      rec.k_b = K;
      for (int b = 0; b < K; ++b) {
        Vec x = sample_gaussian(rng_birth_x, theta.glssm.mu_b, theta.glssm.Sigma_b);
        states.push_back(x.head<4>());
      }
    } else {
      rec.c_s.assign(prev_states.size(), 1);
      rec.k_b = 0;
      for (const Vec4& xp : prev_states) {
        Vec noise = sample_gaussian(rng_trans, Vec::Zero(kStateDim), theta.glssm.W);
        states.push_back((theta.glssm.F * xp + noise).head<4>());
      }
    }

    ObservationScan scan;
    detail::emit_scan(theta, states, t, seed, rec, scan);
    rec.validate();

    out.scans.push_back(std::move(scan));
    out.truth.records.push_back(std::move(rec));
    prev_states = states;
    out.truth.states.push_back(std::move(states));
  }
  return out;
}

}  // namespace mtt
