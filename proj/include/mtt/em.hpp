#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mtt/common.hpp"
#include "mtt/model.hpp"
#include "mtt/smc.hpp"
#include "mtt/smoothing.hpp"
#include "mtt/stats.hpp"

namespace mtt {

// Step sizes gamma_j = j^(-alpha). The transition statistics (S3, S4, S5 and
// the duplicated survival count) follow the override for sigma_xv2, giving the
// dual-rate schedule; every other statistic uses the default exponent.
struct StepSizeSchedule {
  double alpha = 0.8;
  std::map<std::string, double> overrides{{"sigma_xv2", 0.55}};
  int t_b = 10;

  double fast_exponent() const { return alpha; }
  double slow_exponent() const {
    auto it = overrides.find("sigma_xv2");
    return it == overrides.end() ? alpha : it->second;
  }
  double gamma_fast(int j) const { return std::pow(static_cast<double>(j), -fast_exponent()); }
  double gamma_slow(int j) const { return std::pow(static_cast<double>(j), -slow_exponent()); }
  SmoothGammas gammas(int j) const { return {gamma_fast(j), gamma_slow(j)}; }
};

struct TracePoint {
  int index = 0;
  CvParams theta;
  std::optional<double> loglik;
};
using EstimateTrace = std::vector<TracePoint>;

namespace detail {
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t j) {
  return mix64(seed ^ mix64(j));
}
}  // namespace detail

// Exact EM along the true association sequence: the E-step needs no Monte
// Carlo because conditionally on z the model is a set of independent linear
// Gaussian tracks. The recorded log-likelihood at iteration j is
// log p(y, z) under the iterate entering that E-step.
inline EstimateTrace oracle_em(const std::vector<ObservationScan>& scans,
                               const GroundTruth& truth, const CvParams& theta0, int iters) {
  if (truth.records.size() != scans.size())
    throw DataError("oracle_em: truth and scans lengths differ");
  if (iters < 0) throw UsageError("oracle_em: negative iteration count");
  EstimateTrace trace;
  CvParams cur = theta0;
  trace.push_back({0, cur, std::nullopt});
  for (int j = 1; j <= iters; ++j) {
    ModelParams theta = cv_assemble_stationary(cur, cur.rho);
    MttState state;
    double cll = 0.0;
    for (std::size_t t = 0; t < scans.size(); ++t)
      cll += mtt_step(state, truth.records[t], scans[t], theta, 1.0);
    cur = lambda_mstep(total_expectations(state), cur);
    trace.push_back({j, cur, cll});
  }
  return trace;
}

// Weighted particle expectation of the sufficient statistics.
inline SufficientStatSet weighted_suffstats(const ParticleSet& set) {
  SufficientStatSet s;
  for (const auto& p : set.particles)
    s += std::exp(p.log_weight) * total_expectations(p.state);
  return s;
}

struct SaemConfig {
  int N = 200;
  int L = 10;
  double ess_threshold = 0.5;
  StepSizeSchedule schedule;
  int iters = 100;
  std::uint64_t seed = 0;
};

// Batch SAEM: each iteration runs a fresh full filter pass at the current
// iterate (exact cumulative recursions), then blends the statistic estimate
// into the running one with the iteration step size before the M-step.
inline EstimateTrace saem_batch(const std::vector<ObservationScan>& scans,
                                const CvParams& theta0, const SaemConfig& cfg) {
  if (cfg.iters < 1) throw UsageError("saem_batch: iters must be >= 1");
  EstimateTrace trace;
  CvParams cur = theta0;
  trace.push_back({0, cur, std::nullopt});
  SufficientStatSet blended;
  for (int j = 1; j <= cfg.iters; ++j) {
    ModelParams theta = cv_assemble_stationary(cur, cur.rho);
    SmcConfig smc_cfg;
    smc_cfg.N = cfg.N;
    smc_cfg.L = cfg.L;
    smc_cfg.ess_threshold = cfg.ess_threshold;
    smc_cfg.seed = detail::sub_seed(cfg.seed, static_cast<std::uint64_t>(j));
    ParticleSet set = init_particles(cfg.N);
    for (const auto& scan : scans) smc_step(set, scan, theta, smc_cfg, 1.0);
    SufficientStatSet fresh = weighted_suffstats(set);
    blended = sa_blend(blended, fresh, cfg.schedule.gamma_fast(j), cfg.schedule.gamma_slow(j));
    cur = lambda_mstep(blended, cur);
    trace.push_back({j, cur, log_marginal_likelihood(set)});
  }
  return trace;
}

struct OnlineEmConfig {
  int N = 100;
  int L = 10;
  double ess_threshold = 0.5;
  StepSizeSchedule schedule;
  std::uint64_t seed = 0;
  std::optional<int> fixed_k;
  const GroundTruth* forced = nullptr;  // known birth-death ablation
};

// SMC online EM: per-step discounted recursions inside the filter, M-step
// after the burn-in. In fixed-target-count mode, survival and birth become
// structural (p_s = 1, lambda_b = 0) and the mask freezes the parameters an
// online pass cannot identify.
inline EstimateTrace online_em(const std::vector<ObservationScan>& scans,
                               const CvParams& theta0, const OnlineEmConfig& cfg) {
  EstimateTrace trace;
  CvParams cur = theta0;
  MstepMask mask;
  if (cfg.fixed_k) {
    cur.p_s = 1.0;
    cur.lambda_b = 0.0;
    mask.p_s = false;
    mask.lambda_b = false;
    mask.birth_moments = false;
  }
  SmcConfig smc_cfg;
  smc_cfg.N = cfg.N;
  smc_cfg.L = cfg.L;
  smc_cfg.ess_threshold = cfg.ess_threshold;
  smc_cfg.seed = cfg.seed;
  smc_cfg.fixed_k = cfg.fixed_k;
  smc_cfg.forced = cfg.forced;
  ParticleSet set = init_particles(cfg.N);
  for (int t = 1; t <= static_cast<int>(scans.size()); ++t) {
    ModelParams theta = cv_assemble_stationary(cur, cur.rho);
    smc_step(set, scans[t - 1], theta, smc_cfg, cfg.schedule.gammas(t));
    if (t >= cfg.schedule.t_b) cur = lambda_mstep(weighted_suffstats(set), cur, mask);
    trace.push_back({t, cur, log_marginal_likelihood(set)});
  }
  return trace;
}

struct SelectKResult {
  std::vector<int> k_values;
  std::vector<std::vector<double>> norm_loglik;  // [candidate][t], log p(y_1:t | K) / t
  std::vector<int> argmax_k;                     // best K value at each t
  int best_k = 0;
  std::vector<EstimateTrace> traces;
};

// Fixed-K online EM per candidate; candidates are compared by per-step
// normalized marginal likelihood. Ties go to the smaller K.
inline SelectKResult select_k(const std::vector<ObservationScan>& scans,
                              const std::vector<int>& k_range, const CvParams& theta0,
                              const OnlineEmConfig& cfg) {
  if (k_range.empty()) throw UsageError("select_k: empty candidate list");
  if (scans.empty()) throw UsageError("select_k: no scans");
  SelectKResult res;
  res.k_values = k_range;
  res.norm_loglik.resize(k_range.size());
  res.traces.resize(k_range.size());
  for (std::size_t c = 0; c < k_range.size(); ++c) {
    if (k_range[c] < 0) throw UsageError("select_k: negative candidate K");
    OnlineEmConfig kcfg = cfg;
    kcfg.fixed_k = k_range[c];
    res.traces[c] = online_em(scans, theta0, kcfg);
    res.norm_loglik[c].resize(scans.size());
    for (std::size_t t = 0; t < scans.size(); ++t)
      res.norm_loglik[c][t] = *res.traces[c][t].loglik / static_cast<double>(t + 1);
  }
  res.argmax_k.resize(scans.size());
  for (std::size_t t = 0; t < scans.size(); ++t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k_range.size(); ++c)
      if (res.norm_loglik[c][t] > res.norm_loglik[best][t]) best = c;
    res.argmax_k[t] = k_range[best];
  }
  res.best_k = res.argmax_k.back();
  return res;
}

struct TrackPoint {
  int t = 0;
  double k_hat = 0.0;   // weighted mean particle target count
  double loglik = 0.0;  // running log p(y_1:t)
};

// Pure filtering pass at fixed parameters; the per-step summary drives the
// track mode and the particle-count adequacy check.
inline std::vector<TrackPoint> track_filter(const std::vector<ObservationScan>& scans,
                                            const CvParams& cv, const SmcConfig& cfg) {
  ModelParams theta = cv_assemble_stationary(cv, cv.rho);
  ParticleSet set = init_particles(cfg.N);
  std::vector<TrackPoint> out;
  out.reserve(scans.size());
  for (int t = 1; t <= static_cast<int>(scans.size()); ++t) {
    smc_step(set, scans[t - 1], theta, cfg, 1.0);
    double k_hat = 0.0;
    for (const auto& p : set.particles)
      k_hat += std::exp(p.log_weight) * static_cast<double>(p.state.targets.size());
    out.push_back({t, k_hat, log_marginal_likelihood(set)});
  }
  return out;
}

}  // namespace mtt
