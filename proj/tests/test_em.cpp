#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "mtt/mtt.hpp"
#include "oracles.hpp"

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-12); }

mtt::CvParams truth_cv() {
  mtt::CvParams cv;
  cv.lambda_b = 0.2;
  cv.lambda_f = 10.0;
  cv.p_d = 0.9;
  cv.p_s = 0.95;
  cv.mu_bx = 0.0;
  cv.mu_by = 0.0;
  cv.sigma_bp2 = 25.0;
  cv.sigma_bv2 = 4.0;
  cv.sigma_xp2 = 0.0;
  cv.sigma_xv2 = 0.0625;
  cv.sigma_y2 = 4.0;
  cv.delta = 1.0;
  cv.kappa = 300.0;  // wide enough that region clipping is negligible
  return cv;
}

}  // namespace

TEST_CASE("step sizes satisfy the stochastic-approximation conditions", "[em]") {
  for (double alpha : {0.55, 0.8, 1.0}) {
    mtt::StepSizeSchedule sched;
    sched.alpha = alpha;
    double sum = 0.0, sumsq = 0.0;
    const int terms = 1000000;
    for (int j = 1; j <= terms; ++j) {
      const double g = sched.gamma_fast(j);
      sum += g;
      sumsq += g * g;
    }
    // divergent first moment: integral lower bound
    const double lower = alpha < 1.0
                             ? (std::pow(static_cast<double>(terms), 1.0 - alpha) - 1.0) /
                                   (1.0 - alpha)
                             : std::log(static_cast<double>(terms));
    CHECK(sum >= lower);
    // summable second moment: integral upper bound
    CHECK(sumsq <= 1.0 + 1.0 / (2.0 * alpha - 1.0) + 1e-9);
    CHECK(sched.gamma_fast(1) == 1.0);
  }
}

TEST_CASE("the schedule wires the override exponent to the slow statistics", "[em]") {
  mtt::StepSizeSchedule sched;  // defaults: alpha 0.8, sigma_xv2 override 0.55
  CHECK(sched.fast_exponent() == 0.8);
  CHECK(sched.slow_exponent() == 0.55);
  CHECK(sched.gamma_fast(4) == Catch::Approx(std::pow(4.0, -0.8)));
  CHECK(sched.gamma_slow(4) == Catch::Approx(std::pow(4.0, -0.55)));
  const mtt::SmoothGammas g = sched.gammas(9);
  CHECK(g.fast == Catch::Approx(std::pow(9.0, -0.8)));
  CHECK(g.slow == Catch::Approx(std::pow(9.0, -0.55)));

  sched.overrides.clear();
  CHECK(sched.slow_exponent() == 0.8);
  sched.alpha = 0.6;
  sched.overrides["sigma_xv2"] = 0.51;
  CHECK(sched.fast_exponent() == 0.6);
  CHECK(sched.slow_exponent() == 0.51);
}

TEST_CASE("exact EM on the true associations recovers the generator", "[em]") {
  const mtt::CvParams truth = truth_cv();
  const mtt::SimulationOutput sim = mtt::simulate(mtt::cv_assemble(truth), 2000, 77);
  const mtt::SufficientStatSet realized = oracle::realized_stats(sim.truth, sim.scans);
  REQUIRE(realized.s13 > 200.0);  // enough births for tight birth-moment estimates

  mtt::CvParams theta0 = truth;
  theta0.p_d = 0.6;
  theta0.p_s = 0.8;
  theta0.lambda_b = 0.5;
  theta0.lambda_f = 15.0;
  theta0.mu_bx = 3.0;
  theta0.mu_by = -3.0;
  theta0.sigma_bp2 = 9.0;
  theta0.sigma_bv2 = 1.0;
  theta0.sigma_xv2 = 0.25;
  theta0.sigma_y2 = 10.0;

  // sigma_xv2 is weakly informed here (sigma_y2 = 4 dominates the per-step
  // displacement variance), so EM contracts it slowly; 200 iterations are
  // needed to reach the fixed point, the rest settle within ~25.
  const mtt::EstimateTrace trace = mtt::oracle_em(sim.scans, sim.truth, theta0, 200);
  REQUIRE(trace.size() == 201);
  CHECK(trace[0].index == 0);
  CHECK(!trace[0].loglik.has_value());

  // monotone complete-data likelihood, recorded at the entering iterate
  for (std::size_t j = 2; j < trace.size(); ++j) {
    REQUIRE(trace[j].loglik.has_value());
    const double prev = *trace[j - 1].loglik;
    CHECK(*trace[j].loglik >= prev - 1e-9 * std::abs(prev));
  }

  // the discrete parameters hit their realized count ratios immediately
  const mtt::CvParams& first = trace[1].theta;
  CHECK(first.p_d == Catch::Approx(realized.s9 / realized.s10).margin(1e-12));
  CHECK(first.p_s == Catch::Approx(realized.s11 / realized.s12).margin(1e-12));
  CHECK(first.lambda_b == Catch::Approx(realized.s13 / realized.s15).margin(1e-12));
  CHECK(first.lambda_f == Catch::Approx(realized.s14 / realized.s15).margin(1e-12));

  // the continuous parameters converge near the generator
  const mtt::CvParams& last = trace.back().theta;
  CHECK(rel_err(last.sigma_y2, truth.sigma_y2) < 0.15);
  CHECK(rel_err(last.sigma_xv2, truth.sigma_xv2) < 0.25);
  CHECK(rel_err(last.sigma_bp2, truth.sigma_bp2) < 0.30);
  CHECK(rel_err(last.sigma_bv2, truth.sigma_bv2) < 0.30);
  CHECK(std::abs(last.mu_bx - truth.mu_bx) < 1.2);
  CHECK(std::abs(last.mu_by - truth.mu_by) < 1.2);
  // and the count parameters stay near the generator too
  CHECK(std::abs(last.p_d - truth.p_d) < 0.05);
  CHECK(std::abs(last.p_s - truth.p_s) < 0.05);
}

TEST_CASE("exact EM validates its inputs", "[em]") {
  const mtt::CvParams truth = truth_cv();
  const mtt::SimulationOutput sim = mtt::simulate(mtt::cv_assemble(truth), 5, 1);
  std::vector<mtt::ObservationScan> short_scans(sim.scans.begin(), sim.scans.end() - 1);
  CHECK_THROWS_AS(mtt::oracle_em(short_scans, sim.truth, truth, 1), mtt::DataError);
  CHECK_THROWS_AS(mtt::oracle_em(sim.scans, sim.truth, truth, -1), mtt::UsageError);
}

TEST_CASE("batch stochastic EM degenerates to plain EM on a single visible track", "[em]") {
  // Data: one immortal, always-detected target, no clutter. With near-degenerate
  // detection/clutter rates in the fit, the only particle histories with
  // non-vanishing weight reproduce the true association, so the stochastic
  // E-step collapses onto the exact single-track smoother and each iteration
  // must match deterministic EM on the state-space parameters.
  mtt::CvParams truth;
  truth.lambda_b = 0.2;  // irrelevant: the population is pinned
  truth.lambda_f = 0.0;
  truth.p_d = 1.0;
  truth.p_s = 1.0;
  truth.mu_bx = 3.0;
  truth.mu_by = -2.0;
  truth.sigma_bp2 = 25.0;
  truth.sigma_bv2 = 4.0;
  truth.sigma_xp2 = 0.0;
  truth.sigma_xv2 = 0.25;
  truth.sigma_y2 = 4.0;
  truth.delta = 1.0;
  truth.kappa = 1e6;
  const int n = 25;
  const mtt::SimulationOutput sim = mtt::simulate_fixed_k(mtt::cv_assemble(truth), 1, n, 3);
  std::vector<mtt::Vec2> ys;
  for (const auto& scan : sim.scans) {
    REQUIRE(scan.points.size() == 1);
    ys.push_back(scan.points[0]);
  }

  mtt::CvParams theta0 = truth;
  theta0.lambda_b = 0.3;
  theta0.lambda_f = 1e-9;
  // Miss/death channels at 1e-12 keep phantom-birth particles (a real channel
  // of the full model that the single-chain reference deliberately excludes)
  // at ~1e-13 relative mass in the first sweep. Later sweeps run at the
  // M-step probability ceiling, but by then lambda_b has contracted to ~1/n,
  // which bounds the phantom mass well below the comparison tolerance.
  theta0.p_d = 1.0 - 1e-12;
  theta0.p_s = 1.0 - 1e-12;
  theta0.mu_bx = 0.0;
  theta0.mu_by = 0.0;
  theta0.sigma_bp2 = 9.0;
  theta0.sigma_bv2 = 1.0;
  theta0.sigma_xv2 = 1.0;
  theta0.sigma_y2 = 9.0;

  mtt::SaemConfig cfg;
  cfg.N = 500;
  cfg.L = 1;
  cfg.iters = 6;
  cfg.seed = 42;
  cfg.schedule.alpha = 0.0;  // gamma = 1 every iteration: no averaging memory
  cfg.schedule.overrides.clear();
  const mtt::EstimateTrace got = mtt::saem_batch(sim.scans, theta0, cfg);

  const std::vector<mtt::CvParams> ref = oracle::single_chain_em(ys, theta0, cfg.iters);
  REQUIRE(got.size() == ref.size());
  for (std::size_t j = 1; j < got.size(); ++j) {
    CHECK(rel_err(got[j].theta.mu_bx, ref[j].mu_bx) < 1e-6);
    CHECK(rel_err(got[j].theta.mu_by, ref[j].mu_by) < 1e-6);
    CHECK(rel_err(got[j].theta.sigma_bp2, ref[j].sigma_bp2) < 1e-6);
    CHECK(rel_err(got[j].theta.sigma_bv2, ref[j].sigma_bv2) < 1e-6);
    CHECK(rel_err(got[j].theta.sigma_xv2, ref[j].sigma_xv2) < 1e-6);
    CHECK(rel_err(got[j].theta.sigma_y2, ref[j].sigma_y2) < 1e-6);
  }
}

TEST_CASE("the first batch iteration is reproducible through the public pieces", "[em]") {
  const mtt::CvParams truth = truth_cv();
  const mtt::SimulationOutput sim = mtt::simulate(mtt::cv_assemble(truth), 15, 19);
  mtt::CvParams theta0 = truth;
  theta0.p_d = 0.7;
  theta0.sigma_y2 = 8.0;

  mtt::SaemConfig cfg;
  cfg.N = 40;
  cfg.L = 5;
  cfg.iters = 1;
  cfg.seed = 77;
  const mtt::EstimateTrace trace = mtt::saem_batch(sim.scans, theta0, cfg);
  REQUIRE(trace.size() == 2);

  // manual reconstruction: fresh filter pass at theta0 with the iteration seed,
  // unit blending weight (gamma(1) = 1), then the closed-form M-step
  mtt::SmcConfig smc_cfg;
  smc_cfg.N = cfg.N;
  smc_cfg.L = cfg.L;
  smc_cfg.ess_threshold = cfg.ess_threshold;
  smc_cfg.seed = mtt::detail::sub_seed(cfg.seed, 1);
  const mtt::ModelParams theta = mtt::cv_assemble_stationary(theta0, theta0.rho);
  mtt::ParticleSet set = mtt::init_particles(cfg.N);
  for (const auto& scan : sim.scans) mtt::smc_step(set, scan, theta, smc_cfg, 1.0);
  const mtt::CvParams manual = mtt::lambda_mstep(mtt::weighted_suffstats(set), theta0);

  CHECK(trace[1].theta.p_d == manual.p_d);
  CHECK(trace[1].theta.p_s == manual.p_s);
  CHECK(trace[1].theta.lambda_b == manual.lambda_b);
  CHECK(trace[1].theta.lambda_f == manual.lambda_f);
  CHECK(trace[1].theta.sigma_xv2 == manual.sigma_xv2);
  CHECK(trace[1].theta.sigma_y2 == manual.sigma_y2);
  CHECK(trace[1].theta.mu_bx == manual.mu_bx);
  REQUIRE(trace[1].loglik.has_value());
  CHECK(*trace[1].loglik == mtt::log_marginal_likelihood(set));
  CHECK_THROWS_AS(mtt::saem_batch(sim.scans, theta0, [&] {
                    mtt::SaemConfig bad = cfg;
                    bad.iters = 0;
                    return bad;
                  }()),
                  mtt::UsageError);
}

TEST_CASE("online EM before burn-in leaves the parameters untouched", "[em]") {
  const mtt::CvParams truth = truth_cv();
  const mtt::SimulationOutput sim = mtt::simulate(mtt::cv_assemble(truth), 5, 23);
  mtt::OnlineEmConfig cfg;
  cfg.N = 20;
  cfg.L = 3;
  cfg.seed = 5;
  cfg.schedule.t_b = 10;  // burn-in longer than the data
  const mtt::EstimateTrace trace = mtt::online_em(sim.scans, truth, cfg);
  REQUIRE(trace.size() == 5);
  int expect_index = 1;
  for (const auto& tp : trace) {
    CHECK(tp.index == expect_index++);
    CHECK(tp.theta.p_d == truth.p_d);
    CHECK(tp.theta.sigma_y2 == truth.sigma_y2);
    CHECK(tp.theta.lambda_f == truth.lambda_f);
    REQUIRE(tp.loglik.has_value());
  }
  // the running marginal likelihood is cumulative, hence decreasing in t
  for (std::size_t t = 1; t < trace.size(); ++t) CHECK(*trace[t].loglik < *trace[t - 1].loglik);
}

TEST_CASE("fixed-count online EM freezes the structural parameters", "[em]") {
  mtt::CvParams truth = truth_cv();
  truth.kappa = 1e5;
  const mtt::SimulationOutput sim = mtt::simulate_fixed_k(mtt::cv_assemble(truth), 2, 40, 29);
  mtt::CvParams theta0 = truth;
  theta0.p_d = 0.7;
  theta0.lambda_f = 15.0;
  theta0.sigma_y2 = 9.0;
  theta0.sigma_xv2 = 0.2;

  mtt::OnlineEmConfig cfg;
  cfg.N = 50;
  cfg.L = 5;
  cfg.seed = 11;
  cfg.fixed_k = 2;
  const mtt::EstimateTrace trace = mtt::online_em(sim.scans, theta0, cfg);
  REQUIRE(trace.size() == 40);
  for (const auto& tp : trace) {
    CHECK(tp.theta.p_s == 1.0);
    CHECK(tp.theta.lambda_b == 0.0);
    CHECK(tp.theta.mu_bx == theta0.mu_bx);
    CHECK(tp.theta.mu_by == theta0.mu_by);
    CHECK(tp.theta.sigma_bp2 == theta0.sigma_bp2);
    CHECK(tp.theta.sigma_bv2 == theta0.sigma_bv2);
  }
  // the estimable parameters do move once the burn-in has passed
  const mtt::CvParams& last = trace.back().theta;
  CHECK(last.p_d != theta0.p_d);
  CHECK(last.lambda_f != theta0.lambda_f);
  CHECK(last.sigma_y2 != theta0.sigma_y2);
  // before the burn-in they stay at the (masked) initial values
  CHECK(trace[0].theta.p_d == theta0.p_d);
  CHECK(trace[0].theta.lambda_f == theta0.lambda_f);
}

TEST_CASE("candidate selection identifies an empty population", "[em]") {
  mtt::CvParams clutter_truth = truth_cv();
  clutter_truth.lambda_b = 0.0;
  clutter_truth.lambda_f = 3.0;
  clutter_truth.kappa = 20.0;
  const mtt::SimulationOutput sim = mtt::simulate(mtt::cv_assemble(clutter_truth), 60, 37);

  mtt::CvParams theta0;
  theta0.lambda_b = 0.1;
  theta0.lambda_f = 3.0;
  theta0.p_d = 0.5;
  theta0.p_s = 0.9;
  theta0.mu_bx = 0.0;
  theta0.mu_by = 0.0;
  theta0.sigma_bp2 = 100.0;
  theta0.sigma_bv2 = 1.0;
  theta0.sigma_xp2 = 0.0;
  theta0.sigma_xv2 = 0.1;
  theta0.sigma_y2 = 4.0;
  theta0.delta = 1.0;
  theta0.kappa = 20.0;

  mtt::OnlineEmConfig cfg;
  cfg.N = 50;
  cfg.L = 3;
  cfg.seed = 13;
  // burn-in past the horizon: no parameter update fires, so the K = 0
  // criterion stays the running clutter likelihood at theta0 exactly
  cfg.schedule.t_b = 1000;
  const mtt::SelectKResult res = mtt::select_k(sim.scans, {0, 1}, theta0, cfg);
  REQUIRE(res.k_values == std::vector<int>{0, 1});
  REQUIRE(res.norm_loglik.size() == 2);
  REQUIRE(res.norm_loglik[0].size() == sim.scans.size());

  // the K = 0 candidate's criterion is the exact running clutter likelihood
  double running = 0.0;
  for (std::size_t t = 0; t < sim.scans.size(); ++t) {
    const int k = static_cast<int>(sim.scans[t].points.size());
    running += oracle::poisson_lp(k, theta0.lambda_f) -
               k * std::log(mtt::cv_assemble(theta0).region_volume());
    CHECK(res.norm_loglik[0][t] == Catch::Approx(running / (t + 1)).margin(1e-8));
  }
  // and it wins everywhere once the comparison has any data behind it
  for (std::size_t t = 10; t < res.argmax_k.size(); ++t) CHECK(res.argmax_k[t] == 0);
  CHECK(res.best_k == 0);

  // determinism
  const mtt::SelectKResult res2 = mtt::select_k(sim.scans, {0, 1}, theta0, cfg);
  CHECK(res2.norm_loglik == res.norm_loglik);
  CHECK(res2.argmax_k == res.argmax_k);

  // input validation
  CHECK_THROWS_AS(mtt::select_k(sim.scans, {}, theta0, cfg), mtt::UsageError);
  CHECK_THROWS_AS(mtt::select_k(sim.scans, {-1, 2}, theta0, cfg), mtt::UsageError);
  CHECK_THROWS_AS(mtt::select_k({}, {0, 1}, theta0, cfg), mtt::UsageError);
}

TEST_CASE("forced birth-death histories drive the particle associations", "[em]") {
  mtt::CvParams truth = truth_cv();
  truth.kappa = 1e5;
  const mtt::ModelParams theta = mtt::cv_assemble(truth);
  const mtt::SimulationOutput sim = mtt::simulate(theta, 15, 41);

  mtt::SmcConfig cfg;
  cfg.N = 8;
  cfg.L = 3;
  cfg.seed = 7;
  cfg.forced = &sim.truth;
  mtt::ParticleSet set = mtt::init_particles(cfg.N);
  for (std::size_t t = 0; t < sim.scans.size(); ++t) {
    mtt::smc_step(set, sim.scans[t], theta, cfg, mtt::SmoothGammas(1.0));
    for (const auto& p : set.particles) {
      CHECK(p.record.c_s == sim.truth.records[t].c_s);
      CHECK(p.record.k_b == sim.truth.records[t].k_b);
    }
  }

  // an inconsistent forced history is rejected
  mtt::GroundTruth bogus = sim.truth;
  bogus.records[0].c_s = {1};  // no particle holds a target at t = 0
  mtt::SmcConfig bad = cfg;
  bad.forced = &bogus;
  mtt::ParticleSet fresh = mtt::init_particles(2);
  CHECK_THROWS_AS(mtt::smc_step(fresh, sim.scans[0], theta, bad, mtt::SmoothGammas(1.0)),
                  mtt::DataError);

  // forced mode through the online estimator runs end to end
  mtt::OnlineEmConfig ocfg;
  ocfg.N = 8;
  ocfg.L = 3;
  ocfg.seed = 9;
  ocfg.forced = &sim.truth;
  const mtt::EstimateTrace trace = mtt::online_em(sim.scans, truth, ocfg);
  CHECK(trace.size() == sim.scans.size());
}
