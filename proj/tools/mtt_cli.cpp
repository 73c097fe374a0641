// Command-line harness for simulating multiple-target tracking data and
// estimating model parameters from observation scans.
//
// Modes:
//   simulate    draw scans + ground truth from the generative model
//   fit-batch   stochastic-approximation EM over repeated particle passes
//   fit-online  single-pass online EM with per-scan parameter updates
//   oracle-em   exact EM when the association ground truth is known
//   track       run the particle filter at fixed parameters, report target counts
//   select-k    score a set of candidate fixed target counts by likelihood
//   check-n     pick the smallest particle count meeting a tracking-error bound
//
// Every run writes manifest.json (the fully resolved configuration) into the
// output directory; re-running with `--config manifest.json` reproduces the run.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mtt/em.hpp"
#include "mtt/io.hpp"
#include "mtt/model.hpp"
#include "mtt/simulator.hpp"
#include "mtt/smc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Settings {
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string scans_path;
  std::string truth_path;
  std::optional<mtt::CvParams> theta;
  int horizon = 0;  // simulated scan count
  std::optional<int> fixed_k;
  std::optional<int> particles;  // per-mode default when absent
  int l_best = 10;
  int iters = 100;
  double ess_threshold = 0.5;
  mtt::StepSizeSchedule schedule;
  std::vector<int> k_range;
  bool forced_birth_death = false;
  std::vector<int> check_candidates = {50, 100, 200};
  int verify_n = 0;
  double check_bound = 1.0;
};

void require_keys(const json& j, const std::vector<std::string>& known,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) {
      if (it.key() == k) { ok = true; break; }
    }
    if (!ok) {
      throw mtt::UsageError("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

double number_at(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number()) {
    throw mtt::UsageError("key \"" + key + "\" in " + where + " must be a number");
  }
  return v.get<double>();
}

int int_at(const json& j, const std::string& key, const std::string& where) {
  const json& v = j.at(key);
  if (!v.is_number_integer()) {
    throw mtt::UsageError("key \"" + key + "\" in " + where + " must be an integer");
  }
  return v.get<int>();
}

void apply_schedule(mtt::StepSizeSchedule& sched, const json& j) {
  if (!j.is_object()) throw mtt::UsageError("\"schedule\" must be an object");
  require_keys(j, {"alpha", "overrides", "t_b"}, "\"schedule\"");
  if (j.contains("alpha")) sched.alpha = number_at(j, "alpha", "\"schedule\"");
  if (j.contains("t_b")) sched.t_b = int_at(j, "t_b", "\"schedule\"");
  if (j.contains("overrides")) {
    const json& ov = j.at("overrides");
    if (!ov.is_object()) throw mtt::UsageError("\"schedule.overrides\" must be an object");
    sched.overrides.clear();
    for (auto it = ov.begin(); it != ov.end(); ++it) {
      if (it.key() != "sigma_xv2") {
        throw mtt::UsageError(
            "unsupported step-size override \"" + it.key() +
            "\" (only \"sigma_xv2\" takes a slower schedule)");
      }
      if (!it.value().is_number()) {
        throw mtt::UsageError("step-size override for \"" + it.key() +
                              "\" must be a number");
      }
      sched.overrides[it.key()] = it.value().get<double>();
    }
  }
}

void validate_schedule(const mtt::StepSizeSchedule& sched) {
  auto check = [](double a, const std::string& name) {
    if (!(a > 0.5) || !(a <= 1.0)) {
      throw mtt::UsageError("step-size exponent " + name +
                            " must satisfy 0.5 < exponent <= 1");
    }
  };
  check(sched.alpha, "alpha");
  for (const auto& [key, value] : sched.overrides) check(value, "overrides." + key);
  if (sched.t_b < 0) throw mtt::UsageError("schedule.t_b must be nonnegative");
}

void apply_config(Settings& s, const json& j) {
  if (!j.is_object()) throw mtt::UsageError("config root must be a JSON object");
  require_keys(j,
               {"mode", "seed", "out_dir", "scans", "truth", "theta", "n",
                "fixed_k", "N", "L", "iters", "ess_threshold", "schedule",
                "k_range", "forced_birth_death", "check_n"},
               "config");
  if (j.contains("mode")) s.mode = j.at("mode").get<std::string>();
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_integer()) {
      throw mtt::UsageError("\"seed\" must be an integer");
    }
    s.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("out_dir")) s.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("scans")) s.scans_path = j.at("scans").get<std::string>();
  if (j.contains("truth")) s.truth_path = j.at("truth").get<std::string>();
  if (j.contains("theta")) s.theta = mtt::io::cv_from_json(j.at("theta"));
  if (j.contains("n")) s.horizon = int_at(j, "n", "config");
  if (j.contains("fixed_k")) s.fixed_k = int_at(j, "fixed_k", "config");
  if (j.contains("N")) s.particles = int_at(j, "N", "config");
  if (j.contains("L")) s.l_best = int_at(j, "L", "config");
  if (j.contains("iters")) s.iters = int_at(j, "iters", "config");
  if (j.contains("ess_threshold")) {
    s.ess_threshold = number_at(j, "ess_threshold", "config");
  }
  if (j.contains("schedule")) apply_schedule(s.schedule, j.at("schedule"));
  if (j.contains("k_range")) {
    if (!j.at("k_range").is_array()) throw mtt::UsageError("\"k_range\" must be an array");
    s.k_range.clear();
    for (const auto& v : j.at("k_range")) {
      if (!v.is_number_integer()) {
        throw mtt::UsageError("\"k_range\" entries must be integers");
      }
      s.k_range.push_back(v.get<int>());
    }
  }
  if (j.contains("forced_birth_death")) {
    if (!j.at("forced_birth_death").is_boolean()) {
      throw mtt::UsageError("\"forced_birth_death\" must be a boolean");
    }
    s.forced_birth_death = j.at("forced_birth_death").get<bool>();
  }
  if (j.contains("check_n")) {
    const json& c = j.at("check_n");
    if (!c.is_object()) throw mtt::UsageError("\"check_n\" must be an object");
    require_keys(c, {"candidates", "verify_n", "bound"}, "\"check_n\"");
    if (c.contains("candidates")) {
      if (!c.at("candidates").is_array()) {
        throw mtt::UsageError("\"check_n.candidates\" must be an array");
      }
      s.check_candidates.clear();
      for (const auto& v : c.at("candidates")) {
        if (!v.is_number_integer()) {
          throw mtt::UsageError("\"check_n.candidates\" entries must be integers");
        }
        s.check_candidates.push_back(v.get<int>());
      }
    }
    if (c.contains("verify_n")) s.verify_n = int_at(c, "verify_n", "\"check_n\"");
    if (c.contains("bound")) s.check_bound = number_at(c, "bound", "\"check_n\"");
  }
}

json schedule_to_json(const mtt::StepSizeSchedule& sched) {
  json ov = json::object();
  for (const auto& [key, value] : sched.overrides) ov[key] = value;
  return json{{"alpha", sched.alpha}, {"overrides", ov}, {"t_b", sched.t_b}};
}

json manifest_json(const Settings& s, int resolved_particles) {
  json j;
  j["mode"] = s.mode;
  j["seed"] = *s.seed;
  j["out_dir"] = s.out_dir;
  if (!s.scans_path.empty()) j["scans"] = s.scans_path;
  if (!s.truth_path.empty()) j["truth"] = s.truth_path;
  if (s.theta) j["theta"] = mtt::io::cv_to_json(*s.theta);
  if (s.mode == "simulate") j["n"] = s.horizon;
  if (s.fixed_k) j["fixed_k"] = *s.fixed_k;
  if (s.mode != "simulate" && s.mode != "oracle-em") {
    j["N"] = resolved_particles;
    j["L"] = s.l_best;
    j["ess_threshold"] = s.ess_threshold;
  }
  if (s.mode == "fit-batch" || s.mode == "oracle-em") j["iters"] = s.iters;
  if (s.mode == "fit-batch" || s.mode == "fit-online" || s.mode == "select-k" ||
      s.mode == "check-n") {
    j["schedule"] = schedule_to_json(s.schedule);
  }
  if (s.mode == "select-k") j["k_range"] = s.k_range;
  if (s.mode == "fit-online") j["forced_birth_death"] = s.forced_birth_death;
  if (s.mode == "check-n") {
    j["check_n"] = json{{"candidates", s.check_candidates},
                        {"verify_n", s.verify_n},
                        {"bound", s.check_bound}};
  }
  return j;
}

void write_manifest(const Settings& s, int resolved_particles) {
  auto out = mtt::io::open_output((fs::path(s.out_dir) / "manifest.json").string());
  out << manifest_json(s, resolved_particles).dump(2) << "\n";
}

const mtt::CvParams& require_theta(const Settings& s) {
  if (!s.theta) throw mtt::UsageError("mode \"" + s.mode + "\" requires \"theta\"");
  return *s.theta;
}

std::vector<mtt::ObservationScan> require_scans(const Settings& s) {
  if (s.scans_path.empty()) {
    throw mtt::UsageError("mode \"" + s.mode + "\" requires --scans");
  }
  auto scans = mtt::io::read_scans_jsonl(s.scans_path);
  if (scans.empty()) {
    throw mtt::UsageError("scan file contains no scans: " + s.scans_path);
  }
  return scans;
}

void check_particle_knobs(const Settings& s, int n_particles) {
  if (n_particles < 1) throw mtt::UsageError("\"N\" must be at least 1");
  if (s.l_best < 1) throw mtt::UsageError("\"L\" must be at least 1");
  if (!(s.ess_threshold > 0.0) || s.ess_threshold > 1.0) {
    throw mtt::UsageError("\"ess_threshold\" must lie in (0, 1]");
  }
}

int run_simulate(const Settings& s) {
  const mtt::CvParams& cv = require_theta(s);
  mtt::validate_cv(cv);
  if (s.horizon < 1) throw mtt::UsageError("mode \"simulate\" requires \"n\" >= 1");
  mtt::ModelParams theta = mtt::cv_assemble_stationary(cv, cv.rho);
  mtt::SimulationOutput sim =
      s.fixed_k ? mtt::simulate_fixed_k(theta, *s.fixed_k, s.horizon, *s.seed)
                : mtt::simulate(theta, s.horizon, *s.seed);
  mtt::io::write_scans_jsonl((fs::path(s.out_dir) / "scans.jsonl").string(), sim.scans);
  mtt::io::write_truth_jsonl((fs::path(s.out_dir) / "truth.jsonl").string(), sim.truth);
  write_manifest(s, 0);
  std::size_t total_points = 0;
  for (const auto& scan : sim.scans) total_points += scan.points.size();
  std::cout << "wrote " << sim.scans.size() << " scans (" << total_points
            << " points) to " << s.out_dir << "\n";
  return 0;
}

int run_oracle_em(const Settings& s) {
  const mtt::CvParams& cv = require_theta(s);
  mtt::validate_cv(cv);
  auto scans = require_scans(s);
  if (s.truth_path.empty()) {
    throw mtt::UsageError("mode \"oracle-em\" requires --truth");
  }
  mtt::GroundTruth truth = mtt::io::read_truth_jsonl(s.truth_path);
  if (s.iters < 1) throw mtt::UsageError("\"iters\" must be at least 1");
  mtt::EstimateTrace trace = mtt::oracle_em(scans, truth, cv, s.iters);
  mtt::io::write_trace_csv((fs::path(s.out_dir) / "trace.csv").string(), trace);
  write_manifest(s, 0);
  std::cout << "oracle EM finished after " << s.iters << " iterations\n";
  return 0;
}

int run_fit_batch(const Settings& s) {
  const mtt::CvParams& cv = require_theta(s);
  mtt::validate_cv(cv);
  auto scans = require_scans(s);
  validate_schedule(s.schedule);
  if (s.iters < 1) throw mtt::UsageError("\"iters\" must be at least 1");
  const int n_particles = s.particles.value_or(200);
  check_particle_knobs(s, n_particles);
  mtt::SaemConfig cfg;
  cfg.N = n_particles;
  cfg.L = s.l_best;
  cfg.ess_threshold = s.ess_threshold;
  cfg.schedule = s.schedule;
  cfg.iters = s.iters;
  cfg.seed = *s.seed;
  mtt::EstimateTrace trace = mtt::saem_batch(scans, cv, cfg);
  mtt::io::write_trace_csv((fs::path(s.out_dir) / "trace.csv").string(), trace);
  write_manifest(s, n_particles);
  std::cout << "batch fit finished after " << s.iters << " iterations\n";
  return 0;
}

int run_fit_online(const Settings& s) {
  const mtt::CvParams& cv = require_theta(s);
  mtt::validate_cv(cv);
  auto scans = require_scans(s);
  validate_schedule(s.schedule);
  const int n_particles = s.particles.value_or(100);
  check_particle_knobs(s, n_particles);
  mtt::OnlineEmConfig cfg;
  cfg.N = n_particles;
  cfg.L = s.l_best;
  cfg.ess_threshold = s.ess_threshold;
  cfg.schedule = s.schedule;
  cfg.seed = *s.seed;
  cfg.fixed_k = s.fixed_k;
  mtt::GroundTruth truth;
  if (s.forced_birth_death) {
    if (s.truth_path.empty()) {
      throw mtt::UsageError("\"forced_birth_death\" requires --truth");
    }
    truth = mtt::io::read_truth_jsonl(s.truth_path);
    cfg.forced = &truth;
  }
  mtt::EstimateTrace trace = mtt::online_em(scans, cv, cfg);
  mtt::io::write_trace_csv((fs::path(s.out_dir) / "trace.csv").string(), trace);
  write_manifest(s, n_particles);
  std::cout << "online fit finished after " << scans.size() << " scans\n";
  return 0;
}

int run_track(const Settings& s) {
  const mtt::CvParams& cv = require_theta(s);
  mtt::validate_cv(cv);
  auto scans = require_scans(s);
  const int n_particles = s.particles.value_or(100);
  check_particle_knobs(s, n_particles);
  mtt::SmcConfig cfg;
  cfg.N = n_particles;
  cfg.L = s.l_best;
  cfg.ess_threshold = s.ess_threshold;
  cfg.seed = *s.seed;
  cfg.fixed_k = s.fixed_k;
  std::vector<mtt::TrackPoint> points = mtt::track_filter(scans, cv, cfg);
  mtt::io::write_track_csv((fs::path(s.out_dir) / "track.csv").string(), points);
  write_manifest(s, n_particles);
  std::cout << "tracked " << scans.size() << " scans\n";
  return 0;
}

int run_select_k(const Settings& s) {
  const mtt::CvParams& cv = require_theta(s);
  mtt::validate_cv(cv);
  auto scans = require_scans(s);
  validate_schedule(s.schedule);
  if (s.k_range.empty()) {
    throw mtt::UsageError("mode \"select-k\" requires a nonempty \"k_range\"");
  }
  const int n_particles = s.particles.value_or(100);
  check_particle_knobs(s, n_particles);
  mtt::OnlineEmConfig cfg;
  cfg.N = n_particles;
  cfg.L = s.l_best;
  cfg.ess_threshold = s.ess_threshold;
  cfg.schedule = s.schedule;
  cfg.seed = *s.seed;
  mtt::SelectKResult result = mtt::select_k(scans, s.k_range, cv, cfg);
  mtt::io::write_selectk_csv((fs::path(s.out_dir) / "selectk.csv").string(), result);
  write_manifest(s, n_particles);
  std::cout << "best fixed target count: " << result.best_k << "\n";
  return 0;
}

int run_check_n(const Settings& s) {
  const mtt::CvParams& cv = require_theta(s);
  mtt::validate_cv(cv);
  auto scans = require_scans(s);
  validate_schedule(s.schedule);
  if (s.check_candidates.empty()) {
    throw mtt::UsageError("mode \"check-n\" requires nonempty \"check_n.candidates\"");
  }
  if (s.verify_n < 1) {
    throw mtt::UsageError("mode \"check-n\" requires \"check_n.verify_n\" >= 1");
  }
  if (!(s.check_bound > 0.0)) {
    throw mtt::UsageError("\"check_n.bound\" must be positive");
  }
  if (s.l_best < 1) throw mtt::UsageError("\"L\" must be at least 1");
  if (!(s.ess_threshold > 0.0) || s.ess_threshold > 1.0) {
    throw mtt::UsageError("\"ess_threshold\" must lie in (0, 1]");
  }

  // Verification seeds are shared across candidates so that the particle
  // count is the only knob that changes between rows of the report.
  const std::uint64_t verify_seed = mtt::detail::sub_seed(*s.seed, 0x5eedu);
  const std::uint64_t track_seed = mtt::detail::sub_seed(*s.seed, 0x7eacu);

  auto out = mtt::io::open_output((fs::path(s.out_dir) / "check_n.csv").string());
  out << "N,mean_abs_count_error,within_bound\n";
  int recommended = -1;
  std::vector<std::pair<int, double>> rows;
  for (std::size_t c = 0; c < s.check_candidates.size(); ++c) {
    const int n_particles = s.check_candidates[c];
    if (n_particles < 1) {
      throw mtt::UsageError("\"check_n.candidates\" entries must be at least 1");
    }

    // 1) fit parameters online with this particle count
    mtt::OnlineEmConfig fit_cfg;
    fit_cfg.N = n_particles;
    fit_cfg.L = s.l_best;
    fit_cfg.ess_threshold = s.ess_threshold;
    fit_cfg.schedule = s.schedule;
    fit_cfg.seed = *s.seed;
    mtt::EstimateTrace trace = mtt::online_em(scans, cv, fit_cfg);
    mtt::CvParams fitted = trace.back().theta;

    // 2) simulate fresh verification data at the fitted parameters
    mtt::ModelParams fitted_model = mtt::cv_assemble_stationary(fitted, fitted.rho);
    mtt::SimulationOutput verify = mtt::simulate(fitted_model, s.verify_n, verify_seed);

    // 3) track the verification scans with the fitted parameters
    mtt::SmcConfig track_cfg;
    track_cfg.N = n_particles;
    track_cfg.L = s.l_best;
    track_cfg.ess_threshold = s.ess_threshold;
    track_cfg.seed = track_seed;
    std::vector<mtt::TrackPoint> points =
        mtt::track_filter(verify.scans, fitted, track_cfg);

    // 4) mean absolute target-count error against the verification truth
    double err = 0.0;
    for (std::size_t t = 0; t < points.size(); ++t) {
      err += std::abs(points[t].k_hat -
                      static_cast<double>(verify.truth.states[t].size()));
    }
    err /= static_cast<double>(points.size());
    rows.emplace_back(n_particles, err);
    const bool ok = err <= s.check_bound;
    out << n_particles << "," << mtt::io::format_double(err) << ","
        << (ok ? 1 : 0) << "\n";
    if (ok && recommended < 0) recommended = n_particles;
  }
  write_manifest(s, s.particles.value_or(100));
  for (const auto& [n_particles, err] : rows) {
    std::cout << "N=" << n_particles << " mean |count error| = " << err << "\n";
  }
  if (recommended >= 0) {
    std::cout << "recommended particle count: " << recommended << "\n";
  } else {
    std::cout << "no candidate met the error bound " << s.check_bound << "\n";
  }
  return 0;
}

int dispatch(const Settings& s) {
  if (!s.seed) throw mtt::UsageError("a seed is required (config \"seed\" or --seed)");
  fs::create_directories(s.out_dir);
  if (s.mode == "simulate") return run_simulate(s);
  if (s.mode == "fit-batch") return run_fit_batch(s);
  if (s.mode == "fit-online") return run_fit_online(s);
  if (s.mode == "oracle-em") return run_oracle_em(s);
  if (s.mode == "track") return run_track(s);
  if (s.mode == "select-k") return run_select_k(s);
  if (s.mode == "check-n") return run_check_n(s);
  throw mtt::UsageError("unknown mode \"" + s.mode + "\"");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiple-target tracking: simulation and parameter estimation"};
  std::string mode, config_path, scans_path, truth_path, out_dir;
  std::uint64_t seed_flag = 0;
  app.add_option("--mode", mode,
                 "simulate | fit-batch | fit-online | oracle-em | track | "
                 "select-k | check-n");
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--scans", scans_path, "observation scans (JSONL)");
  app.add_option("--truth", truth_path, "ground-truth tracks (JSONL)");
  app.add_option("--out-dir", out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", seed_flag, "random seed (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    Settings s;
    if (!config_path.empty()) {
      auto in = mtt::io::open_input(config_path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw mtt::UsageError("malformed config JSON in " + config_path + ": " +
                              e.what());
      }
      apply_config(s, j);
    }
    if (!mode.empty()) s.mode = mode;
    if (!scans_path.empty()) s.scans_path = scans_path;
    if (!truth_path.empty()) s.truth_path = truth_path;
    if (!out_dir.empty()) s.out_dir = out_dir;
    if (seed_opt->count() > 0) s.seed = seed_flag;
    if (s.mode.empty()) {
      throw mtt::UsageError("a mode is required (--mode or config \"mode\")");
    }
    return dispatch(s);
  } catch (const mtt::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const mtt::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const mtt::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
