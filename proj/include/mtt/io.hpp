#pragma once

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtt/common.hpp"
#include "mtt/data.hpp"
#include "mtt/em.hpp"
#include "mtt/model.hpp"

namespace mtt {
namespace io {

using nlohmann::json;

// The eleven estimable constant-velocity parameters, in file order.
inline const std::vector<std::string>& cv_field_names() {
  static const std::vector<std::string> names = {
      "lambda_b", "lambda_f", "p_d",       "p_s",       "mu_bx",   "mu_by",
      "sigma_bp2", "sigma_bv2", "sigma_xp2", "sigma_xv2", "sigma_y2"};
  return names;
}

inline double cv_field(const CvParams& cv, const std::string& name) {
  if (name == "lambda_b") return cv.lambda_b;
  if (name == "lambda_f") return cv.lambda_f;
  if (name == "p_d") return cv.p_d;
  if (name == "p_s") return cv.p_s;
  if (name == "mu_bx") return cv.mu_bx;
  if (name == "mu_by") return cv.mu_by;
  if (name == "sigma_bp2") return cv.sigma_bp2;
  if (name == "sigma_bv2") return cv.sigma_bv2;
  if (name == "sigma_xp2") return cv.sigma_xp2;
  if (name == "sigma_xv2") return cv.sigma_xv2;
  if (name == "sigma_y2") return cv.sigma_y2;
  if (name == "delta") return cv.delta;
  if (name == "kappa") return cv.kappa;
  if (name == "rho") return cv.rho;
  throw UsageError("unknown parameter field: " + name);
}

inline json cv_to_json(const CvParams& cv) {
  json j;
  for (const auto& name : cv_field_names()) j[name] = cv_field(cv, name);
  j["delta"] = cv.delta;
  j["kappa"] = cv.kappa;
  j["rho"] = cv.rho;
  return j;
}

inline CvParams cv_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("parameter block must be a JSON object");
  CvParams cv;
  auto need = [&](const char* key) -> double {
    if (!j.contains(key))
      throw UsageError(std::string("parameter block missing key '") + key + "'");
    if (!j.at(key).is_number())
      throw UsageError(std::string("parameter key '") + key + "' must be a number");
    return j.at(key).get<double>();
  };
  cv.lambda_b = need("lambda_b");
  cv.lambda_f = need("lambda_f");
  cv.p_d = need("p_d");
  cv.p_s = need("p_s");
  cv.mu_bx = need("mu_bx");
  cv.mu_by = need("mu_by");
  cv.sigma_bp2 = need("sigma_bp2");
  cv.sigma_bv2 = need("sigma_bv2");
  cv.sigma_xp2 = need("sigma_xp2");
  cv.sigma_xv2 = need("sigma_xv2");
  cv.sigma_y2 = need("sigma_y2");
  cv.delta = need("delta");
  cv.kappa = need("kappa");
  cv.rho = j.contains("rho") ? need("rho") : 1.0;
  static const std::vector<std::string> known = {
      "lambda_b", "lambda_f", "p_d",       "p_s",       "mu_bx",    "mu_by", "sigma_bp2",
      "sigma_bv2", "sigma_xp2", "sigma_xv2", "sigma_y2", "delta",    "kappa", "rho"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) ok |= (k == it.key());
    if (!ok) throw UsageError("unknown parameter key '" + it.key() + "'");
  }
  return cv;
}

// 17 significant digits, C locale (the '.' decimal point is guaranteed
// because the process never changes LC_NUMERIC).
inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open output file: " + path);
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open input file: " + path);
  return in;
}

namespace detail {
inline json parse_line(const std::string& path, int line_no, const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
  }
}

[[noreturn]] inline void line_error(const std::string& path, int line_no,
                                    const std::string& what) {
  throw DataError(path + ":" + std::to_string(line_no) + ": " + what);
}
}  // namespace detail

// --------------------------------------------------------------------------
// Scans: one JSON object per line, {"t": int, "y": [[y1, y2], ...]}.

inline void write_scans_jsonl(const std::string& path,
                              const std::vector<ObservationScan>& scans) {
  std::ofstream out = open_output(path);
  for (const auto& scan : scans) {
    json j;
    j["t"] = scan.t;
    json ys = json::array();
    for (const auto& y : scan.points) ys.push_back({y(0), y(1)});
    j["y"] = ys;
    out << j.dump() << "\n";
  }
}

inline std::vector<ObservationScan> read_scans_jsonl(const std::string& path) {
  std::ifstream in = open_input(path);
  std::vector<ObservationScan> scans;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = detail::parse_line(path, line_no, line);
    try {
      ObservationScan scan;
      scan.t = j.at("t").get<int>();
      for (const auto& y : j.at("y")) {
        if (!y.is_array() || y.size() != 2)
          detail::line_error(path, line_no, "observation must be a [y1, y2] pair");
        scan.points.emplace_back(y[0].get<double>(), y[1].get<double>());
      }
      scans.push_back(std::move(scan));
    } catch (const json::exception& e) {
      detail::line_error(path, line_no, e.what());
    }
  }
  return scans;
}

// --------------------------------------------------------------------------
// Truth: one JSON object per line,
// {"t": int, "c_s": [...], "c_d": [...], "k_b": int, "k_f": int,
//  "a": [0-based observation indices], "x": [[x, y, vx, vy], ...]}.

inline void write_truth_jsonl(const std::string& path, const GroundTruth& truth) {
  std::ofstream out = open_output(path);
  for (std::size_t t = 0; t < truth.records.size(); ++t) {
    const AssociationRecord& rec = truth.records[t];
    json j;
    j["t"] = static_cast<int>(t) + 1;
    j["c_s"] = rec.c_s;
    j["c_d"] = rec.c_d;
    j["k_b"] = rec.k_b;
    j["k_f"] = rec.k_f;
    j["a"] = rec.a;
    json xs = json::array();
    for (const auto& x : truth.states[t]) xs.push_back({x(0), x(1), x(2), x(3)});
    j["x"] = xs;
    out << j.dump() << "\n";
  }
}

inline GroundTruth read_truth_jsonl(const std::string& path) {
  std::ifstream in = open_input(path);
  GroundTruth truth;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = detail::parse_line(path, line_no, line);
    try {
      AssociationRecord rec;
      rec.c_s = j.at("c_s").get<std::vector<int>>();
      rec.c_d = j.at("c_d").get<std::vector<int>>();
      rec.k_b = j.at("k_b").get<int>();
      rec.k_f = j.at("k_f").get<int>();
      rec.a = j.at("a").get<std::vector<int>>();
      std::vector<Vec4> states;
      for (const auto& x : j.at("x")) {
        if (!x.is_array() || x.size() != 4)
          detail::line_error(path, line_no, "state must be a [x, y, vx, vy] quadruple");
        states.push_back(Vec4(x[0].get<double>(), x[1].get<double>(), x[2].get<double>(),
                              x[3].get<double>()));
      }
      rec.validate();
      if (states.size() != rec.c_d.size())
        detail::line_error(path, line_no, "state count does not match c_d length");
      truth.records.push_back(std::move(rec));
      truth.states.push_back(std::move(states));
    } catch (const json::exception& e) {
      detail::line_error(path, line_no, e.what());
    } catch (const DataError& e) {
      detail::line_error(path, line_no, e.what());
    }
  }
  return truth;
}

// --------------------------------------------------------------------------
// Estimate trace: CSV of index, the eleven parameters, loglik (may be empty).

inline void write_trace_csv(const std::string& path, const EstimateTrace& trace) {
  std::ofstream out = open_output(path);
  out << "index";
  for (const auto& name : cv_field_names()) out << "," << name;
  out << ",loglik\n";
  for (const auto& pt : trace) {
    out << pt.index;
    for (const auto& name : cv_field_names()) out << "," << format_double(cv_field(pt.theta, name));
    out << ",";
    if (pt.loglik) out << format_double(*pt.loglik);
    out << "\n";
  }
}

inline void write_track_csv(const std::string& path, const std::vector<TrackPoint>& points) {
  std::ofstream out = open_output(path);
  out << "t,k_hat,loglik\n";
  for (const auto& p : points)
    out << p.t << "," << format_double(p.k_hat) << "," << format_double(p.loglik) << "\n";
}

inline void write_selectk_csv(const std::string& path, const SelectKResult& res) {
  std::ofstream out = open_output(path);
  out << "t";
  for (int k : res.k_values) out << ",norm_loglik_K" << k;
  out << ",argmax_k\n";
  for (std::size_t t = 0; t < res.argmax_k.size(); ++t) {
    out << (t + 1);
    for (std::size_t c = 0; c < res.k_values.size(); ++c)
      out << "," << format_double(res.norm_loglik[c][t]);
    out << "," << res.argmax_k[t] << "\n";
  }
}

}  // namespace io
}  // namespace mtt
