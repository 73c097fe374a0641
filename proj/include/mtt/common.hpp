#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mtt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using Mat24 = Eigen::Matrix<double, 2, 4>;

inline constexpr int kStateDim = 4;
inline constexpr int kObsDim = 2;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Error taxonomy mirrored by the CLI exit codes (usage=1, data=2, numerical=3).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

inline double log_sum_exp(const std::vector<double>& xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

inline double poisson_logpmf(int k, double lambda) {
  double kl = k > 0 ? k * std::log(lambda) : 0.0;  // avoids 0 * log(0)
  return -lambda + kl - log_factorial(k);
}

// Thread budget for per-particle and per-sweep parallelism. MTT_THREADS caps it.
inline int thread_budget() {
  unsigned hw = std::thread::hardware_concurrency();
  int budget = hw == 0 ? 1 : static_cast<int>(hw);
  if (const char* env = std::getenv("MTT_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) budget = std::min(budget, cap);
  }
  return budget;
}

// Runs fn(i) for i in [0, n). Results must be written to disjoint slots so the
// outcome is identical for any thread count. The first exception thrown by any
// worker is rethrown on the calling thread.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  int threads = std::min(thread_budget(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mtt
