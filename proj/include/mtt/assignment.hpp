#pragma once

#include <cmath>
#include <queue>
#include <vector>

#include "mtt/common.hpp"
#include "mtt/data.hpp"
#include "mtt/kalman.hpp"
#include "mtt/model.hpp"

namespace mtt {

// Log-score matrix over targets (rows) and observations-then-miss (columns).
// Column k_y + i is the miss hypothesis of target i; all other miss-block
// entries are -inf.
struct CostMatrix {
  Mat D;
  int k_y = 0;
  int k_x() const { return static_cast<int>(D.rows()); }
};

// Injective map alpha: targets -> observations-then-miss (0-based) plus its
// total log score.
struct Assignment {
  std::vector<int> alpha;
  double score = 0.0;
};

inline CostMatrix build_cost_matrix(const std::vector<GaussianMoments>& preds,
                                    const ModelParams& theta, const ObservationScan& scan) {
  const int k_x = static_cast<int>(preds.size());
  const int k_y = static_cast<int>(scan.points.size());
  CostMatrix cm;
  cm.k_y = k_y;
  cm.D = Mat::Constant(k_x, k_y + k_x, kNegInf);
  const double log_pd = std::log(theta.p_d);
  const double log_miss =
      std::log1p(-theta.p_d) + std::log(theta.lambda_f) - std::log(theta.region_volume());
  for (int i = 0; i < k_x; ++i) {
    for (int j = 0; j < k_y; ++j)
      cm.D(i, j) = log_pd + predictive_loglik(preds[i], scan.points[j], theta.glssm);
    cm.D(i, k_y + i) = log_miss;
  }
  return cm;
}

namespace detail {

inline constexpr double kBig = 1e18;  // sentinel for forbidden arcs (minimization)

// Jonker-Volgenant-style shortest augmenting path for rectangular min-cost
// assignment, rows <= cols. Returns one column per row, or empty if no
// finite-cost assignment exists.
inline std::vector<int> lap_min(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), std::numeric_limits<double>::infinity());
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      if (j1 < 0) return {};
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> result(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j]) result[p[j] - 1] = j - 1;
  return result;
}

// One node of the Murty partition: rows [0, n_fixed) are pinned to the parent
// solution's columns; `forbidden` lists extra excluded arcs per row.
struct MurtyNode {
  int n_fixed = 0;
  std::vector<int> fixed_cols;
  std::vector<std::vector<int>> forbidden;
  Assignment solution;
  std::uint64_t seq = 0;  // insertion index, makes heap order deterministic
};

struct MurtyNodeOrder {
  bool operator()(const MurtyNode& a, const MurtyNode& b) const {
    if (a.solution.score != b.solution.score) return a.solution.score < b.solution.score;
    return a.seq > b.seq;
  }
};

// Solves a constrained subproblem by removing pinned rows/columns and marking
// forbidden arcs with the sentinel. Returns false if infeasible.
inline bool solve_node(const CostMatrix& cm, MurtyNode& node) {
  const int k_x = cm.k_x();
  const int cols = static_cast<int>(cm.D.cols());
  const int nf = node.n_fixed;
  const int free_rows = k_x - nf;
  std::vector<char> col_taken(cols, 0);
  double fixed_score = 0.0;
  for (int r = 0; r < nf; ++r) {
    col_taken[node.fixed_cols[r]] = 1;
    fixed_score += cm.D(r, node.fixed_cols[r]);
  }
  std::vector<int> col_map;
  col_map.reserve(cols);
  for (int c = 0; c < cols; ++c)
    if (!col_taken[c]) col_map.push_back(c);

  Mat sub(free_rows, col_map.size());
  for (int r = 0; r < free_rows; ++r) {
    const int row = nf + r;
    for (int c = 0; c < static_cast<int>(col_map.size()); ++c) {
      double d = cm.D(row, col_map[c]);
      sub(r, c) = std::isfinite(d) ? -d : kBig;
    }
    for (int fc : node.forbidden[row])
      for (int c = 0; c < static_cast<int>(col_map.size()); ++c)
        if (col_map[c] == fc) sub(r, c) = kBig;
  }

  std::vector<int> sol = lap_min(sub);
  if (sol.empty()) return false;

  node.solution.alpha.assign(k_x, -1);
  node.solution.score = fixed_score;
  for (int r = 0; r < nf; ++r) node.solution.alpha[r] = node.fixed_cols[r];
  for (int r = 0; r < free_rows; ++r) {
    const int row = nf + r;
    const int col = col_map[sol[r]];
    if (!std::isfinite(cm.D(row, col))) return false;
    bool banned = false;
    for (int fc : node.forbidden[row]) banned |= (fc == col);
    if (banned) return false;
    node.solution.alpha[row] = col;
    node.solution.score += cm.D(row, col);
  }
  return true;
}

}  // namespace detail

// The min(L, #feasible) highest-scoring assignments, ordered by
// (score desc, alpha lexicographic asc), pairwise distinct.
inline std::vector<Assignment> murty_lbest(const CostMatrix& cm, int L) {
  if (L < 1) throw UsageError("murty_lbest: L must be >= 1");
  const int k_x = cm.k_x();
  std::vector<Assignment> out;
  if (k_x == 0) {
    out.push_back(Assignment{{}, 0.0});
    return out;
  }

  std::priority_queue<detail::MurtyNode, std::vector<detail::MurtyNode>,
                      detail::MurtyNodeOrder>
      heap;
  std::uint64_t seq = 0;

  detail::MurtyNode root;
  root.forbidden.assign(k_x, {});
  root.seq = seq++;
  if (!detail::solve_node(cm, root)) return out;
  heap.push(std::move(root));

  while (!heap.empty() && static_cast<int>(out.size()) < L) {
    detail::MurtyNode best = heap.top();
    heap.pop();
    out.push_back(best.solution);
    // Partition the remaining solution space of this node around its optimum.
    for (int r = best.n_fixed; r < k_x; ++r) {
      detail::MurtyNode child;
      child.n_fixed = r;
      child.fixed_cols.assign(best.solution.alpha.begin(), best.solution.alpha.begin() + r);
      child.forbidden = best.forbidden;
      child.forbidden[r].push_back(best.solution.alpha[r]);
      child.seq = seq++;
      if (detail::solve_node(cm, child)) heap.push(std::move(child));
    }
  }

  std::sort(out.begin(), out.end(), [](const Assignment& a, const Assignment& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.alpha < b.alpha;
  });
  return out;
}

inline Assignment best_assignment(const CostMatrix& cm) {
  auto top = murty_lbest(cm, 1);
  if (top.empty()) throw NumericalError("best_assignment: no feasible assignment");
  return top.front();
}

// Reads the detection bits, clutter count and association map off an
// assignment. Survival fields are not touched.
inline AssociationRecord decode_association(const Assignment& assign, int k_x, int k_y) {
  AssociationRecord rec;
  rec.c_d.assign(k_x, 0);
  for (int k = 0; k < k_x; ++k)
    if (assign.alpha[k] < k_y) rec.c_d[k] = 1;
  for (int k = 0; k < k_x; ++k)
    if (rec.c_d[k]) rec.a.push_back(assign.alpha[k]);
  rec.k_f = k_y - static_cast<int>(rec.a.size());
  return rec;
}

}  // namespace mtt
