#pragma once

#include <vector>

#include "mtt/common.hpp"

namespace mtt {

// One time step of the latent discrete structure
// z_t = (c_s, k_b, c_d, k_f, a) with derived index vectors.
//   c_s: survival bits over the k_x targets of step t-1
//   c_d: detection bits over the k_x targets of step t (survivors then births)
//   a:   observation index (0-based) for each detected target, in detection order
struct AssociationRecord {
  std::vector<int> c_s;
  std::vector<int> c_d;
  int k_b = 0;
  int k_f = 0;
  std::vector<int> a;

  int k_s() const {
    int s = 0;
    for (int c : c_s) s += c;
    return s;
  }
  int k_d() const {
    int s = 0;
    for (int c : c_d) s += c;
    return s;
  }
  int k_x() const { return static_cast<int>(c_d.size()); }
  int k_y() const { return k_d() + k_f; }

  // i_s: indices (0-based) of surviving targets, increasing.
  std::vector<int> i_s() const {
    std::vector<int> idx;
    for (int j = 0; j < static_cast<int>(c_s.size()); ++j)
      if (c_s[j]) idx.push_back(j);
    return idx;
  }
  // i_d: indices (0-based) of detected targets, increasing.
  std::vector<int> i_d() const {
    std::vector<int> idx;
    for (int j = 0; j < static_cast<int>(c_d.size()); ++j)
      if (c_d[j]) idx.push_back(j);
    return idx;
  }

  void validate() const {
    if (k_x() != k_s() + k_b) throw DataError("association record: k_x != k_s + k_b");
    if (static_cast<int>(a.size()) != k_d())
      throw DataError("association record: |a| != k_d");
    if (k_f < 0) throw DataError("association record: negative clutter count");
    std::vector<char> used(k_y(), 0);
    for (int obs : a) {
      if (obs < 0 || obs >= k_y()) throw DataError("association record: a out of range");
      if (used[obs]++) throw DataError("association record: a not injective");
    }
  }
};

// Unordered measurement set for one time step.
struct ObservationScan {
  int t = 0;
  std::vector<Vec2> points;
};

// Per-step latent structure and target states, labeled survivors-first.
struct GroundTruth {
  std::vector<AssociationRecord> records;
  std::vector<std::vector<Vec4>> states;
};

}  // namespace mtt
