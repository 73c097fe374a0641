#pragma once

#include "mtt/common.hpp"

namespace mtt {

// The fifteen expected sufficient statistics feeding the M-step.
//   s1 = sum over detections of E[x x^T]        s2 = sum over detections of E[x] y^T
//   s3 = sum over transitions of E[x_prev x_prev^T]
//   s4 = sum over transitions of E[x_next x_next^T]
//   s5 = sum over transitions of E[x_prev x_next^T]
//   s6 = sum over births of E[x]                s7 = sum over births of E[x x^T]
//   s8 = sum over detections of y y^T
//   s9..s15 = counts: detections, targets, survivals, previous targets,
//             births, false measurements, steps.
// s11_slow duplicates s11 under the slower step-size schedule; it feeds the
// sigma_xv2 denominator while s11 feeds p_s.
struct SufficientStatSet {
  Mat4 s1 = Mat4::Zero();
  Mat42 s2 = Mat42::Zero();
  Mat4 s3 = Mat4::Zero();
  Mat4 s4 = Mat4::Zero();
  Mat4 s5 = Mat4::Zero();
  Vec4 s6 = Vec4::Zero();
  Mat4 s7 = Mat4::Zero();
  Mat2 s8 = Mat2::Zero();
  double s9 = 0, s10 = 0, s11 = 0, s12 = 0, s13 = 0, s14 = 0, s15 = 0;
  double s11_slow = 0;
};

inline SufficientStatSet operator*(double a, const SufficientStatSet& s) {
  SufficientStatSet r;
  r.s1 = a * s.s1;
  r.s2 = a * s.s2;
  r.s3 = a * s.s3;
  r.s4 = a * s.s4;
  r.s5 = a * s.s5;
  r.s6 = a * s.s6;
  r.s7 = a * s.s7;
  r.s8 = a * s.s8;
  r.s9 = a * s.s9;
  r.s10 = a * s.s10;
  r.s11 = a * s.s11;
  r.s12 = a * s.s12;
  r.s13 = a * s.s13;
  r.s14 = a * s.s14;
  r.s15 = a * s.s15;
  r.s11_slow = a * s.s11_slow;
  return r;
}

inline SufficientStatSet& operator+=(SufficientStatSet& r, const SufficientStatSet& s) {
  r.s1 += s.s1;
  r.s2 += s.s2;
  r.s3 += s.s3;
  r.s4 += s.s4;
  r.s5 += s.s5;
  r.s6 += s.s6;
  r.s7 += s.s7;
  r.s8 += s.s8;
  r.s9 += s.s9;
  r.s10 += s.s10;
  r.s11 += s.s11;
  r.s12 += s.s12;
  r.s13 += s.s13;
  r.s14 += s.s14;
  r.s15 += s.s15;
  r.s11_slow += s.s11_slow;
  return r;
}

inline SufficientStatSet operator+(SufficientStatSet a, const SufficientStatSet& b) {
  a += b;
  return a;
}

// Blend for stochastic-approximation EM: carried statistics weighted by
// (1-gamma), fresh by gamma, with the slow rate applied to s3, s4, s5 and the
// duplicated s11_slow.
inline SufficientStatSet sa_blend(const SufficientStatSet& carried,
                                  const SufficientStatSet& fresh, double gamma_fast,
                                  double gamma_slow) {
  SufficientStatSet r = carried;
  double cf = 1.0 - gamma_fast, cs = 1.0 - gamma_slow;
  r.s1 = cf * carried.s1 + gamma_fast * fresh.s1;
  r.s2 = cf * carried.s2 + gamma_fast * fresh.s2;
  r.s3 = cs * carried.s3 + gamma_slow * fresh.s3;
  r.s4 = cs * carried.s4 + gamma_slow * fresh.s4;
  r.s5 = cs * carried.s5 + gamma_slow * fresh.s5;
  r.s6 = cf * carried.s6 + gamma_fast * fresh.s6;
  r.s7 = cf * carried.s7 + gamma_fast * fresh.s7;
  r.s8 = cf * carried.s8 + gamma_fast * fresh.s8;
  r.s9 = cf * carried.s9 + gamma_fast * fresh.s9;
  r.s10 = cf * carried.s10 + gamma_fast * fresh.s10;
  r.s11 = cf * carried.s11 + gamma_fast * fresh.s11;
  r.s12 = cf * carried.s12 + gamma_fast * fresh.s12;
  r.s13 = cf * carried.s13 + gamma_fast * fresh.s13;
  r.s14 = cf * carried.s14 + gamma_fast * fresh.s14;
  r.s15 = cf * carried.s15 + gamma_fast * fresh.s15;
  r.s11_slow = cs * carried.s11_slow + gamma_slow * fresh.s11_slow;
  return r;
}

}  // namespace mtt
