#pragma once

#include "atlasdiffeo/constants.hpp"
#include "atlasdiffeo/geodesic.hpp"
#include "atlasdiffeo/linalg.hpp"

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace testing {

using atlasdiffeo::ChartGeometry;
using atlasdiffeo::ConstantsReport;
using atlasdiffeo::Mat;
using atlasdiffeo::NormKind;
using atlasdiffeo::Vec;

// Random smooth field X(x) = c + M (x - x0) + beta .* sin(Omega (x - x0) + phi) with its analytic Jacobian.
struct RandomField {
  Vec x0, c, beta, phi;
  Mat M, Omega;
  double scale = 1.0;

  Vec value(const Vec& x) const {
    const Vec u = x - x0;
    const Vec arg = Omega * u + phi;
    Vec s(arg.size());
    for (int i = 0; i < arg.size(); ++i) s(i) = beta(i) * std::sin(arg(i));
    return scale * (c + M * u + s);
  }
  Mat jacobian(const Vec& x) const {
    const Vec arg = Omega * (x - x0) + phi;
    Mat J = M;
    for (int i = 0; i < arg.size(); ++i) J.row(i) += beta(i) * std::cos(arg(i)) * Omega.row(i);
    return scale * J;
  }
};

inline RandomField random_field(std::mt19937_64& rng, const Vec& x0) {
  const int d = static_cast<int>(x0.size());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RandomField f;
  f.x0 = x0;
  f.c = Vec(d);
  f.beta = Vec(d);
  f.phi = Vec(d);
  f.M = Mat(d, d);
  f.Omega = Mat(d, d);
  for (int i = 0; i < d; ++i) {
    f.c(i) = u(rng);
    f.beta(i) = u(rng);
    f.phi(i) = 3.0 * u(rng);
    for (int j = 0; j < d; ++j) {
      f.M(i, j) = u(rng);
      f.Omega(i, j) = 4.0 * u(rng);
    }
  }
  return f;
}

// Worst excess lhs - rhs of each estimate over all sampled (field, point) pairs; non-positive means it held.
struct EstimateExcess {
  double exp_c0 = -1e300, exp_c1 = -1e300, log_c0 = -1e300, log_c1 = -1e300;
  int evaluations = 0;

  double worst() const { return std::max(std::max(exp_c0, exp_c1), std::max(log_c0, log_c1)); }
};

// Checks, for random fields X on K with sup |X| <= delta and sup |DX| <= 1 over the sample points:
//   |exp(x, X) - x| <= a |X|
//   |D(exp o (id, X)) - Id| <= b |X| + |DX|
//   |logVR(x, x + X)| <= aL |X|
//   |D(logVR o (id, X + id))| <= bL |X| + aL |DX|
inline EstimateExcess run_estimate_suite(const ChartGeometry& geo, const ConstantsReport& rep, int fields,
                                         int points_per_field, std::uint64_t seed) {
  const int d = geo.dim();
  const NormKind nk = geo.norm_kind();
  const double trust = 4.0 * geo.chart().domain.scale();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> shrink(0.2, 1.0);
  EstimateExcess out;
  for (int f = 0; f < fields; ++f) {
    RandomField X = random_field(rng, rep.region.center);
    std::vector<Vec> xs;
    for (int k = 0; k < points_per_field; ++k) {
      Vec x = rep.region.center + random_in_box(rng, d, rep.region.radius);
      if (nk == NormKind::euclidean && (x - rep.region.center).norm() > rep.region.radius)
        x = rep.region.center + (x - rep.region.center) * (rep.region.radius / (x - rep.region.center).norm());
      xs.push_back(x);
    }
    double sup0 = 0.0, sup1 = 0.0;
    for (const Vec& x : xs) {
      sup0 = std::max(sup0, atlasdiffeo::norm(X.value(x), nk));
      sup1 = std::max(sup1, atlasdiffeo::op_norm(X.jacobian(x), nk));
    }
    X.scale = shrink(rng) * std::min(rep.delta / sup0, 1.0 / sup1);
    const Mat I = Mat::Identity(d, d);
    for (const Vec& x : xs) {
      const Vec y = X.value(x);
      const Mat DX = X.jacobian(x);
      const double ny = atlasdiffeo::norm(y, nk);
      const double ndx = atlasdiffeo::op_norm(DX, nk);

      out.exp_c0 = std::max(out.exp_c0, atlasdiffeo::norm(geo.exp(x, y) - x, nk) - rep.a * ny);
      const Mat J = geo.exp_jacobian(x, y);
      const Mat Dphi = J.leftCols(d) + J.rightCols(d) * DX;
      out.exp_c1 = std::max(out.exp_c1, atlasdiffeo::op_norm(Dphi - I, nk) - (rep.b * ny + ndx));

      Vec yl;
      const Mat L = geo.log_jacobian(x, x + y, trust, nullptr, &yl);
      out.log_c0 = std::max(out.log_c0, atlasdiffeo::norm(yl, nk) - rep.a_log * ny);
      const Mat Dlog = L.leftCols(d) + L.rightCols(d) * (I + DX);
      out.log_c1 = std::max(out.log_c1, atlasdiffeo::op_norm(Dlog, nk) - (rep.b_log * ny + rep.a_log * ndx));
      ++out.evaluations;
    }
  }
  return out;
}

}  // namespace testing
