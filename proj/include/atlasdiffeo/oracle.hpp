#pragma once

#include "atlasdiffeo/linalg.hpp"
#include "atlasdiffeo/manifold.hpp"

#include <functional>
#include <memory>
#include <string>

namespace atlasdiffeo {

using ClosedFormMap = std::function<Vec(std::size_t chart, const Vec& x, const Vec& y)>;

// Analytic fixture: generated spec text, the loaded spec, and closed-form exp/log in chart coordinates.
struct OracleManifold {
  std::string kind;
  std::string text;
  std::shared_ptr<const ManifoldSpec> spec;
  ClosedFormMap exp;  // (chart, x, y) -> exp(x, y)
  ClosedFormMap log;  // (chart, x, z) -> log(x, z)
};

struct FlatOptions {
  int extent = 1;          // lattice points k with |k_i| <= extent
  double epsilon = 0.03;
  double metric_scale = 1.0;  // metric c Id
  bool shifted = false;    // adds group "S" of charts centered at half-integer points
  int grid = 16;
};

// Charts id on Ball(k, r1) (sup norm) for lattice points k; inner radius r2, padding (r1 - r2) / 2.
OracleManifold flat_oracle(int d, double r1, double r2, const FlatOptions& options = {});

struct CylinderOptions {
  double epsilon = 0.08;
  int max_power = 4;  // weights (x1 + o1)^n for n <= max_power
  int grid = 16;
};

// R x S^1 in covering coordinates (x, theta), `length` chart columns along x (spacing 2) and
// `n_charts` angular charts per column.
OracleManifold cylinder_oracle(int length, int n_charts, const CylinderOptions& options = {});

// One chart of the upper half-plane with metric Id / x2^2 over the strip lo < x2 < hi.
OracleManifold half_plane_oracle(double lo, double hi, int grid = 16, NormKind norm = NormKind::sup);

// Closed-form half-plane geodesics in global coordinates.
Vec half_plane_exp(const Vec& p, const Vec& v);
Vec half_plane_log(const Vec& p, const Vec& z);

}  // namespace atlasdiffeo
