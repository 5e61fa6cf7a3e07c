#pragma once

#include "atlasdiffeo/linalg.hpp"
#include "atlasdiffeo/manifold.hpp"

#include <vector>

namespace atlasdiffeo {

struct ExpOptions {
  int steps = 64;                 // RK4 steps on [0, 1]
  double christoffel_rel = 1e-4;  // metric FD step relative to the domain scale
  double jacobian_rel = 1e-5;     // exp Jacobian FD step relative to the domain scale
  bool variational_jacobians = false;  // integrate the linearized geodesic equation instead of differencing
};

struct LogOptions {
  int max_iterations = 50;
  double tolerance = 1e-9;
};

struct ExpEvaluation {
  Vec base;
  Vec velocity;
  Vec value;
  Mat d1;  // derivative in the base point
  Mat d2;  // derivative in the velocity
  bool has_jacobians = false;
  int steps = 0;
  double step_size = 0.0;
};

// Exponential and logarithm of the chart metric, in chart coordinates.
class ChartGeometry {
 public:
  explicit ChartGeometry(Chart chart, ExpOptions options = {});

  const Chart& chart() const { return chart_; }
  int dim() const { return chart_.dim; }
  NormKind norm_kind() const { return chart_.norm(); }
  bool flat() const { return flat_; }
  const ExpOptions& options() const { return options_; }
  double jacobian_step() const { return jac_h_; }

  Mat metric(const Vec& x) const { return chart_.metric_at(x); }
  // gamma[k](i, j)
  std::vector<Mat> christoffel(const Vec& x) const;
  // -Gamma(v, v)
  Vec acceleration(const Vec& x, const Vec& v) const;

  Vec exp(const Vec& x, const Vec& y) const;
  ExpEvaluation geodesic_exp(const Vec& x, const Vec& y, bool jacobians = true) const;
  // d x 2d matrix [d1 | d2]
  Mat exp_jacobian(const Vec& x, const Vec& y) const;
  Mat d2_exp(const Vec& x, const Vec& y) const;

  // Damped Newton for exp(x, y) = z, seeded at `seed` (z - x when empty).
  Vec log(const Vec& x, const Vec& z, double trust_radius, const LogOptions& options = {},
          const Vec* seed = nullptr) const;
  // d x 2d matrix [d/dx logVR, d/dz logVR] at (x, z), from the exp Jacobian at y = log(x, z).
  Mat log_jacobian(const Vec& x, const Vec& z, double trust_radius, const Vec* seed = nullptr,
                   Vec* y_out = nullptr) const;

 private:
  enum class Sensitivity { none, velocity, full };
  std::vector<Mat> metric_derivatives(const Vec& x) const;
  Mat acceleration_dv(const Vec& x, const Vec& v) const;
  Mat acceleration_dx(const Vec& x, const Vec& v) const;
  ExpEvaluation integrate(const Vec& x, const Vec& y, Sensitivity mode) const;

  Chart chart_;
  ExpOptions options_;
  bool flat_;
  double fd_h_;
  double jac_h_;
};

}  // namespace atlasdiffeo
