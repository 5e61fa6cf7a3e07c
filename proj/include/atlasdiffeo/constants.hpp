#pragma once

#include "atlasdiffeo/geodesic.hpp"
#include "atlasdiffeo/linalg.hpp"

#include "json.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace atlasdiffeo {

// Closed ball in chart coordinates.
struct Region {
  Vec center;
  double radius = 0.0;
  NormKind norm = NormKind::sup;

  bool contains(const Vec& x, double slack = 1e-12) const;
  nlohmann::json to_json() const;
};

struct ConstantsOptions {
  int grid = 16;        // samples per axis of the base region
  int fiber_grid = 3;   // samples per axis of fiber balls
  int shells = 32;      // radial shells for RadExpFibInv
  double safety = 1.10;
  double rel_tol = 1e-7;  // bisection tolerance relative to the domain scale
};

struct ConstantsReport {
  std::string chart;
  Region region;
  double delta = 0.0;
  double sigma = 0.0;
  double grenz_exp = 0.0;
  double a = 0.0;  // BndFstAblRex
  double b = 0.0;  // BndSndAblRex
  double quot_norm = 0.0;
  double rad_fib_inv = 0.0;
  double grenz_log = 0.0;
  double a_log = 0.0;  // BndFstAblRlog
  double b_log = 0.0;  // BndSndAblRlog
  int resolution = 0;
  int fiber_resolution = 0;
  double safety_factor = 1.0;

  double a_safe() const { return a * safety_factor; }
  double b_safe() const { return b * safety_factor; }
  nlohmann::json to_json() const;
};

enum class Superposition { exp_minus, log_plus };

class ConstantsEstimator {
 public:
  explicit ConstantsEstimator(const ChartGeometry& geometry, ConstantsOptions options = {});

  const ChartGeometry& geometry() const { return geo_; }
  const ConstantsOptions& options() const { return options_; }

  // Lattice points of the closed region, `n` per axis (options().grid when 0).
  std::vector<Vec> region_samples(const Region& K, int n = 0) const;
  // Lattice points of the closed fiber ball of radius r around 0.
  std::vector<Vec> fiber_samples(double r, int n = 0) const;

  double grenz_exp(const Region& K) const;
  // a = sup |d2 exp|, b = sup |D^2 exp| over K x closed Ball(0, delta).
  double exp_first_bound(const Region& K, double delta) const;
  double exp_second_bound(const Region& K, double delta) const;
  double quot_norm(const Region& K) const;
  // Largest sampled radius with |d2 exp(x, .) - Id| < sigma on the closed ball, for x in V.
  double rad_fib_inv(const Region& V, double sigma) const;
  // Sup over a sigma grid of (1 - sigma) * QuotNorm * RadExpFibInv(sigma).
  double grenz_log(const Region& K) const;
  double log_first_bound(const Region& K, double delta) const;
  double log_second_bound(const Region& K, double delta) const;

  // Seminorm of order ell of ExpMinus(x, y) = exp(x, y) - x or LogPlus(x, y) = logVR(x, x + y)
  // on K x closed Ball(0, delta), as maps on R^2d with the max-of-blocks norm.
  double superposition_seminorm(Superposition kind, const Region& K, double delta, int ell) const;

  // Full report; throws DeltaTooLarge if delta >= grenzLog.
  ConstantsReport report(const Region& K, double delta, double sigma) const;

  // D^2 exp at (x, y) as a bilinear map on R^2d.
  Multilinear exp_hessian(const Vec& x, const Vec& y) const;

 private:
  double exp_ok_radius(const std::vector<Vec>& xs, const std::vector<Vec>& dirs, double hi_start) const;
  double fib_deviation(const std::vector<Vec>& xs, const std::vector<Vec>& dirs, double radius) const;
  double trust() const;
  // Cumulative max of the fiber deviation over the shell radii of grenz_exp(K).
  struct Profile {
    std::vector<double> radii, deviation;
  };
  const Profile& deviation_profile(const Region& K) const;
  // Bisection between shells cross - 1 and cross for the radius where the deviation reaches sigma.
  double refine_crossing(const Region& K, const Profile& p, std::size_t cross, double sigma) const;

  struct Memo {
    std::mutex mutex;
    std::map<std::string, double> grenz_exp;
    std::map<std::string, Profile> profiles;
  };

  const ChartGeometry& geo_;
  ConstantsOptions options_;
  std::shared_ptr<Memo> memo_ = std::make_shared<Memo>();
};

// Thread-safe memo of reports keyed by chart geometry, region, delta, sigma and options.
class ConstantsCache {
 public:
  ConstantsReport get(const ChartGeometry& geometry, const Region& K, double delta, double sigma,
                      const ConstantsOptions& options);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, ConstantsReport> reports_;
};

// Key that identifies charts with identical geometry (metric, domain, offsets the metric uses).
std::string geometry_signature(const Chart& chart);

}  // namespace atlasdiffeo
