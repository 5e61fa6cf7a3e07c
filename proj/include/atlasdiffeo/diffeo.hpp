#pragma once

#include "atlasdiffeo/certificate.hpp"
#include "atlasdiffeo/constants.hpp"
#include "atlasdiffeo/field.hpp"
#include "atlasdiffeo/geodesic.hpp"
#include "atlasdiffeo/sampling.hpp"
#include "atlasdiffeo/seminorm.hpp"
#include "atlasdiffeo/weights.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace atlasdiffeo {

std::vector<ChartGeometry> chart_geometries(const ManifoldSpec& spec, const ExpOptions& options = {});

// Constants of the diffeomorphism thresholds on the inner ball Ball(0, r) of one chart.
struct DiffeoConstants {
  std::string chart;
  double grenz_exp = 0.0;  // on the inner ball
  double nu = 0.0;
  double a = 0.0;  // at (inner ball, nu)
  double b = 0.0;
  double safety_factor = 1.10;
  int resolution = 0;

  double a_safe() const { return a * safety_factor; }
  double b_safe() const { return b * safety_factor; }
  nlohmann::json to_json() const;
};

std::vector<DiffeoConstants> estimate_diffeo_constants(const std::vector<ChartGeometry>& geometries,
                                                       const ConstantsOptions& options = {}, double nu_factor = 0.9);

struct DiffeoOptions {
  int grid = 0;               // seminorm and target sampling; spec grid when 0
  int pairs_per_chart = 1000; // injectivity pairs
  int target_grid = 0;        // surjectivity targets per axis; `grid` when 0
  std::uint64_t seed = 7;
  double newton_tolerance = 1e-11;
  std::string group = "A";
};

// exp(q, X_kappa(q)) in chart coordinates.
Vec local_diffeo(const LocalizedField& X, const ChartGeometry& geometry, std::size_t chart, const Vec& q);

// Threshold clauses per chart; on success also injectivity on random pairs of each inner ball,
// surjectivity onto Ball(0, r (1 - 2 eps)) by Newton, and the preimage count bound.
Certificate certify_diffeo(const LocalizedField& X, const std::vector<ChartGeometry>& geometries,
                           const std::vector<DiffeoConstants>& constants, const DiffeoOptions& options = {});

struct DiffeoRep {
  LocalizedField generator;
  Certificate certificate;
  const std::vector<ChartGeometry>* geometries = nullptr;
  std::string group = "A";

  bool certified() const { return certificate.pass && geometries != nullptr; }
};

DiffeoRep make_diffeo(const LocalizedField& X, const std::vector<ChartGeometry>& geometries,
                      const std::vector<DiffeoConstants>& constants, const DiffeoOptions& options = {});

// phi_X(p), evaluated in the lowest-index chart whose inner ball holds p; the image is expressed in the
// containing chart with the smallest coordinate norm (lowest index on ties).
ChartPoint apply_diffeo(const DiffeoRep& rep, const ChartPoint& p);
// The same image computed through every chart whose inner ball holds p, each re-charted into `target`.
std::vector<Vec> apply_diffeo_each(const DiffeoRep& rep, const ChartPoint& p, std::size_t target);

struct GaugeOptions {
  double rho = 0.5;
  int grid = 0;
  std::string group = "A";
};

// Thresholds of D1, D2 and D_rho. Weighted norms use omega_E; the C^1 norms use the weight 1.
// D1 and D_rho are measured over the padded balls, D2 over the inner balls.
struct NeighborhoodGauge {
  Weight omega_exp;
  Weight omega_log;
  double rho = 0.5;
  double pad = 0.0;      // smallest R
  double epsilon = 0.0;  // smallest eps
  double d1_weighted = 0.5;
  double d1_c1 = 0.5;
  double d2_weighted = 0.0;
  double drho_weighted = 0.0;
  double drho_c1 = 0.0;
  double alpha = 0.0;
  int grid = 0;
  std::string group = "A";

  AtlasSelector padded() const { return {group, RegionKind::padded}; }
  AtlasSelector inner() const { return {group, RegionKind::inner}; }
  nlohmann::json to_json() const;
};

NeighborhoodGauge make_gauge(const ManifoldSpec& spec, const Weight& omega_exp, const Weight& omega_log,
                             const GaugeOptions& options = {});

struct GaugeNorms {
  double weighted_padded = 0.0;  // |X|_{omega_E, 0} over the padded balls
  double c1_padded = 0.0;        // |X|_{1, 1} over the padded balls
  double weighted_inner = 0.0;   // |X|_{omega_E, 0} over the inner balls
  nlohmann::json to_json() const;
};

GaugeNorms gauge_norms(const NeighborhoodGauge& gauge, const LocalizedField& X);

enum class GaugeSet { d1, d2, d_rho };
std::string_view to_string(GaugeSet set);

Certificate gauge_membership(const NeighborhoodGauge& gauge, const LocalizedField& X, GaugeSet set);
Certificate gauge_membership(const NeighborhoodGauge& gauge, const GaugeNorms& norms, GaugeSet set);

struct GroupOptions {
  double identity_tolerance = 1e-8;  // |exp(x, Z(x)) - target(x)|
  double bound_slack = 1e-6;
  double newton_tolerance = 1e-12;
};

struct GroupResult {
  LocalizedField field;
  Certificate certificate;
};

// Z with exp o Z = (exp o X) o (exp o Y) on the inner balls; X in D1, Y in D2.
GroupResult compose(const LocalizedField& X, const LocalizedField& Y, const NeighborhoodGauge& gauge,
                    const std::vector<ChartGeometry>& geometries, const GroupOptions& options = {});

// Z with exp o Z = (exp o X)^-1 on the inner balls; X in D_rho.
GroupResult invert(const LocalizedField& X, const NeighborhoodGauge& gauge,
                   const std::vector<ChartGeometry>& geometries, const GroupOptions& options = {});

using ChartMap = std::function<Vec(std::size_t chart, const Vec& q)>;

// The field log(x, phi(x)), checked on the inner balls.
GroupResult group_chart(const ManifoldSpec& spec, const ChartMap& phi, const std::vector<ChartGeometry>& geometries,
                        int grid = 0, std::string group = "A");
GroupResult group_chart(const DiffeoRep& rep, int grid = 0);

}  // namespace atlasdiffeo
