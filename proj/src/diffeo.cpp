#include "atlasdiffeo/diffeo.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/parallel.hpp"
#include "atlasdiffeo/qift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace atlasdiffeo {

using nlohmann::json;

namespace {

bool in_group(const ManifoldSpec& spec, std::size_t chart, const std::string& group) {
  return spec.charts[chart].atlas == group;
}

bool in_inner(const Chart& c, const Vec& q) { return norm(q, c.norm()) < c.r; }

// Lattice points of the open chart-norm ball of radius `radius` around 0, n per axis.
std::vector<Vec> ball_targets(int dim, double radius, NormKind kind, int n) {
  std::vector<Vec> out;
  const Lattice L = box_lattice(Vec::Zero(dim), Vec::Constant(dim, radius), n);
  for (std::size_t i = 0; i < L.size(); ++i) {
    const Vec p = L.point(i);
    if (norm(p, kind) < radius * (1.0 - 1e-12)) out.push_back(p);
  }
  return out;
}

NewtonResult preimage(const LocalizedField& X, const ChartGeometry& geo, std::size_t chart, const Vec& target,
                      const std::function<bool(const Vec&)>& admissible, double tolerance) {
  const double h = 1e-6 * std::max(1.0, geo.chart().domain.scale());
  const VecMap f = [&](const Vec& p) { return local_diffeo(X, geo, chart, p); };
  const JacobianMap jac = [&](const Vec& p) { return fd_jacobian(f, p, h); };
  const Vec seed = target - X(chart, target);
  return newton_solve(f, jac, target, seed, admissible, geo.norm_kind(), tolerance);
}

double log_trust(const ChartGeometry& geo) { return geo.chart().domain.inradius(); }

const ChartGeometry& geometry_for(const std::vector<ChartGeometry>& geos, std::size_t chart) {
  if (chart >= geos.size()) throw Error(ErrorCode::InvalidArgument, "no geometry for chart index " + std::to_string(chart));
  return geos[chart];
}

}  // namespace

std::vector<ChartGeometry> chart_geometries(const ManifoldSpec& spec, const ExpOptions& options) {
  std::vector<ChartGeometry> out;
  out.reserve(spec.charts.size());
  for (const Chart& c : spec.charts) out.emplace_back(c, options);
  return out;
}

json DiffeoConstants::to_json() const {
  return json{{"chart", chart}, {"grenz_exp", grenz_exp}, {"nu", nu},          {"a", a},
              {"b", b},         {"resolution", resolution}, {"safety_factor", safety_factor}};
}

std::vector<DiffeoConstants> estimate_diffeo_constants(const std::vector<ChartGeometry>& geometries,
                                                       const ConstantsOptions& options, double nu_factor) {
  if (!(nu_factor > 0.0 && nu_factor < 1.0)) throw Error(ErrorCode::InvalidArgument, "nu factor must lie in (0, 1)");
  std::vector<DiffeoConstants> out(geometries.size());
  std::map<std::string, std::size_t> memo;
  for (std::size_t k = 0; k < geometries.size(); ++k) {
    const Chart& c = geometries[k].chart();
    const Region inner{Vec::Zero(c.dim), c.r, c.norm()};
    const std::string key = geometry_signature(c) + "#" + std::to_string(c.r);
    DiffeoConstants& d = out[k];
    auto it = memo.find(key);
    if (it != memo.end()) {
      d = out[it->second];
    } else {
      const ConstantsEstimator est(geometries[k], options);
      d.grenz_exp = est.grenz_exp(inner);
      d.nu = nu_factor * d.grenz_exp;
      d.a = est.exp_first_bound(inner, d.nu);
      d.b = est.exp_second_bound(inner, d.nu);
      d.resolution = options.grid;
      d.safety_factor = options.safety;
      memo[key] = k;
    }
    d.chart = c.id;
  }
  return out;
}

Vec local_diffeo(const LocalizedField& X, const ChartGeometry& geometry, std::size_t chart, const Vec& q) {
  return geometry.exp(q, X(chart, q));
}

Certificate certify_diffeo(const LocalizedField& X, const std::vector<ChartGeometry>& geometries,
                           const std::vector<DiffeoConstants>& constants, const DiffeoOptions& options) {
  const ManifoldSpec& spec = X.spec();
  if (constants.size() != spec.charts.size() || geometries.size() != spec.charts.size())
    throw Error(ErrorCode::ConstantsMissing, "diffeomorphism certificate needs constants for every chart");
  for (const auto& c : constants)
    if (!(std::isfinite(c.a) && std::isfinite(c.b) && c.nu > 0.0))
      throw Error(ErrorCode::ConstantsMissing, "constants of chart '" + c.chart + "' are missing or not finite");

  Certificate cert;
  cert.criterion = "diffeomorphism";
  cert.resolution = options.grid > 0 ? options.grid : spec.grid_resolution;
  cert.safety_factor = constants.empty() ? 1.0 : constants.front().safety_factor;
  SeminormOptions so;
  so.grid = cert.resolution;
  const Weight one = Weight::one(spec);
  const AtlasSelector inner{options.group, RegionKind::inner};
  const auto members = spec.group(options.group);

  json per_chart = json::array();
  for (std::size_t k : members) {
    const Chart& c = spec.charts[k];
    const DiffeoConstants& dc = constants[k];
    so.only_chart = k;
    const double hn0 = seminorm(X, one, 0, inner, so).value;
    const double hn1 = seminorm(X, one, 1, inner, so).value;
    const double t0 = std::min({c.epsilon * c.r / (2.0 * dc.a_safe()), dc.nu, c.epsilon / (4.0 * (dc.b_safe() + 1.0))});
    cert.require("sup_norm_threshold", c.id, hn0, "<", t0);
    cert.require("one_seminorm_threshold", c.id, hn1, "<", c.epsilon / 4.0);
    per_chart.push_back({{"chart", c.id}, {"hn0", hn0}, {"hn1", hn1}, {"threshold0", t0},
                         {"threshold1", c.epsilon / 4.0}, {"constants", dc.to_json()}});
  }
  cert.details["charts"] = per_chart;
  if (!cert.pass) return cert;

  const int tgrid = options.target_grid > 0 ? options.target_grid : cert.resolution;
  std::size_t pairs_total = 0, targets_total = 0;
  for (std::size_t k : members) {
    const Chart& c = spec.charts[k];
    const ChartGeometry& geo = geometry_for(geometries, k);
    const NormKind nk = c.norm();
    const int d = c.dim;

    // Injectivity on random pairs of the inner ball.
    std::mt19937_64 rng(options.seed + k);
    std::uniform_real_distribution<double> u(-c.r, c.r);
    auto draw = [&] {
      for (;;) {
        Vec p(d);
        for (int i = 0; i < d; ++i) p(i) = u(rng);
        if (norm(p, nk) < c.r) return p;
      }
    };
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int i = 0; i < options.pairs_per_chart; ++i) {
      Vec p = draw();
      Vec q = draw();
      pairs.emplace_back(std::move(p), std::move(q));
    }
    std::vector<double> ratio(pairs.size(), 0.0);
    parallel_for(pairs.size(), [&](std::size_t i) {
      const Vec& p = pairs[i].first;
      const Vec& q = pairs[i].second;
      const double dpq = norm(p - q, nk);
      if (dpq == 0.0) {
        ratio[i] = 1.0;
        return;
      }
      ratio[i] = norm(local_diffeo(X, geo, k, p) - local_diffeo(X, geo, k, q), nk) / dpq;
    });
    double worst = std::numeric_limits<double>::infinity();
    std::size_t collisions = 0;
    for (double r : ratio) {
      worst = std::min(worst, r);
      if (!(r > 1e-9)) ++collisions;
    }
    if (pairs.empty()) worst = 1.0;
    pairs_total += pairs.size();
    cert.require("injective_pairs", c.id, static_cast<double>(collisions), "==", 0.0);
    cert.require("distance_ratio", c.id, worst, ">=", (1.0 - c.epsilon / 2.0) * (1.0 - 1e-9));

    // Surjectivity onto Ball(0, r (1 - 2 eps)) and the preimage count bound.
    const std::vector<Vec> targets = ball_targets(d, c.r * (1.0 - 2.0 * c.epsilon), nk, tgrid);
    targets_total += targets.size();
    std::vector<int> solved(targets.size(), 0);
    std::vector<double> count_excess(targets.size(), 0.0);
    parallel_for(targets.size(), [&](std::size_t i) {
      const Vec& z = targets[i];
      const auto own = preimage(X, geo, k, z, [&](const Vec& p) { return in_inner(c, p); }, options.newton_tolerance);
      solved[i] = own.converged && in_inner(c, own.x) ? 1 : 0;
      std::vector<std::pair<std::size_t, Vec>> found;
      int containing = 0;
      for (const auto& cp : spec.charts_containing(k, z)) {
        if (!in_group(spec, cp.chart, options.group)) continue;
        ++containing;
        const Chart& other = spec.charts[cp.chart];
        const auto r = preimage(X, geometries[cp.chart], cp.chart, cp.coords,
                                [&](const Vec& p) { return in_inner(other, p); }, options.newton_tolerance);
        if (!r.converged || !in_inner(other, r.x)) continue;
        const auto in_k = spec.map_point(cp.chart, r.x, k);
        bool duplicate = false;
        for (const auto& [fc, fx] : found) {
          if (in_k && fc == k && norm(*in_k - fx, nk) < 1e-7) duplicate = true;
          if (!in_k && fc == cp.chart && norm(r.x - fx, other.norm()) < 1e-7) duplicate = true;
        }
        if (!duplicate) found.emplace_back(in_k ? k : cp.chart, in_k ? *in_k : r.x);
      }
      count_excess[i] = static_cast<double>(found.size()) - containing;
    });
    double unsolved = 0.0, excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (!solved[i]) unsolved += 1.0;
      excess = std::max(excess, count_excess[i]);
    }
    if (targets.empty()) excess = 0.0;
    cert.require("surjective_targets", c.id, unsolved, "==", 0.0);
    cert.require("preimage_count_bound", c.id, excess, "<=", 0.0);
  }
  cert.details["injectivity_pairs"] = pairs_total;
  cert.details["surjectivity_targets"] = targets_total;
  return cert;
}

DiffeoRep make_diffeo(const LocalizedField& X, const std::vector<ChartGeometry>& geometries,
                      const std::vector<DiffeoConstants>& constants, const DiffeoOptions& options) {
  DiffeoRep rep;
  rep.generator = X;
  rep.certificate = certify_diffeo(X, geometries, constants, options);
  rep.geometries = &geometries;
  rep.group = options.group;
  return rep;
}

namespace {

std::size_t evaluation_chart(const DiffeoRep& rep, const ChartPoint& p, Vec& coords) {
  const ManifoldSpec& spec = rep.generator.spec();
  for (const auto& cp : spec.charts_containing(p.chart, p.coords)) {
    if (!in_group(spec, cp.chart, rep.group) || !in_inner(spec.charts[cp.chart], cp.coords)) continue;
    coords = cp.coords;
    return cp.chart;
  }
  throw Error(ErrorCode::NoContainingChart, "point of chart '" + spec.charts[p.chart].id + "' lies in no inner ball");
}

void require_certified(const DiffeoRep& rep) {
  if (!rep.certified())
    throw Error(ErrorCode::InvalidArgument, "diffeomorphism of '" + rep.generator.name() + "' is not certified");
}

}  // namespace

ChartPoint apply_diffeo(const DiffeoRep& rep, const ChartPoint& p) {
  require_certified(rep);
  const ManifoldSpec& spec = rep.generator.spec();
  Vec coords;
  const std::size_t c = evaluation_chart(rep, p, coords);
  const Vec v = local_diffeo(rep.generator, (*rep.geometries)[c], c, coords);
  std::optional<ChartPoint> best;
  double best_norm = std::numeric_limits<double>::infinity();
  for (const auto& cp : spec.charts_containing(c, v)) {
    if (!in_group(spec, cp.chart, rep.group)) continue;
    const double n = norm(cp.coords, spec.charts[cp.chart].norm());
    if (n < best_norm) {
      best_norm = n;
      best = cp;
    }
  }
  if (!best) throw Error(ErrorCode::NoContainingChart, "image point lies in no chart domain");
  return *best;
}

std::vector<Vec> apply_diffeo_each(const DiffeoRep& rep, const ChartPoint& p, std::size_t target) {
  require_certified(rep);
  const ManifoldSpec& spec = rep.generator.spec();
  std::vector<Vec> out;
  for (const auto& cp : spec.charts_containing(p.chart, p.coords)) {
    if (!in_group(spec, cp.chart, rep.group) || !in_inner(spec.charts[cp.chart], cp.coords)) continue;
    const Vec v = local_diffeo(rep.generator, (*rep.geometries)[cp.chart], cp.chart, cp.coords);
    if (auto t = spec.map_point(cp.chart, v, target)) out.push_back(*t);
  }
  return out;
}

json NeighborhoodGauge::to_json() const {
  return json{{"rho", rho},
              {"pad", pad},
              {"epsilon", epsilon},
              {"D1", {{"omega_E_0", d1_weighted}, {"one_1", d1_c1}}},
              {"D2", {{"omega_E_0", d2_weighted}}},
              {"D_rho", {{"omega_E_0", drho_weighted}, {"one_1", drho_c1}}},
              {"alpha", alpha},
              {"resolution", grid},
              {"group", group}};
}

NeighborhoodGauge make_gauge(const ManifoldSpec& spec, const Weight& omega_exp, const Weight& omega_log,
                             const GaugeOptions& options) {
  if (!(options.rho > 0.0 && options.rho < 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in (0, 1)");
  const auto members = spec.group(options.group);
  if (members.empty()) throw Error(ErrorCode::InvalidArgument, "atlas group '" + options.group + "' has no charts");
  NeighborhoodGauge g;
  g.omega_exp = omega_exp;
  g.omega_log = omega_log;
  g.rho = options.rho;
  g.grid = options.grid > 0 ? options.grid : spec.grid_resolution;
  g.group = options.group;
  g.pad = std::numeric_limits<double>::infinity();
  g.epsilon = std::numeric_limits<double>::infinity();
  for (std::size_t k : members) {
    g.pad = std::min(g.pad, spec.charts[k].R);
    g.epsilon = std::min(g.epsilon, spec.charts[k].epsilon);
  }
  g.d2_weighted = std::min(0.25, g.pad);
  g.drho_weighted = (1.0 - g.rho) * std::min(g.rho, g.pad) / 2.0;
  g.drho_c1 = std::min(g.rho / 2.0, g.epsilon / 4.0);
  g.alpha = std::min({g.d1_weighted, g.d1_c1, g.d2_weighted, g.drho_weighted, g.drho_c1});
  return g;
}

json GaugeNorms::to_json() const {
  return json{{"omega_E_0_padded", weighted_padded}, {"one_1_padded", c1_padded}, {"omega_E_0_inner", weighted_inner}};
}

GaugeNorms gauge_norms(const NeighborhoodGauge& gauge, const LocalizedField& X) {
  SeminormOptions so;
  so.grid = gauge.grid;
  GaugeNorms n;
  n.weighted_padded = seminorm(X, gauge.omega_exp, 0, gauge.padded(), so).value;
  n.c1_padded = seminorm(X, Weight::one(X.spec()), 1, gauge.padded(), so).value;
  n.weighted_inner = seminorm(X, gauge.omega_exp, 0, gauge.inner(), so).value;
  return n;
}

std::string_view to_string(GaugeSet set) {
  switch (set) {
    case GaugeSet::d1:
      return "D1";
    case GaugeSet::d2:
      return "D2";
    case GaugeSet::d_rho:
      break;
  }
  return "D_rho";
}

Certificate gauge_membership(const NeighborhoodGauge& gauge, const GaugeNorms& n, GaugeSet set) {
  Certificate cert;
  cert.criterion = "gauge_" + std::string(to_string(set));
  cert.resolution = gauge.grid;
  switch (set) {
    case GaugeSet::d1:
      cert.require("D1.omega_E_0", "", n.weighted_padded, "<", gauge.d1_weighted);
      cert.require("D1.one_1", "", n.c1_padded, "<", gauge.d1_c1);
      break;
    case GaugeSet::d2:
      cert.require("D2.omega_E_0", "", n.weighted_inner, "<", gauge.d2_weighted);
      break;
    case GaugeSet::d_rho:
      cert.require("D_rho.omega_E_0", "", n.weighted_padded, "<", gauge.drho_weighted);
      cert.require("D_rho.one_1", "", n.c1_padded, "<", gauge.drho_c1);
      break;
  }
  cert.details["norms"] = n.to_json();
  return cert;
}

Certificate gauge_membership(const NeighborhoodGauge& gauge, const LocalizedField& X, GaugeSet set) {
  return gauge_membership(gauge, gauge_norms(gauge, X), set);
}

namespace {

void enforce(const Certificate& c, const std::string& role) {
  if (!c.pass) throw Error(ErrorCode::GaugeViolation, role + " violates " + c.first_failure());
}

// Max of `residual` over the inner samples of the gauge group, rethrowing evaluation errors.
double inner_max(const NeighborhoodGauge& gauge, const ManifoldSpec& spec,
                 const std::function<double(std::size_t, const Vec&)>& residual) {
  SeminormOptions so;
  so.grid = gauge.grid;
  return atlas_sup(spec, gauge.inner(), residual, so).value;
}

}  // namespace

GroupResult compose(const LocalizedField& X, const LocalizedField& Y, const NeighborhoodGauge& gauge,
                    const std::vector<ChartGeometry>& geometries, const GroupOptions& options) {
  const ManifoldSpec& spec = X.spec();
  const GaugeNorms nx = gauge_norms(gauge, X);
  const GaugeNorms ny = gauge_norms(gauge, Y);
  enforce(gauge_membership(gauge, nx, GaugeSet::d1), "left factor");
  enforce(gauge_membership(gauge, ny, GaugeSet::d2), "right factor");

  const std::vector<ChartGeometry>* geos = &geometries;
  const LogOptions lo{50, options.newton_tolerance};
  auto target = [X, Y, geos](std::size_t k, const Vec& x) {
    const ChartGeometry& g = (*geos)[k];
    return local_diffeo(X, g, k, local_diffeo(Y, g, k, x));
  };
  ChartFunction z = [geos, target, lo](std::size_t k, const Vec& x) -> Vec {
    const ChartGeometry& g = (*geos)[k];
    try {
      return g.log(x, target(k, x), log_trust(g), lo);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoConvergence || e.code() == ErrorCode::OutsideInjectivityRadius)
        throw Error(ErrorCode::LogDomainExceeded, std::string("composite leaves the log domain: ") + e.what());
      throw;
    }
  };
  GroupResult res;
  res.field = LocalizedField(spec, "C(" + X.name() + "," + Y.name() + ")", z, 2, "compose");
  Certificate& cert = res.certificate;
  cert.criterion = "composition";
  cert.resolution = gauge.grid;
  const double identity = inner_max(gauge, spec, [&](std::size_t k, const Vec& x) {
    return norm(geometries[k].exp(x, res.field(k, x)) - target(k, x), spec.charts[k].norm());
  });
  cert.require("exp_identity", "", identity, "<=", options.identity_tolerance);
  SeminormOptions so;
  so.grid = gauge.grid;
  const double lhs = seminorm(res.field, gauge.omega_log, 0, gauge.inner(), so).value;
  const double rhs = (1.0 + nx.weighted_padded + nx.c1_padded) * ny.weighted_inner + nx.weighted_padded;
  cert.require("composition_bound", "", lhs, "<=", rhs + options.bound_slack);
  cert.require("result_in_R", "", lhs, "<", 1.0);
  cert.details["lhs_norms"] = nx.to_json();
  cert.details["rhs_norms"] = ny.to_json();
  return res;
}

GroupResult invert(const LocalizedField& X, const NeighborhoodGauge& gauge,
                   const std::vector<ChartGeometry>& geometries, const GroupOptions& options) {
  const ManifoldSpec& spec = X.spec();
  const GaugeNorms nx = gauge_norms(gauge, X);
  enforce(gauge_membership(gauge, nx, GaugeSet::d_rho), "field");

  const std::vector<ChartGeometry>* geos = &geometries;
  const double tol = options.newton_tolerance;
  auto inverse_point = [X, geos, tol](std::size_t k, const Vec& x) {
    const ChartGeometry& g = (*geos)[k];
    const Domain& U = g.chart().domain;
    const auto r = preimage(X, g, k, x, [&U](const Vec& p) { return U.contains(p); }, tol);
    if (!r.converged)
      throw Error(ErrorCode::NewtonFailure, "no preimage of a point of chart '" + g.chart().id + "' after " +
                                                std::to_string(r.iterations) + " iterations");
    return r.x;
  };
  const LogOptions lo{50, tol};
  ChartFunction z = [geos, inverse_point, lo](std::size_t k, const Vec& x) -> Vec {
    const ChartGeometry& g = (*geos)[k];
    try {
      return g.log(x, inverse_point(k, x), log_trust(g), lo);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoConvergence || e.code() == ErrorCode::OutsideInjectivityRadius)
        throw Error(ErrorCode::LogDomainExceeded, std::string("inverse leaves the log domain: ") + e.what());
      throw;
    }
  };
  GroupResult res;
  res.field = LocalizedField(spec, "I(" + X.name() + ")", z, 2, "invert");
  Certificate& cert = res.certificate;
  cert.criterion = "inversion";
  cert.resolution = gauge.grid;
  const double identity = inner_max(gauge, spec, [&](std::size_t k, const Vec& x) {
    const Vec p = geometries[k].exp(x, res.field(k, x));
    return norm(local_diffeo(X, geometries[k], k, p) - x, spec.charts[k].norm());
  });
  cert.require("exp_identity", "", identity, "<=", options.identity_tolerance);
  SeminormOptions so;
  so.grid = gauge.grid;
  const double lhs = seminorm(res.field, gauge.omega_log, 0, gauge.inner(), so).value;
  const double denom = 1.0 - (nx.weighted_padded + nx.c1_padded);
  cert.require("inversion_bound", "", lhs, "<=", nx.weighted_padded / denom + options.bound_slack);
  cert.require("result_in_R_rho", "", lhs, "<", std::min(gauge.pad, gauge.rho) / 2.0);
  cert.details["norms"] = nx.to_json();
  return res;
}

GroupResult group_chart(const ManifoldSpec& spec, const ChartMap& phi, const std::vector<ChartGeometry>& geometries,
                        int grid, std::string group) {
  const std::vector<ChartGeometry>* geos = &geometries;
  ChartFunction z = [geos, phi](std::size_t k, const Vec& x) -> Vec {
    const ChartGeometry& g = (*geos)[k];
    try {
      return g.log(x, phi(k, x), log_trust(g), LogOptions{50, 1e-12});
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoConvergence || e.code() == ErrorCode::OutsideInjectivityRadius ||
          e.code() == ErrorCode::LeftChartDomain)
        throw Error(ErrorCode::OutsideTrustRegion, std::string("map leaves the log trust region: ") + e.what());
      throw;
    }
  };
  GroupResult res;
  res.field = LocalizedField(spec, "log(id, phi)", z, 2, "group-chart");
  Certificate& cert = res.certificate;
  cert.criterion = "group_chart";
  cert.resolution = grid > 0 ? grid : spec.grid_resolution;
  SeminormOptions so;
  so.grid = cert.resolution;
  const double identity = atlas_sup(
                              spec, AtlasSelector{group, RegionKind::inner},
                              [&](std::size_t k, const Vec& x) {
                                return norm(geometries[k].exp(x, res.field(k, x)) - phi(k, x), spec.charts[k].norm());
                              },
                              so)
                              .value;
  cert.require("exp_identity", "", identity, "<=", 1e-8);
  return res;
}

GroupResult group_chart(const DiffeoRep& rep, int grid) {
  require_certified(rep);
  const LocalizedField X = rep.generator;
  const std::vector<ChartGeometry>* geos = rep.geometries;
  return group_chart(
      X.spec(), [X, geos](std::size_t k, const Vec& q) { return local_diffeo(X, (*geos)[k], k, q); }, *geos, grid,
      rep.group);
}

}  // namespace atlasdiffeo
