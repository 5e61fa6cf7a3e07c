#include "atlasdiffeo/pipeline.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/field.hpp"
#include "atlasdiffeo/sampling.hpp"
#include "atlasdiffeo/seminorm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

namespace atlasdiffeo {

using nlohmann::json;

ConstantsOptions PipelineConfig::constants_options(const ManifoldSpec& spec) const {
  ConstantsOptions o;
  o.grid = resolved_grid(spec);
  o.fiber_grid = fiber_grid;
  o.safety = safety;
  return o;
}

json PipelineConfig::to_json() const {
  return json{{"grid", grid},           {"safety_factor", safety}, {"sigma", sigma},
              {"rho", rho},             {"tol", tol},              {"levels", levels},
              {"max_order", max_order}, {"fiber_grid", fiber_grid}, {"diffeo_pairs", diffeo_pairs},
              {"group", group}};
}

json RunReport::to_json() const {
  return json{{"schema", kReportSchema}, {"command", command},       {"spec_hash", spec_hash},
              {"configuration", configuration}, {"results", results}, {"pass", pass}};
}

std::string RunReport::dump() const { return to_json().dump(2) + "\n"; }

void write_file_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::Io, "cannot write '" + tmp + "'");
    os << text;
    if (!os) throw Error(ErrorCode::Io, "write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorCode::Io, "cannot move output to '" + path + "'");
}

namespace {

RunReport start(const std::string& command, const ManifoldSpec& spec, const PipelineConfig& config) {
  RunReport r;
  r.command = command;
  r.spec_hash = spec.source_hash;
  r.configuration = config.to_json();
  r.configuration["grid"] = config.resolved_grid(spec);
  return r;
}

Region inner_region(const Chart& c) { return Region{Vec::Zero(c.dim), c.r, c.norm()}; }

Region region_of(const Chart& c, const std::string& kind) {
  if (kind == "inner") return inner_region(c);
  if (kind == "padded") return Region{Vec::Zero(c.dim), c.r + c.R, c.norm()};
  throw Error(ErrorCode::InvalidArgument, "region must be 'inner' or 'padded'");
}

std::string chart_key(const Chart& c) { return geometry_signature(c) + "#r=" + std::to_string(c.r); }

// delta = 0.5 min(QuotNorm * RadExpFibInv(sigma), grenzLog, grenzExp) on the inner ball.
std::vector<ConstantsReport> inner_reports(const ManifoldSpec& spec, const std::vector<ChartGeometry>& geos,
                                           const ConstantsOptions& copt, double sigma, const std::vector<double>* fixed,
                                           std::vector<double>& deltas) {
  std::vector<ConstantsReport> out(spec.charts.size());
  deltas.assign(spec.charts.size(), 0.0);
  std::map<std::string, std::size_t> memo;
  for (std::size_t k = 0; k < spec.charts.size(); ++k) {
    const Chart& c = spec.charts[k];
    const std::string key = chart_key(c) + (fixed ? "#d=" + std::to_string((*fixed)[k]) : "");
    auto it = memo.find(key);
    if (it != memo.end()) {
      out[k] = out[it->second];
      deltas[k] = deltas[it->second];
    } else {
      const ConstantsEstimator est(geos[k], copt);
      const Region K = inner_region(c);
      if (fixed) {
        deltas[k] = (*fixed)[k];
      } else {
        const double q = est.quot_norm(K);
        const double rf = est.rad_fib_inv(K, sigma);
        deltas[k] = 0.5 * std::min({q * rf, est.grenz_log(K), est.grenz_exp(K)});
      }
      out[k] = est.report(K, deltas[k], sigma);
      memo[key] = k;
    }
    out[k].chart = c.id;
  }
  return out;
}

WeightSet base_weights(const ManifoldSpec& spec) {
  WeightSet W;
  W.weights.push_back(Weight(spec, "one", std::make_shared<WeightBase>()));
  for (const auto& [name, exprs] : spec.weights) {
    if (name == "one") continue;
    W.weights.push_back(Weight::from_exprs(spec, name, exprs));
  }
  return W;
}

json weight_list(const WeightSet& W) {
  json j = json::array();
  for (const Weight& w : W.weights) j.push_back(w.to_json());
  return j;
}

std::vector<Region> inner_regions(const ManifoldSpec& spec) {
  std::vector<Region> r;
  for (const Chart& c : spec.charts) r.push_back(inner_region(c));
  return r;
}

json tabulate_to(const LocalizedField& Z, const std::string& out, int grid) {
  json j;
  if (out.empty()) return j;
  const Tabulation t = tabulate(Z, grid);
  write_tabulation(out, t);
  j["path"] = out;
  j["grid"] = grid;
  return j;
}

}  // namespace

json GroupSetup::to_json(const ManifoldSpec& spec) const {
  json j;
  json cs = json::object();
  for (std::size_t k = 0; k < constants.size(); ++k) {
    json c = constants[k].to_json();
    c["diffeo"] = diffeo_constants[k].to_json();
    c["target"] = targets[k];
    cs[spec.charts[k].id] = c;
  }
  j["constants"] = cs;
  j["omega"] = {{"level", omega.level},
                {"rescale", rescale},
                {"omega_E_level", omega.level * rescale},
                {"omega_L_level", omega.level * rescale * (1.0 - constants.front().sigma) / (1.0 + constants.front().sigma)},
                {"omega_E", omega.omega_exp.to_json()},
                {"omega_L", omega.omega_log.to_json()}};
  j["gauge"] = gauge.to_json();
  j["certificate"] = certificate.to_json();
  return j;
}

GroupSetup prepare_group(const ManifoldSpec& spec, const PipelineConfig& config) {
  GroupSetup s;
  const ConstantsOptions copt = config.constants_options(spec);
  s.geometries = chart_geometries(spec);
  s.constants = inner_reports(spec, s.geometries, copt, config.sigma, nullptr, s.deltas);
  s.diffeo_constants = estimate_diffeo_constants(s.geometries, copt);
  ForgeOptions fo;
  fo.grid = config.resolved_grid(spec);
  fo.max_order = config.max_order;
  s.omega = pair_omega_exp_log(spec, s.constants, config.sigma, s.deltas, fo);

  const auto& levels = s.omega.omega_exp.base().levels;
  s.targets.resize(spec.charts.size());
  double K = 1.0;
  for (std::size_t k = 0; k < spec.charts.size(); ++k) {
    const Chart& c = spec.charts[k];
    const ConstantsReport& cr = s.constants[k];
    const DiffeoConstants& dc = s.diffeo_constants[k];
    s.targets[k] = std::min({s.deltas[k], 1.0 / (1.0 + cr.b_safe()), cr.a_safe() > 0 ? 1.0 / cr.a_safe() : 1.0,
                             c.epsilon * c.r / (2.0 * dc.a_safe()), c.epsilon / (4.0 * (dc.b_safe() + 1.0)), dc.nu});
    K = std::max(K, std::max(1.0 / s.targets[k], 1.0) / levels[k]);
  }
  s.rescale = K;
  if (K > 1.0) {
    s.omega.omega_exp = s.omega.omega_exp.scaled(K, "omega_E", "adjusted");
    s.omega.omega_log = s.omega.omega_log.scaled(K, "omega_L", "omegaL");
  }
  s.certificate.criterion = "group_setup";
  s.certificate.resolution = fo.grid;
  s.certificate.safety_factor = config.safety;
  s.certificate.merge(s.omega.certificate, "omega.");
  for (std::size_t k = 0; k < spec.charts.size(); ++k) {
    const ChartSamples pad = region_samples(spec, k, RegionKind::padded, fo.grid);
    double lo = std::numeric_limits<double>::infinity();
    for (const Vec& q : pad.points) lo = std::min(lo, s.omega.omega_exp(k, q));
    if (pad.points.empty()) lo = 0.0;
    s.certificate.require("omega_E_adjusted_to_target", spec.charts[k].id, lo, ">=",
                          std::max(1.0 / s.targets[k], 1.0) * (1.0 - 1e-12));
  }
  GaugeOptions go;
  go.rho = config.rho;
  go.grid = fo.grid;
  go.group = config.group;
  s.gauge = make_gauge(spec, s.omega.omega_exp, s.omega.omega_log, go);
  return s;
}

double gauge_scale(const NeighborhoodGauge& gauge, const LocalizedField& X) {
  const GaugeNorms n = gauge_norms(gauge, X);
  double s = 1.0;
  auto limit = [&](double value, double threshold) {
    if (value > 0.0) s = std::min(s, 0.5 * threshold / value);
  };
  limit(n.weighted_padded, std::min(gauge.d1_weighted, gauge.drho_weighted));
  limit(n.c1_padded, std::min(gauge.d1_c1, gauge.drho_c1));
  limit(n.weighted_inner, gauge.d2_weighted);
  return s;
}

RunReport run_validate(const ManifoldSpec& spec, const PipelineConfig& config) {
  RunReport r = start("validate", spec, config);
  const Certificate cert = validate_adapted(spec, config.resolved_grid(spec), config.group);
  r.results["certificate"] = cert.to_json();
  r.results["locally_finite"] = locally_finite_report(spec, config.group, config.resolved_grid(spec)).to_json();
  r.pass = cert.pass;
  return r;
}

RunReport run_constants(const ManifoldSpec& spec, const std::string& chart, double delta, double sigma,
                        const std::string& region, const PipelineConfig& config) {
  RunReport r = start("constants", spec, config);
  const std::size_t k = spec.chart_index(chart);
  const ChartGeometry geo(spec.charts[k]);
  const ConstantsEstimator est(geo, config.constants_options(spec));
  ConstantsReport rep = est.report(region_of(spec.charts[k], region), delta, sigma);
  rep.chart = chart;
  r.results["constants"] = rep.to_json();
  return r;
}

RunReport run_seminorm(const ManifoldSpec& spec, const std::string& field, const std::string& weight, int order,
                       const std::string& atlas, const PipelineConfig& config) {
  RunReport r = start("seminorm", spec, config);
  const LocalizedField X = LocalizedField::from_spec(spec, field);
  const Weight f = weight == "one" && !spec.weights.count("one") ? Weight::one(spec) : Weight::from_spec(spec, weight);
  SeminormOptions so;
  so.grid = config.resolved_grid(spec);
  const SeminormValue v = seminorm(X, f, order, AtlasSelector::parse(atlas), so);
  r.results["seminorm"] = v.to_json();
  r.results["field"] = field;
  r.pass = !v.exceeded;
  return r;
}

RunReport run_saturate(const ManifoldSpec& spec, int levels, double sigma, double delta, const PipelineConfig& config) {
  RunReport r = start("saturate", spec, config);
  r.configuration["sigma"] = sigma;
  r.configuration["delta"] = delta;
  r.configuration["levels"] = levels;
  const ConstantsOptions copt = config.constants_options(spec);
  const auto geos = chart_geometries(spec);
  const std::vector<double> fixed(spec.charts.size(), delta);
  std::vector<double> deltas;
  const auto reports = inner_reports(spec, geos, copt, sigma, &fixed, deltas);
  ForgeOptions fo;
  fo.grid = config.resolved_grid(spec);
  fo.max_order = config.max_order;
  const OmegaPair omega = pair_omega_exp_log(spec, reports, sigma, deltas, fo);
  WeightSet W0 = base_weights(spec);
  W0.weights.push_back(omega.omega_exp);
  const BoundFamilies fam = estimate_bound_families(spec, geos, inner_regions(spec), deltas, deltas, fo);
  const WeightSet We = saturate(W0, fam, levels, fo);

  Certificate dominance;
  dominance.criterion = "ext_mult_dominance";
  dominance.resolution = fo.grid;
  for (const Weight& f : W0.weights)
    for (const BoundFamily* b : fam.all()) dominance.merge(ext_mult(f, *b, fo).dominance, f.name() + ".");
  r.results["weights"] = weight_list(We);
  r.results["metadata"] = We.metadata;
  r.results["bound_families"] = {{"B1", fam.b1.to_json(spec)}, {"B2", fam.b2.to_json(spec)}, {"B3", fam.b3.to_json(spec)}};
  r.results["dominance"] = dominance.to_json();
  r.results["omega"] = omega.certificate.to_json();
  const double excess = We.metadata.value("local_bound_excess", 0.0);
  r.results["local_bound_excess"] = excess;
  r.pass = dominance.pass && omega.certificate.pass && excess <= 0.0 && We.metadata.value("unresolved_roots", 0) == 0;
  return r;
}

RunReport run_certify(const ManifoldSpec& spec, const std::string& field, const PipelineConfig& config) {
  RunReport r = start("certify", spec, config);
  const LocalizedField X = LocalizedField::from_spec(spec, field);
  const auto geos = chart_geometries(spec);
  const auto dc = estimate_diffeo_constants(geos, config.constants_options(spec));
  DiffeoOptions o;
  o.grid = config.resolved_grid(spec);
  o.pairs_per_chart = config.diffeo_pairs;
  o.group = config.group;
  const Certificate cert = certify_diffeo(X, geos, dc, o);
  r.results["field"] = field;
  r.results["certificate"] = cert.to_json();
  r.pass = cert.pass;
  if (!cert.pass) {
    json failed = json::array();
    for (const Check& c : cert.checks)
      if (!c.holds && std::find(failed.begin(), failed.end(), c.name) == failed.end()) failed.push_back(c.name);
    r.results["failed_clauses"] = failed;
  }
  return r;
}

namespace {

RunReport group_operation(const std::string& command, const ManifoldSpec& spec, const PipelineConfig& config,
                          const std::function<GroupResult(const GroupSetup&)>& op, const std::string& out) {
  RunReport r = start(command, spec, config);
  const GroupSetup setup = prepare_group(spec, config);
  r.results["setup"] = setup.to_json(spec);
  try {
    const GroupResult res = op(setup);
    r.results["certificate"] = res.certificate.to_json();
    r.results["output"] = tabulate_to(res.field, out, config.resolved_grid(spec));
    r.pass = res.certificate.pass && setup.certificate.pass;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::GaugeViolation && e.code() != ErrorCode::LogDomainExceeded &&
        e.code() != ErrorCode::NewtonFailure)
      throw;
    r.results["violation"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    r.pass = false;
  }
  return r;
}

}  // namespace

RunReport run_compose(const ManifoldSpec& spec, const std::string& lhs, const std::string& rhs,
                      const std::string& out, const PipelineConfig& config) {
  const LocalizedField X = LocalizedField::from_spec(spec, lhs);
  const LocalizedField Y = LocalizedField::from_spec(spec, rhs);
  GroupOptions go;
  go.bound_slack = config.tol;
  return group_operation(
      "compose", spec, config, [&](const GroupSetup& s) { return compose(X, Y, s.gauge, s.geometries, go); }, out);
}

RunReport run_invert(const ManifoldSpec& spec, const std::string& field, const std::string& out,
                     const PipelineConfig& config) {
  const LocalizedField X = LocalizedField::from_spec(spec, field);
  GroupOptions go;
  go.bound_slack = config.tol;
  return group_operation(
      "invert", spec, config, [&](const GroupSetup& s) { return invert(X, s.gauge, s.geometries, go); }, out);
}

RunReport run_adjust(const ManifoldSpec& spec, const json& deltas, const PipelineConfig& config) {
  RunReport r = start("weights-adjust", spec, config);
  if (!deltas.is_object()) throw Error(ErrorCode::ParseError, "delta file must map chart ids to numbers");
  std::vector<double> d(spec.charts.size(), 0.0);
  std::vector<bool> seen(spec.charts.size(), false);
  for (const auto& [id, v] : deltas.items()) {
    if (!v.is_number()) throw Error(ErrorCode::ParseError, "delta of chart '" + id + "' must be a number");
    const std::size_t k = spec.chart_index(id);
    d[k] = v.get<double>();
    seen[k] = true;
  }
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k]) throw Error(ErrorCode::ParseError, "delta file has no entry for chart '" + spec.charts[k].id + "'");
  ForgeOptions fo;
  fo.grid = config.resolved_grid(spec);
  const AdjustedResult res = construct_adjusted(spec, d, fo);
  json levels = json::object();
  for (std::size_t k = 0; k < spec.charts.size(); ++k) levels[spec.charts[k].id] = res.weight.base().levels[k];
  r.results["weight"] = res.weight.to_json();
  r.results["weight"]["levels"] = levels;
  r.results["weight"]["bump"] = "smoothstep plateau on the padded ball, zero outside the domain inradius";
  r.results["certificate"] = res.certificate.to_json();
  r.pass = res.certificate.pass;
  return r;
}

RunReport run_full_pipeline(const ManifoldSpec& spec, const PipelineConfig& config) {
  RunReport r = start("full-pipeline", spec, config);
  const int grid = config.resolved_grid(spec);
  const Certificate adapted = validate_adapted(spec, grid, config.group);
  r.results["validate"] = adapted.to_json();
  r.results["locally_finite"] = locally_finite_report(spec, config.group, grid).to_json();

  const GroupSetup setup = prepare_group(spec, config);
  r.results["setup"] = setup.to_json(spec);

  ForgeOptions fo;
  fo.grid = grid;
  fo.max_order = config.max_order;
  const BoundFamilies fam =
      estimate_bound_families(spec, setup.geometries, inner_regions(spec), setup.deltas, setup.deltas, fo);
  WeightSet W0 = base_weights(spec);
  W0.weights.push_back(setup.omega.omega_exp);
  const WeightSet We = saturate(W0, fam, config.levels, fo);
  const double excess = We.metadata.value("local_bound_excess", 0.0);
  r.results["bound_families"] = {{"B1", fam.b1.to_json(spec)}, {"B2", fam.b2.to_json(spec)}, {"B3", fam.b3.to_json(spec)}};
  r.results["saturation"] = {{"weights", weight_list(We)}, {"metadata", We.metadata}, {"size", We.size()}};

  bool pass = adapted.pass && setup.certificate.pass && excess <= 0.0 && We.metadata.value("unresolved_roots", 0) == 0;
  DiffeoOptions dopt;
  dopt.grid = grid;
  dopt.pairs_per_chart = config.diffeo_pairs;
  dopt.group = config.group;
  SeminormOptions so;
  so.grid = grid;
  json fields = json::object();
  for (const auto& [name, comps] : spec.fields) {
    const LocalizedField X = LocalizedField::from_spec(spec, name);
    json f;
    const Certificate cert = certify_diffeo(X, setup.geometries, setup.diffeo_constants, dopt);
    f["diffeomorphism"] = cert.to_json();
    const Certificate member = membership(X, We, 1, AtlasSelector{config.group, RegionKind::padded}, so);
    f["membership"] = member.to_json();
    const double s = gauge_scale(setup.gauge, X);
    const LocalizedField sX = X.scaled(s);
    const GaugeNorms n = gauge_norms(setup.gauge, sX);
    bool in_gauge = true;
    json g;
    for (GaugeSet set : {GaugeSet::d1, GaugeSet::d2, GaugeSet::d_rho}) {
      const Certificate c = gauge_membership(setup.gauge, n, set);
      g[std::string(to_string(set))] = c.pass;
      in_gauge = in_gauge && c.pass;
    }
    f["gauge"] = {{"scale", s}, {"norms", n.to_json()}, {"membership", g}, {"pass", in_gauge}};
    fields[name] = f;
    pass = pass && cert.pass && member.pass && in_gauge;
  }
  r.results["fields"] = fields;
  r.pass = pass;
  return r;
}

}  // namespace atlasdiffeo
