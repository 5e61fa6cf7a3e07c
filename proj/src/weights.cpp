#include "atlasdiffeo/weights.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/field.hpp"
#include "atlasdiffeo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace atlasdiffeo {

using nlohmann::json;

namespace {

constexpr double kFoldTolerance = 1e-9;  // bound tables this close to constant fold into a scalar

std::string num_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<ChartPoint> covering(const ManifoldSpec& spec, std::size_t chart, const Vec& q) {
  auto cps = spec.charts_containing(chart, q);
  if (cps.empty()) cps.push_back({chart, q});
  return cps;
}

int resolve_grid(const ManifoldSpec& spec, const ForgeOptions& o) { return o.grid > 0 ? o.grid : spec.grid_resolution; }

}  // namespace

double CoverTable::max_value() const {
  double m = 0.0;
  if (pairs) {
    for (const auto& [k, v] : pair_values) m = std::max(m, v);
  } else {
    for (double v : per_chart) m = std::max(m, v);
  }
  return m;
}

bool CoverTable::constant(double* value, double rel_tol) const {
  std::vector<double> vals;
  if (pairs) {
    for (const auto& [k, v] : pair_values) vals.push_back(v);
  } else {
    vals = per_chart;
  }
  if (vals.empty()) return false;
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  if (*hi != *lo && !(*lo > 0.0 && *hi <= *lo * (1.0 + rel_tol))) return false;
  if (value) *value = *hi;
  return true;
}

std::string CoverTable::key() const {
  std::ostringstream os;
  os.precision(17);
  os << label << (pairs ? "{p:" : "{c:");
  if (pairs) {
    for (const auto& [k, v] : pair_values) os << k.first << '>' << k.second << '=' << v << ';';
  } else {
    for (double v : per_chart) os << v << ';';
  }
  os << '}';
  return os.str();
}

double CoverTable::eval(const ManifoldSpec& spec, std::size_t chart, const Vec& q) const {
  const auto cps = covering(spec, chart, q);
  double m = 0.0;
  if (!pairs) {
    for (const auto& cp : cps) m = std::max(m, per_chart.at(cp.chart));
    return m;
  }
  for (const auto& a : cps)
    for (const auto& b : cps) {
      auto it = pair_values.find({a.chart, b.chart});
      if (it != pair_values.end()) m = std::max(m, it->second);
    }
  return m;
}

double chart_bump(const Chart& chart, const Vec& q) {
  const double rho = norm(q, chart.norm());
  const double r0 = chart.r + chart.R;
  const double r1 = chart.domain.inradius();
  if (rho <= r0) return 1.0;
  if (rho >= r1) return 0.0;
  const double t = (rho - r0) / (r1 - r0);
  return 1.0 - t * t * (3.0 - 2.0 * t);
}

double WeightBase::eval(const ManifoldSpec& spec, std::size_t chart, const Vec& q) const {
  switch (kind) {
    case Kind::one:
      return 1.0;
    case Kind::expr:
      return std::abs(exprs.at(chart).eval(q, spec.charts[chart].offset));
    case Kind::bump_max:
      break;
  }
  double m = 0.0;
  for (const auto& cp : covering(spec, chart, q))
    m = std::max(m, levels.at(cp.chart) * chart_bump(spec.charts[cp.chart], cp.coords));
  return m;
}

std::string WeightBase::key() const {
  switch (kind) {
    case Kind::one:
      return "1";
    case Kind::expr: {
      std::string k = "expr:" + label + "[";
      for (const auto& e : exprs) k += e.print() + ";";
      return k + "]";
    }
    case Kind::bump_max:
      break;
  }
  std::string k = "bump:" + label + "[";
  for (double v : levels) k += num_str(v) + ";";
  return k + "]";
}

Weight::Weight(const ManifoldSpec& spec, std::string name, std::shared_ptr<const WeightBase> base, double scalar,
               std::vector<std::shared_ptr<const CoverTable>> factors, std::string provenance)
    : spec_(&spec),
      name_(std::move(name)),
      base_(std::move(base)),
      scalar_(scalar),
      factors_(std::move(factors)),
      provenance_(std::move(provenance)) {
  if (scalar != 1.0) scalar_chain_.push_back(scalar);
}

Weight Weight::one(const ManifoldSpec& spec) {
  auto b = std::make_shared<WeightBase>();
  b->kind = WeightBase::Kind::one;
  b->label = "1";
  return Weight(spec, "1", b);
}

Weight Weight::constant(const ManifoldSpec& spec, double c, std::string name) {
  Weight w = one(spec);
  return w.scaled(std::abs(c), name.empty() ? num_str(std::abs(c)) : std::move(name), "user");
}

Weight Weight::from_exprs(const ManifoldSpec& spec, std::string name, std::vector<Expr> per_chart) {
  if (per_chart.size() != spec.charts.size())
    throw Error(ErrorCode::InvalidArgument, "weight '" + name + "' needs one expression per chart");
  auto b = std::make_shared<WeightBase>();
  b->kind = WeightBase::Kind::expr;
  b->label = name;
  b->exprs = std::move(per_chart);
  return Weight(spec, std::move(name), b);
}

Weight Weight::from_spec(const ManifoldSpec& spec, const std::string& name) {
  auto it = spec.weights.find(name);
  if (it == spec.weights.end()) throw Error(ErrorCode::InvalidArgument, "unknown weight '" + name + "'");
  return from_exprs(spec, name, it->second);
}

Weight Weight::global(const ManifoldSpec& spec, std::string name, const std::string& expr) {
  const Expr e = Expr::parse(expr, spec.dim);
  return from_exprs(spec, std::move(name), std::vector<Expr>(spec.charts.size(), e));
}

Weight Weight::bump_max(const ManifoldSpec& spec, std::string name, std::vector<double> levels,
                        std::string provenance) {
  if (levels.size() != spec.charts.size())
    throw Error(ErrorCode::InvalidArgument, "bump weight needs one level per chart");
  auto b = std::make_shared<WeightBase>();
  b->kind = WeightBase::Kind::bump_max;
  b->label = name;
  b->levels = std::move(levels);
  return Weight(spec, std::move(name), b, 1.0, {}, std::move(provenance));
}

double Weight::operator()(std::size_t chart, const Vec& q) const {
  if (scalar_ == 0.0) return 0.0;
  double v = base_->eval(*spec_, chart, q);
  for (const auto& f : factors_) v *= f->eval(*spec_, chart, q);
  for (double s : scalar_chain_) v *= s;
  return v;
}

Weight Weight::scaled(double c, std::string name, std::string provenance) const {
  Weight w = *this;
  w.scalar_ *= c;
  w.scalar_chain_.push_back(c);
  if (!name.empty()) w.name_ = std::move(name);
  if (!provenance.empty()) w.provenance_ = std::move(provenance);
  w.root_ = root();
  w.root_bound_ = root_bound_ * std::abs(c);
  return w;
}

Weight Weight::times(std::shared_ptr<const CoverTable> B, std::string name, std::string provenance) const {
  double c = 0.0;
  if (B->constant(&c, kFoldTolerance)) return scaled(c, std::move(name), std::move(provenance));
  Weight w = *this;
  w.root_ = root();
  w.root_bound_ = root_bound_ * B->max_value();
  w.factors_.push_back(std::move(B));
  w.name_ = std::move(name);
  w.provenance_ = std::move(provenance);
  return w;
}

std::string Weight::shape_key() const {
  std::vector<std::string> keys;
  for (const auto& f : factors_) keys.push_back(f->key());
  std::sort(keys.begin(), keys.end());
  std::string k = base_->key();
  for (const auto& s : keys) k += "*" + s;
  return k;
}

json Weight::to_json() const {
  json j;
  j["name"] = name_;
  j["provenance"] = provenance_;
  j["scalar"] = scalar_;
  j["base"] = base_->kind == WeightBase::Kind::one ? "1" : base_->label;
  json f = json::array();
  for (const auto& t : factors_) f.push_back(t->label);
  j["factors"] = f;
  j["root"] = root();
  j["root_bound"] = root_bound_;
  return j;
}

json WeightSet::to_json() const {
  json list = json::array();
  for (const auto& w : weights) list.push_back(w.to_json());
  return json{{"weights", list}, {"metadata", metadata}};
}

std::string BoundFamily::label() const {
  switch (kind) {
    case Kind::exp_superposition:
      return "B1";
    case Kind::log_superposition:
      return "B2";
    case Kind::transition:
      break;
  }
  return "B3";
}

json BoundFamily::to_json(const ManifoldSpec& spec) const {
  json j = json::object();
  for (const auto& [ell, t] : by_order) {
    json entries = json::object();
    if (t->pairs) {
      for (const auto& [k, v] : t->pair_values) entries[spec.charts[k.first].id + ">" + spec.charts[k.second].id] = v;
    } else {
      for (std::size_t c = 0; c < t->per_chart.size(); ++c) entries[spec.charts[c].id] = t->per_chart[c];
    }
    j[std::to_string(ell)] = entries;
  }
  return j;
}

namespace {

AdjustedResult adjusted_with_floor(const ManifoldSpec& spec, const std::vector<double>& deltas, double floor,
                                   const ForgeOptions& options, const std::string& name) {
  if (deltas.size() != spec.charts.size())
    throw Error(ErrorCode::InvalidArgument, "one delta per chart is required");
  for (double d : deltas)
    if (!(d > 0.0)) throw Error(ErrorCode::InvalidArgument, "deltas must be positive");
  const int grid = resolve_grid(spec, options);
  const Certificate adapted = validate_adapted(spec, grid);
  for (const Check& c : adapted.checks)
    if (c.name == "inner_balls_cover" && !c.holds)
      throw Error(ErrorCode::CoverViolation, "inner balls do not cover chart '" + c.chart + "'");

  std::vector<double> levels;
  for (double d : deltas) levels.push_back(std::max({1.0 / d, 1.0, floor}));
  AdjustedResult res;
  res.weight = Weight::bump_max(spec, name, levels);
  res.certificate.criterion = "adjusted_weight";
  res.certificate.resolution = grid;
  for (std::size_t k = 0; k < spec.charts.size(); ++k) {
    const ChartSamples inner = region_samples(spec, k, RegionKind::padded, grid);
    const ChartSamples all = region_samples(spec, k, RegionKind::domain, grid);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const Vec& q : inner.points) lo = std::min(lo, res.weight(k, q));
    for (const Vec& q : all.points) hi = std::max(hi, res.weight(k, q));
    if (inner.points.empty()) lo = 0.0;
    res.certificate.require("lower_bound", spec.charts[k].id, lo, ">=", std::max(1.0 / deltas[k], 1.0));
    res.certificate.require("bounded", spec.charts[k].id, hi, "<", 1e12);
  }
  return res;
}

}  // namespace

AdjustedResult construct_adjusted(const ManifoldSpec& spec, const std::vector<double>& deltas,
                                  const ForgeOptions& options, const std::string& name) {
  return adjusted_with_floor(spec, deltas, 1.0, options, name);
}

BoundFamily transition_bounds(const ManifoldSpec& spec, int max_order, int grid) {
  BoundFamily fam;
  fam.kind = BoundFamily::Kind::transition;
  std::vector<std::shared_ptr<CoverTable>> tables;
  for (int ell = 0; ell <= max_order; ++ell) {
    auto t = std::make_shared<CoverTable>();
    t->pairs = true;
    t->label = "B3[" + std::to_string(ell) + "]";
    for (std::size_t k = 0; k < spec.charts.size(); ++k) t->pair_values[{k, k}] = ell == 0 ? 1.0 : 0.0;
    tables.push_back(t);
  }
  const int d = spec.dim;
  std::vector<std::vector<double>> per_transition(spec.transitions.size(),
                                                  std::vector<double>(static_cast<std::size_t>(max_order + 1), 0.0));
  parallel_for(spec.transitions.size(), [&](std::size_t ti) {
    const Transition& tr = spec.transitions[ti];
    const Chart& from = spec.charts[tr.from];
    const Chart& to = spec.charts[tr.to];
    const double scale = from.domain.scale();
    const ChartSamples s = region_samples(spec, tr.from, RegionKind::domain, grid);
    auto& out = per_transition[ti];
    for (const Vec& q : s.points) {
      if (!tr.overlap_holds(q, from.offset)) continue;
      if (!to.domain.contains(tr.apply(q, from.offset))) continue;
      out[0] = std::max(out[0], op_norm(transition_jacobian(spec, tr, q), to.norm()));
      for (int ell = 1; ell <= max_order; ++ell) {
        const double h = 1e-3 * std::pow(scale, 1.0 / std::pow(2.0, ell + 1));
        const auto T = fd_derivative([&](const Vec& p) { return tr.apply(p, from.offset); }, q, ell + 1, h, d);
        out[static_cast<std::size_t>(ell)] = std::max(out[static_cast<std::size_t>(ell)], multilinear_norm(T, to.norm()));
      }
    }
  });
  for (std::size_t ti = 0; ti < spec.transitions.size(); ++ti) {
    const Transition& tr = spec.transitions[ti];
    for (int ell = 0; ell <= max_order; ++ell)
      tables[static_cast<std::size_t>(ell)]->pair_values[{tr.from, tr.to}] = per_transition[ti][static_cast<std::size_t>(ell)];
  }
  for (int ell = 0; ell <= max_order; ++ell) fam.by_order[ell] = tables[static_cast<std::size_t>(ell)];
  return fam;
}

BoundFamilies estimate_bound_families(const ManifoldSpec& spec, const std::vector<ChartGeometry>& geometries,
                                      const std::vector<Region>& regions, const std::vector<double>& delta_exp,
                                      const std::vector<double>& delta_log, const ForgeOptions& options) {
  const std::size_t n = spec.charts.size();
  if (geometries.size() != n || regions.size() != n || delta_exp.size() != n || delta_log.size() != n)
    throw Error(ErrorCode::InvalidArgument, "bound families need per-chart geometry, region and deltas");
  const int grid = resolve_grid(spec, options);
  ConstantsOptions copt;
  copt.grid = grid;
  BoundFamilies out;
  out.b1.kind = BoundFamily::Kind::exp_superposition;
  out.b2.kind = BoundFamily::Kind::log_superposition;
  std::map<std::string, double> memo;
  for (int ell = 1; ell <= options.max_order; ++ell) {
    auto t1 = std::make_shared<CoverTable>();
    auto t2 = std::make_shared<CoverTable>();
    t1->label = "B1[" + std::to_string(ell) + "]";
    t2->label = "B2[" + std::to_string(ell) + "]";
    for (std::size_t k = 0; k < n; ++k) {
      const ConstantsEstimator est(geometries[k], copt);
      const std::string sig = geometry_signature(spec.charts[k]) + regions[k].to_json().dump() + "#" +
                              std::to_string(ell) + "#";
      const std::string k1 = sig + "E" + num_str(delta_exp[k]);
      const std::string k2 = sig + "L" + num_str(delta_log[k]);
      if (!memo.count(k1))
        memo[k1] = est.superposition_seminorm(Superposition::exp_minus, regions[k], delta_exp[k], ell);
      if (!memo.count(k2))
        memo[k2] = est.superposition_seminorm(Superposition::log_plus, regions[k], delta_log[k], ell);
      t1->per_chart.push_back(memo[k1]);
      t2->per_chart.push_back(memo[k2]);
    }
    out.b1.by_order[ell] = t1;
    out.b2.by_order[ell] = t2;
  }
  out.b3 = transition_bounds(spec, options.max_order, grid);
  return out;
}

ExtMultResult ext_mult(const Weight& f, const BoundFamily& B, const ForgeOptions& options) {
  const ManifoldSpec& spec = f.spec();
  const int grid = resolve_grid(spec, options);
  ExtMultResult res;
  res.dominance.criterion = "ext_mult_dominance";
  res.dominance.resolution = grid;
  for (const auto& [ell, table] : B.by_order) {
    const std::string name = f.name() + "*" + B.label() + "[" + std::to_string(ell) + "]";
    Weight g = table->max_value() < options.zero_tol ? f.scaled(0.0, name, "extMult")
                                                     : f.times(table, name, "extMult");
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < spec.charts.size(); ++k) {
      const ChartSamples s = region_samples(spec, k, RegionKind::domain, grid);
      for (const Vec& q : s.points) {
        double coeff = 0.0;
        if (table->pairs) {
          for (const auto& cp : covering(spec, k, q)) {
            auto it = table->pair_values.find({k, cp.chart});
            if (it != table->pair_values.end()) coeff = std::max(coeff, it->second);
          }
        } else {
          coeff = table->per_chart.at(k);
        }
        if (table->max_value() < options.zero_tol) coeff = 0.0;
        worst = std::max(worst, f(k, q) * coeff - g(k, q));
      }
    }
    res.dominance.require("dominance", g.name(), std::isfinite(worst) ? worst : 0.0, "<=", 0.0);
    res.generated.weights.push_back(std::move(g));
  }
  return res;
}

WeightSet saturate(const WeightSet& W0, const BoundFamilies& families, int levels, const ForgeOptions& options) {
  if (levels < 0) throw Error(ErrorCode::InvalidArgument, "levels must be non-negative");
  WeightSet out = W0;
  std::map<std::string, std::vector<double>> seen;
  for (const Weight& w : W0.weights) seen[w.shape_key()].push_back(w.scalar());
  auto duplicate = [&](const Weight& g) {
    auto it = seen.find(g.shape_key());
    if (it == seen.end()) return false;
    for (double s : it->second) {
      if (std::abs(g.scalar()) <= std::abs(s) * (1.0 + options.stable_tol)) return true;
    }
    return false;
  };
  json per_level = json::array();
  int stabilized = -1;
  std::size_t zero_generated = 0;
  std::vector<Weight> frontier = W0.weights;
  for (int level = 1; level <= levels; ++level) {
    std::vector<Weight> next;
    const std::string prov = "saturation-level-" + std::to_string(level);
    for (const Weight& f : frontier)
      for (const BoundFamily* fam : families.all())
        for (const auto& [ell, table] : fam->by_order) {
          if (table->max_value() < options.zero_tol) {
            ++zero_generated;
            continue;
          }
          Weight g = f.times(table, f.name() + "*" + fam->label() + "[" + std::to_string(ell) + "]", prov);
          if (duplicate(g)) continue;
          seen[g.shape_key()].push_back(g.scalar());
          next.push_back(g);
          out.weights.push_back(g);
          if (out.weights.size() > options.cap)
            throw Error(ErrorCode::ExplosionGuard,
                        "saturation exceeded " + std::to_string(options.cap) + " weights at level " + std::to_string(level));
        }
    per_level.push_back({{"level", level}, {"new_weights", next.size()}});
    if (next.empty()) {
      stabilized = level;
      break;
    }
    frontier = std::move(next);
  }

  // Local W0-boundedness: |g| <= K |root| at every sample.
  double worst = 0.0;
  std::size_t unresolved = 0;
  if (!W0.weights.empty()) {
    const ManifoldSpec& spec = W0.weights.front().spec();
    const int grid = resolve_grid(spec, options);
    std::map<std::string, const Weight*> roots;
    for (const Weight& w : W0.weights) roots[w.name()] = &w;
    for (std::size_t k = 0; k < spec.charts.size(); ++k) {
      const ChartSamples s = region_samples(spec, k, RegionKind::domain, grid);
      for (std::size_t i = W0.weights.size(); i < out.weights.size(); ++i) {
        const Weight& g = out.weights[i];
        auto it = roots.find(g.root());
        if (it == roots.end()) {
          if (k == 0) ++unresolved;
          continue;
        }
        for (const Vec& q : s.points) {
          const double gv = g(k, q);
          const double bound = g.root_bound() * (*it->second)(k, q);
          worst = std::max(worst, gv - bound * (1.0 + 1e-12));
        }
      }
    }
  }
  out.metadata["levels_requested"] = levels;
  out.metadata["levels"] = per_level;
  out.metadata["stabilized_at"] = stabilized;
  out.metadata["zero_entries_skipped"] = zero_generated;
  out.metadata["local_bound_excess"] = worst;
  out.metadata["unresolved_roots"] = unresolved;
  out.metadata["truncated"] = stabilized < 0 && levels > 0;
  return out;
}

OmegaPair pair_omega_exp_log(const ManifoldSpec& spec, const std::vector<ConstantsReport>& constants, double sigma,
                             const std::vector<double>& deltas, const ForgeOptions& options) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw Error(ErrorCode::SigmaOutOfRange, "sigma must lie in (0, 1)");
  const std::size_t n = spec.charts.size();
  if (constants.size() != n || deltas.size() != n)
    throw Error(ErrorCode::InvalidArgument, "one constants report and delta per chart is required");
  for (std::size_t k = 0; k < n; ++k) {
    const double cap = constants[k].rad_fib_inv * constants[k].quot_norm;
    if (!(deltas[k] > 0.0 && deltas[k] < cap))
      throw Error(ErrorCode::ConstantsIncompatible, "delta " + num_str(deltas[k]) + " of chart '" + spec.charts[k].id +
                                                        "' is not below RadExpFibInv * QuotNorm = " + num_str(cap));
  }
  const double shrink = (1.0 - sigma) * (1.0 - sigma) / (1.0 + sigma);
  std::vector<double> tilde;
  for (double d : deltas) tilde.push_back(shrink * d);
  const double floor = (1.0 + sigma) / (1.0 - sigma);
  AdjustedResult adj = adjusted_with_floor(spec, tilde, floor, options, "omega_E");

  OmegaPair out;
  out.omega_exp = adj.weight;
  out.omega_log = adj.weight.scaled((1.0 - sigma) / (1.0 + sigma), "omega_L", "omegaL");
  for (double v : adj.weight.base().levels) out.level = std::max(out.level, v);
  Certificate& cert = out.certificate;
  cert.criterion = "omega_exp_log_pair";
  cert.resolution = resolve_grid(spec, options);
  cert.merge(adj.certificate, "omega_E.");
  for (std::size_t k = 0; k < n; ++k) {
    const ChartSamples s = region_samples(spec, k, RegionKind::padded, cert.resolution);
    double lo = std::numeric_limits<double>::infinity(), excess = -std::numeric_limits<double>::infinity();
    const double aa = constants[k].a * constants[k].a_log;
    for (const Vec& q : s.points) {
      const double wl = out.omega_log(k, q);
      lo = std::min(lo, wl);
      excess = std::max(excess, wl - out.omega_exp(k, q) / aa);
    }
    if (s.points.empty()) lo = excess = 0.0;
    const double need = std::max(1.0 / ((1.0 - sigma) * deltas[k]), 1.0);
    cert.require("omega_L_adjusted", spec.charts[k].id, lo * (1.0 + 1e-12), ">=", need);
    cert.require("exp_log_compatibility", spec.charts[k].id, excess, "<=", 1e-9);
  }
  cert.details["level"] = out.level;
  cert.details["omega_L_level"] = out.level * (1.0 - sigma) / (1.0 + sigma);
  return out;
}

}  // namespace atlasdiffeo
