#include "atlasdiffeo/seminorm.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace atlasdiffeo {

using nlohmann::json;

namespace {

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

int resolve_grid(const ManifoldSpec& spec, const SeminormOptions& o) { return o.grid > 0 ? o.grid : spec.grid_resolution; }

int region_rank(RegionKind k) {
  switch (k) {
    case RegionKind::inner:
      return 0;
    case RegionKind::padded:
      return 1;
    case RegionKind::domain:
      break;
  }
  return 2;
}

void check_order(const LocalizedField& X, int ell) {
  if (ell < 0 || ell > kMaxSeminormOrder)
    throw Error(ErrorCode::OrderUnavailable, "derivative order " + std::to_string(ell) + " is not supported (max " +
                                                 std::to_string(kMaxSeminormOrder) + ")");
  if (ell > X.order_available())
    throw Error(ErrorCode::OrderUnavailable, "field '" + X.name() + "' provides derivatives up to order " +
                                                 std::to_string(X.order_available()));
}

}  // namespace

json SeminormValue::to_json() const {
  json j;
  j["value"] = value;
  j["exceeded"] = exceeded;
  j["order"] = order;
  j["weight"] = weight;
  j["atlas"] = atlas;
  j["resolution"] = resolution;
  j["samples"] = samples;
  j["sampling"] = "closed region minus one lattice cell";
  if (!argmax_chart.empty()) j["argmax"] = {{"chart", argmax_chart}, {"point", vec_json(argmax)}};
  return j;
}

double derivative_step(const Chart& chart, int ell) {
  return 1e-3 * std::pow(chart.domain.scale(), 1.0 / std::pow(2.0, ell));
}

double derivative_norm(const LocalizedField& X, std::size_t chart, const Vec& q, int ell) {
  const NormKind kind = X.spec().charts[chart].norm();
  if (ell == 0) return norm(X(chart, q), kind);
  const double h = derivative_step(X.spec().charts[chart], ell);
  const auto T = fd_derivative([&](const Vec& p) { return X(chart, p); }, q, ell, h, X.dim());
  return multilinear_norm(T, kind);
}

SeminormValue atlas_sup(const ManifoldSpec& spec, const AtlasSelector& atlas, const PointwiseQuantity& quantity,
                        const SeminormOptions& options) {
  SeminormValue out;
  out.resolution = resolve_grid(spec, options);
  out.atlas = atlas.label();
  auto samples = atlas_samples(spec, atlas, out.resolution);
  if (options.only_chart) {
    std::vector<ChartSamples> keep;
    for (auto& s : samples)
      if (s.chart == *options.only_chart) keep.push_back(std::move(s));
    samples = std::move(keep);
  }
  std::vector<std::pair<std::size_t, std::size_t>> flat;
  for (std::size_t s = 0; s < samples.size(); ++s)
    for (std::size_t i = 0; i < samples[s].points.size(); ++i) flat.emplace_back(s, i);
  std::vector<double> values(flat.size(), 0.0);
  parallel_for(flat.size(), [&](std::size_t n) {
    const auto& cs = samples[flat[n].first];
    values[n] = quantity(cs.chart, cs.points[flat[n].second]);
  });
  out.samples = flat.size();
  double best = -1.0;
  for (std::size_t n = 0; n < flat.size(); ++n) {
    double v = values[n];
    if (!std::isfinite(v)) v = std::numeric_limits<double>::infinity();
    if (v > best) {
      best = v;
      const auto& cs = samples[flat[n].first];
      out.argmax_chart = spec.charts[cs.chart].id;
      out.argmax = cs.points[flat[n].second];
    }
  }
  out.value = std::max(best, 0.0);
  if (out.value >= options.cap) {
    out.value = options.cap;
    out.exceeded = true;
  }
  return out;
}

SeminormValue seminorm(const LocalizedField& X, const Weight& f, int ell, const AtlasSelector& atlas,
                       const SeminormOptions& options) {
  check_order(X, ell);
  SeminormValue v = atlas_sup(
      X.spec(), atlas,
      [&](std::size_t chart, const Vec& q) {
        const double w = f(chart, q);
        if (w == 0.0) return 0.0;
        return w * derivative_norm(X, chart, q, ell);
      },
      options);
  v.order = ell;
  v.weight = f.name();
  return v;
}

Certificate membership(const LocalizedField& X, const WeightSet& W, int k, const AtlasSelector& atlas,
                       const SeminormOptions& options) {
  Certificate cert;
  cert.criterion = "weighted_membership";
  cert.resolution = resolve_grid(X.spec(), options);
  const int top = std::min({k, X.order_available(), kMaxSeminormOrder});
  json largest;
  double largest_value = -1.0;
  for (const Weight& f : W.weights)
    for (int ell = 0; ell <= top; ++ell) {
      const SeminormValue v = seminorm(X, f, ell, atlas, options);
      cert.require("finite_seminorm[" + f.name() + "," + std::to_string(ell) + "]", v.argmax_chart, v.value, "<",
                   options.cap);
      if (v.value > largest_value) {
        largest_value = v.value;
        largest = v.to_json();
      }
    }
  cert.details["field"] = X.name();
  cert.details["orders_checked"] = top;
  cert.details["orders_requested"] = k;
  cert.details["largest"] = largest;
  cert.details["cap"] = options.cap;
  return cert;
}

RestrictResult subordinate_restrict(const LocalizedField& X, const AtlasSelector& full, const AtlasSelector& sub,
                                    const std::vector<std::pair<Weight, int>>& requests,
                                    const SeminormOptions& options) {
  if (full.group != sub.group || region_rank(sub.kind) > region_rank(full.kind))
    throw Error(ErrorCode::NotSubordinate,
                "atlas " + sub.label() + " is not made of restrictions of the charts of " + full.label());
  const ManifoldSpec& spec = X.spec();
  const RegionKind kind = sub.kind;
  RestrictResult res;
  res.field = X.masked([&spec, kind](std::size_t chart, const Vec& q) {
                  return region_contains(spec.charts[chart], kind, q, 0.0);
                })
                  .renamed(X.name() + "|" + sub.label());
  res.certificate.criterion = "subordinate_restriction";
  res.certificate.resolution = resolve_grid(spec, options);
  for (const auto& [f, ell] : requests) {
    const SeminormValue s = seminorm(res.field, f, ell, sub, options);
    const SeminormValue a = seminorm(X, f, ell, full, options);
    res.certificate.require("non_increasing[" + f.name() + "," + std::to_string(ell) + "]", s.argmax_chart, s.value,
                            "<=", a.value + 1e-12);
  }
  return res;
}

json IntersectResult::to_json() const {
  return json{{"value_a", over_a.to_json()},
              {"value_intersection", over_intersection.to_json()},
              {"same_samples", same_samples},
              {"difference", difference}};
}

IntersectResult intersect_atlas_seminorm(const LocalizedField& X, const AtlasSelector& a, const AtlasSelector& b,
                                         const Weight& f, int ell, const SeminormOptions& options) {
  check_order(X, ell);
  const ManifoldSpec& spec = X.spec();
  const auto b_members = spec.group(b.group);
  const std::vector<bool> in_b = [&] {
    std::vector<bool> m(spec.charts.size(), false);
    for (std::size_t c : b_members) m[c] = true;
    return m;
  }();
  auto covered_by_b = [&](std::size_t chart, const Vec& q) {
    for (const auto& cp : spec.charts_containing(chart, q))
      if (in_b[cp.chart] && region_contains(spec.charts[cp.chart], b.kind, cp.coords, 0.0)) return true;
    return false;
  };
  auto pointwise = [&](std::size_t chart, const Vec& q) {
    const double w = f(chart, q);
    return w == 0.0 ? 0.0 : w * derivative_norm(X, chart, q, ell);
  };
  IntersectResult res;
  res.over_a = atlas_sup(spec, a, pointwise, options);

  const int grid = resolve_grid(spec, options);
  std::size_t total = 0, kept = 0;
  for (const auto& cs : atlas_samples(spec, a, grid))
    for (const Vec& q : cs.points) {
      ++total;
      if (covered_by_b(cs.chart, q)) ++kept;
    }
  if (kept == 0)
    throw Error(ErrorCode::EmptyIntersection, "no sampled point of " + a.label() + " lies in a region of " + b.label());
  res.same_samples = kept == total;
  res.over_intersection = atlas_sup(
      spec, a,
      [&](std::size_t chart, const Vec& q) { return covered_by_b(chart, q) ? pointwise(chart, q) : -1.0; }, options);
  res.over_intersection.samples = kept;
  res.over_a.order = res.over_intersection.order = ell;
  res.over_a.weight = res.over_intersection.weight = f.name();
  res.over_intersection.atlas = a.label() + "^" + b.label();
  res.difference = std::abs(res.over_a.value - res.over_intersection.value);
  return res;
}

TransferResult chart_change_transfer(const LocalizedField& X, const AtlasSelector& a, const AtlasSelector& b,
                                     const WeightSet& W, int k, const SeminormOptions& options) {
  const ManifoldSpec& spec = X.spec();
  const int grid = resolve_grid(spec, options);
  const int top = std::min({k, X.order_available(), kMaxSeminormOrder});
  const BoundFamily multipliers = transition_bounds(spec, std::max(top, 0), grid);
  for (const auto& [ell, table] : multipliers.by_order)
    for (const auto& [pair, v] : table->pair_values)
      if (!(v < options.cap))
        throw Error(ErrorCode::MultiplierConditionUnverified,
                    "transition " + spec.charts[pair.first].id + "->" + spec.charts[pair.second].id +
                        " has an unbounded differential of order " + std::to_string(ell));

  const auto b_members = spec.group(b.group);
  const RegionKind b_kind = b.kind;
  ChartFunction pulled = [&spec, X, b_members, b_kind](std::size_t kappa, const Vec& q) -> Vec {
    for (const auto& cp : spec.charts_containing(kappa, q)) {
      if (std::find(b_members.begin(), b_members.end(), cp.chart) == b_members.end()) continue;
      if (!region_contains(spec.charts[cp.chart], b_kind, cp.coords, 0.0)) continue;
      if (cp.chart == kappa) return X(kappa, q);
      const Transition* back = spec.transition(cp.chart, kappa);
      if (!back) continue;
      return transition_jacobian(spec, *back, cp.coords) * X(cp.chart, cp.coords);
    }
    throw Error(ErrorCode::NoContainingChart, "point of chart '" + spec.charts[kappa].id + "' lies in no region of " +
                                                  std::string(b_members.empty() ? "B" : spec.charts[b_members[0]].atlas));
  };
  TransferResult res;
  res.transferred = LocalizedField(spec, X.name() + "@" + a.label(), pulled, X.order_available(), "chart-change");
  Certificate& cert = res.certificate;
  cert.criterion = "chart_change_transfer";
  cert.resolution = grid;
  double max_gap = 0.0;
  for (const Weight& f : W.weights)
    for (int ell = 0; ell <= top; ++ell) {
      const SeminormValue over_a = seminorm(res.transferred, f, ell, a, options);
      const SeminormValue over_b = seminorm(X, f, ell, b, options);
      const std::string tag = "[" + f.name() + "," + std::to_string(ell) + "]";
      cert.require("finite_over_A" + tag, over_a.argmax_chart, over_a.value, "<", options.cap);
      cert.require("finite_over_B" + tag, over_b.argmax_chart, over_b.value, "<", options.cap);
      cert.details["seminorms"].push_back(
          {{"weight", f.name()}, {"order", ell}, {"over_A", over_a.value}, {"over_B", over_b.value}});
      max_gap = std::max(max_gap, std::abs(over_a.value - over_b.value));
    }
  cert.details["max_seminorm_gap"] = max_gap;
  cert.details["multipliers"] = multipliers.to_json(spec);
  return res;
}

}  // namespace atlasdiffeo
