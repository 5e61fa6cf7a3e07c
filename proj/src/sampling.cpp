#include "atlasdiffeo/sampling.hpp"

#include "atlasdiffeo/errors.hpp"

#include <cmath>

namespace atlasdiffeo {

AtlasSelector AtlasSelector::parse(std::string_view text) {
  AtlasSelector s;
  if (text == "A" || text == "B" || text == "C") {
    s.kind = text == "A" ? RegionKind::domain : (text == "B" ? RegionKind::padded : RegionKind::inner);
    return s;
  }
  const auto colon = text.find(':');
  if (colon == std::string_view::npos || colon == 0)
    throw Error(ErrorCode::InvalidArgument, "atlas selector must be A, B, C or group:kind");
  s.group = std::string(text.substr(0, colon));
  const auto kind = text.substr(colon + 1);
  if (kind == "domain")
    s.kind = RegionKind::domain;
  else if (kind == "padded")
    s.kind = RegionKind::padded;
  else if (kind == "inner")
    s.kind = RegionKind::inner;
  else
    throw Error(ErrorCode::InvalidArgument, "unknown region kind '" + std::string(kind) + "'");
  return s;
}

std::string AtlasSelector::label() const {
  if (group == "A") {
    if (kind == RegionKind::domain) return "A";
    if (kind == RegionKind::padded) return "B";
    return "C";
  }
  const char* k = kind == RegionKind::domain ? "domain" : (kind == RegionKind::padded ? "padded" : "inner");
  return group + ":" + k;
}

double region_radius(const Chart& chart, RegionKind kind) {
  switch (kind) {
    case RegionKind::inner:
      return chart.r;
    case RegionKind::padded:
      return chart.r + chart.R;
    case RegionKind::domain:
      break;
  }
  return chart.domain.inradius();
}

bool region_contains(const Chart& chart, RegionKind kind, const Vec& q, double margin) {
  const Domain& U = chart.domain;
  if (kind == RegionKind::domain) {
    if (U.shape == Domain::Shape::ball) return norm(q - U.center, U.norm) <= U.extent(0) - margin;
    for (int i = 0; i < q.size(); ++i)
      if (!(std::abs(q(i) - U.center(i)) <= U.extent(i) - margin)) return false;
    return true;
  }
  return norm(q, U.norm) <= region_radius(chart, kind) - margin;
}

ChartSamples region_samples(const ManifoldSpec& spec, std::size_t chart, RegionKind kind, int n) {
  const Chart& c = spec.charts.at(chart);
  const Lattice L = chart_lattice(c, n);
  const double margin = L.cell() * (1.0 - 1e-9);
  ChartSamples out;
  out.chart = chart;
  for (std::size_t i = 0; i < L.size(); ++i) {
    const Vec q = L.point(i);
    if (region_contains(c, kind, q, margin)) {
      out.points.push_back(q);
      out.lattice_index.push_back(i);
    }
  }
  return out;
}

std::vector<ChartSamples> atlas_samples(const ManifoldSpec& spec, const AtlasSelector& atlas, int n) {
  std::vector<ChartSamples> out;
  for (std::size_t k : spec.group(atlas.group)) out.push_back(region_samples(spec, k, atlas.kind, n));
  return out;
}

}  // namespace atlasdiffeo
