#pragma once

#include "atlasdiffeo/linalg.hpp"
#include "atlasdiffeo/manifold.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace atlasdiffeo {

// Which part of each chart an atlas uses: the whole domain, the padded ball r + R, or the inner ball r.
enum class RegionKind { domain, padded, inner };

struct AtlasSelector {
  std::string group = "A";
  RegionKind kind = RegionKind::domain;

  // "A" (domains), "B" (padded balls), "C" (inner balls), or "<group>:<domain|padded|inner>".
  static AtlasSelector parse(std::string_view text);
  std::string label() const;
};

// Radius of the selected ball (domain: inradius for balls); for box domains the half widths apply.
double region_radius(const Chart& chart, RegionKind kind);

// Membership in the closed selected region shrunk by `margin`.
bool region_contains(const Chart& chart, RegionKind kind, const Vec& q, double margin);

struct ChartSamples {
  std::size_t chart = 0;
  std::vector<Vec> points;
  std::vector<std::size_t> lattice_index;
};

// Points of the chart lattice (n per axis over the domain bounding box) that lie in the selected
// region minus one lattice cell. Subsets of the same lattice, so smaller regions give nested samples.
ChartSamples region_samples(const ManifoldSpec& spec, std::size_t chart, RegionKind kind, int n);
std::vector<ChartSamples> atlas_samples(const ManifoldSpec& spec, const AtlasSelector& atlas, int n);

}  // namespace atlasdiffeo
