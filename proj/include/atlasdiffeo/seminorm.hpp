#pragma once

#include "atlasdiffeo/certificate.hpp"
#include "atlasdiffeo/field.hpp"
#include "atlasdiffeo/linalg.hpp"
#include "atlasdiffeo/manifold.hpp"
#include "atlasdiffeo/sampling.hpp"
#include "atlasdiffeo/weights.hpp"

#include "json.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace atlasdiffeo {

inline constexpr int kMaxSeminormOrder = 3;

struct SeminormOptions {
  int grid = 0;        // samples per axis; spec grid when 0
  double cap = 1e12;   // stands in for +infinity
  std::optional<std::size_t> only_chart;
};

struct SeminormValue {
  double value = 0.0;
  bool exceeded = false;
  std::string argmax_chart;
  Vec argmax;
  int order = 0;
  int resolution = 0;
  std::size_t samples = 0;
  std::string atlas;
  std::string weight;

  nlohmann::json to_json() const;
};

// FD step for D^ell on a chart.
double derivative_step(const Chart& chart, int ell);

// D^ell X_kappa(q) in the chart norm (ell = 0: |X_kappa(q)|).
double derivative_norm(const LocalizedField& X, std::size_t chart, const Vec& q, int ell);

using PointwiseQuantity = std::function<double(std::size_t chart, const Vec& q)>;

// Sup of a pointwise quantity over the sampled regions of an atlas. Ties keep the first sample
// in chart order, then lattice order.
SeminormValue atlas_sup(const ManifoldSpec& spec, const AtlasSelector& atlas, const PointwiseQuantity& quantity,
                        const SeminormOptions& options = {});

// sup over charts and samples of |f_kappa| |D^ell X_kappa|.
SeminormValue seminorm(const LocalizedField& X, const Weight& f, int ell, const AtlasSelector& atlas = {},
                       const SeminormOptions& options = {});

// Passes iff every seminorm of order <= k for every weight of W stays below the cap.
Certificate membership(const LocalizedField& X, const WeightSet& W, int k, const AtlasSelector& atlas = {},
                       const SeminormOptions& options = {});

struct RestrictResult {
  LocalizedField field;
  Certificate certificate;  // seminorm(sub) <= seminorm(full) for every requested pair
};

// Restriction of X to the regions of a sub-atlas (zero outside them). The sub-atlas must use the
// same chart group with a region no larger than the full one.
RestrictResult subordinate_restrict(const LocalizedField& X, const AtlasSelector& full, const AtlasSelector& sub,
                                    const std::vector<std::pair<Weight, int>>& requests,
                                    const SeminormOptions& options = {});

struct IntersectResult {
  SeminormValue over_a;
  SeminormValue over_intersection;
  bool same_samples = false;  // every sample of A lies in some region of B
  double difference = 0.0;
  nlohmann::json to_json() const;
};

// The seminorm over A against the one over the charts kappa restricted to kappa-domain cap phi-region.
IntersectResult intersect_atlas_seminorm(const LocalizedField& X, const AtlasSelector& a, const AtlasSelector& b,
                                         const Weight& f, int ell, const SeminormOptions& options = {});

struct TransferResult {
  LocalizedField transferred;  // localizations on A obtained from those on B
  Certificate certificate;
};

// Rebuilds the A-localizations of X from its B-localizations, X_kappa(q) = DT(p) X_phi(p) with
// T = kappa o phi^-1 and p = phi(kappa^-1(q)), phi the lowest-index B chart whose region holds the
// point. Certifies that all seminorms up to order k for every weight of W are finite on both sides.
TransferResult chart_change_transfer(const LocalizedField& X, const AtlasSelector& a, const AtlasSelector& b,
                                     const WeightSet& W, int k, const SeminormOptions& options = {});

}  // namespace atlasdiffeo
