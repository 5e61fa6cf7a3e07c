#pragma once

#include "atlasdiffeo/certificate.hpp"
#include "atlasdiffeo/expr.hpp"
#include "atlasdiffeo/linalg.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace atlasdiffeo {

struct Domain {
  enum class Shape { ball, box };
  Shape shape = Shape::ball;
  Vec center;
  Vec extent;  // ball: extent(0) is the radius; box: half-widths per axis
  NormKind norm = NormKind::sup;

  bool contains(const Vec& q) const;  // open set
  Vec half_widths() const;            // of the bounding box
  double inradius() const;            // largest chart-norm ball around `center` inside the domain
  double scale() const;               // largest half-width
};

struct Chart {
  std::string id;
  int dim = 0;
  Domain domain;
  std::vector<Expr> metric;  // row-major d x d
  double r = 0.0;
  double R = 0.0;
  double epsilon = 0.0;
  Vec offset;                // values of o1..od in this chart's expressions
  std::optional<Expr> core;  // part of M represented by this chart: core > 0
  std::string atlas = "A";

  NormKind norm() const { return domain.norm; }
  Mat metric_at(const Vec& q) const;
  bool metric_constant() const;
  // Whether q represents a point of M that the inner balls must cover.
  bool in_core(const Vec& q) const;
};

struct Transition {
  std::size_t from = 0;
  std::size_t to = 0;
  std::vector<Expr> map;
  Expr overlap;

  Vec apply(const Vec& q, const Vec& from_offset) const;
  bool overlap_holds(const Vec& q, const Vec& from_offset) const;
};

struct ChartPoint {
  std::size_t chart = 0;
  Vec coords;
};

// Regular lattice with n points per axis on a closed box.
struct Lattice {
  Vec lo;
  Vec step;
  int n = 0;
  int dim = 0;

  std::size_t size() const;
  Vec point(std::size_t flat) const;
  double cell() const { return step.size() ? step.maxCoeff() : 0.0; }
};

Lattice box_lattice(const Vec& center, const Vec& half_widths, int n);
Lattice chart_lattice(const Chart& chart, int n);

struct ManifoldSpec {
  std::string name;
  int dim = 0;
  int grid_resolution = 16;
  std::vector<Chart> charts;
  std::vector<Transition> transitions;
  std::map<std::string, std::vector<Expr>> weights;               // per chart
  std::map<std::string, std::vector<std::vector<Expr>>> fields;  // per chart, d components
  std::string source_hash;

  std::size_t chart_index(std::string_view id) const;
  const Transition* transition(std::size_t from, std::size_t to) const;
  const std::vector<std::size_t>& outgoing(std::size_t chart) const;
  std::vector<std::size_t> group(std::string_view atlas) const;

  // All charts whose domain contains the point given by q in `chart`, with local coordinates,
  // ordered by chart index. Includes `chart` itself when q lies in its domain.
  std::vector<ChartPoint> charts_containing(std::size_t chart, const Vec& q) const;
  std::optional<Vec> map_point(std::size_t from, const Vec& q, std::size_t to) const;

  void build_index();

 private:
  std::vector<std::vector<std::size_t>> outgoing_;
};

ManifoldSpec load_manifold(const std::string& path);
ManifoldSpec load_manifold_text(std::string_view text);

struct NeighborReport {
  std::map<std::string, int> neighbor_count;
  bool unique_point = false;
  std::string witness_chart;
  Vec witness;
  int resolution = 0;
  nlohmann::json to_json() const;
};

NeighborReport locally_finite_report(const ManifoldSpec& spec, std::string_view atlas = "A", int grid = 0);

// Adapted-atlas conditions per chart: closed padded ball inside the domain, epsilon range,
// r < (1/(2 eps) - 1) R, and sampled cover of M by the inner balls.
Certificate validate_adapted(const ManifoldSpec& spec, int grid = 0, std::string_view atlas = "A");

}  // namespace atlasdiffeo
