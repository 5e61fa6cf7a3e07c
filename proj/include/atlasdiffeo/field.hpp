#pragma once

#include "atlasdiffeo/expr.hpp"
#include "atlasdiffeo/linalg.hpp"
#include "atlasdiffeo/manifold.hpp"

#include "json.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace atlasdiffeo {

using ChartFunction = std::function<Vec(std::size_t chart, const Vec& q)>;

// Chart representatives X_kappa : U_kappa -> R^d of a vector field. The spec must outlive the field.
class LocalizedField {
 public:
  LocalizedField() = default;
  LocalizedField(const ManifoldSpec& spec, std::string name, ChartFunction eval, int order_available = 3,
                 std::string provenance = "user");

  static LocalizedField from_exprs(const ManifoldSpec& spec, std::string name,
                                   std::vector<std::vector<Expr>> components);
  // Field declared in the spec file.
  static LocalizedField from_spec(const ManifoldSpec& spec, const std::string& name);
  static LocalizedField zero(const ManifoldSpec& spec);
  // One expression family evaluated in every chart (with that chart's offsets).
  static LocalizedField global(const ManifoldSpec& spec, std::string name, const std::vector<std::string>& exprs);

  Vec operator()(std::size_t chart, const Vec& q) const { return eval_(chart, q); }
  const ManifoldSpec& spec() const { return *spec_; }
  const std::string& name() const { return name_; }
  const std::string& provenance() const { return provenance_; }
  int order_available() const { return order_; }
  int dim() const { return spec_->dim; }
  bool valid() const { return spec_ != nullptr; }

  LocalizedField scaled(double c) const;
  LocalizedField plus(const LocalizedField& other) const;
  LocalizedField renamed(std::string name) const;
  // Field that agrees with this one where `keep(chart, q)` holds and is zero elsewhere.
  LocalizedField masked(const std::function<bool(std::size_t, const Vec&)>& keep) const;

 private:
  const ManifoldSpec* spec_ = nullptr;
  std::string name_;
  ChartFunction eval_;
  int order_ = 3;
  std::string provenance_;
};

// Field values on a per-chart lattice over each domain bounding box, multilinear interpolation.
struct Tabulation {
  std::string name;
  int dim = 0;
  std::vector<std::string> chart_ids;
  std::vector<Lattice> lattices;
  std::vector<std::vector<double>> values;  // per chart: lattice point major, component minor

  Vec interpolate(std::size_t chart, const Vec& q) const;
};

Tabulation tabulate(const LocalizedField& field, int n);
LocalizedField from_tabulation(const ManifoldSpec& spec, std::shared_ptr<const Tabulation> table);

void write_tabulation(const std::string& path, const Tabulation& table);
Tabulation read_tabulation(const std::string& path);

// Max over sampled overlap points of |X_phi(T q) - DT(q) X_kappa(q)|, T = phi o kappa^-1.
struct CompatibilityReport {
  double residual = 0.0;
  std::string chart_from;
  std::string chart_to;
  Vec witness;
  std::size_t samples = 0;
  nlohmann::json to_json() const;
};

CompatibilityReport compatibility_residual(const LocalizedField& field, int grid);

// Jacobian of the transition map at q (chart `from` coordinates).
Mat transition_jacobian(const ManifoldSpec& spec, const Transition& t, const Vec& q);

}  // namespace atlasdiffeo
