#pragma once

#include "atlasdiffeo/certificate.hpp"
#include "atlasdiffeo/constants.hpp"
#include "atlasdiffeo/expr.hpp"
#include "atlasdiffeo/manifold.hpp"
#include "atlasdiffeo/sampling.hpp"

#include "json.hpp"

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace atlasdiffeo {

// Per-chart (or per chart pair) non-negative coefficients; evaluated at a manifold point as the max
// over the charts (pairs of charts) whose domains contain it.
struct CoverTable {
  std::string label;
  std::vector<double> per_chart;                                // used when `pairs` is false
  std::map<std::pair<std::size_t, std::size_t>, double> pair_values;  // used when `pairs` is true
  bool pairs = false;

  double max_value() const;
  // Entries within a factor 1 + rel_tol of each other; *value receives the largest.
  bool constant(double* value, double rel_tol = 0.0) const;
  std::string key() const;
  double eval(const ManifoldSpec& spec, std::size_t chart, const Vec& q) const;
};

// Unscaled factor of a weight: a chart family of expressions, the constant 1, or a max of bumps.
struct WeightBase {
  enum class Kind { one, expr, bump_max };
  Kind kind = Kind::one;
  std::string label;
  std::vector<Expr> exprs;     // per chart (expr)
  std::vector<double> levels;  // per chart plateau height (bump_max)

  double eval(const ManifoldSpec& spec, std::size_t chart, const Vec& q) const;
  std::string key() const;
};

// Smoothstep plateau bump of a chart: 1 on the closed padded ball, 0 outside the inradius ball.
double chart_bump(const Chart& chart, const Vec& q);

// scalar * |base| * product of cover factors. The spec must outlive the weight.
class Weight {
 public:
  Weight() = default;
  Weight(const ManifoldSpec& spec, std::string name, std::shared_ptr<const WeightBase> base, double scalar = 1.0,
         std::vector<std::shared_ptr<const CoverTable>> factors = {}, std::string provenance = "user");

  static Weight one(const ManifoldSpec& spec);
  static Weight constant(const ManifoldSpec& spec, double c, std::string name = "");
  static Weight from_spec(const ManifoldSpec& spec, const std::string& name);
  static Weight from_exprs(const ManifoldSpec& spec, std::string name, std::vector<Expr> per_chart);
  static Weight global(const ManifoldSpec& spec, std::string name, const std::string& expr);
  static Weight bump_max(const ManifoldSpec& spec, std::string name, std::vector<double> levels,
                         std::string provenance = "adjusted");

  double operator()(std::size_t chart, const Vec& q) const;
  const std::string& name() const { return name_; }
  const std::string& provenance() const { return provenance_; }
  double scalar() const { return scalar_; }
  const WeightBase& base() const { return *base_; }
  const std::vector<std::shared_ptr<const CoverTable>>& factors() const { return factors_; }
  const ManifoldSpec& spec() const { return *spec_; }
  bool valid() const { return spec_ != nullptr; }
  bool is_zero() const { return scalar_ == 0.0; }

  Weight scaled(double c, std::string name = "", std::string provenance = "") const;
  // This weight multiplied by the cover max of B; constant tables fold into the scalar.
  Weight times(std::shared_ptr<const CoverTable> B, std::string name, std::string provenance) const;
  // Structural key without the scalar (base plus sorted factor multiset).
  std::string shape_key() const;
  // Name of the weight this one was generated from (itself for user weights) and K with
  // |this| <= K |root| on covered points.
  const std::string& root() const { return root_.empty() ? name_ : root_; }
  double root_bound() const { return root_bound_; }
  nlohmann::json to_json() const;

 private:
  const ManifoldSpec* spec_ = nullptr;
  std::string name_;
  std::shared_ptr<const WeightBase> base_;
  double scalar_ = 1.0;
  std::vector<double> scalar_chain_;  // applied in order after the factors
  std::vector<std::shared_ptr<const CoverTable>> factors_;
  std::string provenance_;
  std::string root_;
  double root_bound_ = 1.0;
};

struct WeightSet {
  std::vector<Weight> weights;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t size() const { return weights.size(); }
  nlohmann::json to_json() const;
};

// B1: exp superposition (per chart), B2: log superposition (per chart), B3: transition differential (pairs).
struct BoundFamily {
  enum class Kind { exp_superposition, log_superposition, transition };
  Kind kind = Kind::exp_superposition;
  std::map<int, std::shared_ptr<const CoverTable>> by_order;

  std::string label() const;
  nlohmann::json to_json(const ManifoldSpec& spec) const;
};

struct BoundFamilies {
  BoundFamily b1, b2, b3;
  std::vector<const BoundFamily*> all() const { return {&b1, &b2, &b3}; }
};

struct ForgeOptions {
  int grid = 0;          // sampling resolution; spec grid when 0
  int max_order = 2;
  double zero_tol = 1e-6;
  double stable_tol = 1e-6;
  std::size_t cap = 10000;
};

struct AdjustedResult {
  Weight weight;
  Certificate certificate;
};

// Bumps with plateau max(1/delta_k, 1) on each padded ball; checks both defining bounds on grids.
AdjustedResult construct_adjusted(const ManifoldSpec& spec, const std::vector<double>& deltas,
                                  const ForgeOptions& options = {}, const std::string& name = "omega");

// Sup-seminorms of ExpMinus / LogPlus on V_k x Ball(0, delta) and of the transition differentials.
BoundFamilies estimate_bound_families(const ManifoldSpec& spec, const std::vector<ChartGeometry>& geometries,
                                      const std::vector<Region>& regions, const std::vector<double>& delta_exp,
                                      const std::vector<double>& delta_log, const ForgeOptions& options = {});

// Transition-differential bounds alone (B3), for every ordered overlapping pair including self pairs.
BoundFamily transition_bounds(const ManifoldSpec& spec, int max_order, int grid);

struct ExtMultResult {
  WeightSet generated;
  Certificate dominance;
};

// g_l = max over covering charts of B_{k,l} |f|, one weight per order l.
ExtMultResult ext_mult(const Weight& f, const BoundFamily& B, const ForgeOptions& options = {});

// W0 together with levels of generated weights; deduplicated and capped.
WeightSet saturate(const WeightSet& W0, const BoundFamilies& families, int levels, const ForgeOptions& options = {});

struct OmegaPair {
  Weight omega_exp;
  Weight omega_log;
  double level = 0.0;  // plateau height of the underlying adjusted weight
  Certificate certificate;
};

// omega adjusted to (1 - sigma)^2 / (1 + sigma) delta with |omega| >= (1 + sigma) / (1 - sigma);
// omega^L = (1 - sigma) / (1 + sigma) omega. Per chart a and aL come from `constants`.
OmegaPair pair_omega_exp_log(const ManifoldSpec& spec, const std::vector<ConstantsReport>& constants, double sigma,
                             const std::vector<double>& deltas, const ForgeOptions& options = {});

}  // namespace atlasdiffeo
