#pragma once

#include "atlasdiffeo/constants.hpp"
#include "atlasdiffeo/diffeo.hpp"
#include "atlasdiffeo/manifold.hpp"
#include "atlasdiffeo/weights.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace atlasdiffeo {

inline constexpr const char* kReportSchema = "atlasdiffeo.run/1";

struct PipelineConfig {
  int grid = 0;  // spec grid when 0
  double safety = 1.10;
  double sigma = 0.5;
  double rho = 0.5;
  double tol = 1e-6;
  int levels = 3;
  int max_order = 2;
  int fiber_grid = 3;
  int diffeo_pairs = 200;
  std::string group = "A";

  int resolved_grid(const ManifoldSpec& spec) const { return grid > 0 ? grid : spec.grid_resolution; }
  ConstantsOptions constants_options(const ManifoldSpec& spec) const;
  nlohmann::json to_json() const;
};

struct RunReport {
  std::string command;
  std::string spec_hash;
  nlohmann::json configuration = nlohmann::json::object();
  nlohmann::json results = nlohmann::json::object();
  bool pass = true;
  double wall_seconds = 0.0;  // reported on stderr, not in the JSON

  // Canonical JSON: sorted keys, shortest round-trip floats, two-space indent.
  std::string dump() const;
  nlohmann::json to_json() const;
};

// Geometry, constants and the (omega_E, omega_L) pair of an atlas group, as used by every group operation.
struct GroupSetup {
  std::vector<ChartGeometry> geometries;
  std::vector<ConstantsReport> constants;       // inner ball, delta per chart
  std::vector<DiffeoConstants> diffeo_constants;  // inner ball, nu per chart
  std::vector<double> deltas;
  OmegaPair omega;
  double rescale = 1.0;  // factor applied to the pair so that omega_E meets the threshold targets
  std::vector<double> targets;
  NeighborhoodGauge gauge;
  Certificate certificate;

  nlohmann::json to_json(const ManifoldSpec& spec) const;
};

GroupSetup prepare_group(const ManifoldSpec& spec, const PipelineConfig& config);

// Factor s in (0, 1] placing s X at half of each gauge threshold (norms are homogeneous in X).
double gauge_scale(const NeighborhoodGauge& gauge, const LocalizedField& X);

RunReport run_validate(const ManifoldSpec& spec, const PipelineConfig& config);
RunReport run_constants(const ManifoldSpec& spec, const std::string& chart, double delta, double sigma,
                        const std::string& region, const PipelineConfig& config);
RunReport run_seminorm(const ManifoldSpec& spec, const std::string& field, const std::string& weight, int order,
                       const std::string& atlas, const PipelineConfig& config);
RunReport run_saturate(const ManifoldSpec& spec, int levels, double sigma, double delta, const PipelineConfig& config);
RunReport run_certify(const ManifoldSpec& spec, const std::string& field, const PipelineConfig& config);
RunReport run_compose(const ManifoldSpec& spec, const std::string& lhs, const std::string& rhs,
                      const std::string& out, const PipelineConfig& config);
RunReport run_invert(const ManifoldSpec& spec, const std::string& field, const std::string& out,
                     const PipelineConfig& config);
RunReport run_adjust(const ManifoldSpec& spec, const nlohmann::json& deltas, const PipelineConfig& config);
RunReport run_full_pipeline(const ManifoldSpec& spec, const PipelineConfig& config);

// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace atlasdiffeo
