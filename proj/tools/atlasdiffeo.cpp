#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/manifold.hpp"
#include "atlasdiffeo/oracle.hpp"
#include "atlasdiffeo/pipeline.hpp"
#include "atlasdiffeo/qift.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

using namespace atlasdiffeo;
using nlohmann::json;

namespace {

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::SyntaxError:
    case ErrorCode::UnknownIdentifier:
    case ErrorCode::ArityError:
    case ErrorCode::ParseError:
    case ErrorCode::InvariantViolation:
    case ErrorCode::MissingTransition:
    case ErrorCode::InvalidArgument:
    case ErrorCode::Io:
    case ErrorCode::RadiiOrderViolation:
    case ErrorCode::SigmaOutOfRange:
    case ErrorCode::DeltaTooLarge:
    case ErrorCode::OrderUnavailable:
    case ErrorCode::NotSubordinate:
      return true;
    default:
      return false;
  }
}

struct Options {
  PipelineConfig config;
  std::string json_out;
  std::string spec_path;
  std::string chart, field, weight, atlas = "A", region = "inner", lhs, rhs, out, delta_file;
  double delta = 0.05;
  int order = 0;
  int levels = 3;
  std::string kind = "flat";
  int d = 2;
  double r1 = 1.0, r2 = 0.75;
  double metric_scale = 1.0;
  int extent = 1;
  int length = 3, n_charts = 3;
  double lo = 1.0, hi = 2.0;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--grid", o.config.grid, "samples per axis (default: the spec file's grid_resolution)")->check(CLI::PositiveNumber);
  cmd->add_option("--safety", o.config.safety, "safety factor applied to estimated constants");
  cmd->add_option("--sigma", o.config.sigma, "closeness of exp to the identity, in (0, 1)");
  cmd->add_option("--rho", o.config.rho, "inversion gauge parameter, in (0, 1)");
  cmd->add_option("--tol", o.config.tol, "slack of sampled bound checks");
  cmd->add_option("--json-out", o.json_out, "also write the JSON report to this file");
}

void add_spec(CLI::App* cmd, Options& o) { cmd->add_option("spec", o.spec_path, "manifold spec file")->required(); }

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int emit(const std::string& text, bool pass, const std::string& json_out) {
  std::cout << text;
  std::cout.flush();
  if (!json_out.empty()) write_file_atomic(json_out, text);
  return pass ? 0 : 1;
}

int emit(const RunReport& r, const std::string& json_out) {
  std::cerr << r.command << ": " << (r.pass ? "pass" : "FAIL") << " (" << r.wall_seconds << " s)\n";
  return emit(r.dump(), r.pass, json_out);
}

int run_command(const CLI::App& app, Options& o) {
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&](RunReport r) {
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return emit(r, o.json_out);
  };
  auto spec = [&] { return load_manifold(o.spec_path); };
  const PipelineConfig& c = o.config;

  if (app.got_subcommand("validate")) return finish(run_validate(spec(), c));
  if (app.got_subcommand("constants"))
    return finish(run_constants(spec(), o.chart, o.delta, c.sigma, o.region, c));
  if (app.got_subcommand("seminorm")) return finish(run_seminorm(spec(), o.field, o.weight, o.order, o.atlas, c));
  if (app.got_subcommand("saturate")) return finish(run_saturate(spec(), o.levels, c.sigma, o.delta, c));
  if (app.got_subcommand("certify")) return finish(run_certify(spec(), o.field, c));
  if (app.got_subcommand("compose")) return finish(run_compose(spec(), o.lhs, o.rhs, o.out, c));
  if (app.got_subcommand("invert")) return finish(run_invert(spec(), o.field, o.out, c));
  if (app.got_subcommand("full-pipeline")) return finish(run_full_pipeline(spec(), c));
  if (app.got_subcommand("weights")) {
    const json deltas = json::parse(read_file(o.delta_file), nullptr, false);
    if (deltas.is_discarded()) throw Error(ErrorCode::ParseError, "'" + o.delta_file + "' is not valid JSON");
    return finish(run_adjust(spec(), deltas, c));
  }
  if (app.got_subcommand("qift")) {
    QiftOptions qo;
    qo.safety = c.safety;
    if (c.grid > 0) qo.grid = c.grid;
    const Certificate cert = certify_qift(load_qift_problem(o.spec_path), qo);
    json j = {{"schema", kReportSchema}, {"command", "qift"}, {"certificate", cert.to_json()}, {"pass", cert.pass}};
    return emit(j.dump(2) + "\n", cert.pass, o.json_out);
  }
  if (app.got_subcommand("oracle")) {
    OracleManifold m;
    if (o.kind == "flat" || o.kind == "scaled_flat") {
      FlatOptions fo;
      fo.extent = o.extent;
      fo.metric_scale = o.kind == "scaled_flat" ? o.metric_scale : 1.0;
      if (c.grid > 0) fo.grid = c.grid;
      m = flat_oracle(o.d, o.r1, o.r2, fo);
    } else if (o.kind == "cylinder") {
      CylinderOptions co;
      if (c.grid > 0) co.grid = c.grid;
      m = cylinder_oracle(o.length, o.n_charts, co);
    } else if (o.kind == "half_plane") {
      m = half_plane_oracle(o.lo, o.hi, c.grid > 0 ? c.grid : 16);
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown oracle kind '" + o.kind + "'");
    }
    if (o.out.empty()) {
      std::cout << m.text;
    } else {
      write_file_atomic(o.out, m.text);
      std::cerr << "wrote " << o.out << " (" << m.spec->charts.size() << " charts)\n";
    }
    return 0;
  }
  throw Error(ErrorCode::InvalidArgument, "no subcommand given");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical certificates for exp-generated diffeomorphisms on chart atlases"};
  app.require_subcommand(1);
  Options o;

  auto* validate = app.add_subcommand("validate", "check the adapted-atlas conditions");
  add_spec(validate, o);
  add_common(validate, o);

  auto* constants = app.add_subcommand("constants", "estimate exp/log constants on one chart");
  add_spec(constants, o);
  constants->add_option("--chart", o.chart, "chart id")->required();
  constants->add_option("--delta", o.delta, "fiber radius");
  constants->add_option("--region", o.region, "inner or padded ball")->check(CLI::IsMember({"inner", "padded"}));
  add_common(constants, o);

  auto* semi = app.add_subcommand("seminorm", "weighted seminorm of a declared field");
  add_spec(semi, o);
  semi->add_option("--field", o.field)->required();
  semi->add_option("--weight", o.weight)->required();
  semi->add_option("--order", o.order)->required();
  semi->add_option("--atlas", o.atlas, "atlas group, optionally with :domain, :padded or :inner");
  add_common(semi, o);

  auto* sat = app.add_subcommand("saturate", "minimal saturated extension of the declared weights");
  add_spec(sat, o);
  sat->add_option("--levels", o.levels)->check(CLI::NonNegativeNumber);
  sat->add_option("--delta", o.delta, "fiber radius on every chart");
  add_common(sat, o);

  auto* cert = app.add_subcommand("certify", "certify that exp of a field is a diffeomorphism");
  add_spec(cert, o);
  cert->add_option("--field", o.field)->required();
  add_common(cert, o);

  auto* comp = app.add_subcommand("compose", "composite field of two gauge fields");
  add_spec(comp, o);
  comp->add_option("--lhs", o.lhs)->required();
  comp->add_option("--rhs", o.rhs)->required();
  comp->add_option("--out", o.out, "tabulated output file");
  add_common(comp, o);

  auto* inv = app.add_subcommand("invert", "inverse field of a gauge field");
  add_spec(inv, o);
  inv->add_option("--field", o.field)->required();
  inv->add_option("--out", o.out, "tabulated output file");
  add_common(inv, o);

  auto* full = app.add_subcommand("full-pipeline", "validate, estimate, forge weights, certify every field");
  add_spec(full, o);
  add_common(full, o);

  auto* q = app.add_subcommand("qift", "quantitative inverse function theorem on a map file");
  q->add_option("problem", o.spec_path, "map file")->required();
  add_common(q, o);

  auto* weights = app.add_subcommand("weights", "weight construction");
  weights->require_subcommand(1);
  auto* adjust = weights->add_subcommand("adjust", "adjusting weight for per-chart fiber radii");
  add_spec(adjust, o);
  adjust->add_option("--delta-per-chart", o.delta_file, "JSON object chart id -> delta")->required();
  add_common(adjust, o);

  auto* oracle = app.add_subcommand("oracle", "analytic fixtures");
  oracle->require_subcommand(1);
  auto* em = oracle->add_subcommand("emit", "write a fixture spec file");
  em->add_option("--kind", o.kind)->check(CLI::IsMember({"flat", "scaled_flat", "cylinder", "half_plane"}));
  em->add_option("--d", o.d);
  em->add_option("--r1", o.r1);
  em->add_option("--r2", o.r2);
  em->add_option("--scale", o.metric_scale, "metric factor for scaled_flat");
  em->add_option("--extent", o.extent, "lattice extent per axis");
  em->add_option("--length", o.length, "cylinder columns");
  em->add_option("--charts", o.n_charts, "cylinder angular charts");
  em->add_option("--lo", o.lo);
  em->add_option("--hi", o.hi);
  em->add_option("--out", o.out);
  em->add_option("--grid", o.config.grid)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e, std::cerr, std::cerr);
    return 2;
  }

  try {
    return run_command(app, o);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return is_input_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
