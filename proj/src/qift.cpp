#include "atlasdiffeo/qift.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/manifold.hpp"
#include "atlasdiffeo/parallel.hpp"
#include "atlasdiffeo/spec_text.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace atlasdiffeo {

using nlohmann::json;

NewtonResult newton_solve(const VecMap& f, const JacobianMap& jacobian, const Vec& target, const Vec& seed,
                          const std::function<bool(const Vec&)>& admissible, NormKind kind, double tolerance,
                          int max_iterations) {
  NewtonResult res;
  res.x = seed;
  if (!admissible(seed)) return res;
  Vec r = f(seed) - target;
  res.residual = norm(r, kind);
  for (; res.iterations < max_iterations && !(res.residual <= tolerance); ++res.iterations) {
    const Vec step = jacobian(res.x).fullPivLu().solve(-r);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, lambda *= 0.5) {
      const Vec cand = res.x + lambda * step;
      if (!admissible(cand)) continue;
      const Vec rc = f(cand) - target;
      const double rn = norm(rc, kind);
      if (rn < res.residual) {
        res.x = cand;
        r = rc;
        res.residual = rn;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  res.converged = res.residual <= tolerance;
  return res;
}

Vec QiftProblem::eval(const Vec& y) const {
  Vec out(dim);
  for (int i = 0; i < dim; ++i) out(i) = map[static_cast<std::size_t>(i)].eval(y);
  return out;
}

namespace {

Vec read_vec(const json& j, const char* key, int dim) {
  if (!j.contains(key) || !j.at(key).is_array() || static_cast<int>(j.at(key).size()) != dim)
    throw Error(ErrorCode::ParseError, std::string("expected ") + std::to_string(dim) + " numbers for '" + key + "'");
  Vec v(dim);
  for (int i = 0; i < dim; ++i) {
    const json& e = j.at(key)[static_cast<std::size_t>(i)];
    if (!e.is_number()) throw Error(ErrorCode::ParseError, std::string("non-numeric entry in '") + key + "'");
    v(i) = e.get<double>();
  }
  return v;
}

bool in_open_box(const Vec& y, const Vec& c, const Vec& w) {
  for (int i = 0; i < y.size(); ++i)
    if (!(std::abs(y(i) - c(i)) < w(i))) return false;
  return true;
}

// Uniform sample in the closed norm ball (rejection from the cube for the euclidean norm).
Vec sample_ball(std::mt19937_64& rng, const Vec& center, double radius, NormKind kind) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int d = static_cast<int>(center.size());
  for (;;) {
    Vec p(d);
    for (int i = 0; i < d; ++i) p(i) = u(rng);
    if (norm(p, kind) <= 1.0) return center + radius * p;
  }
}

}  // namespace

QiftProblem load_qift_problem_text(std::string_view text) {
  const json j = parse_spec_text(text);
  QiftProblem p;
  if (!j.contains("dim") || !j.at("dim").is_number_integer())
    throw Error(ErrorCode::ParseError, "missing integer 'dim'");
  p.dim = j.at("dim").get<int>();
  if (p.dim < 1 || p.dim > kMaxDim) throw Error(ErrorCode::ParseError, "dimension out of range");
  if (!j.contains("map") || !j.at("map").is_array() || static_cast<int>(j.at("map").size()) != p.dim)
    throw Error(ErrorCode::ParseError, "'map' needs one expression per dimension");
  for (const json& e : j.at("map")) {
    if (e.is_string())
      p.map.push_back(Expr::parse(e.get<std::string>(), p.dim));
    else if (e.is_number())
      p.map.push_back(Expr::constant(e.get<double>()));
    else
      throw Error(ErrorCode::ParseError, "map entries must be expressions");
  }
  if (!j.contains("domain")) throw Error(ErrorCode::ParseError, "missing 'domain' table");
  const json& dom = j.at("domain");
  p.center = read_vec(dom, "center", p.dim);
  p.half_widths = read_vec(dom, "half_widths", p.dim);
  if ((p.half_widths.array() <= 0.0).any()) throw Error(ErrorCode::ParseError, "half widths must be positive");
  p.point = j.contains("point") ? read_vec(j, "point", p.dim) : p.center;
  p.anchor = j.contains("anchor") ? read_vec(j, "anchor", p.dim) : p.point;
  if (j.contains("norm")) p.norm = parse_norm_kind(j.at("norm").get<std::string>());
  return p;
}

QiftProblem load_qift_problem(const std::string& path) { return load_qift_problem_text(read_text_file(path)); }

Certificate certify_qift(const VecMap& g, const Vec& center, const Vec& half_widths, const Vec& x,
                         const Vec& anchor, NormKind nk, const QiftOptions& options) {
  const double scale = half_widths.maxCoeff();
  const double h = 1e-6 * scale;
  auto Dg = [&](const Vec& y) { return fd_jacobian(g, y, h); };
  auto inside = [&](const Vec& y) { return in_open_box(y, center, half_widths); };
  if (!inside(x) || !inside(anchor)) throw Error(ErrorCode::InvalidArgument, "point and anchor must lie in U");

  const Mat A = Dg(x);
  Eigen::FullPivLU<Mat> lu(A);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularDifferential, "Dg(x) is not invertible");
  const Mat Ainv = lu.inverse();
  const double L0 = op_norm(Ainv, nk);
  const double cond = L0 * op_norm(A, nk);
  if (!(cond < 1e8))
    throw Error(ErrorCode::SingularDifferential, "condition number " + std::to_string(cond) + " of Dg(x)");

  Certificate cert;
  cert.criterion = "quantitative_inverse_function";
  cert.resolution = options.grid;
  cert.safety_factor = options.safety;

  const Lattice lat = box_lattice(center, half_widths, options.grid);
  std::vector<double> dev(lat.size(), 0.0);
  parallel_for(lat.size(), [&](std::size_t i) { dev[i] = op_norm(Dg(lat.point(i)) - A, nk); });
  double delta_hat = 0.0;
  for (double v : dev) delta_hat = std::max(delta_hat, v);
  const double delta = delta_hat * options.safety;
  cert.details["delta_hat"] = delta_hat;
  cert.details["delta"] = delta;
  cert.details["inverse_norm"] = L0;
  cert.details["condition"] = cond;
  if (!cert.require("delta_below_inverse_norm", "", delta * L0, "<", 1.0)) return cert;

  double r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < anchor.size(); ++i) r = std::min(r, half_widths(i) - std::abs(anchor(i) - center(i)));
  const double r_prime = r * (1.0 - delta * L0) / L0;
  const double lip = L0 / (1.0 - delta * L0);
  cert.details["r"] = r;
  cert.details["r_prime"] = r_prime;
  cert.details["lipschitz"] = lip;

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto random_point = [&]() {
    Vec p(center.size());
    for (int i = 0; i < p.size(); ++i) p(i) = center(i) + (1.0 - 1e-9) * half_widths(i) * unit(rng);
    return p;
  };

  int inj_fail = 0;
  double worst_inj = std::numeric_limits<double>::infinity();
  for (int k = 0; k < options.injectivity_pairs; ++k) {
    const Vec a = random_point(), b = random_point();
    const double dist = norm(a - b, nk);
    if (dist == 0.0) continue;
    const double img = norm(g(a) - g(b), nk);
    worst_inj = std::min(worst_inj, img * lip / dist);
    if (img + 1e-12 < dist / lip) ++inj_fail;
  }
  cert.details["min_expansion_ratio"] = worst_inj;
  cert.require("injective_pairs", "", inj_fail, "==", 0);

  const Vec gx = g(anchor);
  auto preimage = [&](const Vec& z) {
    const Vec seed = anchor + Ainv * (z - gx);
    NewtonResult res = newton_solve(g, Dg, z, inside(seed) ? seed : anchor, inside, nk, 1e-11 * std::max(1.0, scale));
    if (res.converged && !(norm(res.x - anchor, nk) < r * (1.0 + 1e-9))) res.converged = false;
    return res;
  };

  std::vector<Vec> targets;
  {
    const Vec hw = Vec::Constant(gx.size(), r_prime * (1.0 - 1e-9));
    const Lattice tl = box_lattice(gx, hw, options.target_grid);
    for (std::size_t i = 0; i < tl.size(); ++i) {
      const Vec z = tl.point(i);
      if (norm(z - gx, nk) < r_prime) targets.push_back(z);
    }
  }
  std::vector<char> solved(targets.size(), 0);
  parallel_for(targets.size(), [&](std::size_t i) { solved[i] = preimage(targets[i]).converged ? 1 : 0; });
  const auto surj_fail = std::count(solved.begin(), solved.end(), 0);
  cert.details["targets"] = targets.size();
  cert.require("surjective_targets", "", static_cast<double>(surj_fail), "==", 0);

  std::vector<std::pair<Vec, Vec>> pairs;
  for (int k = 0; k < options.lipschitz_pairs; ++k) {
    Vec z1 = sample_ball(rng, gx, r_prime * (1.0 - 1e-9), nk);
    Vec z2 = sample_ball(rng, gx, r_prime * (1.0 - 1e-9), nk);
    pairs.emplace_back(z1, z2);
  }
  std::vector<double> excess(pairs.size(), 0.0);
  std::vector<char> lip_solved(pairs.size(), 1);
  parallel_for(pairs.size(), [&](std::size_t i) {
    const NewtonResult a = preimage(pairs[i].first);
    const NewtonResult b = preimage(pairs[i].second);
    if (!a.converged || !b.converged) {
      lip_solved[i] = 0;
      return;
    }
    excess[i] = norm(a.x - b.x, nk) - lip * norm(pairs[i].first - pairs[i].second, nk);
  });
  double worst_excess = -std::numeric_limits<double>::infinity();
  for (double e : excess) worst_excess = std::max(worst_excess, e);
  const auto lip_unsolved = std::count(lip_solved.begin(), lip_solved.end(), 0);
  cert.require("lipschitz_targets_solved", "", static_cast<double>(lip_unsolved), "==", 0);
  cert.require("inverse_lipschitz", "", pairs.empty() ? 0.0 : worst_excess, "<=", options.lipschitz_slack);
  return cert;
}

Certificate certify_qift(const QiftProblem& p, const QiftOptions& options) {
  return certify_qift([&](const Vec& y) { return p.eval(y); }, p.center, p.half_widths, p.point, p.anchor, p.norm,
                      options);
}

}  // namespace atlasdiffeo
