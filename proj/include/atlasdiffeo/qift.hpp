#pragma once

#include "atlasdiffeo/certificate.hpp"
#include "atlasdiffeo/expr.hpp"
#include "atlasdiffeo/linalg.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace atlasdiffeo {

using JacobianMap = std::function<Mat(const Vec&)>;

struct NewtonResult {
  Vec x;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped Newton for f(x) = target with step halving; iterates must satisfy `admissible`.
NewtonResult newton_solve(const VecMap& f, const JacobianMap& jacobian, const Vec& target, const Vec& seed,
                          const std::function<bool(const Vec&)>& admissible, NormKind kind,
                          double tolerance = 1e-12, int max_iterations = 50);

struct QiftProblem {
  int dim = 0;
  std::vector<Expr> map;
  Vec center;       // of the open box U
  Vec half_widths;  // of the open box U
  Vec point;        // x, where Dg(x) is inverted
  Vec anchor;       // x', center of the ball inside U
  NormKind norm = NormKind::sup;

  Vec eval(const Vec& y) const;
};

QiftProblem load_qift_problem_text(std::string_view text);
QiftProblem load_qift_problem(const std::string& path);

struct QiftOptions {
  int grid = 12;              // samples per axis of the closed box for delta-hat
  int target_grid = 7;        // samples per axis of the target ball
  int injectivity_pairs = 1000;
  int lipschitz_pairs = 1000;
  double safety = 1.10;       // delta = safety * delta-hat
  double lipschitz_slack = 1e-6;
  std::uint64_t seed = 20240611;
};

// Samples the hypotheses and conclusions of the quantitative inverse function theorem for g on the
// open box U, at the point x and with the ball around the anchor x' of radius dist(x', boundary of U).
// Throws SingularDifferential when Dg(x) has condition number >= 1e8.
Certificate certify_qift(const VecMap& g, const Vec& center, const Vec& half_widths, const Vec& x,
                         const Vec& anchor, NormKind norm, const QiftOptions& options = {});
Certificate certify_qift(const QiftProblem& problem, const QiftOptions& options = {});

}  // namespace atlasdiffeo
