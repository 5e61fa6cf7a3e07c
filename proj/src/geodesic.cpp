#include "atlasdiffeo/geodesic.hpp"

#include "atlasdiffeo/errors.hpp"

#include <cmath>

namespace atlasdiffeo {

ChartGeometry::ChartGeometry(Chart chart, ExpOptions options)
    : chart_(std::move(chart)), options_(options), flat_(chart_.metric_constant()) {
  const double scale = chart_.domain.scale();
  fd_h_ = options_.christoffel_rel * scale;
  jac_h_ = options_.jacobian_rel * scale;
  if (options_.steps < 1) throw Error(ErrorCode::StepSizeUnderflow, "integrator needs at least one step");
}

std::vector<Mat> ChartGeometry::metric_derivatives(const Vec& x) const {
  const int d = dim();
  std::vector<Mat> dG(static_cast<std::size_t>(d));
  for (int l = 0; l < d; ++l) {
    if (flat_) {
      dG[static_cast<std::size_t>(l)] = Mat::Zero(d, d);
      continue;
    }
    Vec xp = x, xm = x;
    xp(l) += fd_h_;
    xm(l) -= fd_h_;
    dG[static_cast<std::size_t>(l)] = (metric(xp) - metric(xm)) / (2.0 * fd_h_);
  }
  return dG;
}

std::vector<Mat> ChartGeometry::christoffel(const Vec& x) const {
  const int d = dim();
  std::vector<Mat> gamma(static_cast<std::size_t>(d), Mat::Zero(d, d));
  if (flat_) return gamma;
  const Mat Ginv = metric(x).inverse();
  const auto dG = metric_derivatives(x);
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int l = 0; l < d; ++l)
          s += Ginv(k, l) * (dG[static_cast<std::size_t>(i)](j, l) + dG[static_cast<std::size_t>(j)](i, l) -
                             dG[static_cast<std::size_t>(l)](i, j));
        gamma[static_cast<std::size_t>(k)](i, j) = 0.5 * s;
      }
  return gamma;
}

Vec ChartGeometry::acceleration(const Vec& x, const Vec& v) const {
  const int d = dim();
  if (flat_) return Vec::Zero(d);
  const auto dG = metric_derivatives(x);
  Vec w = Vec::Zero(d);
  for (int i = 0; i < d; ++i) w += 2.0 * v(i) * (dG[static_cast<std::size_t>(i)] * v);
  for (int l = 0; l < d; ++l) w(l) -= v.dot(dG[static_cast<std::size_t>(l)] * v);
  return -0.5 * metric(x).ldlt().solve(w);
}

Mat ChartGeometry::acceleration_dv(const Vec& x, const Vec& v) const {
  const int d = dim();
  if (flat_) return Mat::Zero(d, d);
  const auto dG = metric_derivatives(x);
  Mat W = Mat::Zero(d, d);
  for (int m = 0; m < d; ++m) {
    const auto um = static_cast<std::size_t>(m);
    W.col(m) += 2.0 * (dG[um] * v);
    for (int i = 0; i < d; ++i) W.col(m) += 2.0 * v(i) * dG[static_cast<std::size_t>(i)].col(m);
  }
  for (int l = 0; l < d; ++l) W.row(l) -= 2.0 * (dG[static_cast<std::size_t>(l)] * v).transpose();
  return -0.5 * metric(x).ldlt().solve(W);
}

Mat ChartGeometry::acceleration_dx(const Vec& x, const Vec& v) const {
  const int d = dim();
  Mat J = Mat::Zero(d, d);
  if (flat_) return J;
  for (int j = 0; j < d; ++j) {
    Vec xp = x, xm = x;
    xp(j) += fd_h_;
    xm(j) -= fd_h_;
    J.col(j) = (acceleration(xp, v) - acceleration(xm, v)) / (2.0 * fd_h_);
  }
  return J;
}

ExpEvaluation ChartGeometry::integrate(const Vec& x, const Vec& y, Sensitivity mode) const {
  const int d = dim();
  ExpEvaluation ev;
  ev.base = x;
  ev.velocity = y;
  const Domain& U = chart_.domain;
  if (!U.contains(x)) throw LeftChartDomain(0.0);
  const int cols = mode == Sensitivity::none ? 0 : mode == Sensitivity::velocity ? d : 2 * d;
  // Tangent state: derivatives of (position, velocity) in (x, y) or in y alone.
  Mat P = Mat::Zero(d, cols), V = Mat::Zero(d, cols);
  if (mode == Sensitivity::full) {
    P.leftCols(d) = Mat::Identity(d, d);
    V.rightCols(d) = Mat::Identity(d, d);
  } else if (mode == Sensitivity::velocity) {
    V = Mat::Identity(d, d);
  }
  if ((y.array() == 0.0).all() && mode == Sensitivity::none) {
    ev.value = x;
  } else if (flat_ && U.contains(x + y)) {
    // Straight line inside a convex domain.
    ev.value = x + y;
    P += V;
    ev.steps = options_.steps;
    ev.step_size = 1.0 / options_.steps;
  } else {
    const int n = options_.steps;
    const double h = 1.0 / n;
    Vec p = x, v = y;
    auto stage = [&](const Vec& ps, const Vec& vs, const Mat& Ps, const Mat& Vs, Vec& a, Mat& dV) {
      a = acceleration(ps, vs);
      if (cols > 0) {
        dV = acceleration_dx(ps, vs) * Ps;
        if (!flat_) dV += acceleration_dv(ps, vs) * Vs;
      }
    };
    Vec a1, a2, a3, a4;
    Mat B1, B2, B3, B4;
    for (int s = 0; s < n; ++s) {
      const double t = s * h;
      stage(p, v, P, V, a1, B1);
      const Vec p2 = p + 0.5 * h * v;
      const Vec v2 = v + 0.5 * h * a1;
      if (!U.contains(p2)) throw LeftChartDomain(t);
      Mat P2, V2;
      if (cols > 0) {
        P2 = P + 0.5 * h * V;
        V2 = V + 0.5 * h * B1;
      }
      stage(p2, v2, P2, V2, a2, B2);
      const Vec p3 = p + 0.5 * h * v2;
      const Vec v3 = v + 0.5 * h * a2;
      if (!U.contains(p3)) throw LeftChartDomain(t);
      Mat P3, V3;
      if (cols > 0) {
        P3 = P + 0.5 * h * V2;
        V3 = V + 0.5 * h * B2;
      }
      stage(p3, v3, P3, V3, a3, B3);
      const Vec p4 = p + h * v3;
      const Vec v4 = v + h * a3;
      if (!U.contains(p4)) throw LeftChartDomain(t);
      Mat P4, V4;
      if (cols > 0) {
        P4 = P + h * V3;
        V4 = V + h * B3;
      }
      stage(p4, v4, P4, V4, a4, B4);
      p += (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4);
      v += (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
      if (cols > 0) {
        P += (h / 6.0) * (V + 2.0 * V2 + 2.0 * V3 + V4);
        V += (h / 6.0) * (B1 + 2.0 * B2 + 2.0 * B3 + B4);
      }
      if (!p.allFinite() || !v.allFinite())
        throw Error(ErrorCode::StepSizeUnderflow, "non-finite geodesic state at t=" + std::to_string(t));
      if (!U.contains(p)) throw LeftChartDomain(t + h);
    }
    ev.value = p;
    ev.steps = n;
    ev.step_size = h;
  }
  if (mode == Sensitivity::full) {
    ev.d1 = P.leftCols(d);
    ev.d2 = P.rightCols(d);
    ev.has_jacobians = true;
  } else if (mode == Sensitivity::velocity) {
    ev.d2 = P;
  }
  return ev;
}

ExpEvaluation ChartGeometry::geodesic_exp(const Vec& x, const Vec& y, bool jacobians) const {
  if (!jacobians || options_.variational_jacobians)
    return integrate(x, y, jacobians ? Sensitivity::full : Sensitivity::none);
  ExpEvaluation ev = integrate(x, y, Sensitivity::none);
  const Mat J = exp_jacobian(x, y);
  ev.d1 = J.leftCols(dim());
  ev.d2 = J.rightCols(dim());
  ev.has_jacobians = true;
  return ev;
}

Vec ChartGeometry::exp(const Vec& x, const Vec& y) const { return integrate(x, y, Sensitivity::none).value; }

Mat ChartGeometry::exp_jacobian(const Vec& x, const Vec& y) const {
  const int d = dim();
  Mat J(d, 2 * d);
  if (flat_ && chart_.domain.contains(x) && chart_.domain.contains(x + y)) {
    J << Mat::Identity(d, d), Mat::Identity(d, d);
    return J;
  }
  if (options_.variational_jacobians) {
    const ExpEvaluation ev = integrate(x, y, Sensitivity::full);
    J << ev.d1, ev.d2;
    return J;
  }
  for (int j = 0; j < d; ++j) {
    Vec xp = x, xm = x;
    xp(j) += jac_h_;
    xm(j) -= jac_h_;
    J.col(j) = (exp(xp, y) - exp(xm, y)) / (2.0 * jac_h_);
    Vec yp = y, ym = y;
    yp(j) += jac_h_;
    ym(j) -= jac_h_;
    J.col(d + j) = (exp(x, yp) - exp(x, ym)) / (2.0 * jac_h_);
  }
  return J;
}

Mat ChartGeometry::d2_exp(const Vec& x, const Vec& y) const {
  const int d = dim();
  if (flat_ && chart_.domain.contains(x) && chart_.domain.contains(x + y)) return Mat::Identity(d, d);
  if (options_.variational_jacobians) return integrate(x, y, Sensitivity::velocity).d2;
  Mat J(d, d);
  for (int j = 0; j < d; ++j) {
    Vec yp = y, ym = y;
    yp(j) += jac_h_;
    ym(j) -= jac_h_;
    J.col(j) = (exp(x, yp) - exp(x, ym)) / (2.0 * jac_h_);
  }
  return J;
}

Vec ChartGeometry::log(const Vec& x, const Vec& z, double trust_radius, const LogOptions& options,
                       const Vec* seed) const {
  const NormKind nk = norm_kind();
  Vec y = seed ? *seed : Vec(z - x);
  auto residual = [&](const Vec& yy, Vec& r) {
    try {
      r = exp(x, yy) - z;
      return true;
    } catch (const LeftChartDomain&) {
      return false;
    }
  };
  Vec r;
  if (!residual(y, r)) {
    y = z - x;
    int halvings = 0;
    while (!residual(y, r)) {
      if (++halvings > 30) throw NoConvergence(ErrorCode::NoConvergence, 0, "log seed leaves the chart domain");
      y *= 0.5;
    }
  }
  double rn = norm(r, nk);
  int it = 0;
  for (; it < options.max_iterations && !(rn <= options.tolerance); ++it) {
    const Mat J = d2_exp(x, y);
    const Vec step = J.fullPivLu().solve(-r);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 30; ++k, lambda *= 0.5) {
      const Vec cand = y + lambda * step;
      Vec rc;
      if (residual(cand, rc) && norm(rc, nk) < rn) {
        y = cand;
        r = rc;
        rn = norm(rc, nk);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (!(rn <= options.tolerance)) throw NoConvergence(ErrorCode::NoConvergence, it, "log Newton iteration failed");
  if (!(norm(y, nk) < trust_radius))
    throw Error(ErrorCode::OutsideInjectivityRadius, "log solution exceeds the trust radius");
  return y;
}

Mat ChartGeometry::log_jacobian(const Vec& x, const Vec& z, double trust_radius, const Vec* seed,
                                Vec* y_out) const {
  const int d = dim();
  const Vec y = log(x, z, trust_radius, {}, seed);
  if (y_out) *y_out = y;
  const Mat J = exp_jacobian(x, y);
  const Mat J2inv = J.rightCols(d).inverse();
  Mat L(d, 2 * d);
  L.leftCols(d) = -J2inv * J.leftCols(d);
  L.rightCols(d) = J2inv;
  return L;
}

}  // namespace atlasdiffeo
