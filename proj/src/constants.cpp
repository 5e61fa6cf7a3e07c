#include "atlasdiffeo/constants.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace atlasdiffeo {

using nlohmann::json;

namespace {

json vec_json(const Vec& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

// Runs body(i) -> double for i in [0, n) and returns the maximum (0 for n == 0).
double parallel_max(std::size_t n, const std::function<double(std::size_t)>& body) {
  std::vector<double> vals(n, 0.0);
  parallel_for(n, [&](std::size_t i) { vals[i] = body(i); });
  double m = 0.0;
  for (double v : vals) m = std::max(m, v);
  return m;
}

std::vector<Vec> ball_lattice(const Vec& center, double radius, NormKind kind, int n) {
  const int d = static_cast<int>(center.size());
  if (radius <= 0.0 || n <= 1) return {center};
  std::vector<Vec> out;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(n);
  const double step = 2.0 * radius / (n - 1);
  for (std::size_t flat = 0; flat < total; ++flat) {
    Vec p(d);
    std::size_t r = flat;
    for (int i = d - 1; i >= 0; --i) {
      const int k = static_cast<int>(r % static_cast<std::size_t>(n));
      r /= static_cast<std::size_t>(n);
      p(i) = (k == n - 1) ? radius : -radius + k * step;
    }
    if (norm(p, kind) <= radius * (1.0 + 1e-12)) out.push_back(center + p);
  }
  return out;
}

// T(k, i, j) = d/dp_i J(p)(k, j), symmetrized in (i, j).
Multilinear jacobian_derivative(const std::function<Mat(const Vec&)>& J, const Vec& p, double h, int block) {
  const int n = static_cast<int>(p.size());
  std::vector<Mat> dJ(static_cast<std::size_t>(n));
  int out = 0;
  for (int i = 0; i < n; ++i) {
    Vec pp = p, pm = p;
    pp(i) += h;
    pm(i) -= h;
    dJ[static_cast<std::size_t>(i)] = (J(pp) - J(pm)) / (2.0 * h);
    out = static_cast<int>(dJ[static_cast<std::size_t>(i)].rows());
  }
  Multilinear T(out, n, 2, block);
  for (int k = 0; k < out; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const int idx[2] = {i, j};
        T.at(k, idx) = 0.5 * (dJ[static_cast<std::size_t>(i)](k, j) + dJ[static_cast<std::size_t>(j)](k, i));
      }
  return T;
}

Vec join(const Vec& a, const Vec& b) {
  Vec p(a.size() + b.size());
  p << a, b;
  return p;
}

}  // namespace

bool Region::contains(const Vec& x, double slack) const {
  return atlasdiffeo::norm(x - center, norm) <= radius * (1.0 + slack) + slack;
}

json Region::to_json() const {
  return json{{"center", vec_json(center)}, {"radius", radius}, {"norm", std::string(to_string(norm))}};
}

json ConstantsReport::to_json() const {
  json j;
  j["chart"] = chart;
  j["region"] = region.to_json();
  j["delta"] = delta;
  j["sigma"] = sigma;
  j["grenz_exp"] = grenz_exp;
  j["a"] = a;
  j["b"] = b;
  j["quot_norm"] = quot_norm;
  j["rad_fib_inv"] = rad_fib_inv;
  j["grenz_log"] = grenz_log;
  j["a_log"] = a_log;
  j["b_log"] = b_log;
  j["resolution"] = resolution;
  j["fiber_resolution"] = fiber_resolution;
  j["safety_factor"] = safety_factor;
  return j;
}

ConstantsEstimator::ConstantsEstimator(const ChartGeometry& geometry, ConstantsOptions options)
    : geo_(geometry), options_(options) {
  if (options_.grid < 1 || options_.fiber_grid < 1 || options_.shells < 1)
    throw Error(ErrorCode::InvalidArgument, "constants resolutions must be positive");
}

double ConstantsEstimator::trust() const { return 4.0 * geo_.chart().domain.scale(); }

std::vector<Vec> ConstantsEstimator::region_samples(const Region& K, int n) const {
  return ball_lattice(K.center, K.radius, K.norm, n > 0 ? n : options_.grid);
}

std::vector<Vec> ConstantsEstimator::fiber_samples(double r, int n) const {
  return ball_lattice(Vec::Zero(geo_.dim()), r, geo_.norm_kind(), n > 0 ? n : options_.fiber_grid);
}

double ConstantsEstimator::exp_ok_radius(const std::vector<Vec>& xs, const std::vector<Vec>& dirs,
                                         double hi_start) const {
  auto ok = [&](double tau) {
    std::atomic<bool> good{true};
    parallel_for(xs.size(), [&](std::size_t i) {
      for (const Vec& u : dirs) {
        if (!good.load(std::memory_order_relaxed)) return;
        try {
          geo_.exp(xs[i], tau * u);
        } catch (const LeftChartDomain&) {
          good = false;
        }
      }
    });
    return good.load();
  };
  const double scale = geo_.chart().domain.scale();
  double lo = 0.0, hi = hi_start;
  int doublings = 0;
  while (ok(hi)) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 20) return lo;
  }
  while (hi - lo > options_.rel_tol * scale) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

namespace {

std::string region_key(const Region& K) {
  std::ostringstream os;
  os.precision(17);
  os << K.radius << '|' << static_cast<int>(K.norm);
  for (int i = 0; i < K.center.size(); ++i) os << ',' << K.center(i);
  return os.str();
}

}  // namespace

double ConstantsEstimator::grenz_exp(const Region& K) const {
  const std::string key = region_key(K);
  {
    std::lock_guard<std::mutex> lock(memo_->mutex);
    auto it = memo_->grenz_exp.find(key);
    if (it != memo_->grenz_exp.end()) return it->second;
  }
  const auto xs = region_samples(K);
  for (const Vec& x : xs)
    if (!geo_.chart().domain.contains(x))
      throw Error(ErrorCode::DegenerateRegion, "region is not inside the chart domain");
  const double g = exp_ok_radius(xs, direction_grid(geo_.dim(), geo_.norm_kind()), geo_.chart().domain.scale());
  if (!(g > 0.0)) throw Error(ErrorCode::DegenerateRegion, "no positive exp radius on the region");
  std::lock_guard<std::mutex> lock(memo_->mutex);
  memo_->grenz_exp[key] = g;
  return g;
}

const ConstantsEstimator::Profile& ConstantsEstimator::deviation_profile(const Region& K) const {
  const std::string key = region_key(K);
  {
    std::lock_guard<std::mutex> lock(memo_->mutex);
    auto it = memo_->profiles.find(key);
    if (it != memo_->profiles.end()) return it->second;
  }
  const double g = grenz_exp(K);
  const auto xs = region_samples(K);
  const auto dirs = direction_grid(geo_.dim(), geo_.norm_kind());
  const double top = g - 2.0 * geo_.jacobian_step();
  Profile p;
  p.radii.push_back(0.0);
  p.deviation.push_back(0.0);
  if (top > 0.0) {
    double m = 0.0;
    for (int j = 1; j <= options_.shells; ++j) {
      const double r = top * j / options_.shells;
      m = std::max(m, fib_deviation(xs, dirs, r));
      p.radii.push_back(r);
      p.deviation.push_back(m);
    }
  }
  std::lock_guard<std::mutex> lock(memo_->mutex);
  return memo_->profiles.emplace(key, std::move(p)).first->second;
}

double ConstantsEstimator::exp_first_bound(const Region& K, double delta) const {
  const auto xs = region_samples(K);
  const auto ys = fiber_samples(delta);
  const NormKind nk = geo_.norm_kind();
  return parallel_max(xs.size(), [&](std::size_t i) {
    double m = 0.0;
    for (const Vec& y : ys) m = std::max(m, op_norm(geo_.d2_exp(xs[i], y), nk));
    return m;
  });
}

Multilinear ConstantsEstimator::exp_hessian(const Vec& x, const Vec& y) const {
  const int d = geo_.dim();
  const int n = 2 * d;
  const double h = 1e-4 * geo_.chart().domain.scale();
  const Vec p = join(x, y);
  auto F = [&](const Vec& q) { return geo_.exp(q.head(d), q.tail(d)); };
  const Vec f0 = F(p);
  std::vector<Vec> fp(static_cast<std::size_t>(n)), fm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec q = p;
    q(i) += h;
    fp[static_cast<std::size_t>(i)] = F(q);
    q(i) = p(i) - h;
    fm[static_cast<std::size_t>(i)] = F(q);
  }
  Multilinear T(d, n, 2, d);
  for (int i = 0; i < n; ++i) {
    const Vec dii = (fp[static_cast<std::size_t>(i)] - 2.0 * f0 + fm[static_cast<std::size_t>(i)]) / (h * h);
    for (int k = 0; k < d; ++k) {
      const int idx[2] = {i, i};
      T.at(k, idx) = dii(k);
    }
    for (int j = i + 1; j < n; ++j) {
      Vec q = p;
      q(i) += h;
      q(j) += h;
      const Vec fpp = F(q);
      q(j) = p(j) - h;
      const Vec fpm = F(q);
      q(i) = p(i) - h;
      const Vec fmm = F(q);
      q(j) = p(j) + h;
      const Vec fmp = F(q);
      const Vec dij = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
      for (int k = 0; k < d; ++k) {
        const int a[2] = {i, j};
        const int b[2] = {j, i};
        T.at(k, a) = dij(k);
        T.at(k, b) = dij(k);
      }
    }
  }
  return T;
}

double ConstantsEstimator::exp_second_bound(const Region& K, double delta) const {
  const auto xs = region_samples(K);
  const auto ys = fiber_samples(delta);
  const NormKind nk = geo_.norm_kind();
  return parallel_max(xs.size(), [&](std::size_t i) {
    double m = 0.0;
    for (const Vec& y : ys) m = std::max(m, multilinear_norm(exp_hessian(xs[i], y), nk));
    return m;
  });
}

namespace {

// min and max of sqrt(h^T G h) over the unit sphere of the reference norm.
std::pair<double, double> metric_norm_range(const Mat& G, NormKind kind) {
  const int d = static_cast<int>(G.rows());
  if (kind == NormKind::euclidean) {
    Eigen::SelfAdjointEigenSolver<Mat> es(G);
    return {std::sqrt(std::max(0.0, es.eigenvalues().minCoeff())), std::sqrt(es.eigenvalues().maxCoeff())};
  }
  double hi = 0.0;
  for (int mask = 0; mask < (1 << d); ++mask) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = (mask >> i) & 1 ? -1.0 : 1.0;
    hi = std::max(hi, v.dot(G * v));
  }
  double lo = std::numeric_limits<double>::infinity();
  for (int face = 0; face < d; ++face) {
    Vec h = Vec::Zero(d);
    h(face) = 1.0;
    for (int sweep = 0; sweep < 500; ++sweep) {
      double change = 0.0;
      for (int j = 0; j < d; ++j) {
        if (j == face) continue;
        double s = 0.0;
        for (int k = 0; k < d; ++k)
          if (k != j) s += G(j, k) * h(k);
        const double v = std::clamp(-s / G(j, j), -1.0, 1.0);
        change = std::max(change, std::abs(v - h(j)));
        h(j) = v;
      }
      if (change < 1e-15) break;
    }
    lo = std::min(lo, h.dot(G * h));
  }
  return {std::sqrt(std::max(0.0, lo)), std::sqrt(hi)};
}

}  // namespace

double ConstantsEstimator::quot_norm(const Region& K) const {
  const auto xs = region_samples(K);
  double c = std::numeric_limits<double>::infinity(), C = 0.0;
  for (const Vec& x : xs) {
    const auto [lo, hi] = metric_norm_range(geo_.metric(x), geo_.norm_kind());
    c = std::min(c, lo);
    C = std::max(C, hi);
  }
  return c / C;
}

double ConstantsEstimator::fib_deviation(const std::vector<Vec>& xs, const std::vector<Vec>& dirs,
                                         double radius) const {
  const int d = geo_.dim();
  const NormKind nk = geo_.norm_kind();
  return parallel_max(xs.size(), [&](std::size_t i) {
    double m = 0.0;
    for (const Vec& u : dirs) {
      const Mat J = geo_.d2_exp(xs[i], radius * u) - Mat::Identity(d, d);
      m = std::max(m, op_norm(J, nk));
    }
    return m;
  });
}

double ConstantsEstimator::rad_fib_inv(const Region& V, double sigma) const {
  if (!(sigma > 0.0 && sigma < 1.0)) throw Error(ErrorCode::SigmaOutOfRange, "sigma must lie in (0, 1)");
  const Profile& p = deviation_profile(V);
  if (p.radii.size() < 2) return 0.0;
  std::size_t cross = 0;
  for (std::size_t j = 1; j < p.radii.size() && cross == 0; ++j)
    if (p.deviation[j] >= sigma) cross = j;
  if (cross == 0) return p.radii.back();
  return refine_crossing(V, p, cross, sigma);
}

double ConstantsEstimator::refine_crossing(const Region& K, const Profile& p, std::size_t cross, double sigma) const {
  const auto xs = region_samples(K);
  const auto dirs = direction_grid(geo_.dim(), geo_.norm_kind());
  double lo = p.radii[cross - 1], hi = p.radii[cross];
  const double m_lo = p.deviation[cross - 1];
  for (int it = 0; it < 12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (std::max(m_lo, fib_deviation(xs, dirs, mid)) < sigma)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double ConstantsEstimator::grenz_log(const Region& K) const {
  const Profile& p = deviation_profile(K);
  if (p.radii.size() < 2) return 0.0;
  const double q = quot_norm(K);
  std::vector<double> sigmas{1e-3, 1e-2};
  for (int k = 1; k < 20; ++k) sigmas.push_back(0.05 * k);
  // Coarse radius: last shell whose cumulative deviation stays below sigma.
  auto coarse = [&](double sigma, std::size_t* crossing) {
    for (std::size_t j = 1; j < p.radii.size(); ++j)
      if (p.deviation[j] >= sigma) {
        *crossing = j;
        return p.radii[j - 1];
      }
    *crossing = 0;
    return p.radii.back();
  };
  double best = 0.0, best_sigma = sigmas.front();
  std::size_t best_cross = 0;
  for (double s : sigmas) {
    std::size_t cross = 0;
    const double v = (1.0 - s) * q * coarse(s, &cross);
    if (v > best) {
      best = v;
      best_sigma = s;
      best_cross = cross;
    }
  }
  if (best_cross > 0) best = std::max(best, (1.0 - best_sigma) * q * refine_crossing(K, p, best_cross, best_sigma));
  return best;
}

double ConstantsEstimator::log_first_bound(const Region& K, double delta) const {
  const auto xs = region_samples(K);
  const auto ws = fiber_samples(delta);
  const NormKind nk = geo_.norm_kind();
  const double tr = trust();
  return parallel_max(xs.size(), [&](std::size_t i) {
    double m = 0.0;
    for (const Vec& w : ws) {
      const Vec y = geo_.log(xs[i], xs[i] + w, tr);
      m = std::max(m, op_norm(geo_.d2_exp(xs[i], y).inverse(), nk));
    }
    return m;
  });
}

double ConstantsEstimator::log_second_bound(const Region& K, double delta) const {
  return superposition_seminorm(Superposition::log_plus, K, delta, 2);
}

double ConstantsEstimator::superposition_seminorm(Superposition kind, const Region& K, double delta,
                                                  int ell) const {
  if (ell < 0 || ell > 3) throw Error(ErrorCode::OrderUnavailable, "derivative order above 3");
  const int d = geo_.dim();
  const auto xs = region_samples(K);
  const auto ys = fiber_samples(delta);
  const NormKind nk = geo_.norm_kind();
  const double tr = trust();
  const double scale = geo_.chart().domain.scale();

  // Value and Jacobian of the superposition map at p = (x, y), with a log warm start.
  auto value = [&](const Vec& p, Vec* seed) -> Vec {
    const Vec x = p.head(d), y = p.tail(d);
    if (kind == Superposition::exp_minus) return geo_.exp(x, y) - x;
    Vec z = geo_.log(x, x + y, tr, {}, seed);
    if (seed) *seed = z;
    return z;
  };
  auto jacobian = [&](const Vec& p, Vec* seed) -> Mat {
    const Vec x = p.head(d), y = p.tail(d);
    if (kind == Superposition::exp_minus) {
      Mat J = geo_.exp_jacobian(x, y);
      J.leftCols(d) -= Mat::Identity(d, d);
      return J;
    }
    Vec lg;
    const Mat L = geo_.log_jacobian(x, x + y, tr, seed, &lg);
    if (seed) *seed = lg;
    Mat J(d, 2 * d);
    J.leftCols(d) = L.leftCols(d) + L.rightCols(d);
    J.rightCols(d) = L.rightCols(d);
    return J;
  };

  return parallel_max(xs.size(), [&](std::size_t i) {
    double m = 0.0;
    for (const Vec& y : ys) {
      const Vec p = join(xs[i], y);
      Vec seed = y;
      switch (ell) {
        case 0:
          m = std::max(m, norm(value(p, &seed), nk));
          break;
        case 1:
          m = std::max(m, product_op_norm(jacobian(p, &seed), d, nk));
          break;
        case 2: {
          if (kind == Superposition::exp_minus) {
            m = std::max(m, multilinear_norm(exp_hessian(xs[i], y), nk));
          } else {
            const auto T = jacobian_derivative([&](const Vec& q) { return jacobian(q, &seed); }, p,
                                               1e-4 * scale, d);
            m = std::max(m, multilinear_norm(T, nk));
          }
          break;
        }
        default: {
          const double h = 1e-3 * std::pow(scale, 1.0 / 8.0);
          const auto T = fd_derivative([&](const Vec& q) { return value(q, &seed); }, p, 3, h, d);
          m = std::max(m, multilinear_norm(T, nk));
        }
      }
    }
    return m;
  });
}

ConstantsReport ConstantsEstimator::report(const Region& K, double delta, double sigma) const {
  ConstantsReport rep;
  rep.chart = geo_.chart().id;
  rep.region = K;
  rep.delta = delta;
  rep.sigma = sigma;
  rep.resolution = options_.grid;
  rep.fiber_resolution = options_.fiber_grid;
  rep.safety_factor = options_.safety;
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  rep.grenz_exp = grenz_exp(K);
  if (!(delta < rep.grenz_exp))
    throw Error(ErrorCode::DeltaTooLarge, "delta " + std::to_string(delta) + " is not below grenzExp " +
                                              std::to_string(rep.grenz_exp));
  rep.quot_norm = quot_norm(K);
  rep.rad_fib_inv = rad_fib_inv(K, sigma);
  rep.grenz_log = grenz_log(K);
  if (!(delta < rep.grenz_log))
    throw Error(ErrorCode::DeltaTooLarge, "delta " + std::to_string(delta) + " is not below grenzLog " +
                                              std::to_string(rep.grenz_log));
  rep.a = exp_first_bound(K, delta);
  rep.b = exp_second_bound(K, delta);
  rep.a_log = log_first_bound(K, delta);
  rep.b_log = log_second_bound(K, delta);
  return rep;
}

std::string geometry_signature(const Chart& chart) {
  std::ostringstream os;
  os.precision(17);
  const Domain& U = chart.domain;
  os << (U.shape == Domain::Shape::ball ? "ball" : "box") << '|' << to_string(U.norm) << '|';
  for (int i = 0; i < U.center.size(); ++i) os << U.center(i) << ',';
  os << '|';
  for (int i = 0; i < U.extent.size(); ++i) os << U.extent(i) << ',';
  os << '|';
  bool offsets = false;
  for (const Expr& e : chart.metric) {
    os << e.print() << ';';
    offsets = offsets || e.uses_offsets();
  }
  if (offsets)
    for (int i = 0; i < chart.offset.size(); ++i) os << '@' << chart.offset(i);
  return os.str();
}

ConstantsReport ConstantsCache::get(const ChartGeometry& geometry, const Region& K, double delta, double sigma,
                                    const ConstantsOptions& options) {
  std::ostringstream key;
  key.precision(17);
  key << geometry_signature(geometry.chart()) << '#' << K.to_json().dump() << '#' << delta << '#' << sigma << '#'
      << options.grid << ',' << options.fiber_grid << ',' << options.shells << ',' << options.safety << ','
      << options.rel_tol << ',' << geometry.options().steps;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = reports_.find(key.str());
    if (it != reports_.end()) {
      ConstantsReport rep = it->second;
      rep.chart = geometry.chart().id;
      return rep;
    }
  }
  ConstantsReport rep = ConstantsEstimator(geometry, options).report(K, delta, sigma);
  std::lock_guard<std::mutex> lock(mutex_);
  reports_.emplace(key.str(), rep);
  return rep;
}

std::size_t ConstantsCache::size() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return reports_.size();
}

}  // namespace atlasdiffeo
