#include "atlasdiffeo/linalg.hpp"

#include "atlasdiffeo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace atlasdiffeo {

NormKind parse_norm_kind(std::string_view s) {
  if (s == "sup" || s == "max" || s == "inf") return NormKind::sup;
  if (s == "euclidean" || s == "l2") return NormKind::euclidean;
  throw Error(ErrorCode::ParseError, "unknown norm '" + std::string(s) + "'");
}

std::string_view to_string(NormKind kind) {
  return kind == NormKind::sup ? "sup" : "euclidean";
}

double norm(const Vec& v, NormKind kind) {
  if (v.size() == 0) return 0.0;
  return kind == NormKind::sup ? v.cwiseAbs().maxCoeff() : v.norm();
}

double op_norm(const Mat& A, NormKind kind) {
  if (A.size() == 0) return 0.0;
  if (kind == NormKind::sup) return A.cwiseAbs().rowwise().sum().maxCoeff();
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

Multilinear::Multilinear(int out_dim, int slot_dim, int ord, int block_dim)
    : out(out_dim), slot(slot_dim), order(ord), block(block_dim) {
  std::size_t n = static_cast<std::size_t>(out);
  for (int i = 0; i < order; ++i) n *= static_cast<std::size_t>(slot);
  data.assign(n, 0.0);
}

std::size_t Multilinear::index(int k, const int* idx) const {
  std::size_t r = static_cast<std::size_t>(k);
  for (int i = 0; i < order; ++i) r = r * static_cast<std::size_t>(slot) + static_cast<std::size_t>(idx[i]);
  return r;
}

namespace {

// Contract the first slot of a [k][i1][rest] array with u, giving [k][rest].
std::vector<double> contract_first(const std::vector<double>& t, int out, int slot, std::size_t rest,
                                   const double* u) {
  std::vector<double> r(static_cast<std::size_t>(out) * rest, 0.0);
  for (int k = 0; k < out; ++k) {
    for (int i = 0; i < slot; ++i) {
      const double ui = u[i];
      if (ui == 0.0) continue;
      const double* src = &t[(static_cast<std::size_t>(k) * slot + i) * rest];
      double* dst = &r[static_cast<std::size_t>(k) * rest];
      for (std::size_t j = 0; j < rest; ++j) dst[j] += ui * src[j];
    }
  }
  return r;
}

double sup_norm_exact(const Multilinear& T) {
  if (T.order == 0) {
    double m = 0.0;
    for (double v : T.data) m = std::max(m, std::abs(v));
    return m;
  }
  const int n = T.slot;
  const int free_slots = T.order - 1;
  const int bits = n * free_slots;
  const std::uint64_t count = std::uint64_t{1} << bits;
  double best = 0.0;
  std::vector<double> u(static_cast<std::size_t>(n));
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    std::vector<double> cur = T.data;
    std::size_t rest = cur.size() / static_cast<std::size_t>(T.out);
    for (int s = 0; s < free_slots; ++s) {
      rest /= static_cast<std::size_t>(n);
      for (int i = 0; i < n; ++i) u[i] = ((mask >> (s * n + i)) & 1U) ? -1.0 : 1.0;
      cur = contract_first(cur, T.out, n, rest, u.data());
    }
    for (int k = 0; k < T.out; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += std::abs(cur[static_cast<std::size_t>(k) * n + i]);
      best = std::max(best, s);
    }
  }
  return best;
}

void normalize_blocks(std::vector<double>& g, int block, NormKind kind) {
  const int n = static_cast<int>(g.size());
  for (int b0 = 0; b0 < n; b0 += block) {
    if (kind == NormKind::sup) {
      for (int i = b0; i < b0 + block; ++i) g[i] = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
    } else {
      double s = 0.0;
      for (int i = b0; i < b0 + block; ++i) s += g[i] * g[i];
      s = std::sqrt(s);
      for (int i = b0; i < b0 + block; ++i) g[i] = s > 0 ? g[i] / s : 0.0;
    }
  }
}

// Evaluate T(u_1, ..., u_order) in R^out.
std::vector<double> apply_all(const Multilinear& T, const std::vector<std::vector<double>>& us) {
  std::vector<double> cur = T.data;
  std::size_t rest = cur.size() / static_cast<std::size_t>(T.out);
  for (int s = 0; s < T.order; ++s) {
    rest /= static_cast<std::size_t>(T.slot);
    cur = contract_first(cur, T.out, T.slot, rest, us[static_cast<std::size_t>(s)].data());
  }
  return cur;
}

// Gradient of w . T(u_1..u_order) with respect to slot s.
std::vector<double> slot_gradient(const Multilinear& T, const std::vector<double>& w,
                                  const std::vector<std::vector<double>>& us, int s) {
  const int n = T.slot;
  std::vector<double> g(static_cast<std::size_t>(n), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(T.order), 0);
  for (std::size_t flat = 0; flat < T.data.size(); ++flat) {
    std::size_t r = flat;
    for (int j = T.order - 1; j >= 0; --j) {
      idx[static_cast<std::size_t>(j)] = static_cast<int>(r % static_cast<std::size_t>(n));
      r /= static_cast<std::size_t>(n);
    }
    const int k = static_cast<int>(r);
    double c = T.data[flat] * w[static_cast<std::size_t>(k)];
    if (c == 0.0) continue;
    for (int j = 0; j < T.order; ++j)
      if (j != s) c *= us[static_cast<std::size_t>(j)][static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])];
    g[static_cast<std::size_t>(idx[static_cast<std::size_t>(s)])] += c;
  }
  return g;
}

double out_norm(const std::vector<double>& v, NormKind kind) {
  double r = 0.0;
  if (kind == NormKind::sup) {
    for (double x : v) r = std::max(r, std::abs(x));
  } else {
    for (double x : v) r += x * x;
    r = std::sqrt(r);
  }
  return r;
}

// Alternating maximization over the unit balls of all slots; returns a lower bound of the norm.
double alternating_norm(const Multilinear& T, NormKind kind) {
  const int n = T.slot;
  const int block = T.block > 0 ? T.block : n;
  std::vector<std::vector<double>> starts;
  for (int i = 0; i < n; ++i) {
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    e[static_cast<std::size_t>(i)] = 1.0;
    starts.push_back(e);
  }
  starts.emplace_back(static_cast<std::size_t>(n), 1.0);
  std::uint64_t state = 0x9E3779B97F4A7C15ULL;
  for (int s = 0; s < 6; ++s) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) {
      state = state * 6364136223846793005ULL + 1442695040888963407ULL;
      x = static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
    }
    starts.push_back(v);
  }
  double best = 0.0;
  for (auto start : starts) {
    normalize_blocks(start, block, kind);
    std::vector<std::vector<double>> us(static_cast<std::size_t>(T.order), start);
    double prev = -1.0;
    for (int it = 0; it < 300; ++it) {
      std::vector<double> y = apply_all(T, us);
      double val = out_norm(y, kind);
      best = std::max(best, val);
      if (std::abs(val - prev) <= 1e-15 * std::max(1.0, val)) break;
      prev = val;
      // dual vector of the output norm
      std::vector<double> w(y.size(), 0.0);
      if (kind == NormKind::sup) {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < y.size(); ++k)
          if (std::abs(y[k]) > std::abs(y[arg])) arg = k;
        w[arg] = y[arg] >= 0 ? 1.0 : -1.0;
      } else {
        for (std::size_t k = 0; k < y.size(); ++k) w[k] = val > 0 ? y[k] / val : (k == 0 ? 1.0 : 0.0);
      }
      for (int s = 0; s < T.order; ++s) {
        std::vector<double> g = slot_gradient(T, w, us, s);
        double gn = 0.0;
        for (double x : g) gn += std::abs(x);
        if (gn == 0.0) continue;
        normalize_blocks(g, block, kind);
        us[static_cast<std::size_t>(s)] = g;
      }
    }
  }
  return best;
}

}  // namespace

double product_op_norm(const Mat& A, int block, NormKind kind) {
  if (kind == NormKind::sup || block >= A.cols()) return op_norm(A, kind);
  Multilinear T(static_cast<int>(A.rows()), static_cast<int>(A.cols()), 1, block);
  for (int k = 0; k < A.rows(); ++k)
    for (int i = 0; i < A.cols(); ++i) T.data[static_cast<std::size_t>(k * A.cols() + i)] = A(k, i);
  return alternating_norm(T, kind);
}

double multilinear_norm(const Multilinear& T, NormKind kind) {
  if (T.out == 0) return 0.0;
  if (T.order == 0) return out_norm(T.data, kind);
  if (kind == NormKind::sup) {
    if (T.slot * (T.order - 1) <= 20) return sup_norm_exact(T);
    return alternating_norm(T, kind);
  }
  if (T.order == 1 && (T.block == 0 || T.block >= T.slot)) {
    Mat A(T.out, T.slot);
    for (int k = 0; k < T.out; ++k)
      for (int i = 0; i < T.slot; ++i) A(k, i) = T.data[static_cast<std::size_t>(k * T.slot + i)];
    return op_norm(A, kind);
  }
  return alternating_norm(T, kind);
}

namespace {
std::vector<double> fd_rec(const VecMap& f, const Vec& x, int order, double h, int& out) {
  if (order == 0) {
    Vec v = f(x);
    out = static_cast<int>(v.size());
    return std::vector<double>(v.data(), v.data() + v.size());
  }
  const int n = static_cast<int>(x.size());
  std::vector<double> result;
  for (int i = 0; i < n; ++i) {
    Vec xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    std::vector<double> p = fd_rec(f, xp, order - 1, h, out);
    std::vector<double> m = fd_rec(f, xm, order - 1, h, out);
    if (result.empty()) result.assign(p.size() * static_cast<std::size_t>(n), 0.0);
    for (std::size_t j = 0; j < p.size(); ++j)
      result[j * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = (p[j] - m[j]) / (2.0 * h);
  }
  return result;
}
}  // namespace

Multilinear fd_derivative(const VecMap& f, const Vec& x, int order, double h, int block) {
  int out = 0;
  std::vector<double> data = fd_rec(f, x, order, h, out);
  Multilinear T(out, static_cast<int>(x.size()), order, block);
  T.data = std::move(data);
  return T;
}

Mat fd_jacobian(const VecMap& f, const Vec& x, double h) {
  const int n = static_cast<int>(x.size());
  Mat J;
  for (int j = 0; j < n; ++j) {
    Vec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    Vec col = (f(xp) - f(xm)) / (2.0 * h);
    if (j == 0) J.resize(col.size(), n);
    J.col(j) = col;
  }
  return J;
}

std::vector<Vec> direction_grid(int dim, NormKind kind) {
  std::vector<Vec> dirs;
  for (int i = 0; i < dim; ++i) {
    for (double s : {1.0, -1.0}) {
      Vec e = Vec::Zero(dim);
      e(i) = s;
      dirs.push_back(e);
    }
  }
  if (dim >= 2) {
    for (int mask = 0; mask < (1 << dim); ++mask) {
      Vec v(dim);
      for (int i = 0; i < dim; ++i) v(i) = ((mask >> i) & 1) ? -1.0 : 1.0;
      dirs.push_back(v / norm(v, kind));
    }
  }
  return dirs;
}

}  // namespace atlasdiffeo
