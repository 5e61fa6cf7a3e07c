#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string_view>
#include <vector>

namespace atlasdiffeo {

inline constexpr int kMaxDim = 4;

// Fixed-capacity dynamic vectors and matrices; large enough for (x, y) pairs.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 2 * kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                          2 * kMaxDim, 2 * kMaxDim>;

enum class NormKind { sup, euclidean };

NormKind parse_norm_kind(std::string_view s);
std::string_view to_string(NormKind kind);

double norm(const Vec& v, NormKind kind);

// Operator norm of A : (R^n, |.|) -> (R^m, |.|).
double op_norm(const Mat& A, NormKind kind);

// Operator norm of A : (R^{bn}, max of block norms) -> (R^m, |.|), blocks of size `block`.
double product_op_norm(const Mat& A, int block, NormKind kind);

// A multilinear map (R^n)^order -> R^m stored as data[k][i1]...[i_order] (row-major).
// Input slots carry the max-of-block-norms with blocks of size `block`.
struct Multilinear {
  int out = 0;
  int slot = 0;
  int order = 0;
  int block = 0;
  std::vector<double> data;

  Multilinear() = default;
  Multilinear(int out_dim, int slot_dim, int ord, int block_dim);
  std::size_t index(int k, const int* idx) const;
  double& at(int k, const int* idx) { return data[index(k, idx)]; }
  double at(int k, const int* idx) const { return data[index(k, idx)]; }
};

double multilinear_norm(const Multilinear& T, NormKind kind);

using VecMap = std::function<Vec(const Vec&)>;

// Nested central differences of f at x, step h on every level.
Multilinear fd_derivative(const VecMap& f, const Vec& x, int order, double h, int block);

// Central-difference Jacobian of f at x.
Mat fd_jacobian(const VecMap& f, const Vec& x, double h);

// Unit vectors (in the chart norm) along the 2d axes and the 2^d diagonals.
std::vector<Vec> direction_grid(int dim, NormKind kind);

}  // namespace atlasdiffeo
