#pragma once

#include "atlasdiffeo/linalg.hpp"
#include "atlasdiffeo/manifold.hpp"

#include <memory>
#include <random>
#include <string>

namespace testing {

using atlasdiffeo::Mat;
using atlasdiffeo::Vec;

inline std::shared_ptr<const atlasdiffeo::ManifoldSpec> spec_from(const std::string& text) {
  return std::make_shared<const atlasdiffeo::ManifoldSpec>(atlasdiffeo::load_manifold_text(text));
}

inline Vec vec(std::initializer_list<double> values) {
  Vec v(static_cast<int>(values.size()));
  int i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

inline double sup_dist(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

// Uniform point of the closed sup ball of radius r around 0.
inline Vec random_in_box(std::mt19937_64& rng, int d, double r) {
  std::uniform_real_distribution<double> u(-r, r);
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = u(rng);
  return v;
}

// One flat chart Ball(0, extent) (sup norm) with metric c Id.
inline std::string single_chart_text(int d, double extent, double r, double R, double eps,
                                     const std::string& metric_diag = "1", const std::string& norm = "sup") {
  std::string zeros, metric = "[";
  for (int i = 0; i < d; ++i) zeros += (i ? ", 0" : "0");
  for (int i = 0; i < d; ++i) {
    metric += i ? ", [" : "[";
    for (int j = 0; j < d; ++j) metric += std::string(j ? ", " : "") + "\"" + (i == j ? metric_diag : "0") + "\"";
    metric += "]";
  }
  metric += "]";
  return "name = \"single\"\ndim = " + std::to_string(d) + "\ngrid_resolution = 24\n\n[[chart]]\nid = \"U\"\ndim = " +
         std::to_string(d) + "\ndomain = { shape = \"ball\", center = [" + zeros + "], extent = " + std::to_string(extent) +
         ", norm = \"" + norm + "\" }\nmetric = " + metric + "\nr = " + std::to_string(r) + "\nR = " + std::to_string(R) +
         "\nepsilon = " + std::to_string(eps) + "\n\n[[weight]]\nname = \"one\"\nexpr = \"1\"\n";
}

}  // namespace testing
