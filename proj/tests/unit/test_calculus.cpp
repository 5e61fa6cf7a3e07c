#include "doctest.h"
#include "support.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/field.hpp"
#include "atlasdiffeo/oracle.hpp"
#include "atlasdiffeo/seminorm.hpp"
#include "atlasdiffeo/weights.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace atlasdiffeo;
using testing::spec_from;
using testing::vec;

namespace {

SeminormOptions at_grid(int n) {
  SeminormOptions o;
  o.grid = n;
  return o;
}

// Two charts on Ball(0, 1) (euclidean) related by a rotation of `angle`; U in group A, V in group B.
std::string rotation_spec(double angle) {
  auto exact = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  const std::string c = exact(std::cos(angle)), s = exact(std::sin(angle));
  auto chart = [](const std::string& id, const std::string& atlas) {
    return "[[chart]]\nid = \"" + id +
           "\"\ndim = 2\ndomain = { shape = \"ball\", center = [0, 0], extent = 1, norm = \"euclidean\" }\n"
           "metric = [[\"1\", \"0\"], [\"0\", \"1\"]]\nr = 0.5\nR = 0.2\nepsilon = 0.1\natlas = \"" +
           atlas + "\"\n\n";
  };
  auto rot = [](const std::string& from, const std::string& to, const std::string& cs, const std::string& sn) {
    return "[[transition]]\nfrom = \"" + from + "\"\nto = \"" + to + "\"\nmap = [\"" + cs + "*x1 - " + sn + "*x2\", \"" +
           sn + "*x1 + " + cs + "*x2\"]\noverlap = \"1 - sqrt(x1^2 + x2^2)\"\n\n";
  };
  return "name = \"rotation\"\ndim = 2\ngrid_resolution = 21\n\n" + chart("U", "A") + chart("V", "B") +
         rot("U", "V", c, s) + rot("V", "U", c, "-" + s) + "[[weight]]\nname = \"one\"\nexpr = \"1\"\n";
}

}  // namespace

TEST_CASE("seminorm examples") {
  const auto s = spec_from(testing::single_chart_text(1, 4.0, 2.0, 0.5, 0.05));
  const Weight one = Weight::one(*s);
  SUBCASE("sup |sin| = 1") {
    const auto X = LocalizedField::global(*s, "sin", {"sin(x1)"});
    const SeminormValue v = seminorm(X, one, 0, {}, at_grid(4001));
    CHECK(std::abs(v.value - 1.0) <= 1e-4);
    CHECK(std::abs(std::abs(v.argmax(0)) - M_PI / 2.0) <= 2e-3);
  }
  SUBCASE("sup |x exp(-x^2)|") {
    const auto X = LocalizedField::global(*s, "gauss", {"exp(-x1^2)"});
    const Weight f = Weight::global(*s, "x", "x1");
    double brute = 0.0;
    for (int i = 0; i <= 1000000; ++i) {
      const double x = -4.0 + 8.0 * i / 1000000.0;
      brute = std::max(brute, std::abs(x * std::exp(-x * x)));
    }
    CHECK(brute == doctest::Approx(1.0 / std::sqrt(2.0 * std::exp(1.0))).epsilon(1e-10));
    CHECK(std::abs(seminorm(X, f, 0, {}, at_grid(4001)).value - brute) <= 1e-6);
  }
  SUBCASE("zero field") {
    const auto Z = LocalizedField::zero(*s);
    const Weight f = Weight::global(*s, "x", "x1");
    for (int ell = 0; ell <= kMaxSeminormOrder; ++ell) {
      CHECK(seminorm(Z, one, ell).value == 0.0);
      CHECK(seminorm(Z, f, ell).value == 0.0);
    }
    CHECK_THROWS_AS(seminorm(Z, one, 4), Error);
  }
}

TEST_CASE("membership") {
  SUBCASE("compactly supported bump passes for polynomial weights") {
    const auto m = flat_oracle(2, 1.0, 0.75);
    const auto X = LocalizedField::from_spec(*m.spec, "bump");
    WeightSet W;
    W.weights = {Weight::from_spec(*m.spec, "one"), Weight::from_spec(*m.spec, "poly2")};
    const Certificate c = membership(X, W, 2);
    CHECK(c.pass);
  }
  SUBCASE("constant field with weight x grows with the chart count") {
    SeminormOptions o;
    o.cap = 50.0;
    double previous = 0.0;
    for (int extent : {2, 10, 30, 60}) {
      FlatOptions fo;
      fo.extent = extent;
      const auto m = flat_oracle(1, 1.0, 0.75, fo);
      const auto X = LocalizedField::global(*m.spec, "const", {"1"});
      WeightSet W;
      W.weights = {Weight::global(*m.spec, "x", "x1 + o1")};
      const SeminormValue v = seminorm(X, W.weights[0], 0, {}, o);
      CHECK(v.value > previous);
      CHECK(v.value >= std::min<double>(extent, o.cap));
      CHECK(v.exceeded == !(extent + 1.0 < o.cap));
      previous = v.value;
      CHECK(membership(X, W, 0, {}, o).pass == (extent + 1.0 < o.cap));
    }
  }
  SUBCASE("zero field passes with all seminorms zero") {
    const auto m = cylinder_oracle(3, 3);
    WeightSet W;
    for (int n = 0; n <= 4; ++n) W.weights.push_back(Weight::from_spec(*m.spec, "pow" + std::to_string(n)));
    const Certificate c = membership(LocalizedField::zero(*m.spec), W, 2);
    CHECK(c.pass);
    for (const Check& k : c.checks) CHECK(k.lhs == 0.0);
  }
}

TEST_CASE("subordinate restriction") {
  const auto m = flat_oracle(2, 1.0, 0.75);
  const ManifoldSpec& spec = *m.spec;
  const auto X = LocalizedField::global(spec, "wave", {"sin(3*(x1 + o1))*cos(x2 + o2)", "0.5*(x1 + o1)*(x2 + o2)"});
  std::vector<std::pair<Weight, int>> req;
  for (const char* w : {"one", "poly2"})
    for (int ell = 0; ell <= 2; ++ell) req.emplace_back(Weight::from_spec(spec, w), ell);
  const AtlasSelector full = AtlasSelector::parse("A"), inner = AtlasSelector::parse("C");
  SUBCASE("r1 balls to r2 balls never increases a seminorm") {
    const RestrictResult r = subordinate_restrict(X, full, inner, req);
    CHECK(r.certificate.pass);
    for (const auto& [f, ell] : req)
      CHECK(seminorm(r.field, f, ell, inner).value <= seminorm(X, f, ell, full).value + 1e-12);
  }
  SUBCASE("sub-atlas equal to the atlas") {
    const RestrictResult r = subordinate_restrict(X, full, full, req);
    CHECK(r.certificate.pass);
    for (const auto& [f, ell] : req) CHECK(seminorm(r.field, f, ell, full).value == seminorm(X, f, ell, full).value);
  }
  SUBCASE("field supported outside the sub-atlas") {
    const auto s = spec_from(testing::single_chart_text(1, 1.0, 0.5, 0.2, 0.1));
    const auto Y = LocalizedField::global(*s, "outer", {"max(0, abs(x1) - 0.6)^4"});
    std::vector<std::pair<Weight, int>> r1;
    for (int ell = 0; ell <= 2; ++ell) r1.emplace_back(Weight::one(*s), ell);
    const RestrictResult r = subordinate_restrict(Y, full, inner, r1);
    CHECK(r.certificate.pass);
    for (int ell = 0; ell <= 2; ++ell) CHECK(seminorm(r.field, Weight::one(*s), ell, inner).value == 0.0);
    CHECK(seminorm(Y, Weight::one(*s), 0, full).value > 0.0);
  }
  SUBCASE("a different chart group is not subordinate") {
    FlatOptions fo;
    fo.shifted = true;
    const auto ms = flat_oracle(2, 1.0, 0.75, fo);
    const auto Z = LocalizedField::zero(*ms.spec);
    CHECK_THROWS_AS(subordinate_restrict(Z, full, AtlasSelector::parse("S:inner"), {}), Error);
  }
}

TEST_CASE("seminorm over an atlas and over its intersection with another") {
  FlatOptions fo;
  fo.shifted = true;
  const auto m = flat_oracle(2, 1.0, 0.75, fo);
  const ManifoldSpec& spec = *m.spec;
  const Weight one = Weight::one(spec);
  const auto X = LocalizedField::global(spec, "wave", {"sin(x1 + o1)*cos(x2 + o2)", "0"});
  const AtlasSelector a = AtlasSelector::parse("A"), shifted = AtlasSelector::parse("S:domain");
  SUBCASE("B = A") {
    const IntersectResult r = intersect_atlas_seminorm(X, a, a, one, 0);
    CHECK(r.same_samples);
    CHECK(r.over_a.value == r.over_intersection.value);
  }
  SUBCASE("shifted lattice") {
    const int grid = 16;
    const IntersectResult r = intersect_atlas_seminorm(X, a, shifted, one, 0, at_grid(grid));
    // Both are sups of the same 1-Lipschitz (sup norm) quantity over sample sets within one spacing of each other.
    const double spacing = 2.0 / (grid - 1);
    CHECK(r.difference <= 2.0 * spacing);
    CHECK(std::abs(r.over_a.value - seminorm(X, one, 0, shifted, at_grid(grid)).value) <= 2.0 * spacing);
  }
  SUBCASE("zero field") {
    const IntersectResult r = intersect_atlas_seminorm(LocalizedField::zero(spec), a, shifted, one, 1);
    CHECK(r.over_a.value == 0.0);
    CHECK(r.over_intersection.value == 0.0);
  }
}

TEST_CASE("chart change transfer") {
  SUBCASE("identity transitions reproduce the localizations") {
    FlatOptions fo;
    fo.shifted = true;
    const auto m = flat_oracle(2, 1.0, 0.75, fo);
    const ManifoldSpec& spec = *m.spec;
    const auto X = LocalizedField::global(spec, "wave", {"sin(x1 + o1)", "(x1 + o1)*(x2 + o2)"});
    WeightSet W;
    W.weights = {Weight::one(spec), Weight::from_spec(spec, "poly2")};
    const auto a = AtlasSelector::parse("A"), b = AtlasSelector::parse("S:domain");
    const TransferResult t = chart_change_transfer(X, a, b, W, 1);
    CHECK(t.certificate.pass);
    double worst = 0.0;
    for (const auto& cs : atlas_samples(spec, a, 12))
      for (const Vec& q : cs.points) worst = std::max(worst, testing::sup_dist(t.transferred(cs.chart, q), X(cs.chart, q)));
    CHECK(worst <= 1e-9);
    for (const Weight& f : W.weights)
      for (int ell = 0; ell <= 1; ++ell)
        CHECK(std::abs(seminorm(t.transferred, f, ell, a).value - seminorm(X, f, ell, a).value) <= 1e-6);
  }
  SUBCASE("rotation preserves the euclidean sup") {
    const auto s = spec_from(rotation_spec(0.5));
    const std::size_t v = s->chart_index("V");
    const LocalizedField X(*s, "radial", [v](std::size_t chart, const Vec& p) -> Vec {
      if (chart != v) return Vec::Zero(2);
      const double g = std::exp(-p.squaredNorm());
      return vec({0.6 * g, 0.8 * g});
    });
    WeightSet W;
    W.weights = {Weight::one(*s)};
    const auto a = AtlasSelector::parse("A"), b = AtlasSelector::parse("B:domain");
    const TransferResult t = chart_change_transfer(X, a, b, W, 0);
    CHECK(t.certificate.pass);
    const double over_a = seminorm(t.transferred, W.weights[0], 0, a).value;
    const double over_b = seminorm(X, W.weights[0], 0, b).value;
    CHECK(over_a == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(over_b == doctest::Approx(1.0).epsilon(1e-9));
    // Pointwise the transferred vector is the rotated one, of the same length.
    for (const auto& cs : atlas_samples(*s, a, 9))
      for (const Vec& q : cs.points)
        CHECK(t.transferred(cs.chart, q).norm() == doctest::Approx(std::exp(-q.squaredNorm())).epsilon(1e-8));
  }
  SUBCASE("zero field") {
    const auto m = cylinder_oracle(3, 3);
    WeightSet W;
    W.weights = {Weight::one(*m.spec)};
    CHECK(chart_change_transfer(LocalizedField::zero(*m.spec), AtlasSelector::parse("A:inner"), AtlasSelector::parse("A:padded"),
                                W, 1)
              .certificate.pass);
  }
}

TEST_CASE("seminorms are absolutely homogeneous and subadditive") {
  const auto m = cylinder_oracle(3, 3);
  const ManifoldSpec& spec = *m.spec;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto random_expr = [&] {
    return std::to_string(u(rng)) + "*sin(" + std::to_string(2.0 * u(rng)) + "*(x1 + o1) + x2 + o2) + " +
           std::to_string(u(rng)) + "*exp(-(x1 + o1)^2)";
  };
  const Weight f = Weight::from_spec(spec, "pow2");
  for (int trial = 0; trial < 4; ++trial) {
    const auto X = LocalizedField::global(spec, "X", {random_expr(), random_expr()});
    const auto Y = LocalizedField::global(spec, "Y", {random_expr(), random_expr()});
    const auto tX = from_tabulation(spec, std::make_shared<Tabulation>(tabulate(X, 17)));
    const auto tY = from_tabulation(spec, std::make_shared<Tabulation>(tabulate(Y, 17)));
    for (int ell = 0; ell <= tX.order_available(); ++ell) {
      const SeminormOptions o = at_grid(12);
      const double sx = seminorm(tX, f, ell, {}, o).value, sy = seminorm(tY, f, ell, {}, o).value;
      CHECK(std::abs(seminorm(tX.scaled(2.0), f, ell, {}, o).value - 2.0 * sx) <= 1e-9 * std::max(1.0, sx));
      CHECK(std::abs(seminorm(tX.scaled(-0.5), f, ell, {}, o).value - 0.5 * sx) <= 1e-9 * std::max(1.0, sx));
      CHECK(seminorm(tX.plus(tY), f, ell, {}, o).value <= sx + sy + 1e-9);
    }
  }
}

TEST_CASE("order ell + 1 seminorm equals the order ell seminorm of the derivative") {
  const auto s = spec_from(testing::single_chart_text(1, 2.0, 1.0, 0.4, 0.1));
  const Weight f = Weight::global(*s, "w", "1 + x1^2");
  const auto X = LocalizedField::global(*s, "X", {"sin(2*x1) + 0.3*x1^3"});
  const auto DX = LocalizedField::global(*s, "DX", {"2*cos(2*x1) + 0.9*x1^2"});
  for (int ell = 0; ell <= 1; ++ell) {
    const double lhs = seminorm(X, f, ell + 1, {}, at_grid(201)).value;
    const double rhs = seminorm(DX, f, ell, {}, at_grid(201)).value;
    CHECK(std::abs(lhs - rhs) <= 1e-5 * std::max(1.0, rhs));
  }
}

TEST_CASE("unit weight against a weight bounded below by max(1/d, 1)") {
  const auto m = flat_oracle(2, 1.0, 0.75);
  const ManifoldSpec& spec = *m.spec;
  const auto X = LocalizedField::global(spec, "X", {"cos(x1 + o1) + x2", "sin(2*(x2 + o2))"});
  for (double d : {0.25, 0.5, 2.0}) {
    const double floor = std::max(1.0 / d, 1.0);
    const Weight f = Weight::global(spec, "f", std::to_string(floor) + " + (x1 + o1)^2");
    for (std::size_t c = 0; c < spec.charts.size(); ++c) {
      SeminormOptions o;
      o.only_chart = c;
      CHECK(seminorm(X, Weight::one(spec), 0, {}, o).value <= std::min(d, 1.0) * seminorm(X, f, 0, {}, o).value + 1e-12);
    }
  }
}

TEST_CASE("global expressions are compatible on overlaps") {
  const auto flat = flat_oracle(2, 1.0, 0.75);
  const auto cyl = cylinder_oracle(3, 3);
  CHECK(compatibility_residual(LocalizedField::global(*flat.spec, "g", {"sin(x1 + o1)", "(x2 + o2)^2"}), 12).residual <=
        1e-6);
  CHECK(compatibility_residual(LocalizedField::from_spec(*flat.spec, "bump"), 12).residual <= 1e-6);
  for (const char* name : {"decay", "theta_const", "bump"})
    CHECK(compatibility_residual(LocalizedField::from_spec(*cyl.spec, name), 12).residual <= 1e-6);
  // A field that ignores the chart offsets is not a global field.
  CHECK(compatibility_residual(LocalizedField::global(*flat.spec, "local", {"x1", "0"}), 12).residual > 0.5);
}

TEST_CASE("tabulation round trip through a file") {
  const auto m = cylinder_oracle(3, 3);
  const auto X = LocalizedField::from_spec(*m.spec, "decay");
  const Tabulation t = tabulate(X, 9);
  const std::string path = "tabulation_roundtrip.bin";
  write_tabulation(path, t);
  const Tabulation back = read_tabulation(path);
  std::remove(path.c_str());
  CHECK(back.chart_ids == t.chart_ids);
  CHECK(back.values == t.values);
  const auto Y = from_tabulation(*m.spec, std::make_shared<Tabulation>(back));
  for (std::size_t c = 0; c < m.spec->charts.size(); ++c) {
    const Lattice& L = t.lattices[c];
    for (std::size_t k = 0; k < L.size(); k += 7) CHECK(testing::sup_dist(Y(c, L.point(k)), X(c, L.point(k))) <= 1e-12);
  }
}
