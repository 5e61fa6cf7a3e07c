#include "doctest.h"
#include "support.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/expr.hpp"
#include "atlasdiffeo/manifold.hpp"
#include "atlasdiffeo/oracle.hpp"
#include "atlasdiffeo/spec_text.hpp"

#include <cmath>
#include <random>

using namespace atlasdiffeo;
using testing::spec_from;
using testing::vec;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("expression grammar builds the expected tree") {
  const Expr e = Expr::parse("x1 + 2*x2", 2);
  const auto& root = e.root();
  REQUIRE(root.kind == Expr::Kind::add);
  CHECK(root.args[0]->kind == Expr::Kind::variable);
  CHECK(root.args[0]->index == 0);
  const auto& mul = *root.args[1];
  REQUIRE(mul.kind == Expr::Kind::mul);
  CHECK(mul.args[0]->kind == Expr::Kind::number);
  CHECK(mul.args[0]->value == 2.0);
  CHECK(mul.args[1]->kind == Expr::Kind::variable);
  CHECK(mul.args[1]->index == 1);
}

TEST_CASE("expression evaluation") {
  CHECK(std::abs(Expr::parse("sin(pi)", 1).eval(vec({0.0}))) <= 1e-15);
  // e^{-1/4}
  CHECK(Expr::parse("exp(-x1^2)", 1).eval(vec({0.5})) == doctest::Approx(0.7788007831).epsilon(1e-10));
  CHECK(Expr::parse("2^3^2", 1).eval(vec({0.0})) == 512.0);
  CHECK(Expr::parse("-x1^2", 1).eval(vec({3.0})) == -9.0);
  CHECK(Expr::parse("max(x1, 2, -1)", 1).eval(vec({1.0})) == 2.0);
  CHECK(Expr::parse("x1 + o1", 1).eval(vec({1.0}), vec({2.5})) == 3.5);
}

TEST_CASE("expression errors carry their kind") {
  CHECK(code_of([] { Expr::parse("1 +", 1); }) == ErrorCode::SyntaxError);
  CHECK(code_of([] { Expr::parse("x3", 2); }) == ErrorCode::UnknownIdentifier);
  CHECK(code_of([] { Expr::parse("foo(1)", 1); }) == ErrorCode::UnknownIdentifier);
  CHECK(code_of([] { Expr::parse("sin(1, 2)", 1); }) == ErrorCode::ArityError);
  CHECK(code_of([] { Expr::parse("max(1)", 1); }) == ErrorCode::ArityError);
  try {
    Expr::parse("x1 * * 2", 1);
  } catch (const SyntaxError& e) {
    CHECK(e.position() == 5);
  }
}

TEST_CASE("print then parse is structurally the identity") {
  const char* corpus[] = {"x1 + 2*x2",
                          "-x1^2",
                          "(x1 - x2) / (1 + x2^2)",
                          "2^3^2",
                          "(2^3)^2",
                          "-(x1 - -x2)",
                          "sin(pi*x1) + cos(x2)*exp(-x1)",
                          "max(0, 1 - (x1^2 + x2^2)/0.25)^3",
                          "min(x1, x2, 3) - abs(tanh(x1))",
                          "sqrt(1 + x1^2) * log(2 + x2)",
                          "x1 - (x2 - 1)",
                          "x1 / (x2 / 2)",
                          "1e-3*x1 + 2.5E2",
                          "(x1 + o1)^2 - o2"};
  for (const char* src : corpus) {
    const Expr e = Expr::parse(src, 2);
    const Expr again = Expr::parse(e.print(), 2);
    INFO(src << " printed as " << e.print());
    CHECK(e.structurally_equal(again));
    std::mt19937_64 rng(3);
    for (int k = 0; k < 5; ++k) {
      const Vec x = testing::random_in_box(rng, 2, 0.9);
      const Vec o = testing::random_in_box(rng, 2, 0.9);
      CHECK(e.eval(x, o) == again.eval(x, o));
    }
  }
}

TEST_CASE("bundled flat plane spec has a 3x3 lattice that validates") {
  const auto oracle = flat_oracle(2, 1.0, 0.75);
  const ManifoldSpec spec = load_manifold_text(oracle.text);
  CHECK(spec.charts.size() == 9);
  const Certificate cert = validate_adapted(spec);
  CHECK(cert.pass);
  // 0.75 < (1/(2*0.03) - 1) * 0.125
  const double bound = (1.0 / (2.0 * 0.03) - 1.0) * 0.125;
  for (const Check& c : cert.checks)
    if (c.name == "inner_radius_bound") CHECK(c.margin() == doctest::Approx(bound - 0.75));
}

TEST_CASE("spec loader rejects broken atlases") {
  std::string text = testing::single_chart_text(2, 1.0, 0.5, 0.2, 0.1);
  SUBCASE("asymmetric metric") {
    const std::string bad = std::string(text).replace(text.find("[\"1\", \"0\"], [\"0\", \"1\"]"), 22,
                                                      "[\"1\", \"0.1\"], [\"0\", \"1\"]");
    try {
      load_manifold_text(bad);
      FAIL("expected InvariantViolation");
    } catch (const InvariantViolation& e) {
      REQUIRE(!e.violations().empty());
      CHECK(e.violations().front().find("metric asymmetric at sample p") != std::string::npos);
    }
  }
  SUBCASE("missing reverse transition") {
    const std::string two = R"spec(
dim = 1
[[chart]]
id = "a"
dim = 1
domain = { shape = "ball", center = [0], extent = 1, norm = "sup" }
metric = [["1"]]
r = 0.5
R = 0.2
epsilon = 0.1
[[chart]]
id = "b"
dim = 1
domain = { shape = "ball", center = [0], extent = 1, norm = "sup" }
metric = [["1"]]
r = 0.5
R = 0.2
epsilon = 0.1
[[transition]]
from = "a"
to = "b"
map = ["x1 - 1"]
overlap = "1 - abs(x1 - 1)"
)spec";
    CHECK(code_of([&] { load_manifold_text(two); }) == ErrorCode::MissingTransition);
  }
  SUBCASE("syntax errors surface as parse errors") {
    CHECK(code_of([] { load_manifold_text("dim = 1\n[[chart]\n"); }) == ErrorCode::ParseError);
  }
}

TEST_CASE("cylinder spec has periodic transitions and validates") {
  const auto cyl = cylinder_oracle(3, 3);
  const ManifoldSpec& spec = *cyl.spec;
  CHECK(spec.charts.size() == 9);
  CHECK(validate_adapted(spec).pass);
  // Hop through the three angular charts, advancing by one chart spacing each time; after a full turn the
  // point is back at its start in the first chart.
  const double spacing = 2.0 * 3.14159265358979323846 / 3.0;
  const std::size_t a = 3;
  const Vec p = vec({0.1, 1.0});
  std::size_t cur = a;
  Vec q = p;
  for (int step = 0; step < 3; ++step) {
    const std::size_t next = 3 + (cur - 3 + 1) % 3;
    auto moved = spec.map_point(cur, q, next);
    REQUIRE(moved.has_value());
    CHECK((*moved)(1) == doctest::Approx(1.0 - spacing));
    q = *moved;
    q(1) += spacing;
    cur = next;
  }
  CHECK(cur == a);
  CHECK(testing::sup_dist(q, p) <= 1e-12);
}

TEST_CASE("validate_adapted clauses") {
  SUBCASE("epsilon one half fails") {
    const auto s = spec_from(testing::single_chart_text(1, 1.0, 0.5, 0.2, 0.5));
    const Certificate c = validate_adapted(*s);
    CHECK_FALSE(c.pass);
    bool named = false;
    for (const Check& k : c.checks)
      if (!k.holds && (k.name == "epsilon_below_half" || k.name == "inner_radius_bound")) named = true;
    CHECK(named);
  }
  SUBCASE("single chart passes") {
    const auto s = spec_from(testing::single_chart_text(2, 1.0, 0.5, 0.2, 0.1));
    CHECK(validate_adapted(*s).pass);
    const NeighborReport n = locally_finite_report(*s);
    CHECK(n.neighbor_count.at("U") == 0);
    CHECK(n.unique_point);
  }
  SUBCASE("shrinking r never breaks the inner radius clause") {
    for (double eps : {0.05, 0.1, 0.2, 0.3}) {
      bool previous = false;
      for (double r = 0.7; r > 0.05; r -= 0.05) {
        const auto s = spec_from(testing::single_chart_text(1, 1.0, r, 0.2, eps));
        bool holds = true;
        for (const Check& k : validate_adapted(*s).checks)
          if (k.name == "inner_radius_bound") holds = k.holds;
        if (previous) CHECK(holds);
        previous = previous || holds;
      }
    }
  }
}

TEST_CASE("neighbor counts of lattice atlases") {
  SUBCASE("1D lattice k in [-3, 3]") {
    FlatOptions o;
    o.extent = 3;
    const auto m = flat_oracle(1, 1.0, 0.75, o);
    const NeighborReport rep = locally_finite_report(*m.spec);
    for (int k = -3; k <= 3; ++k) {
      int expected = 0;
      for (int j = -3; j <= 3; ++j)
        if (j != k && std::abs(j - k) < 2) ++expected;
      CHECK(rep.neighbor_count.at("k" + std::to_string(k)) == expected);
    }
    CHECK(rep.neighbor_count.at("k0") == 2);
  }
  SUBCASE("2D lattice interior chart") {
    const auto m = flat_oracle(2, 1.0, 0.75);
    const NeighborReport rep = locally_finite_report(*m.spec);
    CHECK(rep.neighbor_count.at("k0_0") == 8);
    CHECK(rep.neighbor_count.at("k-1_-1") == 3);
  }
}

TEST_CASE("transitions are coherent and satisfy the cocycle law") {
  for (const auto& m : {flat_oracle(2, 1.0, 0.75), cylinder_oracle(3, 3)}) {
    const ManifoldSpec& spec = *m.spec;
    for (std::size_t x = 0; x < spec.charts.size(); ++x) {
      const Lattice L = chart_lattice(spec.charts[x], 9);
      for (std::size_t k = 0; k < L.size(); ++k) {
        const Vec p = L.point(k);
        for (std::size_t y = 0; y < spec.charts.size(); ++y) {
          auto py = spec.map_point(x, p, y);
          if (!py || y == x) continue;
          auto back = spec.map_point(y, *py, x);
          REQUIRE(back.has_value());
          CHECK(testing::sup_dist(*back, p) <= 1e-8);
          for (std::size_t z = 0; z < spec.charts.size(); ++z) {
            if (z == x || z == y) continue;
            auto via = spec.map_point(y, *py, z);
            auto direct = spec.map_point(x, p, z);
            if (via && direct) CHECK(testing::sup_dist(*via, *direct) <= 1e-8);
          }
        }
      }
    }
  }
}

TEST_CASE("spec text parser and content hash") {
  const auto j = parse_spec_text("a = 1\nb.c = \"x\"  # note\n[t]\nv = [1, [2, 3]]\n[[arr]]\nk = { p = true }\n[[arr]]\nk = 2.5\n");
  CHECK(j.at("a") == 1);
  CHECK(j.at("b").at("c") == "x");
  CHECK(j.at("t").at("v").at(1).at(0) == 2);
  CHECK(j.at("arr").size() == 2);
  CHECK(j.at("arr").at(0).at("k").at("p") == true);
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
}

TEST_CASE("domain geometry") {
  const auto s = spec_from(testing::single_chart_text(2, 1.5, 0.5, 0.2, 0.1));
  const Chart& c = s->charts[0];
  CHECK(c.domain.inradius() == 1.5);
  CHECK(c.domain.contains(vec({1.49, -1.49})));
  CHECK_FALSE(c.domain.contains(vec({1.5, 0.0})));
  const auto e = spec_from(testing::single_chart_text(2, 1.0, 0.5, 0.2, 0.1, "1", "euclidean"));
  CHECK(e->charts[0].domain.contains(vec({0.7, 0.7})));
  CHECK_FALSE(e->charts[0].domain.contains(vec({0.71, 0.71})));
}
