#include "cli_runner.hpp"
#include "estimate_suite.hpp"
#include "group_suite.hpp"
#include "support.hpp"

#include "atlasdiffeo/constants.hpp"
#include "atlasdiffeo/diffeo.hpp"
#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/geodesic.hpp"
#include "atlasdiffeo/oracle.hpp"
#include "atlasdiffeo/pipeline.hpp"
#include "atlasdiffeo/qift.hpp"
#include "atlasdiffeo/sampling.hpp"
#include "atlasdiffeo/seminorm.hpp"
#include "atlasdiffeo/weights.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace atlasdiffeo;
using testing::sup_dist;
using testing::vec;

namespace {

const std::string kCli = ATLASDIFFEO_CLI;
const std::string kData = ATLASDIFFEO_DATA;

struct Outcome {
  bool pass = true;
  std::ostringstream note;

  // Records a failed expectation; the first few are kept in the note.
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    if (pass || failures < 4) note << (note.tellp() > 0 ? "; " : "") << "FAILED " << what;
    pass = false;
    ++failures;
  }
  int failures = 0;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Region inner_region(const Chart& c) { return Region{c.domain.center, c.r, c.norm()}; }

std::vector<Region> inner_regions(const ManifoldSpec& spec) {
  std::vector<Region> out;
  for (const Chart& c : spec.charts) out.push_back(inner_region(c));
  return out;
}

struct GroupFixture {
  OracleManifold m;
  GroupSetup setup;
  bool periodic = false;

  GroupFixture(OracleManifold oracle, bool periodic_last)
      : m(std::move(oracle)), setup(prepare_group(*m.spec, PipelineConfig{})), periodic(periodic_last) {}
  const ManifoldSpec& spec() const { return *m.spec; }
};

GroupFixture& flat1() {
  static GroupFixture f(flat_oracle(1, 1.0, 0.75), false);
  return f;
}
GroupFixture& flat2() {
  static GroupFixture f(flat_oracle(2, 1.0, 0.75), false);
  return f;
}
GroupFixture& cylinder() {
  static GroupFixture f(cylinder_oracle(2, 3), true);
  return f;
}

// 1. Flat comparison at grid 64.
Outcome flat_comparison() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  ConstantsOptions co;
  co.grid = 64;
  co.rel_tol = 1e-10;
  std::mt19937_64 rng(1);
  double worst_exp = 0.0, worst_log = 0.0;
  for (int d : {1, 2}) {
    const auto m = flat_oracle(d, 1.0, 0.75);
    const Chart& chart = m.spec->charts[0];
    const ChartGeometry geo(chart);
    for (int k = 0; k < 200; ++k) {
      const Vec x = testing::random_in_box(rng, d, 0.75);
      const Vec y = testing::random_in_box(rng, d, 0.25);
      worst_exp = std::max(worst_exp, sup_dist(geo.exp(x, y), x + y));
      worst_log = std::max(worst_log, sup_dist(geo.log(x, x + y, 4.0), y));
    }
    const ConstantsEstimator est(geo, co);
    const Region K = inner_region(chart);
    const double cell = 2.0 * K.radius / (co.grid - 1);
    const double ge = est.grenz_exp(K);
    const double gl = est.grenz_log(K);
    const ConstantsReport rep = est.report(K, 0.1, 0.5);
    const std::string tag = "d=" + std::to_string(d) + " ";
    o.expect(std::abs(ge - 0.25) <= cell, tag + "grenzExp " + fmt(ge));
    o.expect(std::abs(gl - 0.25 / std::sqrt(d)) <= cell, tag + "grenzLog " + fmt(gl));
    o.expect(std::abs(rep.a - 1.0) <= 1e-6, tag + "a " + fmt(rep.a));
    o.expect(std::abs(rep.b) <= 1e-6, tag + "b " + fmt(rep.b));
    o.note << (o.note.tellp() > 0 ? ", " : "") << tag << "grenzExp " << fmt(ge) << " grenzLog " << fmt(gl) << " a "
           << fmt(rep.a) << " b " << fmt(rep.b);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.expect(worst_exp <= 1e-10, "exp error " + fmt(worst_exp));
  o.expect(worst_log <= 1e-10, "log error " + fmt(worst_log));
  o.expect(secs < 30.0, "runtime " + fmt(secs) + " s");
  o.note << ", exp err " << fmt(worst_exp) << ", log err " << fmt(worst_log) << ", " << fmt(secs) << " s";
  return o;
}

// 2. D exp(x, 0)(v, w) = v + w.
Outcome zero_section() {
  Outcome o;
  std::vector<OracleManifold> fixtures{flat_oracle(1, 1.0, 0.75), flat_oracle(2, 1.0, 0.75), cylinder_oracle(3, 3),
                                       half_plane_oracle(1.0, 2.0, 8)};
  std::vector<std::vector<ChartGeometry>> geos;
  for (const auto& m : fixtures) geos.push_back(chart_geometries(*m.spec));
  std::mt19937_64 rng(2);
  double worst = 0.0;
  const int samples = 1000;
  for (int s = 0; s < samples; ++s) {
    const std::size_t f = static_cast<std::size_t>(s) % fixtures.size();
    const ManifoldSpec& spec = *fixtures[f].spec;
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, spec.charts.size() - 1)(rng);
    const Chart& chart = spec.charts[k];
    const int d = chart.dim;
    const Vec x = chart.domain.center + testing::random_in_box(rng, d, 0.5 * chart.domain.inradius());
    const int i = std::uniform_int_distribution<int>(0, d - 1)(rng);
    const int j = std::uniform_int_distribution<int>(0, d - 1)(rng);
    const Mat J = geos[f][k].exp_jacobian(x, Vec::Zero(d));
    const Vec v = Vec::Unit(d, i), w = Vec::Unit(d, j);
    worst = std::max(worst, norm(J.leftCols(d) * v + J.rightCols(d) * w - (v + w), chart.norm()));
  }
  o.expect(worst <= 1e-6, "residual " + fmt(worst));
  o.note << samples << " samples over 4 fixtures, worst residual " << fmt(worst);
  return o;
}

// 3. exp/log C0 and C1 estimates on random fields.
Outcome estimate_suite() {
  Outcome o;
  struct Case {
    std::string name;
    OracleManifold m;
    std::size_t chart;
    Region K;
    double delta;
    int grid;
  };
  std::vector<Case> cases;
  {
    auto f1 = flat_oracle(1, 1.0, 0.75);
    auto f2 = flat_oracle(2, 1.0, 0.75);
    auto cy = cylinder_oracle(3, 3);
    auto hp = half_plane_oracle(1.0, 2.0, 8);
    cases.push_back({"flat1", f1, 1, inner_region(f1.spec->charts[1]), 0.1, 16});
    cases.push_back({"flat2", f2, 4, inner_region(f2.spec->charts[4]), 0.1, 12});
    cases.push_back({"cylinder", cy, 0, inner_region(cy.spec->charts[0]), 0.1, 8});
    cases.push_back({"half-plane", hp, 0, Region{Vec::Zero(2), 0.25, NormKind::sup}, 0.05, 5});
  }
  std::uint64_t seed = 30;
  for (const Case& c : cases) {
    const ChartGeometry geo(c.m.spec->charts[c.chart]);
    ConstantsOptions co;
    co.grid = c.grid;
    const ConstantsReport rep = ConstantsEstimator(geo, co).report(c.K, c.delta, 0.5);
    const auto ex = testing::run_estimate_suite(geo, rep, 100, 5, seed++);
    o.expect(ex.exp_c0 <= 1e-6, c.name + " exp C0 excess " + fmt(ex.exp_c0));
    o.expect(ex.exp_c1 <= 1e-6, c.name + " exp C1 excess " + fmt(ex.exp_c1));
    o.expect(ex.log_c0 <= 1e-6, c.name + " log C0 excess " + fmt(ex.log_c0));
    o.expect(ex.log_c1 <= 1e-6, c.name + " log C1 excess " + fmt(ex.log_c1));
    o.note << (o.note.tellp() > 0 ? ", " : "") << c.name << " worst excess " << fmt(ex.worst());
  }
  return o;
}

// 4. Quantitative inverse function theorem on perturbed linear maps, checked by an independent iteration.
struct PerturbedLinear {
  Mat A, B;
  Vec c;
  double eta = 0.0;

  Vec operator()(const Vec& y) const { return A * y + eta * (B * y + c).array().sin().matrix(); }
  Mat jacobian(const Vec& y) const {
    const Vec cs = (B * y + c).array().cos().matrix();
    return A + eta * cs.asDiagonal() * B;
  }
};

// Preimage of z by the simplified Newton iteration y <- y - A0^-1 (g(y) - z) from the anchor,
// then full Newton steps; empty when it does not settle.
std::optional<Vec> solve_preimage(const PerturbedLinear& g, const Mat& A0inv, const Vec& anchor, const Vec& z) {
  Vec y = anchor;
  for (int it = 0; it < 20000; ++it) {
    const Vec step = A0inv * (g(y) - z);
    y -= step;
    if (step.cwiseAbs().maxCoeff() <= 1e-15 * std::max(1.0, y.cwiseAbs().maxCoeff())) break;
  }
  for (int it = 0; it < 5; ++it) y -= g.jacobian(y).lu().solve(g(y) - z);
  if (!((g(y) - z).cwiseAbs().maxCoeff() <= 1e-11)) return std::nullopt;
  return y;
}

Outcome qift() {
  Outcome o;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int passed = 0, attempts = 0, targets = 0, pairs = 0;
  double worst_lip = -std::numeric_limits<double>::infinity();
  QiftOptions qo;
  qo.injectivity_pairs = 1000;
  qo.lipschitz_pairs = 1000;
  while (passed < 20 && attempts < 400) {
    ++attempts;
    const int d = 1 + attempts % 3;
    PerturbedLinear g;
    g.A = Mat::Identity(d, d);
    g.B = Mat(d, d);
    g.c = Vec(d);
    for (int i = 0; i < d; ++i) {
      g.c(i) = 3.0 * u(rng);
      for (int j = 0; j < d; ++j) {
        g.A(i, j) += 0.4 * u(rng);
        g.B(i, j) = 2.0 * u(rng);
      }
    }
    g.eta = 0.15 * std::abs(u(rng));
    const Vec center = testing::random_in_box(rng, d, 1.0);
    Vec hw(d);
    for (int i = 0; i < d; ++i) hw(i) = 0.5 + 0.5 * std::abs(u(rng));
    const Vec x = center;
    const Vec anchor = center + 0.4 * hw.cwiseProduct(testing::random_in_box(rng, d, 1.0));
    Certificate cert;
    try {
      cert = certify_qift([&g](const Vec& y) { return g(y); }, center, hw, x, anchor, NormKind::sup, qo);
    } catch (const Error&) {
      continue;
    }
    bool below = false;
    for (const Check& ch : cert.checks)
      if (ch.name == "delta_below_inverse_norm") below = ch.holds;
    if (!below) continue;
    ++passed;
    o.expect(cert.pass, "certificate " + cert.first_failure());

    const double r = cert.details.at("r").get<double>();
    const double rp = cert.details.at("r_prime").get<double>();
    const double lip = cert.details.at("lipschitz").get<double>();
    const Mat A0inv = g.jacobian(x).inverse();
    const Vec gx = g(anchor);
    auto target = [&]() { return Vec(gx + testing::random_in_box(rng, d, rp * (1.0 - 1e-9))); };
    auto in_u = [&](const Vec& y) { return ((y - center).cwiseAbs().array() < hw.array()).all(); };
    for (int k = 0; k < 100; ++k) {
      const Vec z = target();
      const auto y = solve_preimage(g, A0inv, anchor, z);
      ++targets;
      o.expect(y && in_u(*y) && sup_dist(*y, anchor) < r, "preimage of a target in Ball(g(x'), r')");
    }
    for (int k = 0; k < 1000; ++k) {
      const Vec z1 = target(), z2 = target();
      const auto y1 = solve_preimage(g, A0inv, anchor, z1);
      const auto y2 = solve_preimage(g, A0inv, anchor, z2);
      ++pairs;
      if (!y1 || !y2) {
        o.expect(false, "Lipschitz pair without preimages");
        continue;
      }
      const double excess = sup_dist(*y1, *y2) - lip * sup_dist(z1, z2);
      worst_lip = std::max(worst_lip, excess);
    }
  }
  o.expect(passed == 20, "only " + std::to_string(passed) + " maps passed the hypothesis");
  o.expect(worst_lip <= 1e-6, "Lipschitz excess " + fmt(worst_lip));
  o.note << (o.note.tellp() > 0 ? ", " : "") << passed << " maps (" << attempts << " drawn), " << targets
         << " targets, " << pairs << " Lipschitz pairs, worst excess " << fmt(worst_lip);
  return o;
}

// 5. Diffeomorphism certificate on scaled random fields, with independent injectivity and surjectivity sampling.
double threshold0(const Chart& c, const DiffeoConstants& dc) {
  return std::min({c.epsilon * c.r / (2.0 * dc.a_safe()), dc.nu, c.epsilon / (4.0 * (dc.b_safe() + 1.0))});
}

Vec draw_inner(std::mt19937_64& rng, const Chart& c) {
  for (;;) {
    const Vec p = testing::random_in_box(rng, c.dim, c.r);
    if (norm(p, c.norm()) < c.r) return p;
  }
}

std::optional<Vec> diffeo_preimage(const LocalizedField& X, const ChartGeometry& geo, std::size_t k, const Vec& z) {
  const int d = geo.dim();
  const auto phi = [&](const Vec& p) { return local_diffeo(X, geo, k, p); };
  Vec p = z - X(k, z);
  for (int it = 0; it < 60; ++it) {
    const Vec res = phi(p) - z;
    if (res.cwiseAbs().maxCoeff() <= 1e-12) return p;
    Mat J(d, d);
    const double h = 1e-7;
    for (int j = 0; j < d; ++j) {
      const Vec e = h * Vec::Unit(d, j);
      J.col(j) = (phi(p + e) - phi(p - e)) / (2.0 * h);
    }
    p -= J.lu().solve(res);
  }
  return std::nullopt;
}

Outcome diffeo_certificate() {
  Outcome o;
  std::mt19937_64 rng(5);
  int fields = 0;
  long pairs = 0, targets = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  for (GroupFixture* f : {&flat1(), &cylinder()}) {
    const ManifoldSpec& spec = f->spec();
    const auto& geos = f->setup.geometries;
    const auto& dcs = f->setup.diffeo_constants;
    DiffeoOptions dopt;
    dopt.pairs_per_chart = static_cast<int>((10000 + spec.charts.size() - 1) / spec.charts.size());
    dopt.target_grid = 9;
    for (int n = 0; n < 50; ++n) {
      LocalizedField X = testing::random_global_field(spec, rng, "X", f->periodic);
      SeminormOptions so;
      double s = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < spec.charts.size(); ++k) {
        so.only_chart = k;
        const double hn0 = seminorm(X, Weight::one(spec), 0, AtlasSelector{"A", RegionKind::inner}, so).value;
        const double hn1 = seminorm(X, Weight::one(spec), 1, AtlasSelector{"A", RegionKind::inner}, so).value;
        s = std::min({s, threshold0(spec.charts[k], dcs[k]) / hn0, spec.charts[k].epsilon / 4.0 / hn1});
      }
      std::uniform_real_distribution<double> shrink(0.3, 0.95);
      X = X.scaled(shrink(rng) * s);
      ++fields;
      const Certificate cert = certify_diffeo(X, geos, dcs, dopt);
      o.expect(cert.pass, f->m.kind + " field " + std::to_string(n) + ": " + cert.first_failure());

      // Independent injectivity sampling: 10^4 pairs spread over the charts.
      for (int i = 0; i < 10000; ++i) {
        const std::size_t k = static_cast<std::size_t>(i) % spec.charts.size();
        const Chart& c = spec.charts[k];
        const Vec p = draw_inner(rng, c), q = draw_inner(rng, c);
        const double dpq = norm(p - q, c.norm());
        if (dpq == 0.0) continue;
        const double ratio = norm(local_diffeo(X, geos[k], k, p) - local_diffeo(X, geos[k], k, q), c.norm()) / dpq;
        min_ratio = std::min(min_ratio, ratio);
        ++pairs;
        o.expect(ratio > 0.0, "injectivity in chart " + c.id);
      }
      // Every target of Ball(0, r (1 - 2 eps)) has a preimage in the inner ball.
      for (std::size_t k = 0; k < spec.charts.size(); ++k) {
        const Chart& c = spec.charts[k];
        const double rad = c.r * (1.0 - 2.0 * c.epsilon);
        for (int t = 0; t < 20; ++t) {
          Vec z = testing::random_in_box(rng, c.dim, rad);
          if (norm(z, c.norm()) >= rad) continue;
          const auto p = diffeo_preimage(X, geos[k], k, z);
          ++targets;
          o.expect(p && norm(*p, c.norm()) < c.r, "surjectivity in chart " + c.id);
        }
      }
    }
  }
  const auto single = testing::spec_from(testing::single_chart_text(1, 1.0, 0.5, 0.2, 0.1));
  const auto sgeos = chart_geometries(*single);
  const Certificate contraction =
      certify_diffeo(LocalizedField::global(*single, "contract", {"0.9*x1"}), sgeos, estimate_diffeo_constants(sgeos));
  bool named = false;
  double lhs = 0.0;
  for (const Check& ch : contraction.checks)
    if (ch.name == "one_seminorm_threshold" && !ch.holds) {
      named = true;
      lhs = ch.lhs;
    }
  o.expect(!contraction.pass && named, "0.9 x must fail the one_seminorm_threshold clause");
  o.note << (o.note.tellp() > 0 ? ", " : "") << fields << " fields, " << pairs << " pairs (min expansion "
         << fmt(min_ratio) << "), " << targets << " targets; 0.9x fails one_seminorm_threshold with " << fmt(lhs);
  return o;
}

// 6. Group laws on gauge-passing random fields.
Outcome group_laws() {
  Outcome o;
  std::mt19937_64 rng(6);
  double worst = 0.0;
  int trials = 0;
  for (GroupFixture* f : {&flat1(), &flat2(), &cylinder()}) {
    for (int trial = 0; trial < 25; ++trial) {
      auto draw = [&](const char* name) {
        LocalizedField X = testing::random_global_field(f->spec(), rng, name, f->periodic);
        return X.scaled(std::uniform_real_distribution<double>(0.2, 0.9)(rng) * gauge_scale(f->setup.gauge, X));
      };
      const LocalizedField X = draw("X"), Y = draw("Y"), W = draw("W");
      const testing::GroupTrial t = testing::run_group_trial(f->setup, X, Y, W, 7);
      ++trials;
      worst = std::max(worst, t.worst());
      const std::string tag = f->m.kind + " trial " + std::to_string(trial) + " ";
      o.expect(t.worst() <= 1e-6, tag + "residual " + fmt(t.worst()));
      o.expect(t.composition_bound && t.inversion_bound, tag + t.failure);
    }
  }
  o.note << (o.note.tellp() > 0 ? ", " : "") << trials << " trials, worst residual " << fmt(worst);
  return o;
}

// 7. Adjusted weights, extMult dominance, flat saturation and the omega pair.
Outcome weight_algorithms() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto m : {flat_oracle(2, 1.0, 0.75), cylinder_oracle(3, 3)}) {
    const ManifoldSpec& spec = *m.spec;
    std::vector<double> deltas;
    for (std::size_t k = 0; k < spec.charts.size(); ++k) deltas.push_back(0.02 + 1.5 * u(rng));
    const AdjustedResult adj = construct_adjusted(spec, deltas);
    o.expect(adj.certificate.pass, m.kind + " adjusted certificate " + adj.certificate.first_failure());
    for (std::size_t k = 0; k < spec.charts.size(); ++k) {
      for (const Vec& q : region_samples(spec, k, RegionKind::inner, 16).points)
        o.expect(adj.weight(k, q) >= std::max(1.0 / deltas[k], 1.0), m.kind + " lower bound on " + spec.charts[k].id);
      double sup = 0.0;
      for (const Vec& q : region_samples(spec, k, RegionKind::domain, 16).points) sup = std::max(sup, adj.weight(k, q));
      o.expect(std::isfinite(sup), m.kind + " upper bound on " + spec.charts[k].id);
    }

    // Dominance B_k |f| <= g on every grid point, with no tolerance.
    auto table = std::make_shared<CoverTable>();
    for (std::size_t k = 0; k < spec.charts.size(); ++k) table->per_chart.push_back(3.0 * u(rng));
    BoundFamily B;
    B.by_order[1] = table;
    const std::string wname = spec.weights.count("poly2") ? "poly2" : "pow2";
    const Weight f = Weight::from_spec(spec, wname);
    const ExtMultResult em = ext_mult(f, B);
    o.expect(em.dominance.pass, m.kind + " ext_mult certificate");
    for (const Weight& g : em.generated.weights)
      for (std::size_t k = 0; k < spec.charts.size(); ++k)
        for (const Vec& q : region_samples(spec, k, RegionKind::domain, 16).points)
          o.expect(table->per_chart[k] * std::abs(f(k, q)) <= g(k, q), m.kind + " dominance on " + spec.charts[k].id);
  }

  for (int d : {1, 2}) {
    const auto m = flat_oracle(d, 1.0, 0.75);
    const ManifoldSpec& spec = *m.spec;
    const auto geos = chart_geometries(spec);
    ForgeOptions fo;
    fo.grid = 8;
    const std::vector<double> deltas(spec.charts.size(), 0.1);
    const BoundFamilies fams = estimate_bound_families(spec, geos, inner_regions(spec), deltas, deltas, fo);
    for (const BoundFamily* b : fams.all())
      for (const auto& [ell, t] : b->by_order) {
        const double v = t->max_value();
        o.expect(v <= 1e-6 || std::abs(v - 1.0) <= 1e-6, "flat bound entries lie in {0, 1}");
      }
    WeightSet W0;
    W0.weights = {Weight::from_spec(spec, "one"), Weight::from_spec(spec, "poly2")};
    const WeightSet W = saturate(W0, fams, 3, fo);
    o.expect(W.metadata.value("stabilized_at", -1) == 1, "flat d=" + std::to_string(d) + " stabilizes at level 1");
    o.expect(W.size() == W0.size(), "flat saturated set equals W0");
  }

  {
    const auto m = flat_oracle(1, 1.0, 0.75);
    const ManifoldSpec& spec = *m.spec;
    const auto geos = chart_geometries(spec);
    ConstantsOptions co;
    std::vector<ConstantsReport> reps;
    for (std::size_t k = 0; k < geos.size(); ++k)
      reps.push_back(ConstantsEstimator(geos[k], co).report(inner_region(spec.charts[k]), 0.2, 0.5));
    const OmegaPair p = pair_omega_exp_log(spec, reps, 0.5, std::vector<double>(spec.charts.size(), 0.2));
    o.expect(p.certificate.pass, "omega pair certificate " + p.certificate.first_failure());
    o.expect(std::abs(p.level - 30.0) <= 1e-12 * 30.0, "omega level " + fmt(p.level));
    for (std::size_t k = 0; k < spec.charts.size(); ++k)
      for (const Vec& q : region_samples(spec, k, RegionKind::inner, 16).points) {
        o.expect(std::abs(p.omega_log(k, q) - 10.0) <= 1e-12 * 10.0, "omega_L = 10");
        o.expect(p.omega_log(k, q) >= 1.0 / (0.5 * 0.2) * (1.0 - 1e-12), "omega_L adjusted to (1 - sigma) delta");
        o.expect(p.omega_log(k, q) <= p.omega_exp(k, q) / (reps[k].a * reps[k].a_log) + 1e-9, "omega_L <= omega_E / (a aL)");
      }
    o.note << (o.note.tellp() > 0 ? ", " : "") << "adjusted and dominance checks on flat2 and cylinder, flat saturation "
           << "stable at level 1, omega pair level " << fmt(p.level);
  }
  return o;
}

// 8. Compactly supported bumps: finite seminorms for the saturated set and gauge membership after scaling.
LocalizedField chart_bump(const ManifoldSpec& spec, std::size_t k, const Vec& center, double radius, bool periodic_last,
                          std::mt19937_64& rng, const std::string& name) {
  const int d = spec.dim;
  const Vec p = center + spec.charts[k].offset;
  std::string rad2;
  for (int i = 0; i < d; ++i) {
    const std::string diff = "(" + testing::coord(i) + " - " + testing::num17(p(i)) + ")";
    const std::string term = periodic_last && i == d - 1 ? "2*(1 - cos" + diff + ")" : diff + "^2";
    rad2 += (i ? " + " : "") + term;
  }
  const std::string profile = "max(0, 1 - (" + rad2 + ")/" + testing::num17(radius * radius) + ")^3";
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<std::string> comps;
  for (int i = 0; i < d; ++i) comps.push_back(testing::num17(u(rng)) + "*" + profile);
  return LocalizedField::global(spec, name, comps);
}

Outcome compact_support() {
  Outcome o;
  std::mt19937_64 rng(8);
  int bumps = 0;
  std::size_t saturated = 0;
  for (GroupFixture* f : {&flat2(), &cylinder()}) {
    const ManifoldSpec& spec = f->spec();
    ForgeOptions fo;
    fo.grid = 8;
    WeightSet W0;
    W0.weights.push_back(Weight::one(spec));
    for (const auto& [name, exprs] : spec.weights)
      if (name != "one") W0.weights.push_back(Weight::from_exprs(spec, name, exprs));
    W0.weights.push_back(f->setup.omega.omega_exp);
    W0.weights.push_back(f->setup.omega.omega_log);
    const BoundFamilies fams =
        estimate_bound_families(spec, f->setup.geometries, inner_regions(spec), f->setup.deltas, f->setup.deltas, fo);
    const WeightSet W = saturate(W0, fams, 3, fo);
    saturated += W.size();
    for (int n = 0; n < 6; ++n) {
      const std::size_t k = static_cast<std::size_t>(n) % spec.charts.size();
      const Chart& c = spec.charts[k];
      const double radius = 0.25 * c.domain.inradius();
      const Vec center = testing::random_in_box(rng, c.dim, 0.5 * c.domain.inradius());
      const LocalizedField X = chart_bump(spec, k, center, radius, f->periodic, rng, "bump" + std::to_string(n));
      ++bumps;
      for (const Weight& g : W.weights)
        for (int ell = 0; ell <= 2; ++ell) {
          const SeminormValue v = seminorm(X, g, ell);
          o.expect(std::isfinite(v.value) && !v.exceeded, f->m.kind + " seminorm of " + X.name() + " for " + g.name());
        }
      const LocalizedField S = X.scaled(gauge_scale(f->setup.gauge, X));
      for (GaugeSet gs : {GaugeSet::d1, GaugeSet::d2, GaugeSet::d_rho}) {
        const Certificate cert = gauge_membership(f->setup.gauge, S, gs);
        o.expect(cert.pass, f->m.kind + " " + std::string(to_string(gs)) + " " + cert.first_failure());
      }
    }
  }
  o.note << (o.note.tellp() > 0 ? ", " : "") << bumps << " bumps against " << saturated
         << " saturated weights (flat2 + cylinder), orders 0..2, all gauges";
  return o;
}

// 9. Byte-identical full-pipeline output.
Outcome determinism() {
  Outcome o;
  int runs = 0;
  for (const char* name : {"flat2.spec", "cylinder.spec"}) {
    const std::string args = "full-pipeline " + kData + "/" + name;
    std::vector<testing::CliRun> out;
    for (int i = 0; i < 3; ++i) out.push_back(testing::run_cli(kCli, args));
    out.push_back(testing::run_cli(kCli, args, "ATLASDIFFEO_THREADS=1"));
    out.push_back(testing::run_cli(kCli, args, "ATLASDIFFEO_THREADS=8"));
    runs += static_cast<int>(out.size());
    for (const auto& r : out) o.expect(r.code == 0 && !r.out.empty(), std::string(name) + " exit code " + std::to_string(r.code));
    for (std::size_t i = 1; i < out.size(); ++i)
      o.expect(out[i].out == out[0].out, std::string(name) + " run " + std::to_string(i) + " differs");
  }
  o.note << (o.note.tellp() > 0 ? ", " : "") << runs << " runs (3 consecutive, threads 1 and 8) on flat2 and cylinder";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"flat comparison", flat_comparison},
      {"zero-section identity", zero_section},
      {"estimate suite", estimate_suite},
      {"quantitative inverse function theorem", qift},
      {"diffeomorphism certificate", diffeo_certificate},
      {"group laws", group_laws},
      {"weight algorithms", weight_algorithms},
      {"compact-support membership", compact_support},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.note << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %zu %s: %s (%s) [%.1f s]\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.note.str().c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
