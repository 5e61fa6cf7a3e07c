#include "atlasdiffeo/oracle.hpp"

#include "atlasdiffeo/errors.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string_view>
#include <vector>

namespace atlasdiffeo {

namespace {

std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string var(int i) { return "x" + std::to_string(i + 1); }
std::string off(int i) { return "o" + std::to_string(i + 1); }
std::string global(int i) { return "(" + var(i) + " + " + off(i) + ")"; }

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

std::string list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
  return out + "]";
}

std::string num_list(const std::vector<double>& v) {
  std::vector<std::string> s;
  for (double x : v) s.push_back(num(x));
  return list(s);
}

// max over terms of |coordinate + shift|
std::string sup_expr(const std::vector<std::string>& terms) {
  if (terms.size() == 1) return terms[0];
  std::string e = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) e = "max(" + e + ", " + terms[i] + ")";
  return e;
}

std::string shifted(int i, double shift) {
  if (shift == 0.0) return var(i);
  return var(i) + (shift < 0 ? " - " : " + ") + num(std::abs(shift));
}

std::string metric_rows(int d, const std::string& diag) {
  std::vector<std::string> rows;
  for (int i = 0; i < d; ++i) {
    std::vector<std::string> row;
    for (int j = 0; j < d; ++j) row.push_back(quoted(i == j ? diag : "0"));
    rows.push_back(list(row));
  }
  return list(rows);
}

struct ChartDef {
  std::string id;
  std::vector<double> offset;
  std::string atlas = "A";
};

void emit_chart(std::ostringstream& os, const ChartDef& c, int d, const std::string& shape,
                const std::vector<double>& extent, const std::string& metric, double r, double R, double eps,
                const std::string& core, std::string_view norm = "sup") {
  os << "[[chart]]\n";
  os << "id = " << quoted(c.id) << "\n";
  os << "dim = " << d << "\n";
  os << "domain = { shape = " << quoted(shape) << ", center = " << num_list(std::vector<double>(d, 0.0))
     << ", extent = " << (extent.size() == 1 ? num(extent[0]) : num_list(extent)) << ", norm = " << quoted(std::string(norm)) << " }\n";
  os << "metric = " << metric << "\n";
  os << "r = " << num(r) << "\nR = " << num(R) << "\nepsilon = " << num(eps) << "\n";
  os << "offset = " << num_list(c.offset) << "\n";
  if (!core.empty()) os << "core = " << quoted(core) << "\n";
  if (c.atlas != "A") os << "atlas = " << quoted(c.atlas) << "\n";
  os << "\n";
}

// Translation transition q -> q + shift with overlap "target box contains the image".
void emit_translation(std::ostringstream& os, const ChartDef& from, const ChartDef& to, const std::vector<double>& shift,
                      const std::vector<double>& target_half_widths) {
  const int d = static_cast<int>(shift.size());
  std::vector<std::string> map, margins;
  for (int i = 0; i < d; ++i) {
    map.push_back(quoted(shifted(i, shift[static_cast<std::size_t>(i)])));
    margins.push_back(num(target_half_widths[static_cast<std::size_t>(i)]) + " - abs(" +
                      shifted(i, shift[static_cast<std::size_t>(i)]) + ")");
  }
  std::string overlap = margins[0];
  for (int i = 1; i < d; ++i) overlap = "min(" + overlap + ", " + margins[static_cast<std::size_t>(i)] + ")";
  os << "[[transition]]\nfrom = " << quoted(from.id) << "\nto = " << quoted(to.id) << "\nmap = " << list(map)
     << "\noverlap = " << quoted(overlap) << "\n\n";
}

std::string lattice_id(const std::string& prefix, const std::vector<double>& p) {
  std::string id = prefix;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) id += "_";
    id += num(p[i]);
  }
  return id;
}

std::shared_ptr<const ManifoldSpec> load(const std::string& text) {
  return std::make_shared<const ManifoldSpec>(load_manifold_text(text));
}

ClosedFormMap flat_exp() {
  return [](std::size_t, const Vec& x, const Vec& y) -> Vec { return x + y; };
}
ClosedFormMap flat_log() {
  return [](std::size_t, const Vec& x, const Vec& z) -> Vec { return z - x; };
}

}  // namespace

OracleManifold flat_oracle(int d, double r1, double r2, const FlatOptions& o) {
  if (!(1.0 >= r1 && r1 > r2 && r2 > 0.5))
    throw Error(ErrorCode::RadiiOrderViolation, "flat oracle needs 1 >= r1 > r2 > 1/2, got r1=" + num(r1) + ", r2=" + num(r2));
  if (d < 1 || d > kMaxDim) throw Error(ErrorCode::InvalidArgument, "flat oracle dimension out of range");
  if (o.extent < 0) throw Error(ErrorCode::InvalidArgument, "flat oracle extent must be non-negative");
  const double R = (r1 - r2) / 2.0;
  const std::string diag = num(o.metric_scale);

  std::vector<ChartDef> charts;
  const int side = 2 * o.extent + 1;
  std::size_t count = 1;
  for (int i = 0; i < d; ++i) count *= static_cast<std::size_t>(side);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::vector<double> p(static_cast<std::size_t>(d));
    std::size_t rest = idx;
    for (int i = d - 1; i >= 0; --i) {
      p[static_cast<std::size_t>(i)] = static_cast<double>(static_cast<int>(rest % side) - o.extent);
      rest /= side;
    }
    charts.push_back({lattice_id("k", p), p, "A"});
  }
  if (o.shifted) {
    // Half-integer lattice reaching one half step beyond the integer one, so it covers every domain.
    const int sside = side + 1;
    std::size_t scount = 1;
    for (int i = 0; i < d; ++i) scount *= static_cast<std::size_t>(sside);
    for (std::size_t idx = 0; idx < scount; ++idx) {
      std::vector<double> p(static_cast<std::size_t>(d));
      std::size_t rest = idx;
      for (int i = d - 1; i >= 0; --i) {
        p[static_cast<std::size_t>(i)] = static_cast<double>(static_cast<int>(rest % sside) - o.extent) - 0.5;
        rest /= sside;
      }
      charts.push_back({lattice_id("s", p), p, "S"});
    }
  }

  std::vector<std::string> abs_terms;
  for (int i = 0; i < d; ++i) abs_terms.push_back("abs" + global(i));
  const std::string core = num(o.extent + r2) + " - " + sup_expr(abs_terms);

  std::ostringstream os;
  os << "name = " << quoted("flat-" + std::to_string(d) + "d") << "\n";
  os << "dim = " << d << "\ngrid_resolution = " << o.grid << "\n\n";
  for (const auto& c : charts) emit_chart(os, c, d, "ball", {r1}, metric_rows(d, diag), r2, R, o.epsilon, core);
  const std::vector<double> hw(static_cast<std::size_t>(d), r1);
  for (const auto& a : charts)
    for (const auto& b : charts) {
      if (&a == &b) continue;
      std::vector<double> shift(static_cast<std::size_t>(d));
      bool overlap = true;
      for (int i = 0; i < d; ++i) {
        shift[static_cast<std::size_t>(i)] = a.offset[static_cast<std::size_t>(i)] - b.offset[static_cast<std::size_t>(i)];
        overlap = overlap && std::abs(shift[static_cast<std::size_t>(i)]) < 2.0 * r1;
      }
      if (overlap) emit_translation(os, a, b, shift, hw);
    }

  std::vector<std::string> sq;
  for (int i = 0; i < d; ++i) sq.push_back(global(i) + "^2");
  std::string rad2 = sq[0];
  for (int i = 1; i < d; ++i) rad2 += " + " + sq[static_cast<std::size_t>(i)];
  os << "[[weight]]\nname = \"one\"\nexpr = \"1\"\n\n";
  os << "[[weight]]\nname = \"poly2\"\nexpr = " << quoted("1 + " + rad2) << "\n\n";
  std::vector<std::string> bump, shift;
  for (int i = 0; i < d; ++i) {
    bump.push_back(quoted(num(1e-4 / (i + 1)) + "*max(0, 1 - (" + rad2 + ")/0.25)^3"));
    shift.push_back(quoted(i == 0 ? "1e-4" : "0"));
  }
  os << "[[field]]\nname = \"bump\"\ncomponents = " << list(bump) << "\n\n";
  os << "[[field]]\nname = \"translation\"\ncomponents = " << list(shift) << "\n";

  OracleManifold m;
  m.kind = o.metric_scale == 1.0 ? "flat" : "scaled_flat";
  m.text = os.str();
  m.spec = load(m.text);
  m.exp = flat_exp();
  m.log = flat_log();
  return m;
}

OracleManifold cylinder_oracle(int length, int n_charts, const CylinderOptions& o) {
  if (n_charts < 3) throw Error(ErrorCode::InvalidArgument, "cylinder oracle needs at least 3 angular charts");
  if (length < 1) throw Error(ErrorCode::InvalidArgument, "cylinder oracle needs at least one chart column");
  const double two_pi = 2.0 * std::numbers::pi;
  const double spacing_x = 2.0, half_x = 1.6, half_theta = 1.55, r = 1.2, R = 0.3;
  if (!(r > std::numbers::pi / n_charts))
    throw Error(ErrorCode::InvalidArgument, "too few angular charts to cover the circle");
  std::vector<ChartDef> charts;
  for (int k = 0; k < length; ++k)
    for (int j = 0; j < n_charts; ++j) {
      const double x = (k - (length - 1) / 2.0) * spacing_x;
      const double theta = j * two_pi / n_charts;
      charts.push_back({"c" + std::to_string(k) + "_" + std::to_string(j), {x, theta}, "A"});
    }
  const double reach = (length - 1) / 2.0 * spacing_x + r;
  const std::string core = num(reach) + " - abs" + global(0);

  std::ostringstream os;
  os << "name = \"cylinder\"\ndim = 2\ngrid_resolution = " << o.grid << "\n\n";
  for (const auto& c : charts) emit_chart(os, c, 2, "box", {half_x, half_theta}, metric_rows(2, "1"), r, R, o.epsilon, core);
  for (const auto& a : charts)
    for (const auto& b : charts) {
      if (&a == &b) continue;
      const double dx = a.offset[0] - b.offset[0];
      double dt = std::remainder(a.offset[1] - b.offset[1], two_pi);
      if (std::abs(dx) < 2.0 * half_x && std::abs(dt) < 2.0 * half_theta) emit_translation(os, a, b, {dx, dt}, {half_x, half_theta});
    }
  for (int n = 0; n <= o.max_power; ++n) {
    const std::string e = n == 0 ? "1" : global(0) + "^" + std::to_string(n);
    os << "[[weight]]\nname = " << quoted("pow" + std::to_string(n)) << "\nexpr = " << quoted(e) << "\n\n";
  }
  os << "[[field]]\nname = \"decay\"\ncomponents = "
     << list({quoted("0.001*exp(-" + global(0) + "^2)*cos" + global(1)), quoted("0")}) << "\n\n";
  os << "[[field]]\nname = \"theta_const\"\ncomponents = [\"0\", \"0.001\"]\n\n";
  os << "[[field]]\nname = \"bump\"\ncomponents = "
     << list({quoted("0"), quoted("0.001*max(0, 1 - " + global(0) + "^2/0.25)^3*max(0, (cos" + global(1) + " - " +
                                  num(std::cos(0.5)) + ")/" + num(1.0 - std::cos(0.5)) + ")^3")})
     << "\n";

  OracleManifold m;
  m.kind = "cylinder";
  m.text = os.str();
  m.spec = load(m.text);
  m.exp = flat_exp();
  m.log = flat_log();
  return m;
}

// Unit-speed geodesic from (a, b) with Euclidean direction (cos phi, sin phi):
// (a + b sinh t cos phi / D, b / D) with D = cosh t - sinh t sin phi.
Vec half_plane_exp(const Vec& p, const Vec& v) {
  const double a = p(0), b = p(1);
  const double len = v.norm();
  if (len == 0.0) return p;
  const double t = len / b;
  const double c = v(0) / len, s = v(1) / len;
  const double D = std::cosh(t) - std::sinh(t) * s;
  Vec out(2);
  out << a + b * std::sinh(t) * c / D, b / D;
  return out;
}

Vec half_plane_log(const Vec& p, const Vec& z) {
  const double a = p(0), b = p(1);
  const double q = (z - p).squaredNorm() / (2.0 * b * z(1));  // cosh(dist) - 1
  if (q == 0.0) return Vec::Zero(2);
  const double sh = std::sqrt(q * (q + 2.0));
  const double dist = std::log1p(q + sh);
  Vec dir(2);
  dir << (z(0) - a) / (z(1) * sh), (q + (z(1) - b) / z(1)) / sh;
  return b * dist * dir;
}

OracleManifold half_plane_oracle(double lo, double hi, int grid, NormKind norm) {
  if (!(lo > 0.0 && hi > lo)) throw Error(ErrorCode::InvalidArgument, "half-plane strip needs 0 < lo < hi");
  const double mid = (lo + hi) / 2.0, half = (hi - lo) / 2.0;
  std::ostringstream os;
  os << "name = \"half-plane\"\ndim = 2\ngrid_resolution = " << grid << "\n\n";
  const ChartDef chart{"H", {0.0, mid}, "A"};
  emit_chart(os, chart, 2, "box", {half, half}, metric_rows(2, "1/(x2 + o2)^2"), 0.5 * half, 0.25 * half, 0.1, "",
             to_string(norm));
  os << "[[weight]]\nname = \"one\"\nexpr = \"1\"\n\n";
  os << "[[field]]\nname = \"bump\"\ncomponents = "
     << list({quoted(num(0.004 * half) + "*max(0, 1 - (x1^2 + x2^2)/" + num(0.25 * half * half) + ")^3"), quoted("0")})
     << "\n";

  OracleManifold m;
  m.kind = "half_plane_strip";
  m.text = os.str();
  m.spec = load(m.text);
  const Vec o = m.spec->charts[0].offset;
  m.exp = [o](std::size_t, const Vec& x, const Vec& y) -> Vec { return half_plane_exp(x + o, y) - o; };
  m.log = [o](std::size_t, const Vec& x, const Vec& z) -> Vec { return half_plane_log(x + o, z + o); };
  return m;
}

}  // namespace atlasdiffeo
