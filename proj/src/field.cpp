#include "atlasdiffeo/field.hpp"

#include "atlasdiffeo/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace atlasdiffeo {

using nlohmann::json;

LocalizedField::LocalizedField(const ManifoldSpec& spec, std::string name, ChartFunction eval, int order_available,
                               std::string provenance)
    : spec_(&spec),
      name_(std::move(name)),
      eval_(std::move(eval)),
      order_(order_available),
      provenance_(std::move(provenance)) {}

LocalizedField LocalizedField::from_exprs(const ManifoldSpec& spec, std::string name,
                                          std::vector<std::vector<Expr>> components) {
  if (components.size() != spec.charts.size())
    throw Error(ErrorCode::InvalidArgument, "field '" + name + "' needs one component family per chart");
  for (const auto& c : components)
    if (static_cast<int>(c.size()) != spec.dim)
      throw Error(ErrorCode::InvalidArgument, "field '" + name + "' needs " + std::to_string(spec.dim) + " components");
  auto shared = std::make_shared<const std::vector<std::vector<Expr>>>(std::move(components));
  const ManifoldSpec* sp = &spec;
  return LocalizedField(spec, std::move(name), [shared, sp](std::size_t chart, const Vec& q) {
    const auto& comps = (*shared)[chart];
    const Vec& off = sp->charts[chart].offset;
    Vec out(static_cast<int>(comps.size()));
    for (std::size_t i = 0; i < comps.size(); ++i) out(static_cast<int>(i)) = comps[i].eval(q, off);
    return out;
  });
}

LocalizedField LocalizedField::from_spec(const ManifoldSpec& spec, const std::string& name) {
  auto it = spec.fields.find(name);
  if (it == spec.fields.end()) throw Error(ErrorCode::InvalidArgument, "unknown field '" + name + "'");
  return from_exprs(spec, name, it->second);
}

LocalizedField LocalizedField::zero(const ManifoldSpec& spec) {
  const int d = spec.dim;
  return LocalizedField(spec, "0", [d](std::size_t, const Vec&) { return Vec(Vec::Zero(d)); });
}

LocalizedField LocalizedField::global(const ManifoldSpec& spec, std::string name,
                                      const std::vector<std::string>& exprs) {
  std::vector<Expr> comps;
  for (const auto& s : exprs) comps.push_back(Expr::parse(s, spec.dim));
  return from_exprs(spec, std::move(name), std::vector<std::vector<Expr>>(spec.charts.size(), comps));
}

LocalizedField LocalizedField::scaled(double c) const {
  ChartFunction f = eval_;
  return LocalizedField(*spec_, name_, [f, c](std::size_t k, const Vec& q) { return Vec(c * f(k, q)); }, order_,
                        provenance_);
}

LocalizedField LocalizedField::plus(const LocalizedField& other) const {
  ChartFunction f = eval_, g = other.eval_;
  return LocalizedField(*spec_, name_ + "+" + other.name_,
                        [f, g](std::size_t k, const Vec& q) { return Vec(f(k, q) + g(k, q)); },
                        std::min(order_, other.order_), "sum");
}

LocalizedField LocalizedField::renamed(std::string name) const {
  LocalizedField out = *this;
  out.name_ = std::move(name);
  return out;
}

LocalizedField LocalizedField::masked(const std::function<bool(std::size_t, const Vec&)>& keep) const {
  ChartFunction f = eval_;
  const int d = spec_->dim;
  return LocalizedField(*spec_, name_, [f, keep, d](std::size_t k, const Vec& q) {
    return keep(k, q) ? f(k, q) : Vec(Vec::Zero(d));
  }, order_, provenance_);
}

Vec Tabulation::interpolate(std::size_t chart, const Vec& q) const {
  const Lattice& L = lattices.at(chart);
  const std::vector<double>& v = values.at(chart);
  Vec out = Vec::Zero(dim);
  if (L.n == 1) {
    for (int c = 0; c < dim; ++c) out(c) = v[static_cast<std::size_t>(c)];
    return out;
  }
  std::vector<int> base(static_cast<std::size_t>(L.dim));
  std::vector<double> frac(static_cast<std::size_t>(L.dim));
  for (int i = 0; i < L.dim; ++i) {
    const double t = (q(i) - L.lo(i)) / L.step(i);
    int k = static_cast<int>(std::floor(t));
    k = std::clamp(k, 0, L.n - 2);
    base[static_cast<std::size_t>(i)] = k;
    frac[static_cast<std::size_t>(i)] = std::clamp(t - k, 0.0, 1.0);
  }
  for (int corner = 0; corner < (1 << L.dim); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int i = 0; i < L.dim; ++i) {
      const int bit = (corner >> i) & 1;
      w *= bit ? frac[static_cast<std::size_t>(i)] : 1.0 - frac[static_cast<std::size_t>(i)];
      flat = flat * static_cast<std::size_t>(L.n) + static_cast<std::size_t>(base[static_cast<std::size_t>(i)] + bit);
    }
    if (w == 0.0) continue;
    for (int c = 0; c < dim; ++c) out(c) += w * v[flat * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
  }
  return out;
}

Tabulation tabulate(const LocalizedField& field, int n) {
  const ManifoldSpec& spec = field.spec();
  Tabulation t;
  t.name = field.name();
  t.dim = spec.dim;
  for (std::size_t k = 0; k < spec.charts.size(); ++k) {
    const Lattice L = chart_lattice(spec.charts[k], n);
    std::vector<double> vals(L.size() * static_cast<std::size_t>(spec.dim),
                             std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < L.size(); ++i) {
      try {
        const Vec x = field(k, L.point(i));
        for (int c = 0; c < spec.dim; ++c) vals[i * static_cast<std::size_t>(spec.dim) + static_cast<std::size_t>(c)] = x(c);
      } catch (const Error&) {
        // left as NaN: the field is not defined at this lattice point
      }
    }
    t.chart_ids.push_back(spec.charts[k].id);
    t.lattices.push_back(L);
    t.values.push_back(std::move(vals));
  }
  return t;
}

LocalizedField from_tabulation(const ManifoldSpec& spec, std::shared_ptr<const Tabulation> table) {
  if (table->dim != spec.dim) throw Error(ErrorCode::InvalidArgument, "tabulated field dimension mismatch");
  std::vector<std::size_t> slot(spec.charts.size());
  for (std::size_t k = 0; k < spec.charts.size(); ++k) {
    auto it = std::find(table->chart_ids.begin(), table->chart_ids.end(), spec.charts[k].id);
    if (it == table->chart_ids.end())
      throw Error(ErrorCode::InvalidArgument, "tabulated field lacks chart '" + spec.charts[k].id + "'");
    slot[k] = static_cast<std::size_t>(it - table->chart_ids.begin());
  }
  return LocalizedField(spec, table->name,
                        [table, slot](std::size_t k, const Vec& q) { return table->interpolate(slot[k], q); }, 1,
                        "tabulated");
}

namespace {

void put_le(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

double get_le(std::istream& is) {
  std::uint64_t bits = 0;
  is.read(reinterpret_cast<char*>(&bits), sizeof bits);
  if (!is) throw Error(ErrorCode::Io, "truncated tabulated field data");
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void write_tabulation(const std::string& path, const Tabulation& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  std::ostringstream hdr;
  hdr.precision(17);
  hdr << "ATLASDIFFEO-FIELD 1\n";
  hdr << "name " << (t.name.empty() ? "-" : t.name) << "\n";
  hdr << "dim " << t.dim << "\n";
  for (std::size_t k = 0; k < t.chart_ids.size(); ++k) {
    const Lattice& L = t.lattices[k];
    hdr << "chart " << t.chart_ids[k] << " shape";
    for (int i = 0; i < L.dim; ++i) hdr << ' ' << L.n;
    hdr << " lo";
    for (int i = 0; i < L.dim; ++i) hdr << ' ' << L.lo(i);
    hdr << " hi";
    for (int i = 0; i < L.dim; ++i) hdr << ' ' << L.lo(i) + L.step(i) * (L.n - 1);
    hdr << "\n";
  }
  hdr << "end\n";
  os << hdr.str();
  for (const auto& vals : t.values)
    for (double v : vals) put_le(os, v);
  if (!os) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

Tabulation read_tabulation(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  Tabulation t;
  std::string line;
  std::getline(is, line);
  if (line != "ATLASDIFFEO-FIELD 1") throw Error(ErrorCode::ParseError, "not a tabulated field file");
  while (std::getline(is, line)) {
    if (line == "end") break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "name") {
      ls >> t.name;
    } else if (key == "dim") {
      ls >> t.dim;
    } else if (key == "chart") {
      std::string id, word;
      ls >> id >> word;
      if (word != "shape" || t.dim < 1) throw Error(ErrorCode::ParseError, "malformed chart line");
      Lattice L;
      L.dim = t.dim;
      std::vector<int> shape(static_cast<std::size_t>(t.dim));
      for (auto& s : shape) ls >> s;
      L.n = shape[0];
      if (std::any_of(shape.begin(), shape.end(), [&](int s) { return s != L.n || s < 1; }))
        throw Error(ErrorCode::ParseError, "tabulated fields need the same positive count per axis");
      Vec lo(t.dim), hi(t.dim);
      ls >> word;
      for (int i = 0; i < t.dim; ++i) ls >> lo(i);
      ls >> word;
      for (int i = 0; i < t.dim; ++i) ls >> hi(i);
      if (!ls) throw Error(ErrorCode::ParseError, "malformed chart line");
      L.lo = lo;
      L.step = L.n > 1 ? Vec((hi - lo) / static_cast<double>(L.n - 1)) : Vec(Vec::Zero(t.dim));
      t.chart_ids.push_back(id);
      t.lattices.push_back(L);
    } else {
      throw Error(ErrorCode::ParseError, "unknown header key '" + key + "'");
    }
  }
  if (line != "end") throw Error(ErrorCode::ParseError, "missing header terminator");
  for (const Lattice& L : t.lattices) {
    std::vector<double> vals(L.size() * static_cast<std::size_t>(t.dim));
    for (double& v : vals) v = get_le(is);
    t.values.push_back(std::move(vals));
  }
  if (t.name == "-") t.name.clear();
  return t;
}

json CompatibilityReport::to_json() const {
  json w = json::array();
  for (int i = 0; i < witness.size(); ++i) w.push_back(witness(i));
  return json{{"residual", residual}, {"from", chart_from}, {"to", chart_to}, {"witness", w}, {"samples", samples}};
}

Mat transition_jacobian(const ManifoldSpec& spec, const Transition& t, const Vec& q) {
  const Vec& off = spec.charts[t.from].offset;
  const double h = 1e-6 * std::max(1.0, spec.charts[t.from].domain.scale());
  return fd_jacobian([&](const Vec& p) { return t.apply(p, off); }, q, h);
}

CompatibilityReport compatibility_residual(const LocalizedField& field, int grid) {
  const ManifoldSpec& spec = field.spec();
  CompatibilityReport rep;
  for (const Transition& t : spec.transitions) {
    const Chart& from = spec.charts[t.from];
    const Chart& to = spec.charts[t.to];
    const Lattice L = chart_lattice(from, grid);
    for (std::size_t i = 0; i < L.size(); ++i) {
      const Vec q = L.point(i);
      if (!from.domain.contains(q) || !t.overlap_holds(q, from.offset)) continue;
      const Vec p = t.apply(q, from.offset);
      if (!to.domain.contains(p)) continue;
      const Vec diff = field(t.to, p) - transition_jacobian(spec, t, q) * field(t.from, q);
      const double r = norm(diff, to.norm());
      ++rep.samples;
      if (r > rep.residual) {
        rep.residual = r;
        rep.chart_from = from.id;
        rep.chart_to = to.id;
        rep.witness = q;
      }
    }
  }
  return rep;
}

}  // namespace atlasdiffeo
