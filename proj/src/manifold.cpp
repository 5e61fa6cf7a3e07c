#include "atlasdiffeo/manifold.hpp"

#include "atlasdiffeo/errors.hpp"
#include "atlasdiffeo/spec_text.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <set>
#include <sstream>

namespace atlasdiffeo {

using nlohmann::json;

bool Domain::contains(const Vec& q) const {
  if (shape == Shape::ball) return atlasdiffeo::norm(q - center, this->norm) < extent(0);
  for (int i = 0; i < q.size(); ++i)
    if (!(std::abs(q(i) - center(i)) < extent(i))) return false;
  return true;
}

Vec Domain::half_widths() const {
  if (shape == Shape::ball) return Vec::Constant(center.size(), extent(0));
  return extent;
}

double Domain::inradius() const { return shape == Shape::ball ? extent(0) : extent.minCoeff(); }

double Domain::scale() const { return half_widths().maxCoeff(); }

Mat Chart::metric_at(const Vec& q) const {
  Mat G(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j) {
      const double v = metric[static_cast<std::size_t>(i * dim + j)].eval(q, offset);
      G(i, j) = v;
      G(j, i) = v;
    }
  return G;
}

bool Chart::metric_constant() const {
  return std::none_of(metric.begin(), metric.end(), [](const Expr& e) { return e.depends_on_position(); });
}

bool Chart::in_core(const Vec& q) const {
  if (!domain.contains(q)) return false;
  if (core) return core->eval(q, offset) > 0.0;
  return atlasdiffeo::norm(q, domain.norm) < r;
}

Vec Transition::apply(const Vec& q, const Vec& from_offset) const {
  Vec out(static_cast<int>(map.size()));
  for (std::size_t i = 0; i < map.size(); ++i) out(static_cast<int>(i)) = map[i].eval(q, from_offset);
  return out;
}

bool Transition::overlap_holds(const Vec& q, const Vec& from_offset) const {
  return overlap.eval(q, from_offset) > 0.0;
}

std::size_t Lattice::size() const {
  std::size_t s = 1;
  for (int i = 0; i < dim; ++i) s *= static_cast<std::size_t>(n);
  return s;
}

Vec Lattice::point(std::size_t flat) const {
  Vec p(dim);
  for (int i = dim - 1; i >= 0; --i) {
    const auto k = static_cast<double>(flat % static_cast<std::size_t>(n));
    flat /= static_cast<std::size_t>(n);
    p(i) = lo(i) + k * step(i);
  }
  return p;
}

Lattice box_lattice(const Vec& center, const Vec& half_widths, int n) {
  Lattice L;
  L.dim = static_cast<int>(center.size());
  L.n = std::max(n, 1);
  L.lo = center - half_widths;
  L.step = L.n > 1 ? Vec(2.0 * half_widths / static_cast<double>(L.n - 1)) : Vec(Vec::Zero(L.dim));
  if (L.n == 1) L.lo = center;
  return L;
}

Lattice chart_lattice(const Chart& chart, int n) {
  return box_lattice(chart.domain.center, chart.domain.half_widths(), n);
}

std::size_t ManifoldSpec::chart_index(std::string_view id) const {
  for (std::size_t i = 0; i < charts.size(); ++i)
    if (charts[i].id == id) return i;
  throw Error(ErrorCode::InvalidArgument, "unknown chart '" + std::string(id) + "'");
}

const Transition* ManifoldSpec::transition(std::size_t from, std::size_t to) const {
  if (from < outgoing_.size())
    for (std::size_t t : outgoing_[from])
      if (transitions[t].to == to) return &transitions[t];
  return nullptr;
}

const std::vector<std::size_t>& ManifoldSpec::outgoing(std::size_t chart) const { return outgoing_.at(chart); }

std::vector<std::size_t> ManifoldSpec::group(std::string_view atlas) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < charts.size(); ++i)
    if (charts[i].atlas == atlas) out.push_back(i);
  return out;
}

void ManifoldSpec::build_index() {
  outgoing_.assign(charts.size(), {});
  for (std::size_t t = 0; t < transitions.size(); ++t) outgoing_[transitions[t].from].push_back(t);
  for (auto& v : outgoing_)
    std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) { return transitions[a].to < transitions[b].to; });
}

std::vector<ChartPoint> ManifoldSpec::charts_containing(std::size_t chart, const Vec& q) const {
  std::vector<ChartPoint> out;
  const Chart& c = charts[chart];
  if (!c.domain.contains(q)) return out;
  out.push_back({chart, q});
  for (std::size_t t : outgoing_[chart]) {
    const Transition& tr = transitions[t];
    if (!tr.overlap_holds(q, c.offset)) continue;
    Vec p = tr.apply(q, c.offset);
    if (charts[tr.to].domain.contains(p)) out.push_back({tr.to, p});
  }
  std::sort(out.begin(), out.end(), [](const ChartPoint& a, const ChartPoint& b) { return a.chart < b.chart; });
  return out;
}

std::optional<Vec> ManifoldSpec::map_point(std::size_t from, const Vec& q, std::size_t to) const {
  if (!charts[from].domain.contains(q)) return std::nullopt;
  if (from == to) return q;
  const Transition* tr = transition(from, to);
  if (!tr || !tr->overlap_holds(q, charts[from].offset)) return std::nullopt;
  Vec p = tr->apply(q, charts[from].offset);
  if (!charts[to].domain.contains(p)) return std::nullopt;
  return p;
}

namespace {

std::string point_str(const Vec& p) {
  std::ostringstream ss;
  ss << "(";
  for (int i = 0; i < p.size(); ++i) ss << (i ? ", " : "") << p(i);
  ss << ")";
  return ss.str();
}

double num(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::ParseError, where + ": missing key '" + key + "'");
  if (!j.at(key).is_number()) throw Error(ErrorCode::ParseError, where + ": '" + key + "' must be a number");
  return j.at(key).get<double>();
}

std::string str(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorCode::ParseError, where + ": missing key '" + key + "'");
  if (!j.at(key).is_string()) throw Error(ErrorCode::ParseError, where + ": '" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

Vec vec_of(const json& j, int dim, const std::string& where) {
  if (j.is_number()) return Vec::Constant(dim, j.get<double>());
  if (!j.is_array()) throw Error(ErrorCode::ParseError, where + ": expected a numeric array");
  Vec v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::ParseError, where + ": expected a numeric array");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

Expr expr_of(const json& j, int dim, const std::string& where) {
  if (j.is_number()) return Expr::constant(j.get<double>());
  if (!j.is_string()) throw Error(ErrorCode::ParseError, where + ": expected an expression string");
  try {
    return Expr::parse(j.get<std::string>(), dim);
  } catch (const Error& e) {
    throw Error(e.code(), where + ": " + e.what());
  }
}

Chart parse_chart(const json& j, int dim, std::size_t index) {
  Chart c;
  const std::string where = "chart #" + std::to_string(index + 1);
  c.id = str(j, "id", where);
  c.dim = j.contains("dim") ? static_cast<int>(num(j, "dim", where)) : dim;
  if (c.dim != dim) throw Error(ErrorCode::ParseError, "chart '" + c.id + "': dim differs from manifold dim");
  if (!j.contains("domain") || !j.at("domain").is_object())
    throw Error(ErrorCode::ParseError, "chart '" + c.id + "': missing domain table");
  const json& d = j.at("domain");
  const std::string shape = d.contains("shape") ? str(d, "shape", c.id) : "ball";
  if (shape == "ball") c.domain.shape = Domain::Shape::ball;
  else if (shape == "box") c.domain.shape = Domain::Shape::box;
  else throw Error(ErrorCode::ParseError, "chart '" + c.id + "': unknown domain shape '" + shape + "'");
  c.domain.center = d.contains("center") ? vec_of(d.at("center"), dim, c.id + " domain.center") : Vec(Vec::Zero(dim));
  if (!d.contains("extent")) throw Error(ErrorCode::ParseError, "chart '" + c.id + "': missing domain.extent");
  c.domain.extent = vec_of(d.at("extent"), c.domain.shape == Domain::Shape::ball ? 1 : dim, c.id + " domain.extent");
  if (c.domain.shape == Domain::Shape::ball) c.domain.extent.conservativeResize(1);
  c.domain.norm = parse_norm_kind(d.contains("norm") ? str(d, "norm", c.id) : "sup");
  if (c.domain.center.size() != dim || (c.domain.shape == Domain::Shape::box && c.domain.extent.size() != dim))
    throw Error(ErrorCode::ParseError, "chart '" + c.id + "': domain dimensions do not match");
  if ((c.domain.extent.array() <= 0).any())
    throw Error(ErrorCode::ParseError, "chart '" + c.id + "': domain extent must be positive");
  if (!j.contains("metric") || !j.at("metric").is_array() || j.at("metric").size() != static_cast<std::size_t>(dim))
    throw Error(ErrorCode::ParseError, "chart '" + c.id + "': metric must be a d x d array");
  for (const auto& row : j.at("metric")) {
    if (!row.is_array() || row.size() != static_cast<std::size_t>(dim))
      throw Error(ErrorCode::ParseError, "chart '" + c.id + "': metric must be a d x d array");
    for (const auto& e : row) c.metric.push_back(expr_of(e, dim, c.id + " metric"));
  }
  c.r = num(j, "r", c.id);
  c.R = num(j, "R", c.id);
  c.epsilon = num(j, "epsilon", c.id);
  c.offset = j.contains("offset") ? vec_of(j.at("offset"), dim, c.id + " offset") : Vec(Vec::Zero(dim));
  if (c.offset.size() != dim) throw Error(ErrorCode::ParseError, "chart '" + c.id + "': offset dimension");
  if (j.contains("core")) c.core = expr_of(j.at("core"), dim, c.id + " core");
  if (j.contains("atlas")) c.atlas = str(j, "atlas", c.id);
  if (c.r <= 0 || c.R <= 0) throw Error(ErrorCode::ParseError, "chart '" + c.id + "': r and R must be positive");
  return c;
}

template <class T>
std::vector<T> per_chart_family(const ManifoldSpec& spec, const json& entries, const std::string& kind,
                                const std::function<T(const json&, const std::string&)>& parse_one,
                                const std::string& name) {
  std::vector<std::optional<T>> slots(spec.charts.size());
  std::optional<T> fallback;
  for (const auto& e : entries) {
    const std::string chart = e.contains("chart") ? e.at("chart").get<std::string>() : "*";
    T value = parse_one(e, kind + " '" + name + "'");
    if (chart == "*") fallback = value;
    else slots[spec.chart_index(chart)] = value;
  }
  std::vector<T> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) out.push_back(*slots[i]);
    else if (fallback) out.push_back(*fallback);
    else throw Error(ErrorCode::ParseError, kind + " '" + name + "' has no entry for chart '" + spec.charts[i].id + "'");
  }
  return out;
}

void check_metrics(const ManifoldSpec& spec, std::vector<std::string>& violations) {
  for (const Chart& c : spec.charts) {
    const Lattice L = chart_lattice(c, spec.grid_resolution);
    bool reported_sym = false, reported_spd = false;
    for (std::size_t k = 0; k < L.size(); ++k) {
      const Vec p = L.point(k);
      if (!c.domain.contains(p)) continue;
      for (int i = 0; i < c.dim && !reported_sym; ++i)
        for (int j = i + 1; j < c.dim && !reported_sym; ++j) {
          const double a = c.metric[static_cast<std::size_t>(i * c.dim + j)].eval(p, c.offset);
          const double b = c.metric[static_cast<std::size_t>(j * c.dim + i)].eval(p, c.offset);
          if (!(std::abs(a - b) <= 1e-12)) {
            violations.push_back("chart '" + c.id + "': metric asymmetric at sample p=" + point_str(p));
            reported_sym = true;
          }
        }
      if (!reported_spd) {
        const Mat G = c.metric_at(p);
        Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
        if (!G.allFinite() || !(es.eigenvalues().minCoeff() > 0.0)) {
          violations.push_back("chart '" + c.id + "': metric not positive definite at sample p=" + point_str(p));
          reported_spd = true;
        }
      }
      if (reported_sym && reported_spd) break;
    }
  }
}

void check_transitions(const ManifoldSpec& spec, std::vector<std::string>& violations) {
  for (const Transition& t : spec.transitions) {
    if (!spec.transition(t.to, t.from))
      throw Error(ErrorCode::MissingTransition,
                  "(" + spec.charts[t.to].id + ", " + spec.charts[t.from].id + ") has no declared transition");
  }
  for (const Transition& t : spec.transitions) {
    const Chart& a = spec.charts[t.from];
    const Chart& b = spec.charts[t.to];
    const Transition* back = spec.transition(t.to, t.from);
    const Lattice L = chart_lattice(a, spec.grid_resolution);
    for (std::size_t k = 0; k < L.size(); ++k) {
      const Vec p = L.point(k);
      auto q = spec.map_point(t.from, p, t.to);
      if (!q) continue;
      const Vec back_p = back->apply(*q, b.offset);
      if (!(norm(back_p - p, NormKind::sup) <= 1e-8)) {
        violations.push_back("transition " + a.id + "->" + b.id + " does not invert at sample p=" + point_str(p));
        break;
      }
    }
  }
  // cocycle on triple overlaps
  for (std::size_t x = 0; x < spec.charts.size(); ++x) {
    const Lattice L = chart_lattice(spec.charts[x], spec.grid_resolution);
    for (std::size_t t1 : spec.outgoing(x)) {
      const std::size_t y = spec.transitions[t1].to;
      for (std::size_t t2 : spec.outgoing(y)) {
        const std::size_t z = spec.transitions[t2].to;
        if (z == x || !spec.transition(x, z)) continue;
        for (std::size_t k = 0; k < L.size(); ++k) {
          const Vec p = L.point(k);
          auto py = spec.map_point(x, p, y);
          if (!py) continue;
          auto pz_direct = spec.map_point(x, p, z);
          auto pz_via = spec.map_point(y, *py, z);
          if (!pz_direct || !pz_via) continue;
          if (!(norm(*pz_direct - *pz_via, NormKind::sup) <= 1e-8)) {
            violations.push_back("cocycle " + spec.charts[x].id + "->" + spec.charts[y].id + "->" +
                                 spec.charts[z].id + " fails at sample p=" + point_str(p));
            break;
          }
        }
      }
    }
  }
}

void check_connected(const ManifoldSpec& spec, std::vector<std::string>& violations) {
  if (spec.charts.empty()) {
    violations.push_back("atlas has no charts");
    return;
  }
  std::vector<char> seen(spec.charts.size(), 0);
  std::deque<std::size_t> queue{0};
  seen[0] = 1;
  while (!queue.empty()) {
    const std::size_t c = queue.front();
    queue.pop_front();
    for (std::size_t t : spec.outgoing(c)) {
      const std::size_t n = spec.transitions[t].to;
      if (!seen[n]) {
        seen[n] = 1;
        queue.push_back(n);
      }
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    violations.push_back("chart adjacency graph is disconnected");
}

}  // namespace

ManifoldSpec load_manifold_text(std::string_view text) {
  json root;
  try {
    root = parse_spec_text(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  ManifoldSpec spec;
  spec.source_hash = content_hash(text);
  try {
    spec.name = root.contains("name") ? root.at("name").get<std::string>() : "";
    spec.dim = static_cast<int>(num(root, "dim", "manifold"));
    if (spec.dim < 1 || spec.dim > kMaxDim)
      throw Error(ErrorCode::ParseError, "manifold dim must be in [1, " + std::to_string(kMaxDim) + "]");
    if (root.contains("grid_resolution")) spec.grid_resolution = static_cast<int>(num(root, "grid_resolution", "manifold"));
    if (spec.grid_resolution < 2) throw Error(ErrorCode::ParseError, "grid_resolution must be at least 2");
    if (!root.contains("chart") || !root.at("chart").is_array())
      throw Error(ErrorCode::ParseError, "no [[chart]] tables");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < root.at("chart").size(); ++i) {
      spec.charts.push_back(parse_chart(root.at("chart")[i], spec.dim, i));
      if (!ids.insert(spec.charts.back().id).second)
        throw Error(ErrorCode::ParseError, "duplicate chart id '" + spec.charts.back().id + "'");
    }
    if (root.contains("transition")) {
      std::set<std::pair<std::size_t, std::size_t>> pairs;
      for (const auto& t : root.at("transition")) {
        Transition tr;
        tr.from = spec.chart_index(str(t, "from", "transition"));
        tr.to = spec.chart_index(str(t, "to", "transition"));
        const std::string where = "transition " + spec.charts[tr.from].id + "->" + spec.charts[tr.to].id;
        if (tr.from == tr.to) throw Error(ErrorCode::ParseError, where + ": self transition");
        if (!pairs.insert({tr.from, tr.to}).second) throw Error(ErrorCode::ParseError, where + ": duplicate");
        if (!t.contains("map") || !t.at("map").is_array() || t.at("map").size() != static_cast<std::size_t>(spec.dim))
          throw Error(ErrorCode::ParseError, where + ": map must list d expressions");
        for (const auto& e : t.at("map")) tr.map.push_back(expr_of(e, spec.dim, where));
        if (!t.contains("overlap")) throw Error(ErrorCode::ParseError, where + ": missing overlap predicate");
        tr.overlap = expr_of(t.at("overlap"), spec.dim, where + " overlap");
        spec.transitions.push_back(std::move(tr));
      }
    }
    spec.build_index();
    if (root.contains("weight")) {
      std::map<std::string, json> grouped;
      for (const auto& w : root.at("weight")) grouped[str(w, "name", "weight")].push_back(w);
      for (const auto& [name, entries] : grouped) {
        spec.weights[name] = per_chart_family<Expr>(
            spec, entries, "weight",
            [&](const json& e, const std::string& where) {
              if (!e.contains("expr")) throw Error(ErrorCode::ParseError, where + ": missing expr");
              return expr_of(e.at("expr"), spec.dim, where);
            },
            name);
      }
    }
    if (root.contains("field")) {
      std::map<std::string, json> grouped;
      for (const auto& f : root.at("field")) grouped[str(f, "name", "field")].push_back(f);
      for (const auto& [name, entries] : grouped) {
        spec.fields[name] = per_chart_family<std::vector<Expr>>(
            spec, entries, "field",
            [&](const json& e, const std::string& where) {
              if (!e.contains("components") || !e.at("components").is_array() ||
                  e.at("components").size() != static_cast<std::size_t>(spec.dim))
                throw Error(ErrorCode::ParseError, where + ": components must list d expressions");
              std::vector<Expr> comps;
              for (const auto& c : e.at("components")) comps.push_back(expr_of(c, spec.dim, where));
              return comps;
            },
            name);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  std::vector<std::string> violations;
  check_metrics(spec, violations);
  check_transitions(spec, violations);
  check_connected(spec, violations);
  if (!violations.empty()) throw InvariantViolation(std::move(violations));
  return spec;
}

ManifoldSpec load_manifold(const std::string& path) { return load_manifold_text(read_text_file(path)); }

nlohmann::json NeighborReport::to_json() const {
  json j;
  j["neighbor_count"] = neighbor_count;
  j["unique_point"] = unique_point;
  if (unique_point) {
    j["witness_chart"] = witness_chart;
    j["witness"] = std::vector<double>(witness.data(), witness.data() + witness.size());
  }
  j["resolution"] = resolution;
  return j;
}

NeighborReport locally_finite_report(const ManifoldSpec& spec, std::string_view atlas, int grid) {
  NeighborReport rep;
  rep.resolution = grid > 0 ? grid : spec.grid_resolution;
  const auto members = spec.group(atlas);
  std::set<std::size_t> member_set(members.begin(), members.end());
  for (std::size_t c : members) {
    int count = 0;
    for (std::size_t t : spec.outgoing(c))
      if (member_set.count(spec.transitions[t].to)) ++count;
    rep.neighbor_count[spec.charts[c].id] = count;
  }
  for (std::size_t c : members) {
    const Chart& chart = spec.charts[c];
    const Lattice L = chart_lattice(chart, rep.resolution);
    for (std::size_t k = 0; k < L.size() && !rep.unique_point; ++k) {
      const Vec p = L.point(k);
      if (!chart.in_core(p)) continue;
      int n = 0;
      for (const auto& cp : spec.charts_containing(c, p))
        if (member_set.count(cp.chart)) ++n;
      if (n == 1) {
        rep.unique_point = true;
        rep.witness_chart = chart.id;
        rep.witness = p;
      }
    }
    if (rep.unique_point) break;
  }
  return rep;
}

Certificate validate_adapted(const ManifoldSpec& spec, int grid, std::string_view atlas) {
  Certificate cert;
  cert.criterion = "adapted_atlas";
  cert.resolution = grid > 0 ? grid : spec.grid_resolution;
  const auto members = spec.group(atlas);
  std::set<std::size_t> member_set(members.begin(), members.end());
  json uncovered_examples = json::array();
  for (std::size_t c : members) {
    const Chart& ch = spec.charts[c];
    cert.require("padded_ball_in_domain", ch.id, ch.r + ch.R, "<", ch.domain.inradius());
    cert.require("epsilon_positive", ch.id, ch.epsilon, ">", 0.0);
    cert.require("epsilon_below_half", ch.id, ch.epsilon, "<", 0.5);
    const double bound = ch.epsilon > 0 ? (1.0 / (2.0 * ch.epsilon) - 1.0) * ch.R : 0.0;
    cert.require("inner_radius_bound", ch.id, ch.r, "<", bound);
    const Lattice L = chart_lattice(ch, cert.resolution);
    double uncovered = 0.0;
    for (std::size_t k = 0; k < L.size(); ++k) {
      const Vec p = L.point(k);
      if (!ch.in_core(p)) continue;
      bool covered = false;
      for (const auto& cp : spec.charts_containing(c, p)) {
        if (!member_set.count(cp.chart)) continue;
        const Chart& other = spec.charts[cp.chart];
        if (norm(cp.coords, other.norm()) < other.r) {
          covered = true;
          break;
        }
      }
      if (!covered) {
        uncovered += 1.0;
        if (uncovered_examples.size() < 5)
          uncovered_examples.push_back({{"chart", ch.id}, {"point", std::vector<double>(p.data(), p.data() + p.size())}});
      }
    }
    cert.require("inner_balls_cover", ch.id, uncovered, "==", 0.0);
  }
  if (!uncovered_examples.empty()) cert.details["uncovered_samples"] = uncovered_examples;
  return cert;
}

}  // namespace atlasdiffeo
