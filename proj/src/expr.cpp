#include "atlasdiffeo/expr.hpp"

#include "atlasdiffeo/errors.hpp"

#include <array>
#include <charconv>
#include <cctype>
#include <cmath>
#include <functional>
#include <numbers>

namespace atlasdiffeo {

std::string_view func_name(Func f) {
  switch (f) {
    case Func::sin: return "sin";
    case Func::cos: return "cos";
    case Func::exp: return "exp";
    case Func::log: return "log";
    case Func::sqrt: return "sqrt";
    case Func::tanh: return "tanh";
    case Func::abs: return "abs";
    case Func::min: return "min";
    case Func::max: return "max";
  }
  return "?";
}

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;
using Kind = Expr::Kind;

bool lookup_func(std::string_view name, Func& f) {
  static constexpr std::array<Func, 9> all{Func::sin, Func::cos, Func::exp, Func::log, Func::sqrt,
                                           Func::tanh, Func::abs, Func::min, Func::max};
  for (Func g : all) {
    if (func_name(g) == name) {
      f = g;
      return true;
    }
  }
  return false;
}

NodePtr make(Kind k, std::vector<NodePtr> args = {}, double value = 0.0, int index = 0,
             Func func = Func::sin) {
  auto n = std::make_shared<Expr::Node>();
  n->kind = k;
  n->value = value;
  n->index = index;
  n->func = func;
  n->args = std::move(args);
  return n;
}

class Parser {
 public:
  Parser(std::string_view src, int dim) : s_(src), dim_(dim) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip_ws();
    if (pos_ != s_.size()) throw SyntaxError(pos_, "unexpected character '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= s_.size()) throw SyntaxError(pos_, std::string("expected '") + c + "' but input ended");
      throw SyntaxError(pos_, std::string("expected '") + c + "'");
    }
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) lhs = make(Kind::add, {lhs, term()});
      else if (accept('-')) lhs = make(Kind::sub, {lhs, term()});
      else return lhs;
    }
  }
  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) lhs = make(Kind::mul, {lhs, unary()});
      else if (accept('/')) lhs = make(Kind::div, {lhs, unary()});
      else return lhs;
    }
  }
  NodePtr unary() {
    if (accept('-')) return make(Kind::negate, {unary()});
    return power();
  }
  NodePtr power() {
    NodePtr base = atom();
    if (accept('^')) return make(Kind::pow, {base, unary()});
    return base;
  }
  NodePtr atom() {
    skip_ws();
    if (pos_ >= s_.size()) throw SyntaxError(pos_, "unexpected end of input");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    if (accept('(')) {
      NodePtr e = expr();
      expect(')');
      return e;
    }
    throw SyntaxError(pos_, "unexpected character '" + std::string(1, c) + "'");
  }
  NodePtr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t nd = digits();
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      nd += digits();
    }
    if (nd == 0) throw SyntaxError(start, "malformed number");
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (digits() == 0) pos_ = save;
    }
    double v = 0.0;
    auto res = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (res.ec != std::errc() || res.ptr != s_.data() + pos_) throw SyntaxError(start, "malformed number");
    return make(Kind::number, {}, v);
  }
  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    std::string name(s_.substr(start, pos_ - start));
    skip_ws();
    const bool call = pos_ < s_.size() && s_[pos_] == '(';
    if (call) {
      Func f;
      if (!lookup_func(name, f)) throw Error(ErrorCode::UnknownIdentifier, "unknown function '" + name + "'");
      ++pos_;
      std::vector<NodePtr> args{expr()};
      while (accept(',')) args.push_back(expr());
      expect(')');
      const bool binary = f == Func::min || f == Func::max;
      if ((!binary && args.size() != 1) || (binary && args.size() < 2))
        throw Error(ErrorCode::ArityError, "wrong number of arguments for '" + name + "'");
      return make(Kind::call, std::move(args), 0.0, 0, f);
    }
    if (name == "pi") return make(Kind::pi);
    if (name.size() >= 2 && (name[0] == 'x' || name[0] == 'o')) {
      bool all_digits = name[1] != '0';
      for (std::size_t i = 1; i < name.size(); ++i)
        all_digits = all_digits && std::isdigit(static_cast<unsigned char>(name[i]));
      if (all_digits && name.size() <= 4) {
        const int idx = std::stoi(name.substr(1));
        if (idx >= 1 && (dim_ <= 0 || idx <= dim_))
          return make(name[0] == 'x' ? Kind::variable : Kind::offset, {}, 0.0, idx - 1);
      }
    }
    Func f;
    if (lookup_func(name, f)) throw SyntaxError(pos_, "function '" + name + "' requires an argument list");
    throw Error(ErrorCode::UnknownIdentifier, "unknown identifier '" + name + "'");
  }

  std::string_view s_;
  int dim_;
  std::size_t pos_ = 0;
};

enum Op : unsigned char { kNum, kVar, kOff, kNeg, kAdd, kSub, kMul, kDiv, kPow, kFn };

int level(const Expr::Node& n) {
  switch (n.kind) {
    case Kind::add:
    case Kind::sub: return 1;
    case Kind::mul:
    case Kind::div: return 2;
    case Kind::negate: return 3;
    case Kind::pow: return 4;
    default: return 5;
  }
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  std::string s(buf.data(), res.ptr);
  if (v < 0) return "(" + s + ")";
  return s;
}

std::string print_node(const Expr::Node& n);

std::string wrap(const Expr::Node& n, int min_level) {
  std::string s = print_node(n);
  return level(n) < min_level ? "(" + s + ")" : s;
}

std::string print_node(const Expr::Node& n) {
  switch (n.kind) {
    case Kind::number: return format_number(n.value);
    case Kind::variable: return "x" + std::to_string(n.index + 1);
    case Kind::offset: return "o" + std::to_string(n.index + 1);
    case Kind::pi: return "pi";
    case Kind::negate: return "-" + wrap(*n.args[0], 3);
    case Kind::add: return wrap(*n.args[0], 1) + " + " + wrap(*n.args[1], 2);
    case Kind::sub: return wrap(*n.args[0], 1) + " - " + wrap(*n.args[1], 2);
    case Kind::mul: return wrap(*n.args[0], 2) + "*" + wrap(*n.args[1], 3);
    case Kind::div: return wrap(*n.args[0], 2) + "/" + wrap(*n.args[1], 3);
    case Kind::pow: return wrap(*n.args[0], 5) + "^" + wrap(*n.args[1], 3);
    case Kind::call: {
      std::string s(func_name(n.func));
      s += "(";
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) s += ", ";
        s += print_node(*n.args[i]);
      }
      return s + ")";
    }
  }
  return "";
}

bool equal_nodes(const Expr::Node& a, const Expr::Node& b) {
  if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
  switch (a.kind) {
    case Kind::number:
      if (a.value != b.value) return false;
      break;
    case Kind::variable:
    case Kind::offset:
      if (a.index != b.index) return false;
      break;
    case Kind::call:
      if (a.func != b.func) return false;
      break;
    default: break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (!equal_nodes(*a.args[i], *b.args[i])) return false;
  return true;
}

double apply_func(Func f, const double* a, int argc) {
  switch (f) {
    case Func::sin: return std::sin(a[0]);
    case Func::cos: return std::cos(a[0]);
    case Func::exp: return std::exp(a[0]);
    case Func::log: return std::log(a[0]);
    case Func::sqrt: return std::sqrt(a[0]);
    case Func::tanh: return std::tanh(a[0]);
    case Func::abs: return std::abs(a[0]);
    case Func::min: {
      double m = a[0];
      for (int i = 1; i < argc; ++i) m = std::min(m, a[i]);
      return m;
    }
    case Func::max: {
      double m = a[0];
      for (int i = 1; i < argc; ++i) m = std::max(m, a[i]);
      return m;
    }
  }
  return 0.0;
}

double int_pow(double b, int e) {
  double r = 1.0;
  bool neg = e < 0;
  unsigned u = static_cast<unsigned>(neg ? -e : e);
  while (u) {
    if (u & 1U) r *= b;
    b *= b;
    u >>= 1U;
  }
  return neg ? 1.0 / r : r;
}

}  // namespace

Expr::Expr() : Expr(make(Kind::number, {}, 0.0)) {}

Expr::Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) { compile(); }

Expr Expr::parse(std::string_view src, int dim) { return Expr(Parser(src, dim).parse()); }

Expr Expr::constant(double v) { return Expr(make(Kind::number, {}, v)); }

void Expr::compile() {
  program_.clear();
  int depth = 0;
  max_stack_ = 0;
  uses_variables_ = uses_offsets_ = false;
  auto push = [&](Instr in, int delta) {
    program_.push_back(in);
    depth += delta;
    max_stack_ = std::max(max_stack_, depth);
  };
  std::function<void(const Node&)> emit = [&](const Node& n) {
    switch (n.kind) {
      case Kind::number: push({kNum, 0, 0, n.value}, 1); break;
      case Kind::pi: push({kNum, 0, 0, std::numbers::pi}, 1); break;
      case Kind::variable:
        uses_variables_ = true;
        push({kVar, 0, n.index, 0.0}, 1);
        break;
      case Kind::offset:
        uses_offsets_ = true;
        push({kOff, 0, n.index, 0.0}, 1);
        break;
      case Kind::negate:
        emit(*n.args[0]);
        push({kNeg, 0, 0, 0.0}, 0);
        break;
      case Kind::add:
      case Kind::sub:
      case Kind::mul:
      case Kind::div:
      case Kind::pow: {
        emit(*n.args[0]);
        emit(*n.args[1]);
        const unsigned char op = n.kind == Kind::add   ? kAdd
                                 : n.kind == Kind::sub ? kSub
                                 : n.kind == Kind::mul ? kMul
                                 : n.kind == Kind::div ? kDiv
                                                       : kPow;
        push({op, 0, 0, 0.0}, -1);
        break;
      }
      case Kind::call: {
        for (const auto& a : n.args) emit(*a);
        const int argc = static_cast<int>(n.args.size());
        push({kFn, static_cast<unsigned char>(argc), static_cast<int>(n.func), 0.0}, 1 - argc);
        break;
      }
    }
  };
  emit(*root_);
}

double Expr::eval(const double* x, const double* offset) const {
  std::array<double, 64> small{};
  std::vector<double> big;
  double* st = small.data();
  if (max_stack_ > static_cast<int>(small.size())) {
    big.resize(static_cast<std::size_t>(max_stack_));
    st = big.data();
  }
  int sp = 0;
  for (const Instr& in : program_) {
    switch (in.op) {
      case kNum: st[sp++] = in.value; break;
      case kVar: st[sp++] = x[in.index]; break;
      case kOff: st[sp++] = offset ? offset[in.index] : 0.0; break;
      case kNeg: st[sp - 1] = -st[sp - 1]; break;
      case kAdd: --sp; st[sp - 1] += st[sp]; break;
      case kSub: --sp; st[sp - 1] -= st[sp]; break;
      case kMul: --sp; st[sp - 1] *= st[sp]; break;
      case kDiv: --sp; st[sp - 1] /= st[sp]; break;
      case kPow: {
        --sp;
        const double e = st[sp];
        if (e == std::floor(e) && std::abs(e) <= 64) st[sp - 1] = int_pow(st[sp - 1], static_cast<int>(e));
        else st[sp - 1] = std::pow(st[sp - 1], e);
        break;
      }
      case kFn: {
        const int argc = in.argc;
        sp -= argc;
        st[sp] = apply_func(static_cast<Func>(in.index), st + sp, argc);
        ++sp;
        break;
      }
    }
  }
  return st[0];
}

std::string Expr::print() const { return print_node(*root_); }

bool Expr::structurally_equal(const Expr& other) const { return equal_nodes(*root_, *other.root_); }

}  // namespace atlasdiffeo
