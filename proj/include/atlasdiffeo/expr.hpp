#pragma once

#include "atlasdiffeo/linalg.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace atlasdiffeo {

enum class Func { sin, cos, exp, log, sqrt, tanh, abs, min, max };

// Immutable expression over chart variables x1..xd and chart offsets o1..od.
class Expr {
 public:
  enum class Kind { number, variable, offset, pi, negate, add, sub, mul, div, pow, call };

  struct Node {
    Kind kind = Kind::number;
    double value = 0.0;
    int index = 0;
    Func func = Func::sin;
    std::vector<std::shared_ptr<const Node>> args;
  };

  Expr();  // the constant 0
  static Expr parse(std::string_view src, int dim);
  static Expr constant(double v);

  double eval(const double* x, const double* offset = nullptr) const;
  double eval(const Vec& x) const { return eval(x.data(), nullptr); }
  double eval(const Vec& x, const Vec& offset) const {
    return eval(x.data(), offset.size() ? offset.data() : nullptr);
  }

  std::string print() const;
  bool structurally_equal(const Expr& other) const;
  bool depends_on_position() const { return uses_variables_; }
  bool uses_offsets() const { return uses_offsets_; }
  const Node& root() const { return *root_; }

 private:
  explicit Expr(std::shared_ptr<const Node> root);
  void compile();

  struct Instr {
    unsigned char op;
    unsigned char argc;
    int index;
    double value;
  };

  std::shared_ptr<const Node> root_;
  std::vector<Instr> program_;
  int max_stack_ = 0;
  bool uses_variables_ = false;
  bool uses_offsets_ = false;
};

std::string_view func_name(Func f);

}  // namespace atlasdiffeo
