#pragma once

// Closed-form scalar expressions used for metric conformal factors, tensor
// components and sphere-bundle test functions.
//
// Grammar (recursive descent, whitespace ignored):
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?
//   primary := number | x<i> | v<i> | fn '(' expr ')' | '(' expr ')'
//   fn      := sin | cos | exp
//
// x1..xd are base coordinates, v1..vd fiber coordinates (only when enabled).
// Evaluation is templated on the scalar type so dual numbers flow through.

#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geotomo/dual.hpp"
#include "geotomo/errors.hpp"
#include "geotomo/linalg.hpp"

namespace geotomo {

class Expression {
 public:
  enum class Op { constant, variable, negate, add, sub, mul, div, ipow, rpow, vpow, sin, cos, exp };

  Expression() : nodes_(std::make_shared<const std::vector<Node>>(1)), source_("0") {}

  /// Parses src over `dim` base coordinates; fiber variables v1..vd are
  /// accepted only when allow_fiber is set.
  static Expression parse(std::string_view src, int dim, bool allow_fiber = false) {
    Parser p{src, dim, allow_fiber, {}, 0};
    const int root = p.expr();
    p.skip_ws();
    if (p.pos != src.size()) throw ParseError("unexpected character '" + std::string(1, src[p.pos]) + "'", p.pos);
    Expression e;
    e.nodes_ = std::make_shared<const std::vector<Node>>(std::move(p.nodes));
    e.root_ = root;
    e.source_ = std::string(src);
    e.dim_ = dim;
    e.fiber_ = allow_fiber;
    return e;
  }

  static Expression constant(double c, int dim) { return parse(format_number(c), dim); }

  const std::string& source() const { return source_; }
  int dim() const { return dim_; }
  bool allows_fiber() const { return fiber_; }

  /// True if some v_i appears.
  bool depends_on_fiber() const {
    for (const auto& n : *nodes_)
      if (n.op == Op::variable && n.index >= dim_) return true;
    return false;
  }

  /// vars holds x1..xd followed (optionally) by v1..vd.
  template <Scalar T>
  T evaluate(std::span<const T> vars) const {
    return eval<T>(root_, vars);
  }

  template <Scalar T, int D>
  T operator()(const Vec<T, D>& x) const {
    return evaluate<T>(std::span<const T>(x.data(), D));
  }

  template <Scalar T, int D>
  T operator()(const Vec<T, D>& x, const Vec<T, D>& v) const {
    std::array<T, 2 * D> vars;
    for (int i = 0; i < D; ++i) {
      vars[i] = x[i];
      vars[D + i] = v[i];
    }
    return evaluate<T>(std::span<const T>(vars.data(), 2 * D));
  }

  static std::string format_number(double c) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, c);
    std::string s(buf, res.ptr);
    return c < 0 ? "(" + s + ")" : s;
  }

  friend Expression operator+(const Expression& a, const Expression& b) { return combine(a, "+", b); }
  friend Expression operator-(const Expression& a, const Expression& b) { return combine(a, "-", b); }
  friend Expression operator*(const Expression& a, const Expression& b) { return combine(a, "*", b); }
  friend Expression operator*(double c, const Expression& a) {
    return parse(format_number(c) + "*(" + a.source_ + ")", a.dim_, a.fiber_);
  }

 private:
  struct Node {
    Op op = Op::constant;
    int lhs = -1;
    int rhs = -1;
    int index = -1;
    double value = 0.0;
  };

  static Expression combine(const Expression& a, const char* op, const Expression& b) {
    if (a.dim_ != b.dim_) throw InputError("cannot combine expressions of different dimension");
    return parse("(" + a.source_ + ")" + op + "(" + b.source_ + ")", a.dim_, a.fiber_ || b.fiber_);
  }

  template <Scalar T>
  T eval(int i, std::span<const T> vars) const {
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    const Node& n = (*nodes_)[i];
    switch (n.op) {
      case Op::constant:
        return T(n.value);
      case Op::variable:
        if (n.index >= static_cast<int>(vars.size()))
          throw InputError("expression '" + source_ + "' needs fiber variables in this context");
        return vars[n.index];
      case Op::negate:
        return -eval<T>(n.lhs, vars);
      case Op::add:
        return eval<T>(n.lhs, vars) + eval<T>(n.rhs, vars);
      case Op::sub:
        return eval<T>(n.lhs, vars) - eval<T>(n.rhs, vars);
      case Op::mul:
        return eval<T>(n.lhs, vars) * eval<T>(n.rhs, vars);
      case Op::div:
        return eval<T>(n.lhs, vars) / eval<T>(n.rhs, vars);
      case Op::ipow:
        return ipow(eval<T>(n.lhs, vars), static_cast<int>(n.value));
      case Op::rpow: {
        using std::pow;
        return pow(eval<T>(n.lhs, vars), n.value);
      }
      case Op::vpow:
        return exp(eval<T>(n.rhs, vars) * log(eval<T>(n.lhs, vars)));
      case Op::sin:
        return sin(eval<T>(n.lhs, vars));
      case Op::cos:
        return cos(eval<T>(n.lhs, vars));
      case Op::exp:
        return exp(eval<T>(n.lhs, vars));
    }
    return T(0.0);
  }

  struct Parser {
    std::string_view src;
    int dim;
    bool allow_fiber;
    std::vector<Node> nodes;
    std::size_t pos;

    int add(Node n) {
      nodes.push_back(n);
      return static_cast<int>(nodes.size()) - 1;
    }
    void skip_ws() {
      while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }
    bool accept(char c) {
      skip_ws();
      if (pos < src.size() && src[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    int expr() {
      int lhs = term();
      for (;;) {
        if (accept('+'))
          lhs = add({Op::add, lhs, term()});
        else if (accept('-'))
          lhs = add({Op::sub, lhs, term()});
        else
          return lhs;
      }
    }
    int term() {
      int lhs = unary();
      for (;;) {
        if (accept('*'))
          lhs = add({Op::mul, lhs, unary()});
        else if (accept('/'))
          lhs = add({Op::div, lhs, unary()});
        else
          return lhs;
      }
    }
    int unary() {
      if (accept('-')) return add({Op::negate, unary()});
      if (accept('+')) return unary();
      return power();
    }
    int power() {
      const int base = primary();
      if (!accept('^')) return base;
      const int exponent = unary();
      const Node& e = nodes[exponent];
      if (e.op == Op::constant || (e.op == Op::negate && nodes[e.lhs].op == Op::constant)) {
        const double c = e.op == Op::constant ? e.value : -nodes[e.lhs].value;
        if (c == std::round(c) && std::abs(c) < 64) return add({Op::ipow, base, -1, -1, c});
        return add({Op::rpow, base, -1, -1, c});
      }
      return add({Op::vpow, base, exponent});
    }
    int primary() {
      skip_ws();
      if (pos >= src.size()) throw ParseError("unexpected end of expression", pos);
      const char c = src[pos];
      if (c == '(') {
        ++pos;
        const int inner = expr();
        if (!accept(')')) throw ParseError("expected ')'", pos);
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
      throw ParseError("unexpected character '" + std::string(1, c) + "'", pos);
    }
    int number() {
      double value = 0.0;
      auto res = std::from_chars(src.data() + pos, src.data() + src.size(), value);
      if (res.ec != std::errc()) throw ParseError("malformed number", pos);
      pos = static_cast<std::size_t>(res.ptr - src.data());
      return add({Op::constant, -1, -1, -1, value});
    }
    int identifier() {
      const std::size_t start = pos;
      while (pos < src.size() && std::isalnum(static_cast<unsigned char>(src[pos]))) ++pos;
      const std::string_view name = src.substr(start, pos - start);
      if (name == "sin" || name == "cos" || name == "exp") {
        if (!accept('(')) throw ParseError("expected '(' after " + std::string(name), pos);
        const int arg = expr();
        if (!accept(')')) throw ParseError("expected ')'", pos);
        const Op op = name == "sin" ? Op::sin : name == "cos" ? Op::cos : Op::exp;
        return add({op, arg});
      }
      if (name.size() >= 2 && (name[0] == 'x' || name[0] == 'v')) {
        int k = 0;
        auto res = std::from_chars(name.data() + 1, name.data() + name.size(), k);
        if (res.ec == std::errc() && res.ptr == name.data() + name.size() && k >= 1 && k <= dim) {
          if (name[0] == 'x') return add({Op::variable, -1, -1, k - 1});
          if (!allow_fiber) throw ParseError("fiber variable '" + std::string(name) + "' not allowed here", start);
          return add({Op::variable, -1, -1, dim + k - 1});
        }
      }
      throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }
  };

  std::shared_ptr<const std::vector<Node>> nodes_;
  int root_ = 0;
  std::string source_;
  int dim_ = 1;
  bool fiber_ = false;
};

}  // namespace geotomo
