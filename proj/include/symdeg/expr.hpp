#pragma once

#include <charconv>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "symdeg/dual.hpp"
#include "symdeg/errors.hpp"

namespace symdeg {

/// Result of differentiated evaluation: value plus one partial per
/// active variable, in the order the active list was given.
struct DualValue {
  Complex value;
  std::vector<Complex> partials;
};

/// Immutable complex-valued expression in named variables.
///
/// Grammar (standard infix):
///   expr   := term (('+'|'-') term)*
///   term   := unary (('*'|'/') unary)*
///   unary  := '-' unary | power
///   power  := primary ('^' exponent)?     exponent: signed integer literal,
///                                         optionally parenthesized
///   primary:= number | 'i' | ident | ident '(' expr ')' | '(' expr ')'
///
/// '^' binds tighter than unary minus, which binds tighter than '*','/'.
/// Functions: sin, cos, exp, sqrt, conj. Identifiers are case-sensitive;
/// 'i' is reserved for the imaginary unit.
class Expr {
 public:
  Expr() = default;

  /// Parse with free identifiers (resolved by name at evaluation time).
  static Expr parse(std::string_view source) { return parse_impl(source, nullptr); }

  /// Parse against a declared variable list. Any identifier outside the
  /// list is a parse error; variable nodes are slot-resolved for fast
  /// evaluation against positional bindings.
  static Expr parse(std::string_view source, const std::vector<std::string>& variables) {
    return parse_impl(source, &variables);
  }

  bool empty() const { return nodes_.empty(); }

  /// Names of all variables referenced by the expression (first-use order).
  const std::vector<std::string>& variables() const { return var_names_; }

  /// Printable form with minimal parentheses; parse(print()) reproduces
  /// the tree exactly.
  std::string print() const { return nodes_.empty() ? "0" : print_node(root_); }

  bool operator==(const Expr& other) const {
    if (nodes_.empty() || other.nodes_.empty()) return nodes_.empty() == other.nodes_.empty();
    return equal_nodes(*this, root_, other, other.root_);
  }

  /// Evaluate with positional bindings aligned with the declared variable
  /// list given at parse time.
  Complex eval(std::span<const Complex> slot_values) const {
    Dual out = eval_node_slots(root_, [&](const Node& nd) {
      if (nd.var_slot < 0)
        throw EvalError("expression was not parsed against a variable list");
      return Dual::constant(slot_values[static_cast<size_t>(nd.var_slot)], 0);
    }).first;
    return out.v;
  }

  /// Evaluate with named bindings (convenience path for free-identifier
  /// expressions and tests).
  Complex eval(const std::map<std::string, Complex>& bindings) const {
    Dual out = eval_node_slots(root_, [&](const Node& nd) {
      auto it = bindings.find(nd.name);
      if (it == bindings.end()) throw EvalError("unbound variable '" + nd.name + "'");
      return Dual::constant(it->second, 0);
    }).first;
    return out.v;
  }

  /// Differentiated evaluation with fully general dual bindings: each
  /// variable carries its own value and partial vector (all of the same
  /// length), so chart chain rules compose for free. A variable counts as
  /// active when any of its partials is nonzero; conj over an active
  /// subtree is rejected.
  Dual eval_dual(std::span<const Dual> slot_bindings) const {
    return eval_node_slots(root_, [&](const Node& nd) {
      if (nd.var_slot < 0)
        throw EvalError("expression was not parsed against a variable list");
      return slot_bindings[static_cast<size_t>(nd.var_slot)];
    }).first;
  }

  /// Differentiated evaluation against named bindings and an ordered list
  /// of active variables; partials come back in that order.
  DualValue eval_dual(const std::map<std::string, Complex>& bindings,
                      const std::vector<std::string>& active) const {
    const int n = static_cast<int>(active.size());
    if (n > kMaxPartials) throw EvalError("too many active variables");
    auto lookup = [&](const Node& nd) {
      auto it = bindings.find(nd.name);
      if (it == bindings.end()) throw EvalError("unbound variable '" + nd.name + "'");
      Dual v = Dual::constant(it->second, n);
      for (int k = 0; k < n; ++k)
        if (active[static_cast<size_t>(k)] == nd.name) v.d[k] = Complex(1.0, 0.0);
      return v;
    };
    Dual out = eval_node_slots(root_, lookup).first;
    DualValue dv;
    dv.value = out.v;
    dv.partials.assign(out.d.begin(), out.d.begin() + n);
    return dv;
  }

 private:
  enum class Op : unsigned char {
    kLiteral, kVariable, kAdd, kSub, kMul, kDiv, kPow, kNeg,
    kSin, kCos, kExp, kSqrt, kConj,
  };

  struct Node {
    Op op;
    int lhs = -1;
    int rhs = -1;
    Complex literal{};
    int exponent = 0;
    int var_slot = -1;   // index into the declared list (or var_names_)
    std::string name;    // kVariable only
  };

  std::vector<Node> nodes_;
  int root_ = -1;
  std::vector<std::string> var_names_;

  // ---- evaluation ----

  // Returns (value, depends-on-active-variable).
  template <typename VarLookup>
  std::pair<Dual, bool> eval_node_slots(int idx, const VarLookup& lookup) const {
    const Node& nd = nodes_[static_cast<size_t>(idx)];
    switch (nd.op) {
      case Op::kLiteral: {
        Dual c;
        c.v = nd.literal;
        return {c, false};
      }
      case Op::kVariable: {
        Dual v = lookup(nd);
        bool active = false;
        for (int k = 0; k < v.n; ++k)
          if (v.d[k] != Complex(0.0, 0.0)) active = true;
        return {v, active};
      }
      case Op::kNeg: {
        auto [a, act] = eval_node_slots(nd.lhs, lookup);
        return {-a, act};
      }
      case Op::kPow: {
        auto [a, act] = eval_node_slots(nd.lhs, lookup);
        if (nd.exponent < 0 && a.v == Complex(0.0, 0.0))
          throw EvalError("division by zero: " + print_node(idx) + " with base = 0" +
                          " (negative exponent)");
        return {pow_int(a, nd.exponent), act};
      }
      case Op::kSin: case Op::kCos: case Op::kExp: case Op::kSqrt: {
        auto [a, act] = eval_node_slots(nd.lhs, lookup);
        switch (nd.op) {
          case Op::kSin: return {sin(a), act};
          case Op::kCos: return {cos(a), act};
          case Op::kExp: return {exp(a), act};
          default: return {sqrt(a), act};
        }
      }
      case Op::kConj: {
        auto [a, act] = eval_node_slots(nd.lhs, lookup);
        if (act)
          throw EvalError("conj applied to an expression involving an active "
                          "variable: " + print_node(idx));
        return {conj(a), false};
      }
      default: {
        auto [a, aact] = eval_node_slots(nd.lhs, lookup);
        auto [b, bact] = eval_node_slots(nd.rhs, lookup);
        const bool act = aact || bact;
        switch (nd.op) {
          case Op::kAdd: return {a + b, act};
          case Op::kSub: return {a - b, act};
          case Op::kMul: return {a * b, act};
          case Op::kDiv:
            if (b.v == Complex(0.0, 0.0))
              throw EvalError("division by zero in '" + print_node(idx) + "'" +
                              describe_variables(lookup));
            return {a / b, act};
          default: throw EvalError("corrupt expression tree");
        }
      }
    }
  }

  template <typename VarLookup>
  std::string describe_variables(const VarLookup& lookup) const {
    std::string out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
      const Node& nd = nodes_[i];
      if (nd.op != Op::kVariable) continue;
      if (out.find(" " + nd.name + " =") != std::string::npos) continue;
      Complex v;
      try {
        v = lookup(nd).v;
      } catch (const EvalError&) {
        continue;
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "%g%+gi", v.real(), v.imag());
      out += (out.empty() ? " with " : ", ") + nd.name + " = " + buf;
    }
    return out;
  }

  // ---- printing ----

  static int precedence(Op op) {
    switch (op) {
      case Op::kAdd: case Op::kSub: return 1;
      case Op::kMul: case Op::kDiv: return 2;
      case Op::kNeg: return 3;
      case Op::kPow: return 4;
      default: return 5;
    }
  }

  std::string print_node(int idx) const {
    const Node& nd = nodes_[static_cast<size_t>(idx)];
    auto wrap = [&](int child, bool needs) {
      std::string s = print_node(child);
      return needs ? "(" + s + ")" : s;
    };
    const int p = precedence(nd.op);
    switch (nd.op) {
      case Op::kLiteral: {
        if (nd.literal == Complex(0.0, 1.0)) return "i";
        char buf[40];
        auto res = std::to_chars(buf, buf + sizeof buf, nd.literal.real());
        return std::string(buf, res.ptr);
      }
      case Op::kVariable: return nd.name;
      case Op::kNeg:
        return "-" + wrap(nd.lhs, precedence(nodes_[static_cast<size_t>(nd.lhs)].op) < p);
      case Op::kPow: {
        std::string base = wrap(nd.lhs, precedence(nodes_[static_cast<size_t>(nd.lhs)].op) < 5);
        std::string e = std::to_string(nd.exponent);
        return base + "^" + (nd.exponent < 0 ? "(" + e + ")" : e);
      }
      case Op::kSin: return "sin(" + print_node(nd.lhs) + ")";
      case Op::kCos: return "cos(" + print_node(nd.lhs) + ")";
      case Op::kExp: return "exp(" + print_node(nd.lhs) + ")";
      case Op::kSqrt: return "sqrt(" + print_node(nd.lhs) + ")";
      case Op::kConj: return "conj(" + print_node(nd.lhs) + ")";
      default: {
        const char* sym = nd.op == Op::kAdd ? "+" : nd.op == Op::kSub ? "-"
                        : nd.op == Op::kMul ? "*" : "/";
        const int pl = precedence(nodes_[static_cast<size_t>(nd.lhs)].op);
        const int pr = precedence(nodes_[static_cast<size_t>(nd.rhs)].op);
        const bool right_paren = pr < p || (pr == p && (nd.op == Op::kSub || nd.op == Op::kDiv));
        return wrap(nd.lhs, pl < p) + sym + wrap(nd.rhs, right_paren);
      }
    }
  }

  static bool equal_nodes(const Expr& a, int ia, const Expr& b, int ib) {
    const Node& na = a.nodes_[static_cast<size_t>(ia)];
    const Node& nb = b.nodes_[static_cast<size_t>(ib)];
    if (na.op != nb.op) return false;
    switch (na.op) {
      case Op::kLiteral: return na.literal == nb.literal;
      case Op::kVariable: return na.name == nb.name;
      case Op::kPow:
        return na.exponent == nb.exponent && equal_nodes(a, na.lhs, b, nb.lhs);
      case Op::kAdd: case Op::kSub: case Op::kMul: case Op::kDiv:
        return equal_nodes(a, na.lhs, b, nb.lhs) && equal_nodes(a, na.rhs, b, nb.rhs);
      default:
        return equal_nodes(a, na.lhs, b, nb.lhs);
    }
  }

  // ---- parsing ----

  struct Lexer {
    std::string_view src;
    size_t pos = 0;
    int line = 1, col = 1;

    enum class Tok { kEnd, kNumber, kIdent, kPlus, kMinus, kStar, kSlash, kCaret, kLParen, kRParen };
    Tok tok = Tok::kEnd;
    double number = 0.0;
    bool number_is_integer = false;
    long long integer = 0;
    std::string ident;
    int tok_line = 1, tok_col = 1;

    explicit Lexer(std::string_view s) : src(s) { advance(); }

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, tok_line, tok_col); }

    void bump(size_t k = 1) {
      for (size_t j = 0; j < k && pos < src.size(); ++j) {
        if (src[pos] == '\n') { ++line; col = 1; } else { ++col; }
        ++pos;
      }
    }

    void advance() {
      while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t' ||
                                  src[pos] == '\n' || src[pos] == '\r'))
        bump();
      tok_line = line;
      tok_col = col;
      if (pos >= src.size()) { tok = Tok::kEnd; return; }
      const char c = src[pos];
      switch (c) {
        case '+': tok = Tok::kPlus; bump(); return;
        case '-': tok = Tok::kMinus; bump(); return;
        case '*': tok = Tok::kStar; bump(); return;
        case '/': tok = Tok::kSlash; bump(); return;
        case '^': tok = Tok::kCaret; bump(); return;
        case '(': tok = Tok::kLParen; bump(); return;
        case ')': tok = Tok::kRParen; bump(); return;
        default: break;
      }
      if (c >= '0' && c <= '9') {
        size_t end = pos;
        bool has_dot = false, has_exp = false;
        while (end < src.size()) {
          const char d = src[end];
          if (d >= '0' && d <= '9') { ++end; continue; }
          if (d == '.' && !has_dot && !has_exp) { has_dot = true; ++end; continue; }
          if ((d == 'e' || d == 'E') && !has_exp && end + 1 < src.size()) {
            size_t k = end + 1;
            if (src[k] == '+' || src[k] == '-') ++k;
            if (k < src.size() && src[k] >= '0' && src[k] <= '9') { has_exp = true; end = k; continue; }
          }
          break;
        }
        const std::string_view text = src.substr(pos, end - pos);
        auto res = std::from_chars(text.data(), text.data() + text.size(), number);
        if (res.ec != std::errc() || res.ptr != text.data() + text.size())
          fail("malformed number '" + std::string(text) + "'");
        number_is_integer = !has_dot && !has_exp;
        if (number_is_integer) {
          auto ires = std::from_chars(text.data(), text.data() + text.size(), integer);
          if (ires.ec != std::errc()) number_is_integer = false;
        }
        tok = Tok::kNumber;
        bump(end - pos);
        return;
      }
      if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
        size_t end = pos;
        while (end < src.size() &&
               ((src[end] >= 'a' && src[end] <= 'z') || (src[end] >= 'A' && src[end] <= 'Z') ||
                (src[end] >= '0' && src[end] <= '9') || src[end] == '_'))
          ++end;
        ident.assign(src.substr(pos, end - pos));
        tok = Tok::kIdent;
        bump(end - pos);
        return;
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

  struct Parser {
    Lexer lex;
    Expr& out;
    const std::vector<std::string>* declared;

    Parser(std::string_view src, Expr& e, const std::vector<std::string>* vars)
        : lex(src), out(e), declared(vars) {}

    int add(Node nd) {
      out.nodes_.push_back(std::move(nd));
      return static_cast<int>(out.nodes_.size()) - 1;
    }

    int parse_expr() {
      int lhs = parse_term();
      while (lex.tok == Lexer::Tok::kPlus || lex.tok == Lexer::Tok::kMinus) {
        const Op op = lex.tok == Lexer::Tok::kPlus ? Op::kAdd : Op::kSub;
        lex.advance();
        const int rhs = parse_term();
        Node nd; nd.op = op; nd.lhs = lhs; nd.rhs = rhs;
        lhs = add(std::move(nd));
      }
      return lhs;
    }

    int parse_term() {
      int lhs = parse_unary();
      while (lex.tok == Lexer::Tok::kStar || lex.tok == Lexer::Tok::kSlash) {
        const Op op = lex.tok == Lexer::Tok::kStar ? Op::kMul : Op::kDiv;
        lex.advance();
        const int rhs = parse_unary();
        Node nd; nd.op = op; nd.lhs = lhs; nd.rhs = rhs;
        lhs = add(std::move(nd));
      }
      return lhs;
    }

    int parse_unary() {
      if (lex.tok == Lexer::Tok::kMinus) {
        lex.advance();
        const int child = parse_unary();
        Node nd; nd.op = Op::kNeg; nd.lhs = child;
        return add(std::move(nd));
      }
      return parse_power();
    }

    int parse_power() {
      int base = parse_primary();
      if (lex.tok == Lexer::Tok::kCaret) {
        lex.advance();
        const int e = parse_exponent();
        Node nd; nd.op = Op::kPow; nd.lhs = base; nd.exponent = e;
        base = add(std::move(nd));
        if (lex.tok == Lexer::Tok::kCaret)
          lex.fail("chained '^' is ambiguous; parenthesize the base");
      }
      return base;
    }

    int parse_exponent() {
      bool parens = false;
      if (lex.tok == Lexer::Tok::kLParen) { parens = true; lex.advance(); }
      int sign = 1;
      while (lex.tok == Lexer::Tok::kMinus) { sign = -sign; lex.advance(); }
      if (lex.tok != Lexer::Tok::kNumber || !lex.number_is_integer)
        lex.fail("exponent must be an integer literal");
      const long long e = lex.integer;
      if (e > 64) lex.fail("exponent too large");
      lex.advance();
      if (parens) {
        if (lex.tok != Lexer::Tok::kRParen) lex.fail("expected ')' after exponent");
        lex.advance();
      }
      return static_cast<int>(sign * e);
    }

    int parse_primary() {
      switch (lex.tok) {
        case Lexer::Tok::kNumber: {
          Node nd; nd.op = Op::kLiteral; nd.literal = Complex(lex.number, 0.0);
          lex.advance();
          return add(std::move(nd));
        }
        case Lexer::Tok::kLParen: {
          lex.advance();
          const int inner = parse_expr();
          if (lex.tok != Lexer::Tok::kRParen) lex.fail("expected ')'");
          lex.advance();
          return inner;
        }
        case Lexer::Tok::kIdent: {
          const std::string name = lex.ident;
          lex.advance();
          if (name == "i") {
            Node nd; nd.op = Op::kLiteral; nd.literal = Complex(0.0, 1.0);
            return add(std::move(nd));
          }
          if (lex.tok == Lexer::Tok::kLParen) {
            Op op;
            if (name == "sin") op = Op::kSin;
            else if (name == "cos") op = Op::kCos;
            else if (name == "exp") op = Op::kExp;
            else if (name == "sqrt") op = Op::kSqrt;
            else if (name == "conj") op = Op::kConj;
            else lex.fail("unknown function '" + name + "'");
            lex.advance();
            const int arg = parse_expr();
            if (lex.tok != Lexer::Tok::kRParen) lex.fail("expected ')' after argument of " + name);
            lex.advance();
            Node nd; nd.op = op; nd.lhs = arg;
            return add(std::move(nd));
          }
          Node nd; nd.op = Op::kVariable; nd.name = name;
          if (declared != nullptr) {
            int slot = -1;
            for (size_t k = 0; k < declared->size(); ++k)
              if ((*declared)[k] == name) { slot = static_cast<int>(k); break; }
            if (slot < 0) lex.fail("unknown variable '" + name + "'");
            nd.var_slot = slot;
          }
          bool seen = false;
          for (const auto& v : out.var_names_) seen = seen || v == name;
          if (!seen) out.var_names_.push_back(name);
          return add(std::move(nd));
        }
        default:
          lex.fail("expected a number, variable, function call, or '('");
      }
    }
  };

  static Expr parse_impl(std::string_view source, const std::vector<std::string>* vars) {
    Expr e;
    Parser p(source, e, vars);
    e.root_ = p.parse_expr();
    if (p.lex.tok != Lexer::Tok::kEnd) p.lex.fail("unexpected trailing input");
    return e;
  }
};

}  // namespace symdeg
