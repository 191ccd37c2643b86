#pragma once
// Closed-form expression support for profiles and field laws. The grammar
// covers +, -, *, /, ^, unary minus, parentheses, numeric literals, the
// constant pi, named variables and the functions sin, cos, exp. Parsed
// expressions compile to a small postfix program that can be evaluated
// over plain doubles or over Taylor/jet scalars for exact derivatives.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "gyrolab/series.hpp"

namespace gyrolab {

struct ExprError : std::runtime_error {
  ExprError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " (at position " + std::to_string(pos + 1) + ")"),
        position(pos) {}
  std::size_t position;
};

class Expr {
 public:
  Expr() = default;

  // Parses text over the given variable names. Throws ExprError on any
  // syntax problem or reference to an unknown name.
  static Expr parse(const std::string& text, const std::vector<std::string>& variables);

  bool empty() const { return program_.empty(); }
  const std::string& text() const { return text_; }
  bool depends_on(int var_index) const;
  bool is_constant() const;

  double eval(const double* vars) const;
  Series6 eval_series(const Series6* vars) const { return eval_t<Series6>(vars); }
  Jet2 eval_jet(const Jet2* vars) const { return eval_t<Jet2>(vars); }

  template <class T>
  T eval_t(const T* vars) const;

 private:
  enum class Op : int {
    push_const,
    push_var,
    add,
    sub,
    mul,
    div,
    neg,
    pow_const,  // exponent folded at parse time
    pow_dyn,    // exponent is itself an expression
    fn_sin,
    fn_cos,
    fn_exp,
  };
  struct Instr {
    Op op;
    double value = 0.0;  // constant or exponent
    int var = -1;
  };
  std::vector<Instr> program_;
  std::string text_;

  friend class ExprParser;
};

template <class T>
T Expr::eval_t(const T* vars) const {
  T stack[64];
  int top = -1;
  for (const Instr& ins : program_) {
    switch (ins.op) {
      case Op::push_const:
        stack[++top] = T::constant(ins.value);
        break;
      case Op::push_var:
        stack[++top] = vars[ins.var];
        break;
      case Op::add:
        stack[top - 1] = stack[top - 1] + stack[top];
        --top;
        break;
      case Op::sub:
        stack[top - 1] = stack[top - 1] - stack[top];
        --top;
        break;
      case Op::mul:
        stack[top - 1] = stack[top - 1] * stack[top];
        --top;
        break;
      case Op::div:
        stack[top - 1] = stack[top - 1] / stack[top];
        --top;
        break;
      case Op::neg:
        stack[top] = -stack[top];
        break;
      case Op::pow_const:
        stack[top] = pow(stack[top], ins.value);
        break;
      case Op::pow_dyn:
        stack[top - 1] = exp(log(stack[top - 1]) * stack[top]);
        --top;
        break;
      case Op::fn_sin:
        stack[top] = sin(stack[top]);
        break;
      case Op::fn_cos:
        stack[top] = cos(stack[top]);
        break;
      case Op::fn_exp:
        stack[top] = exp(stack[top]);
        break;
    }
  }
  return stack[0];
}

// Plain doubles lack the static constant() hook used by the jet types.
template <>
double Expr::eval_t<double>(const double* vars) const;

}  // namespace gyrolab
