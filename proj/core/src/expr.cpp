#include "gyrolab/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace gyrolab {

namespace {

struct Token {
  enum Kind { number, name, op, lparen, rparen, end } kind = end;
  double value = 0.0;
  std::string text;
  char ch = 0;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& s) : s_(s) {}

  Token next() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
    Token t;
    t.pos = i_;
    if (i_ >= s_.size()) {
      t.kind = Token::end;
      return t;
    }
    char c = s_[i_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* start = s_.c_str() + i_;
      char* after = nullptr;
      t.value = std::strtod(start, &after);
      if (after == start) throw ExprError("malformed number", i_);
      i_ += static_cast<std::size_t>(after - start);
      t.kind = Token::number;
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i_;
      while (j < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[j])) || s_[j] == '_'))
        ++j;
      t.kind = Token::name;
      t.text = s_.substr(i_, j - i_);
      i_ = j;
      return t;
    }
    if (c == '(') {
      t.kind = Token::lparen;
      ++i_;
      return t;
    }
    if (c == ')') {
      t.kind = Token::rparen;
      ++i_;
      return t;
    }
    if (c == '+' || c == '-' || c == '*' || c == '/' || c == '^') {
      t.kind = Token::op;
      t.ch = c;
      ++i_;
      return t;
    }
    throw ExprError(std::string("unexpected character '") + c + "'", i_);
  }

 private:
  const std::string& s_;
  std::size_t i_ = 0;
};

}  // namespace

class ExprParser {
 public:
  ExprParser(const std::string& text, const std::vector<std::string>& vars)
      : lex_(text), vars_(vars) {
    advance();
  }

  Expr finish(const std::string& text) {
    parse_sum();
    if (cur_.kind != Token::end) throw ExprError("trailing input after expression", cur_.pos);
    Expr e;
    e.program_ = std::move(prog_);
    e.text_ = text;
    return e;
  }

 private:
  using Op = Expr::Op;
  Lexer lex_;
  const std::vector<std::string>& vars_;
  Token cur_;
  std::vector<Expr::Instr> prog_;

  void advance() { cur_ = lex_.next(); }

  void emit(Op op, double v = 0.0, int var = -1) { prog_.push_back({op, v, var}); }

  void parse_sum() {
    parse_product();
    while (cur_.kind == Token::op && (cur_.ch == '+' || cur_.ch == '-')) {
      char c = cur_.ch;
      advance();
      parse_product();
      emit(c == '+' ? Op::add : Op::sub);
    }
  }

  void parse_product() {
    parse_unary();
    while (cur_.kind == Token::op && (cur_.ch == '*' || cur_.ch == '/')) {
      char c = cur_.ch;
      advance();
      parse_unary();
      emit(c == '*' ? Op::mul : Op::div);
    }
  }

  void parse_unary() {
    if (cur_.kind == Token::op && cur_.ch == '-') {
      advance();
      parse_unary();
      emit(Op::neg);
      return;
    }
    if (cur_.kind == Token::op && cur_.ch == '+') {
      advance();
      parse_unary();
      return;
    }
    parse_power();
  }

  // Right associative: a ^ b ^ c = a ^ (b ^ c). The exponent is folded to a
  // constant when possible so that integer and half integer powers stay
  // exact for jet evaluation.
  void parse_power() {
    parse_atom();
    if (cur_.kind == Token::op && cur_.ch == '^') {
      std::size_t pos = cur_.pos;
      advance();
      std::size_t mark = prog_.size();
      parse_unary_for_power();
      if (constant_tail(mark)) {
        double expv = fold_constant_tail(mark);
        prog_.resize(mark);
        emit(Op::pow_const, expv);
      } else {
        (void)pos;
        emit(Op::pow_dyn);
      }
    }
  }

  // Exponent of '^': allow unary minus and nested powers, same as unary.
  void parse_unary_for_power() {
    if (cur_.kind == Token::op && cur_.ch == '-') {
      advance();
      parse_unary_for_power();
      emit(Op::neg);
      return;
    }
    parse_power();
  }

  void parse_atom() {
    switch (cur_.kind) {
      case Token::number: {
        emit(Op::push_const, cur_.value);
        advance();
        return;
      }
      case Token::name: {
        std::string name = cur_.text;
        std::size_t pos = cur_.pos;
        advance();
        if (cur_.kind == Token::lparen) {
          advance();
          parse_sum();
          if (cur_.kind != Token::rparen) throw ExprError("expected ')'", cur_.pos);
          advance();
          if (name == "sin") emit(Op::fn_sin);
          else if (name == "cos") emit(Op::fn_cos);
          else if (name == "exp") emit(Op::fn_exp);
          else throw ExprError("unknown function '" + name + "'", pos);
          return;
        }
        if (name == "pi") {
          emit(Op::push_const, M_PI);
          return;
        }
        for (std::size_t i = 0; i < vars_.size(); ++i) {
          if (vars_[i] == name) {
            emit(Op::push_var, 0.0, static_cast<int>(i));
            return;
          }
        }
        std::string allowed;
        for (const auto& v : vars_) allowed += (allowed.empty() ? "" : ", ") + v;
        throw ExprError("unknown variable '" + name + "' (allowed: " + allowed + ")", pos);
      }
      case Token::lparen: {
        advance();
        parse_sum();
        if (cur_.kind != Token::rparen) throw ExprError("expected ')'", cur_.pos);
        advance();
        return;
      }
      default:
        throw ExprError("expected a value", cur_.pos);
    }
  }

  bool constant_tail(std::size_t mark) const {
    for (std::size_t i = mark; i < prog_.size(); ++i)
      if (prog_[i].op == Op::push_var) return false;
    return true;
  }

  double fold_constant_tail(std::size_t mark) const {
    // Evaluate the constant sub-program directly.
    double stack[64];
    int top = -1;
    for (std::size_t i = mark; i < prog_.size(); ++i) {
      const auto& ins = prog_[i];
      switch (ins.op) {
        case Op::push_const: stack[++top] = ins.value; break;
        case Op::add: stack[top - 1] += stack[top]; --top; break;
        case Op::sub: stack[top - 1] -= stack[top]; --top; break;
        case Op::mul: stack[top - 1] *= stack[top]; --top; break;
        case Op::div: stack[top - 1] /= stack[top]; --top; break;
        case Op::neg: stack[top] = -stack[top]; break;
        case Op::pow_const: stack[top] = std::pow(stack[top], ins.value); break;
        case Op::pow_dyn: stack[top - 1] = std::pow(stack[top - 1], stack[top]); --top; break;
        case Op::fn_sin: stack[top] = std::sin(stack[top]); break;
        case Op::fn_cos: stack[top] = std::cos(stack[top]); break;
        case Op::fn_exp: stack[top] = std::exp(stack[top]); break;
        case Op::push_var: break;  // excluded by constant_tail
      }
    }
    return stack[0];
  }
};

Expr Expr::parse(const std::string& text, const std::vector<std::string>& variables) {
  ExprParser p(text, variables);
  return p.finish(text);
}

bool Expr::depends_on(int var_index) const {
  for (const auto& ins : program_)
    if (ins.op == Op::push_var && ins.var == var_index) return true;
  return false;
}

bool Expr::is_constant() const {
  for (const auto& ins : program_)
    if (ins.op == Op::push_var) return false;
  return true;
}

template <>
double Expr::eval_t<double>(const double* vars) const {
  double stack[64];
  int top = -1;
  for (const Instr& ins : program_) {
    switch (ins.op) {
      case Op::push_const: stack[++top] = ins.value; break;
      case Op::push_var: stack[++top] = vars[ins.var]; break;
      case Op::add: stack[top - 1] += stack[top]; --top; break;
      case Op::sub: stack[top - 1] -= stack[top]; --top; break;
      case Op::mul: stack[top - 1] *= stack[top]; --top; break;
      case Op::div: stack[top - 1] /= stack[top]; --top; break;
      case Op::neg: stack[top] = -stack[top]; break;
      case Op::pow_const: stack[top] = std::pow(stack[top], ins.value); break;
      case Op::pow_dyn: stack[top - 1] = std::pow(stack[top - 1], stack[top]); --top; break;
      case Op::fn_sin: stack[top] = std::sin(stack[top]); break;
      case Op::fn_cos: stack[top] = std::cos(stack[top]); break;
      case Op::fn_exp: stack[top] = std::exp(stack[top]); break;
    }
  }
  return stack[0];
}

double Expr::eval(const double* vars) const { return eval_t<double>(vars); }

}  // namespace gyrolab
