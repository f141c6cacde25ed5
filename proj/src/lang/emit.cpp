#include "gradc/emit.hpp"

#include <cmath>

#include <fmt/format.h>

namespace gradc::lang {

namespace {

constexpr int kCompare = 1;
constexpr int kAdditive = 2;
constexpr int kMultiplicative = 3;
constexpr int kUnary = 4;
constexpr int kPostfix = 5;

int precedence(BinOpKind op) {
  switch (op) {
    case BinOpKind::Add:
    case BinOpKind::Sub: return kAdditive;
    case BinOpKind::Mul:
    case BinOpKind::Div: return kMultiplicative;
    default: return kCompare;
  }
}

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\\' || c == '\'') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    if (c == '\t') {
      out += "\\t";
      continue;
    }
    out += c;
  }
  return out + "'";
}

std::string paren_if(bool cond, std::string s) { return cond ? "(" + s + ")" : s; }

std::string emit(const Expr& e, int min_prec) {
  return std::visit(
      overloaded{
          [](const Name& n) { return n.id; },
          [&](const FloatLit& f) { return paren_if(std::signbit(f.value) && min_prec > kUnary, format_float(f.value)); },
          [&](const IntLit& i) { return paren_if(i.value < 0 && min_prec > kUnary, std::to_string(i.value)); },
          [](const BoolLit& b) { return std::string(b.value ? "True" : "False"); },
          [](const StrLit& s) { return quote(s.value); },
          [](const NoneLit&) { return std::string("None"); },
          [&](const BinOp& b) {
            const int p = precedence(b.op);
            std::string s = emit(*b.lhs, is_comparison(b.op) ? p + 1 : p) + " " + binop_symbol(b.op) + " " +
                            emit(*b.rhs, p + 1);
            return paren_if(p < min_prec, std::move(s));
          },
          [&](const Neg& n) {
            std::string operand = n.operand->is_literal() ? "(" + emit(*n.operand, 0) + ")" : emit(*n.operand, kUnary);
            return paren_if(kUnary < min_prec, "-" + operand);
          },
          [](const Call& c) {
            std::string s = c.callee + "(";
            for (std::size_t i = 0; i < c.args.size(); ++i) {
              if (i) s += ", ";
              s += emit(c.args[i], 0);
            }
            return s + ")";
          },
          [](const Index& i) { return emit(*i.base, kPostfix) + "[" + emit(*i.index, 0) + "]"; },
      },
      e.node);
}

void emit_stmt(const Stmt& s, int indent, std::string& out);

void emit_body(const Block& b, int indent, std::string& out) {
  if (b.empty()) {
    out.append(static_cast<std::size_t>(indent), ' ');
    out += "pass\n";
    return;
  }
  for (const auto& s : b) emit_stmt(s, indent, out);
}

void emit_stmt(const Stmt& s, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent), ' ');
  if (auto* u = s.get_if<Unsupported>()) {
    for (const auto& line : u->lines) out += pad + line + "\n";
    return;
  }
  out += pad + emit_stmt_line(s) + "\n";
  if (auto* i = s.get_if<If>()) {
    emit_body(i->then_body, indent + 4, out);
    if (!i->else_body.empty()) {
      out += pad + "else:\n";
      emit_body(i->else_body, indent + 4, out);
    }
  } else if (auto* w = s.get_if<While>()) {
    emit_body(w->body, indent + 4, out);
  } else if (auto* f = s.get_if<ForRange>()) {
    emit_body(f->body, indent + 4, out);
  } else if (auto* g = s.get_if<InsertGradOf>()) {
    emit_body(g->body, indent + 4, out);
  }
}

}  // namespace

std::string emit_expr(const Expr& e) { return emit(e, 0); }

std::string emit_stmt_line(const Stmt& s) {
  return std::visit(overloaded{
                        [](const Assign& a) { return a.target + " = " + emit_expr(a.value); },
                        [](const IndexAssign& a) {
                          return a.target + "[" + emit_expr(a.index) + "] = " + emit_expr(a.value);
                        },
                        [](const If& i) { return "if " + emit_expr(i.cond) + ":"; },
                        [](const While& w) { return "while " + emit_expr(w.cond) + ":"; },
                        [](const ForRange& f) { return "for " + f.var + " in range(" + emit_expr(f.count) + "):"; },
                        [](const Return& r) {
                          std::string s = "return ";
                          for (std::size_t i = 0; i < r.values.size(); ++i) {
                            if (i) s += ", ";
                            s += emit_expr(r.values[i]);
                          }
                          return s;
                        },
                        [](const ExprStmt& e) { return emit_expr(e.expr); },
                        [](const InsertGradOf& g) {
                          return "with insert_grad_of(" + g.var + ") as " + g.alias + ":";
                        },
                        [](const Comment& c) { return c.text.empty() ? std::string("#") : "# " + c.text; },
                        [](const Unsupported& u) { return u.lines.empty() ? std::string() : u.lines.front(); },
                    },
                    s.node);
}

std::string emit_block(const Block& b, int indent) {
  std::string out;
  for (const auto& s : b) emit_stmt(s, indent, out);
  return out;
}

std::string emit_function(const FunctionDef& f) {
  std::string out = "def " + f.name + "(";
  for (std::size_t i = 0; i < f.params.size(); ++i) {
    if (i) out += ", ";
    out += f.params[i].name;
    if (f.params[i].default_value) out += "=" + emit_expr(*f.params[i].default_value);
  }
  out += "):\n";
  emit_body(f.body, 4, out);
  return out;
}

std::string emit_source(const Program& p) {
  std::string out;
  for (std::size_t i = 0; i < p.functions.size(); ++i) {
    if (i) out += "\n";
    out += emit_function(p.functions[i]);
  }
  return out;
}

}  // namespace gradc::lang
