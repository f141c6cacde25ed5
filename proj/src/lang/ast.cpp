#include "gradc/ast.hpp"

namespace gradc::lang {

const char* binop_symbol(BinOpKind op) {
  switch (op) {
    case BinOpKind::Add: return "+";
    case BinOpKind::Sub: return "-";
    case BinOpKind::Mul: return "*";
    case BinOpKind::Div: return "/";
    case BinOpKind::Lt: return "<";
    case BinOpKind::Gt: return ">";
    case BinOpKind::Le: return "<=";
    case BinOpKind::Ge: return ">=";
    case BinOpKind::Eq: return "==";
  }
  return "?";
}

bool is_comparison(BinOpKind op) {
  return op == BinOpKind::Lt || op == BinOpKind::Gt || op == BinOpKind::Le || op == BinOpKind::Ge ||
         op == BinOpKind::Eq;
}

const char* binop_kernel(BinOpKind op) {
  switch (op) {
    case BinOpKind::Add: return "add";
    case BinOpKind::Sub: return "subtract";
    case BinOpKind::Mul: return "multiply";
    case BinOpKind::Div: return "divide";
    case BinOpKind::Lt: return "less";
    case BinOpKind::Gt: return "greater";
    case BinOpKind::Le: return "less_equal";
    case BinOpKind::Ge: return "greater_equal";
    case BinOpKind::Eq: return "equal";
  }
  return "?";
}

bool Call::operator==(const Call& o) const { return callee == o.callee && args == o.args; }
bool If::operator==(const If& o) const {
  return cond == o.cond && then_body == o.then_body && else_body == o.else_body;
}
bool While::operator==(const While& o) const { return cond == o.cond && body == o.body; }
bool ForRange::operator==(const ForRange& o) const {
  return var == o.var && count == o.count && body == o.body;
}
bool InsertGradOf::operator==(const InsertGradOf& o) const {
  return var == o.var && alias == o.alias && body == o.body;
}

bool Expr::is_literal() const {
  return is<FloatLit>() || is<IntLit>() || is<BoolLit>() || is<StrLit>() || is<NoneLit>();
}

Expr name(std::string id) { return Expr{Name{std::move(id)}}; }
Expr float_lit(double v) { return Expr{FloatLit{v}}; }
Expr int_lit(std::int64_t v) { return Expr{IntLit{v}}; }
Expr bool_lit(bool v) { return Expr{BoolLit{v}}; }
Expr str_lit(std::string v) { return Expr{StrLit{std::move(v)}}; }
Expr none_lit() { return Expr{NoneLit{}}; }
Expr binop(BinOpKind op, Expr lhs, Expr rhs) { return Expr{BinOp{op, std::move(lhs), std::move(rhs)}}; }
Expr neg(Expr operand) { return Expr{Neg{std::move(operand)}}; }
Expr call(std::string callee, std::vector<Expr> args) { return Expr{Call{std::move(callee), std::move(args)}}; }
Expr index(Expr base, Expr idx) { return Expr{Index{std::move(base), std::move(idx)}}; }

Stmt assign(std::string target, Expr value) { return make_stmt(Assign{std::move(target), std::move(value)}); }
Stmt expr_stmt(Expr e) { return make_stmt(ExprStmt{std::move(e)}); }
Stmt comment(std::string text) { return make_stmt(Comment{std::move(text)}); }
Stmt ret(std::vector<Expr> values) { return make_stmt(Return{std::move(values)}); }

std::vector<std::string> FunctionDef::param_names() const {
  std::vector<std::string> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.name);
  return out;
}

const FunctionDef* Program::find(std::string_view fname) const {
  for (const auto& f : functions)
    if (f.name == fname) return &f;
  return nullptr;
}

FunctionDef* Program::find(std::string_view fname) {
  for (auto& f : functions)
    if (f.name == fname) return &f;
  return nullptr;
}

void collect_names(const Expr& e, std::set<std::string>& out) {
  std::visit(overloaded{
                 [&](const Name& n) { out.insert(n.id); },
                 [&](const BinOp& b) {
                   collect_names(*b.lhs, out);
                   collect_names(*b.rhs, out);
                 },
                 [&](const Neg& n) { collect_names(*n.operand, out); },
                 [&](const Call& c) {
                   for (const auto& a : c.args) collect_names(a, out);
                 },
                 [&](const Index& i) {
                   collect_names(*i.base, out);
                   collect_names(*i.index, out);
                 },
                 [](const auto&) {},
             },
             e.node);
}

static void collect_block_uses(const Block& b, std::set<std::string>& out) {
  for (const auto& s : b) collect_uses(s, out);
}

void collect_uses(const Stmt& s, std::set<std::string>& out) {
  std::visit(overloaded{
                 [&](const Assign& a) { collect_names(a.value, out); },
                 [&](const IndexAssign& a) {
                   out.insert(a.target);
                   collect_names(a.index, out);
                   collect_names(a.value, out);
                 },
                 [&](const If& i) {
                   collect_names(i.cond, out);
                   collect_block_uses(i.then_body, out);
                   collect_block_uses(i.else_body, out);
                 },
                 [&](const While& w) {
                   collect_names(w.cond, out);
                   collect_block_uses(w.body, out);
                 },
                 [&](const ForRange& f) {
                   collect_names(f.count, out);
                   collect_block_uses(f.body, out);
                 },
                 [&](const Return& r) {
                   for (const auto& v : r.values) collect_names(v, out);
                 },
                 [&](const ExprStmt& e) { collect_names(e.expr, out); },
                 [&](const InsertGradOf& g) { collect_block_uses(g.body, out); },
                 [](const Comment&) {},
                 [](const Unsupported&) {},
             },
             s.node);
}

static void collect_block_defs(const Block& b, std::set<std::string>& out) {
  for (const auto& s : b) collect_defs(s, out);
}

void collect_defs(const Stmt& s, std::set<std::string>& out) {
  std::visit(overloaded{
                 [&](const Assign& a) { out.insert(a.target); },
                 [&](const IndexAssign& a) { out.insert(a.target); },
                 [&](const If& i) {
                   collect_block_defs(i.then_body, out);
                   collect_block_defs(i.else_body, out);
                 },
                 [&](const While& w) { collect_block_defs(w.body, out); },
                 [&](const ForRange& f) {
                   out.insert(f.var);
                   collect_block_defs(f.body, out);
                 },
                 [&](const InsertGradOf& g) {
                   out.insert(g.alias);
                   collect_block_defs(g.body, out);
                 },
                 [](const auto&) {},
             },
             s.node);
}

std::set<std::string> all_identifiers(const FunctionDef& f) {
  std::set<std::string> out;
  for (const auto& p : f.params) out.insert(p.name);
  for (const auto& s : f.body) {
    collect_uses(s, out);
    collect_defs(s, out);
  }
  return out;
}

void collect_calls(const Expr& e, std::vector<const Call*>& out) {
  std::visit(overloaded{
                 [&](const BinOp& b) {
                   collect_calls(*b.lhs, out);
                   collect_calls(*b.rhs, out);
                 },
                 [&](const Neg& n) { collect_calls(*n.operand, out); },
                 [&](const Call& c) {
                   out.push_back(&c);
                   for (const auto& a : c.args) collect_calls(a, out);
                 },
                 [&](const Index& i) {
                   collect_calls(*i.base, out);
                   collect_calls(*i.index, out);
                 },
                 [](const auto&) {},
             },
             e.node);
}

namespace {

std::string renamed(const std::string& id, const std::map<std::string, std::string>& mapping) {
  auto it = mapping.find(id);
  return it == mapping.end() ? id : it->second;
}

void rename_expr(Expr& e, const std::map<std::string, std::string>& mapping) {
  std::visit(overloaded{
                 [&](Name& n) { n.id = renamed(n.id, mapping); },
                 [&](BinOp& b) {
                   rename_expr(*b.lhs, mapping);
                   rename_expr(*b.rhs, mapping);
                 },
                 [&](Neg& n) { rename_expr(*n.operand, mapping); },
                 [&](Call& c) {
                   for (auto& a : c.args) rename_expr(a, mapping);
                 },
                 [&](Index& i) {
                   rename_expr(*i.base, mapping);
                   rename_expr(*i.index, mapping);
                 },
                 [](auto&) {},
             },
             e.node);
}

void rename_block(Block& b, const std::map<std::string, std::string>& mapping) {
  for (auto& s : b) rename_in_place(s, mapping);
}

}  // namespace

Expr rename(const Expr& e, const std::map<std::string, std::string>& mapping) {
  Expr out = e;
  rename_expr(out, mapping);
  return out;
}

void rename_in_place(Stmt& s, const std::map<std::string, std::string>& mapping) {
  std::visit(overloaded{
                 [&](Assign& a) {
                   a.target = renamed(a.target, mapping);
                   rename_expr(a.value, mapping);
                 },
                 [&](IndexAssign& a) {
                   a.target = renamed(a.target, mapping);
                   rename_expr(a.index, mapping);
                   rename_expr(a.value, mapping);
                 },
                 [&](If& i) {
                   rename_expr(i.cond, mapping);
                   rename_block(i.then_body, mapping);
                   rename_block(i.else_body, mapping);
                 },
                 [&](While& w) {
                   rename_expr(w.cond, mapping);
                   rename_block(w.body, mapping);
                 },
                 [&](ForRange& f) {
                   f.var = renamed(f.var, mapping);
                   rename_expr(f.count, mapping);
                   rename_block(f.body, mapping);
                 },
                 [&](Return& r) {
                   for (auto& v : r.values) rename_expr(v, mapping);
                 },
                 [&](ExprStmt& e) { rename_expr(e.expr, mapping); },
                 [&](InsertGradOf& g) {
                   g.var = renamed(g.var, mapping);
                   g.alias = renamed(g.alias, mapping);
                   rename_block(g.body, mapping);
                 },
                 [](auto&) {},
             },
             s.node);
}

void for_each_stmt(const Block& b, const std::function<void(const Stmt&)>& fn) {
  for (const auto& s : b) {
    fn(s);
    if (auto* i = s.get_if<If>()) {
      for_each_stmt(i->then_body, fn);
      for_each_stmt(i->else_body, fn);
    } else if (auto* w = s.get_if<While>()) {
      for_each_stmt(w->body, fn);
    } else if (auto* f = s.get_if<ForRange>()) {
      for_each_stmt(f->body, fn);
    } else if (auto* g = s.get_if<InsertGradOf>()) {
      for_each_stmt(g->body, fn);
    }
  }
}

void for_each_stmt(Block& b, const std::function<void(Stmt&)>& fn) {
  for (auto& s : b) {
    fn(s);
    if (auto* i = s.get_if<If>()) {
      for_each_stmt(i->then_body, fn);
      for_each_stmt(i->else_body, fn);
    } else if (auto* w = s.get_if<While>()) {
      for_each_stmt(w->body, fn);
    } else if (auto* f = s.get_if<ForRange>()) {
      for_each_stmt(f->body, fn);
    } else if (auto* g = s.get_if<InsertGradOf>()) {
      for_each_stmt(g->body, fn);
    }
  }
}

}  // namespace gradc::lang
