#include <deque>

#include <fmt/format.h>

#include "gradc/ad.hpp"
#include "gradc/builtins.hpp"

namespace gradc::ad {

using namespace lang;

std::string NameGen::fresh(const std::string& base) {
  std::string name = base;
  for (int k = 2; taken_.count(name); ++k) name = fmt::format("{}{}", base, k);
  taken_.insert(name);
  return name;
}

std::set<std::string> reserved_names(const Program& p, const FunctionDef& f) {
  std::set<std::string> out = all_identifiers(f);
  for (const auto& g : p.functions) out.insert(g.name);
  for (const auto& b : all_builtins()) out.insert(std::string(b.name));
  out.insert("d");
  return out;
}

namespace {

std::string kernel_of(const Expr& e) {
  return std::visit(overloaded{
                        [](const BinOp& b) -> std::string {
                          return is_comparison(b.op) ? "compare" : binop_kernel(b.op);
                        },
                        [](const Neg&) -> std::string { return "negative"; },
                        [](const Call& c) -> std::string { return c.callee; },
                        [](const Index&) -> std::string { return "getitem"; },
                        [](const auto&) -> std::string { return "value"; },
                    },
                    e.node);
}

class Normalizer {
 public:
  explicit Normalizer(NameGen& names) : names_(names) {}

  Block block(const Block& in) {
    Block out;
    for (const auto& s : in) stmt(s, out);
    return out;
  }

 private:
  NameGen& names_;

  void emit(Block& out, std::string target, Expr value, int line) {
    Stmt s = assign(std::move(target), std::move(value));
    s.line = line;
    out.push_back(std::move(s));
  }

  Expr atom(const Expr& e, Block& out, int line) {
    if (e.is_atom()) return e;
    std::string t = names_.fresh("_" + kernel_of(e));
    emit(out, t, flat(e, out, line), line);
    return name(t);
  }

  // One primitive over atoms. Comparisons only feed control flow and are
  // left alone.
  Expr flat(const Expr& e, Block& out, int line) {
    return std::visit(overloaded{
                          [&](const BinOp& b) -> Expr {
                            if (is_comparison(b.op)) return e;
                            Expr l = atom(*b.lhs, out, line);
                            Expr r = atom(*b.rhs, out, line);
                            return binop(b.op, std::move(l), std::move(r));
                          },
                          [&](const Neg& n) -> Expr { return neg(atom(*n.operand, out, line)); },
                          [&](const Call& c) -> Expr {
                            std::vector<Expr> args;
                            for (const auto& a : c.args) args.push_back(atom(a, out, line));
                            return call(c.callee, std::move(args));
                          },
                          [&](const Index& i) -> Expr {
                            Expr b = atom(*i.base, out, line);
                            Expr k = atom(*i.index, out, line);
                            return index(std::move(b), std::move(k));
                          },
                          [&](const auto&) -> Expr { return e; },
                      },
                      e.node);
  }

  void stmt(const Stmt& s, Block& out) {
    const int line = s.line;
    std::visit(overloaded{
                   [&](const Assign& a) { emit(out, a.target, flat(a.value, out, line), line); },
                   [&](const IndexAssign& a) {
                     Expr i = atom(a.index, out, line);
                     Expr v = atom(a.value, out, line);
                     emit(out, a.target, call("setitem", {name(a.target), std::move(i), std::move(v)}), line);
                   },
                   [&](const If& x) {
                     If y{x.cond, block(x.then_body), block(x.else_body)};
                     out.push_back(make_stmt(std::move(y), line));
                   },
                   [&](const While& x) { out.push_back(make_stmt(While{x.cond, block(x.body)}, line)); },
                   [&](const ForRange& x) {
                     out.push_back(make_stmt(ForRange{x.var, x.count, block(x.body)}, line));
                   },
                   [&](const Return& r) {
                     std::vector<Expr> values;
                     for (const auto& v : r.values) {
                       if (v.is<Name>()) {
                         values.push_back(v);
                         continue;
                       }
                       std::string t = names_.fresh("_return");
                       emit(out, t, flat(v, out, line), line);
                       values.push_back(name(t));
                     }
                     out.push_back(make_stmt(Return{std::move(values)}, line));
                   },
                   [&](const ExprStmt&) { out.push_back(s); },
                   [&](const InsertGradOf&) { out.push_back(s); },
                   [&](const Comment&) {},
                   [&](const Unsupported& u) {
                     throw TransformError(fmt::format("line {}: unsupported construct '{}'", line, u.construct));
                   },
               },
               s.node);
  }
};

}  // namespace

FunctionDef to_anf(const FunctionDef& f, NameGen& names) {
  FunctionDef out = f;
  Normalizer n(names);
  out.body = n.block(f.body);
  return out;
}

// ---------------------------------------------------------------------------
// Activity

namespace {

struct DepGraph {
  // target -> variables it is computed from along differentiable paths
  std::map<std::string, std::set<std::string>> deps;
  std::map<std::string, std::set<std::string>> pushed;  // label -> pushed names
  std::set<std::string> returned;
};

void value_deps(const Program& p, const Expr& e, std::set<std::string>& out, const DepGraph& g) {
  if (const auto* b = e.get_if<BinOp>(); b && is_comparison(b->op)) return;
  if (const auto* c = e.get_if<Call>()) {
    if (!p.find(c->callee)) {
      if (c->callee == "pop") {
        if (!c->args.empty())
          if (const auto* l = c->args[0].get_if<StrLit>()) {
            auto it = g.pushed.find(l->value);
            if (it != g.pushed.end()) out.insert(it->second.begin(), it->second.end());
          }
        return;
      }
      const BuiltinInfo* info = find_builtin(c->callee);
      if (info && !info->differentiable) return;
    }
    for (const auto& a : c->args) value_deps(p, a, out, g);
    return;
  }
  if (const auto* i = e.get_if<Index>()) {
    value_deps(p, *i->base, out, g);
    return;
  }
  if (const auto* b = e.get_if<BinOp>()) {
    value_deps(p, *b->lhs, out, g);
    value_deps(p, *b->rhs, out, g);
    return;
  }
  if (const auto* n = e.get_if<Neg>()) {
    value_deps(p, *n->operand, out, g);
    return;
  }
  if (const auto* n = e.get_if<Name>()) out.insert(n->id);
}

void collect_pushes(const Block& b, DepGraph& g) {
  for_each_stmt(b, [&](const Stmt& s) {
    const auto* e = s.get_if<ExprStmt>();
    if (!e) return;
    const auto* c = e->expr.get_if<Call>();
    if (!c || c->callee != "push" || c->args.size() != 2) return;
    if (const auto* l = c->args[1].get_if<StrLit>()) collect_names(c->args[0], g.pushed[l->value]);
  });
}

void build(const Program& p, const Block& b, DepGraph& g) {
  for (const auto& s : b) {
    std::visit(overloaded{
                   [&](const Assign& a) { value_deps(p, a.value, g.deps[a.target], g); },
                   [&](const IndexAssign& a) {
                     auto& d = g.deps[a.target];
                     d.insert(a.target);
                     value_deps(p, a.value, d, g);
                   },
                   [&](const If& x) {
                     build(p, x.then_body, g);
                     build(p, x.else_body, g);
                   },
                   [&](const While& x) { build(p, x.body, g); },
                   [&](const ForRange& x) { build(p, x.body, g); },
                   [&](const Return& r) {
                     for (const auto& v : r.values) collect_names(v, g.returned);
                   },
                   [](const auto&) {},
               },
               s.node);
  }
}

}  // namespace

ActivityInfo analyze_activity(const Program& p, const FunctionDef& f, const std::vector<int>& wrt) {
  DepGraph g;
  collect_pushes(f.body, g);
  build(p, f.body, g);

  ActivityInfo info;
  std::map<std::string, std::set<std::string>> users;  // v -> targets computed from v
  for (const auto& [t, ds] : g.deps)
    for (const auto& d : ds) users[d].insert(t);

  std::deque<std::string> work;
  for (int i : wrt) {
    const std::string& n = f.params.at(static_cast<std::size_t>(i)).name;
    if (info.varied.insert(n).second) work.push_back(n);
  }
  while (!work.empty()) {
    std::string v = work.front();
    work.pop_front();
    for (const auto& t : users[v])
      if (info.varied.insert(t).second) work.push_back(t);
  }

  for (const auto& r : g.returned)
    if (info.useful.insert(r).second) work.push_back(r);
  while (!work.empty()) {
    std::string v = work.front();
    work.pop_front();
    auto it = g.deps.find(v);
    if (it == g.deps.end()) continue;
    for (const auto& d : it->second)
      if (info.useful.insert(d).second) work.push_back(d);
  }

  for (const auto& v : info.varied)
    if (info.useful.count(v)) info.active.insert(v);
  return info;
}

ActivityInfo analyze_activity(const Program& p, const std::string& entry, const std::vector<int>& wrt) {
  const FunctionDef* f = p.find(entry);
  if (!f) throw TransformError(fmt::format("unknown function '{}'", entry));
  return analyze_activity(p, *f, wrt);
}

}  // namespace gradc::ad
