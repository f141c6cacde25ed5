#include <fmt/format.h>

#include "ad_internal.hpp"
#include "gradc/builtins.hpp"
#include "gradc/validate.hpp"

namespace gradc::ad {

using namespace lang;

namespace {

struct Shared {
  const Program& prog;
  const TemplateRegistry& templates;
  NameGen functions;
  std::map<std::string, std::string> forward_of;
  std::vector<FunctionDef> generated;
};

class ForwardGen {
 public:
  ForwardGen(Shared& sh, const FunctionDef& orig, std::vector<int> wrt, std::string out_name)
      : sh_(sh), orig_(orig), wrt_(std::move(wrt)), out_name_(std::move(out_name)),
        names_(reserved_names(sh.prog, orig)) {
    for (const auto& g : sh_.generated) names_.reserve(g.name);
    names_.reserve(out_name_);
    f_ = to_anf(orig_, names_);
    act_ = analyze_activity(sh_.prog, f_, wrt_);
  }

  FunctionDef run() {
    FunctionDef out;
    out.name = out_name_;
    out.line = orig_.line;
    out.params = orig_.params;
    std::set<std::string> seeded;
    for (int i : wrt_) {
      const std::string& p = f_.params.at(static_cast<std::size_t>(i)).name;
      out.params.push_back(Param{tan(p), float_lit(1.0)});
      seeded.insert(p);
    }
    for (const auto& p : f_.params)
      if (act_.is_active(p.name) && !seeded.count(p.name))
        out.body.push_back(assign(tan(p.name), call("init_grad", {name(p.name)})));

    gen(f_.body, out.body);

    const Return* ret = f_.body.empty() ? nullptr : f_.body.back().get_if<Return>();
    if (!ret) throw TransformError(fmt::format("function '{}' does not end with a return", f_.name));
    std::vector<Expr> values = ret->values;
    for (const auto& v : ret->values) values.push_back(tangent_of(v));
    out.body.push_back(ret_stmt(std::move(values)));
    return out;
  }

 private:
  Shared& sh_;
  const FunctionDef& orig_;
  std::vector<int> wrt_;
  std::string out_name_;
  NameGen names_;
  FunctionDef f_;
  ActivityInfo act_;
  std::map<std::string, std::string> tangents_;

  static Stmt ret_stmt(std::vector<Expr> values) { return ret(std::move(values)); }

  std::string tan(const std::string& v) {
    auto it = tangents_.find(v);
    if (it != tangents_.end()) return it->second;
    return tangents_[v] = names_.fresh("t" + v);
  }

  Expr tangent_of(const Expr& e) {
    if (const auto* n = e.get_if<Name>(); n && act_.is_active(n->id)) return name(tan(n->id));
    return call("init_grad", {e});
  }

  void gen(const Block& in, Block& out) {
    for (const Stmt& s : in) {
      std::visit(overloaded{
                     [&](const Assign& a) { gen_assign(s, a, out); },
                     [&](const If& x) {
                       If y{x.cond, {}, {}};
                       gen(x.then_body, y.then_body);
                       gen(x.else_body, y.else_body);
                       out.push_back(make_stmt(std::move(y), s.line));
                     },
                     [&](const While& x) {
                       While y{x.cond, {}};
                       gen(x.body, y.body);
                       out.push_back(make_stmt(std::move(y), s.line));
                     },
                     [&](const ForRange& x) {
                       ForRange y{x.var, x.count, {}};
                       gen(x.body, y.body);
                       out.push_back(make_stmt(std::move(y), s.line));
                     },
                     [&](const ExprStmt& e) {
                       out.push_back(s);
                       const auto* c = e.expr.get_if<Call>();
                       if (c && c->callee == "push" && c->args.size() == 2 && c->args[1].is<StrLit>())
                         out.push_back(expr_stmt(
                             call("push", {tangent_of(c->args[0]), str_lit(c->args[1].as<StrLit>().value + "t")})));
                     },
                     [](const auto&) {},
                 },
                 s.node);
    }
  }

  void gen_assign(const Stmt& s, const Assign& a, Block& out) {
    const std::string& t = a.target;
    const Call* c = a.value.get_if<Call>();
    if (c && c->callee == "pop" && c->args.size() == 1 && c->args[0].is<StrLit>()) {
      out.push_back(assign(tan(t), call("pop", {str_lit(c->args[0].as<StrLit>().value + "t")})));
      out.push_back(s);
      return;
    }
    if (!act_.is_active(t)) {
      out.push_back(s);
      return;
    }
    if (c && sh_.prog.find(c->callee)) {
      user_call(s, *c, t, out);
      return;
    }
    Block tangent = tangent_stmts(a);
    std::set<std::string> used;
    collect_names(a.value, used);
    if (used.count(t)) {
      for (auto& x : tangent) out.push_back(std::move(x));
      out.push_back(s);
    } else {
      out.push_back(s);
      for (auto& x : tangent) out.push_back(std::move(x));
    }
  }

  Block tangent_stmts(const Assign& a) {
    const std::string& t = a.target;
    const std::string tt = tan(t);
    std::string prim;
    std::vector<Expr> args;
    Block out;
    auto zero = [&] { out.push_back(assign(tt, call("init_grad", {name(t)}))); };
    std::visit(overloaded{
                   [&](const Name&) { out.push_back(assign(tt, tangent_of(a.value))); },
                   [&](const BinOp& b) {
                     if (is_comparison(b.op)) return zero();
                     prim = binop_kernel(b.op);
                     args = {*b.lhs, *b.rhs};
                   },
                   [&](const Neg& n) {
                     prim = "negative";
                     args = {*n.operand};
                   },
                   [&](const Index& i) {
                     prim = "getitem";
                     args = {*i.base, *i.index};
                   },
                   [&](const Call& c) {
                     if (c.callee == "tuple") {
                       std::vector<Expr> ts;
                       for (const auto& x : c.args) ts.push_back(tangent_of(x));
                       out.push_back(assign(tt, call("tuple", std::move(ts))));
                       return;
                     }
                     const BuiltinInfo* info = find_builtin(c.callee);
                     if (info && !info->differentiable) return zero();
                     prim = c.callee;
                     args = c.args;
                   },
                   [&](const auto&) { zero(); },
               },
               a.value.node);
    if (prim.empty()) return out;

    auto tpl = sh_.templates.find(prim, args.size());
    if (!tpl) throw MissingTemplate(prim, "tangent");
    std::map<std::string, Expr> bindings{{tpl->params[0], name(t)}};
    std::map<std::string, Expr> grads{{tpl->params[0], name(tt)}};
    for (std::size_t k = 0; k < args.size(); ++k) {
      bindings.emplace(tpl->params[k + 1], args[k]);
      grads.emplace(tpl->params[k + 1], tangent_of(args[k]));
    }
    for (const auto& s : tpl->body)
      if (const auto* l = s.get_if<Assign>()) bindings[l->target] = name(names_.fresh("_" + l->target));
    bool assigned = false;
    for (const auto& s : tpl->body) {
      const std::string p = grad_target(s);
      if (p.empty()) {
        const auto& l = s.as<Assign>();
        out.push_back(assign(bindings[l.target].as<Name>().id, substitute(l.value, bindings, grads)));
      } else if (p == tpl->params[0]) {
        out.push_back(assign(tt, substitute(s.as<IndexAssign>().value, bindings, grads)));
        assigned = true;
      } else {
        throw TransformError(fmt::format("tangent template for '{}' may only assign d[{}]", prim, tpl->params[0]));
      }
    }
    if (!assigned) throw TransformError(fmt::format("tangent template for '{}' never assigns d[{}]", prim,
                                                    tpl->params[0]));
    return out;
  }

  void user_call(const Stmt& s, const Call& c, const std::string& t, Block& out) {
    const FunctionDef& g = *sh_.prog.find(c.callee);
    const std::string fwd = forward_function(g);
    std::vector<Expr> args = c.args;
    for (std::size_t k = args.size(); k < g.params.size(); ++k) args.push_back(*g.params[k].default_value);
    std::vector<Expr> call_args = args;
    for (const auto& a : args) call_args.push_back(tangent_of(a));
    const std::string res = names_.fresh("_" + c.callee + "_out");
    Stmt head = assign(res, call(fwd, std::move(call_args)));
    head.line = s.line;
    out.push_back(std::move(head));

    const Return* gr = g.body.empty() ? nullptr : g.body.back().get_if<Return>();
    const std::int64_t n = gr ? static_cast<std::int64_t>(gr->values.size()) : 1;
    auto item = [&](std::int64_t k) { return call("getitem", {name(res), int_lit(k)}); };
    if (n == 1) {
      out.push_back(assign(t, item(0)));
      out.push_back(assign(tan(t), item(1)));
      return;
    }
    std::vector<Expr> primal, tangent;
    for (std::int64_t k = 0; k < n; ++k) {
      primal.push_back(item(k));
      tangent.push_back(item(n + k));
    }
    out.push_back(assign(t, call("tuple", std::move(primal))));
    out.push_back(assign(tan(t), call("tuple", std::move(tangent))));
  }

  std::string forward_function(const FunctionDef& g) {
    auto it = sh_.forward_of.find(g.name);
    if (it != sh_.forward_of.end()) return it->second;
    std::string n = sh_.functions.fresh("fwd_" + g.name);
    sh_.forward_of[g.name] = n;
    std::vector<int> all;
    for (std::size_t k = 0; k < g.params.size(); ++k) all.push_back(static_cast<int>(k));
    ForwardGen sub(sh_, g, all, n);
    sh_.generated.push_back(sub.run());
    return n;
  }
};

}  // namespace

Derivative transform_forward(const Program& p, const std::string& entry, const std::vector<int>& wrt,
                             const TemplateRegistry& templates) {
  auto diags = validate(p, entry, wrt);
  if (has_errors(diags)) {
    std::string msg = fmt::format("'{}' cannot be differentiated:", entry);
    for (const auto& d : diags)
      if (d.severity == Severity::Error) msg += "\n  " + d.str();
    throw TransformError(msg);
  }
  if (wrt.empty()) throw TransformError("no parameters to differentiate with respect to");

  Shared sh{p, templates, NameGen(function_names(p)), {}, {}};
  const std::string out_name = sh.functions.fresh("d" + entry + "_fwd");
  ForwardGen gen(sh, *p.find(entry), wrt, out_name);
  FunctionDef d = gen.run();

  Derivative out;
  out.entry = out_name;
  out.program.functions.push_back(std::move(d));
  for (auto& g : sh.generated) out.program.functions.push_back(std::move(g));
  std::vector<std::string> roots;
  for (const auto& fn : out.program.functions) roots.push_back(fn.name);
  Program lookup = p;
  for (const auto& fn : out.program.functions) lookup.functions.push_back(fn);
  for (const auto& n : reachable_functions(lookup, roots))
    if (const FunctionDef* orig = p.find(n)) out.program.functions.push_back(*orig);
  return out;
}

}  // namespace gradc::ad
