#include <algorithm>

#include <fmt/format.h>

#include "ad_internal.hpp"
#include "gradc/builtins.hpp"
#include "gradc/emit.hpp"
#include "gradc/validate.hpp"

namespace gradc::ad {

using namespace lang;

namespace {

bool calls_tape(const Block& b) {
  bool found = false;
  auto check = [&](const Expr& e) {
    std::vector<const Call*> calls;
    collect_calls(e, calls);
    for (const auto* c : calls) found = found || c->callee == "push" || c->callee == "pop";
  };
  for_each_stmt(b, [&](const Stmt& s) {
    std::visit(overloaded{
                   [&](const Assign& a) { check(a.value); },
                   [&](const IndexAssign& a) {
                     check(a.index);
                     check(a.value);
                   },
                   [&](const ExprStmt& e) { check(e.expr); },
                   [&](const Return& r) {
                     for (const auto& v : r.values) check(v);
                   },
                   [](const auto&) {},
               },
               s.node);
  });
  return found;
}

bool reads_grad_of(const Expr& e, const std::string& placeholder) {
  bool found = false;
  std::function<void(const Expr&)> walk = [&](const Expr& x) {
    std::visit(overloaded{
                   [&](const Index& i) {
                     const auto* b = i.base->get_if<Name>();
                     const auto* p = i.index->get_if<Name>();
                     if (b && b->id == "d" && p && p->id == placeholder) found = true;
                     walk(*i.base);
                     walk(*i.index);
                   },
                   [&](const BinOp& b) {
                     walk(*b.lhs);
                     walk(*b.rhs);
                   },
                   [&](const Neg& n) { walk(*n.operand); },
                   [&](const Call& c) {
                     for (const auto& a : c.args) walk(a);
                   },
                   [](const auto&) {},
               },
               x.node);
  };
  walk(e);
  return found;
}

void pin_all(Block& b) {
  for_each_stmt(b, [](Stmt& s) { s.pinned = true; });
}

Stmt push_stmt(Expr v, const std::string& label) { return expr_stmt(call("push", {std::move(v), str_lit(label)})); }
Expr pop_expr(const std::string& label) { return call("pop", {str_lit(label)}); }

struct Shared {
  const Program& prog;
  const TemplateRegistry& templates;
  NameGen functions;
  std::map<std::string, std::string> adjoint_of;
  std::vector<FunctionDef> generated;
};

struct Rec {
  enum class Kind { Assign, If, While, For, Insert } kind;
  const Stmt* stmt = nullptr;
  std::string label;
  std::string saved;    // row or length saved by an in-place update
  std::string ctl;      // branch flag, iteration count or range bound
  Expr count = none_lit();
  std::string var_label;
  std::vector<Rec> first, second;
};

class ReverseGen {
 public:
  ReverseGen(Shared& sh, const FunctionDef& orig, std::vector<int> wrt, std::string out_name)
      : sh_(sh), orig_(orig), wrt_(std::move(wrt)), out_name_(std::move(out_name)),
        names_(reserved_names(sh.prog, orig)) {
    for (const auto& g : sh_.generated) names_.reserve(g.name);
    names_.reserve(out_name_);
    f_ = to_anf(orig_, names_);
    if (calls_tape(f_.body))
      throw TransformError(fmt::format("cannot differentiate '{}': it already uses the tape", orig_.name));
    act_ = analyze_activity(sh_.prog, f_, wrt_);
    for (const auto& s : f_.body) collect_defs(s, assigned_);
  }

  FunctionDef run() {
    Block primal;
    std::vector<Rec> recs;
    gen_primal(f_.body, primal, recs);

    const Return* ret = f_.body.empty() ? nullptr : f_.body.back().get_if<Return>();
    if (!ret) throw TransformError(fmt::format("function '{}' does not end with a return", f_.name));

    FunctionDef out;
    out.name = out_name_;
    out.line = orig_.line;
    out.params = orig_.params;
    std::set<std::string> init;
    for (const auto& v : ret->values) {
      const std::string& r = v.as<Name>().id;
      out.params.push_back(Param{grad(r), float_lit(1.0)});
      init.insert(r);
    }

    Block adjoint;
    gen_adjoint(recs, adjoint, init, 0);

    std::vector<Expr> results;
    for (int i : wrt_) {
      const std::string& p = f_.params.at(static_cast<std::size_t>(i)).name;
      if (!initialized(p, init)) hoist(p);
      results.push_back(name(grad(p)));
    }

    Block& body = out.body;
    body.push_back(comment("Initialize the tape"));
    for (const auto& v : local_order()) body.push_back(assign(v, none_lit()));
    body.push_back(comment("Beginning of forward pass"));
    for (auto& s : primal) body.push_back(std::move(s));
    body.push_back(comment("Beginning of backward pass"));
    for (const auto& v : hoisted_order_) body.push_back(assign(grad(v), call("init_grad", {name(v)})));
    for (auto& s : adjoint) body.push_back(std::move(s));
    body.push_back(ret_stmt(std::move(results)));
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
  std::set<std::string> assigned_;
  std::map<std::string, std::string> grads_;
  std::set<std::string> hoisted_;
  std::vector<std::string> hoisted_order_;
  int labels_ = 0;

  static Stmt ret_stmt(std::vector<Expr> values) { return ret(std::move(values)); }

  std::string grad(const std::string& v) {
    auto it = grads_.find(v);
    if (it != grads_.end()) return it->second;
    return grads_[v] = names_.fresh("b" + v);
  }

  std::string label() { return fmt::format("_{:08x}", fnv1a(fmt::format("{}#{}", out_name_, labels_++))); }

  bool active(const Expr& e) const {
    const auto* n = e.get_if<Name>();
    return n && act_.is_active(n->id);
  }

  bool initialized(const std::string& v, const std::set<std::string>& init) const {
    return init.count(v) || hoisted_.count(v);
  }

  void hoist(const std::string& v) {
    if (hoisted_.insert(v).second) hoisted_order_.push_back(v);
  }

  std::vector<std::string> local_order() const {
    std::vector<std::string> out;
    const auto params = orig_.param_names();
    std::set<std::string> seen(params.begin(), params.end());
    std::function<void(const Block&)> walk = [&](const Block& b) {
      for (const auto& s : b) {
        if (const auto* a = s.get_if<Assign>()) {
          if (seen.insert(a->target).second) out.push_back(a->target);
        } else if (const auto* i = s.get_if<If>()) {
          walk(i->then_body);
          walk(i->else_body);
        } else if (const auto* w = s.get_if<While>()) {
          walk(w->body);
        } else if (const auto* r = s.get_if<ForRange>()) {
          walk(r->body);
        }
      }
    };
    walk(f_.body);
    return out;
  }

  // -------------------------------------------------------------------------
  // Forward pass

  void gen_primal(const Block& in, Block& out, std::vector<Rec>& recs) {
    for (const Stmt& s : in) {
      std::visit(overloaded{
                     [&](const Assign& a) {
                       Rec r{Rec::Kind::Assign, &s};
                       r.label = label();
                       const Call* c = a.value.get_if<Call>();
                       const bool in_place = c && !sh_.prog.find(c->callee) &&
                                             (c->callee == "setitem" || c->callee == "append") && !c->args.empty() &&
                                             c->args[0] == name(a.target);
                       if (in_place) {
                         const bool row = c->callee == "setitem";
                         r.saved = names_.fresh("_" + a.target + (row ? "_row" : "_len"));
                         Expr save = row ? call("save_row", {name(a.target), c->args[1]})
                                         : call("save_len", {name(a.target)});
                         out.push_back(assign(r.saved, std::move(save)));
                         out.push_back(push_stmt(name(r.saved), r.label));
                       } else {
                         out.push_back(push_stmt(name(a.target), r.label));
                       }
                       out.push_back(s);
                       recs.push_back(std::move(r));
                     },
                     [&](const If& x) {
                       Rec r{Rec::Kind::If, &s};
                       r.ctl = names_.fresh("_cond");
                       out.push_back(assign(r.ctl, x.cond));
                       If y{name(r.ctl), {}, {}};
                       gen_primal(x.then_body, y.then_body, r.first);
                       gen_primal(x.else_body, y.else_body, r.second);
                       out.push_back(make_stmt(std::move(y), s.line));
                       r.label = label();
                       out.push_back(push_stmt(name(r.ctl), r.label));
                       recs.push_back(std::move(r));
                     },
                     [&](const While& x) {
                       Rec r{Rec::Kind::While, &s};
                       r.ctl = names_.fresh("_count");
                       out.push_back(assign(r.ctl, int_lit(0)));
                       While y{x.cond, {}};
                       gen_primal(x.body, y.body, r.first);
                       y.body.push_back(assign(r.ctl, binop(BinOpKind::Add, name(r.ctl), int_lit(1))));
                       out.push_back(make_stmt(std::move(y), s.line));
                       r.label = label();
                       out.push_back(push_stmt(name(r.ctl), r.label));
                       recs.push_back(std::move(r));
                     },
                     [&](const ForRange& x) {
                       Rec r{Rec::Kind::For, &s};
                       const auto* n = x.count.get_if<Name>();
                       const bool fixed = x.count.is_literal() || (n && !assigned_.count(n->id));
                       if (fixed) {
                         r.count = x.count;
                       } else {
                         r.ctl = names_.fresh("_range");
                         out.push_back(assign(r.ctl, x.count));
                         r.count = name(r.ctl);
                       }
                       ForRange y{x.var, r.count, {}};
                       gen_primal(x.body, y.body, r.first);
                       r.var_label = label();
                       y.body.push_back(push_stmt(name(x.var), r.var_label));
                       out.push_back(make_stmt(std::move(y), s.line));
                       if (!fixed) {
                         r.label = label();
                         out.push_back(push_stmt(name(r.ctl), r.label));
                       }
                       recs.push_back(std::move(r));
                     },
                     [&](const InsertGradOf& g) {
                       if (!act_.is_active(g.var))
                         throw TransformError(fmt::format(
                             "line {}: insert_grad_of({}): '{}' is not active, so it has no gradient", s.line, g.var,
                             g.var));
                       recs.push_back(Rec{Rec::Kind::Insert, &s});
                     },
                     [&](const ExprStmt&) { out.push_back(s); },
                     [](const auto&) {},
                 },
                 s.node);
    }
  }

  // -------------------------------------------------------------------------
  // Backward pass

  void gen_adjoint(const std::vector<Rec>& recs, Block& out, std::set<std::string>& init, int depth) {
    for (auto it = recs.rbegin(); it != recs.rend(); ++it) {
      const Rec& r = *it;
      switch (r.kind) {
        case Rec::Kind::Assign:
          adjoint_assign(r, out, init, depth);
          break;
        case Rec::Kind::If: {
          out.push_back(assign(r.ctl, pop_expr(r.label)));
          If y{name(r.ctl), {}, {}};
          std::set<std::string> a = init, b = init;
          gen_adjoint(r.first, y.then_body, a, depth + 1);
          gen_adjoint(r.second, y.else_body, b, depth + 1);
          std::set<std::string> both;
          std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(both, both.end()));
          init = std::move(both);
          out.push_back(make_stmt(std::move(y), r.stmt->line));
          break;
        }
        case Rec::Kind::While: {
          out.push_back(assign(r.ctl, pop_expr(r.label)));
          ForRange y{names_.fresh("_i"), name(r.ctl), {}};
          std::set<std::string> inner = init;
          gen_adjoint(r.first, y.body, inner, depth + 1);
          out.push_back(make_stmt(std::move(y), r.stmt->line));
          break;
        }
        case Rec::Kind::For: {
          if (!r.ctl.empty()) out.push_back(assign(r.ctl, pop_expr(r.label)));
          const auto& loop = r.stmt->as<ForRange>();
          ForRange y{names_.fresh("_i"), r.count, {}};
          y.body.push_back(assign(loop.var, pop_expr(r.var_label)));
          std::set<std::string> inner = init;
          gen_adjoint(r.first, y.body, inner, depth + 1);
          out.push_back(make_stmt(std::move(y), r.stmt->line));
          break;
        }
        case Rec::Kind::Insert: {
          const auto& g = r.stmt->as<InsertGradOf>();
          if (!initialized(g.var, init)) hoist(g.var);
          if (g.body.empty()) break;
          out.push_back(comment("Inserted code"));
          Block body = g.body;
          for (auto& s : body) rename_in_place(s, {{g.alias, grad(g.var)}});
          pin_all(body);
          for (auto& s : body) out.push_back(std::move(s));
          break;
        }
      }
    }
  }

  void accumulate(const std::string& v, Expr partial, Block& out, std::set<std::string>& init, int depth) {
    const std::string g = grad(v);
    if (initialized(v, init)) {
      out.push_back(assign(g, call("add_grad", {name(g), std::move(partial)})));
    } else if (depth == 0) {
      out.push_back(assign(g, std::move(partial)));
      init.insert(v);
    } else {
      hoist(v);
      out.push_back(assign(g, call("add_grad", {name(g), std::move(partial)})));
    }
  }

  void adjoint_assign(const Rec& r, Block& out, std::set<std::string>& init, int depth) {
    const Assign& a = r.stmt->as<Assign>();
    const std::string& t = a.target;
    const bool is_active = act_.is_active(t);
    if (is_active) out.push_back(comment("Grad of: " + emit_stmt_line(*r.stmt)));
    if (r.saved.empty()) {
      out.push_back(assign(t, pop_expr(r.label)));
    } else {
      const Call& c = a.value.as<Call>();
      out.push_back(assign(r.saved, pop_expr(r.label)));
      Expr restore = c.callee == "setitem" ? call("restore_row", {name(t), c.args[1], name(r.saved)})
                                           : call("restore_len", {name(t), name(r.saved)});
      out.push_back(assign(t, std::move(restore)));
    }
    if (!is_active) return;
    if (!initialized(t, init)) hoist(t);

    std::vector<std::pair<std::string, std::string>> partials;
    const bool in_place = expand(a, out, partials, init);
    if (!in_place) {
      out.push_back(assign(grad(t), call("init_grad", {name(t)})));
      init.insert(t);
    }
    for (const auto& [v, tmp] : partials) accumulate(v, name(tmp), out, init, depth);
  }

  // Emits the partials of one assignment. Returns true when the target's
  // gradient was rewritten in place (the target is also an operand).
  bool expand(const Assign& a, Block& out, std::vector<std::pair<std::string, std::string>>& partials,
              const std::set<std::string>& init) {
    const std::string& t = a.target;
    const std::string bt = grad(t);
    std::string prim;
    std::vector<Expr> args;
    bool done = false;
    std::visit(overloaded{
                   [&](const Name&) {
                     prim = "copy";
                     args = {a.value};
                   },
                   [&](const BinOp& b) {
                     if (is_comparison(b.op)) {
                       done = true;
                       return;
                     }
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
                     if (sh_.prog.find(c.callee) && !sh_.templates.find(c.callee, c.args.size())) {
                       user_call(c, bt, out, partials);
                       done = true;
                       return;
                     }
                     if (c.callee == "tuple") {
                       for (std::size_t k = 0; k < c.args.size(); ++k) {
                         if (!active(c.args[k])) continue;
                         const std::string& v = c.args[k].as<Name>().id;
                         std::string tmp = names_.fresh("_b" + v);
                         out.push_back(
                             assign(tmp, call("getitem", {name(bt), int_lit(static_cast<std::int64_t>(k))})));
                         partials.emplace_back(v, tmp);
                       }
                       done = true;
                       return;
                     }
                     const BuiltinInfo* info = find_builtin(c.callee);
                     if (info && !info->differentiable) {
                       done = true;
                       return;
                     }
                     prim = c.callee;
                     args = c.args;
                   },
                   [&](const auto&) { done = true; },
               },
               a.value.node);
    if (done) return false;

    auto tpl = sh_.templates.find(prim, args.size());
    if (!tpl) throw MissingTemplate(prim);

    std::map<std::string, Expr> bindings{{tpl->params[0], name(t)}};
    std::map<std::string, Expr> grads{{tpl->params[0], name(bt)}};
    int self_uses = 0;
    for (std::size_t k = 0; k < args.size(); ++k) {
      const std::string& p = tpl->params[k + 1];
      bindings.emplace(p, args[k]);
      const bool is_target = args[k] == name(t);
      self_uses += is_target;
      if (active(args[k]) && !is_target)
        grads.emplace(p, name(grad(args[k].as<Name>().id)));
      else
        grads.emplace(p, call("init_grad", {args[k]}));
    }
    for (const auto& s : tpl->body)
      if (const auto* l = s.get_if<Assign>()) bindings[l->target] = name(names_.fresh("_" + l->target));

    const Stmt* last = nullptr;
    for (const auto& s : tpl->body)
      if (!grad_target(s).empty()) last = &s;

    bool in_place = false;
    for (const auto& s : tpl->body) {
      const std::string p = grad_target(s);
      if (p.empty()) {
        const auto& l = s.as<Assign>();
        out.push_back(assign(bindings[l.target].as<Name>().id, substitute(l.value, bindings, grads)));
        continue;
      }
      if (p == tpl->params[0])
        throw TransformError(fmt::format("adjoint template for '{}' assigns the result gradient", prim));
      const Expr& arg = bindings.at(p);
      if (!active(arg)) continue;
      const std::string& v = arg.as<Name>().id;
      const Expr& rhs_src = s.as<IndexAssign>().value;
      if (v == t) {
        if (self_uses == 1 && &s == last) {
          out.push_back(assign(bt, substitute(rhs_src, bindings, grads)));
          in_place = true;
          continue;
        }
      } else if (reads_grad_of(rhs_src, p)) {
        if (!initialized(v, init)) hoist(v);
        out.push_back(assign(grad(v), substitute(rhs_src, bindings, grads)));
        continue;
      }
      std::string tmp = names_.fresh("_b" + v);
      out.push_back(assign(tmp, substitute(rhs_src, bindings, grads)));
      partials.emplace_back(v, tmp);
    }
    return in_place;
  }

  void user_call(const Call& c, const std::string& bt, Block& out,
                 std::vector<std::pair<std::string, std::string>>& partials) {
    const FunctionDef& g = *sh_.prog.find(c.callee);
    const std::string adj = adjoint_function(g);
    std::vector<Expr> args = c.args;
    for (std::size_t k = args.size(); k < g.params.size(); ++k) args.push_back(*g.params[k].default_value);
    const Return* gr = g.body.empty() ? nullptr : g.body.back().get_if<Return>();
    const std::size_t nret = gr ? gr->values.size() : 1;
    std::vector<Expr> call_args = args;
    if (nret == 1) {
      call_args.push_back(name(bt));
    } else {
      for (std::size_t k = 0; k < nret; ++k)
        call_args.push_back(call("getitem", {name(bt), int_lit(static_cast<std::int64_t>(k))}));
    }
    const std::string res = names_.fresh("_b" + c.callee);
    out.push_back(assign(res, call(adj, std::move(call_args))));
    for (std::size_t k = 0; k < args.size(); ++k) {
      if (!active(args[k])) continue;
      const std::string& v = args[k].as<Name>().id;
      std::string tmp = names_.fresh("_b" + v);
      Expr part = g.params.size() == 1 ? name(res) : call("getitem", {name(res), int_lit(static_cast<std::int64_t>(k))});
      out.push_back(assign(tmp, std::move(part)));
      partials.emplace_back(v, tmp);
    }
  }

  std::string adjoint_function(const FunctionDef& g) {
    auto it = sh_.adjoint_of.find(g.name);
    if (it != sh_.adjoint_of.end()) return it->second;
    std::string n = sh_.functions.fresh("adj_" + g.name);
    sh_.adjoint_of[g.name] = n;
    std::vector<int> all;
    for (std::size_t k = 0; k < g.params.size(); ++k) all.push_back(static_cast<int>(k));
    ReverseGen sub(sh_, g, all, n);
    sh_.generated.push_back(sub.run());
    return n;
  }
};

void check_valid(const Program& p, const std::string& entry, const std::vector<int>& wrt) {
  auto diags = validate(p, entry, wrt);
  if (!has_errors(diags)) return;
  std::string msg = fmt::format("'{}' cannot be differentiated:", entry);
  for (const auto& d : diags)
    if (d.severity == Severity::Error) msg += "\n  " + d.str();
  throw TransformError(msg);
}

}  // namespace

std::vector<std::string> reachable_functions(const Program& p, const std::vector<std::string>& roots) {
  std::set<std::string> seen;
  std::vector<std::string> work = roots;
  while (!work.empty()) {
    std::string n = work.back();
    work.pop_back();
    const FunctionDef* f = p.find(n);
    if (!f || !seen.insert(n).second) continue;
    for_each_stmt(f->body, [&](const Stmt& s) {
      std::vector<const Call*> calls;
      auto scan = [&](const Expr& e) { collect_calls(e, calls); };
      std::visit(overloaded{
                     [&](const Assign& a) { scan(a.value); },
                     [&](const IndexAssign& a) {
                       scan(a.index);
                       scan(a.value);
                     },
                     [&](const If& i) { scan(i.cond); },
                     [&](const While& w) { scan(w.cond); },
                     [&](const ForRange& r) { scan(r.count); },
                     [&](const Return& r) {
                       for (const auto& v : r.values) scan(v);
                     },
                     [&](const ExprStmt& e) { scan(e.expr); },
                     [](const auto&) {},
                 },
                 s.node);
      for (const auto* c : calls)
        if (p.find(c->callee)) work.push_back(c->callee);
    });
  }
  std::vector<std::string> out;
  for (const auto& f : p.functions)
    if (seen.count(f.name)) out.push_back(f.name);
  return out;
}

std::set<std::string> function_names(const Program& p) {
  std::set<std::string> out;
  for (const auto& f : p.functions) out.insert(f.name);
  for (const auto& b : all_builtins()) out.insert(std::string(b.name));
  return out;
}

Derivative transform_reverse(const Program& p, const std::string& entry, const std::vector<int>& wrt,
                             const TemplateRegistry& templates) {
  check_valid(p, entry, wrt);
  if (wrt.empty()) throw TransformError("no parameters to differentiate with respect to");
  const FunctionDef& f = *p.find(entry);

  Shared sh{p, templates, NameGen(function_names(p)), {}, {}};
  std::string base = "d" + entry + "d";
  for (std::size_t k = 0; k < wrt.size(); ++k)
    base += (k ? "_" : "") + f.params.at(static_cast<std::size_t>(wrt[k])).name;
  const std::string out_name = sh.functions.fresh(base);

  ReverseGen gen(sh, f, wrt, out_name);
  FunctionDef d = gen.run();

  Derivative out;
  out.entry = out_name;
  out.program.functions.push_back(std::move(d));
  for (auto& g : sh.generated) out.program.functions.push_back(std::move(g));
  std::vector<std::string> roots;
  for (const auto& fn : out.program.functions) roots.push_back(fn.name);
  // Original functions still called by the generated code.
  Program lookup = p;
  for (const auto& fn : out.program.functions) lookup.functions.push_back(fn);
  for (const auto& n : reachable_functions(lookup, roots))
    if (const FunctionDef* orig = p.find(n)) out.program.functions.push_back(*orig);
  return out;
}

}  // namespace gradc::ad
