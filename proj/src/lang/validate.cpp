#include "gradc/validate.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <map>

#include <fmt/format.h>

#include "gradc/builtins.hpp"

namespace gradc::lang {

std::string Diagnostic::str() const {
  return fmt::format("line {}: {} [{}] {}", line, severity == Severity::Error ? "error" : "warning", rule, message);
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.severity == Severity::Error; });
}

namespace {

class FunctionChecker {
 public:
  FunctionChecker(const Program& p, const FunctionDef& f, std::vector<Diagnostic>& out) : p_(p), f_(f), out_(out) {
    for (const auto& prm : f.params) params_.insert(prm.name);
    for (const auto& s : f.body) collect_defs(s, assigned_);
  }

  std::set<std::string> callees;

  void run() {
    for (const auto& prm : f_.params) {
      if (find_builtin(prm.name) || p_.find(prm.name))
        error(f_.line, "R4", fmt::format("parameter '{}' shadows a function name", prm.name));
      if (prm.default_value) check_expr(*prm.default_value, f_.line, false);
    }
    std::size_t returns = 0;
    for (std::size_t i = 0; i < f_.body.size(); ++i) {
      const Stmt& s = f_.body[i];
      if (s.is<Return>()) {
        ++returns;
        bool trailing_only = std::all_of(f_.body.begin() + static_cast<std::ptrdiff_t>(i) + 1, f_.body.end(),
                                         [](const Stmt& t) { return t.is<Comment>(); });
        if (!trailing_only) error(s.line, "R4", "return must be the last statement of the function");
      }
      check_stmt(s, 0);
    }
    if (returns == 0) error(f_.line, "R4", fmt::format("function '{}' has no return statement", f_.name));
    check_in_place_returns();
  }

 private:
  void error(int line, const char* rule, std::string msg) {
    out_.push_back({Severity::Error, line, rule, std::move(msg)});
  }
  void warning(int line, const char* rule, std::string msg) {
    out_.push_back({Severity::Warning, line, rule, std::move(msg)});
  }

  void check_target(const std::string& target, int line) {
    if (find_builtin(target) || p_.find(target))
      error(line, "R4", fmt::format("assignment to '{}' shadows a function name", target));
  }

  void check_block(const Block& b, int depth) {
    for (const auto& s : b) {
      if (s.is<Return>()) error(s.line, "R4", "return inside a nested block");
      check_stmt(s, depth);
    }
  }

  void check_stmt(const Stmt& s, int depth) {
    std::visit(overloaded{
                   [&](const Assign& a) {
                     check_target(a.target, s.line);
                     check_expr(a.value, s.line, false);
                   },
                   [&](const IndexAssign& a) {
                     check_target(a.target, s.line);
                     check_expr(a.index, s.line, false);
                     check_expr(a.value, s.line, false);
                     if (params_.count(a.target)) mutated_params_.emplace(a.target, s.line);
                   },
                   [&](const If& i) {
                     check_expr(i.cond, s.line, false);
                     check_block(i.then_body, depth + 1);
                     check_block(i.else_body, depth + 1);
                   },
                   [&](const While& w) {
                     check_expr(w.cond, s.line, false);
                     check_block(w.body, depth + 1);
                   },
                   [&](const ForRange& f) {
                     check_target(f.var, s.line);
                     check_expr(f.count, s.line, false);
                     std::set<std::string> written;
                     for (const auto& b : f.body) collect_defs(b, written);
                     if (written.count(f.var))
                       error(s.line, "R4", fmt::format("loop variable '{}' is reassigned inside the loop", f.var));
                     check_block(f.body, depth + 1);
                   },
                   [&](const Return& r) {
                     for (const auto& v : r.values) check_expr(v, s.line, false);
                   },
                   [&](const ExprStmt& e) {
                     check_expr(e.expr, s.line, false);
                     const auto* c = e.expr.get_if<Call>();
                     if (!c || c->callee != "push")
                       warning(s.line, "R5", "result of expression statement is unused; the call is assumed pure");
                   },
                   [&](const InsertGradOf& g) {
                     if (depth > 0) error(s.line, "R4", "insert_grad_of must appear at function top level");
                     if (!params_.count(g.var) && !assigned_.count(g.var))
                       error(s.line, "R2", fmt::format("insert_grad_of refers to unknown variable '{}'", g.var));
                     for (const auto& b : g.body) {
                       bool has_return = b.is<Return>();
                       for_each_stmt(Block{b}, [&](const Stmt& t) { has_return = has_return || t.is<Return>(); });
                       if (has_return) error(b.line, "R4", "return inside insert_grad_of");
                       if (b.is<InsertGradOf>()) error(b.line, "R4", "nested insert_grad_of");
                     }
                     check_block_inserted(g, depth + 1);
                   },
                   [](const Comment&) {},
                   [&](const Unsupported& u) { error(s.line, "R4", fmt::format("unsupported syntax: {}", u.construct)); },
               },
               s.node);
  }

  void check_block_inserted(const InsertGradOf& g, int depth) {
    // The alias is bound by the block itself.
    const bool had = assigned_.count(g.alias) > 0;
    assigned_.insert(g.alias);
    for (const auto& b : g.body) {
      if (b.is<Return>()) continue;
      check_stmt(b, depth);
    }
    if (!had) assigned_.erase(g.alias);
  }

  void check_expr(const Expr& e, int line, bool string_ok) {
    std::visit(overloaded{
                   [&](const Name& n) {
                     if (params_.count(n.id) || assigned_.count(n.id)) return;
                     if (find_builtin(n.id) || p_.find(n.id)) {
                       error(line, "R4", fmt::format("function '{}' used as a value", n.id));
                       return;
                     }
                     error(line, "R2", fmt::format("free variable '{}' (closures are not supported)", n.id));
                   },
                   [&](const StrLit&) {
                     if (!string_ok) error(line, "R4", "string values are only allowed as print arguments or tape labels");
                   },
                   [&](const BinOp& b) {
                     check_expr(*b.lhs, line, false);
                     check_expr(*b.rhs, line, false);
                   },
                   [&](const Neg& n) { check_expr(*n.operand, line, false); },
                   [&](const Index& i) {
                     check_expr(*i.base, line, false);
                     check_expr(*i.index, line, false);
                   },
                   [&](const Call& c) { check_call(c, line); },
                   [](const auto&) {},
               },
               e.node);
  }

  void check_call(const Call& c, int line) {
    if (const auto* b = find_builtin(c.callee)) {
      if (!arity_ok(*b, c.args.size()))
        error(line, "R3", fmt::format("builtin '{}' called with {} argument(s)", c.callee, c.args.size()));
      for (std::size_t i = 0; i < c.args.size(); ++i) {
        bool label = (c.callee == "push" && i == 1) || (c.callee == "pop" && i == 0);
        check_expr(c.args[i], line, c.callee == "print" || label);
      }
      return;
    }
    if (const auto* g = p_.find(c.callee)) {
      std::size_t required = 0;
      for (const auto& prm : g->params)
        if (!prm.default_value) ++required;
      if (c.args.size() < required || c.args.size() > g->params.size())
        error(line, "R3", fmt::format("function '{}' called with {} argument(s), expects {}", c.callee,
                                      c.args.size(), g->params.size()));
      callees.insert(c.callee);
    } else {
      error(line, "R3", fmt::format("callee '{}' cannot be resolved", c.callee));
    }
    for (const auto& a : c.args) check_expr(a, line, false);
  }

  void check_in_place_returns() {
    std::set<std::string> returned;
    for (const auto& s : f_.body)
      if (auto* r = s.get_if<Return>())
        for (const auto& v : r->values)
          if (auto* n = v.get_if<Name>()) returned.insert(n->id);
    for (const auto& [param, line] : mutated_params_)
      if (!returned.count(param))
        error(line, "R1",
              fmt::format("parameter '{}' is modified in place but is not returned by '{}'", param, f_.name));
  }

  const Program& p_;
  const FunctionDef& f_;
  std::vector<Diagnostic>& out_;
  std::set<std::string> params_;
  std::set<std::string> assigned_;
  std::map<std::string, int> mutated_params_;
};

}  // namespace

std::vector<Diagnostic> validate(const Program& p, const std::string& entry, const std::vector<int>& wrt) {
  const FunctionDef* f = p.find(entry);
  if (!f) throw Error(fmt::format("unknown entry function '{}'", entry));
  for (int i : wrt)
    if (i < 0 || static_cast<std::size_t>(i) >= f->params.size())
      throw Error(fmt::format("wrt index {} out of range for '{}' with {} parameter(s)", i, entry, f->params.size()));

  std::vector<Diagnostic> out;
  std::map<std::string, std::set<std::string>> graph;
  std::deque<std::string> work{entry};
  std::set<std::string> seen{entry};
  while (!work.empty()) {
    const FunctionDef* g = p.find(work.front());
    work.pop_front();
    if (find_builtin(g->name)) out.push_back({Severity::Error, g->line, "R3", fmt::format("function '{}' shadows a builtin", g->name)});
    FunctionChecker checker(p, *g, out);
    checker.run();
    graph[g->name] = checker.callees;
    for (const auto& c : checker.callees)
      if (seen.insert(c).second) work.push_back(c);
  }

  // Recursion cannot be unrolled at transform time.
  std::map<std::string, int> state;
  std::function<bool(const std::string&)> cyclic = [&](const std::string& n) {
    state[n] = 1;
    for (const auto& c : graph[n]) {
      if (state[c] == 1) return true;
      if (state[c] == 0 && cyclic(c)) return true;
    }
    state[n] = 2;
    return false;
  };
  if (cyclic(entry)) out.push_back({Severity::Error, f->line, "R4", "recursive functions are not supported"});
  return out;
}

}  // namespace gradc::lang
