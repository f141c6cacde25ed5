#include "gradc/opt.hpp"

#include <cstdlib>
#include <iostream>
#include <limits>
#include <optional>

#include <fmt/format.h>

#include "gradc/builtins.hpp"

namespace gradc::opt {

using namespace lang;

bool OptOptions::log_from_env() {
  const char* v = std::getenv("GRADC_OPT_LOG");
  return v && std::string_view(v) == "1";
}

namespace {

const Call* call_named(const Expr& e, std::string_view callee) {
  const Call* c = e.get_if<Call>();
  return c && c->callee == callee ? c : nullptr;
}

std::optional<std::string> pop_label(const Stmt& s) {
  const auto* a = s.get_if<Assign>();
  if (!a) return std::nullopt;
  const Call* c = call_named(a->value, "pop");
  if (!c || c->args.size() != 1 || !c->args[0].is<StrLit>()) return std::nullopt;
  return c->args[0].as<StrLit>().value;
}

std::optional<std::string> push_label(const Stmt& s) {
  const auto* e = s.get_if<ExprStmt>();
  if (!e) return std::nullopt;
  const Call* c = call_named(e->expr, "push");
  if (!c || c->args.size() != 2 || !c->args[1].is<StrLit>()) return std::nullopt;
  return c->args[1].as<StrLit>().value;
}

// Calls that must run even when their result is unused: user functions,
// print and the tape.
bool has_effects(const Expr& e) {
  std::vector<const Call*> calls;
  collect_calls(e, calls);
  for (const auto* c : calls)
    if (!find_builtin(c->callee) || c->callee == "print" || c->callee == "push" || c->callee == "pop") return true;
  return false;
}

std::size_t count_stmts(const Block& b) {
  std::size_t n = 0;
  for_each_stmt(b, [&](const Stmt&) { ++n; });
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// CFG

namespace {

class CfgBuilder {
 public:
  Cfg cfg;

  void build(const FunctionDef& f) {
    cur_ = add();
    cfg.entry = cur_;
    block(f.body);
    cfg.exit = cur_;
    for (const auto& [label, link] : links_) {
      if (!link.first || !link.second)
        throw Error(fmt::format("{}(): tape label '{}' has no matching {}", f.name, label,
                                link.first ? "pop" : "push"));
      cfg.tape_links[label] = link;
    }
  }

 private:
  int cur_ = 0;
  std::map<std::string, std::pair<const Stmt*, const Stmt*>> links_;

  int add() {
    cfg.blocks.emplace_back();
    return static_cast<int>(cfg.blocks.size()) - 1;
  }
  void edge(int a, int b) { cfg.edges.emplace_back(a, b); }

  void place(const Stmt& s) {
    cfg.blocks[static_cast<std::size_t>(cur_)].stmts.push_back(&s);
    cfg.block_of[&s] = cur_;
    auto& d = cfg.defs[&s];
    auto& u = cfg.uses[&s];
    std::visit(overloaded{
                   [&](const Assign& a) {
                     d.insert(a.target);
                     collect_names(a.value, u);
                   },
                   [&](const IndexAssign& a) {
                     d.insert(a.target);
                     collect_uses(s, u);
                   },
                   [&](const If& i) { collect_names(i.cond, u); },
                   [&](const While& w) { collect_names(w.cond, u); },
                   [&](const ForRange& r) {
                     d.insert(r.var);
                     collect_names(r.count, u);
                   },
                   [&](const InsertGradOf& g) {
                     collect_uses(s, u);
                     collect_defs(s, d);
                   },
                   [&](const auto&) { collect_uses(s, u); },
               },
               s.node);
    if (auto l = push_label(s)) link(*l, &s, true);
    if (auto l = pop_label(s)) link(*l, &s, false);
  }

  void link(const std::string& label, const Stmt* s, bool push) {
    auto& slot = links_[label];
    const Stmt*& end = push ? slot.first : slot.second;
    if (end) throw Error(fmt::format("tape label '{}' is {} more than once", label, push ? "pushed" : "popped"));
    end = s;
  }

  void block(const Block& b) {
    for (const auto& s : b) {
      if (const auto* i = s.get_if<If>()) {
        place(s);
        const int cond = cur_;
        cur_ = add();
        edge(cond, cur_);
        block(i->then_body);
        const int then_end = cur_;
        int else_end = cond;
        if (!i->else_body.empty()) {
          cur_ = add();
          edge(cond, cur_);
          block(i->else_body);
          else_end = cur_;
        }
        cur_ = add();
        edge(then_end, cur_);
        edge(else_end, cur_);
      } else if (s.is<While>() || s.is<ForRange>()) {
        const Block& body = s.is<While>() ? s.as<While>().body : s.as<ForRange>().body;
        if (!cfg.blocks[static_cast<std::size_t>(cur_)].stmts.empty()) {
          const int prev = cur_;
          cur_ = add();
          edge(prev, cur_);
        }
        const int head = cur_;
        place(s);
        cur_ = add();
        edge(head, cur_);
        block(body);
        edge(cur_, head);
        cur_ = add();
        edge(head, cur_);
      } else {
        place(s);
        if (const auto* g = s.get_if<InsertGradOf>())
          for (const auto& t : g->body) place(t);
      }
    }
  }
};

}  // namespace

Cfg build_cfg(const FunctionDef& f) {
  CfgBuilder b;
  b.build(f);
  return std::move(b.cfg);
}

// ---------------------------------------------------------------------------
// Constant / copy propagation and simplification

namespace {

struct Fact {
  enum class Kind { Const, Zero, Copy } kind;
  Expr value;
  bool operator==(const Fact&) const = default;
};
using Facts = std::map<std::string, Fact>;

Expr canonical_zero() { return call("init_grad", {none_lit()}); }

bool is_number_lit(const Expr& e) { return e.is<FloatLit>() || e.is<IntLit>(); }
double number_of(const Expr& e) {
  return e.is<FloatLit>() ? e.as<FloatLit>().value : static_cast<double>(e.as<IntLit>().value);
}
bool is_lit_value(const Expr& e, double v) { return is_number_lit(e) && number_of(e) == v; }

std::optional<Expr> fold(BinOpKind op, const Expr& a, const Expr& b) {
  if (!is_number_lit(a) || !is_number_lit(b)) return std::nullopt;
  if (is_comparison(op)) {
    const double x = number_of(a), y = number_of(b);
    if (a.is<IntLit>() && b.is<IntLit>()) {
      const auto i = a.as<IntLit>().value, j = b.as<IntLit>().value;
      switch (op) {
        case BinOpKind::Lt: return bool_lit(i < j);
        case BinOpKind::Gt: return bool_lit(i > j);
        case BinOpKind::Le: return bool_lit(i <= j);
        case BinOpKind::Ge: return bool_lit(i >= j);
        default: return bool_lit(i == j);
      }
    }
    switch (op) {
      case BinOpKind::Lt: return bool_lit(x < y);
      case BinOpKind::Gt: return bool_lit(x > y);
      case BinOpKind::Le: return bool_lit(x <= y);
      case BinOpKind::Ge: return bool_lit(x >= y);
      default: return bool_lit(x == y);
    }
  }
  if (a.is<IntLit>() && b.is<IntLit>() && op != BinOpKind::Div) {
    const auto i = a.as<IntLit>().value, j = b.as<IntLit>().value;
    std::int64_t r = 0;
    bool overflow = false;
    switch (op) {
      case BinOpKind::Add: overflow = __builtin_add_overflow(i, j, &r); break;
      case BinOpKind::Sub: overflow = __builtin_sub_overflow(i, j, &r); break;
      default: overflow = __builtin_mul_overflow(i, j, &r); break;
    }
    if (overflow) return std::nullopt;
    return int_lit(r);
  }
  const double x = number_of(a), y = number_of(b);
  switch (op) {
    case BinOpKind::Add: return float_lit(x + y);
    case BinOpKind::Sub: return float_lit(x - y);
    case BinOpKind::Mul: return float_lit(x * y);
    default:
      if (y == 0.0) return std::nullopt;
      return float_lit(x / y);
  }
}

class ConstProp {
 public:
  explicit ConstProp(const OptOptions& o) : opts_(o) {}
  bool changed = false;

  void block(Block& b, Facts& facts) {
    for (auto& s : b) stmt(s, facts);
  }

 private:
  const OptOptions& opts_;

  static void kill(Facts& f, const std::string& v) {
    f.erase(v);
    for (auto it = f.begin(); it != f.end();) {
      if (it->second.kind == Fact::Kind::Copy && it->second.value.as<Name>().id == v)
        it = f.erase(it);
      else
        ++it;
    }
  }

  static void kill_defs(Facts& f, const Stmt& s) {
    std::set<std::string> defs;
    collect_defs(s, defs);
    for (const auto& d : defs) kill(f, d);
  }

  static void kill_defs(Facts& f, const Block& b) {
    for (const auto& s : b) kill_defs(f, s);
  }

  static Facts meet(const Facts& a, const Facts& b) {
    Facts out;
    for (const auto& [k, v] : a) {
      auto it = b.find(k);
      if (it != b.end() && it->second == v) out.emplace(k, v);
    }
    return out;
  }

  template <typename T>
  void update(T& slot, T value) {
    if (!(slot == value)) {
      slot = std::move(value);
      changed = true;
    }
  }

  Expr rewrite(const Expr& e, const Facts& f, bool& zero, bool protect = false) {
    zero = false;
    return std::visit(overloaded{
                          [&](const Name& n) -> Expr {
                            auto it = f.find(n.id);
                            if (it == f.end()) return e;
                            if (it->second.kind == Fact::Kind::Zero) {
                              zero = true;
                              return e;
                            }
                            if (protect) return e;
                            return it->second.value;
                          },
                          [&](const BinOp& b) -> Expr { return rewrite_binop(b, f, zero); },
                          [&](const Neg& n) -> Expr {
                            bool z = false;
                            Expr x = rewrite(*n.operand, f, z);
                            if (z) {
                              zero = true;
                              return canonical_zero();
                            }
                            if (const auto* i = x.get_if<IntLit>(); i && i->value != std::numeric_limits<std::int64_t>::min())
                              return int_lit(-i->value);
                            if (const auto* d = x.get_if<FloatLit>()) return float_lit(-d->value);
                            return neg(std::move(x));
                          },
                          [&](const Index& i) -> Expr {
                            bool zb = false, zi = false;
                            Expr base = rewrite(*i.base, f, zb);
                            Expr idx = rewrite(*i.index, f, zi);
                            if (zb) {
                              zero = true;
                              return canonical_zero();
                            }
                            return index(std::move(base), std::move(idx));
                          },
                          [&](const Call& c) -> Expr { return rewrite_call(c, f, zero, protect); },
                          [&](const auto&) -> Expr { return e; },
                      },
                      e.node);
  }

  Expr rewrite_binop(const BinOp& b, const Facts& f, bool& zero) {
    bool zl = false, zr = false;
    Expr l = rewrite(*b.lhs, f, zl);
    Expr r = rewrite(*b.rhs, f, zr);
    if (auto v = fold(b.op, l, r)) return *v;
    if (is_comparison(b.op)) return binop(b.op, std::move(l), std::move(r));
    auto pass = [&](Expr x, bool z) {
      zero = z;
      return x;
    };
    switch (b.op) {
      case BinOpKind::Add:
        if (zl) return pass(std::move(r), zr);
        if (zr) return pass(std::move(l), false);
        if (opts_.unsafe_algebra && is_lit_value(r, 0.0)) return l;
        if (opts_.unsafe_algebra && is_lit_value(l, 0.0)) return r;
        break;
      case BinOpKind::Sub:
        if (zr) return pass(std::move(l), zl);
        if (zl) return neg(std::move(r));
        if (opts_.unsafe_algebra && is_lit_value(r, 0.0)) return l;
        break;
      case BinOpKind::Mul:
        if (zl || zr) {
          zero = true;
          return canonical_zero();
        }
        if (is_lit_value(r, 1.0)) return l;
        if (is_lit_value(l, 1.0)) return r;
        if (opts_.unsafe_algebra && is_lit_value(r, 0.0)) return r;
        if (opts_.unsafe_algebra && is_lit_value(l, 0.0)) return l;
        break;
      case BinOpKind::Div:
        if (zl && !zr) {
          zero = true;
          return canonical_zero();
        }
        break;
      default:
        break;
    }
    return binop(b.op, std::move(l), std::move(r));
  }

  Expr rewrite_call(const Call& c, const Facts& f, bool& zero, bool protect) {
    std::vector<Expr> args;
    std::vector<bool> z(c.args.size(), false);
    for (std::size_t k = 0; k < c.args.size(); ++k) {
      bool zk = false;
      args.push_back(rewrite(c.args[k], f, zk, protect && k == 0));
      z[k] = zk;
    }
    const std::string& n = c.callee;
    auto collapse = [&] {
      zero = true;
      return canonical_zero();
    };
    auto zero_at = [&](std::size_t k) { return k < z.size() && z[k]; };
    if (n == "init_grad") {
      zero = true;
      return canonical_zero();
    }
    if (n == "add_grad" && args.size() == 2) {
      if (z[0]) {
        zero = z[1];
        return z[1] ? canonical_zero() : args[1];
      }
      if (z[1]) return args[0];
    }
    if ((n == "unbroadcast" || n == "rebroadcast" || n == "copy" || n == "getitem" || n == "sum" || n == "mean" ||
         n == "sum_grad" || n == "mean_grad" || n == "zero_row" || n == "drop_last" || n == "negative") &&
        zero_at(0))
      return collapse();
    if (n == "dot" && (zero_at(0) || zero_at(1))) return collapse();
    if (n == "dot_grad_lhs" && (zero_at(0) || zero_at(2))) return collapse();
    if (n == "dot_grad_rhs" && (zero_at(0) || zero_at(1))) return collapse();
    if ((n == "append" && zero_at(0) && zero_at(1)) || (n == "setitem" && zero_at(0) && zero_at(2)))
      return collapse();
    if (n == "scatter_add" && zero_at(3)) {
      zero = z[0];
      return z[0] ? canonical_zero() : args[0];
    }
    return call(n, std::move(args));
  }

  static bool protected_first(const Assign& a) {
    const Call* c = a.value.get_if<Call>();
    if (!c || c->args.empty() || !find_builtin(c->callee)) return false;
    static const std::set<std::string> consuming{"setitem",     "zero_row",    "scatter_add", "restore_row",
                                                 "restore_len", "drop_last",   "add_grad"};
    return consuming.count(c->callee) && c->args[0] == name(a.target);
  }

  void stmt(Stmt& s, Facts& facts) {
    if (s.pinned) {
      kill_defs(facts, s);
      return;
    }
    std::visit(overloaded{
                   [&](Assign& a) {
                     bool zero = false;
                     Expr v = rewrite(a.value, facts, zero, protected_first(a));
                     if (zero && !call_named(v, "init_grad")) v = canonical_zero();
                     update(a.value, std::move(v));
                     kill(facts, a.target);
                     const Expr& x = a.value;
                     if (x.is_literal() && !x.is<StrLit>()) {
                       facts[a.target] = Fact{Fact::Kind::Const, x};
                     } else if (zero || call_named(x, "init_grad")) {
                       facts[a.target] = Fact{Fact::Kind::Zero, none_lit()};
                     } else if (const auto* n = x.get_if<Name>(); n && n->id != a.target) {
                       facts[a.target] = Fact{Fact::Kind::Copy, x};
                     }
                   },
                   [&](IndexAssign& a) {
                     bool z = false;
                     update(a.index, rewrite(a.index, facts, z));
                     update(a.value, rewrite(a.value, facts, z));
                     kill(facts, a.target);
                   },
                   [&](If& i) {
                     bool z = false;
                     update(i.cond, rewrite(i.cond, facts, z));
                     Facts t = facts, e = facts;
                     block(i.then_body, t);
                     block(i.else_body, e);
                     facts = meet(t, e);
                   },
                   [&](While& w) {
                     kill_defs(facts, w.body);
                     bool z = false;
                     update(w.cond, rewrite(w.cond, facts, z));
                     Facts inner = facts;
                     block(w.body, inner);
                   },
                   [&](ForRange& r) {
                     bool z = false;
                     update(r.count, rewrite(r.count, facts, z));
                     kill_defs(facts, r.body);
                     kill(facts, r.var);
                     Facts inner = facts;
                     block(r.body, inner);
                   },
                   [&](Return& r) {
                     for (auto& v : r.values) {
                       bool z = false;
                       update(v, rewrite(v, facts, z));
                     }
                   },
                   [&](ExprStmt& e) {
                     bool z = false;
                     update(e.expr, rewrite(e.expr, facts, z));
                   },
                   [&](InsertGradOf&) { kill_defs(facts, s); },
                   [](auto&) {},
               },
               s.node);
  }
};

}  // namespace

bool const_prop_and_simplify(FunctionDef& f, const OptOptions& opts) {
  ConstProp cp(opts);
  Facts facts;
  cp.block(f.body, facts);
  return cp.changed;
}

// ---------------------------------------------------------------------------
// Tape elision

namespace {

struct Linear {
  struct Entry {
    Stmt* stmt;
    int index;
    int outer_start;  // extent of the outermost enclosing loop, or -1
    int outer_end;
  };
  std::vector<Entry> entries;

  void walk(Block& b, int outer_start, int* outer_end_slot) {
    for (auto& s : b) {
      const int idx = static_cast<int>(entries.size());
      entries.push_back({&s, idx, outer_start, -1});
      const bool loop = s.is<While>() || s.is<ForRange>();
      const int start = outer_start >= 0 ? outer_start : (loop ? idx : -1);
      std::visit(overloaded{
                     [&](If& i) {
                       walk(i.then_body, outer_start, outer_end_slot);
                       walk(i.else_body, outer_start, outer_end_slot);
                     },
                     [&](While& w) { walk(w.body, start, outer_end_slot); },
                     [&](ForRange& r) { walk(r.body, start, outer_end_slot); },
                     [&](InsertGradOf& g) { walk(g.body, outer_start, outer_end_slot); },
                     [](auto&) {},
                 },
                 s.node);
      if (loop && outer_start < 0) {
        const int end = static_cast<int>(entries.size()) - 1;
        for (int k = idx; k <= end; ++k) entries[static_cast<std::size_t>(k)].outer_end = end;
        for (int k = idx; k <= end; ++k) entries[static_cast<std::size_t>(k)].outer_start = idx;
      }
    }
  }
};

std::set<std::string> direct_defs(const Stmt& s) {
  std::set<std::string> out;
  if (const auto* a = s.get_if<Assign>()) out.insert(a->target);
  if (const auto* a = s.get_if<IndexAssign>()) out.insert(a->target);
  if (const auto* r = s.get_if<ForRange>()) out.insert(r->var);
  return out;
}

void erase_marked(Block& b, const std::set<const Stmt*>& marked) {
  for (auto& s : b)
    std::visit(overloaded{
                   [&](If& i) {
                     erase_marked(i.then_body, marked);
                     erase_marked(i.else_body, marked);
                   },
                   [&](While& w) { erase_marked(w.body, marked); },
                   [&](ForRange& r) { erase_marked(r.body, marked); },
                   [](auto&) {},
               },
               s.node);
  std::vector<bool> drop;
  for (const auto& s : b) drop.push_back(marked.count(&s) > 0);
  Block kept;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (!drop[i]) kept.push_back(std::move(b[i]));
  b = std::move(kept);
}

}  // namespace

bool elide_tape(FunctionDef& f) {
  Linear lin;
  lin.walk(f.body, -1, nullptr);
  std::map<std::string, const Linear::Entry*> pushes, pops;
  for (const auto& e : lin.entries) {
    if (auto l = push_label(*e.stmt)) pushes[*l] = &e;
    if (auto l = pop_label(*e.stmt)) pops[*l] = &e;
  }
  std::set<const Stmt*> removed;
  for (const auto& [label, push] : pushes) {
    auto it = pops.find(label);
    if (it == pops.end()) continue;
    const Linear::Entry* pop = it->second;
    if (pop->index < push->index || push->stmt->pinned || pop->stmt->pinned) continue;
    const Expr& pushed = push->stmt->as<ExprStmt>().expr.as<Call>().args[0];
    bool safe = pushed.is_literal() && !pushed.is<StrLit>();
    if (const auto* n = pushed.get_if<Name>()) {
      const int lo = push->outer_start >= 0 ? push->outer_start : push->index;
      const int hi = pop->outer_end >= 0 ? pop->outer_end : pop->index;
      safe = true;
      for (int k = lo; k <= hi && safe; ++k) {
        const auto& e = lin.entries[static_cast<std::size_t>(k)];
        if (e.stmt == pop->stmt) continue;
        if (direct_defs(*e.stmt).count(n->id)) safe = false;
      }
    }
    if (!safe) continue;
    pop->stmt->as<Assign>().value = pushed;
    removed.insert(push->stmt);
  }
  if (removed.empty()) return false;
  erase_marked(f.body, removed);
  return true;
}

// ---------------------------------------------------------------------------
// Dead code elimination

namespace {

class Dce {
 public:
  using Live = std::set<std::string>;
  std::set<std::string> live_labels;
  bool rewrite = false;
  bool changed = false;

  Live block(Block& b, Live live) {
    for (std::size_t i = b.size(); i-- > 0;) {
      bool dead = false;
      live = stmt(b[i], std::move(live), dead);
      if (rewrite && dead) {
        b.erase(b.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
      }
    }
    return live;
  }

 private:
  static void add_names(const Expr& e, Live& live) { collect_names(e, live); }

  Live loop_head(Block& body, const Live& after, const Expr* cond) {
    const bool saved = rewrite;
    rewrite = false;
    Live head = after;
    if (cond) add_names(*cond, head);
    for (;;) {
      Block scratch = body;
      Live in = block(scratch, head);
      Live next = after;
      if (cond) add_names(*cond, next);
      next.insert(in.begin(), in.end());
      next.insert(head.begin(), head.end());
      if (next == head) break;
      head = std::move(next);
    }
    rewrite = saved;
    return head;
  }

  Live stmt(Stmt& s, Live live, bool& dead) {
    return std::visit(
        overloaded{
            [&](Assign& a) -> Live {
              if (auto l = pop_label(s)) {
                if (live.count(a.target)) live_labels.insert(*l);
                if (!live_labels.count(*l) && !s.pinned) {
                  dead = true;
                  return live;
                }
                live.erase(a.target);
                return live;
              }
              const auto* self = a.value.get_if<Name>();
              if (!s.pinned && ((self && self->id == a.target) || (!live.count(a.target) && !has_effects(a.value)))) {
                dead = true;
                return live;
              }
              live.erase(a.target);
              add_names(a.value, live);
              return live;
            },
            [&](IndexAssign& a) -> Live {
              if (!s.pinned && !live.count(a.target) && !has_effects(a.value) && !has_effects(a.index)) {
                dead = true;
                return live;
              }
              add_names(a.index, live);
              add_names(a.value, live);
              live.insert(a.target);
              return live;
            },
            [&](ExprStmt& e) -> Live {
              if (auto l = push_label(s)) {
                if (!live_labels.count(*l) && !s.pinned) {
                  dead = true;
                  return live;
                }
              } else if (!s.pinned && !has_effects(e.expr)) {
                dead = true;
                return live;
              }
              add_names(e.expr, live);
              return live;
            },
            [&](Return& r) -> Live {
              Live out;
              for (const auto& v : r.values) add_names(v, out);
              return out;
            },
            [&](If& i) -> Live {
              Live t = block(i.then_body, live);
              Live e = block(i.else_body, live);
              t.insert(e.begin(), e.end());
              add_names(i.cond, t);
              if (!s.pinned && i.then_body.empty() && i.else_body.empty() && !has_effects(i.cond)) dead = true;
              return t;
            },
            [&](While& w) -> Live {
              Live head = loop_head(w.body, live, &w.cond);
              block(w.body, head);
              if (!s.pinned && w.body.empty() && !has_effects(w.cond)) dead = true;
              return head;
            },
            [&](ForRange& r) -> Live {
              Live head = loop_head(r.body, live, nullptr);
              block(r.body, head);
              add_names(r.count, head);
              if (!s.pinned && r.body.empty() && !has_effects(r.count)) dead = true;
              return head;
            },
            [&](InsertGradOf& g) -> Live {
              std::set<std::string> uses;
              collect_uses(s, uses);
              live.insert(uses.begin(), uses.end());
              (void)g;
              return live;
            },
            [&](auto&) -> Live { return live; },
        },
        s.node);
  }
};

}  // namespace

bool liveness_and_dce(FunctionDef& f) {
  Dce d;
  for (;;) {
    const std::size_t before = d.live_labels.size();
    Block scratch = f.body;
    d.block(scratch, {});
    if (d.live_labels.size() == before) break;
  }
  d.rewrite = true;
  d.block(f.body, {});
  return d.changed;
}

// ---------------------------------------------------------------------------

namespace {

bool tidy_block(Block& b) {
  bool changed = false;
  bool next_is_comment_or_end = true;
  for (std::size_t i = b.size(); i-- > 0;) {
    Stmt& s = b[i];
    std::visit(overloaded{
                   [&](If& x) { changed = tidy_block(x.then_body) || changed, changed = tidy_block(x.else_body) || changed; },
                   [&](While& x) { changed = tidy_block(x.body) || changed; },
                   [&](ForRange& x) { changed = tidy_block(x.body) || changed; },
                   [](auto&) {},
               },
               s.node);
    if (s.is<Comment>() && next_is_comment_or_end) {
      b.erase(b.begin() + static_cast<std::ptrdiff_t>(i));
      changed = true;
      continue;
    }
    next_is_comment_or_end = s.is<Comment>();
  }
  return changed;
}

}  // namespace

bool tidy_comments(FunctionDef& f) { return tidy_block(f.body); }

FunctionDef optimize(const FunctionDef& f, const OptOptions& opts) {
  FunctionDef g = f;
  const std::size_t bound = count_stmts(f.body) + 10;
  for (std::size_t iter = 0; iter < bound; ++iter) {
    build_cfg(g);
    const bool cp = const_prop_and_simplify(g, opts);
    const bool el = elide_tape(g);
    const bool dc = liveness_and_dce(g);
    const bool tc = tidy_comments(g);
    if (opts.log)
      std::cerr << fmt::format("[opt] {} round {}: const_prop={} elide_tape={} dce={} comments={} statements={}\n",
                               g.name, iter + 1, cp, el, dc, tc, count_stmts(g.body));
    if (!cp && !el && !dc && !tc) return g;
  }
  throw Error(fmt::format("optimizer did not reach a fixpoint on '{}' within {} rounds", f.name, bound));
}

Program optimize(const Program& p, const OptOptions& opts) {
  Program out;
  for (const auto& f : p.functions) out.functions.push_back(optimize(f, opts));
  return out;
}

}  // namespace gradc::opt
