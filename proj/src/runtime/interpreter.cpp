#include "gradc/interpreter.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <unordered_map>

#include <fmt/format.h>

#include "gradc/builtins.hpp"
#include "gradc/emit.hpp"

namespace gradc::rt {

using namespace lang;

bool EvalOptions::trace_from_env() {
  const char* v = std::getenv("GRADC_TRACE");
  return v && std::string_view(v) == "1";
}

namespace {

using Env = std::unordered_map<std::string, Value>;

std::string short_str(const Value& v) {
  std::string s = v.str();
  if (s.size() > 120) s = s.substr(0, 117) + "...";
  return s;
}

class Interpreter {
 public:
  Interpreter(const Program& p, Tape& tape, const EvalOptions& opts) : program_(p), tape_(tape), opts_(opts) {
    ctx_.inplace = opts.inplace_updates;
    ctx_.out = opts.out;
  }

  Value call(const FunctionDef& f, std::vector<Value> args) {
    if (args.size() > f.params.size())
      throw EvalError(fmt::format("{}() takes {} arguments, got {}", f.name, f.params.size(), args.size()));
    Env env;
    for (std::size_t k = 0; k < f.params.size(); ++k) {
      const Param& prm = f.params[k];
      if (k < args.size()) {
        env[prm.name] = std::move(args[k]);
      } else if (prm.default_value) {
        env[prm.name] = eval(*prm.default_value, env);
      } else {
        throw EvalError(fmt::format("{}() missing argument '{}'", f.name, prm.name));
      }
    }
    Frame frame{f.name, env};
    std::optional<Value> result = exec_block(f.body, frame);
    if (!result) throw EvalError(fmt::format("{}() finished without returning a value", f.name));
    return std::move(*result);
  }

 private:
  struct Frame {
    const std::string& fn;
    Env& env;
  };

  const Program& program_;
  Tape& tape_;
  const EvalOptions& opts_;
  KernelContext ctx_;

  std::optional<Value> exec_block(const Block& b, Frame& fr) {
    for (const Stmt& s : b) {
      if (auto r = exec(s, fr)) return r;
    }
    return std::nullopt;
  }

  void trace(const Stmt& s, Frame& fr, const std::string& target) {
    if (!opts_.trace) return;
    std::string line = fmt::format("[{}:{}] {}", fr.fn, s.line, emit_stmt_line(s));
    if (!target.empty()) {
      auto it = fr.env.find(target);
      if (it != fr.env.end()) line += fmt::format("  -> {} = {}", target, short_str(it->second));
    }
    std::cerr << line << '\n';
  }

  bool truth(const Value& v, const char* what) {
    if (!v.is_bool()) throw EvalError(fmt::format("{} condition must be a bool, got {}", what, v.kind_name()));
    return v.as_bool();
  }

  std::optional<Value> exec(const Stmt& s, Frame& fr) {
    return std::visit(
        overloaded{
            [&](const Assign& a) -> std::optional<Value> {
              Value v = eval_assign_value(a, fr);
              fr.env[a.target] = std::move(v);
              trace(s, fr, a.target);
              return std::nullopt;
            },
            [&](const IndexAssign& a) -> std::optional<Value> {
              Value i = eval(a.index, fr.env);
              Value v = eval(a.value, fr.env);
              auto it = fr.env.find(a.target);
              if (it == fr.env.end()) throw EvalError(fmt::format("name '{}' is not defined", a.target));
              std::vector<Value> args{std::move(it->second), std::move(i), std::move(v)};
              it->second = find_kernel("setitem")(args, ctx_);
              trace(s, fr, a.target);
              return std::nullopt;
            },
            [&](const If& x) -> std::optional<Value> {
              trace(s, fr, "");
              if (truth(eval(x.cond, fr.env), "if")) return exec_block(x.then_body, fr);
              return exec_block(x.else_body, fr);
            },
            [&](const While& x) -> std::optional<Value> {
              trace(s, fr, "");
              while (truth(eval(x.cond, fr.env), "while")) {
                if (auto r = exec_block(x.body, fr)) return r;
              }
              return std::nullopt;
            },
            [&](const ForRange& x) -> std::optional<Value> {
              trace(s, fr, "");
              Value n = eval(x.count, fr.env);
              if (!n.is_int()) throw EvalError(fmt::format("range() count must be an int, got {}", n.kind_name()));
              const std::int64_t count = n.as_int();
              for (std::int64_t k = 0; k < count; ++k) {
                fr.env[x.var] = Value::integer(k);
                if (auto r = exec_block(x.body, fr)) return r;
              }
              return std::nullopt;
            },
            [&](const Return& r) -> std::optional<Value> {
              trace(s, fr, "");
              if (r.values.size() == 1) return eval(r.values[0], fr.env);
              std::vector<Value> items;
              for (const auto& e : r.values) items.push_back(eval(e, fr.env));
              return Value::tuple(std::move(items));
            },
            [&](const ExprStmt& e) -> std::optional<Value> {
              trace(s, fr, "");
              eval(e.expr, fr.env);
              return std::nullopt;
            },
            [&](const InsertGradOf&) -> std::optional<Value> { return std::nullopt; },
            [&](const Comment&) -> std::optional<Value> { return std::nullopt; },
            [&](const Unsupported& u) -> std::optional<Value> {
              throw EvalError(fmt::format("line {}: unsupported construct '{}'", s.line, u.construct));
            },
        },
        s.node);
  }

  // `x = K(x, ...)` with a consuming kernel K hands x's value to the kernel
  // so a uniquely owned array can be updated in place.
  Value eval_assign_value(const Assign& a, Frame& fr) {
    const Call* c = a.value.get_if<Call>();
    if (c && !c->args.empty() && is_consuming_kernel(c->callee) && !program_.find(c->callee)) {
      const Name* first = c->args[0].get_if<Name>();
      if (first && first->id == a.target) {
        bool reused = false;
        for (std::size_t k = 1; k < c->args.size(); ++k) {
          std::set<std::string> names;
          collect_names(c->args[k], names);
          if (names.count(a.target)) reused = true;
        }
        auto it = fr.env.find(a.target);
        if (!reused && it != fr.env.end()) {
          std::vector<Value> args(c->args.size());
          for (std::size_t k = 1; k < c->args.size(); ++k) args[k] = eval(c->args[k], fr.env);
          args[0] = std::move(it->second);
          check_arity(c->callee, args.size());
          return find_kernel(c->callee)(args, ctx_);
        }
      }
    }
    return eval(a.value, fr.env);
  }

  void check_arity(const std::string& name, std::size_t n) {
    const BuiltinInfo* info = find_builtin(name);
    if (info && !arity_ok(*info, n)) throw EvalError(fmt::format("{}() called with {} arguments", name, n));
  }

  static const std::string& label_of(const Expr& e) {
    if (const auto* s = e.get_if<StrLit>()) return s->value;
    throw EvalError("tape labels must be string literals");
  }

  Value eval_call(const Call& c, Env& env) {
    if (const FunctionDef* f = program_.find(c.callee)) {
      std::vector<Value> args;
      args.reserve(c.args.size());
      for (const auto& e : c.args) args.push_back(eval(e, env));
      return call(*f, std::move(args));
    }
    if (c.callee == "push") {
      check_arity("push", c.args.size());
      tape_.push(label_of(c.args[1]), eval(c.args[0], env));
      return Value::none();
    }
    if (c.callee == "pop") {
      check_arity("pop", c.args.size());
      return tape_.pop(label_of(c.args[0]));
    }
    if (c.callee == "print") {
      std::ostream& os = opts_.out ? *opts_.out : std::cout;
      for (std::size_t k = 0; k < c.args.size(); ++k) {
        if (k) os << ' ';
        if (const auto* s = c.args[k].get_if<StrLit>()) os << s->value;
        else os << eval(c.args[k], env).str();
      }
      os << '\n';
      return Value::none();
    }
    KernelFn fn = find_kernel(c.callee);
    if (!fn) throw EvalError(fmt::format("unknown function '{}'", c.callee));
    check_arity(c.callee, c.args.size());
    std::vector<Value> args;
    args.reserve(c.args.size());
    for (const auto& e : c.args) args.push_back(eval(e, env));
    return fn(args, ctx_);
  }

  Value eval(const Expr& e, Env& env) {
    return std::visit(
        overloaded{
            [&](const Name& n) -> Value {
              auto it = env.find(n.id);
              if (it == env.end()) throw EvalError(fmt::format("name '{}' is not defined", n.id));
              return it->second;
            },
            [&](const FloatLit& x) -> Value { return Value::flt(x.value); },
            [&](const IntLit& x) -> Value { return Value::integer(x.value); },
            [&](const BoolLit& x) -> Value { return Value::boolean(x.value); },
            [&](const StrLit&) -> Value { throw EvalError("string literals are only allowed in print and tape calls"); },
            [&](const NoneLit&) -> Value { return Value::none(); },
            [&](const BinOp& b) -> Value { return binop_dispatch(b.op, eval(*b.lhs, env), eval(*b.rhs, env)); },
            [&](const Neg& n) -> Value { return negate(eval(*n.operand, env)); },
            [&](const Call& c) -> Value { return eval_call(c, env); },
            [&](const Index& i) -> Value { return getitem(eval(*i.base, env), eval(*i.index, env)); },
        },
        e.node);
  }
};

}  // namespace

Value eval_program(const Program& p, const std::string& entry, std::vector<Value> args, Tape& tape,
                   const EvalOptions& opts) {
  const FunctionDef* f = p.find(entry);
  if (!f) throw EvalError(fmt::format("no function named '{}'", entry));
  Interpreter interp(p, tape, opts);
  return interp.call(*f, std::move(args));
}

Value eval_program(const Program& p, const std::string& entry, std::vector<Value> args, const EvalOptions& opts) {
  Tape tape;
  Value v = eval_program(p, entry, std::move(args), tape, opts);
  if (!tape.empty()) throw TapeError(fmt::format("{} entries left on the tape after '{}'", tape.size(), entry));
  return v;
}

}  // namespace gradc::rt
