#include <mutex>

#include <fmt/format.h>

#include "ad_internal.hpp"
#include "gradc/parser.hpp"

namespace gradc::ad {

using namespace lang;

MissingTemplate::MissingTemplate(const std::string& primitive, const std::string& kind)
    : TransformError(fmt::format("no {} template registered for '{}'", kind, primitive)), primitive_(primitive) {}

TemplateRegistry::TemplateRegistry(const TemplateRegistry& o) {
  std::shared_lock lock(o.mutex_);
  table_ = o.table_;
}

TemplateRegistry& TemplateRegistry::operator=(const TemplateRegistry& o) {
  if (this == &o) return *this;
  std::scoped_lock lock(mutex_);
  std::shared_lock other(o.mutex_);
  table_ = o.table_;
  return *this;
}

void TemplateRegistry::register_template(Template t, bool override_existing) {
  if (t.params.empty()) throw TransformError(fmt::format("template for '{}' needs a result parameter", t.primitive));
  std::set<std::string> placeholders(t.params.begin(), t.params.end());
  for_each_stmt(t.body, [&](const Stmt& s) {
    if (const auto* a = s.get_if<IndexAssign>()) {
      const auto* p = a->index.get_if<Name>();
      if (a->target != "d" || !p || !placeholders.count(p->id))
        throw TransformError(fmt::format("template for '{}': only d[placeholder] may be assigned by index",
                                         t.primitive));
    }
  });
  auto key = std::make_pair(t.primitive, t.arity());
  std::scoped_lock lock(mutex_);
  if (table_.count(key) && !override_existing)
    throw TransformError(fmt::format("a template for '{}' with {} argument(s) is already registered", t.primitive,
                                     t.arity()));
  table_[key] = std::make_shared<const Template>(std::move(t));
}

void TemplateRegistry::load(std::string_view source, std::string_view kind, bool override_existing) {
  for (auto& d : parse_decorated(source)) {
    if (d.decorator != kind)
      throw TransformError(fmt::format("expected @{}(...) but found @{}({})", kind, d.decorator, d.argument));
    Template t{d.argument, d.function.param_names(), std::move(d.function.body)};
    register_template(std::move(t), override_existing);
  }
}

std::shared_ptr<const Template> TemplateRegistry::find(const std::string& name, std::size_t arity) const {
  std::shared_lock lock(mutex_);
  auto it = table_.find({name, arity});
  return it == table_.end() ? nullptr : it->second;
}

bool TemplateRegistry::has(const std::string& name) const {
  std::shared_lock lock(mutex_);
  auto it = table_.lower_bound({name, 0});
  return it != table_.end() && it->first.first == name;
}

std::vector<std::string> TemplateRegistry::primitives() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [key, t] : table_)
    if (out.empty() || out.back() != key.first) out.push_back(key.first);
  return out;
}

std::string_view builtin_adjoint_source() {
  return R"(@adjoint(copy)
def adjoint_copy(z, x):
    d[x] = copy(d[z])

@adjoint(add)
def adjoint_add(z, x, y):
    d[x] = unbroadcast(d[z], x)
    d[y] = unbroadcast(d[z], y)

@adjoint(subtract)
def adjoint_subtract(z, x, y):
    d[x] = unbroadcast(d[z], x)
    d[y] = unbroadcast(-d[z], y)

@adjoint(multiply)
def adjoint_multiply(z, x, y):
    d[x] = unbroadcast(d[z] * y, x)
    d[y] = unbroadcast(d[z] * x, y)

@adjoint(divide)
def adjoint_divide(z, x, y):
    d[x] = unbroadcast(d[z] / y, x)
    d[y] = unbroadcast(-d[z] * x / (y * y), y)

@adjoint(negative)
def adjoint_negative(z, x):
    d[x] = -d[z]

@adjoint(dot)
def adjoint_dot(z, x, y):
    d[x] = dot_grad_lhs(d[z], x, y)
    d[y] = dot_grad_rhs(d[z], x, y)

@adjoint(tanh)
def adjoint_tanh(z, x):
    d[x] = d[z] * (1.0 - tanh(x) * tanh(x))

@adjoint(exp)
def adjoint_exp(z, x):
    d[x] = d[z] * exp(x)

@adjoint(log)
def adjoint_log(z, x):
    d[x] = d[z] / x

@adjoint(sqrt)
def adjoint_sqrt(z, x):
    d[x] = d[z] / (2.0 * sqrt(x))

@adjoint(sum)
def adjoint_sum(z, x):
    d[x] = sum_grad(d[z], x)

@adjoint(sum)
def adjoint_sum_axis(z, x, axis):
    d[x] = sum_grad(d[z], x, axis)

@adjoint(sum)
def adjoint_sum_keepdims(z, x, axis, keepdims):
    d[x] = sum_grad(d[z], x, axis, keepdims)

@adjoint(mean)
def adjoint_mean(z, x):
    d[x] = mean_grad(d[z], x)

@adjoint(mean)
def adjoint_mean_axis(z, x, axis):
    d[x] = mean_grad(d[z], x, axis)

@adjoint(mean)
def adjoint_mean_keepdims(z, x, axis, keepdims):
    d[x] = mean_grad(d[z], x, axis, keepdims)

@adjoint(getitem)
def adjoint_getitem(z, x, i):
    d[x] = scatter_add(d[x], x, i, d[z])

@adjoint(setitem)
def adjoint_setitem(z, x, i, v):
    d[v] = getitem(d[z], i)
    d[x] = zero_row(d[z], i)

@adjoint(append)
def adjoint_append(z, x, r):
    d[r] = getitem(d[z], -1)
    d[x] = drop_last(d[z])

@adjoint(parray)
def adjoint_parray(z, x):
    d[x] = copy(d[z])

@adjoint(add_grad)
def adjoint_add_grad(z, x, y):
    d[x] = copy(d[z])
    d[y] = copy(d[z])

@adjoint(unbroadcast)
def adjoint_unbroadcast(z, g, like):
    d[g] = rebroadcast(d[z], g)

@adjoint(rebroadcast)
def adjoint_rebroadcast(z, g, like):
    d[g] = unbroadcast(d[z], g)

@adjoint(sum_grad)
def adjoint_sum_grad(z, g, x):
    d[g] = sum(d[z])

@adjoint(sum_grad)
def adjoint_sum_grad_axis(z, g, x, axis):
    d[g] = sum(d[z], axis)

@adjoint(sum_grad)
def adjoint_sum_grad_keepdims(z, g, x, axis, keepdims):
    d[g] = sum(d[z], axis, keepdims)

@adjoint(mean_grad)
def adjoint_mean_grad(z, g, x):
    d[g] = mean(d[z])

@adjoint(mean_grad)
def adjoint_mean_grad_axis(z, g, x, axis):
    d[g] = mean(d[z], axis)

@adjoint(mean_grad)
def adjoint_mean_grad_keepdims(z, g, x, axis, keepdims):
    d[g] = mean(d[z], axis, keepdims)

@adjoint(dot_grad_lhs)
def adjoint_dot_grad_lhs(z, g, a, b):
    d[g] = dot(d[z], b)
    d[b] = dot_grad_rhs(g, d[z], b)

@adjoint(dot_grad_rhs)
def adjoint_dot_grad_rhs(z, g, a, b):
    d[g] = dot(a, d[z])
    d[a] = dot_grad_lhs(g, a, d[z])

@adjoint(scatter_add)
def adjoint_scatter_add(z, acc, x, i, g):
    d[g] = getitem(d[z], i)
    d[acc] = copy(d[z])

@adjoint(zero_row)
def adjoint_zero_row(z, g, i):
    d[g] = zero_row(d[z], i)

@adjoint(drop_last)
def adjoint_drop_last(z, g):
    d[g] = append(d[z], init_grad(g))

@adjoint(restore_row)
def adjoint_restore_row(z, x, i, saved):
    d[saved] = getitem(d[z], i)
    d[x] = zero_row(d[z], i)

@adjoint(restore_len)
def adjoint_restore_len(z, x, saved):
    d[x] = append(d[z], init_grad(x))
)";
}

std::string_view builtin_tangent_source() {
  return R"(@tangent(copy)
def tangent_copy(z, x):
    d[z] = copy(d[x])

@tangent(add)
def tangent_add(z, x, y):
    d[z] = d[x] + d[y]

@tangent(subtract)
def tangent_subtract(z, x, y):
    d[z] = d[x] - d[y]

@tangent(multiply)
def tangent_multiply(z, x, y):
    d[z] = d[x] * y + x * d[y]

@tangent(divide)
def tangent_divide(z, x, y):
    d[z] = d[x] / y - x * d[y] / (y * y)

@tangent(negative)
def tangent_negative(z, x):
    d[z] = -d[x]

@tangent(dot)
def tangent_dot(z, x, y):
    d[z] = dot(d[x], y) + dot(x, d[y])

@tangent(tanh)
def tangent_tanh(z, x):
    d[z] = d[x] * (1.0 - tanh(x) * tanh(x))

@tangent(exp)
def tangent_exp(z, x):
    d[z] = d[x] * exp(x)

@tangent(log)
def tangent_log(z, x):
    d[z] = d[x] / x

@tangent(sqrt)
def tangent_sqrt(z, x):
    d[z] = d[x] / (2.0 * sqrt(x))

@tangent(sum)
def tangent_sum(z, x):
    d[z] = sum(d[x])

@tangent(sum)
def tangent_sum_axis(z, x, axis):
    d[z] = sum(d[x], axis)

@tangent(sum)
def tangent_sum_keepdims(z, x, axis, keepdims):
    d[z] = sum(d[x], axis, keepdims)

@tangent(mean)
def tangent_mean(z, x):
    d[z] = mean(d[x])

@tangent(mean)
def tangent_mean_axis(z, x, axis):
    d[z] = mean(d[x], axis)

@tangent(mean)
def tangent_mean_keepdims(z, x, axis, keepdims):
    d[z] = mean(d[x], axis, keepdims)

@tangent(getitem)
def tangent_getitem(z, x, i):
    d[z] = getitem(d[x], i)

@tangent(setitem)
def tangent_setitem(z, x, i, v):
    d[z] = scatter_add(zero_row(d[x], i), x, i, d[v])

@tangent(append)
def tangent_append(z, x, r):
    d[z] = append(add_grad(zeros_like(x), d[x]), d[r])

@tangent(parray)
def tangent_parray(z, x):
    d[z] = copy(d[x])

@tangent(add_grad)
def tangent_add_grad(z, x, y):
    d[z] = add_grad(d[x], d[y])

@tangent(unbroadcast)
def tangent_unbroadcast(z, g, like):
    d[z] = unbroadcast(d[g], like)

@tangent(rebroadcast)
def tangent_rebroadcast(z, g, like):
    d[z] = rebroadcast(d[g], like)

@tangent(sum_grad)
def tangent_sum_grad(z, g, x):
    d[z] = sum_grad(d[g], x)

@tangent(sum_grad)
def tangent_sum_grad_axis(z, g, x, axis):
    d[z] = sum_grad(d[g], x, axis)

@tangent(sum_grad)
def tangent_sum_grad_keepdims(z, g, x, axis, keepdims):
    d[z] = sum_grad(d[g], x, axis, keepdims)

@tangent(mean_grad)
def tangent_mean_grad(z, g, x):
    d[z] = mean_grad(d[g], x)

@tangent(mean_grad)
def tangent_mean_grad_axis(z, g, x, axis):
    d[z] = mean_grad(d[g], x, axis)

@tangent(mean_grad)
def tangent_mean_grad_keepdims(z, g, x, axis, keepdims):
    d[z] = mean_grad(d[g], x, axis, keepdims)

@tangent(dot_grad_lhs)
def tangent_dot_grad_lhs(z, g, a, b):
    d[z] = dot_grad_lhs(d[g], a, b) + dot_grad_lhs(g, a, d[b])

@tangent(dot_grad_rhs)
def tangent_dot_grad_rhs(z, g, a, b):
    d[z] = dot_grad_rhs(d[g], a, b) + dot_grad_rhs(g, d[a], b)

@tangent(scatter_add)
def tangent_scatter_add(z, acc, x, i, g):
    d[z] = scatter_add(d[acc], x, i, d[g])

@tangent(zero_row)
def tangent_zero_row(z, g, i):
    d[z] = zero_row(d[g], i)

@tangent(drop_last)
def tangent_drop_last(z, g):
    d[z] = drop_last(d[g])
)";
}

TemplateRegistry& default_adjoints() {
  static TemplateRegistry r = [] {
    TemplateRegistry t;
    t.load(builtin_adjoint_source(), "adjoint");
    return t;
  }();
  return r;
}

TemplateRegistry& default_tangents() {
  static TemplateRegistry r = [] {
    TemplateRegistry t;
    t.load(builtin_tangent_source(), "tangent");
    return t;
  }();
  return r;
}

void register_adjoint(const std::string& name, Template t, bool override_existing) {
  t.primitive = name;
  default_adjoints().register_template(std::move(t), override_existing);
}

Expr substitute(const Expr& e, const std::map<std::string, Expr>& bindings,
                const std::map<std::string, Expr>& grads) {
  return std::visit(
      overloaded{
          [&](const Name& n) -> Expr {
            auto it = bindings.find(n.id);
            return it == bindings.end() ? e : it->second;
          },
          [&](const Index& i) -> Expr {
            const auto* base = i.base->get_if<Name>();
            const auto* p = i.index->get_if<Name>();
            if (base && base->id == "d" && p) {
              auto g = grads.find(p->id);
              if (g == grads.end()) throw TransformError(fmt::format("unbound placeholder d[{}]", p->id));
              return g->second;
            }
            return index(substitute(*i.base, bindings, grads), substitute(*i.index, bindings, grads));
          },
          [&](const BinOp& b) -> Expr {
            return binop(b.op, substitute(*b.lhs, bindings, grads), substitute(*b.rhs, bindings, grads));
          },
          [&](const Neg& n) -> Expr { return neg(substitute(*n.operand, bindings, grads)); },
          [&](const Call& c) -> Expr {
            std::vector<Expr> args;
            for (const auto& a : c.args) args.push_back(substitute(a, bindings, grads));
            return call(c.callee, std::move(args));
          },
          [&](const auto&) -> Expr { return e; },
      },
      e.node);
}

std::string grad_target(const Stmt& s) {
  if (const auto* a = s.get_if<IndexAssign>())
    if (const auto* p = a->index.get_if<Name>()) return p->id;
  return {};
}

Block expand_template(const Template& t, const std::map<std::string, Expr>& bindings,
                      const std::map<std::string, std::string>& gradnames) {
  for (const auto& p : t.params)
    if (!bindings.count(p)) throw TransformError(fmt::format("template for '{}': unbound placeholder '{}'", t.primitive, p));
  std::map<std::string, Expr> grads;
  for (const auto& [p, g] : gradnames) grads.emplace(p, name(g));
  Block out;
  for (const auto& s : t.body) {
    if (const auto* a = s.get_if<IndexAssign>()) {
      const std::string& p = a->index.as<Name>().id;
      auto g = gradnames.find(p);
      if (g == gradnames.end()) throw TransformError(fmt::format("unbound placeholder d[{}]", p));
      out.push_back(assign(g->second, substitute(a->value, bindings, grads)));
    } else if (const auto* a = s.get_if<Assign>()) {
      auto it = bindings.find(a->target);
      std::string target = it != bindings.end() && it->second.is<Name>() ? it->second.as<Name>().id : a->target;
      out.push_back(assign(target, substitute(a->value, bindings, grads)));
    } else {
      throw TransformError(fmt::format("template for '{}': only assignments are allowed", t.primitive));
    }
  }
  return out;
}

}  // namespace gradc::ad
