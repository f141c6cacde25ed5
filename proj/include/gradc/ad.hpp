#pragma once

#include <map>
#include <memory>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "gradc/ast.hpp"
#include "gradc/util.hpp"

namespace gradc::ad {

class TransformError : public Error {
 public:
  using Error::Error;
};

/// Raised when an active primitive has no template in the registry.
class MissingTemplate : public TransformError {
 public:
  explicit MissingTemplate(const std::string& primitive, const std::string& kind = "adjoint");
  const std::string& primitive() const { return primitive_; }

 private:
  std::string primitive_;
};

// ---------------------------------------------------------------------------
// Names

class NameGen {
 public:
  NameGen() = default;
  explicit NameGen(std::set<std::string> taken) : taken_(std::move(taken)) {}

  /// `base` if unused, otherwise base2, base3, ...
  std::string fresh(const std::string& base);
  void reserve(const std::string& name) { taken_.insert(name); }
  bool taken(const std::string& name) const { return taken_.count(name) > 0; }

 private:
  std::set<std::string> taken_;
};

/// Every identifier that generated names must avoid: the function's own
/// identifiers, all function names and all builtins.
std::set<std::string> reserved_names(const lang::Program& p, const lang::FunctionDef& f);

/// Administrative normal form: every assignment applies at most one
/// primitive to atoms; index assignments become setitem calls; the return
/// values are names.
lang::FunctionDef to_anf(const lang::FunctionDef& f, NameGen& names);

// ---------------------------------------------------------------------------
// Activity

struct ActivityInfo {
  std::set<std::string> varied;  // reachable from a wrt parameter
  std::set<std::string> useful;  // reaches a returned value
  std::set<std::string> active;

  bool is_active(const std::string& v) const { return active.count(v) > 0; }
};

ActivityInfo analyze_activity(const lang::Program& p, const lang::FunctionDef& f, const std::vector<int>& wrt);
ActivityInfo analyze_activity(const lang::Program& p, const std::string& entry, const std::vector<int>& wrt);

// ---------------------------------------------------------------------------
// Templates

/// params[0] names the result (z); the rest bind the call arguments in order.
/// In the body `d[p]` is the gradient (adjoint templates) or tangent
/// (tangent templates) of placeholder p.
struct Template {
  std::string primitive;
  std::vector<std::string> params;
  lang::Block body;

  std::size_t arity() const { return params.empty() ? 0 : params.size() - 1; }
};

class TemplateRegistry {
 public:
  TemplateRegistry() = default;
  TemplateRegistry(const TemplateRegistry& o);
  TemplateRegistry& operator=(const TemplateRegistry& o);

  void register_template(Template t, bool override_existing = false);
  /// Parse `@<decorator>(name)` definitions; every decorator must equal
  /// `kind` ("adjoint" or "tangent").
  void load(std::string_view source, std::string_view kind, bool override_existing = false);

  /// Template for `name` applied to `arity` arguments, or null.
  std::shared_ptr<const Template> find(const std::string& name, std::size_t arity) const;
  bool has(const std::string& name) const;
  std::vector<std::string> primitives() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::pair<std::string, std::size_t>, std::shared_ptr<const Template>> table_;
};

/// Template source shipped with the compiler.
std::string_view builtin_adjoint_source();
std::string_view builtin_tangent_source();

/// Shared default registries, built on first use.
TemplateRegistry& default_adjoints();
TemplateRegistry& default_tangents();

void register_adjoint(const std::string& name, Template t, bool override_existing = false);

/// Substitute a template: placeholders are replaced by the bound
/// expressions and every d[p] by `grad_of(p's binding)`.
lang::Block expand_template(const Template& t, const std::map<std::string, lang::Expr>& bindings,
                            const std::map<std::string, std::string>& gradnames);

// ---------------------------------------------------------------------------
// Transforms

struct Derivative {
  lang::Program program;
  std::string entry;  // name of the generated function
};

/// `d<entry>d<param>`: primal with tape pushes followed by the adjoint.
Derivative transform_reverse(const lang::Program& p, const std::string& entry, const std::vector<int>& wrt,
                             const TemplateRegistry& templates = default_adjoints());

/// `d<entry>_fwd`: returns (primal, tangent) for the given tangent seeds.
Derivative transform_forward(const lang::Program& p, const std::string& entry, const std::vector<int>& wrt,
                             const TemplateRegistry& templates = default_tangents());

struct GradOptions {
  bool optimize = true;
  bool unsafe_algebra = true;
  /// Adjoint templates; the default registry when null.
  const TemplateRegistry* adjoints = nullptr;
};

/// Reverse-mode derivative of the given order. Order k > 1 differentiates
/// the order k-1 derivative again with respect to the same parameters.
Derivative grad(const lang::Program& p, const std::string& entry, const std::vector<int>& wrt, int order = 1,
                const GradOptions& opts = {});

/// Forward-over-reverse Hessian-vector product `<entry>_hvp(params...,
/// v_params...)`.
Derivative make_hvp(const lang::Program& p, const std::string& entry, const std::vector<int>& wrt,
                    const GradOptions& opts = {});

}  // namespace gradc::ad
