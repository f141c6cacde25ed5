#include <fmt/format.h>

#include "ad_internal.hpp"
#include "gradc/opt.hpp"

namespace gradc::ad {

using namespace lang;

namespace {

Derivative optimized(Derivative d, const GradOptions& opts) {
  if (!opts.optimize) return d;
  opt::OptOptions o;
  o.unsafe_algebra = opts.unsafe_algebra;
  d.program = opt::optimize(d.program, o);
  return d;
}

}  // namespace

Derivative grad(const Program& p, const std::string& entry, const std::vector<int>& wrt, int order,
                const GradOptions& opts) {
  if (order < 1) throw TransformError(fmt::format("derivative order must be at least 1, got {}", order));
  const TemplateRegistry& reg = opts.adjoints ? *opts.adjoints : default_adjoints();
  Derivative d = optimized(transform_reverse(p, entry, wrt, reg), opts);
  for (int k = 2; k <= order; ++k) d = optimized(transform_reverse(d.program, d.entry, wrt, reg), opts);
  return d;
}

Derivative make_hvp(const Program& p, const std::string& entry, const std::vector<int>& wrt,
                    const GradOptions& opts) {
  Derivative rev = grad(p, entry, wrt, 1, opts);
  Derivative fwd = transform_forward(rev.program, rev.entry, wrt);

  const FunctionDef& orig = *p.find(entry);
  const FunctionDef& inner = *fwd.program.find(fwd.entry);
  NameGen names(function_names(fwd.program));
  for (const auto& fn : fwd.program.functions) names.reserve(fn.name);

  FunctionDef h;
  h.name = names.fresh(entry + "_hvp");
  h.line = orig.line;
  h.params = orig.params;
  NameGen locals(reserved_names(fwd.program, orig));
  locals.reserve(h.name);
  std::vector<Expr> args;
  for (const auto& prm : orig.params) args.push_back(name(prm.name));
  const std::size_t seeds = inner.params.size() - orig.params.size() - wrt.size();
  for (std::size_t k = 0; k < seeds; ++k) args.push_back(float_lit(1.0));
  for (int i : wrt) {
    const std::string v = locals.fresh("v" + orig.params.at(static_cast<std::size_t>(i)).name);
    h.params.push_back(Param{v, std::nullopt});
    args.push_back(name(v));
  }
  const std::string res = locals.fresh("_hvp");
  h.body.push_back(assign(res, call(fwd.entry, std::move(args))));
  // the gradient returns one value per wrt parameter, followed by their tangents
  const std::size_t outs = wrt.size();
  std::vector<Expr> values;
  for (std::size_t k = 0; k < outs; ++k)
    values.push_back(index(name(res), int_lit(static_cast<std::int64_t>(outs + k))));
  h.body.push_back(ret(std::move(values)));

  Derivative out;
  out.entry = h.name;
  out.program.functions.push_back(std::move(h));
  for (auto& fn : fwd.program.functions) out.program.functions.push_back(std::move(fn));
  return optimized(std::move(out), opts);
}

}  // namespace gradc::ad
