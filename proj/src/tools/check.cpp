#include <chrono>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "gradc/interpreter.hpp"
#include "gradc/tools.hpp"
#include "gradc/validate.hpp"

namespace gradc::tools {

using rt::Value;

bool CheckReport::pass() const {
  for (const auto& p : params)
    if (!p.pass) return false;
  return true;
}

std::string CheckReport::str() const {
  std::string out;
  for (const auto& p : params)
    out += fmt::format("param {} ({}): {} elements, max abs err {:.3e}, max rel err {:.3e}  {}\n", p.index, p.name,
                       p.elements, p.max_abs_err, p.max_rel_err, p.pass ? "PASS" : "FAIL");
  out += fmt::format("{} ({:.3f} s)\n", pass() ? "PASS" : "FAIL", seconds);
  return out;
}

std::vector<std::vector<double>> eval_gradient(const ad::Derivative& d, const std::vector<Value>& args,
                                               const std::vector<int>& wrt) {
  std::ostringstream sink;
  rt::EvalOptions eo;
  eo.out = &sink;
  const Value r = rt::eval_program(d.program, d.entry, args, eo);
  std::vector<std::vector<double>> out;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    const Value& arg = args.at(static_cast<std::size_t>(wrt[k]));
    const std::size_t n = arg.is_number() ? 1 : flatten(arg).size();
    const Value& g = wrt.size() == 1 ? r : r.as_tuple().at(k);
    std::vector<double> v = flatten(g, n);
    if (v.size() != n)
      throw Error(fmt::format("gradient for parameter {} has {} elements, expected {}", wrt[k], v.size(), n));
    out.push_back(std::move(v));
  }
  return out;
}

namespace {

double scalar_output(const lang::Program& p, const std::string& entry, const std::vector<Value>& args) {
  std::ostringstream sink;
  rt::EvalOptions eo;
  eo.out = &sink;
  const Value r = rt::eval_program(p, entry, args, eo);
  if (!r.is_number()) throw Error(fmt::format("{}() must return a scalar for a gradient check, got {}", entry,
                                              r.kind_name()));
  const double v = r.as_float();
  if (!std::isfinite(v)) throw Error(fmt::format("{}() returned a non-finite value", entry));
  return v;
}

}  // namespace

CheckReport check_gradient(const lang::Program& p, const std::string& entry, const std::vector<int>& wrt,
                           const std::vector<Value>& args_in, const CheckOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  auto diags = lang::validate(p, entry, wrt);
  if (lang::has_errors(diags)) {
    std::string msg = fmt::format("'{}' failed validation:", entry);
    for (const auto& d : diags) msg += "\n  " + d.str();
    throw Error(msg);
  }
  std::vector<Value> args = args_in;
  for (int i : wrt) {
    Value& a = args.at(static_cast<std::size_t>(i));
    if (a.is_int()) a = Value::flt(a.as_float());
  }

  const ad::Derivative d = ad::grad(p, entry, wrt, 1, opts.grad);
  const auto grads = eval_gradient(d, args, wrt);
  const lang::FunctionDef& f = *p.find(entry);

  CheckReport report;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    const std::size_t idx = static_cast<std::size_t>(wrt[k]);
    ParamReport pr;
    pr.index = wrt[k];
    pr.name = f.params.at(idx).name;
    const std::vector<double> x = flatten(args[idx]);
    pr.elements = x.size();
    for (std::size_t e = 0; e < x.size(); ++e) {
      std::vector<Value> hi = args, lo = args;
      hi[idx] = with_element(args[idx], e, x[e] + opts.eps);
      lo[idx] = with_element(args[idx], e, x[e] - opts.eps);
      const double fd = (scalar_output(p, entry, hi) - scalar_output(p, entry, lo)) / (2 * opts.eps);
      const double g = grads[k][e];
      if (!std::isfinite(g)) throw Error(fmt::format("non-finite gradient for {}[{}]", pr.name, e));
      const double err = std::abs(g - fd);
      pr.max_abs_err = std::max(pr.max_abs_err, err);
      if (fd != 0) pr.max_rel_err = std::max(pr.max_rel_err, err / std::abs(fd));
      if (err > opts.atol + opts.rtol * std::abs(fd)) pr.pass = false;
    }
    report.params.push_back(pr);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace gradc::tools
