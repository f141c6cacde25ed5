#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gradc/emit.hpp"
#include "gradc/interpreter.hpp"
#include "gradc/opt.hpp"
#include "gradc/parser.hpp"
#include "gradc/tools.hpp"
#include "gradc/validate.hpp"

namespace gradc::tools {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<int> parse_wrt(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

lang::Program load_program(const std::string& path) { return lang::parse(read_file(path)); }

std::vector<CorpusCase> load_manifest(const std::string& dir) {
  std::istringstream in(read_file(dir + "/manifest"));
  std::vector<CorpusCase> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    CorpusCase c;
    std::string wrt;
    if (!(ls >> c.name) || c.name[0] == '#') continue;
    if (!(ls >> c.file >> c.entry >> wrt >> c.inputs))
      throw Error(fmt::format("manifest line {}: expected NAME FILE ENTRY WRT INPUTS", lineno));
    c.wrt = parse_wrt(wrt);
    std::string opt;
    while (ls >> opt) {
      const auto eq = opt.find('=');
      if (eq == std::string::npos) throw Error(fmt::format("manifest line {}: bad option '{}'", lineno, opt));
      const std::string key = opt.substr(0, eq), val = opt.substr(eq + 1);
      if (key == "golden")
        c.golden = val;
      else if (key == "rtol")
        c.tol.rtol = std::stod(val);
      else if (key == "atol")
        c.tol.atol = std::stod(val);
      else if (key == "eps")
        c.tol.eps = std::stod(val);
      else
        throw Error(fmt::format("manifest line {}: unknown option '{}'", lineno, key));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CaseResult> run_corpus(const std::string& dir, const CorpusOptions& opts) {
  std::vector<CaseResult> results;
  std::mt19937_64 rng(opts.seed);
  for (const auto& c : load_manifest(dir)) {
    CaseResult r;
    r.name = c.name;
    auto fail = [&](std::string msg) {
      r.pass = false;
      r.failures.push_back(std::move(msg));
    };
    try {
      const lang::Program p = load_program(dir + "/" + c.file);
      const auto diags = lang::validate(p, c.entry, c.wrt);
      for (const auto& d : diags)
        if (d.severity == lang::Severity::Error) fail("validate: " + d.str());
      if (!r.pass) {
        results.push_back(r);
        continue;
      }

      const ad::Derivative opt = ad::grad(p, c.entry, c.wrt);
      ad::GradOptions raw_opts;
      raw_opts.optimize = false;
      const ad::Derivative raw = ad::grad(p, c.entry, c.wrt, 1, raw_opts);

      if (c.golden && lang::emit_source(opt.program) != read_file(dir + "/" + *c.golden))
        fail(fmt::format("derivative differs from {}", *c.golden));

      const lang::Program p_opt = opt::optimize(p);
      std::ostringstream sink;
      rt::EvalOptions eo;
      eo.out = &sink;
      std::vector<rt::Value> first;
      for (int k = 0; k < opts.random_inputs; ++k) {
        std::vector<rt::Value> args = generate_args(c.inputs, rng);
        if (k == 0) first = args;
        rt::Tape t1, t2;
        const rt::Value a = rt::eval_program(opt.program, opt.entry, args, t1, eo);
        const rt::Value b = rt::eval_program(raw.program, raw.entry, args, t2, eo);
        if (!t1.empty() || !t2.empty()) fail(fmt::format("input {}: tape not empty after the derivative", k));
        if (!rt::identical(a, b))
          fail(fmt::format("input {}: optimized derivative {} != unoptimized {}", k, a.str(), b.str()));
        const rt::Value pa = rt::eval_program(p_opt, c.entry, args, eo);
        const rt::Value pb = rt::eval_program(p, c.entry, args, eo);
        if (!rt::identical(pa, pb))
          fail(fmt::format("input {}: optimized program {} != original {}", k, pa.str(), pb.str()));
      }

      const CheckReport rep = check_gradient(p, c.entry, c.wrt, first, c.tol);
      if (!rep.pass()) fail("gradient check:\n" + rep.str());
    } catch (const std::exception& e) {
      fail(e.what());
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace gradc::tools
