// End-to-end acceptance checks. One PASS/FAIL line per criterion; exit
// status is the number of failures. `acceptance 5 7` runs a subset.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "gradc/ad.hpp"
#include "gradc/emit.hpp"
#include "gradc/interpreter.hpp"
#include "gradc/opt.hpp"
#include "gradc/parser.hpp"
#include "gradc/tape.hpp"
#include "gradc/tools.hpp"
#include "gradc/validate.hpp"
#include "pa_oracle.hpp"

using namespace gradc;
using namespace gradc::tools;
using rt::Value;

namespace {

const std::string kDir = GRADC_CORPUS_DIR;

// tolerances
constexpr double kFdRtol = 1e-4;
constexpr double kFdAtol = 1e-6;
constexpr double kCorpusSeconds = 30.0;
constexpr double kHighWaterFactor = 3.0;
constexpr double kSlopeTol = 0.35;
constexpr int kOracleSequences = 1000;
constexpr int kOracleMaxLength = 200;
constexpr double kExact = 1e-12;
constexpr double kFwdRevRtol = 1e-10;
constexpr int kRandomInputs = 20;

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ostringstream g_sink;

Value quiet_eval(const lang::Program& p, const std::string& entry, const std::vector<Value>& args,
                 rt::Tape* tape = nullptr) {
  rt::EvalOptions eo;
  eo.out = &g_sink;
  g_sink.str("");
  if (tape) return rt::eval_program(p, entry, args, *tape, eo);
  return rt::eval_program(p, entry, args, eo);
}

std::vector<CorpusCase> corpus() { return load_manifest(kDir); }
lang::Program program_of(const CorpusCase& c) { return load_program(kDir + "/" + c.file); }

std::vector<Value> inputs(const CorpusCase& c, std::mt19937_64& rng) { return generate_args(c.inputs, rng); }

// Same kind and shape as v, zero except element k set to 1.
Value basis(const Value& v, std::size_t k) {
  if (v.is_number()) return Value::flt(1.0);
  const rt::Dense d = rt::to_dense(v);
  std::vector<double> data(d.size(), 0.0);
  data.at(k) = 1.0;
  if (v.is_parray()) return Value::parray(pa::pa_new(pa::Array{d.shape(), std::move(data)}));
  return Value::dense(rt::Dense(d.shape(), data));
}

// a + e * v elementwise, keeping a's kind.
Value axpy(const Value& a, double e, const Value& v) {
  if (a.is_number()) return Value::flt(a.as_float() + e * v.as_float());
  const rt::Dense d = rt::to_dense(a);
  std::vector<double> x = d.to_vector();
  const std::vector<double> y = flatten(v, x.size());
  for (std::size_t k = 0; k < x.size(); ++k) x[k] += e * y[k];
  return Value::dense(rt::Dense(d.shape(), x));
}

double loglog_slope(const std::vector<double>& n, const std::vector<double>& t) {
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < n.size(); ++k) {
    mx += std::log(n[k]);
    my += std::log(t[k]);
  }
  mx /= static_cast<double>(n.size());
  my /= static_cast<double>(n.size());
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < n.size(); ++k) {
    sxy += (std::log(n[k]) - mx) * (std::log(t[k]) - my);
    sxx += (std::log(n[k]) - mx) * (std::log(n[k]) - mx);
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  const auto cases = corpus();
  std::set<std::string> names;
  for (const auto& c : cases) names.insert(c.name);
  if (cases.size() < 12) o.fail(fmt::format("only {} corpus programs", cases.size()));
  for (const char* need : {"mlp8", "mlp64", "lattice", "power", "branch"})
    if (!names.count(need)) o.fail(fmt::format("corpus lacks {}", need));

  CheckOptions tol;
  tol.rtol = kFdRtol;
  tol.atol = kFdAtol;
  std::mt19937_64 rng(1);
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& c : cases) {
    const CheckReport r = check_gradient(program_of(c), c.entry, c.wrt, inputs(c, rng), tol);
    if (!r.pass()) o.fail(c.name + " mismatches finite differences");
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= kCorpusSeconds) o.fail(fmt::format("took {:.1f} s", secs));
  if (o.pass) o.detail = fmt::format("{} programs in {:.2f} s", cases.size(), secs);
  return o;
}

Outcome golden_source() {
  Outcome o;
  // reference layout of the square derivative, with our seed name substituted
  const std::string square_ref =
      "def dfdx(x, b_return=1.0):\n"
      "    # Grad of: _return = x * x\n"
      "    _bx = unbroadcast(b_return * x, x)\n"
      "    _bx2 = unbroadcast(b_return * x, x)\n"
      "    bx = _bx\n"
      "    bx = add_grad(bx, _bx2)\n"
      "    return bx\n";
  for (const char* name : {"square", "identity"}) {
    const auto cases = corpus();
    const CorpusCase* c = nullptr;
    for (const auto& k : cases)
      if (k.name == name) c = &k;
    if (!c || !c->golden) {
      o.fail(fmt::format("{} has no golden file", name));
      continue;
    }
    const auto p = program_of(*c);
    const std::string a = lang::emit_source(ad::grad(p, c->entry, c->wrt).program);
    const std::string b = lang::emit_source(ad::grad(program_of(*c), c->entry, c->wrt).program);
    if (a != b) o.fail(fmt::format("{} not byte-stable", name));
    if (a != read_file(kDir + "/" + *c->golden)) o.fail(fmt::format("{} differs from golden", name));
    if (std::string(name) == "square" && a != square_ref) o.fail("square layout differs from reference");
    if (std::string(name) == "identity") {
      for (const char* banned : {"push(", "pop(", "init_grad("})
        if (a.find(banned) != std::string::npos) o.fail(fmt::format("identity contains {}", banned));
      if (a.find("# Grad of: y = x\n") == std::string::npos || a.find("copy(by)") == std::string::npos)
        o.fail("identity lacks the copy adjoint");
    }
  }
  if (o.pass) o.detail = "square and identity match golden files";
  return o;
}

Outcome optimizer_soundness() {
  Outcome o;
  std::mt19937_64 rng(2);
  std::size_t runs = 0;
  for (const auto& c : corpus()) {
    const auto p = program_of(c);
    const ad::Derivative opt = ad::grad(p, c.entry, c.wrt);
    ad::GradOptions raw_opts;
    raw_opts.optimize = false;
    const ad::Derivative raw = ad::grad(p, c.entry, c.wrt, 1, raw_opts);
    for (int k = 0; k < kRandomInputs; ++k) {
      const auto args = inputs(c, rng);
      if (!rt::identical(quiet_eval(opt.program, opt.entry, args), quiet_eval(raw.program, raw.entry, args)))
        o.fail(fmt::format("{} input {}", c.name, k));
      ++runs;
    }
  }
  if (o.pass) o.detail = fmt::format("{} bitwise-equal evaluations", runs);
  return o;
}

Outcome lazy_gradients() {
  Outcome o;
  const auto p = lang::parse("def big(w, s):\n    a = sum(w) * s\n    return a\n");
  const std::size_t n = 1'000'000;
  const double param_bytes = static_cast<double>(n * sizeof(double));
  for (bool optimize : {true, false}) {
    ad::GradOptions g;
    g.optimize = optimize;
    const ad::Derivative d = ad::grad(p, "big", {0, 1}, 1, g);
    const Value w = Value::dense(rt::Dense({n}, std::vector<double>(n, 0.5)));
    rt::alloc_stats().reset();
    const Value r = quiet_eval(d.program, d.entry, {w, Value::flt(3.0)});
    const auto fills = rt::alloc_stats().zero_fills.load();
    const auto high = static_cast<double>(rt::alloc_stats().high_water.load());
    const std::string tag = optimize ? "optimized" : "raw";
    if (fills != 0) o.fail(fmt::format("{}: {} zero fills", tag, fills));
    if (high >= kHighWaterFactor * param_bytes)
      o.fail(fmt::format("{}: high water {:.2f}x parameter", tag, high / param_bytes));
    const auto gw = flatten(r.as_tuple().at(0));
    if (gw.size() != n || gw.front() != 3.0 || gw.back() != 3.0) o.fail(tag + ": wrong gradient");
    if (o.pass) o.detail = fmt::format("0 zero fills, high water {:.2f}x parameter", high / param_bytes);
  }
  return o;
}

Outcome persistent_scaling() {
  Outcome o;
  const std::vector<int> ns{25, 50, 100, 200};
  std::map<ArrayMode, double> slope;
  for (ArrayMode mode : {ArrayMode::Immutable, ArrayMode::SubarrayCopy, ArrayMode::Persistent}) {
    std::vector<double> x, t;
    for (int n : ns) {
      BenchConfig cfg;
      cfg.n = n;
      cfg.m = 15;
      cfg.d = 2000;
      cfg.mode = mode;
      cfg.repeats = 3;
      x.push_back(n);
      t.push_back(bench_lattice(cfg).seconds);
    }
    slope[mode] = loglog_slope(x, t);
  }
  const double pers = slope[ArrayMode::Persistent], imm = slope[ArrayMode::Immutable],
               sub = slope[ArrayMode::SubarrayCopy];
  o.detail = fmt::format("slopes persistent {:.2f}, subarray-copy {:.2f}, immutable {:.2f}", pers, sub, imm);
  const std::string d = o.detail;
  if (std::abs(pers - 1.0) > kSlopeTol) o.fail(d);
  else if (std::abs(imm - 2.0) > kSlopeTol) o.fail(d);
  else if (!(pers < sub && sub < imm)) o.fail(d);
  return o;
}

Outcome oracle_equivalence() {
  Outcome o;
  std::mt19937 rng(6);
  for (int k = 0; k < kOracleSequences; ++k) {
    const int len = std::uniform_int_distribution<int>(1, kOracleMaxLength)(rng);
    const std::string err = pa::run_oracle_sequence(static_cast<unsigned>(1000 + k), len, true);
    if (!err.empty()) {
      o.fail(err);
      break;
    }
  }
  if (o.pass) o.detail = fmt::format("{} sequences", kOracleSequences);
  return o;
}

Outcome higher_order() {
  Outcome o;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 3.0);

  const auto sq = lang::parse("def f(x):\n    return x * x\n");
  const ad::Derivative d2 = ad::grad(sq, "f", {0}, 2);
  for (int k = 0; k < 10; ++k) {
    const double x = normal(rng);
    const double got = quiet_eval(d2.program, d2.entry, {Value::flt(x)}).as_float();
    if (std::abs(got - 2.0) > kExact) o.fail(fmt::format("d2(x*x) at {} is {}", x, got));
  }

  const ad::Derivative h = ad::make_hvp(lang::parse("def f(x):\n    return sum(x * x)\n"), "f", {0});
  std::mt19937_64 g(8);
  const auto xv = generate_args("normal(5,3);normal(5,3)", g);
  const auto hv = flatten(quiet_eval(h.program, h.entry, xv));
  const auto v = flatten(xv[1]);
  for (std::size_t k = 0; k < v.size(); ++k)
    if (std::abs(hv.at(k) - 2.0 * v[k]) > kExact) o.fail("hvp(sum(x*x)) != 2v");

  // MLP: HVP against central differences of the gradient along v
  CorpusCase mlp;
  for (const auto& c : corpus())
    if (c.name == "mlp8") mlp = c;
  const auto p = program_of(mlp);
  std::mt19937_64 r(9);
  const auto args = inputs(mlp, r);
  std::vector<Value> dirs;
  for (int i : mlp.wrt) {
    const Value& a = args[static_cast<std::size_t>(i)];
    std::vector<double> dv(flatten(a).size());
    for (auto& e : dv) e = std::normal_distribution<double>(0.0, 1.0)(r);
    dirs.push_back(a.is_number() ? Value::flt(dv[0]) : Value::dense(rt::Dense(rt::to_dense(a).shape(), dv)));
  }
  const ad::Derivative hm = ad::make_hvp(p, mlp.entry, mlp.wrt);
  std::vector<Value> hargs = args;
  hargs.insert(hargs.end(), dirs.begin(), dirs.end());
  const Value hvp = quiet_eval(hm.program, hm.entry, hargs);
  const ad::Derivative gm = ad::grad(p, mlp.entry, mlp.wrt);
  const double eps = 1e-5;
  auto shifted = [&](double e) {
    std::vector<Value> a = args;
    for (std::size_t j = 0; j < mlp.wrt.size(); ++j) {
      const auto i = static_cast<std::size_t>(mlp.wrt[j]);
      a[i] = axpy(a[i], e, dirs[j]);
    }
    return eval_gradient(gm, a, mlp.wrt);
  };
  const auto gp = shifted(eps), gmn = shifted(-eps);
  double worst = 0;
  for (std::size_t j = 0; j < mlp.wrt.size(); ++j) {
    const auto got = flatten(hvp.as_tuple().at(j), gp[j].size());
    for (std::size_t k = 0; k < got.size(); ++k) {
      const double fd = (gp[j][k] - gmn[j][k]) / (2 * eps);
      const double err = std::abs(got[k] - fd);
      worst = std::max(worst, err / (kFdAtol + kFdRtol * std::abs(fd)));
      if (err > kFdAtol + kFdRtol * std::abs(fd)) {
        o.fail(fmt::format("mlp hvp param {} elem {}: {} vs fd {}", mlp.wrt[j], k, got[k], fd));
        j = mlp.wrt.size() - 1;
        break;
      }
    }
  }
  if (o.pass) o.detail = fmt::format("mlp hvp worst error {:.3f} of tolerance", worst);
  return o;
}

Outcome forward_reverse() {
  Outcome o;
  std::mt19937_64 rng(10);
  std::size_t dirs = 0;
  double worst = 0;
  for (const auto& c : corpus()) {
    const auto p = program_of(c);
    const auto args = inputs(c, rng);
    const auto rev = eval_gradient(ad::grad(p, c.entry, c.wrt), args, c.wrt);
    const ad::Derivative fwd = ad::transform_forward(p, c.entry, c.wrt);
    std::vector<Value> zeros;
    for (int i : c.wrt) {
      const Value& a = args[static_cast<std::size_t>(i)];
      zeros.push_back(a.is_number() ? Value::flt(0.0) : axpy(a, -1.0, a));
    }
    for (std::size_t j = 0; j < c.wrt.size() && o.pass; ++j) {
      const Value& a = args[static_cast<std::size_t>(c.wrt[j])];
      const std::size_t n = a.is_number() ? 1 : flatten(a).size();
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<Value> fa = args;
        for (std::size_t i = 0; i < c.wrt.size(); ++i) fa.push_back(i == j ? basis(a, k) : zeros[i]);
        const double t = quiet_eval(fwd.program, fwd.entry, fa).as_tuple().at(1).as_float();
        const double want = rev[j][k];
        const double err = std::abs(t - want) / std::max(std::abs(want), 1.0);
        worst = std::max(worst, err);
        ++dirs;
        if (err > kFwdRevRtol) {
          o.fail(fmt::format("{} param {} elem {}: forward {} reverse {}", c.name, c.wrt[j], k, t, want));
          break;
        }
      }
    }
  }
  if (o.pass) o.detail = fmt::format("{} directions, worst relative error {:.1e}", dirs, worst);
  return o;
}

Outcome tape_discipline() {
  Outcome o;
  std::mt19937_64 rng(11);
  for (const auto& c : corpus()) {
    const auto p = program_of(c);
    ad::GradOptions raw;
    raw.optimize = false;
    for (const ad::Derivative& d : {ad::grad(p, c.entry, c.wrt), ad::grad(p, c.entry, c.wrt, 1, raw)}) {
      rt::Tape tape;
      quiet_eval(d.program, d.entry, inputs(c, rng), &tape);
      if (!tape.empty()) o.fail(fmt::format("{}: {} entries left on the tape", c.name, tape.size()));
    }
  }

  // rotate the pop labels of a raw derivative by one
  const auto src = lang::parse("def f(x):\n    a = x * x\n    b = a * x\n    c = b * a\n    return c\n");
  ad::GradOptions raw;
  raw.optimize = false;
  ad::Derivative d = ad::grad(src, "f", {0}, 1, raw);
  std::vector<lang::Expr*> pops;
  lang::for_each_stmt(d.program.find(d.entry)->body, [&](lang::Stmt& s) {
    if (auto* a = s.get_if<lang::Assign>(); a && a->value.is<lang::Call>() && a->value.as<lang::Call>().callee == "pop")
      pops.push_back(&a->value.as<lang::Call>().args.at(0));
  });
  if (pops.size() < 2) {
    o.fail("fault program has fewer than two pops");
    return o;
  }
  const lang::Expr first = *pops.front();
  for (std::size_t k = 0; k + 1 < pops.size(); ++k) *pops[k] = *pops[k + 1];
  *pops.back() = first;
  try {
    quiet_eval(d.program, d.entry, {Value::flt(1.5)});
    o.fail("shuffled labels were accepted");
  } catch (const rt::TapeError& e) {
    if (std::string(e.what()).find("label mismatch") == std::string::npos) o.fail(e.what());
  }
  if (o.pass) o.detail = "corpus tapes empty, shuffled labels rejected";
  return o;
}

Outcome validator() {
  Outcome o;
  const std::vector<std::pair<std::string, std::string>> cases{
      {"R1", "def f(x):\n    x[0] = 1.0\n    y = x * 2.0\n    return y\n"},
      {"R2", "def f(x):\n    return x * w\n"},
      {"R3", "def f(x):\n    return foo(x)\n"},
      {"R4", "def f(x):\n    while x < 1.0:\n        break\n    return x\n"},
  };
  for (const auto& [rule, src] : cases) {
    const auto diags = lang::validate(lang::parse(src), "f", {0});
    bool hit = false;
    for (const auto& d : diags) hit = hit || (d.severity == lang::Severity::Error && d.rule == rule);
    if (!hit) o.fail(rule + " not reported");
    try {
      ad::grad(lang::parse(src), "f", {0});
      o.fail(rule + " program was differentiated");
    } catch (const Error&) {
    }
  }
  if (o.pass) o.detail = "R1 R2 R3 R4 rejected";
  return o;
}

Outcome backward_inlining() {
  Outcome o;
  const auto p = lang::parse(
      "def f(x):\n"
      "    with insert_grad_of(x) as dx:\n"
      "        if dx > 10:\n"
      "            print('Clipping', dx)\n"
      "            dx = 10\n"
      "    return x * x\n");
  const ad::Derivative d = ad::grad(p, "f", {0});
  const std::string src = lang::emit_source(d.program);
  if (src.find("    if bx > 10:\n        print('Clipping', bx)\n        bx = 10\n    return bx\n") == std::string::npos)
    o.fail("inserted statements missing from the derivative");
  std::ostringstream out;
  rt::EvalOptions eo;
  eo.out = &out;
  const double at3 = rt::eval_program(d.program, d.entry, {Value::flt(3.0)}, eo).as_float();
  const double at8 = rt::eval_program(d.program, d.entry, {Value::flt(8.0)}, eo).as_float();
  if (at3 != 6.0) o.fail(fmt::format("gradient at 3 is {}", at3));
  if (at8 != 10.0) o.fail(fmt::format("gradient at 8 is {}", at8));
  if (out.str() != "Clipping 16.0\n") o.fail(fmt::format("printed '{}'", out.str()));
  if (o.pass) o.detail = "6 at x=3, 10 at x=8";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"golden derivative source", golden_source},
      {"optimizer soundness", optimizer_soundness},
      {"lazy gradients", lazy_gradients},
      {"persistent array scaling", persistent_scaling},
      {"persistent array oracle", oracle_equivalence},
      {"higher order", higher_order},
      {"forward/reverse consistency", forward_reverse},
      {"tape discipline", tape_discipline},
      {"validator", validator},
      {"backward pass inlining", backward_inlining},
  };
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));

  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      r = criteria[k].second();
    } catch (const std::exception& e) {
      r.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!r.pass) ++failures;
    std::cout << fmt::format("criterion {:2}: {}  {} ({:.1f} s){}{}\n", id, r.pass ? "PASS" : "FAIL",
                             criteria[k].first, secs, r.detail.empty() ? "" : ": ", r.detail)
              << std::flush;
  }
  return failures;
}
