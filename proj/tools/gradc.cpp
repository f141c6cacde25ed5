#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gradc/ad.hpp"
#include "gradc/emit.hpp"
#include "gradc/interpreter.hpp"
#include "gradc/opt.hpp"
#include "gradc/tools.hpp"
#include "gradc/validate.hpp"

using namespace gradc;

namespace {

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || item.empty()) throw CLI::ValidationError(fmt::format("'{}' is not an integer list", s));
    out.push_back(v);
  }
  return out;
}

void print_diagnostics(const std::vector<lang::Diagnostic>& diags) {
  for (const auto& d : diags) std::cerr << d.str() << "\n";
}

// Exit status 1 on validation errors; warnings are printed either way.
bool validate_or_report(const lang::Program& p, const std::string& entry, const std::vector<int>& wrt) {
  const auto diags = lang::validate(p, entry, wrt);
  print_diagnostics(diags);
  return !lang::has_errors(diags);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gradc: source-to-source automatic differentiation"};
  app.require_subcommand(1);

  std::string file, entry, wrt_text = "0", mode = "reverse", out_path, args_text, inputs, adjoints_file;
  int order = 1;
  bool no_optimize = false, no_unsafe = false, expect_custom = false;
  std::uint64_t seed = 1;
  tools::CheckOptions tol;

  auto* grad = app.add_subcommand("grad", "write the derivative source");
  grad->add_option("FILE", file, "source file")->required()->check(CLI::ExistingFile);
  grad->add_option("--entry", entry, "function to differentiate")->required();
  grad->add_option("--wrt", wrt_text, "comma-separated parameter indices")->capture_default_str();
  grad->add_option("--mode", mode, "reverse, forward or hvp")
      ->check(CLI::IsMember({"reverse", "forward", "hvp"}))
      ->capture_default_str();
  grad->add_option("--order", order, "derivative order (reverse mode)")->check(CLI::PositiveNumber);
  grad->add_flag("--no-optimize", no_optimize, "skip the optimizer");
  grad->add_flag("--no-unsafe-algebra", no_unsafe, "keep x*0 and x+0");
  grad->add_option("-o,--output", out_path, "output file (stdout by default)");
  grad->add_option("--adjoints", adjoints_file, "file of @adjoint templates overriding the builtin ones")
      ->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "evaluate a function on literal arguments");
  run->add_option("FILE", file, "source file")->required()->check(CLI::ExistingFile);
  run->add_option("--entry", entry, "function to call")->required();
  run->add_option("--args", args_text, "comma-separated literals, arrays as [..]");

  auto* check = app.add_subcommand("check", "compare the gradient with central differences");
  check->add_option("FILE", file, "source file")->required()->check(CLI::ExistingFile);
  check->add_option("--entry", entry, "function to check")->required();
  check->add_option("--wrt", wrt_text, "comma-separated parameter indices")->capture_default_str();
  auto* args_opt = check->add_option("--args", args_text, "literal arguments");
  check->add_option("--inputs", inputs, "random input spec, e.g. \"normal(16,8)*0.1;onehot(16,4)\"")
      ->excludes(args_opt);
  check->add_option("--seed", seed, "seed for --inputs")->capture_default_str();
  check->add_option("--eps", tol.eps, "finite-difference step")->capture_default_str();
  check->add_option("--rtol", tol.rtol, "relative tolerance")->capture_default_str();
  check->add_option("--atol", tol.atol, "absolute tolerance")->capture_default_str();
  check->add_option("--adjoints", adjoints_file, "file of @adjoint templates overriding the builtin ones")
      ->check(CLI::ExistingFile);
  check->add_flag("--expect-custom", expect_custom, "report mismatches without failing (custom adjoints)");

  auto* bench = app.add_subcommand("bench", "scaling benchmarks");
  bench->require_subcommand(1);
  auto* lattice = bench->add_subcommand("lattice", "lattice gradient, CSV on stdout");
  std::string n_text = "100", bench_mode = "persistent";
  tools::BenchConfig cfg;
  bool no_header = false;
  lattice->add_option("--n", n_text, "outer iterations (comma-separated list allowed)")->capture_default_str();
  lattice->add_option("--m", cfg.m, "inner iterations")->check(CLI::PositiveNumber)->capture_default_str();
  lattice->add_option("--d", cfg.d, "vector dimension")->check(CLI::PositiveNumber)->capture_default_str();
  lattice->add_option("--mode", bench_mode, "immutable, subarray-copy, persistent or all")
      ->check(CLI::IsMember({"immutable", "subarray-copy", "persistent", "all"}))
      ->capture_default_str();
  lattice->add_option("--repeats", cfg.repeats, "timed runs")->check(CLI::PositiveNumber)->capture_default_str();
  lattice->add_flag("--no-header", no_header, "omit the CSV header");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  ad::TemplateRegistry custom;
  try {
    if (!adjoints_file.empty()) {
      std::ifstream in(adjoints_file);
      std::stringstream ss;
      ss << in.rdbuf();
      custom = ad::default_adjoints();
      custom.load(ss.str(), "adjoint", true);
      tol.grad.adjoints = &custom;
    }
    if (*grad) {
      const std::vector<int> wrt = split_ints(wrt_text);
      const lang::Program p = tools::load_program(file);
      if (!validate_or_report(p, entry, wrt)) return 1;
      ad::GradOptions go = tol.grad;
      go.optimize = !no_optimize;
      go.unsafe_algebra = !no_unsafe;
      ad::Derivative d;
      if (mode == "reverse") {
        d = ad::grad(p, entry, wrt, order, go);
      } else if (order != 1) {
        std::cerr << "--order applies to reverse mode only\n";
        return 2;
      } else if (mode == "forward") {
        d = ad::transform_forward(p, entry, wrt);
        if (go.optimize) {
          opt::OptOptions oo;
          oo.unsafe_algebra = go.unsafe_algebra;
          d.program = opt::optimize(d.program, oo);
        }
      } else {
        d = ad::make_hvp(p, entry, wrt, go);
      }
      const std::string src = lang::emit_source(d.program);
      if (out_path.empty()) {
        std::cout << src;
      } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!(out << src)) throw Error(fmt::format("cannot write '{}'", out_path));
      }
      return 0;
    }
    if (*run) {
      const lang::Program p = tools::load_program(file);
      if (!p.find(entry)) throw Error(fmt::format("no function named '{}'", entry));
      std::cout << rt::eval_program(p, entry, tools::parse_args(args_text)).str() << "\n";
      return 0;
    }
    if (*check) {
      const std::vector<int> wrt = split_ints(wrt_text);
      const lang::Program p = tools::load_program(file);
      if (!validate_or_report(p, entry, wrt)) return 1;
      std::vector<rt::Value> args;
      if (!inputs.empty()) {
        std::mt19937_64 rng(seed);
        args = tools::generate_args(inputs, rng);
      } else {
        args = tools::parse_args(args_text);
      }
      const tools::CheckReport rep = tools::check_gradient(p, entry, wrt, args, tol);
      std::cout << rep.str();
      if (!rep.pass() && expect_custom) {
        std::cout << "mismatch expected (custom adjoint)\n";
        return 0;
      }
      return rep.pass() ? 0 : 1;
    }
    if (*lattice) {
      std::vector<tools::ArrayMode> modes;
      if (bench_mode == "all")
        modes = {tools::ArrayMode::Immutable, tools::ArrayMode::SubarrayCopy, tools::ArrayMode::Persistent};
      else
        modes = {tools::parse_array_mode(bench_mode)};
      if (!no_header) std::cout << tools::BenchRow::csv_header() << "\n";
      for (auto m : modes)
        for (int n : split_ints(n_text)) {
          cfg.mode = m;
          cfg.n = n;
          std::cout << tools::bench_lattice(cfg).csv() << std::endl;
        }
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
