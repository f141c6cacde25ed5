#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gradc/ad.hpp"
#include "gradc/ast.hpp"
#include "gradc/value.hpp"

namespace gradc::tools {

// ---------------------------------------------------------------------------
// Arguments

/// Comma-separated literal arguments: `3`, `2.5`, `true`, `[[1, 2], [3, 4]]`.
/// Integers without a decimal point stay Int.
std::vector<rt::Value> parse_args(const std::string& text);

/// Random input generators, one per parameter, separated by `;`:
///   3 | -0.5 | [1.0, 2.0]      literal
///   normal(d0, d1, ...)        standard normal array; normal() is a scalar
///   uniform(d0, ...)           uniform on [-1, 1)
///   onehot(rows, classes)      one random 1.0 per row
///   parray(GEN)                persistent array holding GEN
/// Any generator may be followed by `*S` to scale it.
std::vector<rt::Value> generate_args(const std::string& spec, std::mt19937_64& rng);

/// Flattened float contents; lazy zeros become `like_size` zeros.
std::vector<double> flatten(const rt::Value& v, std::size_t like_size = 0);

/// Copy of `v` with element k of its flattened contents replaced.
rt::Value with_element(const rt::Value& v, std::size_t k, double x);

// ---------------------------------------------------------------------------
// Gradient check

struct CheckOptions {
  double eps = 1e-5;
  double rtol = 1e-4;
  double atol = 1e-6;
  ad::GradOptions grad;
};

struct ParamReport {
  int index = 0;
  std::string name;
  std::size_t elements = 0;
  double max_abs_err = 0;
  double max_rel_err = 0;
  bool pass = true;
};

struct CheckReport {
  std::vector<ParamReport> params;
  double seconds = 0;
  bool pass() const;
  std::string str() const;
};

/// Optimized reverse-mode gradient of `entry` against central differences of
/// the original program.
CheckReport check_gradient(const lang::Program& p, const std::string& entry, const std::vector<int>& wrt,
                           const std::vector<rt::Value>& args, const CheckOptions& opts = {});

/// Gradient components, one vector per wrt parameter, from a reverse-mode
/// derivative evaluated on `args` (missing seeds take their defaults).
std::vector<std::vector<double>> eval_gradient(const ad::Derivative& d, const std::vector<rt::Value>& args,
                                               const std::vector<int>& wrt);

// ---------------------------------------------------------------------------
// Lattice benchmark

enum class ArrayMode { Immutable, SubarrayCopy, Persistent };
ArrayMode parse_array_mode(const std::string& s);
std::string array_mode_name(ArrayMode m);

struct BenchConfig {
  int n = 100;
  int m = 15;
  int d = 2000;
  ArrayMode mode = ArrayMode::Persistent;
  int repeats = 3;
};

struct BenchRow {
  ArrayMode mode;
  int n, m, d;
  double seconds;
  std::uint64_t bytes_allocated;
  std::string csv() const;
  static std::string csv_header();
};

/// Source of the lattice program: `def lattice(x, outer, inner)`.
const char* lattice_source();

/// Times one forward+backward evaluation of the lattice gradient (median
/// of `repeats` after a discarded warmup).
BenchRow bench_lattice(const BenchConfig& cfg);

// ---------------------------------------------------------------------------
// Corpus

struct CorpusCase {
  std::string name;
  std::string file;  // relative to the corpus directory
  std::string entry;
  std::vector<int> wrt;
  std::string inputs;  // generator spec
  std::optional<std::string> golden;
  CheckOptions tol;
};

/// One case per non-empty, non-# line:
///   NAME FILE ENTRY WRT INPUTS [golden=FILE] [rtol=R] [atol=A] [eps=E]
/// WRT is a comma-separated index list, INPUTS a generator spec without
/// spaces.
std::vector<CorpusCase> load_manifest(const std::string& dir);

struct CaseResult {
  std::string name;
  bool pass = true;
  std::vector<std::string> failures;
};

struct CorpusOptions {
  int random_inputs = 20;
  std::uint64_t seed = 1;
};

/// validate, golden comparison, differential test of the optimized against
/// the unoptimized derivative, tape balance and the gradient check.
std::vector<CaseResult> run_corpus(const std::string& dir, const CorpusOptions& opts = {});

lang::Program load_program(const std::string& path);

}  // namespace gradc::tools
