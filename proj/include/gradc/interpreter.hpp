#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gradc/ast.hpp"
#include "gradc/kernels.hpp"
#include "gradc/tape.hpp"
#include "gradc/value.hpp"

namespace gradc::rt {

struct EvalOptions {
  /// False selects immutable arrays: every update copies the receiver.
  bool inplace_updates = true;
  /// Target of print(); stdout when null.
  std::ostream* out = nullptr;
  /// Statement trace on stderr. Defaults to the GRADC_TRACE environment
  /// variable.
  bool trace = trace_from_env();

  static bool trace_from_env();
};

/// Evaluate `entry` with positional `args` (missing trailing arguments take
/// their declared defaults). push/pop in the program operate on `tape`.
Value eval_program(const lang::Program& p, const std::string& entry, std::vector<Value> args, Tape& tape,
                   const EvalOptions& opts = {});

/// Convenience overload with a private tape that must be empty afterwards.
Value eval_program(const lang::Program& p, const std::string& entry, std::vector<Value> args,
                   const EvalOptions& opts = {});

}  // namespace gradc::rt
