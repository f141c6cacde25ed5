#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gradc/ast.hpp"

namespace gradc::opt {

struct OptOptions {
  /// x*0 -> 0 and x+0 -> x on literal zeros; wrong for NaN/Inf operands
  /// and for -0.0.
  bool unsafe_algebra = true;
  /// Pass log on stderr. Defaults to the GRADC_OPT_LOG environment variable.
  bool log = log_from_env();

  static bool log_from_env();
};

struct Cfg {
  struct BasicBlock {
    std::vector<const lang::Stmt*> stmts;
  };
  std::vector<BasicBlock> blocks;
  std::vector<std::pair<int, int>> edges;
  int entry = 0;
  int exit = 0;
  std::map<const lang::Stmt*, int> block_of;
  std::map<const lang::Stmt*, std::set<std::string>> defs;
  std::map<const lang::Stmt*, std::set<std::string>> uses;
  /// label -> (push statement, pop statement)
  std::map<std::string, std::pair<const lang::Stmt*, const lang::Stmt*>> tape_links;
};

/// Structured CFG. Throws gradc::Error when a tape label does not pair one
/// push with one pop.
Cfg build_cfg(const lang::FunctionDef& f);

/// Constant and copy propagation plus algebraic simplification. Returns true
/// when the function changed.
bool const_prop_and_simplify(lang::FunctionDef& f, const OptOptions& opts = {});

/// Replace `y = pop(L)` by the pushed variable when it is provably unchanged
/// between the push and the pop, and drop the push.
bool elide_tape(lang::FunctionDef& f);

/// Liveness-based dead code elimination. A push/pop pair is removed when the
/// popped value is dead.
bool liveness_and_dce(lang::FunctionDef& f);

/// Drop comments that no longer annotate any statement.
bool tidy_comments(lang::FunctionDef& f);

lang::FunctionDef optimize(const lang::FunctionDef& f, const OptOptions& opts = {});
lang::Program optimize(const lang::Program& p, const OptOptions& opts = {});

}  // namespace gradc::opt
