#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "gradc/ad.hpp"

namespace gradc::ad {

/// Replace placeholders by their bindings and d[p] by grads[p].
lang::Expr substitute(const lang::Expr& e, const std::map<std::string, lang::Expr>& bindings,
                      const std::map<std::string, lang::Expr>& grads);

/// Placeholder p of a template statement `d[p] = ...`, or empty for a local
/// assignment.
std::string grad_target(const lang::Stmt& s);

/// Functions transitively called from `roots`, in program order.
std::vector<std::string> reachable_functions(const lang::Program& p, const std::vector<std::string>& roots);

/// Function names of p plus all builtin names.
std::set<std::string> function_names(const lang::Program& p);

}  // namespace gradc::ad
