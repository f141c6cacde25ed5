#pragma once

#include <string>
#include <vector>

#include "gradc/ast.hpp"

namespace gradc::lang {

enum class Severity { Error, Warning };

/// Rule ids:
///   R1 in-place update of a parameter without returning it
///   R2 free variable reference
///   R3 unresolvable callee or wrong arity
///   R4 unsupported syntax
///   R5 unused call result (assumed pure; warning)
struct Diagnostic {
  Severity severity;
  int line;
  std::string rule;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
  std::string str() const;
};

/// Checks every function reachable from `entry`. Throws gradc::Error when
/// the entry does not exist or a wrt index is out of range.
std::vector<Diagnostic> validate(const Program& p, const std::string& entry, const std::vector<int>& wrt);

bool has_errors(const std::vector<Diagnostic>& diags);

}  // namespace gradc::lang
