#pragma once

#include <span>
#include <string_view>

namespace gradc::lang {

/// Static description of a builtin kernel, shared by the validator, the
/// activity analysis and the interpreter.
struct BuiltinInfo {
  std::string_view name;
  int min_args;
  int max_args;  // -1: variadic
  /// False when the result never carries derivative information (shapes,
  /// fresh zeros, gradient initializers, tape bookkeeping).
  bool differentiable;
  std::string_view summary;
};

const BuiltinInfo* find_builtin(std::string_view name);
std::span<const BuiltinInfo> all_builtins();
bool arity_ok(const BuiltinInfo& b, std::size_t n);

}  // namespace gradc::lang
