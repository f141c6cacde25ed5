#pragma once

#include <iosfwd>
#include <string_view>
#include <vector>

#include "gradc/ast.hpp"
#include "gradc/value.hpp"

namespace gradc::rt {

struct KernelContext {
  /// When false every array update copies the whole array (immutable
  /// arrays); when true a uniquely owned receiver is updated in place.
  bool inplace = true;
  std::ostream* out = nullptr;  // print target; stdout when null
};

Shape broadcast_shapes(const Shape& a, const Shape& b);

/// Arithmetic and comparison operators with broadcasting. A lazy zero
/// behaves as the additive/multiplicative zero in linear positions.
Value binop_dispatch(lang::BinOpKind op, const Value& a, const Value& b);
Value negate(const Value& a);

Value init_grad(const Value& x);
Value add_grad(Value a, const Value& b, const KernelContext& ctx = {});
Value unbroadcast(const Value& g, const Value& like);
Value rebroadcast(const Value& g, const Value& like);
Value getitem(const Value& x, const Value& i);

using KernelFn = Value (*)(std::vector<Value>& args, const KernelContext& ctx);

/// Kernels that may update args[0] in place when it is uniquely owned.
bool is_consuming_kernel(std::string_view name);
KernelFn find_kernel(std::string_view name);
/// Apply a builtin kernel (everything except push/pop, which need a tape).
Value apply_builtin(std::string_view name, std::vector<Value> args, const KernelContext& ctx = {});

}  // namespace gradc::rt
