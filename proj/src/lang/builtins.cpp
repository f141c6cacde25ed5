#include "gradc/builtins.hpp"

#include <array>

namespace gradc::lang {

namespace {

constexpr std::array kBuiltins = {
    // Arithmetic (the binary operators dispatch to these).
    BuiltinInfo{"add", 2, 2, true, "broadcasting elementwise sum"},
    BuiltinInfo{"subtract", 2, 2, true, "broadcasting elementwise difference"},
    BuiltinInfo{"multiply", 2, 2, true, "broadcasting elementwise product"},
    BuiltinInfo{"divide", 2, 2, true, "broadcasting elementwise quotient (always float)"},
    BuiltinInfo{"negative", 1, 1, true, "elementwise negation"},
    BuiltinInfo{"dot", 2, 2, true, "matrix/vector product over last axis of a and first axis of b"},
    BuiltinInfo{"tanh", 1, 1, true, "elementwise hyperbolic tangent"},
    BuiltinInfo{"exp", 1, 1, true, "elementwise exponential"},
    BuiltinInfo{"log", 1, 1, true, "elementwise natural logarithm"},
    BuiltinInfo{"sqrt", 1, 1, true, "elementwise square root"},
    BuiltinInfo{"sum", 1, 3, true, "sum(x[, axis[, keepdims]]); all elements by default"},
    BuiltinInfo{"mean", 1, 3, true, "mean(x[, axis[, keepdims]]); all elements by default"},
    // Arrays.
    BuiltinInfo{"zeros", 1, -1, false, "zeros(d0, d1, ...) dense zero array"},
    BuiltinInfo{"zeros_like", 1, 1, false, "dense zeros with the shape of x"},
    BuiltinInfo{"append", 2, 2, true, "append(x, row): x with one row added at the end"},
    BuiltinInfo{"setitem", 3, 3, true, "setitem(x, i, v): x with row i replaced by v"},
    BuiltinInfo{"getitem", 2, 2, true, "getitem(x, i): row i of x (same as x[i])"},
    BuiltinInfo{"shape_of", 1, 1, false, "shape of x as a tuple of ints"},
    BuiltinInfo{"len", 1, 1, false, "number of rows of x"},
    BuiltinInfo{"copy", 1, 1, true, "value copy"},
    BuiltinInfo{"parray", 1, 1, true, "persistent array holding a copy of x"},
    BuiltinInfo{"tuple", 0, -1, true, "tuple of the arguments"},
    BuiltinInfo{"print", 0, -1, false, "print the arguments separated by spaces"},
    // Tape.
    BuiltinInfo{"push", 2, 2, false, "push(v, label): save v on the tape"},
    BuiltinInfo{"pop", 1, 1, true, "pop(label): restore the most recent value saved under label"},
    // Gradient support.
    BuiltinInfo{"init_grad", 1, 1, false, "lazy zero gradient for x"},
    BuiltinInfo{"add_grad", 2, 2, true, "gradient accumulation; a zero gradient is the identity"},
    BuiltinInfo{"unbroadcast", 2, 2, true, "sum g over the axes broadcasting added to like"},
    BuiltinInfo{"rebroadcast", 2, 2, true, "broadcast g to the shape of like"},
    BuiltinInfo{"sum_grad", 2, 4, true, "sum_grad(g, x[, axis[, keepdims]]): spread g over the summed axes"},
    BuiltinInfo{"mean_grad", 2, 4, true, "mean_grad(g, x[, axis[, keepdims]]): spread g / count over the axes"},
    BuiltinInfo{"dot_grad_lhs", 3, 3, true, "dot_grad_lhs(g, a, b): gradient of dot(a, b) w.r.t. a"},
    BuiltinInfo{"dot_grad_rhs", 3, 3, true, "dot_grad_rhs(g, a, b): gradient of dot(a, b) w.r.t. b"},
    BuiltinInfo{"scatter_add", 4, 4, true, "scatter_add(acc, x, i, g): acc plus g placed at row i (x gives the shape)"},
    BuiltinInfo{"zero_row", 2, 2, true, "zero_row(g, i): g with row i cleared"},
    BuiltinInfo{"drop_last", 1, 1, true, "drop_last(g): g without its last row"},
    BuiltinInfo{"save_row", 2, 2, false, "save_row(x, i): copy of row i, or the version handle of a persistent array"},
    BuiltinInfo{"restore_row", 3, 3, true, "restore_row(x, i, saved): undo a row assignment"},
    BuiltinInfo{"save_len", 1, 1, false, "save_len(x): row count, or the version handle of a persistent array"},
    BuiltinInfo{"restore_len", 2, 2, true, "restore_len(x, saved): undo an append"},
};

}  // namespace

const BuiltinInfo* find_builtin(std::string_view name) {
  for (const auto& b : kBuiltins)
    if (b.name == name) return &b;
  return nullptr;
}

std::span<const BuiltinInfo> all_builtins() { return kBuiltins; }

bool arity_ok(const BuiltinInfo& b, std::size_t n) {
  if (static_cast<int>(n) < b.min_args) return false;
  return b.max_args < 0 || static_cast<int>(n) <= b.max_args;
}

}  // namespace gradc::lang
