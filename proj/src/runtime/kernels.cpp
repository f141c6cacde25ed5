#include "gradc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>

#include <fmt/format.h>

#include "gradc/builtins.hpp"

namespace gradc::rt {

using lang::BinOpKind;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw EvalError(msg); }

bool is_scalar(const Value& v) { return v.is_number(); }

bool is_array(const Value& v) { return v.is_dense() || v.is_parray(); }

double scalar_of(const Value& v, const char* what) {
  if (v.is_number()) return v.as_float();
  fail(fmt::format("{}: expected a number, got {}", what, v.kind_name()));
}

Dense dense_operand(const Value& v, const char* what) {
  if (is_array(v)) return to_dense(v);
  return Dense::filled({}, scalar_of(v, what));
}

std::int64_t normalize_index(const Value& i, std::size_t rows) {
  if (!i.is_int()) fail(fmt::format("index must be an int, got {}", i.kind_name()));
  const auto n = static_cast<std::int64_t>(rows);
  std::int64_t k = i.as_int();
  if (k < 0) k += n;
  if (k < 0 || k >= n) fail(fmt::format("index {} out of range for {} rows", i.as_int(), rows));
  return k;
}

Shape row_shape_of(const Shape& s) { return Shape(s.begin() + 1, s.end()); }

Value wrap_row(const std::vector<double>& data, const Shape& row_shape) {
  if (row_shape.empty()) return Value::flt(data[0]);
  return Value::dense(Dense(row_shape, data));
}

// Row data of `v` laid out to fill `row_shape`; scalars broadcast and a lazy
// zero becomes zeros.
std::vector<double> row_values(const Value& v, const Shape& row_shape, const char* what) {
  const std::size_t n = shape_size(row_shape);
  if (v.is_zero()) return std::vector<double>(n, 0.0);
  if (v.is_number()) return std::vector<double>(n, v.as_float());
  if (is_array(v)) {
    Dense d = to_dense(v);
    if (d.shape() == row_shape) return d.to_vector();
    if (broadcast_shapes(d.shape(), row_shape) != row_shape)
      fail(fmt::format("{}: value of shape {} does not fit rows of shape {}", what, shape_str(d.shape()),
                       shape_str(row_shape)));
    return rebroadcast(v, Value::dense(Dense(row_shape))).as_dense().to_vector();
  }
  fail(fmt::format("{}: cannot use {} as an array row", what, v.kind_name()));
}

// Array argument that the kernel may overwrite. The value is moved out of the
// argument list; with immutable arrays it is always copied first.
Dense take_dense(Value& v, const KernelContext& ctx) {
  Dense d = std::move(v.as_dense());
  if (!ctx.inplace) return d.clone();
  return d;
}

// --- elementwise ------------------------------------------------------------

template <typename F>
Dense broadcast_apply(const Dense& a, const Dense& b, F f) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  Dense out(out_shape);
  double* o = out.mutable_data();
  const double* pa = a.data();
  const double* pb = b.data();
  const std::size_t n = out.size();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(pa[i], pb[i]);
    return out;
  }
  if (a.size() == 1) {
    const double x = pa[0];
    for (std::size_t i = 0; i < n; ++i) o[i] = f(x, pb[i]);
    return out;
  }
  if (b.size() == 1) {
    const double y = pb[0];
    for (std::size_t i = 0; i < n; ++i) o[i] = f(pa[i], y);
    return out;
  }
  if (n == 0) return out;
  const std::size_t rank = out_shape.size();
  auto strides = [&](const Shape& s) {
    std::vector<std::size_t> st(rank, 0);
    std::size_t stride = 1;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const std::size_t dim = s.size() - 1 - k;
      st[rank - 1 - k] = s[dim] == 1 ? 0 : stride;
      stride *= s[dim];
    }
    return st;
  };
  const auto sa = strides(a.shape());
  const auto sb = strides(b.shape());
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0;
  const std::size_t inner = out_shape[rank - 1];
  const std::size_t ia = sa[rank - 1], ib = sb[rank - 1];
  for (std::size_t i = 0; i < n; i += inner) {
    for (std::size_t j = 0; j < inner; ++j) o[i + j] = f(pa[oa + j * ia], pb[ob + j * ib]);
    for (std::size_t k = rank - 1; k-- > 0;) {
      ++idx[k];
      oa += sa[k];
      ob += sb[k];
      if (idx[k] < out_shape[k]) break;
      oa -= sa[k] * idx[k];
      ob -= sb[k] * idx[k];
      idx[k] = 0;
    }
  }
  return out;
}

template <typename F>
Value elementwise(const Value& a, const Value& b, const char* what, F f) {
  if (a.is_number() && b.is_number()) return Value::flt(f(a.as_float(), b.as_float()));
  return Value::dense(broadcast_apply(dense_operand(a, what), dense_operand(b, what), f));
}

template <typename F>
Value unary(const Value& a, const char* name, F f) {
  if (a.is_zero()) fail(fmt::format("{}: a lazy zero gradient reached a non-linear kernel", name));
  if (a.is_number()) return Value::flt(f(a.as_float()));
  if (is_array(a)) {
    Dense in = to_dense(a);
    Dense out(in.shape());
    double* o = out.mutable_data();
    const double* p = in.data();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(p[i]);
    return Value::dense(std::move(out));
  }
  fail(fmt::format("{}: unsupported operand {}", name, a.kind_name()));
}

template <typename T>
Value compare_as(BinOpKind op, T x, T y) {
  switch (op) {
    case BinOpKind::Lt: return Value::boolean(x < y);
    case BinOpKind::Gt: return Value::boolean(x > y);
    case BinOpKind::Le: return Value::boolean(x <= y);
    case BinOpKind::Ge: return Value::boolean(x >= y);
    default: return Value::boolean(x == y);
  }
}

Value compare(BinOpKind op, const Value& a, const Value& b) {
  auto operand = [&](const Value& v) -> double {
    if (v.is_zero()) return 0.0;
    if (v.is_number()) return v.as_float();
    fail(fmt::format("'{}' is only defined for scalars, got {}", lang::binop_symbol(op), v.kind_name()));
  };
  if (a.is_int() && b.is_int()) return compare_as(op, a.as_int(), b.as_int());
  if (a.is_bool() && b.is_bool() && op == BinOpKind::Eq) return Value::boolean(a.as_bool() == b.as_bool());
  return compare_as(op, operand(a), operand(b));
}

// --- reductions -------------------------------------------------------------

std::optional<std::size_t> axis_arg(const std::vector<Value>& args, std::size_t pos, std::size_t rank,
                                    const char* what) {
  if (args.size() <= pos || args[pos].is_none()) return std::nullopt;
  if (!args[pos].is_int()) fail(fmt::format("{}: axis must be an int", what));
  std::int64_t ax = args[pos].as_int();
  const auto r = static_cast<std::int64_t>(rank);
  if (ax < 0) ax += r;
  if (ax < 0 || ax >= r) fail(fmt::format("{}: axis {} out of range for rank {}", what, args[pos].as_int(), rank));
  return static_cast<std::size_t>(ax);
}

bool keepdims_arg(const std::vector<Value>& args, std::size_t pos) {
  if (args.size() <= pos) return false;
  if (args[pos].is_bool()) return args[pos].as_bool();
  if (args[pos].is_int()) return args[pos].as_int() != 0;
  fail("keepdims must be a bool");
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split(const Shape& s, std::size_t axis) {
  AxisSplit a{1, s[axis], 1};
  for (std::size_t k = 0; k < axis; ++k) a.outer *= s[k];
  for (std::size_t k = axis + 1; k < s.size(); ++k) a.inner *= s[k];
  return a;
}

Value reduce(const std::vector<Value>& args, bool mean, const char* what) {
  const Value& x = args[0];
  if (x.is_zero()) return Value::zero();
  if (x.is_number()) return Value::flt(x.as_float());
  Dense d = to_dense(x);
  const auto axis = axis_arg(args, 1, d.rank(), what);
  const bool keep = keepdims_arg(args, 2);
  if (!axis) {
    double total = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) total += d.data()[i];
    if (mean) total /= static_cast<double>(d.size());
    if (keep) return Value::dense(Dense::filled(Shape(d.rank(), 1), total));
    return Value::flt(total);
  }
  const AxisSplit sp = split(d.shape(), *axis);
  Shape out_shape = d.shape();
  if (keep) out_shape[*axis] = 1;
  else out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(*axis));
  Dense out = Dense::filled(out_shape, 0.0);
  double* o = out.mutable_data();
  const double* p = d.data();
  for (std::size_t a = 0; a < sp.outer; ++a)
    for (std::size_t i = 0; i < sp.n; ++i)
      for (std::size_t j = 0; j < sp.inner; ++j) o[a * sp.inner + j] += p[(a * sp.n + i) * sp.inner + j];
  if (mean)
    for (std::size_t k = 0; k < out.size(); ++k) o[k] /= static_cast<double>(sp.n);
  if (out_shape.empty()) return Value::flt(o[0]);
  return Value::dense(std::move(out));
}

// Spread g back over the reduced axes of x.
Value reduce_grad(const std::vector<Value>& args, bool mean, const char* what) {
  const Value& g = args[0];
  const Value& x = args[1];
  if (g.is_zero()) return Value::zero();
  if (x.is_number()) return Value::flt(scalar_of(g, what));
  const Shape xs = shape_of(x);
  const auto axis = axis_arg(args, 2, xs.size(), what);
  Dense gd = dense_operand(g, what);
  if (!axis) {
    if (gd.size() != 1) fail(fmt::format("{}: expected a scalar gradient, got shape {}", what, shape_str(gd.shape())));
    double v = gd.data()[0];
    if (mean) v /= static_cast<double>(shape_size(xs));
    return Value::dense(Dense::filled(xs, v));
  }
  const AxisSplit sp = split(xs, *axis);
  if (gd.size() != sp.outer * sp.inner)
    fail(fmt::format("{}: gradient of shape {} does not match a reduction of {}", what, shape_str(gd.shape()),
                     shape_str(xs)));
  Dense out(xs);
  double* o = out.mutable_data();
  const double* p = gd.data();
  const double scale = mean ? 1.0 / static_cast<double>(sp.n) : 1.0;
  for (std::size_t a = 0; a < sp.outer; ++a)
    for (std::size_t i = 0; i < sp.n; ++i)
      for (std::size_t j = 0; j < sp.inner; ++j) o[(a * sp.n + i) * sp.inner + j] = p[a * sp.inner + j] * scale;
  return Value::dense(std::move(out));
}

// --- dot --------------------------------------------------------------------

// op(a) . op(b) for rank-2 operands, op being an optional transpose.
Dense matmul(const Dense& a, const Dense& b, bool ta, bool tb) {
  const std::size_t ar = a.shape()[0], ac = a.shape()[1];
  const std::size_t br = b.shape()[0], bc = b.shape()[1];
  const std::size_t m = ta ? ac : ar, k = ta ? ar : ac;
  const std::size_t k2 = tb ? bc : br, n = tb ? br : bc;
  if (k != k2) fail(fmt::format("dot: shapes {} and {} not aligned", shape_str(a.shape()), shape_str(b.shape())));
  Dense out = Dense::filled({m, n}, 0.0);
  double* o = out.mutable_data();
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? pa[p * ac + i] : pa[i * ac + p];
      if (tb) {
        for (std::size_t j = 0; j < n; ++j) o[i * n + j] += av * pb[j * bc + p];
      } else {
        const double* brow = pb + p * bc;
        for (std::size_t j = 0; j < n; ++j) o[i * n + j] += av * brow[j];
      }
    }
  return out;
}

Dense reshaped(Dense d, Shape s) {
  d.reshape(std::move(s));
  return d;
}

Value squeeze(Dense d, Shape s) {
  if (s.empty()) return Value::flt(d.data()[0]);
  return Value::dense(reshaped(std::move(d), std::move(s)));
}

void check_rank(const Dense& d, const char* what) {
  if (d.rank() > 2) fail(fmt::format("{}: only arrays of rank 1 and 2 are supported", what));
}

Value sum_all(const Value& v) { return reduce({v}, false, "sum"); }

Value dot(const Value& a, const Value& b) {
  if (a.is_zero() || b.is_zero()) return Value::zero();
  if (is_scalar(a) || is_scalar(b)) return binop_dispatch(BinOpKind::Mul, a, b);
  Dense x = to_dense(a), y = to_dense(b);
  check_rank(x, "dot");
  check_rank(y, "dot");
  if (x.rank() == 1 && y.rank() == 1) {
    if (x.size() != y.size())
      fail(fmt::format("dot: shapes {} and {} not aligned", shape_str(x.shape()), shape_str(y.shape())));
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i] * y.data()[i];
    return Value::flt(s);
  }
  if (x.rank() == 2 && y.rank() == 1)
    return squeeze(matmul(x, reshaped(y, {y.size(), 1}), false, false), {x.shape()[0]});
  if (x.rank() == 1 && y.rank() == 2)
    return squeeze(matmul(reshaped(x, {1, x.size()}), y, false, false), {y.shape()[1]});
  return Value::dense(matmul(x, y, false, false));
}

Value outer(const Dense& u, const Dense& v) {
  return Value::dense(matmul(reshaped(u, {u.size(), 1}), reshaped(v, {1, v.size()}), false, false));
}

// Gradient of <g, dot(a, b)> with respect to a; a only contributes its rank.
Value dot_grad_lhs(const Value& g, const Value& a, const Value& b) {
  if (g.is_zero() || b.is_zero()) return Value::zero();
  if (is_scalar(a)) {
    Value prod = binop_dispatch(BinOpKind::Mul, g, b);
    return is_scalar(prod) ? prod : sum_all(prod);
  }
  if (is_scalar(b)) return binop_dispatch(BinOpKind::Mul, g, b);
  const Shape as = shape_of(a);
  Dense bd = to_dense(b);
  Dense gd = dense_operand(g, "dot_grad_lhs");
  if (as.size() == 1 && bd.rank() == 1) return binop_dispatch(BinOpKind::Mul, g, b);
  if (as.size() == 2 && bd.rank() == 1) return outer(gd, bd);
  if (as.size() == 1 && bd.rank() == 2)
    return squeeze(matmul(bd, reshaped(gd, {gd.size(), 1}), false, false), {bd.shape()[0]});
  check_rank(bd, "dot_grad_lhs");
  return Value::dense(matmul(gd, bd, false, true));
}

// Gradient of <g, dot(a, b)> with respect to b; b only contributes its rank.
Value dot_grad_rhs(const Value& g, const Value& a, const Value& b) {
  if (g.is_zero() || a.is_zero()) return Value::zero();
  if (is_scalar(b)) {
    Value prod = binop_dispatch(BinOpKind::Mul, g, a);
    return is_scalar(prod) ? prod : sum_all(prod);
  }
  if (is_scalar(a)) return binop_dispatch(BinOpKind::Mul, g, a);
  const Shape bs = shape_of(b);
  Dense ad = to_dense(a);
  Dense gd = dense_operand(g, "dot_grad_rhs");
  if (ad.rank() == 1 && bs.size() == 1) return binop_dispatch(BinOpKind::Mul, g, a);
  if (ad.rank() == 2 && bs.size() == 1)
    return squeeze(matmul(ad, reshaped(gd, {gd.size(), 1}), true, false), {ad.shape()[1]});
  if (ad.rank() == 1 && bs.size() == 2) return outer(ad, gd);
  check_rank(ad, "dot_grad_rhs");
  return Value::dense(matmul(ad, gd, true, false));
}

// --- arrays -----------------------------------------------------------------

Value setitem(Value& x, const Value& i, const Value& v, const KernelContext& ctx) {
  if (x.is_zero()) {
    if (v.is_zero()) return Value::zero();
    fail("setitem: receiver is a lazy zero gradient");
  }
  if (x.is_parray()) {
    const pa::Handle& h = x.as_parray();
    normalize_index(i, h.rows());
    return Value::parray(pa::pa_setitem(h, i.as_int(), row_values(v, row_shape_of(h.shape()), "setitem")));
  }
  if (!x.is_dense()) fail(fmt::format("setitem: cannot index-assign into {}", x.kind_name()));
  if (x.as_dense().rank() == 0) fail("setitem: receiver has no rows");
  const auto k = static_cast<std::size_t>(normalize_index(i, x.as_dense().rows()));
  const std::vector<double> row = row_values(v, row_shape_of(x.as_dense().shape()), "setitem");
  Dense d = take_dense(x, ctx);
  std::copy(row.begin(), row.end(), d.mutable_data() + k * d.row_size());
  return Value::dense(std::move(d));
}

Value append(const Value& x, const Value& row) {
  if (x.is_zero()) {
    if (row.is_zero()) return Value::zero();
    fail("append: receiver is a lazy zero gradient");
  }
  if (x.is_parray()) {
    const pa::Handle& h = x.as_parray();
    return Value::parray(pa::pa_append(h, row_values(row, row_shape_of(h.shape()), "append")));
  }
  const Dense& d = x.as_dense();
  if (d.rank() == 0) fail("append: receiver has no rows");
  const std::vector<double> r = row_values(row, row_shape_of(d.shape()), "append");
  Shape s = d.shape();
  s[0] += 1;
  Dense out(s);
  double* o = out.mutable_data();
  std::copy(d.data(), d.data() + d.size(), o);
  std::copy(r.begin(), r.end(), o + d.size());
  return Value::dense(std::move(out));
}

Value zeros_from(const std::vector<Value>& args) {
  Shape s;
  auto dim = [&](const Value& v) {
    if (!v.is_int() || v.as_int() < 0) fail("zeros: dimensions must be non-negative ints");
    s.push_back(static_cast<std::size_t>(v.as_int()));
  };
  if (args.size() == 1 && args[0].is_tuple()) {
    for (const auto& v : args[0].as_tuple()) dim(v);
  } else {
    for (const auto& v : args) dim(v);
  }
  if (s.empty()) return Value::flt(0.0);
  return Value::dense(Dense::zeros(std::move(s)));
}

Value scatter_add(Value& acc, const Value& x, const Value& i, const Value& g, const KernelContext& ctx) {
  if (g.is_zero()) return std::move(acc);
  if (x.is_tuple()) {
    const auto& items = x.as_tuple();
    const auto k = static_cast<std::size_t>(normalize_index(i, items.size()));
    std::vector<Value> out;
    if (acc.is_zero()) out.assign(items.size(), Value::zero());
    else out = acc.as_tuple();
    out[k] = add_grad(std::move(out[k]), g, ctx);
    return Value::tuple(std::move(out));
  }
  const Shape xs = shape_of(x);
  if (xs.empty()) fail("scatter_add: receiver has no rows");
  const auto k = static_cast<std::size_t>(normalize_index(i, xs[0]));
  Dense d = acc.is_zero() ? Dense::zeros(xs) : take_dense(acc, ctx);
  if (d.shape() != xs)
    fail(fmt::format("scatter_add: accumulator {} does not match {}", shape_str(d.shape()), shape_str(xs)));
  const std::vector<double> row = row_values(g, row_shape_of(xs), "scatter_add");
  double* o = d.mutable_data() + k * d.row_size();
  for (std::size_t j = 0; j < row.size(); ++j) o[j] += row[j];
  return Value::dense(std::move(d));
}

// --- kernel table -----------------------------------------------------------

#define KERNEL(name) Value k_##name([[maybe_unused]] std::vector<Value>& a, [[maybe_unused]] const KernelContext& ctx)

KERNEL(add) { return binop_dispatch(BinOpKind::Add, a[0], a[1]); }
KERNEL(subtract) { return binop_dispatch(BinOpKind::Sub, a[0], a[1]); }
KERNEL(multiply) { return binop_dispatch(BinOpKind::Mul, a[0], a[1]); }
KERNEL(divide) { return binop_dispatch(BinOpKind::Div, a[0], a[1]); }
KERNEL(negative) { return negate(a[0]); }
KERNEL(dot) { return dot(a[0], a[1]); }
KERNEL(tanh) { return unary(a[0], "tanh", [](double v) { return std::tanh(v); }); }
KERNEL(exp) { return unary(a[0], "exp", [](double v) { return std::exp(v); }); }
KERNEL(log) { return unary(a[0], "log", [](double v) { return std::log(v); }); }
KERNEL(sqrt) { return unary(a[0], "sqrt", [](double v) { return std::sqrt(v); }); }
KERNEL(sum) { return reduce(a, false, "sum"); }
KERNEL(mean) { return reduce(a, true, "mean"); }
KERNEL(zeros) { return zeros_from(a); }
KERNEL(zeros_like) {
  if (a[0].is_zero()) return Value::zero();
  if (a[0].is_number()) return Value::flt(0.0);
  return Value::dense(Dense::zeros(shape_of(a[0])));
}
KERNEL(append) { return append(a[0], a[1]); }
KERNEL(setitem) { return setitem(a[0], a[1], a[2], ctx); }
KERNEL(getitem) { return getitem(a[0], a[1]); }
KERNEL(shape_of) {
  std::vector<Value> dims;
  for (std::size_t d : shape_of(a[0])) dims.push_back(Value::integer(static_cast<std::int64_t>(d)));
  return Value::tuple(std::move(dims));
}
KERNEL(len) {
  if (a[0].is_tuple()) return Value::integer(static_cast<std::int64_t>(a[0].as_tuple().size()));
  const Shape s = shape_of(a[0]);
  if (s.empty()) fail(fmt::format("len() of a {}", a[0].kind_name()));
  return Value::integer(static_cast<std::int64_t>(s[0]));
}
KERNEL(copy) { return a[0]; }
KERNEL(parray) {
  if (a[0].is_zero() || a[0].is_parray()) return a[0];
  const Dense& d = a[0].as_dense();
  if (d.rank() == 0) fail("parray: needs at least one dimension");
  return Value::parray(pa::pa_new(pa::Array{d.shape(), d.to_vector()}));
}
KERNEL(tuple) { return Value::tuple(a); }
KERNEL(init_grad) { return init_grad(a[0]); }
KERNEL(add_grad) { return add_grad(std::move(a[0]), a[1], ctx); }
KERNEL(unbroadcast) { return unbroadcast(a[0], a[1]); }
KERNEL(rebroadcast) { return rebroadcast(a[0], a[1]); }
KERNEL(sum_grad) { return reduce_grad(a, false, "sum_grad"); }
KERNEL(mean_grad) { return reduce_grad(a, true, "mean_grad"); }
KERNEL(dot_grad_lhs) { return dot_grad_lhs(a[0], a[1], a[2]); }
KERNEL(dot_grad_rhs) { return dot_grad_rhs(a[0], a[1], a[2]); }
KERNEL(scatter_add) { return scatter_add(a[0], a[1], a[2], a[3], ctx); }
KERNEL(zero_row) {
  if (a[0].is_zero()) return Value::zero();
  if (a[0].is_tuple()) {
    std::vector<Value> items = a[0].as_tuple();
    items[static_cast<std::size_t>(normalize_index(a[1], items.size()))] = Value::zero();
    return Value::tuple(std::move(items));
  }
  return setitem(a[0], a[1], Value::flt(0.0), ctx);
}
KERNEL(drop_last) {
  if (a[0].is_zero()) return Value::zero();
  if (a[0].is_parray()) return Value::parray(pa::pa_drop_last(a[0].as_parray()));
  Dense d = take_dense(a[0], ctx);
  if (d.rows() == 0) fail("drop_last: array has no rows");
  d.truncate_rows(d.rows() - 1);
  return Value::dense(std::move(d));
}
KERNEL(save_row) {
  if (a[0].is_parray()) return a[0];
  return getitem(a[0], a[1]);
}
KERNEL(restore_row) {
  if (a[2].is_parray()) return a[2];
  return setitem(a[0], a[1], a[2], ctx);
}
KERNEL(save_len) {
  if (a[0].is_parray()) return a[0];
  return Value::integer(static_cast<std::int64_t>(a[0].as_dense().rows()));
}
KERNEL(restore_len) {
  if (a[1].is_parray()) return a[1];
  Dense d = take_dense(a[0], ctx);
  d.truncate_rows(static_cast<std::size_t>(a[1].as_int()));
  return Value::dense(std::move(d));
}

#undef KERNEL

const std::unordered_map<std::string_view, KernelFn>& kernel_table() {
  static const std::unordered_map<std::string_view, KernelFn> table = {
      {"add", k_add},
      {"subtract", k_subtract},
      {"multiply", k_multiply},
      {"divide", k_divide},
      {"negative", k_negative},
      {"dot", k_dot},
      {"tanh", k_tanh},
      {"exp", k_exp},
      {"log", k_log},
      {"sqrt", k_sqrt},
      {"sum", k_sum},
      {"mean", k_mean},
      {"zeros", k_zeros},
      {"zeros_like", k_zeros_like},
      {"append", k_append},
      {"setitem", k_setitem},
      {"getitem", k_getitem},
      {"shape_of", k_shape_of},
      {"len", k_len},
      {"copy", k_copy},
      {"parray", k_parray},
      {"tuple", k_tuple},
      {"init_grad", k_init_grad},
      {"add_grad", k_add_grad},
      {"unbroadcast", k_unbroadcast},
      {"rebroadcast", k_rebroadcast},
      {"sum_grad", k_sum_grad},
      {"mean_grad", k_mean_grad},
      {"dot_grad_lhs", k_dot_grad_lhs},
      {"dot_grad_rhs", k_dot_grad_rhs},
      {"scatter_add", k_scatter_add},
      {"zero_row", k_zero_row},
      {"drop_last", k_drop_last},
      {"save_row", k_save_row},
      {"restore_row", k_restore_row},
      {"save_len", k_save_len},
      {"restore_len", k_restore_len},
  };
  return table;
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1)
      fail(fmt::format("shapes {} and {} cannot be broadcast together", shape_str(a), shape_str(b)));
    out[rank - 1 - k] = da == 1 ? db : da;
  }
  return out;
}

Value binop_dispatch(BinOpKind op, const Value& a, const Value& b) {
  if (lang::is_comparison(op)) return compare(op, a, b);
  const char* sym = lang::binop_symbol(op);
  if (a.is_bool() || b.is_bool()) fail(fmt::format("'{}' is not defined for bool operands", sym));
  if (a.is_zero() || b.is_zero()) {
    switch (op) {
      case BinOpKind::Add: return a.is_zero() ? b : a;
      case BinOpKind::Sub: return b.is_zero() ? a : negate(b);
      case BinOpKind::Mul: return Value::zero();
      default:
        if (b.is_zero()) fail("division by a lazy zero gradient");
        return Value::zero();
    }
  }
  if (a.is_int() && b.is_int()) {
    const std::int64_t x = a.as_int(), y = b.as_int();
    switch (op) {
      case BinOpKind::Add: return Value::integer(x + y);
      case BinOpKind::Sub: return Value::integer(x - y);
      case BinOpKind::Mul: return Value::integer(x * y);
      default: return Value::flt(static_cast<double>(x) / static_cast<double>(y));
    }
  }
  switch (op) {
    case BinOpKind::Add: return elementwise(a, b, sym, [](double x, double y) { return x + y; });
    case BinOpKind::Sub: return elementwise(a, b, sym, [](double x, double y) { return x - y; });
    case BinOpKind::Mul: return elementwise(a, b, sym, [](double x, double y) { return x * y; });
    default: return elementwise(a, b, sym, [](double x, double y) { return x / y; });
  }
}

Value negate(const Value& a) {
  if (a.is_zero()) return Value::zero();
  if (a.is_int()) return Value::integer(-a.as_int());
  if (a.is_bool()) fail("unary '-' is not defined for bool");
  return unary(a, "negative", [](double v) { return -v; });
}

Value init_grad(const Value&) { return Value::zero(); }

Value add_grad(Value a, const Value& b, const KernelContext& ctx) {
  if (b.is_zero()) return a;
  if (a.is_zero()) return b;
  if (a.is_number() && b.is_number()) return binop_dispatch(BinOpKind::Add, a, b);
  if (a.is_tuple() && b.is_tuple()) {
    const auto& x = a.as_tuple();
    const auto& y = b.as_tuple();
    if (x.size() != y.size()) fail("add_grad: tuples of different lengths");
    std::vector<Value> out;
    for (std::size_t k = 0; k < x.size(); ++k) out.push_back(add_grad(x[k], y[k], ctx));
    return Value::tuple(std::move(out));
  }
  if (is_array(a) && is_array(b)) {
    if (a.is_parray()) a = Value::dense(to_dense(a));
    Dense y = to_dense(b);
    if (a.as_dense().shape() != y.shape())
      fail(fmt::format("add_grad: shape mismatch {} vs {}", shape_str(a.as_dense().shape()), shape_str(y.shape())));
    Dense x = take_dense(a, ctx);
    double* o = x.mutable_data();
    const double* p = y.data();
    for (std::size_t k = 0; k < x.size(); ++k) o[k] += p[k];
    return Value::dense(std::move(x));
  }
  fail(fmt::format("add_grad: cannot add {} and {}", a.kind_name(), b.kind_name()));
}

Value unbroadcast(const Value& g, const Value& like) {
  if (g.is_zero()) return Value::zero();
  if (like.is_zero() || like.is_tuple() || like.is_none()) return g;
  if (like.is_number() || like.is_bool()) {
    if (g.is_number()) return Value::flt(g.as_float());
    return sum_all(g);
  }
  const Shape ls = shape_of(like);
  if (g.is_number()) return Value::dense(Dense::filled(ls, g.as_float()));
  Dense gd = to_dense(g);
  const Shape gs = gd.shape();
  if (gs == ls) return Value::dense(std::move(gd));
  if (gs.size() < ls.size() || broadcast_shapes(gs, ls) != gs)
    fail(fmt::format("unbroadcast: gradient {} cannot come from broadcasting {}", shape_str(gs), shape_str(ls)));
  // Sum over the leading axes, then over the axes where like had extent 1.
  const std::size_t lead = gs.size() - ls.size();
  std::size_t outer = 1;
  for (std::size_t k = 0; k < lead; ++k) outer *= gs[k];
  Dense acc = Dense::filled(Shape(gs.begin() + static_cast<std::ptrdiff_t>(lead), gs.end()), 0.0);
  const std::size_t block = acc.size();
  double* o = acc.mutable_data();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t j = 0; j < block; ++j) o[j] += gd.data()[a * block + j];
  Value cur = Value::dense(std::move(acc));
  for (std::size_t k = 0; k < ls.size(); ++k)
    if (ls[k] == 1 && cur.as_dense().shape()[k] != 1)
      cur = reduce({cur, Value::integer(static_cast<std::int64_t>(k)), Value::boolean(true)}, false, "unbroadcast");
  return cur;
}

Value rebroadcast(const Value& g, const Value& like) {
  if (g.is_zero()) return Value::zero();
  if (like.is_zero() || like.is_tuple() || like.is_none()) return g;
  if (like.is_number()) {
    if (g.is_number()) return g;
    Dense gd = to_dense(g);
    if (gd.size() != 1) fail(fmt::format("rebroadcast: cannot reduce shape {} to a scalar", shape_str(gd.shape())));
    return Value::flt(gd.data()[0]);
  }
  const Shape ls = shape_of(like);
  if (g.is_number()) return Value::dense(Dense::filled(ls, g.as_float()));
  Dense gd = to_dense(g);
  if (gd.shape() == ls) return Value::dense(std::move(gd));
  if (broadcast_shapes(gd.shape(), ls) != ls)
    fail(fmt::format("rebroadcast: {} does not broadcast to {}", shape_str(gd.shape()), shape_str(ls)));
  return Value::dense(broadcast_apply(gd, Dense::filled(ls, 0.0), [](double x, double) { return x; }));
}

Value getitem(const Value& x, const Value& i) {
  if (x.is_zero()) return Value::zero();
  if (x.is_tuple()) {
    const auto& items = x.as_tuple();
    return items[static_cast<std::size_t>(normalize_index(i, items.size()))];
  }
  if (x.is_parray()) {
    const pa::Handle& h = x.as_parray();
    normalize_index(i, h.rows());
    return wrap_row(pa::pa_row(h, i.as_int()), row_shape_of(h.shape()));
  }
  if (!x.is_dense()) fail(fmt::format("cannot index a {}", x.kind_name()));
  const Dense& d = x.as_dense();
  if (d.rank() == 0) fail("cannot index a zero-dimensional array");
  const auto k = static_cast<std::size_t>(normalize_index(i, d.rows()));
  if (d.rank() == 1) return Value::flt(d.data()[k]);
  const std::size_t rs = d.row_size();
  const double* p = d.data() + k * rs;
  return Value::dense(Dense(row_shape_of(d.shape()), std::vector<double>(p, p + rs)));
}

bool is_consuming_kernel(std::string_view name) {
  return name == "setitem" || name == "zero_row" || name == "scatter_add" || name == "restore_row" ||
         name == "restore_len" || name == "drop_last" || name == "add_grad";
}

KernelFn find_kernel(std::string_view name) {
  const auto& t = kernel_table();
  auto it = t.find(name);
  return it == t.end() ? nullptr : it->second;
}

Value apply_builtin(std::string_view name, std::vector<Value> args, const KernelContext& ctx) {
  KernelFn fn = find_kernel(name);
  if (!fn) fail(fmt::format("unknown builtin '{}'", name));
  const lang::BuiltinInfo* info = lang::find_builtin(name);
  if (info && !lang::arity_ok(*info, args.size()))
    fail(fmt::format("{}() called with {} arguments", name, args.size()));
  return fn(args, ctx);
}

}  // namespace gradc::rt
