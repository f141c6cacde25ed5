#include "gradc/value.hpp"

#include <cstring>
#include <functional>
#include <numeric>

#include <fmt/format.h>

namespace gradc::rt {

void AllocStats::reset() {
  high_water = live_bytes.load();
  total_bytes = 0;
  allocations = 0;
  zero_fills = 0;
}

AllocStats& alloc_stats() {
  static AllocStats s;
  return s;
}

void note_alloc(std::size_t bytes) {
  auto& s = alloc_stats();
  s.allocations++;
  s.total_bytes += bytes;
  const std::int64_t live = s.live_bytes += static_cast<std::int64_t>(bytes);
  std::int64_t hw = s.high_water.load();
  while (live > hw && !s.high_water.compare_exchange_weak(hw, live)) {
  }
}

void note_free(std::size_t bytes) noexcept { alloc_stats().live_bytes -= static_cast<std::int64_t>(bytes); }

std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  if (s.size() == 1) out += ",";
  return out + ")";
}

Dense::Dense(Shape shape) : shape_(std::move(shape)), buf_(std::make_shared<Buffer>(shape_size(shape_))) {}

Dense::Dense(Shape shape, const std::vector<double>& values) : shape_(std::move(shape)) {
  if (values.size() != shape_size(shape_))
    throw EvalError(fmt::format("{} values do not fill shape {}", values.size(), shape_str(shape_)));
  buf_ = std::make_shared<Buffer>(values.begin(), values.end());
}

Dense Dense::filled(Shape shape, double v) {
  Dense d(std::move(shape));
  if (v != 0.0) std::fill(d.buf_->begin(), d.buf_->end(), v);
  return d;
}

Dense Dense::zeros(Shape shape) {
  alloc_stats().zero_fills++;
  return Dense(std::move(shape));
}

std::size_t Dense::row_size() const {
  if (shape_.empty()) return 1;
  return std::accumulate(shape_.begin() + 1, shape_.end(), std::size_t{1}, std::multiplies<>());
}

double* Dense::mutable_data() {
  if (buf_.use_count() > 1) buf_ = std::make_shared<Buffer>(*buf_);
  return buf_->data();
}

Dense Dense::clone() const {
  Dense out = *this;
  out.buf_ = std::make_shared<Buffer>(*buf_);
  return out;
}

void Dense::truncate_rows(std::size_t rows) {
  if (shape_.empty() || rows > shape_[0]) throw EvalError("cannot grow an array by truncation");
  const std::size_t keep = rows * row_size();
  if (buf_.use_count() > 1) {
    buf_ = std::make_shared<Buffer>(buf_->begin(), buf_->begin() + static_cast<std::ptrdiff_t>(keep));
  } else {
    buf_->resize(keep);
  }
  shape_[0] = rows;
}

void Dense::reshape(Shape s) {
  if (shape_size(s) != size()) throw EvalError(fmt::format("cannot reshape {} to {}", shape_str(shape_), shape_str(s)));
  shape_ = std::move(s);
}

Value Value::tuple(std::vector<Value> items) {
  return Value(Tuple(std::make_shared<const std::vector<Value>>(std::move(items))));
}

const char* Value::kind_name(Kind k) {
  switch (k) {
    case Kind::None: return "None";
    case Kind::Float: return "float";
    case Kind::Int: return "int";
    case Kind::Bool: return "bool";
    case Kind::Dense: return "array";
    case Kind::Zero: return "ZeroGrad";
    case Kind::PArray: return "parray";
    case Kind::Tuple: return "tuple";
  }
  return "?";
}

double Value::as_float() const {
  if (auto* d = std::get_if<double>(&v_)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&v_)) return static_cast<double>(*i);
  throw EvalError(fmt::format("expected a number, got {}", kind_name()));
}

std::int64_t Value::as_int() const {
  if (auto* i = std::get_if<std::int64_t>(&v_)) return *i;
  throw EvalError(fmt::format("expected an int, got {}", kind_name()));
}

bool Value::as_bool() const {
  if (auto* b = std::get_if<bool>(&v_)) return *b;
  throw EvalError(fmt::format("expected a bool, got {}", kind_name()));
}

const Dense& Value::as_dense() const {
  if (auto* d = std::get_if<Dense>(&v_)) return *d;
  throw EvalError(fmt::format("expected an array, got {}", kind_name()));
}

Dense& Value::as_dense() {
  if (auto* d = std::get_if<Dense>(&v_)) return *d;
  throw EvalError(fmt::format("expected an array, got {}", kind_name()));
}

const pa::Handle& Value::as_parray() const {
  if (auto* h = std::get_if<pa::Handle>(&v_)) return *h;
  throw EvalError(fmt::format("expected a persistent array, got {}", kind_name()));
}

const std::vector<Value>& Value::as_tuple() const {
  if (auto* t = std::get_if<Tuple>(&v_)) return **t;
  throw EvalError(fmt::format("expected a tuple, got {}", kind_name()));
}

namespace {

void dense_str(const double* data, const Shape& shape, std::size_t dim, std::string& out) {
  if (dim == shape.size()) {
    out += format_float(*data);
    return;
  }
  std::size_t stride = 1;
  for (std::size_t k = dim + 1; k < shape.size(); ++k) stride *= shape[k];
  out += "[";
  for (std::size_t i = 0; i < shape[dim]; ++i) {
    if (i) out += ", ";
    dense_str(data + i * stride, shape, dim + 1, out);
  }
  out += "]";
}

}  // namespace

std::string Value::str() const {
  switch (kind()) {
    case Kind::None: return "None";
    case Kind::Float: return format_float(std::get<double>(v_));
    case Kind::Int: return std::to_string(std::get<std::int64_t>(v_));
    case Kind::Bool: return std::get<bool>(v_) ? "True" : "False";
    case Kind::Zero: return "ZeroGrad";
    case Kind::Dense: {
      const Dense& d = std::get<Dense>(v_);
      std::string out;
      dense_str(d.data(), d.shape(), 0, out);
      return out;
    }
    case Kind::PArray: {
      auto arr = pa::pa_checkout(std::get<pa::Handle>(v_));
      Dense d(arr.shape, arr.data);
      return "parray(" + Value::dense(std::move(d)).str() + ")";
    }
    case Kind::Tuple: {
      const auto& items = as_tuple();
      std::string out = "(";
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += items[i].str();
      }
      if (items.size() == 1) out += ",";
      return out + ")";
    }
  }
  return "?";
}

bool identical(const Value& a, const Value& b) {
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Value::Kind::None:
    case Value::Kind::Zero: return true;
    case Value::Kind::Float: {
      double x = a.as_float(), y = b.as_float();
      return std::memcmp(&x, &y, sizeof x) == 0;
    }
    case Value::Kind::Int: return a.as_int() == b.as_int();
    case Value::Kind::Bool: return a.as_bool() == b.as_bool();
    case Value::Kind::Dense:
    case Value::Kind::PArray: {
      Dense x = to_dense(a), y = to_dense(b);
      return x.shape() == y.shape() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
    }
    case Value::Kind::Tuple: {
      const auto& x = a.as_tuple();
      const auto& y = b.as_tuple();
      if (x.size() != y.size()) return false;
      for (std::size_t i = 0; i < x.size(); ++i)
        if (!identical(x[i], y[i])) return false;
      return true;
    }
  }
  return false;
}

Dense to_dense(const Value& v) {
  if (v.is_dense()) return v.as_dense();
  if (v.is_parray()) {
    auto arr = pa::pa_checkout(v.as_parray());
    return Dense(arr.shape, arr.data);
  }
  throw EvalError(fmt::format("expected an array, got {}", v.kind_name()));
}

Shape shape_of(const Value& v) {
  if (v.is_dense()) return v.as_dense().shape();
  if (v.is_parray()) return v.as_parray().shape();
  if (v.is_number() || v.is_bool()) return {};
  throw EvalError(fmt::format("{} has no shape", v.kind_name()));
}

}  // namespace gradc::rt
