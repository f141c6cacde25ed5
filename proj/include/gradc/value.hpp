#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "gradc/pa.hpp"
#include "gradc/util.hpp"

namespace gradc::rt {

/// Runtime failure of a kernel or of the evaluator (type errors, shape
/// mismatches, bad indices).
class EvalError : public Error {
 public:
  using Error::Error;
};

/// Counters for dense buffer memory, readable by tests and the benchmark.
struct AllocStats {
  std::atomic<std::int64_t> live_bytes{0};
  std::atomic<std::int64_t> high_water{0};
  std::atomic<std::uint64_t> total_bytes{0};
  std::atomic<std::uint64_t> allocations{0};
  /// Dense arrays created only to hold zeros (zeros, zeros_like, densified
  /// lazy gradients).
  std::atomic<std::uint64_t> zero_fills{0};

  void reset();
};

AllocStats& alloc_stats();

template <typename T>
struct CountingAllocator {
  using value_type = T;
  CountingAllocator() = default;
  template <typename U>
  CountingAllocator(const CountingAllocator<U>&) {}  // NOLINT

  T* allocate(std::size_t n);
  void deallocate(T* p, std::size_t n) noexcept;
  template <typename U>
  bool operator==(const CountingAllocator<U>&) const {
    return true;
  }
};

void note_alloc(std::size_t bytes);
void note_free(std::size_t bytes) noexcept;

template <typename T>
T* CountingAllocator<T>::allocate(std::size_t n) {
  note_alloc(n * sizeof(T));
  return std::allocator<T>().allocate(n);
}

template <typename T>
void CountingAllocator<T>::deallocate(T* p, std::size_t n) noexcept {
  note_free(n * sizeof(T));
  std::allocator<T>().deallocate(p, n);
}

using Buffer = std::vector<double, CountingAllocator<double>>;
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

/// N-dimensional float array with copy-on-write storage: copies share the
/// buffer until one of them is written.
class Dense {
 public:
  Dense() : Dense(Shape{0}) {}
  explicit Dense(Shape shape);  // uninitialized contents
  Dense(Shape shape, const std::vector<double>& values);
  static Dense filled(Shape shape, double v);
  static Dense zeros(Shape shape);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return buf_->size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t row_size() const;

  const double* data() const { return buf_->data(); }
  /// Writable view; clones the buffer first when it is shared.
  double* mutable_data();
  bool unique() const { return buf_.use_count() == 1; }
  Dense clone() const;
  std::vector<double> to_vector() const { return {buf_->begin(), buf_->end()}; }

  /// Shrink the leading dimension in place (after ensuring uniqueness).
  void truncate_rows(std::size_t rows);
  void reshape(Shape s);

 private:
  Shape shape_;
  std::shared_ptr<Buffer> buf_;
};

struct ZeroGrad {};
struct NoneValue {};

class Value;
using Tuple = std::shared_ptr<const std::vector<Value>>;

/// Dynamically typed runtime value.
class Value {
 public:
  enum class Kind { None, Float, Int, Bool, Dense, Zero, PArray, Tuple };

  Value() : v_(NoneValue{}) {}
  static Value none() { return Value(); }
  static Value flt(double d) { return Value(d); }
  static Value integer(std::int64_t i) { return Value(i); }
  static Value boolean(bool b) { return Value(b); }
  static Value zero() { return Value(ZeroGrad{}); }
  static Value dense(Dense d) { return Value(std::move(d)); }
  static Value parray(pa::Handle h) { return Value(std::move(h)); }
  static Value tuple(std::vector<Value> items);

  Kind kind() const { return static_cast<Kind>(v_.index()); }
  bool is_none() const { return kind() == Kind::None; }
  bool is_float() const { return kind() == Kind::Float; }
  bool is_int() const { return kind() == Kind::Int; }
  bool is_bool() const { return kind() == Kind::Bool; }
  bool is_dense() const { return kind() == Kind::Dense; }
  bool is_zero() const { return kind() == Kind::Zero; }
  bool is_parray() const { return kind() == Kind::PArray; }
  bool is_tuple() const { return kind() == Kind::Tuple; }
  /// Float or Int.
  bool is_number() const { return is_float() || is_int(); }

  double as_float() const;  // Float or Int
  std::int64_t as_int() const;
  bool as_bool() const;
  const Dense& as_dense() const;
  Dense& as_dense();
  const pa::Handle& as_parray() const;
  const std::vector<Value>& as_tuple() const;

  static const char* kind_name(Kind k);
  const char* kind_name() const { return kind_name(kind()); }
  std::string str() const;

 private:
  using Storage = std::variant<NoneValue, double, std::int64_t, bool, Dense, ZeroGrad, pa::Handle, Tuple>;
  template <typename T>
  explicit Value(T v) : v_(std::move(v)) {}

  Storage v_;
};

/// Bit-for-bit equality (same kinds, shapes and float bit patterns).
bool identical(const Value& a, const Value& b);

/// Dense contents of a Dense or PArray value (PArray is checked out).
Dense to_dense(const Value& v);
/// Shape of an array value; scalars have the empty shape.
Shape shape_of(const Value& v);

}  // namespace gradc::rt
