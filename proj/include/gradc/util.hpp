#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace gradc {

/// Base class of every error raised by the compiler and runtime.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Copyable owning pointer with value semantics, used to build recursive AST
/// nodes out of std::variant.
template <typename T>
class Box {
 public:
  Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}  // NOLINT
  Box(const Box& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
  Box(Box&&) noexcept = default;
  Box& operator=(const Box& other) {
    if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
    return *this;
  }
  Box& operator=(Box&&) noexcept = default;
  ~Box() = default;

  T& operator*() { return *ptr_; }
  const T& operator*() const { return *ptr_; }
  T* operator->() { return ptr_.get(); }
  const T* operator->() const { return ptr_.get(); }

  friend bool operator==(const Box& a, const Box& b) { return *a.ptr_ == *b.ptr_; }

 private:
  std::unique_ptr<T> ptr_;
};

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

/// Shortest round-trip decimal representation of a double, always carrying a
/// decimal point or exponent so it re-parses as a float ("6.0", "1e-05").
std::string format_float(double v);

/// 32-bit FNV-1a hash; used for deterministic tape labels.
std::uint32_t fnv1a(std::string_view text);

}  // namespace gradc
