#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace gradc::pa {

/// Dense row-major array, the materialized form of a version.
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t row_size() const;
  bool operator==(const Array&) const = default;
};

struct Stats {
  std::atomic<std::uint64_t> deltas_applied{0};
  std::atomic<std::uint64_t> bytes_allocated{0};
  std::atomic<std::int64_t> bytes_live{0};

  void reset() {
    deltas_applied = 0;
    bytes_allocated = 0;
    bytes_live = 0;
  }
};

/// Process-wide instrumentation counters.
Stats& stats();

struct Tree;
struct Node;

/// Reference-counted handle to one version of a persistent array. Copies
/// share the version; the version is collected once no handle (and no
/// descendant version) needs it.
class Handle {
 public:
  Handle() = default;
  Handle(const Handle& other);
  Handle(Handle&& other) noexcept;
  Handle& operator=(const Handle& other);
  Handle& operator=(Handle&& other) noexcept;
  ~Handle();

  bool live() const { return node_ != nullptr; }
  /// Drops this handle. Throws std::logic_error if already released.
  void release();

  /// Shape of this version; O(1), does not move the materialized copy.
  std::vector<std::size_t> shape() const;
  std::size_t rows() const;
  /// Identity of the version (equal handles designate the same version).
  bool same_version(const Handle& other) const { return node_ == other.node_; }
  bool is_root() const;
  /// Number of versions currently stored in this handle's tree.
  std::size_t tree_size() const;

 private:
  friend Handle pa_new(Array a);
  friend Handle pa_setitem(const Handle& h, std::int64_t i, std::span<const double> row);
  friend Handle pa_append(const Handle& h, std::span<const double> row);
  friend Handle pa_drop_last(const Handle& h);
  friend Array pa_checkout(const Handle& h);
  friend std::vector<double> pa_row(const Handle& h, std::int64_t i);

  Handle(std::shared_ptr<Tree> tree, Node* node);
  void check_live() const;

  std::shared_ptr<Tree> tree_;
  Node* node_ = nullptr;
};

/// New tree whose root holds a copy of `a`. Throws for zero-dimensional input.
Handle pa_new(Array a);
/// Child version with row i replaced (negative i counts from the end).
Handle pa_setitem(const Handle& h, std::int64_t i, std::span<const double> row);
Handle pa_append(const Handle& h, std::span<const double> row);
Handle pa_drop_last(const Handle& h);
/// Dense copy of the version; reroots the tree at it.
Array pa_checkout(const Handle& h);
/// Copy of a single row; reroots the tree at the version.
std::vector<double> pa_row(const Handle& h, std::int64_t i);
void pa_release(Handle& h);

}  // namespace gradc::pa
