#include "gradc/pa.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>

namespace gradc::pa {

std::size_t Array::row_size() const {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin() + 1, shape.end(), std::size_t{1}, std::multiplies<>());
}

Stats& stats() {
  static Stats s;
  return s;
}

namespace {

// Applying a delta to the parent's array yields the child's array.
struct SetRow {
  std::size_t index;
  std::vector<double> from;
  std::vector<double> to;
};
struct AppendRow {
  std::vector<double> row;
};
struct DropLastRow {
  std::vector<double> row;
};
using Delta = std::variant<std::monostate, SetRow, AppendRow, DropLastRow>;

std::size_t payload_bytes(const Delta& d) {
  return std::visit(
      [](const auto& x) -> std::size_t {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, SetRow>) return (x.from.size() + x.to.size()) * sizeof(double);
        else if constexpr (std::is_same_v<T, std::monostate>) return 0;
        else return x.row.size() * sizeof(double);
      },
      d);
}

Delta invert(Delta d) {
  return std::visit(
      [](auto&& x) -> Delta {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, SetRow>) return SetRow{x.index, std::move(x.to), std::move(x.from)};
        else if constexpr (std::is_same_v<T, AppendRow>) return DropLastRow{std::move(x.row)};
        else if constexpr (std::is_same_v<T, DropLastRow>) return AppendRow{std::move(x.row)};
        else return std::monostate{};
      },
      std::move(d));
}

void account(std::int64_t live_delta, std::size_t allocated = 0) {
  stats().bytes_live += live_delta;
  stats().bytes_allocated += allocated;
}

}  // namespace

struct Node {
  Node* parent = nullptr;
  Delta delta;  // edge parent -> this
  std::vector<Node*> children;
  std::size_t handles = 0;
  std::size_t rows = 0;
};

struct Tree {
  Array array;  // contents of root
  Node* root = nullptr;
  std::vector<std::size_t> row_shape;
  std::size_t row_size = 0;
  std::unordered_map<Node*, std::unique_ptr<Node>> nodes;

  ~Tree() {
    std::int64_t freed = static_cast<std::int64_t>(array.data.size() * sizeof(double));
    for (auto& [n, owned] : nodes) freed += static_cast<std::int64_t>(payload_bytes(owned->delta));
    account(-freed);
  }

  Node* make_node(std::size_t rows) {
    auto owned = std::make_unique<Node>();
    Node* n = owned.get();
    n->rows = rows;
    nodes.emplace(n, std::move(owned));
    return n;
  }

  void detach(Node* child) {
    auto& siblings = child->parent->children;
    siblings.erase(std::find(siblings.begin(), siblings.end(), child));
  }

  void apply(const Delta& d) {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, SetRow>) {
            std::copy(x.to.begin(), x.to.end(), array.data.begin() + static_cast<std::ptrdiff_t>(x.index * row_size));
          } else if constexpr (std::is_same_v<T, AppendRow>) {
            array.data.insert(array.data.end(), x.row.begin(), x.row.end());
            ++array.shape[0];
            account(static_cast<std::int64_t>(x.row.size() * sizeof(double)), x.row.size() * sizeof(double));
          } else if constexpr (std::is_same_v<T, DropLastRow>) {
            array.data.resize(array.data.size() - row_size);
            --array.shape[0];
            account(-static_cast<std::int64_t>(row_size * sizeof(double)));
          }
        },
        d);
  }

  // Move the materialized array to `target`, inverting every edge on the way.
  void reroot(Node* target) {
    std::vector<Node*> path;
    for (Node* n = target; n != root; n = n->parent) path.push_back(n);
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      Node* child = *it;
      Node* old_root = child->parent;
      apply(child->delta);
      stats().deltas_applied++;
      detach(child);
      old_root->delta = invert(std::move(child->delta));
      child->delta = std::monostate{};
      old_root->parent = child;
      child->parent = nullptr;
      child->children.push_back(old_root);
      root = child;
    }
  }

  // Make a new root version derived from the (already rerooted) root by an
  // in-place change; `back` turns the new version into the old one.
  Node* push_root(Delta back, std::size_t rows) {
    Node* fresh = make_node(rows);
    const std::size_t bytes = payload_bytes(back);
    account(static_cast<std::int64_t>(bytes), bytes);
    root->parent = fresh;
    root->delta = std::move(back);
    fresh->children.push_back(root);
    root = fresh;
    return fresh;
  }

  void free_node(Node* n) {
    account(-static_cast<std::int64_t>(payload_bytes(n->delta)));
    nodes.erase(n);
  }

  // Drop versions no handle can reach any more, starting from n.
  void collect(Node* n) {
    while (n && n->handles == 0) {
      if (n != root && n->children.empty()) {
        Node* parent = n->parent;
        detach(n);
        free_node(n);
        n = parent;
        continue;
      }
      if (n == root && n->children.size() == 1) {
        Node* only = n->children.front();
        reroot(only);
        detach(n);
        free_node(n);
        n = only;
        continue;
      }
      break;
    }
  }
};

Handle::Handle(std::shared_ptr<Tree> tree, Node* node) : tree_(std::move(tree)), node_(node) { ++node_->handles; }

Handle::Handle(const Handle& other) : tree_(other.tree_), node_(other.node_) {
  if (node_) ++node_->handles;
}

Handle::Handle(Handle&& other) noexcept : tree_(std::move(other.tree_)), node_(other.node_) { other.node_ = nullptr; }

Handle& Handle::operator=(const Handle& other) {
  if (this != &other) {
    Handle copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Handle& Handle::operator=(Handle&& other) noexcept {
  if (this != &other) {
    if (node_) release();
    tree_ = std::move(other.tree_);
    node_ = other.node_;
    other.node_ = nullptr;
  }
  return *this;
}

Handle::~Handle() {
  if (node_) release();
}

void Handle::release() {
  if (!node_) throw std::logic_error("persistent array handle released twice");
  Node* n = node_;
  node_ = nullptr;
  --n->handles;
  tree_->collect(n);
  tree_.reset();
}

void Handle::check_live() const {
  if (!node_) throw std::logic_error("use of a released persistent array handle");
}

std::vector<std::size_t> Handle::shape() const {
  check_live();
  std::vector<std::size_t> s{node_->rows};
  s.insert(s.end(), tree_->row_shape.begin(), tree_->row_shape.end());
  return s;
}

std::size_t Handle::rows() const {
  check_live();
  return node_->rows;
}

bool Handle::is_root() const {
  check_live();
  return tree_->root == node_;
}

std::size_t Handle::tree_size() const {
  check_live();
  return tree_->nodes.size();
}

namespace {

std::size_t normalize(std::int64_t i, std::size_t rows) {
  const std::int64_t n = static_cast<std::int64_t>(rows);
  const std::int64_t k = i < 0 ? i + n : i;
  if (k < 0 || k >= n)
    throw std::out_of_range("row index " + std::to_string(i) + " out of range for " + std::to_string(rows) + " rows");
  return static_cast<std::size_t>(k);
}

void check_row(const Tree& t, std::span<const double> row) {
  if (row.size() != t.row_size)
    throw std::invalid_argument("row of " + std::to_string(row.size()) + " elements does not match row size " +
                                std::to_string(t.row_size));
}

}  // namespace

Handle pa_new(Array a) {
  if (a.shape.empty()) throw std::invalid_argument("persistent arrays need at least one dimension");
  auto tree = std::make_shared<Tree>();
  tree->row_shape.assign(a.shape.begin() + 1, a.shape.end());
  tree->row_size = a.row_size();
  const std::size_t bytes = a.data.size() * sizeof(double);
  account(static_cast<std::int64_t>(bytes), bytes);
  tree->array = std::move(a);
  tree->root = tree->make_node(tree->array.rows());
  return Handle(tree, tree->root);
}

Handle pa_setitem(const Handle& h, std::int64_t i, std::span<const double> row) {
  h.check_live();
  Tree& t = *h.tree_;
  check_row(t, row);
  t.reroot(h.node_);
  const std::size_t k = normalize(i, t.array.rows());
  auto begin = t.array.data.begin() + static_cast<std::ptrdiff_t>(k * t.row_size);
  SetRow back{k, std::vector<double>(row.begin(), row.end()), std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(t.row_size))};
  std::copy(row.begin(), row.end(), begin);
  return Handle(h.tree_, t.push_root(std::move(back), t.array.rows()));
}

Handle pa_append(const Handle& h, std::span<const double> row) {
  h.check_live();
  Tree& t = *h.tree_;
  check_row(t, row);
  t.reroot(h.node_);
  t.array.data.insert(t.array.data.end(), row.begin(), row.end());
  ++t.array.shape[0];
  const std::size_t bytes = row.size() * sizeof(double);
  account(static_cast<std::int64_t>(bytes), bytes);
  return Handle(h.tree_, t.push_root(DropLastRow{std::vector<double>(row.begin(), row.end())}, t.array.rows()));
}

Handle pa_drop_last(const Handle& h) {
  h.check_live();
  Tree& t = *h.tree_;
  t.reroot(h.node_);
  if (t.array.rows() == 0) throw std::out_of_range("drop_last on an array with no rows");
  auto begin = t.array.data.end() - static_cast<std::ptrdiff_t>(t.row_size);
  std::vector<double> row(begin, t.array.data.end());
  t.array.data.erase(begin, t.array.data.end());
  --t.array.shape[0];
  account(-static_cast<std::int64_t>(row.size() * sizeof(double)));
  return Handle(h.tree_, t.push_root(AppendRow{std::move(row)}, t.array.rows()));
}

Array pa_checkout(const Handle& h) {
  h.check_live();
  h.tree_->reroot(h.node_);
  return h.tree_->array;
}

std::vector<double> pa_row(const Handle& h, std::int64_t i) {
  h.check_live();
  Tree& t = *h.tree_;
  t.reroot(h.node_);
  const std::size_t k = normalize(i, t.array.rows());
  auto begin = t.array.data.begin() + static_cast<std::ptrdiff_t>(k * t.row_size);
  return std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(t.row_size));
}

void pa_release(Handle& h) { h.release(); }

}  // namespace gradc::pa
