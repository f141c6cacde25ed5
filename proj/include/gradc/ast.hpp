#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "gradc/util.hpp"

namespace gradc::lang {

enum class BinOpKind { Add, Sub, Mul, Div, Lt, Gt, Le, Ge, Eq };

const char* binop_symbol(BinOpKind op);
bool is_comparison(BinOpKind op);
/// Kernel name an arithmetic operator dispatches to ("+" -> "add").
const char* binop_kernel(BinOpKind op);

struct Expr;

struct Name {
  std::string id;
  bool operator==(const Name&) const = default;
};
struct FloatLit {
  double value;
  bool operator==(const FloatLit&) const = default;
};
struct IntLit {
  std::int64_t value;
  bool operator==(const IntLit&) const = default;
};
struct BoolLit {
  bool value;
  bool operator==(const BoolLit&) const = default;
};
/// Only legal as a tape label or a print argument.
struct StrLit {
  std::string value;
  bool operator==(const StrLit&) const = default;
};
struct NoneLit {
  bool operator==(const NoneLit&) const = default;
};
struct BinOp {
  BinOpKind op;
  Box<Expr> lhs;
  Box<Expr> rhs;
  bool operator==(const BinOp&) const = default;
};
struct Neg {
  Box<Expr> operand;
  bool operator==(const Neg&) const = default;
};
struct Call {
  std::string callee;
  std::vector<Expr> args;
  bool operator==(const Call&) const;
};
struct Index {
  Box<Expr> base;
  Box<Expr> index;
  bool operator==(const Index&) const = default;
};

struct Expr {
  using Node = std::variant<Name, FloatLit, IntLit, BoolLit, StrLit, NoneLit, BinOp, Neg, Call, Index>;
  Node node;

  bool operator==(const Expr&) const = default;

  template <typename T>
  bool is() const {
    return std::holds_alternative<T>(node);
  }
  template <typename T>
  const T& as() const {
    return std::get<T>(node);
  }
  template <typename T>
  T& as() {
    return std::get<T>(node);
  }
  template <typename T>
  const T* get_if() const {
    return std::get_if<T>(&node);
  }
  bool is_literal() const;
  bool is_atom() const { return is<Name>() || is_literal(); }
};

Expr name(std::string id);
Expr float_lit(double v);
Expr int_lit(std::int64_t v);
Expr bool_lit(bool v);
Expr str_lit(std::string v);
Expr none_lit();
Expr binop(BinOpKind op, Expr lhs, Expr rhs);
Expr neg(Expr operand);
Expr call(std::string callee, std::vector<Expr> args);
Expr index(Expr base, Expr idx);

struct Stmt;
using Block = std::vector<Stmt>;

struct Assign {
  std::string target;
  Expr value;
  bool operator==(const Assign&) const = default;
};
struct IndexAssign {
  std::string target;
  Expr index;
  Expr value;
  bool operator==(const IndexAssign&) const = default;
};
struct If {
  Expr cond;
  Block then_body;
  Block else_body;
  bool operator==(const If&) const;
};
struct While {
  Expr cond;
  Block body;
  bool operator==(const While&) const;
};
struct ForRange {
  std::string var;
  Expr count;
  Block body;
  bool operator==(const ForRange&) const;
};
struct Return {
  std::vector<Expr> values;
  bool operator==(const Return&) const = default;
};
struct ExprStmt {
  Expr expr;
  bool operator==(const ExprStmt&) const = default;
};
struct InsertGradOf {
  std::string var;
  std::string alias;
  Block body;
  bool operator==(const InsertGradOf&) const;
};
struct Comment {
  std::string text;
  bool operator==(const Comment&) const = default;
};
/// Syntax the parser recognized but the language does not support (break,
/// try, keyword arguments, ...). Kept so the validator can report it.
struct Unsupported {
  std::string construct;
  std::vector<std::string> lines;
  bool operator==(const Unsupported&) const = default;
};

struct Stmt {
  using Node = std::variant<Assign, IndexAssign, If, While, ForRange, Return, ExprStmt, InsertGradOf, Comment,
                            Unsupported>;
  Node node;
  int line = 0;
  /// Pinned statements are never removed by the optimizer (inserted
  /// gradient code).
  bool pinned = false;

  // Structural identity: source positions and pins do not participate.
  bool operator==(const Stmt& o) const { return node == o.node; }

  template <typename T>
  bool is() const {
    return std::holds_alternative<T>(node);
  }
  template <typename T>
  const T& as() const {
    return std::get<T>(node);
  }
  template <typename T>
  T& as() {
    return std::get<T>(node);
  }
  template <typename T>
  const T* get_if() const {
    return std::get_if<T>(&node);
  }
  template <typename T>
  T* get_if() {
    return std::get_if<T>(&node);
  }
};

template <typename T>
Stmt make_stmt(T node, int line = 0) {
  return Stmt{Stmt::Node{std::move(node)}, line, false};
}
Stmt assign(std::string target, Expr value);
Stmt expr_stmt(Expr e);
Stmt comment(std::string text);
Stmt ret(std::vector<Expr> values);

struct Param {
  std::string name;
  std::optional<Expr> default_value;
  bool operator==(const Param&) const = default;
};

struct FunctionDef {
  std::string name;
  std::vector<Param> params;
  Block body;
  int line = 0;

  bool operator==(const FunctionDef& o) const {
    return name == o.name && params == o.params && body == o.body;
  }
  std::vector<std::string> param_names() const;
};

struct Program {
  std::vector<FunctionDef> functions;

  bool operator==(const Program&) const = default;
  const FunctionDef* find(std::string_view name) const;
  FunctionDef* find(std::string_view name);
};

// ---------------------------------------------------------------------------
// Traversal helpers shared by the analyses and transforms.

/// Every Name referenced by an expression (callee names excluded).
void collect_names(const Expr& e, std::set<std::string>& out);
/// Every Name read by a statement, including nested blocks.
void collect_uses(const Stmt& s, std::set<std::string>& out);
/// Every variable written by a statement, including nested blocks.
void collect_defs(const Stmt& s, std::set<std::string>& out);
/// Every identifier appearing anywhere in the function (params, targets, uses).
std::set<std::string> all_identifiers(const FunctionDef& f);
/// Calls made anywhere inside the expression, outermost first.
void collect_calls(const Expr& e, std::vector<const Call*>& out);

/// Rename Names (not callees) according to the mapping.
Expr rename(const Expr& e, const std::map<std::string, std::string>& mapping);
void rename_in_place(Stmt& s, const std::map<std::string, std::string>& mapping);

/// Visit every statement in a block recursively (pre-order).
void for_each_stmt(const Block& b, const std::function<void(const Stmt&)>& fn);
void for_each_stmt(Block& b, const std::function<void(Stmt&)>& fn);

}  // namespace gradc::lang
