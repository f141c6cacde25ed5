#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "gradc/ast.hpp"

namespace gradc::lang {

class SyntaxError : public Error {
 public:
  SyntaxError(int line, int column, const std::string& message);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Parse a source file. Only function definitions may appear at top level;
/// top-level comments are dropped.
Program parse(std::string_view source);

/// A function preceded by a single `@name(arg)` decorator line. Used for
/// template files.
struct Decorated {
  std::string decorator;
  std::string argument;
  FunctionDef function;
};

std::vector<Decorated> parse_decorated(std::string_view source);

}  // namespace gradc::lang
