#pragma once

#include <string>

#include "gradc/ast.hpp"

namespace gradc::lang {

std::string emit_expr(const Expr& e);
/// One-line rendering of a simple statement, as used in "Grad of:" comments.
/// Compound statements render their header line only.
std::string emit_stmt_line(const Stmt& s);
std::string emit_block(const Block& b, int indent);
std::string emit_function(const FunctionDef& f);
/// Functions separated by one blank line; four-space indentation; LF endings.
std::string emit_source(const Program& p);

}  // namespace gradc::lang
