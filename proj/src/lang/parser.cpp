#include "gradc/parser.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <optional>
#include <set>

#include <fmt/format.h>

namespace gradc::lang {

SyntaxError::SyntaxError(int line, int column, const std::string& message)
    : Error(fmt::format("line {}, column {}: {}", line, column, message)), line_(line), column_(column) {}

namespace {

enum class Tok { Name, Int, Float, String, Op, Newline, Indent, Dedent, Comment, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int col;
};

const std::set<std::string>& keywords() {
  static const std::set<std::string> kw = {
      "def",    "if",     "elif",   "else",   "while",  "for",      "in",    "return", "with",  "as",
      "pass",   "break",  "continue", "try",  "except", "finally",  "class", "lambda", "import", "from",
      "global", "nonlocal", "del",  "yield",  "raise",  "assert",   "and",   "or",     "not",   "is",
      "True",   "False",  "None",   "async",  "await"};
  return kw;
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) {
    std::size_t start = 0;
    while (start <= src.size()) {
      auto end = src.find('\n', start);
      if (end == std::string_view::npos) end = src.size();
      std::string line(src.substr(start, end - start));
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines_.push_back(std::move(line));
      start = end + 1;
    }
  }

  const std::vector<std::string>& lines() const { return lines_; }

  std::vector<Token> run() {
    std::vector<int> stack{0};
    bool opened_block = false;
    std::vector<Token> pending_comments;

    for (std::size_t li = 0; li < lines_.size(); ++li) {
      const std::string& text = lines_[li];
      const int lineno = static_cast<int>(li) + 1;
      std::size_t pos = 0;

      if (depth_ == 0) {
        int indent = 0;
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) {
          if (text[pos] == '\t') throw SyntaxError(lineno, static_cast<int>(pos) + 1, "tab in indentation");
          ++indent;
          ++pos;
        }
        if (pos == text.size()) continue;

        if (text[pos] == '#') {
          Token c{Tok::Comment, comment_text(text.substr(pos + 1)), lineno, static_cast<int>(pos) + 1};
          if (opened_block) {
            if (indent > stack.back()) {
              stack.push_back(indent);
              emit(Tok::Indent, "", lineno, 1);
              opened_block = false;
            } else {
              // Comment between a block opener and its first statement at a
              // shallower column: it belongs inside the block.
              pending_comments.push_back(std::move(c));
              continue;
            }
          } else if (indent < stack.back()) {
            while (stack.size() > 1 && stack.back() > indent) {
              stack.pop_back();
              emit(Tok::Dedent, "", lineno, 1);
            }
          }
          tokens_.push_back(std::move(c));
          emit(Tok::Newline, "", lineno, static_cast<int>(text.size()) + 1);
          continue;
        }

        if (indent > stack.back()) {
          if (!opened_block) throw SyntaxError(lineno, indent + 1, "unexpected indent");
          stack.push_back(indent);
          emit(Tok::Indent, "", lineno, 1);
        } else {
          if (opened_block) throw SyntaxError(lineno, indent + 1, "expected an indented block");
          while (stack.back() > indent) {
            stack.pop_back();
            emit(Tok::Dedent, "", lineno, 1);
          }
          if (stack.back() != indent) throw SyntaxError(lineno, indent + 1, "unindent does not match any outer level");
        }
        for (auto& c : pending_comments) {
          tokens_.push_back(std::move(c));
          emit(Tok::Newline, "", c.line, 1);
        }
        pending_comments.clear();
      }

      scan_line(text, pos, lineno);

      if (depth_ == 0) {
        opened_block = !tokens_.empty() && tokens_.back().kind == Tok::Op && tokens_.back().text == ":";
        emit(Tok::Newline, "", lineno, static_cast<int>(text.size()) + 1);
      }
    }
    const int last = static_cast<int>(lines_.size());
    if (depth_ > 0) throw SyntaxError(last, 1, "unexpected end of input inside brackets");
    if (opened_block) throw SyntaxError(last, 1, "expected an indented block");
    while (stack.size() > 1) {
      stack.pop_back();
      emit(Tok::Dedent, "", last, 1);
    }
    emit(Tok::End, "", last + 1, 1);
    return std::move(tokens_);
  }

 private:
  static std::string comment_text(std::string body) {
    if (!body.empty() && body.front() == ' ') body.erase(0, 1);
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.pop_back();
    return body;
  }

  void emit(Tok kind, std::string text, int line, int col) {
    tokens_.push_back(Token{kind, std::move(text), line, col});
  }

  void scan_line(const std::string& text, std::size_t pos, int lineno) {
    while (pos < text.size()) {
      const char ch = text[pos];
      const int col = static_cast<int>(pos) + 1;
      if (ch == ' ' || ch == '\t') {
        ++pos;
        continue;
      }
      if (ch == '#') break;
      if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
        std::size_t end = pos;
        while (end < text.size() && (std::isalnum(static_cast<unsigned char>(text[end])) || text[end] == '_')) ++end;
        emit(Tok::Name, text.substr(pos, end - pos), lineno, col);
        pos = end;
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(ch)) ||
          (ch == '.' && pos + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[pos + 1])))) {
        pos = scan_number(text, pos, lineno);
        continue;
      }
      if (ch == '\'' || ch == '"') {
        pos = scan_string(text, pos, lineno);
        continue;
      }
      static const char* two[] = {"<=", ">=", "==", "!=", "**", "//", "+=", "-=", "*=", "/=", "->", ":="};
      bool matched = false;
      for (const char* op : two) {
        if (text.compare(pos, 2, op) == 0) {
          emit(Tok::Op, op, lineno, col);
          pos += 2;
          matched = true;
          break;
        }
      }
      if (matched) continue;
      static const std::string singles = "+-*/<>=()[],:.@%{};&|^~!";
      if (singles.find(ch) == std::string::npos)
        throw SyntaxError(lineno, col, fmt::format("unexpected character '{}'", ch));
      if (ch == '(' || ch == '[' || ch == '{') ++depth_;
      if (ch == ')' || ch == ']' || ch == '}') {
        if (depth_ == 0) throw SyntaxError(lineno, col, fmt::format("unmatched '{}'", ch));
        --depth_;
      }
      emit(Tok::Op, std::string(1, ch), lineno, col);
      ++pos;
    }
  }

  std::size_t scan_number(const std::string& text, std::size_t pos, int lineno) {
    const std::size_t start = pos;
    bool is_float = false;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos < text.size() && text[pos] == '.') {
      is_float = true;
      ++pos;
      while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
      std::size_t p = pos + 1;
      if (p < text.size() && (text[p] == '+' || text[p] == '-')) ++p;
      if (p < text.size() && std::isdigit(static_cast<unsigned char>(text[p]))) {
        is_float = true;
        pos = p;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
      }
    }
    if (pos < text.size() && (std::isalpha(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      throw SyntaxError(lineno, static_cast<int>(pos) + 1, "invalid number literal");
    emit(is_float ? Tok::Float : Tok::Int, text.substr(start, pos - start), lineno, static_cast<int>(start) + 1);
    return pos;
  }

  std::size_t scan_string(const std::string& text, std::size_t pos, int lineno) {
    const char quote = text[pos];
    const int col = static_cast<int>(pos) + 1;
    std::string value;
    ++pos;
    while (true) {
      if (pos >= text.size()) throw SyntaxError(lineno, col, "unterminated string literal");
      char ch = text[pos];
      if (ch == quote) break;
      if (ch == '\\' && pos + 1 < text.size()) {
        char next = text[pos + 1];
        value += next == 'n' ? '\n' : next == 't' ? '\t' : next;
        pos += 2;
        continue;
      }
      value += ch;
      ++pos;
    }
    emit(Tok::String, value, lineno, col);
    return pos + 1;
  }

  std::vector<std::string> lines_;
  std::vector<Token> tokens_;
  int depth_ = 0;
};

// Raised for syntax the language recognizes but does not support. The
// statement parser turns it into an Unsupported node.
struct UnsupportedSyntax {
  std::string construct;
};

class Parser {
 public:
  Parser(std::vector<Token> tokens, const std::vector<std::string>& lines)
      : toks_(std::move(tokens)), lines_(lines) {}

  std::vector<Decorated> parse_all(bool allow_decorators) {
    std::vector<Decorated> out;
    std::set<std::string> seen;
    while (true) {
      skip_blank_top();
      if (peek().kind == Tok::End) break;
      Decorated d;
      if (allow_decorators && is_op("@")) {
        next();
        d.decorator = expect_name("decorator name").text;
        expect_op("(");
        d.argument = expect_name("decorator argument").text;
        expect_op(")");
        expect(Tok::Newline, "end of line");
        skip_blank_top();
      }
      if (!is_name("def")) {
        const auto& t = peek();
        throw SyntaxError(t.line, t.col, "expected a function definition at top level");
      }
      d.function = parse_funcdef();
      if (!allow_decorators && !seen.insert(d.function.name).second)
        throw SyntaxError(d.function.line, 1, fmt::format("duplicate function '{}'", d.function.name));
      out.push_back(std::move(d));
    }
    return out;
  }

 private:
  const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool is_op(std::string_view op, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return t.kind == Tok::Op && t.text == op;
  }
  bool is_name(std::string_view n, std::size_t ahead = 0) const {
    const auto& t = peek(ahead);
    return t.kind == Tok::Name && t.text == n;
  }
  [[noreturn]] void fail(const Token& t, const std::string& msg) const { throw SyntaxError(t.line, t.col, msg); }

  static std::string describe(const Token& t) {
    switch (t.kind) {
      case Tok::Newline: return "end of line";
      case Tok::Indent: return "indent";
      case Tok::Dedent: return "dedent";
      case Tok::End: return "end of input";
      case Tok::Comment: return "comment";
      default: return fmt::format("'{}'", t.text);
    }
  }

  const Token& expect(Tok kind, const char* what) {
    if (peek().kind != kind) fail(peek(), fmt::format("expected {}, found {}", what, describe(peek())));
    return next();
  }
  void expect_op(std::string_view op) {
    if (!is_op(op)) fail(peek(), fmt::format("expected '{}', found {}", op, describe(peek())));
    next();
  }
  const Token& expect_name(const char* what) {
    const auto& t = peek();
    if (t.kind != Tok::Name || keywords().count(t.text))
      fail(t, fmt::format("expected {}, found {}", what, describe(t)));
    return next();
  }

  void skip_blank_top() {
    while (peek().kind == Tok::Newline || peek().kind == Tok::Comment) next();
  }

  FunctionDef parse_funcdef() {
    const Token& kw = next();
    FunctionDef f;
    f.line = kw.line;
    f.name = expect_name("function name").text;
    expect_op("(");
    if (!is_op(")")) {
      while (true) {
        Param p;
        p.name = expect_name("parameter name").text;
        if (is_op("=")) {
          next();
          p.default_value = parse_expr_strict();
        }
        f.params.push_back(std::move(p));
        if (is_op(",")) {
          next();
          continue;
        }
        break;
      }
    }
    expect_op(")");
    expect_op(":");
    expect(Tok::Newline, "end of line");
    f.body = parse_block();
    return f;
  }

  // Expressions in positions where unsupported syntax cannot be recovered
  // (parameter defaults) are plain syntax errors.
  Expr parse_expr_strict() {
    const Token& start = peek();
    try {
      return parse_expr();
    } catch (const UnsupportedSyntax& u) {
      fail(start, "unsupported syntax: " + u.construct);
    }
  }

  Block parse_block() {
    expect(Tok::Indent, "an indented block");
    Block body;
    while (peek().kind != Tok::Dedent && peek().kind != Tok::End) {
      if (peek().kind == Tok::Newline) {
        next();
        continue;
      }
      if (auto s = parse_statement()) body.push_back(std::move(*s));
    }
    if (peek().kind == Tok::Dedent) next();
    return body;
  }

  std::optional<Stmt> parse_statement() {
    const std::size_t start = pos_;
    const int line = peek().line;
    try {
      auto s = parse_statement_inner();
      if (s) s->line = line;
      return s;
    } catch (const UnsupportedSyntax& u) {
      return recover_unsupported(start, u.construct);
    }
  }

  Stmt recover_unsupported(std::size_t start, const std::string& construct) {
    pos_ = start;
    const int first_line = peek().line;
    int last_line = first_line;
    int depth = 0;
    bool last_colon = false;
    while (peek().kind != Tok::End) {
      const Token& t = peek();
      if (t.kind == Tok::Newline) break;
      last_line = t.line;
      last_colon = t.kind == Tok::Op && t.text == ":";
      if (t.kind == Tok::Op && (t.text == "(" || t.text == "[" || t.text == "{")) ++depth;
      if (t.kind == Tok::Op && (t.text == ")" || t.text == "]" || t.text == "}")) --depth;
      next();
    }
    if (peek().kind == Tok::Newline) next();
    if (last_colon && peek().kind == Tok::Indent) {
      int level = 0;
      do {
        const Token& t = next();
        if (t.kind == Tok::Indent) ++level;
        if (t.kind == Tok::Dedent) --level;
        if (t.kind != Tok::Dedent && t.kind != Tok::Newline && t.kind != Tok::Indent) last_line = t.line;
      } while (level > 0 && peek().kind != Tok::End);
    }
    Unsupported u;
    u.construct = construct;
    std::size_t strip = std::string::npos;
    for (int l = first_line; l <= last_line; ++l) {
      const std::string& text = lines_[static_cast<std::size_t>(l - 1)];
      if (text.find_first_not_of(' ') == std::string::npos) continue;
      std::size_t indent = text.find_first_not_of(' ');
      if (strip == std::string::npos) strip = indent;
      std::string kept = text.substr(std::min(indent, strip));
      while (!kept.empty() && kept.back() == ' ') kept.pop_back();
      u.lines.push_back(std::move(kept));
    }
    return make_stmt(std::move(u), first_line);
  }

  std::optional<Stmt> parse_statement_inner() {
    const Token& t = peek();
    if (t.kind == Tok::Comment) {
      std::string text = next().text;
      expect(Tok::Newline, "end of line");
      return comment(std::move(text));
    }
    if (t.kind == Tok::Indent) fail(t, "unexpected indent");
    if (t.kind == Tok::Name) {
      const std::string& kw = t.text;
      if (kw == "if") return parse_if();
      if (kw == "while") {
        next();
        Expr cond = parse_expr();
        expect_op(":");
        expect(Tok::Newline, "end of line");
        return make_stmt(While{std::move(cond), parse_block()});
      }
      if (kw == "for") return parse_for();
      if (kw == "with") return parse_with();
      if (kw == "return") {
        next();
        if (peek().kind == Tok::Newline) throw UnsupportedSyntax{"return without a value"};
        std::vector<Expr> values;
        values.push_back(parse_expr());
        while (is_op(",")) {
          next();
          values.push_back(parse_expr());
        }
        expect(Tok::Newline, "end of line");
        return ret(std::move(values));
      }
      if (kw == "pass") {
        next();
        expect(Tok::Newline, "end of line");
        return std::nullopt;
      }
      if (kw == "elif" || kw == "else") fail(t, fmt::format("'{}' without a matching 'if'", kw));
      if (kw == "def") throw UnsupportedSyntax{"nested function definition"};
      if (kw == "break" || kw == "continue" || kw == "try" || kw == "class" || kw == "import" || kw == "from" ||
          kw == "global" || kw == "nonlocal" || kw == "del" || kw == "yield" || kw == "raise" || kw == "assert" ||
          kw == "async" || kw == "lambda" || kw == "except" || kw == "finally")
        throw UnsupportedSyntax{fmt::format("'{}' statement", kw)};
    }
    if (t.kind == Tok::Op && t.text == "@") throw UnsupportedSyntax{"decorator"};

    Expr lhs = parse_expr();
    if (is_op(",")) throw UnsupportedSyntax{"tuple unpacking"};
    if (is_op("+=") || is_op("-=") || is_op("*=") || is_op("/=")) throw UnsupportedSyntax{"augmented assignment"};
    if (is_op(":")) throw UnsupportedSyntax{"annotated assignment"};
    if (is_op("=")) {
      const Token& eq = next();
      Expr value = parse_expr();
      if (is_op("=")) throw UnsupportedSyntax{"chained assignment"};
      if (is_op(",")) throw UnsupportedSyntax{"tuple value"};
      expect(Tok::Newline, "end of line");
      if (auto* n = lhs.get_if<Name>()) return assign(n->id, std::move(value));
      if (auto* ix = lhs.get_if<Index>()) {
        if (auto* base = ix->base->get_if<Name>())
          return make_stmt(IndexAssign{base->id, *ix->index, std::move(value)});
        throw UnsupportedSyntax{"nested index assignment"};
      }
      fail(eq, "cannot assign to expression");
    }
    expect(Tok::Newline, "end of line");
    return expr_stmt(std::move(lhs));
  }

  Stmt parse_if() {
    next();
    Expr cond = parse_expr();
    expect_op(":");
    expect(Tok::Newline, "end of line");
    If node{std::move(cond), parse_block(), {}};
    if (is_name("elif")) {
      const int line = peek().line;
      Stmt nested = parse_if();
      nested.line = line;
      node.else_body.push_back(std::move(nested));
    } else if (is_name("else")) {
      next();
      expect_op(":");
      expect(Tok::Newline, "end of line");
      node.else_body = parse_block();
    }
    return make_stmt(std::move(node));
  }

  Stmt parse_for() {
    next();
    if (peek().kind != Tok::Name || keywords().count(peek().text)) throw UnsupportedSyntax{"for-loop target"};
    std::string var = next().text;
    if (is_op(",")) throw UnsupportedSyntax{"tuple unpacking"};
    if (!is_name("in")) fail(peek(), "expected 'in'");
    next();
    if (!is_name("range") || !is_op("(", 1)) throw UnsupportedSyntax{"iteration over a non-range"};
    next();
    next();
    Expr count = parse_expr();
    if (is_op(",")) throw UnsupportedSyntax{"range with start or step"};
    expect_op(")");
    expect_op(":");
    expect(Tok::Newline, "end of line");
    return make_stmt(ForRange{std::move(var), std::move(count), parse_block()});
  }

  Stmt parse_with() {
    next();
    if (!is_name("insert_grad_of") || !is_op("(", 1)) throw UnsupportedSyntax{"with statement"};
    next();
    next();
    if (peek().kind != Tok::Name) throw UnsupportedSyntax{"with statement"};
    std::string var = next().text;
    if (!is_op(")")) throw UnsupportedSyntax{"with statement"};
    next();
    if (!is_name("as")) throw UnsupportedSyntax{"with statement"};
    next();
    std::string alias = expect_name("alias name").text;
    expect_op(":");
    expect(Tok::Newline, "end of line");
    return make_stmt(InsertGradOf{std::move(var), std::move(alias), parse_block()});
  }

  Expr parse_expr() {
    Expr lhs = parse_additive();
    if (auto op = comparison_op()) {
      next();
      Expr rhs = parse_additive();
      if (comparison_op()) throw UnsupportedSyntax{"chained comparison"};
      lhs = binop(*op, std::move(lhs), std::move(rhs));
    }
    if (is_op("!=")) throw UnsupportedSyntax{"'!=' operator"};
    if (is_name("and") || is_name("or")) throw UnsupportedSyntax{"boolean operator"};
    if (is_name("if")) throw UnsupportedSyntax{"conditional expression"};
    if (is_name("in") || is_name("is")) throw UnsupportedSyntax{fmt::format("'{}' operator", peek().text)};
    return lhs;
  }

  std::optional<BinOpKind> comparison_op() const {
    const auto& t = peek();
    if (t.kind != Tok::Op) return std::nullopt;
    if (t.text == "<") return BinOpKind::Lt;
    if (t.text == ">") return BinOpKind::Gt;
    if (t.text == "<=") return BinOpKind::Le;
    if (t.text == ">=") return BinOpKind::Ge;
    if (t.text == "==") return BinOpKind::Eq;
    return std::nullopt;
  }

  Expr parse_additive() {
    Expr lhs = parse_multiplicative();
    while (is_op("+") || is_op("-")) {
      BinOpKind op = next().text == "+" ? BinOpKind::Add : BinOpKind::Sub;
      lhs = binop(op, std::move(lhs), parse_multiplicative());
    }
    if (is_op("&") || is_op("|") || is_op("^")) throw UnsupportedSyntax{"bitwise operator"};
    return lhs;
  }

  Expr parse_multiplicative() {
    Expr lhs = parse_unary();
    while (true) {
      if (is_op("*") || is_op("/")) {
        BinOpKind op = next().text == "*" ? BinOpKind::Mul : BinOpKind::Div;
        lhs = binop(op, std::move(lhs), parse_unary());
        continue;
      }
      if (is_op("//") || is_op("%") || is_op("@"))
        throw UnsupportedSyntax{fmt::format("'{}' operator", peek().text)};
      break;
    }
    return lhs;
  }

  Expr parse_unary() {
    if (is_op("-")) {
      next();
      const auto& t = peek();
      if ((t.kind == Tok::Int || t.kind == Tok::Float) && !is_op("[", 1) && !is_op("(", 1) && !is_op("**", 1)) {
        Expr lit = parse_postfix();
        if (auto* f = lit.get_if<FloatLit>()) return float_lit(-f->value);
        return int_lit(-lit.as<IntLit>().value);
      }
      return neg(parse_unary());
    }
    if (is_op("+")) throw UnsupportedSyntax{"unary plus"};
    if (is_op("~")) throw UnsupportedSyntax{"bitwise operator"};
    if (is_name("not")) throw UnsupportedSyntax{"boolean operator"};
    Expr e = parse_postfix();
    if (is_op("**")) throw UnsupportedSyntax{"'**' operator"};
    return e;
  }

  Expr parse_postfix() {
    Expr e = parse_atom();
    while (true) {
      if (is_op("[")) {
        next();
        if (is_op(":")) throw UnsupportedSyntax{"slice"};
        Expr idx = parse_expr();
        if (is_op(":")) throw UnsupportedSyntax{"slice"};
        if (is_op(",")) throw UnsupportedSyntax{"multi-dimensional index"};
        expect_op("]");
        e = index(std::move(e), std::move(idx));
        continue;
      }
      if (is_op(".")) throw UnsupportedSyntax{"attribute access"};
      if (is_op("(")) throw UnsupportedSyntax{"call of a computed value"};
      break;
    }
    return e;
  }

  Expr parse_atom() {
    const Token& t = peek();
    switch (t.kind) {
      case Tok::Int: {
        next();
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
        if (ec != std::errc()) fail(t, "integer literal out of range");
        return int_lit(v);
      }
      case Tok::Float: {
        next();
        return float_lit(std::strtod(t.text.c_str(), nullptr));
      }
      case Tok::String: {
        next();
        return str_lit(t.text);
      }
      case Tok::Name: {
        if (t.text == "True" || t.text == "False") {
          next();
          return bool_lit(t.text == "True");
        }
        if (t.text == "None") {
          next();
          return none_lit();
        }
        if (t.text == "lambda") throw UnsupportedSyntax{"lambda"};
        if (keywords().count(t.text)) fail(t, fmt::format("unexpected keyword '{}'", t.text));
        std::string id = next().text;
        if (is_op("(")) {
          next();
          std::vector<Expr> args;
          if (!is_op(")")) {
            while (true) {
              if (is_op("*") || is_op("**")) throw UnsupportedSyntax{"star argument"};
              if (peek().kind == Tok::Name && is_op("=", 1)) throw UnsupportedSyntax{"keyword argument"};
              args.push_back(parse_expr());
              if (is_op(",")) {
                next();
                continue;
              }
              break;
            }
          }
          expect_op(")");
          return call(std::move(id), std::move(args));
        }
        return name(std::move(id));
      }
      case Tok::Op: {
        if (t.text == "(") {
          next();
          if (is_op(")")) throw UnsupportedSyntax{"tuple literal"};
          Expr inner = parse_expr();
          if (is_op(",")) throw UnsupportedSyntax{"tuple literal"};
          expect_op(")");
          return inner;
        }
        if (t.text == "[") throw UnsupportedSyntax{"list literal"};
        if (t.text == "{") throw UnsupportedSyntax{"dict or set literal"};
        break;
      }
      default: break;
    }
    fail(t, fmt::format("expected an expression, found {}", describe(t)));
  }

  std::vector<Token> toks_;
  const std::vector<std::string>& lines_;
  std::size_t pos_ = 0;
};

std::vector<Decorated> parse_impl(std::string_view source, bool decorators) {
  Lexer lexer(source);
  auto tokens = lexer.run();
  Parser parser(std::move(tokens), lexer.lines());
  return parser.parse_all(decorators);
}

}  // namespace

Program parse(std::string_view source) {
  Program p;
  for (auto& d : parse_impl(source, false)) p.functions.push_back(std::move(d.function));
  return p;
}

std::vector<Decorated> parse_decorated(std::string_view source) { return parse_impl(source, true); }

}  // namespace gradc::lang
