#include <cctype>

#include <fmt/format.h>
#include <json.hpp>

#include "gradc/tools.hpp"

namespace gradc::tools {

using rt::Dense;
using rt::Value;

namespace {

void collect(const nlohmann::json& j, std::size_t depth, rt::Shape& shape, std::vector<double>& out) {
  if (j.is_array()) {
    if (depth == shape.size()) {
      if (!out.empty()) throw Error("array literal is not rectangular");
      shape.push_back(j.size());
    } else if (shape[depth] != j.size()) {
      throw Error("array literal is not rectangular");
    }
    for (const auto& x : j) collect(x, depth + 1, shape, out);
    return;
  }
  if (!j.is_number()) throw Error(fmt::format("array elements must be numbers, got {}", j.dump()));
  if (depth != shape.size()) throw Error("array literal is not rectangular");
  out.push_back(j.get<double>());
}

Value from_json(const nlohmann::json& j) {
  if (j.is_number_integer()) return Value::integer(j.get<std::int64_t>());
  if (j.is_number()) return Value::flt(j.get<double>());
  if (j.is_boolean()) return Value::boolean(j.get<bool>());
  if (j.is_null()) return Value::none();
  if (j.is_array()) {
    rt::Shape shape;
    std::vector<double> data;
    collect(j, 0, shape, data);
    return Value::dense(Dense(shape, data));
  }
  throw Error(fmt::format("unsupported argument literal {}", j.dump()));
}

// Generator spec parser.
class GenParser {
 public:
  GenParser(std::string_view text, std::mt19937_64& rng) : s_(text), rng_(rng) {}

  std::vector<Value> all() {
    std::vector<Value> out;
    skip();
    if (pos_ == s_.size()) return out;
    for (;;) {
      out.push_back(term());
      skip();
      if (pos_ == s_.size()) break;
      expect(';');
    }
    return out;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::mt19937_64& rng_;

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(fmt::format("input spec '{}': {} at offset {}", s_, what, pos_));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool peek(char c) {
    skip();
    return pos_ < s_.size() && s_[pos_] == c;
  }
  void expect(char c) {
    if (!peek(c)) fail(fmt::format("expected '{}'", c));
    ++pos_;
  }

  Value term() {
    Value v = primary();
    if (peek('*')) {
      ++pos_;
      v = scale(v, number());
    }
    return v;
  }

  double number() {
    skip();
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(std::string(s_.substr(pos_)), &used);
    } catch (const std::exception&) {
      fail("expected a number");
    }
    pos_ += used;
    return v;
  }

  Value primary() {
    skip();
    if (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string kind(s_.substr(start, pos_ - start));
      if (kind == "true" || kind == "false") return Value::boolean(kind == "true");
      expect('(');
      if (kind == "parray") {
        Value inner = term();
        expect(')');
        const Dense d = rt::to_dense(inner);
        return Value::parray(pa::pa_new(pa::Array{d.shape(), d.to_vector()}));
      }
      std::vector<std::size_t> dims;
      while (!peek(')')) {
        const double x = number();
        if (x < 1 || x != static_cast<double>(static_cast<std::size_t>(x))) fail("dimensions must be positive ints");
        dims.push_back(static_cast<std::size_t>(x));
        if (!peek(')')) expect(',');
      }
      expect(')');
      return generate(kind, dims);
    }
    // Literal up to the next top-level ';' or '*'.
    std::size_t start = pos_;
    int depth = 0;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '[') ++depth;
      if (c == ']') --depth;
      if (depth == 0 && (c == ';' || c == '*')) break;
      ++pos_;
    }
    try {
      return from_json(nlohmann::json::parse(s_.substr(start, pos_ - start)));
    } catch (const nlohmann::json::exception&) {
      fail("bad literal");
    }
  }

  Value generate(const std::string& kind, const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    std::vector<double> data(n, 0.0);
    if (kind == "normal") {
      std::normal_distribution<double> dist(0.0, 1.0);
      for (auto& x : data) x = dist(rng_);
    } else if (kind == "uniform") {
      std::uniform_real_distribution<double> dist(-1.0, 1.0);
      for (auto& x : data) x = dist(rng_);
    } else if (kind == "onehot") {
      if (dims.size() != 2) fail("onehot takes (rows, classes)");
      std::uniform_int_distribution<std::size_t> dist(0, dims[1] - 1);
      for (std::size_t r = 0; r < dims[0]; ++r) data[r * dims[1] + dist(rng_)] = 1.0;
    } else {
      fail(fmt::format("unknown generator '{}'", kind));
    }
    if (dims.empty()) return Value::flt(data[0]);
    return Value::dense(Dense(dims, data));
  }

  Value scale(const Value& v, double s) {
    if (v.is_number()) return Value::flt(v.as_float() * s);
    if (v.is_dense()) {
      std::vector<double> d = v.as_dense().to_vector();
      for (auto& x : d) x *= s;
      return Value::dense(Dense(v.as_dense().shape(), d));
    }
    fail("only numbers and arrays can be scaled");
  }
};

}  // namespace

std::vector<Value> parse_args(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse("[" + text + "]");
  } catch (const nlohmann::json::exception& e) {
    throw Error(fmt::format("cannot parse arguments '{}': {}", text, e.what()));
  }
  std::vector<Value> out;
  for (const auto& x : j) out.push_back(from_json(x));
  return out;
}

std::vector<Value> generate_args(const std::string& spec, std::mt19937_64& rng) {
  return GenParser(spec, rng).all();
}

std::vector<double> flatten(const Value& v, std::size_t like_size) {
  switch (v.kind()) {
    case Value::Kind::Float:
    case Value::Kind::Int:
      return {v.as_float()};
    case Value::Kind::Zero:
      return std::vector<double>(like_size, 0.0);
    case Value::Kind::Dense:
    case Value::Kind::PArray:
      return rt::to_dense(v).to_vector();
    default:
      throw Error(fmt::format("expected a number or an array, got {}", v.kind_name()));
  }
}

Value with_element(const Value& v, std::size_t k, double x) {
  switch (v.kind()) {
    case Value::Kind::Float:
    case Value::Kind::Int:
      return Value::flt(x);
    case Value::Kind::Dense: {
      Dense d = v.as_dense().clone();
      d.mutable_data()[k] = x;
      return Value::dense(std::move(d));
    }
    case Value::Kind::PArray: {
      Dense d = rt::to_dense(v);
      std::vector<double> data = d.to_vector();
      data[k] = x;
      return Value::parray(pa::pa_new(pa::Array{d.shape(), std::move(data)}));
    }
    default:
      throw Error(fmt::format("cannot perturb a {}", v.kind_name()));
  }
}

}  // namespace gradc::tools
