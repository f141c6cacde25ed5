#include <cmath>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "gradc/ad.hpp"
#include "gradc/builtins.hpp"
#include "gradc/emit.hpp"
#include "gradc/interpreter.hpp"
#include "gradc/parser.hpp"
#include "gradc/validate.hpp"

using namespace gradc;
using namespace gradc::ad;
using rt::Value;

namespace {

Value F(double v) { return Value::flt(v); }
Value D(rt::Shape s, std::vector<double> v) { return Value::dense(rt::Dense(std::move(s), v)); }

const char* kSquare = "def f(x):\n    return x * x\n";
const char* kIdentity = "def f(x):\n    y = x\n    return y\n";
const char* kWhile = "def f(x):\n    while x < 10000:\n        x = x + 1\n    return x\n";
const char* kClip =
    "def f(x):\n"
    "    with insert_grad_of(x) as dx:\n"
    "        if dx > 10:\n"
    "            print('Clipping', dx)\n"
    "            dx = 10\n"
    "    return x * x\n";

GradOptions raw() {
  GradOptions o;
  o.optimize = false;
  return o;
}

std::string src_of(const Derivative& d) { return lang::emit_source(d.program); }

Value eval(const Derivative& d, std::vector<Value> args, std::ostream* out = nullptr) {
  rt::EvalOptions eo;
  eo.out = out;
  return rt::eval_program(d.program, d.entry, std::move(args), eo);
}

std::vector<std::string> body_lines(const std::string& src) {
  std::vector<std::string> out;
  std::istringstream in(src);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

// --- structure -------------------------------------------------------------

TEST(Reverse, SquareMatchesReferenceStructure) {
  const std::string src = src_of(grad(lang::parse(kSquare), "f", {0}));
  EXPECT_EQ(src,
            "def dfdx(x, b_return=1.0):\n"
            "    # Grad of: _return = x * x\n"
            "    _bx = unbroadcast(b_return * x, x)\n"
            "    _bx2 = unbroadcast(b_return * x, x)\n"
            "    bx = _bx\n"
            "    bx = add_grad(bx, _bx2)\n"
            "    return bx\n");
}

TEST(Reverse, SquareGradientIsTwoX) {
  const Derivative d = grad(lang::parse(kSquare), "f", {0});
  for (double x : {-2.5, 0.0, 3.0, 7.25}) EXPECT_EQ(eval(d, {F(x)}).as_float(), 2 * x);
}

TEST(Reverse, IdentityRawForm) {
  const std::string src = src_of(transform_reverse(lang::parse(kIdentity), "f", {0}));
  const auto lines = body_lines(src);
  ASSERT_GE(lines.size(), 11u);
  EXPECT_EQ(lines[0], "def dfdx(x, by=1.0):");
  EXPECT_EQ(lines[1], "    # Initialize the tape");
  EXPECT_EQ(lines[2], "    y = None");
  EXPECT_EQ(lines[3], "    # Beginning of forward pass");
  EXPECT_EQ(lines[4].rfind("    push(y, '_", 0), 0u) << lines[4];
  EXPECT_EQ(lines[5], "    y = x");
  EXPECT_EQ(lines[6], "    # Beginning of backward pass");
  EXPECT_EQ(lines[7], "    # Grad of: y = x");
  EXPECT_EQ(lines[8].rfind("    y = pop('_", 0), 0u) << lines[8];
  EXPECT_EQ(lines[9], "    _bx = copy(by)");
  EXPECT_EQ(lines[10], "    by = init_grad(y)");
  // push and pop share one 8-hex-digit label
  const std::string label = lines[4].substr(lines[4].find('\''), 11);
  EXPECT_NE(lines[8].find(label), std::string::npos);
}

TEST(Reverse, IdentityOptimizedHasNoTapeOrInitGrad) {
  const std::string src = src_of(grad(lang::parse(kIdentity), "f", {0}));
  EXPECT_EQ(count(src, "push("), 0u);
  EXPECT_EQ(count(src, "pop("), 0u);
  EXPECT_EQ(count(src, "init_grad"), 0u);
  EXPECT_NE(src.find("# Grad of: y = x"), std::string::npos);
  EXPECT_NE(src.find("copy(by)"), std::string::npos);
}

TEST(Reverse, Deterministic) {
  const auto p = lang::parse(kWhile);
  const std::string a = src_of(transform_reverse(p, "f", {0}));
  for (int k = 0; k < 3; ++k) EXPECT_EQ(src_of(transform_reverse(lang::parse(kWhile), "f", {0})), a);
}

TEST(Reverse, WhileLoopGradientIsOne) {
  for (bool opt : {false, true}) {
    GradOptions o;
    o.optimize = opt;
    const Derivative d = grad(lang::parse(kWhile), "f", {0}, 1, o);
    const Value g = eval(d, {F(0.0)});
    ASSERT_TRUE(g.is_float()) << g.str();
    EXPECT_EQ(g.as_float(), 1.0);
  }
}

TEST(Reverse, WhileCountPushedOnce) {
  const std::string src = src_of(transform_reverse(lang::parse(kWhile), "f", {0}));
  EXPECT_NE(src.find("for _i in range(_count):"), std::string::npos);
  EXPECT_EQ(count(src, "push(_count"), 1u);
}

TEST(Reverse, ClippingInsertsCodeVerbatim) {
  const Derivative d = grad(lang::parse(kClip), "f", {0});
  const std::string src = src_of(d);
  EXPECT_NE(src.find("    # Inserted code\n"
                     "    if bx > 10:\n"
                     "        print('Clipping', bx)\n"
                     "        bx = 10\n"
                     "    return bx\n"),
            std::string::npos)
      << src;
  std::ostringstream out;
  EXPECT_EQ(eval(d, {F(3.0)}, &out).as_float(), 6.0);
  EXPECT_EQ(out.str(), "");
  const Value clipped = eval(d, {F(8.0)}, &out);
  EXPECT_EQ(clipped.as_float(), 10.0);
  EXPECT_EQ(out.str(), "Clipping 16.0\n");
}

TEST(Reverse, EmptyInsertBlockAddsNothing) {
  const auto with = lang::parse("def f(x):\n    with insert_grad_of(x) as dx:\n        pass\n    return x * x\n");
  const std::string src = src_of(grad(with, "f", {0}));
  EXPECT_EQ(src.find("Inserted"), std::string::npos) << src;
}

TEST(Reverse, InsertOnInactiveVariableRejected) {
  const auto p = lang::parse(
      "def f(x, c):\n    with insert_grad_of(c) as dc:\n        dc = 0.0\n    return x * x\n");
  EXPECT_THROW(transform_reverse(p, "f", {0}), TransformError);
}

TEST(Reverse, MultipleWrtInOrder) {
  const auto p = lang::parse("def f(x, y):\n    return x * y\n");
  const Derivative d = grad(p, "f", {1, 0});
  EXPECT_EQ(d.entry, "dfdy_x");
  const Value g = eval(d, {F(2.0), F(5.0)});
  ASSERT_TRUE(g.is_tuple());
  EXPECT_EQ(g.as_tuple()[0].as_float(), 2.0);
  EXPECT_EQ(g.as_tuple()[1].as_float(), 5.0);
}

TEST(Reverse, UnregisteredPrimitiveNamesIt) {
  TemplateRegistry empty;
  try {
    transform_reverse(lang::parse("def f(x):\n    return tanh(x)\n"), "f", {0}, empty);
    FAIL() << "expected MissingTemplate";
  } catch (const MissingTemplate& e) {
    EXPECT_NE(std::string(e.what()).find("tanh"), std::string::npos);
  }
}

TEST(Reverse, CustomAdjointOverridesDefault) {
  TemplateRegistry reg = default_adjoints();
  reg.load("@adjoint(tanh)\ndef straight_through(z, x):\n    d[x] = d[z]\n", "adjoint", true);
  const Derivative d{[&] {
    Derivative r = transform_reverse(lang::parse("def f(x):\n    return tanh(x)\n"), "f", {0}, reg);
    return r;
  }()};
  EXPECT_EQ(eval(d, {F(0.7)}).as_float(), 1.0);
  // the default registry is untouched
  const Derivative def = transform_reverse(lang::parse("def f(x):\n    return tanh(x)\n"), "f", {0});
  EXPECT_NEAR(eval(def, {F(0.7)}).as_float(), 1 - std::tanh(0.7) * std::tanh(0.7), 1e-15);
}

TEST(Reverse, DuplicateRegistrationWithoutOverrideFails) {
  TemplateRegistry reg = default_adjoints();
  EXPECT_THROW(reg.load("@adjoint(tanh)\ndef t(z, x):\n    d[x] = d[z]\n", "adjoint", false), Error);
}

TEST(Reverse, TanhAtZero) {
  const Derivative d = grad(lang::parse("def f(x):\n    return tanh(x)\n"), "f", {0});
  EXPECT_NEAR(eval(d, {F(0.0)}).as_float(), 1.0, 1e-10);
}

TEST(Reverse, RejectsCodeThatAlreadyUsesTheTape) {
  const auto p = lang::parse("def f(x):\n    push(x, 'a')\n    y = pop('a')\n    return y * x\n");
  EXPECT_THROW(transform_reverse(p, "f", {0}), TransformError);
}

TEST(Reverse, ValidatorErrorsBlockTransform) {
  const auto p = lang::parse("def f(x):\n    return g(x)\n");
  EXPECT_THROW(transform_reverse(p, "f", {0}), TransformError);
}

TEST(Reverse, ConcurrentTransformsAgree) {
  const auto p = lang::parse(kWhile);
  const std::string want = src_of(grad(p, "f", {0}));
  std::vector<std::string> got(4);
  std::vector<std::thread> ts;
  for (int k = 0; k < 4; ++k) ts.emplace_back([&, k] { got[static_cast<std::size_t>(k)] = src_of(grad(p, "f", {0})); });
  for (auto& t : ts) t.join();
  for (const auto& g : got) EXPECT_EQ(g, want);
}

// --- templates ---------------------------------------------------------------

TEST(Templates, MultiplyExpansion) {
  TemplateRegistry reg;
  reg.load("@adjoint(multiply)\ndef adjoint_multiply(z, x, y):\n    d[x] = y * d[z]\n    d[y] = x * d[z]\n",
           "adjoint");
  const auto t = reg.find("multiply", 2);
  ASSERT_TRUE(t);
  const lang::Block b = expand_template(*t, {{"z", lang::name("c")}, {"x", lang::name("a")}, {"y", lang::name("b")}},
                                        {{"z", "b_c"}, {"x", "b_a"}, {"y", "b_b"}});
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(lang::emit_stmt_line(b[0]), "b_a = b * b_c");
  EXPECT_EQ(lang::emit_stmt_line(b[1]), "b_b = a * b_c");
}

TEST(Templates, RejectsUnknownPlaceholder) {
  TemplateRegistry reg;
  EXPECT_THROW(reg.load("@adjoint(exp)\ndef t(z, x):\n    d[w] = d[z]\n", "adjoint"), Error);
}

TEST(Templates, EveryDifferentiableBuiltinHasAnAdjoint) {
  for (const auto& b : lang::all_builtins()) {
    if (!b.differentiable || b.name == "pop" || b.name == "tuple") continue;
    EXPECT_TRUE(default_adjoints().has(std::string(b.name))) << "no adjoint for " << b.name;
  }
}

// --- activity ----------------------------------------------------------------

TEST(Activity, Square) {
  const auto p = lang::parse(kSquare);
  const auto a = analyze_activity(p, "f", {0});
  EXPECT_TRUE(a.is_active("x"));
}

TEST(Activity, UnrelatedAssignmentInactive) {
  const auto p = lang::parse("def f(x, c):\n    y = c + 1\n    return x * x\n");
  const auto a = analyze_activity(p, "f", {0});
  EXPECT_TRUE(a.is_active("x"));
  EXPECT_FALSE(a.is_active("y"));
  EXPECT_FALSE(a.is_active("c"));
}

TEST(Activity, LatticeLoopCountersInactive) {
  const auto p = lang::parse(
      "def f(x, outer, inner):\n"
      "    r = zeros_like(x[0])\n"
      "    for _o in range(outer):\n"
      "        x = append(x, r)\n"
      "        for _i in range(inner):\n"
      "            y = add(x[-1], 1.0)\n"
      "            x = setitem(x, -1, y)\n"
      "    return mean(x)\n");
  const auto a = analyze_activity(p, "f", {0});
  EXPECT_TRUE(a.is_active("x"));
  EXPECT_TRUE(a.is_active("y"));
  EXPECT_FALSE(a.is_active("_o"));
  EXPECT_FALSE(a.is_active("_i"));
  EXPECT_FALSE(a.is_active("outer"));
  // zeros_like carries no derivative, so r is constant
  EXPECT_FALSE(a.is_active("r"));
}

// --- higher order and forward mode -----------------------------------------------

TEST(HigherOrder, SecondDerivativeOfSquareIsTwo) {
  const Derivative d = grad(lang::parse(kSquare), "f", {0}, 2);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> dist(0, 10);
  for (int k = 0; k < 10; ++k) {
    const Value g = eval(d, {F(dist(rng))});
    ASSERT_TRUE(g.is_number()) << g.str();
    EXPECT_NEAR(g.as_float(), 2.0, 1e-12);
  }
}

TEST(HigherOrder, SecondDerivativeOfCube) {
  const Derivative d = grad(lang::parse("def f(x):\n    return x * x * x\n"), "f", {0}, 2);
  EXPECT_NEAR(eval(d, {F(2.0)}).as_float(), 12.0, 1e-12);
}

TEST(HigherOrder, OutputIsValidProgram) {
  for (int order : {1, 2, 3}) {
    const Derivative d = grad(lang::parse("def f(x):\n    return x * x * x\n"), "f", {0}, order);
    const auto reparsed = lang::parse(src_of(d));
    EXPECT_EQ(lang::emit_source(reparsed), src_of(d));
    EXPECT_FALSE(lang::has_errors(lang::validate(reparsed, d.entry, {0}))) << src_of(d);
  }
  EXPECT_NEAR(eval(grad(lang::parse("def f(x):\n    return x * x * x\n"), "f", {0}, 3), {F(1.5)}).as_float(), 6.0,
              1e-12);
}

TEST(Forward, SquareAtThree) {
  const Derivative d = transform_forward(lang::parse(kSquare), "f", {0});
  EXPECT_EQ(d.entry, "df_fwd");
  const Value r = eval(d, {F(3.0)});
  ASSERT_TRUE(r.is_tuple());
  EXPECT_EQ(r.as_tuple()[0].as_float(), 9.0);
  EXPECT_EQ(r.as_tuple()[1].as_float(), 6.0);
}

TEST(Forward, WhileLoop) {
  const Value r = eval(transform_forward(lang::parse(kWhile), "f", {0}), {F(0.0)});
  EXPECT_EQ(r.as_tuple()[0].as_float(), 10000.0);
  EXPECT_EQ(r.as_tuple()[1].as_float(), 1.0);
}

TEST(Forward, PartialOfProduct) {
  const Derivative d = transform_forward(lang::parse("def f(x, y):\n    return x * y\n"), "f", {0, 1});
  const Value r = eval(d, {F(2.0), F(5.0), F(1.0), F(0.0)});
  EXPECT_EQ(r.as_tuple()[1].as_float(), 5.0);
}

TEST(Forward, NoTapeAndLinearInSeed) {
  const auto p = lang::parse("def f(x):\n    y = tanh(x) * x\n    return sum(y * y)\n");
  const Derivative d = transform_forward(p, "f", {0});
  const std::string src = src_of(d);
  EXPECT_EQ(count(src, "push("), 0u);
  EXPECT_EQ(count(src, "pop("), 0u);
  const Value x = D({3}, {0.1, -0.4, 1.3});
  const Value v = D({3}, {1.0, 2.0, -0.5});
  const Value v3 = D({3}, {3.0, 6.0, -1.5});
  const double t1 = eval(d, {x, v}).as_tuple()[1].as_float();
  const double t3 = eval(d, {x, v3}).as_tuple()[1].as_float();
  EXPECT_NEAR(t3, 3 * t1, 1e-12 * std::abs(t3));
}

TEST(Hvp, CubeAtTwo) {
  const Derivative h = make_hvp(lang::parse("def f(x):\n    return x * x * x\n"), "f", {0});
  EXPECT_NEAR(eval(h, {F(2.0), F(1.0)}).as_float(), 12.0, 1e-12);
}

TEST(Hvp, QuadraticIsTwoV) {
  const Derivative h = make_hvp(lang::parse("def f(x):\n    return sum(x * x)\n"), "f", {0});
  const Value x = D({4}, {0.3, -1.0, 2.0, 5.5});
  const Value v = D({4}, {1.0, -2.0, 0.25, 3.0});
  const auto got = rt::to_dense(eval(h, {x, v})).to_vector();
  const std::vector<double> want{2.0, -4.0, 0.5, 6.0};
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Hvp, TwoParameters) {
  // H = [[2y, 2x], [2x, 0]] at x=3, y=2
  const Derivative h = make_hvp(lang::parse("def f(x, y):\n    return x * x * y\n"), "f", {0, 1});
  const Value r = eval(h, {F(3.0), F(2.0), F(1.0), F(0.5)});
  ASSERT_EQ(r.as_tuple().size(), 2u);
  EXPECT_NEAR(r.as_tuple()[0].as_float(), 4.0 + 3.0, 1e-12);
  EXPECT_NEAR(r.as_tuple()[1].as_float(), 6.0, 1e-12);
}
