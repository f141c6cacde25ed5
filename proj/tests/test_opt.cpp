#include <random>

#include <gtest/gtest.h>

#include "gradc/ad.hpp"
#include "gradc/emit.hpp"
#include "gradc/interpreter.hpp"
#include "gradc/opt.hpp"
#include "gradc/parser.hpp"

using namespace gradc;
using namespace gradc::opt;
using rt::Value;

namespace {

lang::FunctionDef fn(const std::string& src) { return lang::parse(src).functions.at(0); }

std::string body(const lang::FunctionDef& f) { return lang::emit_block(f.body, 0); }

const char* kRawIdentity =
    "def dfdx(x, by=1.0):\n"
    "    # Initialize the tape\n"
    "    y = None\n"
    "    # Beginning of forward pass\n"
    "    push(y, '_19429e9f')\n"
    "    y = x\n"
    "    # Beginning of backward pass\n"
    "    # Grad of: y = x\n"
    "    y = pop('_19429e9f')\n"
    "    _bx = copy(by)\n"
    "    by = init_grad(y)\n"
    "    bx = _bx\n"
    "    return bx\n";

}  // namespace

TEST(Cfg, StraightLineIsOneBlock) {
  const auto f = fn("def f(x):\n    a = x + 1.0\n    b = a * 2.0\n    c = b - x\n    return c\n");
  const Cfg c = build_cfg(f);
  EXPECT_EQ(c.blocks.size(), 1u);
  EXPECT_EQ(c.edges.size(), 0u);
  EXPECT_EQ(c.blocks[0].stmts.size(), 4u);
}

TEST(Cfg, IfElseHasFourBlocks) {
  const auto f = fn("def f(x):\n    if x > 0:\n        y = x\n    else:\n        y = 0.0 - x\n    return y\n");
  const Cfg c = build_cfg(f);
  EXPECT_EQ(c.blocks.size(), 4u);
  EXPECT_EQ(c.edges.size(), 4u);
}

TEST(Cfg, LoopHasBackEdge) {
  const auto f = fn("def f(x):\n    y = x\n    while y < 10.0:\n        y = y * 2.0\n    return y\n");
  const Cfg c = build_cfg(f);
  bool back = false;
  for (auto [a, b] : c.edges) back = back || b <= a;
  EXPECT_TRUE(back);
}

TEST(Cfg, EveryStatementInExactlyOneBlock) {
  const auto f = fn(
      "def f(x):\n    s = 0.0\n    for i in range(3):\n        if x > s:\n            s = s + x\n    return s\n");
  const Cfg c = build_cfg(f);
  std::size_t n = 0;
  for (const auto& b : c.blocks) n += b.stmts.size();
  EXPECT_EQ(n, 5u);
  EXPECT_EQ(c.block_of.size(), 5u);
}

TEST(Cfg, PairsTapeLabels) {
  const auto f = fn(kRawIdentity);
  const Cfg c = build_cfg(f);
  ASSERT_EQ(c.tape_links.count("_19429e9f"), 1u);
  const auto [push, pop] = c.tape_links.at("_19429e9f");
  EXPECT_EQ(lang::emit_stmt_line(*push), "push(y, '_19429e9f')");
  EXPECT_EQ(lang::emit_stmt_line(*pop), "y = pop('_19429e9f')");
}

TEST(Cfg, UnmatchedLabelRejected) {
  EXPECT_THROW(build_cfg(fn("def f(x):\n    push(x, 'a')\n    y = pop('b')\n    return y\n")), Error);
  EXPECT_THROW(build_cfg(fn("def f(x):\n    push(x, 'a')\n    push(x, 'a')\n    y = pop('a')\n    return y\n")),
               Error);
}

TEST(Optimize, RawIdentityLosesTapeAndInitGrad) {
  const auto f = optimize(fn(kRawIdentity));
  EXPECT_EQ(body(f),
            "# Grad of: y = x\n"
            "_bx = copy(by)\n"
            "return _bx\n");
}

TEST(Optimize, DeadTemporaryRemoved) {
  const auto f = optimize(fn("def f(x):\n    t = x + 1\n    return x * 2.0\n"));
  EXPECT_EQ(body(f), "return x * 2.0\n");
}

TEST(Optimize, LivePushPopRetained) {
  const auto src =
      "def f(x, by=1.0):\n"
      "    push(x, 'a')\n"
      "    x = x * 2.0\n"
      "    y = x + 1.0\n"
      "    x = pop('a')\n"
      "    bx = by * x * y\n"
      "    return bx\n";
  const std::string out = body(optimize(fn(src)));
  EXPECT_NE(out.find("push(x, 'a')"), std::string::npos) << out;
  EXPECT_NE(out.find("x = pop('a')"), std::string::npos) << out;
}

TEST(Optimize, DeadPushPopRemoved) {
  const auto src =
      "def f(x, by=1.0):\n"
      "    push(x, 'a')\n"
      "    x = x * 2.0\n"
      "    x = pop('a')\n"
      "    return by\n";
  EXPECT_EQ(body(optimize(fn(src))), "return by\n");
}

TEST(Simplify, MultiplyByOne) {
  auto f = fn("def f(x):\n    z = x * 1.0\n    return z\n");
  const_prop_and_simplify(f);
  EXPECT_EQ(lang::emit_stmt_line(f.body[0]), "z = x");
}

TEST(Simplify, ConstantFolding) {
  auto f = fn("def f(x):\n    c = 2.0\n    d = c * 3.0\n    return d\n");
  const_prop_and_simplify(f);
  EXPECT_EQ(lang::emit_stmt_line(f.body[1]), "d = 6.0");
  EXPECT_EQ(body(optimize(fn("def f(x):\n    c = 2.0\n    d = c * 3.0\n    return d\n"))), "return 6.0\n");
}

TEST(Simplify, IntDivisionFoldsToFloat) {
  auto f = fn("def f(x):\n    d = 3 / 2\n    return d\n");
  const_prop_and_simplify(f);
  EXPECT_EQ(lang::emit_stmt_line(f.body[0]), "d = 1.5");
}

TEST(Simplify, AddGradOfZero) {
  auto f = fn("def f(x, g):\n    b = init_grad(x)\n    b = add_grad(b, g)\n    return b\n");
  const_prop_and_simplify(f);
  EXPECT_EQ(lang::emit_stmt_line(f.body[1]), "b = g");
}

TEST(Simplify, UnsafeAlgebraFlag) {
  const char* src = "def f(x):\n    z = x * 0.0\n    w = x + 0.0\n    return z, w\n";
  auto on = fn(src);
  const_prop_and_simplify(on);
  EXPECT_EQ(lang::emit_stmt_line(on.body[0]), "z = 0.0");
  EXPECT_EQ(lang::emit_stmt_line(on.body[1]), "w = x");
  OptOptions safe;
  safe.unsafe_algebra = false;
  auto off = fn(src);
  const_prop_and_simplify(off, safe);
  EXPECT_EQ(lang::emit_stmt_line(off.body[0]), "z = x * 0.0");
  EXPECT_EQ(lang::emit_stmt_line(off.body[1]), "w = x + 0.0");
}

TEST(Simplify, CopyPropagationStopsAtRedefinition) {
  auto f = fn("def f(a, b):\n    x = a\n    a = b\n    y = x * 2.0\n    return y\n");
  const_prop_and_simplify(f);
  EXPECT_EQ(lang::emit_stmt_line(f.body[2]), "y = x * 2.0");
}

TEST(Simplify, LoopKillsFacts) {
  auto f = fn("def f(x):\n    c = 1.0\n    for i in range(3):\n        x = x * c\n        c = c + 1.0\n    return x\n");
  const_prop_and_simplify(f);
  EXPECT_EQ(lang::emit_block(f.body[1].as<lang::ForRange>().body, 0), "x = x * c\nc = c + 1.0\n");
}

TEST(Simplify, ConsumedReceiverNotReplaced) {
  // `g = zero_row(g, i)` may reuse g's buffer; rewriting the receiver to
  // another name would make the kernel copy instead
  auto f = fn("def f(x, i):\n    g = x\n    g = zero_row(g, i)\n    return g\n");
  const_prop_and_simplify(f);
  EXPECT_EQ(lang::emit_stmt_line(f.body[1]), "g = zero_row(g, i)");
}

TEST(Elide, UnmodifiedValueBypassesTape) {
  auto f = fn("def f(x):\n    push(x, 'a')\n    y = x * 2.0\n    z = pop('a')\n    return z + y\n");
  EXPECT_TRUE(elide_tape(f));
  EXPECT_EQ(body(f), "y = x * 2.0\nz = x\nreturn z + y\n");
}

TEST(Elide, ModifiedValueKeepsTape) {
  auto f = fn("def f(x):\n    push(x, 'a')\n    x = x * 2.0\n    z = pop('a')\n    return z + x\n");
  EXPECT_FALSE(elide_tape(f));
}

TEST(Elide, LoopDefinitionBlocksElision) {
  auto f = fn(
      "def f(x):\n    for i in range(3):\n        push(x, 'a')\n        x = x * 2.0\n"
      "    for j in range(3):\n        z = pop('a')\n    return z\n");
  EXPECT_FALSE(elide_tape(f));
}

TEST(Tidy, DropsOrphanComments) {
  auto f = fn("def f(x):\n    # a\n    # b\n    y = x\n    # c\n    return y\n    # d\n");
  tidy_comments(f);
  EXPECT_EQ(body(f), "# b\ny = x\n# c\nreturn y\n");
}

TEST(Optimize, Fixpoint) {
  for (const char* src : {kRawIdentity, "def f(x):\n    c = 2.0\n    d = c * 3.0 + x\n    return d\n"}) {
    const auto once = optimize(fn(src));
    auto twice = once;
    EXPECT_FALSE(const_prop_and_simplify(twice));
    EXPECT_FALSE(elide_tape(twice));
    EXPECT_FALSE(liveness_and_dce(twice));
    EXPECT_FALSE(tidy_comments(twice));
    EXPECT_EQ(optimize(once), once);
  }
}

TEST(Optimize, KeepsUserCallsAndPrints) {
  const auto p = lang::parse(
      "def g(x):\n    return x\n\n\ndef f(x):\n    t = g(x)\n    print(x)\n    return x\n");
  const auto f = optimize(p.functions[1]);
  EXPECT_EQ(body(f), "t = g(x)\nprint(x)\nreturn x\n");
}

TEST(Optimize, PreservesSemanticsBitwise) {
  const auto p = lang::parse(
      "def f(x, n):\n"
      "    c = 2.0\n"
      "    a = x * 1.0\n"
      "    b = a\n"
      "    s = 0.0\n"
      "    for i in range(n):\n"
      "        if b > s:\n"
      "            s = s + b * c\n"
      "        else:\n"
      "            s = s - 0.5\n"
      "    return s * 1.0 + a\n");
  const auto q = optimize(p);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0, 3);
  for (int k = 0; k < 20; ++k) {
    const std::vector<Value> args{Value::flt(dist(rng)), Value::integer(k % 5)};
    EXPECT_TRUE(rt::identical(rt::eval_program(p, "f", args), rt::eval_program(q, "f", args)));
  }
}

TEST(Optimize, LogsWhenAsked) {
  OptOptions o;
  o.log = true;
  testing::internal::CaptureStderr();
  optimize(fn(kRawIdentity), o);
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("[opt] dfdx round 1"), std::string::npos) << err;
}
