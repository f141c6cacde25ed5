#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gradc/interpreter.hpp"
#include "gradc/kernels.hpp"
#include "gradc/parser.hpp"

using namespace gradc;
using namespace gradc::rt;
using lang::BinOpKind;

namespace {

Value D(Shape s, std::vector<double> v) { return Value::dense(Dense(std::move(s), v)); }
Value F(double v) { return Value::flt(v); }
Value I(std::int64_t v) { return Value::integer(v); }

void expect_same(const Value& got, const Value& want) {
  EXPECT_TRUE(identical(got, want)) << "got " << got.str() << " want " << want.str();
}

Value run(const std::string& src, const std::string& entry, std::vector<Value> args) {
  return eval_program(lang::parse(src), entry, std::move(args));
}

}  // namespace

TEST(Eval, Square) { expect_same(run("def f(x):\n    return x * x\n", "f", {F(3)}), F(9)); }

TEST(Eval, GeneratedGradientOfSquare) {
  const char* src =
      "def dfdx(x, by=1.0):\n"
      "    _bx = unbroadcast(by * x, x)\n"
      "    _bx2 = unbroadcast(by * x, x)\n"
      "    bx = _bx\n"
      "    bx = add_grad(bx, _bx2)\n"
      "    return bx\n";
  expect_same(run(src, "dfdx", {F(3), F(1)}), F(6));
  expect_same(run(src, "dfdx", {F(3)}), F(6));
}

TEST(Eval, WhileLoop) {
  const char* src =
      "def f(x):\n"
      "    while x < 10000:\n"
      "        x = x + 1\n"
      "    return x\n";
  expect_same(run(src, "f", {F(0)}), F(10000));
}

TEST(Eval, IntArithmetic) {
  const char* src = "def f(a, b):\n    return a / b\n";
  expect_same(run(src, "f", {I(7), I(2)}), F(3.5));
  expect_same(run("def f(a, b):\n    return a * b - 1\n", "f", {I(7), I(2)}), I(13));
}

TEST(Eval, BranchesAndRange) {
  const char* src =
      "def f(x, n):\n"
      "    s = 0.0\n"
      "    for i in range(n):\n"
      "        if i < 2:\n"
      "            s = s + x\n"
      "        else:\n"
      "            s = s + 2.0 * x\n"
      "    return s\n";
  expect_same(run(src, "f", {F(1.5), I(4)}), F(1.5 + 1.5 + 3 + 3));
}

TEST(Eval, ConditionMustBeBool) {
  EXPECT_THROW(run("def f(x):\n    if x:\n        x = 1.0\n    return x\n", "f", {F(1)}), EvalError);
  EXPECT_THROW(run("def f(x):\n    if x < 1.0:\n        x = 1.0\n    return x\n", "f", {D({2}, {1, 2})}), EvalError);
}

TEST(Eval, Errors) {
  EXPECT_THROW(run("def f(x):\n    return x[0]\n", "f", {F(1)}), EvalError);
  EXPECT_THROW(run("def f(x):\n    return x\n", "f", {F(1), F(2)}), EvalError);
  EXPECT_THROW(run("def f(x):\n    return x\n", "g", {F(1)}), EvalError);
}

TEST(Eval, UserCallsAndTuples) {
  const char* src =
      "def g(a, b):\n"
      "    return a + b, a * b\n"
      "\n"
      "def f(x):\n"
      "    t = g(x, 2.0)\n"
      "    return t[0] + t[1]\n";
  expect_same(run(src, "f", {F(3)}), F(11));
}

TEST(Eval, IndexAssignUpdatesOnlyLocalCopy) {
  const char* src =
      "def f(x):\n"
      "    x[0] = 5.0\n"
      "    return x\n";
  Value x = D({2}, {1, 2});
  expect_same(eval_program(lang::parse(src), "f", {x}), D({2}, {5, 2}));
  expect_same(x, D({2}, {1, 2}));
}

TEST(Eval, PrintWritesStringsAndValues) {
  std::ostringstream os;
  EvalOptions opts;
  opts.out = &os;
  eval_program(lang::parse("def f(x):\n    print('Clipping', x)\n    return x\n"), "f", {F(16)}, opts);
  EXPECT_EQ(os.str(), "Clipping 16.0\n");
}

TEST(Eval, Deterministic) {
  const char* src =
      "def f(x, w):\n"
      "    h = tanh(dot(x, w))\n"
      "    return mean(h * h)\n";
  std::mt19937 rng(3);
  std::normal_distribution<double> n;
  std::vector<double> xv(12), wv(20);
  for (auto& v : xv) v = n(rng);
  for (auto& v : wv) v = n(rng);
  Value a = run(src, "f", {D({3, 4}, xv), D({4, 5}, wv)});
  Value b = run(src, "f", {D({3, 4}, xv), D({4, 5}, wv)});
  expect_same(a, b);
}

TEST(Binop, Examples) {
  expect_same(binop_dispatch(BinOpKind::Mul, F(3), F(4)), F(12));
  expect_same(binop_dispatch(BinOpKind::Add, D({2, 2}, {1, 2, 3, 4}), D({2}, {10, 20})), D({2, 2}, {11, 22, 13, 24}));
  expect_same(binop_dispatch(BinOpKind::Mul, D({3}, {1, 2, 3}), F(2)), D({3}, {2, 4, 6}));
  expect_same(binop_dispatch(BinOpKind::Lt, F(1), I(2)), Value::boolean(true));
  EXPECT_THROW(binop_dispatch(BinOpKind::Add, D({2}, {1, 2}), D({3}, {1, 2, 3})), EvalError);
  EXPECT_THROW(binop_dispatch(BinOpKind::Lt, D({2}, {1, 2}), F(1)), EvalError);
  EXPECT_THROW(binop_dispatch(BinOpKind::Add, Value::boolean(true), F(1)), EvalError);
}

TEST(Binop, GeneralBroadcast) {
  // [2,1,3] + [4,1] -> [2,4,3]
  std::vector<double> av(6), bv(4);
  for (int k = 0; k < 6; ++k) av[k] = k;
  for (int k = 0; k < 4; ++k) bv[k] = 10 * k;
  Value r = binop_dispatch(BinOpKind::Add, D({2, 1, 3}, av), D({4, 1}, bv));
  const Dense& d = r.as_dense();
  ASSERT_EQ(d.shape(), (Shape{2, 4, 3}));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 3; ++k) EXPECT_EQ(d.data()[(i * 4 + j) * 3 + k], av[i * 3 + k] + bv[j]);
}

TEST(Binop, LazyZero) {
  expect_same(binop_dispatch(BinOpKind::Add, Value::zero(), F(2)), F(2));
  expect_same(binop_dispatch(BinOpKind::Sub, Value::zero(), F(2)), F(-2));
  expect_same(binop_dispatch(BinOpKind::Mul, F(3), Value::zero()), Value::zero());
  EXPECT_THROW(binop_dispatch(BinOpKind::Div, F(3), Value::zero()), EvalError);
  EXPECT_THROW(apply_builtin("tanh", {Value::zero()}), EvalError);
}

TEST(Unbroadcast, Examples) {
  expect_same(unbroadcast(D({2, 2}, {1, 2, 3, 4}), D({2}, {0, 0})), D({2}, {4, 6}));
  expect_same(unbroadcast(D({3}, {1, 1, 1}), F(0)), F(3));
  expect_same(unbroadcast(D({2}, {5, 7}), D({2}, {0, 0})), D({2}, {5, 7}));
  expect_same(unbroadcast(D({2, 2}, {1, 2, 3, 4}), D({2, 1}, {0, 0})), D({2, 1}, {3, 7}));
  expect_same(unbroadcast(Value::zero(), D({2}, {0, 0})), Value::zero());
  EXPECT_THROW(unbroadcast(D({3}, {1, 2, 3}), D({2}, {0, 0})), EvalError);
}

namespace {

std::vector<Shape> shapes_up_to(std::size_t rank, std::size_t maxdim) {
  std::vector<Shape> out{{}};
  for (std::size_t r = 1; r <= rank; ++r) {
    std::vector<Shape> next;
    for (const auto& s : out)
      if (s.size() == r - 1)
        for (std::size_t d = 1; d <= maxdim; ++d) {
          Shape t = s;
          t.push_back(d);
          next.push_back(t);
        }
    out.insert(out.end(), next.begin(), next.end());
  }
  return out;
}

// Target shapes that `s` broadcasts to: prepend axes and grow unit axes.
std::vector<Shape> expansions(const Shape& s, std::size_t max_rank) {
  std::vector<Shape> out;
  for (const auto& t : shapes_up_to(max_rank, 3)) {
    if (t.size() < s.size()) continue;
    bool ok = true;
    for (std::size_t k = 0; k < s.size(); ++k) {
      std::size_t sd = s[s.size() - 1 - k], td = t[t.size() - 1 - k];
      if (sd != td && sd != 1) ok = false;
    }
    if (ok) out.push_back(t);
  }
  return out;
}

// Explicit index arithmetic, independent of the runtime's broadcasting.
std::vector<double> expand(const std::vector<double>& g, const Shape& s, const Shape& t) {
  std::vector<double> out(shape_size(t));
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t rem = flat, src = 0, stride = 1;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const std::size_t axis = t.size() - 1 - k;
      const std::size_t coord = rem % t[axis];
      rem /= t[axis];
      if (k < s.size()) {
        const std::size_t sd = s[s.size() - 1 - k];
        src += (sd == 1 ? 0 : coord) * stride;
        stride *= sd;
      }
    }
    out[flat] = g[src];
  }
  return out;
}

}  // namespace

TEST(UnbroadcastProperty, ExpandThenReduceScalesByFactor) {
  int checked = 0;
  for (const auto& s : shapes_up_to(3, 3)) {
    std::vector<double> g(shape_size(s));
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = static_cast<double>(k + 1);
    const Value like = s.empty() ? F(0) : D(s, std::vector<double>(g.size(), 0.0));
    for (const auto& t : expansions(s, 3)) {
      const double factor = static_cast<double>(shape_size(t)) / static_cast<double>(shape_size(s));
      Value expanded = t.empty() ? F(g[0]) : D(t, expand(g, s, t));
      Value back = unbroadcast(expanded, like);
      std::vector<double> want(g.size());
      for (std::size_t k = 0; k < g.size(); ++k) want[k] = g[k] * factor;
      if (s.empty()) {
        expect_same(back, F(want[0]));
      } else {
        expect_same(back, D(s, want));
      }
      // Broadcasting the operand itself must agree with the explicit expansion.
      if (!t.empty()) expect_same(rebroadcast(s.empty() ? F(g[0]) : D(s, g), D(t, std::vector<double>(shape_size(t)))), D(t, expand(g, s, t)));
      ++checked;
    }
  }
  EXPECT_EQ(checked, 330);
}

TEST(AddGrad, Examples) {
  expect_same(add_grad(Value::zero(), F(5)), F(5));
  expect_same(add_grad(D({2}, {1, 2}), D({2}, {3, 4})), D({2}, {4, 6}));
  expect_same(add_grad(Value::zero(), Value::zero()), Value::zero());
  EXPECT_THROW(add_grad(D({2}, {1, 2}), D({3}, {1, 2, 3})), EvalError);
}

TEST(AddGrad, IdentityAndCommutativity) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<Value> pool{Value::zero(), F(u(rng)), F(u(rng)), I(3)};
  for (int k = 0; k < 4; ++k) {
    std::vector<double> v(6);
    for (auto& x : v) x = u(rng);
    pool.push_back(D({2, 3}, v));
  }
  for (const auto& a : pool) {
    expect_same(add_grad(a, Value::zero()), a);
    expect_same(add_grad(Value::zero(), a), a);
    for (const auto& b : pool) {
      const bool ok = a.is_zero() || b.is_zero() || (a.is_number() && b.is_number()) || (a.is_dense() && b.is_dense());
      if (!ok) continue;
      expect_same(add_grad(a, b), add_grad(b, a));
    }
  }
}

TEST(AddGrad, InPlaceDoesNotDisturbAliases) {
  Value a = D({2}, {1, 2});
  Value alias = a;
  Value sum = add_grad(std::move(a), D({2}, {3, 4}));
  expect_same(sum, D({2}, {4, 6}));
  expect_same(alias, D({2}, {1, 2}));
}

TEST(InitGrad, AlwaysLazy) {
  expect_same(init_grad(F(3)), Value::zero());
  expect_same(init_grad(D({2}, {1, 2})), Value::zero());
  expect_same(init_grad(Value::zero()), Value::zero());
  EXPECT_EQ(Value::zero().str(), "ZeroGrad");
}

TEST(Kernels, Examples) {
  expect_same(apply_builtin("dot", {D({2, 2}, {1, 0, 0, 1}), D({2}, {3, 4})}), D({2}, {3, 4}));
  expect_same(apply_builtin("mean", {D({2}, {2, 4})}), F(3));
  expect_same(apply_builtin("setitem", {D({3}, {1, 2, 3}), I(-1), F(9)}), D({3}, {1, 2, 9}));
  expect_same(apply_builtin("append", {D({1, 2}, {1, 2}), D({2}, {3, 4})}), D({2, 2}, {1, 2, 3, 4}));
  expect_same(apply_builtin("log", {F(0)}), F(-std::numeric_limits<double>::infinity()));
  EXPECT_THROW(apply_builtin("dot", {D({3}, {1, 2, 3}), D({2}, {1, 2})}), EvalError);
  EXPECT_THROW(apply_builtin("nope", {F(1)}), EvalError);
  EXPECT_THROW(apply_builtin("tanh", {F(1), F(2)}), EvalError);
}

TEST(Kernels, ReductionsWithAxis) {
  Value x = D({2, 3}, {1, 2, 3, 4, 5, 6});
  expect_same(apply_builtin("sum", {x, I(-1)}), D({2}, {6, 15}));
  expect_same(apply_builtin("sum", {x, I(0)}), D({3}, {5, 7, 9}));
  expect_same(apply_builtin("sum", {x, I(-1), Value::boolean(true)}), D({2, 1}, {6, 15}));
  expect_same(apply_builtin("mean", {x, I(1)}), D({2}, {2, 5}));
  expect_same(apply_builtin("sum_grad", {D({2}, {1, 2}), x, I(-1)}), D({2, 3}, {1, 1, 1, 2, 2, 2}));
  expect_same(apply_builtin("mean_grad", {F(6), x}), D({2, 3}, {1, 1, 1, 1, 1, 1}));
}

TEST(Kernels, DotShapes) {
  Value a = D({2, 3}, {1, 2, 3, 4, 5, 6});
  Value b = D({3, 2}, {1, 0, 0, 1, 1, 1});
  expect_same(apply_builtin("dot", {a, b}), D({2, 2}, {4, 5, 10, 11}));
  expect_same(apply_builtin("dot", {D({2}, {1, 1}), a}), D({3}, {5, 7, 9}));
  expect_same(apply_builtin("dot", {D({3}, {1, 2, 3}), D({3}, {1, 1, 1})}), F(6));
  // Gradient kernels checked against their defining identities.
  Value g = D({2, 2}, {1, 2, 3, 4});
  expect_same(apply_builtin("dot_grad_lhs", {g, a, b}), D({2, 3}, {1, 2, 3, 3, 4, 7}));
  expect_same(apply_builtin("dot_grad_rhs", {g, a, b}), D({3, 2}, {13, 18, 17, 24, 21, 30}));
}

TEST(Kernels, GetitemAndScatter) {
  Value x = D({3, 2}, {1, 2, 3, 4, 5, 6});
  expect_same(getitem(x, I(-1)), D({2}, {5, 6}));
  expect_same(getitem(D({3}, {1, 2, 3}), I(1)), F(2));
  alloc_stats().reset();
  Value acc = apply_builtin("scatter_add", {Value::zero(), x, I(1), D({2}, {1, 1})});
  EXPECT_EQ(alloc_stats().zero_fills.load(), 1u);
  expect_same(acc, D({3, 2}, {0, 0, 1, 1, 0, 0}));
  expect_same(apply_builtin("scatter_add", {acc, x, I(1), Value::zero()}), acc);
  expect_same(apply_builtin("zero_row", {x, I(0)}), D({3, 2}, {0, 0, 3, 4, 5, 6}));
  expect_same(apply_builtin("drop_last", {x}), D({2, 2}, {1, 2, 3, 4}));
}

TEST(Kernels, PersistentReceivers) {
  Value x = apply_builtin("parray", {D({2, 2}, {1, 2, 3, 4})});
  Value y = apply_builtin("setitem", {x, I(-1), D({2}, {9, 9})});
  expect_same(getitem(y, I(-1)), D({2}, {9, 9}));
  expect_same(getitem(x, I(-1)), D({2}, {3, 4}));
  Value z = apply_builtin("append", {y, F(0)});
  EXPECT_EQ(shape_of(z), (Shape{3, 2}));
  expect_same(apply_builtin("mean", {z}), F((1 + 2 + 9 + 9) / 6.0));
  expect_same(apply_builtin("restore_len", {z, apply_builtin("save_len", {y})}), y);
}

TEST(Kernels, ImmutableModeCopies) {
  KernelContext ctx;
  ctx.inplace = false;
  Value x = D({2}, {1, 2});
  alloc_stats().reset();
  Value y = apply_builtin("setitem", {std::move(x), I(0), F(5)}, ctx);
  EXPECT_GE(alloc_stats().allocations.load(), 1u);
  expect_same(y, D({2}, {5, 2}));
}

TEST(Tape, PushPop) {
  Tape t;
  t.push("_a", F(1));
  expect_same(t.pop("_a"), F(1));
  EXPECT_TRUE(t.empty());
}

TEST(Tape, LabelMismatchAndEmpty) {
  Tape t;
  t.push("_a", F(1));
  EXPECT_THROW(t.pop("_b"), TapeError);
  t.pop("_a");
  EXPECT_THROW(t.pop("_a"), TapeError);
}

TEST(Tape, SnapshotSurvivesMutation) {
  const char* src =
      "def f(x):\n"
      "    push(x, '_a')\n"
      "    x[0] = 9.0\n"
      "    y = pop('_a')\n"
      "    return y[0] + x[0]\n";
  expect_same(run(src, "f", {D({1}, {7})}), F(16));
}

TEST(TapeProperty, LifoInterleavings) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Tape t;
    std::vector<std::pair<std::string, double>> model;
    for (int step = 0; step < 50; ++step) {
      if (model.empty() || rng() % 2) {
        std::string label = "_" + std::to_string(rng() % 4);
        double v = static_cast<double>(rng() % 100);
        t.push(label, F(v));
        model.emplace_back(label, v);
      } else if (rng() % 4 == 0) {
        // Any label other than the top one must be rejected.
        std::string wrong = model.back().first + "x";
        EXPECT_THROW(t.pop(wrong), TapeError);
      } else {
        expect_same(t.pop(model.back().first), F(model.back().second));
        model.pop_back();
      }
    }
    EXPECT_EQ(t.size(), model.size());
  }
}
