#include <gtest/gtest.h>

#include "shortcut/autodiff.hpp"
#include "shortcut/cells.hpp"

using namespace shortcut;

namespace {
Parameter vec_param(const std::string& name, std::vector<double> v) {
  const std::size_t n = v.size();
  return Parameter(name, Matrix(n, 1, std::move(v)));
}
}  // namespace

TEST(Tape, ConstantLossHasZeroGradient) {
  Parameter w = vec_param("w", {1.0, -2.0});
  Tape tape;
  tape.param(w);
  const Var loss = tape.reduce_sum(tape.constant(3, 2.0));
  tape.backward(loss);
  EXPECT_EQ(w.grad(0, 0), 0.0);
  EXPECT_EQ(w.grad(1, 0), 0.0);
}

TEST(Tape, LinearLossGradientIsInput) {
  Parameter w("w", Matrix{{0.3, -0.7, 1.1}});
  const Vector x{2.0, -1.0, 0.5};
  Tape tape;
  const Var y = tape.linear(w, {tape.input(x)});
  EXPECT_NEAR(tape.scalar(y), 0.6 + 0.7 + 0.55, 1e-15);
  tape.backward(y);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(w.grad(0, i), x[i]);
}

TEST(Tape, QuadraticGradient) {
  Parameter theta = vec_param("theta", {1.0, 2.0});
  Tape tape;
  const Var t = tape.param(theta);
  const Var loss = tape.reduce_sum(tape.mul(t, t));
  EXPECT_DOUBLE_EQ(tape.scalar(loss), 5.0);
  tape.backward(loss);
  EXPECT_NEAR(theta.grad(0, 0), 2.0, 1e-9);
  EXPECT_NEAR(theta.grad(1, 0), 4.0, 1e-9);
}

TEST(Tape, BackwardBeforeForwardIsUsageError) {
  Tape tape;
  EXPECT_THROW(tape.backward(Var{}), UsageError);
}

TEST(Tape, NonScalarLossIsUsageError) {
  Parameter w = vec_param("w", {1.0, 2.0});
  Tape tape;
  const Var v = tape.param(w);
  EXPECT_THROW(tape.backward(v), UsageError);
}

TEST(Tape, GradientsAccumulateLinearly) {
  Parameter w("w", Matrix{{0.5, -0.25}, {1.5, 0.75}});
  const Vector x{0.3, -0.9};
  auto f = [&](Tape& tape) { return tape.reduce_sum(tape.tanh(tape.linear(w, {tape.input(x)}))); };
  auto g = [&](Tape& tape) { return tape.reduce_sum(tape.sigmoid(tape.linear(w, {tape.input(x)}))); };

  Tape tape;
  tape.backward(f(tape));
  const Matrix gf = w.grad;
  w.zero_grad();
  tape.backward(g(tape));
  const Matrix gg = w.grad;
  w.zero_grad();
  tape.backward(tape.add(f(tape), g(tape)));
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w.grad.data()[i], gf.data()[i] + gg.data()[i], 1e-12);
}

TEST(Tape, RepeatedBackwardIsDeterministic) {
  Parameter w("w", Matrix{{0.1, 0.2}, {-0.3, 0.4}});
  auto run = [&] {
    w.zero_grad();
    Tape tape;
    const Var h = tape.tanh(tape.linear(w, {tape.input(Vector{1.0, -1.0})}));
    tape.backward(tape.nll(h, 1));
    return w.grad;
  };
  EXPECT_EQ(run(), run());
}

TEST(Tape, StraightThroughPassesGradientUnchanged) {
  Parameter p = vec_param("p", {0.2, 0.7, 0.9});
  const Vector c{3.0, -1.0, 0.5};
  Tape tape;
  const std::vector<double> sample{1.0, 0.0, 1.0};
  const Var g = tape.straight_through(sample, tape.param(p));
  EXPECT_EQ(tape.vector(g), Vector(std::span<const double>(sample)));
  tape.backward(tape.reduce_sum(tape.mul(g, tape.input(c))));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(p.grad(i, 0), c[i]);
}

TEST(Tape, SparseRowsAreTracked) {
  Parameter table("table", Matrix(5, 2, 1.0), true);
  Tape tape;
  tape.backward(tape.reduce_sum(tape.add(tape.row(table, 3), tape.row(table, 1))));
  EXPECT_EQ(table.touched_rows.size(), 2u);
  EXPECT_EQ(table.grad(3, 0), 1.0);
  EXPECT_EQ(table.grad(0, 0), 0.0);
  table.zero_grad();
  EXPECT_TRUE(table.touched_rows.empty());
  EXPECT_EQ(table.grad(3, 0), 0.0);
}

TEST(Tape, NllMatchesLogSoftmax) {
  Tape tape;
  const Var h = tape.input(Vector{1.0, 2.0, 3.0});
  EXPECT_NEAR(tape.scalar(tape.nll(h, 2)), -std::log(0.66524096), 1e-8);
}

TEST(GradCheck, RejectsNondeterministicLoss) {
  Parameter w = vec_param("w", {1.0});
  Rng rng(1);
  auto loss = [&](Tape& tape) {
    return tape.reduce_sum(tape.add(tape.param(w), tape.constant(1, rng.uniform())));
  };
  std::vector<Parameter*> params{&w};
  EXPECT_THROW(grad_check(loss, params), UsageError);
}

TEST(GradCheck, DetectsWrongGradient) {
  Parameter w = vec_param("w", {0.4, -0.3});
  auto loss = [&](Tape& tape) {
    const Var t = tape.param(w);
    return tape.reduce_sum(tape.tanh(tape.mul(t, t)));
  };
  std::vector<Parameter*> params{&w};
  EXPECT_LE(grad_check(loss, params).max_rel_error, 1e-6);
  const auto bad = grad_check(loss, params, 1e-5, {}, [&] { w.grad(0, 0) *= 1.5; });
  EXPECT_GT(bad.max_rel_error, 0.1);
  EXPECT_EQ(bad.worst_parameter, "w");
}

namespace {
double check_cell(CellRule rule, std::size_t skips) {
  Rng rng(17);
  const std::size_t n = 3, d = 2, T = 4;
  CellParams cp = make_cell_params("cell", rule, GateSpec{}, n, d, skips, rng);
  std::vector<Vector> xs, hs;
  for (std::size_t t = 0; t < T; ++t) {
    xs.push_back(Vector{rng.normal(), rng.normal()});
    hs.push_back(Vector{rng.normal(0, 0.5), rng.normal(0, 0.5), rng.normal(0, 0.5)});
  }
  auto loss = [&](Tape& tape) {
    CellState s{tape.constant(n, 0.0), has_cell_state(rule) ? tape.constant(n, 0.0) : Var{}};
    std::vector<Var> outs;
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<SkipInput> sk(skips, SkipInput{tape.input(hs[t]), Var{}});
      s = cell_step(tape, cp, tape.input(xs[t]), s, sk);
      outs.push_back(s.h);
    }
    return tape.nll(tape.sum(outs), 1);
  };
  std::vector<Parameter*> params;
  cp.for_each_parameter([&](Parameter& p) { params.push_back(&p); });
  return grad_check(loss, params).max_rel_error;
}
}  // namespace

TEST(GradCheck, PlainLstmCell) { EXPECT_LE(check_cell(CellRule::PlainLSTM, 0), 1e-4); }

TEST(GradCheck, ShortcutBlockCell) { EXPECT_LE(check_cell(CellRule::ShortcutBlock, 1), 1e-4); }
