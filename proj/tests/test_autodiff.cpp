#include <gtest/gtest.h>

#include <cmath>

#include "swarmlearn/autodiff.hpp"
#include "test_util.hpp"

using namespace swarmlearn;
using swarmlearn::testing::random_matrix;

namespace {

void expect_gradients_match(const ad::ScalarProgram& program, const std::vector<Matrix>& theta, double tol = 1e-6) {
  const ad::GradCheckReport r = ad::grad_check(program, theta, 1e-3);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel_error, tol) << "worst parameter " << r.parameter << " entry " << r.entry;
}

}  // namespace

TEST(Autodiff, ConstantsRecordNothing) {
  ad::Tape tape;
  const ad::Var a(random_matrix(2, 3, 1));
  const ad::Var b(random_matrix(3, 2, 2));
  const ad::Var c = ad::tanh(ad::matmul(a, b));
  EXPECT_FALSE(c.tracked());
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Autodiff, ParametersAreTracked) {
  ad::Tape tape;
  const ad::Var p = tape.parameter(Matrix(2, 2, 1.0));
  const ad::Var q = ad::scale(p, 2.0);
  EXPECT_TRUE(q.tracked());
  EXPECT_EQ(tape.parameter_count(), 1u);
  EXPECT_EQ(tape.size(), 2u);
}

TEST(Autodiff, SumOfSquaresGradientIsTwiceInput) {
  ad::Tape tape;
  const Matrix x = random_matrix(3, 2, 4);
  const ad::Var p = tape.parameter(x);
  const ad::Gradients g = tape.backward(ad::squared_norm(p));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(g.of(p)[i], 2.0 * x[i]);
}

TEST(Autodiff, UnusedParameterGetsZeroGradient) {
  ad::Tape tape;
  const ad::Var p = tape.parameter(Matrix(2, 1, 3.0));
  const ad::Var unused = tape.parameter(Matrix(1, 3, 1.0));
  const ad::Gradients g = tape.backward(ad::sum(p));
  EXPECT_EQ(g.of(unused), Matrix(1, 3));
}

TEST(Autodiff, BackwardRejectsNonScalarLoss) {
  ad::Tape tape;
  const ad::Var p = tape.parameter(Matrix(2, 1, 1.0));
  EXPECT_THROW(tape.backward(p), shape_error);
}

TEST(Autodiff, ShapeMismatchNamesShapes) {
  const ad::Var a(Matrix(2, 3));
  const ad::Var b(Matrix(2, 2));
  try {
    ad::add(a, b);
    FAIL();
  } catch (const shape_error& e) {
    EXPECT_NE(std::string(e.what()).find("(2x3)"), std::string::npos);
  }
  EXPECT_THROW(ad::matmul(a, a), shape_error);
}

TEST(Autodiff, MixingTapesIsRejected) {
  ad::Tape t1, t2;
  const ad::Var a = t1.parameter(Matrix(1, 1, 1.0));
  const ad::Var b = t2.parameter(Matrix(1, 1, 1.0));
  EXPECT_THROW(ad::add(a, b), std::invalid_argument);
}

TEST(Autodiff, DetachCutsHistory) {
  ad::Tape tape;
  const ad::Var p = tape.parameter(Matrix(1, 1, 2.0));
  const ad::Var q = ad::detach(ad::square(p));
  EXPECT_FALSE(q.tracked());
  EXPECT_DOUBLE_EQ(q.scalar(), 4.0);
}

TEST(Autodiff, ElementwiseOpsMatchFiniteDifferences) {
  const std::vector<Matrix> theta = {random_matrix(3, 2, 11), random_matrix(3, 2, 12)};
  expect_gradients_match(
      [](const std::vector<ad::Var>& p) {
        const ad::Var pos = ad::add_scalar(ad::square(p[1]), 0.5);
        const ad::Var a = ad::hadamard(ad::tanh(p[0]), ad::sigmoid(p[1]));
        const ad::Var b = ad::divide(ad::exp(ad::scale(p[0], 0.3)), pos);
        const ad::Var c = ad::log(pos);
        return ad::sum(ad::add(ad::sub(a, b), ad::negate(c)));
      },
      theta);
}

TEST(Autodiff, MatrixOpsMatchFiniteDifferences) {
  const std::vector<Matrix> theta = {random_matrix(3, 4, 21), random_matrix(4, 2, 22), random_matrix(1, 1, 23)};
  expect_gradients_match(
      [](const std::vector<ad::Var>& p) {
        const ad::Var ab = ad::matmul(p[0], p[1]);
        const ad::Var t = ad::transpose(ab);
        const ad::Var cs = ad::column_sums(ad::square(ab));
        const ad::Var rs = ad::row_sums(t);
        return ad::add(ad::mul_scalar(ad::sum(cs), p[2]), ad::squared_norm(rs));
      },
      theta);
}

TEST(Autodiff, SoftmaxAndLogsumexpMatchFiniteDifferences) {
  const std::vector<Matrix> theta = {random_matrix(3, 4, 31), random_matrix(3, 4, 32)};
  expect_gradients_match(
      [](const std::vector<ad::Var>& p) {
        const ad::Var sc = ad::softmax_columns(p[0]);
        const ad::Var sr = ad::softmax_rows(p[0]);
        return ad::add(ad::add(ad::sum(ad::hadamard(sc, p[1])), ad::sum(ad::hadamard(sr, ad::square(p[1])))),
                       ad::logsumexp(p[1]));
      },
      theta);
}

TEST(Autodiff, SlicingAndConcatenationMatchFiniteDifferences) {
  const std::vector<Matrix> theta = {random_matrix(2, 5, 41), random_matrix(2, 3, 42)};
  expect_gradients_match(
      [](const std::vector<ad::Var>& p) {
        const ad::Var joined = ad::hcat({ad::slice_cols(p[0], 1, 3), p[1], ad::column(p[0], 4)});
        const ad::Var picked = ad::select_cols(joined, {0, 3, 3, 6});
        return ad::add(ad::sum(ad::tanh(picked)), ad::squared_norm(ad::slice_cols(joined, 2, 2)));
      },
      theta);
}

TEST(Autodiff, PairwiseDistancesMatchFiniteDifferences) {
  const std::vector<Matrix> theta = {random_matrix(3, 4, 51), random_matrix(3, 2, 52)};
  expect_gradients_match(
      [](const std::vector<ad::Var>& p) {
        return ad::sum(ad::exp(ad::scale(ad::pairwise_sq_dists(p[0], p[1]), -0.2)));
      },
      theta);
}

TEST(Autodiff, SoftmaxColumnsSumToOne) {
  const ad::Var s = ad::softmax_columns(ad::Var(random_matrix(5, 3, 61, 30.0)));
  for (std::size_t c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < 5; ++r) acc += s.value()(r, c);
    EXPECT_NEAR(acc, 1.0, 1e-12);
  }
}

TEST(Autodiff, LogsumexpIsStableForLargeInputs) {
  const ad::Var v(Matrix(3, 1, std::vector<double>{1000.0, 1000.0, -1000.0}));
  EXPECT_NEAR(ad::logsumexp(v).scalar(), 1000.0 + std::log(2.0), 1e-9);
}

TEST(Autodiff, GradCheckFlagsWrongGradient) {
  // A node whose backward pass is deliberately wrong.
  const ad::ScalarProgram bad = [](const std::vector<ad::Var>& p) {
    const ad::Var& x = p[0];
    const int id = x.id();
    Matrix v(1, 1, x.value()[0] * x.value()[0]);
    return ad::detail::make(std::move(v), {&x}, [id](const Matrix& g, ad::GradientSink& s) {
      s.at(id)[0] += g[0];
    });
  };
  const ad::GradCheckReport r = ad::grad_check(bad, {Matrix(1, 1, 3.0)}, 1e-5);
  EXPECT_GT(r.max_rel_error, 0.1);
}

TEST(Autodiff, SmallAnalyticExamples) {
  ad::Tape tape;
  const ad::Var z = tape.parameter(Matrix(1, 1, 0.0));
  const ad::Var t = ad::tanh(z);
  EXPECT_EQ(t.scalar(), 0.0);
  EXPECT_DOUBLE_EQ(tape.backward(t).of(z)[0], 1.0);

  const Matrix sm = ad::softmax_columns(ad::Var(Matrix(4, 1, 0.0))).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(sm[i], 0.25);

  ad::Tape t2;
  const ad::Var x = t2.parameter(Matrix(1, 1, 3.0));
  EXPECT_DOUBLE_EQ(t2.backward(ad::hadamard(x, x)).of(x)[0], 6.0);

  ad::Tape t3;
  const ad::Var v = t3.parameter(Matrix::column(std::vector<double>{1.0, 2.0}));
  const ad::Gradients g = t3.backward(ad::sum(ad::matmul(ad::Var(Matrix::identity(2)), v)));
  EXPECT_DOUBLE_EQ(g.of(v)[0], 1.0);
  EXPECT_DOUBLE_EQ(g.of(v)[1], 1.0);
}

TEST(Autodiff, GradCheckIsExactOnQuadratics) {
  const Matrix a = random_matrix(3, 3, 80);
  const ad::GradCheckReport r = ad::grad_check(
      [&](const std::vector<ad::Var>& p) { return ad::squared_norm(ad::matmul(ad::Var(a), p[0])); },
      {random_matrix(3, 1, 81)}, 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-9);
}
