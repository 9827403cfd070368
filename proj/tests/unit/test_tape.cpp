#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "attralign/numerics.hpp"
#include "attralign/tape.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace attralign;

namespace {

Matrix uniform_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -10, double hi = 10) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& x : m.data()) x = u(rng);
  return m;
}

using Builder = std::function<Tape::NodeId(Tape&, const std::vector<Tape::NodeId>&)>;

// Builds op(inputs) and reduces it with fixed random weights to a scalar, then
// compares the tape gradient of every input against central differences.
double worst_gradient_error(std::vector<Matrix> inputs, const Builder& build, std::uint64_t seed) {
  Tape tape;
  std::vector<Tape::NodeId> leaves;
  for (auto& m : inputs) leaves.push_back(tape.leaf(m));
  const Tape::NodeId out = build(tape, leaves);
  std::mt19937_64 rng(seed);
  const Matrix& ov = tape.value(out);
  const Tape::NodeId w = tape.leaf(uniform_matrix(rng, ov.rows(), ov.cols(), -1, 1));
  const Tape::NodeId loss = tape.sum(tape.mul(out, w));
  const auto grads = tape.backward(loss);

  // Central differences taken on the op output entry by entry before the
  // weighted reduction, so outputs the perturbation does not touch cancel
  // exactly instead of contributing round-off.
  const double h = 1e-5;
  const Matrix& weights = tape.value(w);
  double worst = 0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Matrix numeric(inputs[i].rows(), inputs[i].cols());
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      Matrix x = inputs[i];
      x.data()[e] += h;
      tape.set_leaf(leaves[i], x);
      tape.replay();
      const Matrix up = tape.value(out);
      x.data()[e] -= 2 * h;
      tape.set_leaf(leaves[i], x);
      tape.replay();
      const Matrix& down = tape.value(out);
      double acc = 0;
      for (std::size_t k = 0; k < up.size(); ++k) acc += weights.data()[k] * (up.data()[k] - down.data()[k]);
      numeric.data()[e] = acc / (2 * h);
    }
    tape.set_leaf(leaves[i], inputs[i]);
    tape.replay();
    worst = std::max(worst, oracle::max_relative_error(grads.of(leaves[i]), numeric, 1e-4));
  }
  return worst;
}

constexpr double kOpTolerance = 1e-6;

}  // namespace

TEST(TapeGradient, SquareAtThreeIsSix) {
  Tape tape;
  const auto x = tape.leaf(Matrix(1, 1, 3.0));
  const auto y = tape.sum(tape.mul(x, x));
  EXPECT_DOUBLE_EQ(tape.scalar(y), 9.0);
  EXPECT_DOUBLE_EQ(tape.backward(y).of(x)(0, 0), 6.0);
}

TEST(TapeGradient, SymmetricLogSumExpIsHalf) {
  Tape tape;
  const auto x = tape.leaf(Matrix(2, 1, std::vector<double>{0.0, 0.0}));
  const auto lse = tape.segment_log_sum_exp(x, {0, 2});
  EXPECT_NEAR(tape.scalar(lse), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(tape.backward(lse).of(x)(0, 0), 0.5);
}

TEST(TapeGradient, Affine) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 5; ++t) {
    EXPECT_LT(worst_gradient_error({uniform_matrix(rng, 3, 4), uniform_matrix(rng, 5, 4), uniform_matrix(rng, 1, 5)},
                                   [](Tape& tp, const auto& l) { return tp.affine(l[0], l[1], l[2]); }, t),
              kOpTolerance);
  }
}

TEST(TapeGradient, Gelu) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    EXPECT_LT(worst_gradient_error({uniform_matrix(rng, 4, 6)}, [](Tape& tp, const auto& l) { return tp.gelu(l[0]); },
                                   t),
              kOpTolerance);
  }
}

TEST(TapeGradient, NormalizeRows) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 5; ++t) {
    EXPECT_LT(worst_gradient_error({uniform_matrix(rng, 4, 5)},
                                   [](Tape& tp, const auto& l) { return tp.normalize_rows(l[0]); }, t),
              kOpTolerance);
  }
}

TEST(TapeGradient, CosineMatrix) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 5; ++t) {
    EXPECT_LT(worst_gradient_error({uniform_matrix(rng, 3, 5), uniform_matrix(rng, 4, 5)},
                                   [](Tape& tp, const auto& l) { return tp.cosine_matrix(l[0], l[1]); }, t),
              kOpTolerance);
  }
}

TEST(TapeGradient, GatherWithRepeatedEntries) {
  std::mt19937_64 rng(5);
  std::vector<Tape::Entry> entries{{0, 0, 0}, {1, 1, 2}, {0, 0, 0}, {1, 0, 1}, {0, 2, 1}};
  EXPECT_LT(worst_gradient_error({uniform_matrix(rng, 3, 2), uniform_matrix(rng, 2, 3)},
                                 [&](Tape& tp, const auto& l) { return tp.gather({l[0], l[1]}, entries); }, 0),
            kOpTolerance);
}

TEST(TapeGradient, SegmentLogSumExp) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 5; ++t) {
    EXPECT_LT(worst_gradient_error({uniform_matrix(rng, 7, 1)},
                                   [](Tape& tp, const auto& l) { return tp.segment_log_sum_exp(l[0], {0, 1, 4, 7}); },
                                   t),
              kOpTolerance);
  }
}

TEST(TapeGradient, ElementwiseOps) {
  std::mt19937_64 rng(7);
  const Matrix a = uniform_matrix(rng, 3, 3);
  const Matrix b = uniform_matrix(rng, 3, 3);
  EXPECT_LT(worst_gradient_error({a, b}, [](Tape& tp, const auto& l) { return tp.add(l[0], l[1]); }, 1), kOpTolerance);
  EXPECT_LT(worst_gradient_error({a, b}, [](Tape& tp, const auto& l) { return tp.sub(l[0], l[1]); }, 2), kOpTolerance);
  EXPECT_LT(worst_gradient_error({a, b}, [](Tape& tp, const auto& l) { return tp.mul(l[0], l[1]); }, 3), kOpTolerance);
  EXPECT_LT(worst_gradient_error({a}, [](Tape& tp, const auto& l) { return tp.scale(l[0], -2.5); }, 4), kOpTolerance);
  EXPECT_LT(worst_gradient_error({a}, [](Tape& tp, const auto& l) { return tp.sum(l[0]); }, 5), kOpTolerance);
}

TEST(TapeGradient, ComposedChain) {
  std::mt19937_64 rng(8);
  auto build = [](Tape& tp, const std::vector<Tape::NodeId>& l) {
    const auto h = tp.gelu(tp.affine(l[0], l[1], l[2]));
    const auto c = tp.cosine_matrix(tp.normalize_rows(h), l[3]);
    std::vector<Tape::Entry> e{{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1}};
    return tp.segment_log_sum_exp(tp.gather({c}, e), {0, 2, 4});
  };
  EXPECT_LT(worst_gradient_error({uniform_matrix(rng, 2, 3, -2, 2), uniform_matrix(rng, 4, 3, -2, 2),
                                  uniform_matrix(rng, 1, 4, -2, 2), uniform_matrix(rng, 2, 4, -2, 2)},
                                 build, 9),
            kOpTolerance);
}

TEST(TapeGradient, UnreachedLeafGetsExactZero) {
  Tape tape;
  const auto x = tape.leaf(Matrix(2, 2, 1.0));
  const auto unused = tape.leaf(Matrix(3, 1, 4.0));
  const auto y = tape.sum(x);
  const auto g = tape.backward(y);
  for (double v : g.of(unused).data()) EXPECT_EQ(v, 0.0);
}

TEST(TapeErrors, NonScalarOutput) {
  Tape tape;
  const auto x = tape.leaf(Matrix(2, 2, 1.0));
  EXPECT_ERROR_CODE(tape.backward(x), ErrorCode::NonScalarOutput);
  EXPECT_ERROR_CODE(tape.scalar(x), ErrorCode::NonScalarOutput);
}

TEST(TapeErrors, ShapeMismatchAndBadIds) {
  Tape tape;
  const auto a = tape.leaf(Matrix(2, 2, 1.0));
  const auto b = tape.leaf(Matrix(2, 3, 1.0));
  EXPECT_ERROR_CODE(tape.add(a, b), ErrorCode::ShapeMismatch);
  EXPECT_ERROR_CODE(tape.gelu(42), ErrorCode::InvalidArgument);
  EXPECT_ERROR_CODE(tape.set_leaf(a, Matrix(1, 1)), ErrorCode::ShapeMismatch);
  const auto g = tape.gelu(a);
  EXPECT_ERROR_CODE(tape.set_leaf(g, Matrix(2, 2)), ErrorCode::InvalidArgument);
}

TEST(TapeErrors, EmptySegmentAndZeroRows) {
  Tape tape;
  const auto col = tape.leaf(Matrix(2, 1, 0.0));
  EXPECT_ERROR_CODE(tape.segment_log_sum_exp(col, {0, 0, 2}), ErrorCode::EmptyInput);
  EXPECT_ERROR_CODE(tape.segment_log_sum_exp(col, {0, 1}), ErrorCode::ShapeMismatch);
  const auto zero = tape.leaf(Matrix(1, 3, 0.0));
  EXPECT_ERROR_CODE(tape.normalize_rows(zero), ErrorCode::DegenerateVector);
}

TEST(TapeReplay, RecomputesFromNewLeafValues) {
  Tape tape;
  const auto x = tape.leaf(Matrix(1, 1, 2.0));
  const auto y = tape.sum(tape.scale(tape.mul(x, x), 3.0));
  EXPECT_DOUBLE_EQ(tape.scalar(y), 12.0);
  tape.set_leaf(x, Matrix(1, 1, -1.0));
  tape.replay();
  EXPECT_DOUBLE_EQ(tape.scalar(y), 3.0);
}
