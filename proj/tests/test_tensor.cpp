#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "trivqa/tensor.hpp"

namespace {

using trivqa::nd::Tensor;
namespace nd = trivqa::nd;

Tensor triple_loop(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
  }
  return out;
}

TEST(Tensor, ConstructorRejectsSizeMismatchAndZeroDims) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), std::invalid_argument);
  EXPECT_THROW(Tensor({0, 3}), std::invalid_argument);
  const Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t(1, 2), 6.0);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(nd::matmul(eye, m), m);
}

TEST(Matmul, ProjectorKeepsFirstComponent) {
  const Tensor p = Tensor::matrix({{1, 0}, {0, 0}});
  const Tensor x = Tensor::matrix({{5}, {7}});
  EXPECT_EQ(nd::matmul(p, x), Tensor::matrix({{5}, {0}}));
}

TEST(Matmul, MatchesTripleLoopOnRandomInstances) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = trivqa::testing::random_matrix(rng, 7, 5);
    const Tensor b = trivqa::testing::random_matrix(rng, 5, 3);
    const Tensor got = nd::matmul(a, b);
    const Tensor want = triple_loop(a, b);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Matmul, DimensionMismatchNamesBothShapes) {
  try {
    nd::matmul(Tensor::matrix(2, 3), Tensor::matrix(4, 2));
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
  }
}

TEST(Elementwise, SoftmaxOfEqualLogitsIsUniform) {
  const Tensor p = nd::softmax_rows(Tensor::matrix({{0, 0, 0}}));
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Elementwise, SoftmaxRowsAreOnTheSimplex) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = trivqa::testing::random_matrix(rng, 4, 6);
    for (double& v : x.data()) v *= 300.0;
    const Tensor p = nd::softmax_rows(x);
    ASSERT_TRUE(nd::all_finite(p));
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (double v : p.row_view(r)) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Elementwise, LogSoftmaxAgreesWithLogOfSoftmax) {
  std::mt19937_64 rng(3);
  const Tensor x = trivqa::testing::random_matrix(rng, 3, 5);
  const Tensor a = nd::log_softmax_rows(x);
  const Tensor b = nd::softmax_rows(x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], std::log(b[i]), 1e-12);
}

TEST(Elementwise, ReluClampsNegatives) {
  EXPECT_EQ(nd::relu(Tensor::matrix({{-1, 2}})), Tensor::matrix({{0, 2}}));
}

TEST(Elementwise, AddingZeroIsIdentity) {
  std::mt19937_64 rng(5);
  const Tensor x = trivqa::testing::random_matrix(rng, 3, 4);
  EXPECT_EQ(nd::add(x, Tensor::matrix(3, 4)), x);
}

TEST(Elementwise, DispatchMatchesDirectKernels) {
  std::mt19937_64 rng(9);
  const Tensor a = trivqa::testing::random_matrix(rng, 2, 3);
  const Tensor b = trivqa::testing::random_matrix(rng, 2, 3);
  const Tensor* ab[] = {&a, &b};
  const Tensor* only_a[] = {&a};
  EXPECT_EQ(nd::elementwise(nd::ElementwiseKind::add, ab), nd::add(a, b));
  EXPECT_EQ(nd::elementwise(nd::ElementwiseKind::sub, ab), nd::sub(a, b));
  EXPECT_EQ(nd::elementwise(nd::ElementwiseKind::mul, ab), nd::mul(a, b));
  EXPECT_EQ(nd::elementwise(nd::ElementwiseKind::relu, only_a), nd::relu(a));
  EXPECT_EQ(nd::elementwise(nd::ElementwiseKind::softmax_rows, only_a), nd::softmax_rows(a));
  EXPECT_THROW(nd::elementwise(nd::ElementwiseKind::add, only_a), std::invalid_argument);
}

TEST(Elementwise, ShapeMismatchIsRejected) {
  const Tensor a = Tensor::matrix(2, 3);
  const Tensor b = Tensor::matrix(3, 2);
  EXPECT_THROW(nd::add(a, b), std::invalid_argument);
  EXPECT_THROW(nd::sub(a, b), std::invalid_argument);
  EXPECT_THROW(nd::mul(a, b), std::invalid_argument);
  EXPECT_THROW(nd::add_row(a, Tensor::matrix(1, 2)), std::invalid_argument);
}

TEST(Elementwise, AddRowBroadcastsOverRows) {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{10, 20}});
  EXPECT_EQ(nd::add_row(x, b), Tensor::matrix({{11, 22}, {13, 24}}));
}

TEST(Elementwise, ConcatColsPlacesBlocksSideBySide) {
  const Tensor a = Tensor::matrix({{1}, {2}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  const Tensor* parts[] = {&a, &b};
  EXPECT_EQ(nd::concat_cols(parts), Tensor::matrix({{1, 3, 4}, {2, 5, 6}}));
  const Tensor c = Tensor::matrix(3, 1);
  const Tensor* bad[] = {&a, &c};
  EXPECT_THROW(nd::concat_cols(bad), std::invalid_argument);
}

TEST(Elementwise, OutputsStayFiniteOnFiniteInputs) {
  std::mt19937_64 rng(13);
  Tensor x = trivqa::testing::random_matrix(rng, 4, 4);
  for (double& v : x.data()) v *= 1e3;
  EXPECT_TRUE(nd::all_finite(nd::softmax_rows(x)));
  EXPECT_TRUE(nd::all_finite(nd::log_softmax_rows(x)));
  EXPECT_TRUE(nd::all_finite(nd::matmul(x, x)));
  EXPECT_TRUE(nd::all_finite(nd::relu(x)));
}

}  // namespace
