#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "swarmlearn/attention.hpp"
#include "test_util.hpp"

using namespace swarmlearn;
using swarmlearn::testing::random_matrix;

namespace {

IntraAttentionParams random_intra(std::size_t n, std::uint64_t seed) {
  return {ad::Var(random_matrix(n, n, seed)), ad::Var(random_matrix(n, n, seed + 1)),
          ad::Var(random_matrix(n, 1, seed + 2))};
}

void expect_columns_stochastic(const Matrix& m) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      EXPECT_GT(m(r, c), 0.0);
      EXPECT_LE(m(r, c), 1.0);
      acc += m(r, c);
    }
    EXPECT_NEAR(acc, 1.0, 1e-9);
  }
}

}  // namespace

TEST(Attention, IdenticalFeaturesGiveThatFeature) {
  const Matrix s = random_matrix(3, 1, 1);
  Matrix features(3, 4);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) features(r, c) = s[r];
  const IntraAttentionResult res = intra_attend(ad::Var(features), ad::Var(random_matrix(3, 1, 2)), random_intra(3, 3));
  for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(res.summary.value()[r], s[r], 1e-14);
}

TEST(Attention, ZeroScoringVectorGivesUniformWeights) {
  IntraAttentionParams p = random_intra(2, 5);
  p.v = ad::zeros(2, 1);
  const IntraAttentionResult res = intra_attend(ad::Var(random_matrix(2, 4, 6)), ad::zeros(2, 1), p);
  for (double w : res.weights.value().data()) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(Attention, IntraWeightsSumToOne) {
  const IntraAttentionResult res = intra_attend(ad::Var(random_matrix(4, 4, 7, 3.0)), ad::Var(random_matrix(4, 1, 8)),
                                                random_intra(4, 9));
  const auto& w = res.weights.value().values();
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
}

TEST(Attention, SoftmaxIsShiftInvariant) {
  const Matrix scores = random_matrix(1, 4, 10);
  Matrix shifted = scores;
  for (double& v : shifted.data()) v += 7.25;
  const Matrix a = ad::softmax_rows(ad::Var(scores)).value();
  const Matrix b = ad::softmax_rows(ad::Var(shifted)).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(Attention, IntraShapeMismatchIsRejected) {
  EXPECT_THROW(intra_attend(ad::Var(random_matrix(3, 4, 1)), ad::zeros(2, 1), random_intra(3, 1)), shape_error);
  EXPECT_THROW(intra_attend(ad::Var(random_matrix(3, 4, 1)), ad::zeros(3, 1), random_intra(2, 1)), shape_error);
}

TEST(Attention, IntraGradientMatchesFiniteDifferences) {
  const Matrix features = random_matrix(3, 4, 20), context = random_matrix(3, 1, 21);
  const ad::GradCheckReport r = ad::grad_check(
      [&](const std::vector<ad::Var>& p) {
        return ad::sum(intra_attend(ad::Var(features), ad::Var(context), {p[0], p[1], p[2]}).summary);
      },
      {random_matrix(3, 3, 22), random_matrix(3, 3, 23), random_matrix(3, 1, 24)}, 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(Attention, SingleParticleClosure) {
  const Matrix c = random_matrix(3, 1, 30);
  const InterAttentionResult r = inter_attend(ad::Var(c), ad::Var(random_matrix(3, 1, 31)), 1.0, 1.0);
  EXPECT_DOUBLE_EQ(r.similarity.value()[0], 1.0);
  EXPECT_DOUBLE_EQ(r.affinity.value()[0], 1.0);
  for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(r.mixed.value()[d], 2.0 * c[d], 1e-15);
}

TEST(Attention, TwinParticlesSplitEvenly) {
  // Both columns of Q and M are (0.5, 0.5), so e_j = gamma (0.25 c + 0.25 c) + c.
  const Matrix c = random_matrix(2, 1, 40);
  const Matrix x = random_matrix(2, 1, 41);
  Matrix cs(2, 2), xs(2, 2);
  for (std::size_t d = 0; d < 2; ++d) {
    cs(d, 0) = cs(d, 1) = c[d];
    xs(d, 0) = xs(d, 1) = x[d];
  }
  const double gamma = 1.0;
  const InterAttentionResult r = inter_attend(ad::Var(cs), ad::Var(xs), gamma, 1.0);
  for (double v : r.similarity.value().data()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (double v : r.affinity.value().data()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t d = 0; d < 2; ++d) EXPECT_NEAR(r.mixed.value()(d, j), (1.0 + gamma / 2.0) * c[d], 1e-15);
}

TEST(Attention, MixingMatchesDirectSummation) {
  const std::size_t n = 3, k = 3;
  const Matrix c = random_matrix(n, k, 50), x = random_matrix(n, k, 51);
  const double gamma = 0.7, l = 1.3;
  const InterAttentionResult r = inter_attend(ad::Var(c), ad::Var(x), gamma, l);
  // Term-by-term evaluation of the definitions.
  Matrix q(k, k), m(k, k);
  for (std::size_t j = 0; j < k; ++j) {
    double qs = 0.0, ms = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      double d2 = 0.0, dot = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        d2 += (x(d, i) - x(d, j)) * (x(d, i) - x(d, j));
        dot += c(d, i) * c(d, j);
      }
      q(i, j) = std::exp(-d2 / (2 * l));
      m(i, j) = std::exp(dot);
      qs += q(i, j);
      ms += m(i, j);
    }
    for (std::size_t i = 0; i < k; ++i) q(i, j) /= qs, m(i, j) /= ms;
  }
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t d = 0; d < n; ++d) {
      double e = c(d, j);
      for (std::size_t rr = 0; rr < k; ++rr) e += gamma * m(rr, j) * q(rr, j) * c(d, rr);
      EXPECT_NEAR(r.mixed.value()(d, j), e, 1e-12 * std::abs(e));
    }
}

TEST(Attention, QAndMAreColumnStochastic) {
  for (std::size_t k : {1u, 2u, 4u, 10u}) {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const InterAttentionResult r =
          inter_attend(ad::Var(random_matrix(2, k, 1000 + s)), ad::Var(random_matrix(2, k, 2000 + s, 3.0)), 1.0, 1.0);
      expect_columns_stochastic(r.similarity.value());
      expect_columns_stochastic(r.affinity.value());
    }
  }
}

TEST(Attention, PermutingParticlesPermutesOutputs) {
  const std::size_t n = 3, k = 4;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix c = random_matrix(n, k, 300 + s), x = random_matrix(n, k, 400 + s);
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(s);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix cp(n, k), xp(n, k);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t d = 0; d < n; ++d) cp(d, j) = c(d, perm[j]), xp(d, j) = x(d, perm[j]);
    const Matrix e = inter_attend(ad::Var(c), ad::Var(x), 1.0, 1.0).mixed.value();
    const Matrix ep = inter_attend(ad::Var(cp), ad::Var(xp), 1.0, 1.0).mixed.value();
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t d = 0; d < n; ++d) EXPECT_NEAR(ep(d, j), e(d, perm[j]), 1e-12);
  }
}

TEST(Attention, InterRejectsEmptyAndMismatched) {
  EXPECT_THROW(inter_attend(std::vector<ad::Var>{}, std::vector<ad::Var>{}, 1.0, 1.0), shape_error);
  EXPECT_THROW(inter_attend(ad::Var(Matrix(2, 3)), ad::Var(Matrix(2, 2)), 1.0, 1.0), shape_error);
}

TEST(Attention, InterGradientMatchesFiniteDifferences) {
  const ad::GradCheckReport r = ad::grad_check(
      [](const std::vector<ad::Var>& p) { return ad::sum(ad::tanh(inter_attend(p[0], p[1], 1.0, 1.0).mixed)); },
      {random_matrix(2, 3, 60), random_matrix(2, 3, 61)}, 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Attention, TraceShareExamples) {
  const Matrix half(2, 2, 0.5);
  EXPECT_NEAR(trace_share(half, half, 1.0), 2.5 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(trace_share(half, half, 0.0), 1.0);
  EXPECT_NEAR(off_trace_share(half, half, 1.0), 0.5 / 3.0, 1e-15);
  EXPECT_EQ(off_trace_share(half, half, 0.0), 0.0);
  EXPECT_THROW(trace_share(Matrix(2, 2), Matrix(3, 3), 1.0), shape_error);
}

TEST(Attention, TraceShareInUnitInterval) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const InterAttentionResult r =
        inter_attend(ad::Var(random_matrix(2, 4, 70 + s)), ad::Var(random_matrix(2, 4, 90 + s)), 1.0, 1.0);
    const double share = trace_share(r.similarity.value(), r.affinity.value(), 1.0);
    EXPECT_GT(share, 0.0);
    EXPECT_LT(share, 1.0);
  }
  // Far-apart particles: the share rounds to 1, its complement stays positive.
  const Matrix far(2, 2, std::vector<double>{-5.0, 5.0, -5.0, 5.0});
  const InterAttentionResult r = inter_attend(ad::Var(random_matrix(2, 2, 99)), ad::Var(far), 1.0, 1.0);
  const double off = off_trace_share(r.similarity.value(), r.affinity.value(), 1.0);
  EXPECT_GT(off, 0.0);
  EXPECT_LT(off, 1e-20);
}
