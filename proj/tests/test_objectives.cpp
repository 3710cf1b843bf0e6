#include <gtest/gtest.h>

#include "swarmlearn/objectives.hpp"

using namespace swarmlearn;

namespace {

// Frozen values from tests/oracles/generate.py.
FunctionInstance oracle_instance() {
  return FunctionInstance(Family::rastrigin_family,
                          Matrix(3, 3, std::vector<double>{1, -0.5, 0.25, 0.3, 2, -1, 0, 0.7, 1.5}), {0.5, -1, 2},
                          {1, -0.5, 0.8}, 3.0);
}
const std::vector<double> oracle_x = {0.3, -1.2, 0.75};
const std::vector<double> oracle_v = {0.2, -0.1, 0.4};

}  // namespace

TEST(Objectives, ValueMatchesOracle) {
  EXPECT_NEAR(oracle_instance().value(oracle_x), 17.920557724687264, 1e-12);
}

TEST(Objectives, GradientMatchesOracle) {
  const auto g = oracle_instance().gradient(oracle_x);
  const double expected[] = {17.865992988449335, -2.265003505775333, -15.810894737231006};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(g[i], expected[i], 1e-11);
}

TEST(Objectives, HessianVectorProductMatchesOracle) {
  const auto hv = oracle_instance().hessian_times(oracle_x, oracle_v);
  const double expected[] = {-6.943701170466526, 0.0619252926166334, 2.844999999999993};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(hv[i], expected[i], 1e-11);
}

TEST(Objectives, GradientMatchesFiniteDifferences) {
  const FunctionInstance f = sample_instance(Family::rastrigin_family, SearchSpace::box(4), 9, 10.0);
  const std::vector<double> x = {0.4, -1.3, 2.2, 0.05};
  const auto g = f.gradient(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto hi = x, lo = x;
    hi[i] += 1e-6;
    lo[i] -= 1e-6;
    EXPECT_NEAR(g[i], (f.value(hi) - f.value(lo)) / 2e-6, 1e-5 * (1 + std::abs(g[i])));
  }
}

TEST(Objectives, CanonicalRastriginHasZeroMinimumAtOrigin) {
  const FunctionInstance f = canonical_rastrigin(10);
  EXPECT_NEAR(f.value(std::vector<double>(10, 0.0)), 0.0, 1e-12);
  EXPECT_GT(f.value(std::vector<double>(10, 0.5)), 0.0);
  for (double g : f.gradient(std::vector<double>(10, 0.0))) EXPECT_NEAR(g, 0.0, 1e-12);
}

TEST(Objectives, QuadraticFamilyHasNoWave) {
  const FunctionInstance f = sample_instance(Family::quadratic, SearchSpace::box(3), 5);
  EXPECT_EQ(f.alpha(), 0.0);
  for (double c : f.c()) EXPECT_EQ(c, 0.0);
  EXPECT_GE(f.value(std::vector<double>{1.0, 2.0, -3.0}), 0.0);
}

TEST(Objectives, SamplingIsDeterministicPerSeed) {
  const SearchSpace s = SearchSpace::box(5);
  EXPECT_EQ(serialize(sample_instance(Family::rastrigin_family, s, 42)),
            serialize(sample_instance(Family::rastrigin_family, s, 42)));
  EXPECT_NE(serialize(sample_instance(Family::rastrigin_family, s, 42)),
            serialize(sample_instance(Family::rastrigin_family, s, 43)));
}

TEST(Objectives, SerializationRoundTripsExactly) {
  const FunctionInstance f = sample_instance(Family::rastrigin_family, SearchSpace::box(3), 77, 2.5);
  const FunctionInstance g = parse_instance(serialize(f));
  EXPECT_EQ(serialize(f), serialize(g));
  EXPECT_EQ(f.value(oracle_x), g.value(oracle_x));
}

TEST(Objectives, ParseRejectsMalformedRecords) {
  EXPECT_THROW(parse_instance("quadratic,2"), config_error);
  EXPECT_THROW(parse_instance("quadratic,2,0,1,2,3"), config_error);
  EXPECT_THROW(parse_instance("cubic,1,0,1,1,1"), config_error);
  EXPECT_THROW(parse_instance("quadratic,1,0,x,1,1"), config_error);
}

TEST(Objectives, DimensionMismatchIsShapeError) {
  EXPECT_THROW(oracle_instance().value(std::vector<double>{1.0, 2.0}), shape_error);
  EXPECT_THROW(FunctionInstance(Family::quadratic, Matrix(2, 3), {0, 0}, {0, 0}, 0), shape_error);
}

TEST(Objectives, SearchSpaceValidation) {
  EXPECT_THROW(SearchSpace::box(0), config_error);
  EXPECT_THROW(SearchSpace::box(2, 1.0, 1.0), config_error);
  EXPECT_NEAR(SearchSpace::box(2).log_volume(), 4.6526032392227235, 1e-12);
}

TEST(Objectives, TracedValueBackpropagatesGradient) {
  const FunctionInstance f = oracle_instance();
  ad::Tape tape;
  const ad::Var x = tape.parameter(Matrix::column(oracle_x));
  const TracedEvaluation ev = evaluate(f, x);
  EXPECT_NEAR(ev.value.scalar(), 17.920557724687264, 1e-12);
  const ad::Gradients g = tape.backward(ev.value);
  const auto expected = f.gradient(oracle_x);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g.of(x)[i], expected[i], 1e-12);
}

TEST(Objectives, TracedGradientBackpropagatesHessianProduct) {
  const FunctionInstance f = oracle_instance();
  ad::Tape tape;
  const ad::Var x = tape.parameter(Matrix::column(oracle_x));
  const TracedEvaluation ev = evaluate(f, x);
  const ad::Var vdotg = ad::sum(ad::hadamard(ev.gradient, ad::Var(Matrix::column(oracle_v))));
  const ad::Gradients g = tape.backward(vdotg);
  const auto hv = f.hessian_times(oracle_x, oracle_v);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g.of(x)[i], hv[i], 1e-12);
}

TEST(Objectives, UntracedEvaluationIsConstant) {
  const TracedEvaluation ev = evaluate(oracle_instance(), ad::Var(Matrix::column(oracle_x)));
  EXPECT_FALSE(ev.value.tracked());
  EXPECT_FALSE(ev.gradient.tracked());
}

TEST(Objectives, FamilyNamesParse) {
  EXPECT_EQ(parse_family("quadratic"), Family::quadratic);
  EXPECT_EQ(parse_family("rastrigin_family"), Family::rastrigin_family);
  EXPECT_THROW(parse_family("sphere"), config_error);
}

TEST(Objectives, SampledEntriesAreStandardNormal) {
  std::vector<double> entries;
  for (std::uint64_t s = 0; entries.size() < 10000; ++s) {
    const FunctionInstance f = sample_instance(Family::rastrigin_family, SearchSpace::box(10), s);
    entries.insert(entries.end(), f.a().data().begin(), f.a().data().end());
    entries.insert(entries.end(), f.b().begin(), f.b().end());
    entries.insert(entries.end(), f.c().begin(), f.c().end());
  }
  double mean = 0.0, var = 0.0;
  for (double e : entries) mean += e / static_cast<double>(entries.size());
  for (double e : entries) var += (e - mean) * (e - mean) / static_cast<double>(entries.size());
  EXPECT_NEAR(mean, 0.0, 0.05);
  EXPECT_NEAR(var, 1.0, 0.1);
}

TEST(Objectives, CanonicalRastriginAtUnitPoint) {
  EXPECT_NEAR(canonical_rastrigin(2).value(std::vector<double>{1.0, 1.0}), 2.0, 1e-12);
  EXPECT_NEAR(canonical_rastrigin(2).value(std::vector<double>{0.0, 0.0}), 0.0, 1e-12);
}

TEST(Objectives, CanonicalRastriginIsPositiveAwayFromOrigin) {
  const FunctionInstance f = canonical_rastrigin(10);
  const SearchSpace space = SearchSpace::box(10);
  Rng rng(5);
  std::uniform_real_distribution<double> u(space.lo[0], space.hi[0]);
  std::vector<double> x(10);
  double lowest = INFINITY;
  for (int s = 0; s < 1000000; ++s) {
    for (double& v : x) v = u(rng);
    lowest = std::min(lowest, f.value(x));
  }
  EXPECT_GT(lowest, 0.0);
}
