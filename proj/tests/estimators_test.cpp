#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cnce/estimators.hpp"
#include "cnce/gaussian_toy.hpp"

using namespace cnce;

namespace {

// Similarity matrix with a planted positive margin on the diagonal.
Matrix planted_sims(std::size_t n, double margin, std::uint64_t seed) {
  Rng r(seed);
  Matrix m(n, n);
  for (auto& x : m.data) x = r.normal();
  for (std::size_t i = 0; i < n; ++i) m(i, i) += margin;
  return m;
}

}  // namespace

TEST(NceTerm, Examples) {
  EXPECT_NEAR(nce_term(0.3, std::vector<double>{0.3, 0.3, 0.3}), 0.0, 1e-15);
  EXPECT_NEAR(nce_term(1.0, std::vector<double>{0.0}), 0.379885, 1e-6);
  EXPECT_NEAR(nce_term(1.0, std::vector<double>{0.0}), 1.0 - std::log((std::exp(1.0) + 1.0) / 2.0), 1e-15);
  EXPECT_NEAR(nce_term(0.0, std::vector<double>{std::log(3.0)}), -0.693147, 1e-6);
  EXPECT_THROW(nce_term(0.0, std::vector<double>{}), std::invalid_argument);
}

TEST(NceTerm, PermutationInvariantAndCeiling) {
  Rng r(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> negs(1 + r.index(30));
    for (auto& x : negs) x = r.uniform(-10, 10);
    const double pos = r.uniform(-10, 40);
    const double v = nce_term(pos, negs);
    auto shuffled = negs;
    std::reverse(shuffled.begin(), shuffled.end());
    EXPECT_NEAR(nce_term(pos, shuffled), v, 1e-12);
    EXPECT_LE(v, std::log(negs.size() + 1.0) + 1e-12);
  }
}

TEST(Estimators, ConstantCriticGivesZero) {
  const auto critic = constant_critic(4, 1.0);
  Rng dr(1);
  const auto data = sample_pairs(GaussianPairSpec::benchmark(), 200, dr);
  Rng r(2);
  const auto nce = nce_estimate(data, critic, 50, r);
  EXPECT_NEAR(nce.mean, 0.0, 1e-12);
  EXPECT_LE(nce.mean, 0.02041);
  const auto cnce = cnce_estimate(data, critic, 50, RingSpec{0.5, 1.0}, r);
  EXPECT_NEAR(cnce.mean, 0.0, 1e-12);
  EXPECT_EQ(nce.term_count, 51u);
}

TEST(Estimators, FullRingIsNce) {
  const Matrix sims = planted_sims(60, 1.0, 4);
  Rng a(7), b(7);
  EXPECT_EQ(nce_estimate(sims, 10, a).mean, cnce_estimate(sims, 10, RingSpec{0.0, 1.0}, b).mean);
  Rng c(7);
  EXPECT_EQ(nce_estimate(sims, 10, c).mean, [&] {
    Rng d(7);
    return adversarial_estimate(sims, 10, 1.0, d).mean;
  }());
}

TEST(Estimators, CoupledCnceIsMonotoneAndBelowNce) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix sims = planted_sims(120, 1.5, seed);
    const Rng base(seed + 100);
    Rng r = base;
    double prev = nce_estimate(sims, 30, r).mean;
    for (double w : {0.1, 0.25, 0.5, 0.75, 0.9, 0.95}) {
      Rng rw = base;
      const double v = cnce_estimate(sims, 30, RingSpec{w, 1.0}, rw).mean;
      EXPECT_LE(v, prev + 1e-12) << "seed " << seed << " omega " << w;
      prev = v;
    }
  }
}

TEST(Estimators, AdversarialSweepIncreasesAsSupportShrinks) {
  const Matrix sims = planted_sims(200, 0.5, 9);
  const Rng base(1);
  double prev = -1e9;
  for (double f : {1.0, 0.5, 0.2, 0.05}) {
    Rng r = base;
    const double v = adversarial_estimate(sims, 100, f, r).mean;
    EXPECT_GE(v, prev);
    prev = v;
  }
  Rng r = base;
  EXPECT_THROW(adversarial_estimate(sims, 100, 0.0, r), std::invalid_argument);
}

TEST(Estimators, Errors) {
  const Matrix sims = planted_sims(10, 1.0, 1);
  Rng r(0);
  EXPECT_THROW(nce_estimate(sims, 10, r), std::invalid_argument);
  EXPECT_THROW(nce_estimate(sims, 0, r), std::invalid_argument);
  // Nine candidates: floor(0.95 * 9) == floor(0.99 * 9) is an empty slice.
  EXPECT_THROW(cnce_estimate(sims, 3, RingSpec{0.95, 0.99}, r), std::invalid_argument);
  EXPECT_NO_THROW(cnce_estimate(sims, 3, RingSpec{0.95, 1.0}, r));
  EXPECT_THROW(nce_estimate(Matrix(3, 4), 1, r), std::invalid_argument);
}

TEST(EstimateRecord, SerializationAndCombine) {
  const Matrix sims = planted_sims(30, 1.0, 2);
  std::vector<EstimateRecord> recs;
  for (std::uint64_t s = 0; s < 3; ++s) {
    Rng r(s);
    recs.push_back(cnce_estimate(sims, 5, RingSpec{0.5, 1.0}, r));
  }
  const auto c = combine_seeds(recs);
  EXPECT_EQ(c.per_seed.size(), 3u);
  EXPECT_GE(c.mean, *std::min_element(c.per_seed.begin(), c.per_seed.end()));
  EXPECT_LE(c.mean, *std::max_element(c.per_seed.begin(), c.per_seed.end()));
  EXPECT_GE(c.std, 0.0);
  const auto j = c.to_json();
  EXPECT_EQ(j["term_count"], 6);
  EXPECT_EQ(j["omega"]["lower"], 0.5);
  EXPECT_EQ(EstimateRecord::csv_header(), "estimator,omega_lower,omega_upper,mean,stdev,seeds,k,term_count");
  EXPECT_EQ(recs[0].csv_row().substr(0, 10), "cnce,0.5,1");
  EXPECT_NE(recs[0].csv_row().find("n/a"), std::string::npos);
  Rng r(0);
  std::vector<EstimateRecord> mixed{recs[0], nce_estimate(sims, 5, r)};
  EXPECT_THROW(combine_seeds(mixed), std::invalid_argument);
}

TEST(LaObjective, Examples) {
  const Matrix bank = Matrix::from_rows({{1, 0}, {0, 1}, {0.6, 0.8}, {-1, 0}, {0.8, -0.6}});
  const std::vector<double> z{0.6, 0.8};
  const std::vector<std::size_t> same{0, 2, 4};
  EXPECT_NEAR(la_objective(z, bank, same, same, 0.5), 0.0, 1e-15);

  const std::vector<std::size_t> c1{1}, b1{3};
  EXPECT_NEAR(la_objective(z, bank, c1, b1, 0.5), 0.8 / 0.5 - (-0.6) / 0.5, 1e-12);

  // Naive summation oracle on 2 vs 3 element sets.
  const std::vector<std::size_t> c{0, 2}, b{1, 3, 4};
  const double tau = 0.2;
  auto s = [&](std::size_t j) { return std::exp(dot(z, bank.row(j)) / tau); };
  const double oracle = std::log((s(0) + s(2)) / 2.0) - std::log((s(1) + s(3) + s(4)) / 3.0);
  EXPECT_NEAR(la_objective(z, bank, c, b, tau), oracle, 1e-12);
  EXPECT_THROW(la_objective(z, bank, std::vector<std::size_t>{}, b, tau), std::invalid_argument);
}

TEST(BiasVariance, ConstantCriticIsDegenerate) {
  const Matrix sims(50, 50, 0.25);
  Rng r(1);
  const auto rep = bias_variance(sims, 10, RingSpec{0.5, 1.0}, 100, 20, 0.02041, r);
  EXPECT_EQ(rep.p.variance, 0.0);
  EXPECT_EQ(rep.q.variance, 0.0);
  EXPECT_NEAR(rep.p.bias, -0.02041, 1e-12);
  EXPECT_NEAR(rep.q.bias, -0.02041, 1e-12);
  ASSERT_TRUE(rep.complement.has_value());
}

TEST(BiasVariance, FullRingAgreesWithMarginal) {
  const Matrix sims = planted_sims(80, 1.0, 5);
  Rng r(2);
  const auto rep = bias_variance(sims, 20, RingSpec{0.0, 1.0}, 2000, 40, 0.1, r);
  EXPECT_FALSE(rep.complement.has_value());
  const double bias_se = std::hypot(rep.p.bias_se, rep.q.bias_se);
  const double var_se = std::hypot(rep.p.variance_se, rep.q.variance_se);
  EXPECT_LE(std::abs(rep.p.bias - rep.q.bias), 5 * bias_se);
  EXPECT_LE(std::abs(rep.p.variance - rep.q.variance), 5 * var_se);
}

TEST(BiasVariance, Preconditions) {
  const Matrix sims = planted_sims(20, 1.0, 5);
  Rng r(2);
  EXPECT_THROW(bias_variance(sims, 5, RingSpec{0.5, 1.0}, 99, 10, 0.0, r), std::invalid_argument);
  EXPECT_THROW(bias_variance(sims, 5, RingSpec{0.5, 1.0}, 100, 21, 0.0, r), std::invalid_argument);
}

TEST(Critic, ShortTrainingRaisesNceOverConstant) {
  Rng dr(0), tr(1), er(2);
  const auto spec = GaussianPairSpec::benchmark();
  // Stronger dependence than the benchmark so a short run learns something.
  GaussianPairSpec strong{Matrix::from_rows({{1, 0.8}, {0.8, 1}}), Matrix::from_rows({{0.2, 0}, {0, 0.2}})};
  const auto data = sample_pairs(strong, 400, dr);
  CriticTrainConfig c;
  c.epochs = 10;
  c.negatives = 50;
  const auto critic = train_critic(data, c, tr);
  EXPECT_GT(nce_estimate(data, critic, 50, er).mean, 0.05);
  const Matrix sims = critic.similarity_matrix(data);
  EXPECT_NEAR(sims(3, 7), critic(data.xs[3], data.ys[7]), 1e-12);
  EXPECT_LE(std::abs(sims(0, 0)), 1.0 / c.tau + 1e-12);
  (void)spec;
}
