#include "oracles.hpp"
#include "tmpdir.hpp"

#include <gtest/gtest.h>

using namespace evoi;

namespace {

Matrix unit_pair() {
  Matrix x(2, 2);
  x << 1, 0, 0, 1;
  return x;
}

}  // namespace

TEST(Prior, StandardNormalDeterministic) {
  PriorSpec spec{PriorKind::standard_normal, 10, ""};
  ParticleBelief a = sample_prior(spec, 100, 5);
  ParticleBelief b = sample_prior(spec, 100, 5);
  EXPECT_EQ(a.particles(), b.particles());
  EXPECT_EQ(a.weights(), b.weights());
  for (Eigen::Index j = 0; j < a.weights().size(); ++j) EXPECT_DOUBLE_EQ(a.weights()[j], 1.0 / 100.0);
}

TEST(Prior, EmpiricalFileUsesEveryRow) {
  TempDir dir;
  std::ostringstream csv;
  csv << "id,name,e0,e1,e2\n";
  for (int r = 0; r < 943; ++r) csv << "u" << r << ",," << r << "," << -r << "," << 0.5 * r << "\n";
  auto path = dir.write("users.csv", csv.str());
  ParticleBelief b = sample_prior(PriorSpec{PriorKind::empirical_file, 3, path}, 943, 1);
  ASSERT_EQ(b.size(), 943u);
  for (Eigen::Index j = 0; j < 943; ++j) {
    EXPECT_DOUBLE_EQ(b.particles()(j, 0), static_cast<double>(j));
    EXPECT_NEAR(b.weights()[j], 1.0 / 943.0, 1e-15);
  }
  ParticleBelief sub = sample_prior(PriorSpec{PriorKind::empirical_file, 3, path}, 100, 1);
  EXPECT_EQ(sub.size(), 100u);
  EXPECT_THROW(sample_prior(PriorSpec{PriorKind::empirical_file, 4, path}, 10, 1), InvalidArgument);
  EXPECT_THROW(sample_prior(PriorSpec{PriorKind::empirical_file, 3, path}, 944, 1), InvalidArgument);
}

TEST(Response, SymmetricIsUniform) {
  for (double tau : {0.01, 1.0, 100.0}) {
    Vector p = response_probs(unit_pair(), Vector::Ones(2), ResponseModel::logistic(tau));
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    EXPECT_NEAR(p[1], 0.5, 1e-15);
  }
}

TEST(Response, LogisticClosedForm) {
  Vector p = response_probs(unit_pair(), Vector::Unit(2, 0), ResponseModel::logistic(1.0));
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (1 + e), 1e-12);
  EXPECT_NEAR(p[1], 1 / (1 + e), 1e-12);
  EXPECT_NEAR(p[0], 0.73106, 1e-5);
}

TEST(Response, Noiseless) {
  Vector p = response_probs(unit_pair(), Vector::Unit(2, 0), ResponseModel::noiseless());
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
}

TEST(Response, ExtremeUtilitiesStayFinite) {
  Matrix x(2, 1);
  x << 1e6, -1e6;
  Vector p = response_probs(x, Vector::Ones(1), ResponseModel::logistic(1e-3));
  EXPECT_TRUE(p.allFinite());
  EXPECT_EQ(p[0], 1.0);
}

TEST(Response, MatchesLoopOracle) {
  Rng rng = make_rng(3);
  Matrix slate = oracle::random_matrix(4, 6, rng);
  Matrix U = oracle::random_matrix(5, 6, rng);
  Matrix p = response_matrix(slate, U, ResponseModel::logistic(0.3));
  for (Eigen::Index j = 0; j < 5; ++j) {
    auto want = oracle::probs(slate, U, j, ResponseModel::logistic(0.3));
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(p(j, i), want[static_cast<std::size_t>(i)], 1e-14);
  }
}

TEST(SampleResponse, NoiselessIsArgmax) {
  Rng rng = make_rng(1);
  Matrix x(3, 2);
  x << 0, 1, 2, 0, 1, 1;
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_response(x, Vector::Unit(2, 0), ResponseModel::noiseless(), rng), 1u);
}

TEST(SampleResponse, SymmetricFrequency) {
  Rng rng = make_rng(2);
  int zeros = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) zeros += sample_response(unit_pair(), Vector::Ones(2), ResponseModel::logistic(1.0), rng) == 0;
  EXPECT_NEAR(zeros / static_cast<double>(n), 0.5, 0.01);
}

TEST(SampleResponse, IdenticalItemsFrequency) {
  Rng rng = make_rng(4);
  Matrix x(2, 2);
  x << 0.3, -1, 0.3, -1;
  int zeros = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) zeros += sample_response(x, Vector::Unit(2, 0), ResponseModel::logistic(0.1), rng) == 0;
  EXPECT_NEAR(zeros / static_cast<double>(n), 0.5, 0.01);
}

TEST(Bayes, UninformativeSlateKeepsWeights) {
  Rng rng = make_rng(5);
  ParticleBelief b = oracle::random_belief(20, 3, rng);
  Matrix x(2, 3);
  x.row(0) << 1, 2, 3;
  x.row(1) = x.row(0);
  ParticleBelief post = bayes_update(b, x, 1, ResponseModel::logistic(0.1));
  for (Eigen::Index j = 0; j < 20; ++j) EXPECT_NEAR(post.weights()[j], b.weights()[j], 1e-15);
}

TEST(Bayes, TwoParticleNoiseless) {
  ParticleBelief b(unit_pair());
  ParticleBelief post = bayes_update(b, unit_pair(), 0, ResponseModel::noiseless());
  EXPECT_EQ(post.weights()[0], 1.0);
  EXPECT_EQ(post.weights()[1], 0.0);
}

TEST(Bayes, TwoParticleLogistic) {
  ParticleBelief b(unit_pair());
  ParticleBelief post = bayes_update(b, unit_pair(), 0, ResponseModel::logistic(1.0));
  const double q = std::exp(1.0) / (1 + std::exp(1.0));
  EXPECT_NEAR(post.weights()[0], q / (q + (1 - q)), 1e-12);
  EXPECT_NEAR(post.weights()[0], 0.73106, 1e-5);
  EXPECT_NEAR(post.weights()[1], 0.26894, 1e-5);
}

TEST(Bayes, DegeneratePosteriorRaised) {
  Matrix u(1, 2);
  u << 1, 0;
  ParticleBelief b(u);
  EXPECT_THROW(bayes_update(b, unit_pair(), 1, ResponseModel::noiseless()), DegeneratePosterior);
}

TEST(Bayes, LongLogisticChainStaysPositive) {
  // Weights that underflow in the linear domain survive in the log domain.
  Matrix u(2, 1);
  u << 1, -1;
  ParticleBelief b(u);
  Matrix x(2, 1);
  x << 1, -1;
  for (int t = 0; t < 200; ++t) b = bayes_update(b, x, 0, ResponseModel::logistic(0.01));
  EXPECT_TRUE(std::isfinite(b.log_weights()[1]));
  EXPECT_LT(b.log_weights()[1], -1000.0);
  EXPECT_EQ(b.weights()[0], 1.0);
}

TEST(PosteriorMean, Basics) {
  Matrix one(1, 3);
  one << 1, 2, 3;
  EXPECT_EQ(posterior_mean(ParticleBelief(one)), one.row(0).transpose());
  Matrix opp(2, 2);
  opp << 1, 0, -1, 0;
  EXPECT_NEAR(posterior_mean(ParticleBelief(opp)).norm(), 0.0, 1e-15);
  Rng rng = make_rng(6);
  ParticleBelief b = oracle::random_belief(50, 4, rng);
  EXPECT_LT((posterior_mean(b) - oracle::posterior_mean(b)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BestItem, DelegatesToTopK) {
  Matrix items(2, 2);
  items << 1, 0, 0, 1;
  Catalog c(items);
  Matrix u(1, 2);
  u << 1, 0;
  EXPECT_EQ(best_item(ParticleBelief(u), c), (ScoredItem{0, 1.0}));
  Matrix zero = Matrix::Zero(1, 2);
  EXPECT_EQ(best_item(ParticleBelief(zero), c).index, 0u);
  Rng rng = make_rng(8);
  Catalog big(oracle::random_matrix(100, 5, rng));
  ParticleBelief b = oracle::random_belief(30, 5, rng);
  EXPECT_EQ(best_item(b, big).index, oracle::top_k(big, oracle::posterior_mean(b), 1)[0].first);
}

TEST(Regret, Values) {
  Matrix items(2, 2);
  items << 1, 0, 0, 1;
  Catalog c(items);
  Vector u(2);
  u << 2, 1;
  EXPECT_DOUBLE_EQ(regret(u, 0, c), 0.0);
  EXPECT_DOUBLE_EQ(regret(u, 1, c), 1.0);
  Rng rng = make_rng(9);
  Catalog big(oracle::random_matrix(200, 4, rng));
  Vector t = oracle::random_matrix(1, 4, rng).row(0).transpose();
  double top = -1e300;
  for (Index i = 0; i < big.size(); ++i) top = std::max(top, big.item(i).dot(t));
  EXPECT_NEAR(regret(t, 17, big), top - big.item(17).dot(t), 1e-12);
}

TEST(Ess, Values) {
  Rng rng = make_rng(10);
  ParticleBelief uni(oracle::random_matrix(7, 2, rng));
  EXPECT_NEAR(effective_sample_size(uni), 7.0, 1e-12);
  Vector one_hot = Vector::Zero(3);
  one_hot[1] = 1;
  EXPECT_NEAR(effective_sample_size(ParticleBelief::from_weights(oracle::random_matrix(3, 2, rng), one_hot)), 1.0, 1e-12);
  Vector w(3);
  w << 0.5, 0.25, 0.25;
  EXPECT_NEAR(effective_sample_size(ParticleBelief::from_weights(oracle::random_matrix(3, 2, rng), w)), 8.0 / 3.0, 1e-9);
}

TEST(Resample, OneHotCopies) {
  Rng rng = make_rng(12);
  Matrix u = oracle::random_matrix(5, 3, rng);
  Vector w = Vector::Zero(5);
  w[3] = 1;
  ParticleBelief r = resample(ParticleBelief::from_weights(u, w), 0.0, rng);
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_EQ(r.particles().row(j), u.row(3));
  EXPECT_NEAR(effective_sample_size(r), 5.0, 1e-12);
}

TEST(Resample, DrawsFromOriginals) {
  Rng rng = make_rng(13);
  Matrix u = oracle::random_matrix(8, 2, rng);
  ParticleBelief r = resample(ParticleBelief(u), 0.0, rng);
  for (Eigen::Index j = 0; j < 8; ++j) {
    bool found = false;
    for (Eigen::Index o = 0; o < 8; ++o) found = found || r.particles().row(j) == u.row(o);
    EXPECT_TRUE(found);
  }
}

TEST(Resample, MeanPreservedStatistically) {
  Rng rng = make_rng(14);
  const Index m = 10000;
  ParticleBelief b = oracle::random_belief(m, 3, rng);
  ParticleBelief r = resample(b, 0.0, rng);
  Vector before = posterior_mean(b), after = posterior_mean(r);
  for (Eigen::Index c = 0; c < 3; ++c) {
    // Standard error of the resampled mean under multinomial draws.
    Vector col = b.particles().col(c);
    const double var = b.weights().dot((col.array() - before[c]).square().matrix());
    EXPECT_LT(std::abs(after[c] - before[c]), 3.0 * std::sqrt(var / static_cast<double>(m)));
  }
}

TEST(Snapshot, RoundTrip) {
  Rng rng = make_rng(15);
  ParticleBelief b = oracle::random_belief(10, 3, rng);
  std::stringstream ss;
  save_belief_snapshot(b, ss);
  ParticleBelief back = load_belief_snapshot(ss);
  EXPECT_EQ(back.particles(), b.particles());
  EXPECT_LT((back.weights() - b.weights()).cwiseAbs().maxCoeff(), 1e-15);
}
