#include "oracles.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace evoi;

namespace {

Matrix unit_pair() {
  Matrix x(2, 2);
  x << 1, 0, 0, 1;
  return x;
}

Catalog three_items() {
  Matrix items(3, 2);
  items << 2, 0, 0, 2, 1, 1;
  return Catalog(items);
}

std::pair<std::vector<Index>, double> enumerate_pairs(const Catalog& c, const ParticleBelief& b,
                                                      const ResponseModel& model) {
  std::vector<Index> best;
  double best_v = -1e300;
  for (Index i = 0; i < c.size(); ++i)
    for (Index j = i + 1; j < c.size(); ++j) {
      const double v = oracle::evoi(gather_items(c, {i, j}), b, c, model);
      if (v > best_v + kTieTolerance) {
        best_v = v;
        best = {i, j};
      }
    }
  return {best, best_v};
}

}  // namespace

TEST(RandomQuery, WholeCatalog) {
  Rng rng = make_rng(1);
  Catalog c = synth_catalog({5, 2, 1});
  QuerySlate q = random_query(c, 5, rng);
  std::vector<Index> items = *q.item_indices;
  std::sort(items.begin(), items.end());
  EXPECT_EQ(items, (std::vector<Index>{0, 1, 2, 3, 4}));
}

TEST(RandomQuery, Seeded) {
  Catalog c = synth_catalog({50, 2, 1});
  Rng a = make_rng(9), b = make_rng(9);
  EXPECT_EQ(*random_query(c, 3, a).item_indices, *random_query(c, 3, b).item_indices);
}

TEST(RandomQuery, PairsUniform) {
  Catalog c = synth_catalog({10, 2, 1});
  Rng rng = make_rng(2);
  std::map<std::pair<Index, Index>, int> count;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    auto q = *random_query(c, 2, rng).item_indices;
    count[{std::min(q[0], q[1]), std::max(q[0], q[1])}]++;
  }
  EXPECT_EQ(count.size(), 45u);
  for (const auto& [pair, k] : count) EXPECT_NEAR(k / static_cast<double>(n), 1.0 / 45.0, 0.005);
}

TEST(Exhaustive, TwoParticleInstance) {
  ParticleBelief b(unit_pair());
  for (auto model : {ResponseModel::logistic(0.5), ResponseModel::noiseless()}) {
    StrategyResult r = exhaustive_search(three_items(), b, 2, model, 1000);
    auto [want, value] = enumerate_pairs(three_items(), b, model);
    EXPECT_EQ(*r.slate.item_indices, want);
    EXPECT_NEAR(r.evoi, value, 1e-12);
  }
  EXPECT_EQ(*exhaustive_search(three_items(), b, 2, ResponseModel::logistic(0.5), 1000).slate.item_indices,
            (std::vector<Index>{0, 1}));
}

TEST(Exhaustive, SingleParticleReturnsFirstPair) {
  Rng rng = make_rng(3);
  Catalog c(oracle::random_matrix(12, 3, rng));
  ParticleBelief b(oracle::random_matrix(1, 3, rng));
  StrategyResult r = exhaustive_search(c, b, 2, ResponseModel::logistic(0.1), 1000);
  EXPECT_NEAR(r.evoi, 0.0, 1e-12);
  EXPECT_EQ(*r.slate.item_indices, (std::vector<Index>{0, 1}));
}

TEST(Exhaustive, DominatesEveryPair) {
  Rng rng = make_rng(4);
  Catalog c(oracle::random_matrix(30, 4, rng));
  ParticleBelief b = oracle::random_belief(20, 4, rng);
  const auto model = ResponseModel::logistic(0.2);
  StrategyResult r = exhaustive_search(c, b, 2, model, 1000);
  EvoiEvaluator ev(b, c, model);
  for (Index i = 0; i < 30; ++i)
    for (Index j = i + 1; j < 30; ++j) EXPECT_GE(r.evoi, ev.evoi_items({i, j}) - 1e-12);
}

TEST(Exhaustive, RefusesOverBudget) {
  Rng rng = make_rng(5);
  Catalog c(oracle::random_matrix(100, 3, rng));
  ParticleBelief b = oracle::random_belief(5, 3, rng);
  EXPECT_THROW(exhaustive_search(c, b, 3, ResponseModel::logistic(0.1), 1000), BudgetExceeded);
}

TEST(Top5Exhaustive, PoolIsCatalog) {
  Rng rng = make_rng(6);
  Catalog c(oracle::random_matrix(5, 3, rng));
  ParticleBelief b = oracle::random_belief(10, 3, rng);
  const auto model = ResponseModel::logistic(0.2);
  EXPECT_EQ(*top5_exhaustive(c, b, 2, model).slate.item_indices,
            *exhaustive_search(c, b, 2, model, 1000).slate.item_indices);
}

TEST(Top5Exhaustive, KEqualsPool) {
  Rng rng = make_rng(7);
  Catalog c(oracle::random_matrix(40, 3, rng));
  ParticleBelief b = oracle::random_belief(10, 3, rng);
  auto r = top5_exhaustive(c, b, 5, ResponseModel::logistic(0.2));
  std::vector<Index> want;
  for (const auto& s : top_k_by_direction(c, posterior_mean(b), 5)) want.push_back(s.index);
  std::sort(want.begin(), want.end());
  EXPECT_EQ(*r.slate.item_indices, want);
}

TEST(Top5Exhaustive, DominatedByExhaustive) {
  Rng rng = make_rng(8);
  Catalog c(oracle::random_matrix(100, 4, rng));
  ParticleBelief b = oracle::random_belief(20, 4, rng);
  const auto model = ResponseModel::logistic(0.2);
  EXPECT_LE(top5_exhaustive(c, b, 2, model).evoi, exhaustive_search(c, b, 2, model, 10000).evoi + 1e-12);
}

TEST(Greedy, MatchesBruteForceOracle) {
  const auto model = ResponseModel::logistic(0.5);
  ParticleBelief b(unit_pair());
  auto peu_obj = [&](const Matrix& x) { return oracle::peu(x, b, three_items(), model); };
  auto su_obj = [&](const Matrix& x) { return oracle::selection_utility(x, b, model); };
  EXPECT_EQ(*greedy(three_items(), b, 2, model, GreedyObjective::peu).slate.item_indices,
            oracle::greedy(three_items(), b, 2, peu_obj));
  EXPECT_EQ(*greedy(three_items(), b, 2, model, GreedyObjective::selection_utility).slate.item_indices,
            oracle::greedy(three_items(), b, 2, su_obj));
}

TEST(Greedy, MatchesOracleOnRandomInstances) {
  Rng rng = make_rng(9);
  for (int rep = 0; rep < 5; ++rep) {
    Catalog c(oracle::random_matrix(40, 4, rng));
    ParticleBelief b = oracle::random_belief(15, 4, rng);
    const auto model = ResponseModel::logistic(0.3);
    auto su_obj = [&](const Matrix& x) { return oracle::selection_utility(x, b, model); };
    auto peu_obj = [&](const Matrix& x) { return oracle::peu(x, b, c, model); };
    EXPECT_EQ(*greedy(c, b, 3, model).slate.item_indices, oracle::greedy(c, b, 3, su_obj));
    EXPECT_EQ(*greedy(c, b, 3, model, GreedyObjective::peu).slate.item_indices, oracle::greedy(c, b, 3, peu_obj));
  }
}

TEST(Greedy, SingleParticleTiesFollowEuOrder) {
  Rng rng = make_rng(10);
  Catalog c(oracle::random_matrix(50, 3, rng));
  ParticleBelief b(oracle::random_matrix(1, 3, rng));
  std::vector<Index> want;
  for (const auto& s : top_k_by_direction(c, posterior_mean(b), 4)) want.push_back(s.index);
  // One particle: PEU ties everywhere, as does noiseless selection utility.
  EXPECT_EQ(*greedy(c, b, 4, ResponseModel::logistic(0.1), GreedyObjective::peu).slate.item_indices, want);
  EXPECT_EQ(*greedy(c, b, 4, ResponseModel::noiseless()).slate.item_indices, want);
}

TEST(RandUserTopItem, DistinctTops) {
  Matrix items(4, 2);
  items << 3, 0, 0, 3, -3, 0, 0, -3;
  Catalog c(items);
  Matrix u(2, 2);
  u << -1, 0.1, 0.1, -1;
  Rng rng = make_rng(11);
  auto q = *rand_user_top_item(c, ParticleBelief(u), 2, rng).item_indices;
  std::sort(q.begin(), q.end());
  EXPECT_EQ(q, (std::vector<Index>{2, 3}));
}

TEST(RandUserTopItem, IdenticalParticlesUseCollisionRule) {
  Rng rng = make_rng(12);
  Catalog c(oracle::random_matrix(30, 3, rng));
  Matrix u = Matrix::Ones(6, 3);
  u.col(1).setConstant(-0.5);
  std::vector<Index> want;
  for (const auto& s : top_k_by_direction(c, u.row(0).transpose(), 3)) want.push_back(s.index);
  EXPECT_EQ(*rand_user_top_item(c, ParticleBelief(u), 3, rng).item_indices, want);
}

TEST(RandUserTopItem, Seeded) {
  Rng rng = make_rng(13);
  Catalog c(oracle::random_matrix(30, 3, rng));
  ParticleBelief b = oracle::random_belief(20, 3, rng);
  Rng a = make_rng(5), bb = make_rng(5);
  EXPECT_EQ(*rand_user_top_item(c, b, 3, a).item_indices, *rand_user_top_item(c, b, 3, bb).item_indices);
}

TEST(RandUserTopItem, FewerParticlesThanItems) {
  Rng rng = make_rng(14);
  Catalog c(oracle::random_matrix(30, 3, rng));
  ParticleBelief b(oracle::random_matrix(1, 3, rng));
  auto q = *rand_user_top_item(c, b, 3, rng).item_indices;
  std::vector<Index> want;
  for (const auto& s : top_k_by_direction(c, b.particle(0).transpose(), 3)) want.push_back(s.index);
  EXPECT_EQ(q, want);
}

TEST(QueryIteration, FixedPointReturnsInput) {
  Catalog c(unit_pair());
  ParticleBelief b(unit_pair());
  QuerySlate init = QuerySlate::from_items(c, {0, 1});
  auto t = query_iteration(init, b, c, ResponseModel::noiseless(), 20);
  EXPECT_EQ(t.iterations, 1u);
  EXPECT_EQ(*t.best.item_indices, (std::vector<Index>{0, 1}));
}

TEST(QueryIteration, NoiselessMonotone) {
  Rng rng = make_rng(15);
  int steps = 0;
  for (int rep = 0; rep < 40; ++rep) {
    Catalog c(oracle::random_matrix(40, 3, rng));
    ParticleBelief b = oracle::random_belief(20, 3, rng);
    Rng r = make_rng(static_cast<std::uint64_t>(rep));
    auto t = query_iteration(random_query(c, 2, r), b, c, ResponseModel::noiseless(), 20);
    for (std::size_t s = 1; s < t.evoi_per_step.size(); ++s, ++steps)
      EXPECT_GE(t.evoi_per_step[s], t.evoi_per_step[s - 1] - 1e-9) << "instance " << rep << " step " << s;
  }
  EXPECT_GT(steps, 0);
}

TEST(QueryIteration, ConvergesFromWorstPair) {
  Matrix items(4, 2);
  items << 2, 0, 0, 2, 1, 1, 0.5, 0.5;
  Catalog c(items);
  ParticleBelief b(unit_pair());
  const auto model = ResponseModel::noiseless();
  EvoiEvaluator ev(b, c, model);
  EXPECT_NEAR(ev.evoi_items({2, 3}), 0.0, 1e-15);
  auto t = query_iteration(QuerySlate::from_items(c, {2, 3}), b, c, model, 20);
  StrategyResult ex = exhaustive_search(c, b, 2, model, 1000);
  EXPECT_EQ(*t.best.item_indices, *ex.slate.item_indices);
  EXPECT_NEAR(t.best_evoi, ex.evoi, 1e-12);
}

TEST(QueryIteration, RestartsDeterministic) {
  Rng rng = make_rng(16);
  Catalog c(oracle::random_matrix(200, 4, rng));
  ParticleBelief b = oracle::random_belief(30, 4, rng);
  StrategyConfig cfg;
  cfg.seed = 77;
  auto a = query_iteration_restarts(c, b, ResponseModel::logistic(0.1), cfg);
  auto bb = query_iteration_restarts(c, b, ResponseModel::logistic(0.1), cfg);
  EXPECT_EQ(*a.slate.item_indices, *bb.slate.item_indices);
  EXPECT_EQ(a.evoi, bb.evoi);
  auto r = rand_user_top_item_restarts(c, b, ResponseModel::logistic(0.1), cfg);
  EXPECT_LE(r.evoi, exhaustive_search(c, b, 2, ResponseModel::logistic(0.1), 100000).evoi + 1e-12);
}
