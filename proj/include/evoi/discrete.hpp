#pragma once

// Query-selection baselines that only ever consider feasible catalog items.

#include "evoi/evoi.hpp"

#include <numeric>

namespace evoi {

// Objective Greedy maximizes when appending an item.
//   selection_utility: sum_j w_j sum_i R(i|q;u_j) x_i.u_j (query items double as
//                      recommendations); one catalog sweep per added item.
//   peu:               exact PEU with deep retrieval; O(N^2) per added item.
enum class GreedyObjective { selection_utility, peu };

struct StrategyConfig {
  Index slate_size = 2;
  Index restarts = 10;
  Index max_iterations = 20;
  Index top_pool = 5;
  std::uint64_t seed = 0;
  std::uint64_t exhaustive_budget = 2'000'000;  // maximum number of slates enumerated
  GreedyObjective greedy_objective = GreedyObjective::selection_utility;
};

struct StrategyResult {
  QuerySlate slate;
  double evoi = 0.0;
  Index iterations = 0;       // query iteration: iterations of the best restart
  Index restarts_run = 0;
  Index restarts_aborted = 0;
};

namespace detail {

inline void require_slate_size(const Catalog& catalog, Index k) {
  if (k < 2) throw InvalidArgument("slate size must be >= 2");
  if (k > catalog.size()) throw InvalidArgument("slate size exceeds catalog size");
}

inline std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  // C(n, i) stays integral at every step; saturate once past the cap.
  unsigned __int128 c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > cap) return cap + 1;
  }
  return static_cast<std::uint64_t>(c);
}

// Advances `combo` (strictly increasing, values < n) to the next k-subset in
// lexicographic order. Returns false after the last one.
inline bool next_combination(std::vector<Index>& combo, Index n) {
  const Index k = combo.size();
  Index i = k;
  while (i > 0) {
    --i;
    if (combo[i] < n - k + i) {
      ++combo[i];
      for (Index j = i + 1; j < k; ++j) combo[j] = combo[j - 1] + 1;
      return true;
    }
  }
  return false;
}

}  // namespace detail

// k distinct items, uniformly at random.
inline QuerySlate random_query(const Catalog& catalog, Index k, Rng& rng) {
  detail::require_slate_size(catalog, k);
  std::vector<Index> picked;
  std::uniform_int_distribution<Index> pick(0, catalog.size() - 1);
  if (2 * k >= catalog.size()) {
    std::vector<Index> all(catalog.size());
    std::iota(all.begin(), all.end(), Index{0});
    for (Index i = 0; i < k; ++i) {
      std::uniform_int_distribution<Index> at(i, all.size() - 1);
      std::swap(all[i], all[at(rng)]);
    }
    picked.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    while (picked.size() < k) {
      Index c = pick(rng);
      if (std::find(picked.begin(), picked.end(), c) == picked.end()) picked.push_back(c);
    }
  }
  return QuerySlate::from_items(catalog, std::move(picked));
}

// EVOI-argmax over k-subsets of `pool` (sorted ascending); ties keep the
// lexicographically smallest index tuple.
inline StrategyResult exhaustive_over_pool(const EvoiEvaluator& evaluator, std::vector<Index> pool, Index k,
                                           std::uint64_t budget, const Deadline& deadline = {}) {
  std::sort(pool.begin(), pool.end());
  const Index n = pool.size();
  if (k < 2 || k > n) throw InvalidArgument("exhaustive search: invalid slate size for the pool");
  const std::uint64_t count = detail::binomial_capped(n, k, budget);
  if (count > budget)
    throw BudgetExceeded("exhaustive search over C(" + std::to_string(n) + "," + std::to_string(k) +
                         ") slates exceeds the budget of " + std::to_string(budget));
  std::vector<Index> combo(k);
  std::iota(combo.begin(), combo.end(), Index{0});
  std::vector<Index> items(k);
  std::vector<Index> best_items;
  double best = -std::numeric_limits<double>::infinity();
  std::uint64_t visited = 0;
  do {
    if ((++visited & 255u) == 0) deadline.check();
    for (Index i = 0; i < k; ++i) items[i] = pool[combo[i]];
    const double value = evaluator.evoi_items(items);
    if (best_items.empty() || strictly_better(value, best)) {
      best = value;
      best_items = items;
    }
  } while (detail::next_combination(combo, n));
  StrategyResult result{QuerySlate::from_items(evaluator.catalog(), best_items), best};
  return result;
}

inline StrategyResult exhaustive_search(const Catalog& catalog, const ParticleBelief& belief, Index k,
                                        const ResponseModel& model, std::uint64_t budget,
                                        const Deadline& deadline = {}) {
  detail::require_slate_size(catalog, k);
  EvoiEvaluator evaluator(belief, catalog, model);
  std::vector<Index> pool(catalog.size());
  std::iota(pool.begin(), pool.end(), Index{0});
  return exhaustive_over_pool(evaluator, std::move(pool), k, budget, deadline);
}

// Exhaustive search restricted to the `top_pool` items of highest prior EU.
inline StrategyResult top5_exhaustive(const Catalog& catalog, const ParticleBelief& belief, Index k,
                                      const ResponseModel& model, Index top_pool = 5, const Deadline& deadline = {}) {
  detail::require_slate_size(catalog, k);
  if (top_pool < k) throw InvalidArgument("top pool must hold at least k items");
  top_pool = std::min(top_pool, catalog.size());
  EvoiEvaluator evaluator(belief, catalog, model);
  std::vector<Index> pool;
  for (const auto& s : top_k_by_direction(catalog, posterior_mean(belief), top_pool)) pool.push_back(s.index);
  return exhaustive_over_pool(evaluator, std::move(pool), k, std::numeric_limits<std::uint64_t>::max(), deadline);
}

namespace detail {

// Selection utility of (slate + candidate) for every catalog item, in blocks.
// `slate_utils` is m x t (utilities of current slate items per particle).
inline Vector selection_utility_of_extensions(const Catalog& catalog, const ParticleBelief& belief,
                                              const Eigen::MatrixXd& slate_utils, const ResponseModel& model,
                                              const Deadline& deadline) {
  const Eigen::Index m = static_cast<Eigen::Index>(belief.size());
  const Vector& w = belief.weights();
  // Per-particle constants: top utility M_j, and for logistic
  //   A_j = sum_i exp((s_ji - M_j)/tau),  B_j = sum_i exp((s_ji - M_j)/tau) s_ji.
  Eigen::RowVectorXd top = slate_utils.rowwise().maxCoeff().transpose();
  Eigen::RowVectorXd a(m), b(m);
  const double tau = model.temperature;
  if (model.kind == ResponseKind::logistic) {
    for (Eigen::Index j = 0; j < m; ++j) {
      auto e = ((slate_utils.row(j).array() - top[j]) / tau).exp();
      a[j] = e.sum();
      b[j] = (e * slate_utils.row(j).array()).sum();
    }
  }
  const Matrix& items = catalog.items();
  const Eigen::MatrixXd particles_t = belief.particles().transpose();
  Vector out(items.rows());
  constexpr Eigen::Index kBlock = 1024;
  Eigen::MatrixXd z;
  Eigen::ArrayXXd value;
  for (Eigen::Index start = 0; start < items.rows(); start += kBlock) {
    deadline.check();
    const Eigen::Index len = std::min(kBlock, items.rows() - start);
    z.noalias() = items.middleRows(start, len) * particles_t;  // len x m
    if (model.kind == ResponseKind::logistic) {
      // One exponential per entry: the larger of (M_j, z) is the shift.
      Eigen::ArrayXXd diff = z.array().rowwise() - top.array();
      Eigen::ArrayXXd e = (-diff.abs() / tau).exp();
      auto below = diff <= 0.0;
      Eigen::ArrayXXd scale_old = below.select(Eigen::ArrayXXd::Ones(len, m), e);
      Eigen::ArrayXXd scale_new = below.select(e, Eigen::ArrayXXd::Ones(len, m));
      value = ((scale_old.rowwise() * b.array()) + z.array() * scale_new) /
              ((scale_old.rowwise() * a.array()) + scale_new);
    } else {
      value = z.array().max(Eigen::ArrayXXd(top.replicate(len, 1)));
    }
    out.segment(start, len).noalias() = value.matrix() * w;
  }
  return out;
}

}  // namespace detail

// Builds the slate one item at a time: the prior-EU argmax first, then the item
// maximizing the configured slate objective. Equal objective values prefer the
// higher prior-EU item, then the smaller index.
inline StrategyResult greedy(const Catalog& catalog, const ParticleBelief& belief, Index k, const ResponseModel& model,
                             GreedyObjective objective = GreedyObjective::selection_utility,
                             const Deadline& deadline = {}) {
  detail::require_slate_size(catalog, k);
  const Vector prior_eu = catalog.items() * posterior_mean(belief);
  std::vector<Index> slate;
  {
    Eigen::Index first = 0;
    for (Eigen::Index i = 1; i < prior_eu.size(); ++i)
      if (prior_eu[i] > prior_eu[first]) first = i;
    slate.push_back(static_cast<Index>(first));
  }
  EvoiEvaluator evaluator(belief, catalog, model);
  std::vector<char> in_slate(catalog.size(), 0);
  in_slate[slate.front()] = 1;

  auto better = [&](double value, Index idx, double best_value, Index best_idx) {
    if (strictly_better(value, best_value)) return true;
    if (strictly_better(best_value, value)) return false;
    return prior_eu[static_cast<Eigen::Index>(idx)] > prior_eu[static_cast<Eigen::Index>(best_idx)];
  };

  while (slate.size() < k) {
    Index best_idx = catalog.size();
    double best_value = -std::numeric_limits<double>::infinity();
    if (objective == GreedyObjective::selection_utility) {
      Eigen::MatrixXd slate_utils = belief.particles() * gather_items(catalog, slate).transpose();
      Vector values = detail::selection_utility_of_extensions(catalog, belief, slate_utils, model, deadline);
      for (Index c = 0; c < catalog.size(); ++c) {
        if (in_slate[c]) continue;
        const double v = values[static_cast<Eigen::Index>(c)];
        if (best_idx == catalog.size() || better(v, c, best_value, best_idx)) {
          best_value = v;
          best_idx = c;
        }
      }
    } else {
      std::vector<Index> extended = slate;
      extended.push_back(0);
      for (Index c = 0; c < catalog.size(); ++c) {
        if (in_slate[c]) continue;
        if ((c & 63u) == 0) deadline.check();
        extended.back() = c;
        const double v = evaluator.peu(gather_items(catalog, extended));
        if (best_idx == catalog.size() || better(v, c, best_value, best_idx)) {
          best_value = v;
          best_idx = c;
        }
      }
    }
    slate.push_back(best_idx);
    in_slate[best_idx] = 1;
  }
  QuerySlate q = QuerySlate::from_items(catalog, std::move(slate));
  const double value = evaluator.evoi(q);
  return StrategyResult{std::move(q), value};
}

// Top item of each of k particles drawn by weight without replacement; a
// collision moves that particle down its own ranking until the item is new.
inline QuerySlate rand_user_top_item(const Catalog& catalog, const ParticleBelief& belief, Index k, Rng& rng) {
  detail::require_slate_size(catalog, k);
  const Index m = belief.size();
  std::vector<double> w(belief.weights().data(), belief.weights().data() + m);
  std::vector<Index> chosen;
  while (chosen.size() < k) {
    double mass = std::accumulate(w.begin(), w.end(), 0.0);
    if (mass <= 0.0) {
      if (chosen.size() >= m) {
        // Fewer particles than slate items: cycle through the picks again.
        w.assign(belief.weights().data(), belief.weights().data() + m);
        mass = std::accumulate(w.begin(), w.end(), 0.0);
      } else {
        // Remaining particles all carry zero weight; fall back to uniform among them.
        for (Index j = 0; j < m; ++j)
          if (std::find(chosen.begin(), chosen.end(), j) == chosen.end()) w[j] = 1.0;
      }
    }
    std::discrete_distribution<Index> pick(w.begin(), w.end());
    Index j = pick(rng);
    chosen.push_back(j);
    w[j] = 0.0;
  }
  Matrix dirs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(catalog.dim()));
  for (Index i = 0; i < k; ++i) dirs.row(static_cast<Eigen::Index>(i)) = belief.particle(chosen[i]);
  auto ranked = top_k_multi(catalog, dirs, k);
  std::vector<Index> slate;
  for (Index i = 0; i < k; ++i) {
    for (const auto& cand : ranked[i]) {
      if (std::find(slate.begin(), slate.end(), cand.index) == slate.end()) {
        slate.push_back(cand.index);
        break;
      }
    }
  }
  return QuerySlate::from_items(catalog, std::move(slate));
}

struct QueryIterationTrace {
  QuerySlate best;
  double best_evoi = 0.0;
  Index iterations = 0;
  std::vector<double> evoi_per_step;  // EVOI of each visited slate, starting with the input
};

// q <- DeepRetrUniq(q) until the index set repeats or the iteration cap is hit;
// returns the visited slate with the highest EVOI.
inline QueryIterationTrace query_iteration(const QuerySlate& init, const ParticleBelief& belief,
                                           const Catalog& catalog, const ResponseModel& model,
                                           Index max_iterations, const Deadline& deadline = {}) {
  EvoiEvaluator evaluator(belief, catalog, model);
  auto key_of = [](std::vector<Index> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  std::set<std::vector<Index>> visited;
  QueryIterationTrace trace{init, evaluator.evoi(init), 0, {}};
  trace.evoi_per_step.push_back(trace.best_evoi);
  if (init.item_indices) visited.insert(key_of(*init.item_indices));
  QuerySlate current = init;
  while (trace.iterations < max_iterations) {
    deadline.check();
    ++trace.iterations;
    RecSlate rec = deep_retr_uniq(current, belief, catalog, model);
    if (!visited.insert(key_of(rec.item_indices)).second) break;
    QuerySlate next = QuerySlate::from_items(catalog, rec.item_indices);
    const double value = evaluator.evoi(next);
    trace.evoi_per_step.push_back(value);
    if (strictly_better(value, trace.best_evoi)) {
      trace.best_evoi = value;
      trace.best = next;
    }
    current = std::move(next);
  }
  return trace;
}

// Best of `restarts` query-iteration runs, each seeded by RandUserTopItem.
inline StrategyResult query_iteration_restarts(const Catalog& catalog, const ParticleBelief& belief,
                                               const ResponseModel& model, const StrategyConfig& config,
                                               const Deadline& deadline = {}) {
  detail::require_slate_size(catalog, config.slate_size);
  if (config.restarts < 1) throw InvalidArgument("restarts must be >= 1");
  std::optional<StrategyResult> best;
  for (Index r = 0; r < config.restarts; ++r) {
    Rng rng = make_rng(derive_seed(config.seed, 0x5149, r));
    QuerySlate init = rand_user_top_item(catalog, belief, config.slate_size, rng);
    QueryIterationTrace t = query_iteration(init, belief, catalog, model, config.max_iterations, deadline);
    if (!best || strictly_better(t.best_evoi, best->evoi)) {
      best = StrategyResult{std::move(t.best), t.best_evoi, t.iterations};
    }
  }
  best->restarts_run = config.restarts;
  return *best;
}

// RandUserTopItem as a standalone strategy: `restarts` draws, each compared
// with its own DeepRetrUniq projection; the best slate seen wins.
inline StrategyResult rand_user_top_item_restarts(const Catalog& catalog, const ParticleBelief& belief,
                                                  const ResponseModel& model, const StrategyConfig& config,
                                                  const Deadline& deadline = {}) {
  detail::require_slate_size(catalog, config.slate_size);
  if (config.restarts < 1) throw InvalidArgument("restarts must be >= 1");
  std::optional<StrategyResult> best;
  for (Index r = 0; r < config.restarts; ++r) {
    Rng rng = make_rng(derive_seed(config.seed, 0x5255, r));
    QuerySlate draw = rand_user_top_item(catalog, belief, config.slate_size, rng);
    QueryIterationTrace t = query_iteration(draw, belief, catalog, model, 1, deadline);
    if (!best || strictly_better(t.best_evoi, best->evoi)) best = StrategyResult{std::move(t.best), t.best_evoi, 1};
  }
  best->restarts_run = config.restarts;
  return *best;
}

}  // namespace evoi
