#pragma once

// Ceteris-paribus partial comparison queries.
//
// A partial item is a vector in [0,1]^d (relaxed) or a 0/1 vector with exactly
// p ones (projected). Unselected coordinates are zero, so u . x only sees the
// selected attributes and the usual logistic model gives the partial response
// probabilities. Recommendations are still deep-retrieved over the full catalog.
//
// ContPartial ascends
//   G(X; Y) - lambda_t * sum_i ||sort(x_i) - j||_1,   lambda_t = lambda_0 * growth^t
// where j has its last p coordinates set to 1, Y is re-retrieved at every step,
// and X is clamped to [0,1] after each step.

#include "evoi/continuous.hpp"

namespace evoi {

struct PartialSlate {
  Matrix raw;  // k x d
  Index attrs_per_item = 1;
  bool projected = false;
  std::vector<std::string> attribute_names;

  Index size() const { return static_cast<Index>(raw.rows()); }

  // Selected attribute indices per row (the ones of a projected slate).
  std::vector<std::vector<Index>> selected() const {
    std::vector<std::vector<Index>> out(size());
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      for (Eigen::Index a = 0; a < raw.cols(); ++a)
        if (raw(i, a) > 0.5) out[static_cast<std::size_t>(i)].push_back(static_cast<Index>(a));
    return out;
  }

  std::vector<std::vector<std::string>> selected_names() const {
    std::vector<std::vector<std::string>> out;
    for (const auto& row : selected()) {
      std::vector<std::string> names;
      for (Index a : row)
        names.push_back(a < attribute_names.size() ? attribute_names[a] : "a" + std::to_string(a));
      out.push_back(std::move(names));
    }
    return out;
  }
};

inline Vector partial_response_probs(const PartialSlate& slate, const Vector& u, double tau) {
  return response_probs(slate.raw, u, ResponseModel::logistic(tau));
}

struct PenaltyValue {
  double value = 0.0;
  Vector subgradient;
};

namespace detail {

// Coordinate order for "p largest": descending value, ties to the smaller index.
inline std::vector<Index> descending_order(const Vector& x) {
  std::vector<Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return x(static_cast<Eigen::Index>(a)) > x(static_cast<Eigen::Index>(b));
  });
  return order;
}

inline void require_p(Index d, Index p) {
  if (p < 1 || p > d) throw InvalidArgument("attributes per item must be in [1, d]");
}

}  // namespace detail

inline PenaltyValue sorted_l1_penalty(const Vector& x, Index p) {
  detail::require_p(static_cast<Index>(x.size()), p);
  auto order = detail::descending_order(x);
  PenaltyValue out{0.0, Vector::Ones(x.size())};
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto a = static_cast<Eigen::Index>(order[r]);
    if (r < p) {
      out.value += 1.0 - x(a);
      out.subgradient(a) = -1.0;
    } else {
      out.value += x(a);
    }
  }
  return out;
}

inline Vector project_top_p(const Vector& x, Index p) {
  detail::require_p(static_cast<Index>(x.size()), p);
  auto order = detail::descending_order(x);
  Vector out = Vector::Zero(x.size());
  for (Index r = 0; r < p; ++r) out(static_cast<Eigen::Index>(order[r])) = 1.0;
  return out;
}

inline PartialSlate project_slate(const PartialSlate& slate) {
  PartialSlate out = slate;
  for (Eigen::Index i = 0; i < out.raw.rows(); ++i)
    out.raw.row(i) = project_top_p(slate.raw.row(i).transpose(), slate.attrs_per_item).transpose();
  out.projected = true;
  return out;
}

inline double partial_evoi(const PartialSlate& slate, const ParticleBelief& belief, const Catalog& catalog,
                           double tau_eval) {
  if (slate.raw.cols() != static_cast<Eigen::Index>(catalog.dim()))
    throw InvalidArgument("partial slate and catalog dimensions differ");
  EvoiEvaluator evaluator(belief, catalog, ResponseModel::logistic(tau_eval));
  return evaluator.evoi(slate.raw);
}

// One ContPartial step objective at X with the retrieved items held fixed.
inline ValueAndGradient partial_step_objective(const Matrix& X, const Matrix& retrieved, const ParticleBelief& belief,
                                               double tau, Index p, double lambda) {
  ValueAndGradient vg = objective_alter(X, retrieved, belief, tau);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    PenaltyValue pen = sorted_l1_penalty(X.row(i).transpose(), p);
    vg.value -= lambda * pen.value;
    vg.gradient.row(i) -= lambda * pen.subgradient.transpose();
  }
  return vg;
}

struct PartialConfig {
  Index restarts = 100;
  Index steps = 100;
  double learning_rate = 0.05;
  double lambda_initial = 0.01;
  double lambda_growth = 1.1;
  std::optional<double> tau_opt;  // default: the evaluation temperature
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

struct PartialResult {
  PartialSlate slate;
  double evoi = 0.0;
  Index best_restart = 0;
  std::vector<double> restart_evoi;
};

inline PartialSlate make_partial_slate(Matrix raw, Index p, const Catalog& catalog, bool projected) {
  std::vector<std::string> names;
  for (Index a = 0; a < catalog.dim(); ++a) names.push_back(catalog.attribute_name(a));
  return PartialSlate{std::move(raw), p, projected, std::move(names)};
}

inline PartialResult cont_partial(const PartialConfig& cfg, const ParticleBelief& belief, const Catalog& catalog,
                                  Index k, Index p, double tau_eval, const Deadline& deadline = {}) {
  catalog.require_partial_mode();
  const Index d = catalog.dim();
  detail::require_p(d, p);
  if (k < 2) throw InvalidArgument("slate size must be >= 2");
  if (cfg.restarts < 1) throw InvalidArgument("restarts must be >= 1");
  const double tau = cfg.tau_opt.value_or(tau_eval);
  const ResponseModel opt_model = ResponseModel::logistic(tau);
  EvoiEvaluator evaluator(belief, catalog, ResponseModel::logistic(tau_eval));
  std::map<std::vector<double>, double> scored;

  PartialResult result;
  std::optional<Index> best;
  for (Index r = 0; r < cfg.restarts; ++r) {
    Rng rng = make_rng(derive_seed(cfg.seed, 0x5041, r));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix X(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      for (Eigen::Index a = 0; a < X.cols(); ++a) X(i, a) = unit(rng);
    AdamAscent adam(X.rows(), X.cols(), AdamParams{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});
    double lambda = cfg.lambda_initial;
    for (Index s = 0; s < cfg.steps; ++s) {
      deadline.check();
      Matrix Y = deep_retrieval(QuerySlate{X, std::nullopt}, belief, catalog, opt_model).vectors;
      ValueAndGradient vg = partial_step_objective(X, Y, belief, tau, p, lambda);
      if (!vg.gradient.allFinite()) break;
      adam.step(X, vg.gradient);
      X = X.cwiseMax(0.0).cwiseMin(1.0);
      lambda *= cfg.lambda_growth;
    }
    PartialSlate projected = project_slate(make_partial_slate(X, p, catalog, false));
    std::vector<double> key(projected.raw.data(), projected.raw.data() + projected.raw.size());
    auto it = scored.find(key);
    if (it == scored.end()) it = scored.emplace(key, evaluator.evoi(projected.raw)).first;
    result.restart_evoi.push_back(it->second);
    if (!best || strictly_better(it->second, result.restart_evoi[*best])) {
      best = r;
      result.slate = std::move(projected);
    }
  }
  result.best_restart = *best;
  result.evoi = result.restart_evoi[*best];
  return result;
}

namespace detail {

inline bool row_in(const Matrix& rows, Eigen::Index count, const Vector& row) {
  for (Eigen::Index i = 0; i < count; ++i)
    if (rows.row(i) == row.transpose()) return true;
  return false;
}

// Adds to row `target` the single attribute that maximizes slate EVOI over rows
// [0, active). An attribute is skipped when the complete rows already use up
// every p-attribute completion of the grown row. Ties go to the smaller index.
inline void grow_row(Matrix& X, Eigen::Index target, Eigen::Index active, const std::vector<bool>& complete, Index p,
                     const EvoiEvaluator& evaluator) {
  const Index d = static_cast<Index>(X.cols());
  const Index have = static_cast<Index>((X.row(target).array() > 0.5).count()) + 1;
  const std::uint64_t completions = binomial_capped(d - have, p - have, std::numeric_limits<std::uint64_t>::max());
  std::optional<Eigen::Index> best_attr;
  double best_value = 0.0;
  for (Eigen::Index a = 0; a < X.cols(); ++a) {
    if (X(target, a) > 0.5) continue;
    X(target, a) = 1.0;
    std::uint64_t taken = 0;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      if (i != target && complete[static_cast<std::size_t>(i)] && (X.row(i).array() >= X.row(target).array()).all())
        ++taken;
    if (taken < completions) {
      const double value = evaluator.evoi(Matrix(X.topRows(active)));
      if (!best_attr || strictly_better(value, best_value)) {
        best_attr = a;
        best_value = value;
      }
    }
    X(target, a) = 0.0;
  }
  if (!best_attr) throw InvalidArgument("not enough attributes for distinct partial items");
  X(target, *best_attr) = 1.0;
}

}  // namespace detail

// Attribute with the largest weighted variance of u across particles.
inline Index max_variance_attribute(const ParticleBelief& belief) {
  Vector mean = posterior_mean(belief);
  Matrix centered = belief.particles().rowwise() - mean.transpose();
  Vector var = centered.cwiseAbs2().transpose() * belief.weights();
  Index best = 0;
  for (Eigen::Index a = 1; a < var.size(); ++a)
    if (strictly_better(var(a), var(static_cast<Eigen::Index>(best)))) best = static_cast<Index>(a);
  return best;
}

// Item 0 starts as the max-variance attribute. Item 1 grows to p attributes,
// then item 0 is padded to p, then items 2..k-1 grow one at a time.
inline PartialResult greedy_partial(const ParticleBelief& belief, const Catalog& catalog, Index k, Index p,
                                    double tau_eval, const Deadline& deadline = {}) {
  catalog.require_partial_mode();
  const Index d = catalog.dim();
  detail::require_p(d, p);
  if (k < 2) throw InvalidArgument("slate size must be >= 2");
  if (detail::binomial_capped(d, p, k) < k) throw InvalidArgument("not enough attributes for distinct partial items");
  EvoiEvaluator evaluator(belief, catalog, ResponseModel::logistic(tau_eval));
  Matrix X = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  std::vector<bool> complete(k, false);
  X(0, static_cast<Eigen::Index>(max_variance_attribute(belief))) = 1.0;
  complete[0] = p == 1;

  auto grow = [&](Eigen::Index target, Eigen::Index active, Index have) {
    for (Index n = have; n < p; ++n) {
      deadline.check();
      detail::grow_row(X, target, active, complete, p, evaluator);
    }
    complete[static_cast<std::size_t>(target)] = true;
  };
  grow(1, 2, 0);
  if (p > 1) grow(0, 2, 1);
  for (Eigen::Index i = 2; i < X.rows(); ++i) grow(i, i + 1, 0);

  PartialResult result;
  result.slate = make_partial_slate(X, p, catalog, true);
  result.evoi = evaluator.evoi(X);
  result.restart_evoi = {result.evoi};
  return result;
}

// All k-subsets of distinct single-attribute items (p = 1).
inline PartialResult exhaustive_partial(const ParticleBelief& belief, const Catalog& catalog, Index k,
                                        double tau_eval, std::uint64_t budget, const Deadline& deadline = {}) {
  catalog.require_partial_mode();
  const Index d = catalog.dim();
  if (k < 2 || k > d) throw InvalidArgument("slate size must be in [2, d]");
  const std::uint64_t count = detail::binomial_capped(d, k, budget + 1);
  if (count > budget)
    throw BudgetExceeded("exhaustive partial search needs C(" + std::to_string(d) + ", " + std::to_string(k) +
                         ") slates, more than the budget of " + std::to_string(budget));
  EvoiEvaluator evaluator(belief, catalog, ResponseModel::logistic(tau_eval));
  std::vector<Index> combo(k);
  std::iota(combo.begin(), combo.end(), Index{0});
  std::optional<std::vector<Index>> best;
  double best_value = 0.0;
  Matrix X(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  do {
    deadline.check();
    X.setZero();
    for (Index i = 0; i < k; ++i) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(combo[i])) = 1.0;
    const double value = evaluator.evoi(X);
    if (!best || strictly_better(value, best_value)) {
      best = combo;
      best_value = value;
    }
  } while (detail::next_combination(combo, d));
  X.setZero();
  for (Index i = 0; i < k; ++i) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>((*best)[i])) = 1.0;
  PartialResult result;
  result.slate = make_partial_slate(X, 1, catalog, true);
  result.evoi = best_value;
  result.restart_evoi = {best_value};
  return result;
}

// k distinct rows, each with p uniformly chosen attributes.
inline PartialSlate random_partial(const Catalog& catalog, Index k, Index p, Rng& rng) {
  const Index d = catalog.dim();
  detail::require_p(d, p);
  if (k < 2) throw InvalidArgument("slate size must be >= 2");
  if (detail::binomial_capped(d, p, k) < k)
    throw InvalidArgument("not enough attribute subsets for distinct partial items");
  Matrix X = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  std::vector<Index> attrs(d);
  for (Eigen::Index i = 0; i < X.rows();) {
    std::iota(attrs.begin(), attrs.end(), Index{0});
    for (Index n = 0; n < p; ++n) {
      std::uniform_int_distribution<Index> pick(n, d - 1);
      std::swap(attrs[n], attrs[pick(rng)]);
    }
    Vector row = Vector::Zero(static_cast<Eigen::Index>(d));
    for (Index n = 0; n < p; ++n) row(static_cast<Eigen::Index>(attrs[n])) = 1.0;
    if (detail::row_in(X, i, row)) continue;
    X.row(i++) = row.transpose();
  }
  return make_partial_slate(X, p, catalog, true);
}

}  // namespace evoi
