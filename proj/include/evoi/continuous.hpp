#pragma once

// Gradient-based EVOI optimization over relaxed slates.
//
// The query slate X (k x d) is a free real matrix. For particle j let
// s_ji = x_i . u_j and p_ji = softmax_i(s_j / tau). The relaxed objectives are
//
//   free:       F(X)    = sum_j w_j sum_i s_ji p_ji              (X doubles as rec slate)
//   alternate:  G(X; Y) = sum_j w_j sum_i (y_i . u_j) p_ji        (Y held fixed)
//   deep retr:  G(X; DeepRetr(X)), Y re-retrieved at every step
//
// With f_j = sum_i t_ji p_ji and dp_jl/ds_ji = p_jl (delta_li - p_ji) / tau:
//
//   dF/dx_i = sum_j w_j p_ji (1 + (s_ji - f_j) / tau) u_j
//   dG/dx_i = sum_j w_j p_ji (t_ji - f_j) / tau u_j
//
// Deep retrieval is a max over a finite set, so between switching points the
// retrieved items are constant and dG is the exact gradient there.
//
// Every variant finishes with one DeepRetrUniq projection to feasible items;
// restarts are scored by exact EVOI under the evaluation response model.

#include "evoi/adam.hpp"
#include "evoi/discrete.hpp"

#include <map>

namespace evoi {

enum class ContinuousVariant { free, reg, alter, deep_retr };
enum class InitKind { random, rand_user_top_item, balanced };

struct ContinuousConfig {
  ContinuousVariant variant = ContinuousVariant::alter;
  Index slate_size = 2;
  double learning_rate = 5e-4;
  std::optional<Index> steps;  // default: 100, or 50 inner steps per outer iteration for alter
  Index outer_iterations = 5;
  Index restarts = 10;
  InitKind init = InitKind::balanced;
  double tau_opt = 0.02;
  std::optional<double> norm_bound;  // default: catalog max item norm
  double lambda_reg = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  Index effective_steps() const {
    if (steps) return *steps;
    return variant == ContinuousVariant::alter ? 50 : 100;
  }
  double effective_norm_bound(const Catalog& catalog) const {
    return norm_bound ? *norm_bound : catalog.max_norm();
  }
  void validate() const {
    if (slate_size < 2) throw InvalidArgument("slate size must be >= 2");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
    if (effective_steps() < 1) throw InvalidArgument("steps must be >= 1");
    if (!(tau_opt > 0.0)) throw InvalidArgument("tau_opt must be > 0");
    if (norm_bound && !(*norm_bound > 0.0)) throw InvalidArgument("norm bound must be > 0");
    if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
    if (lambda_reg < 0.0) throw InvalidArgument("lambda_reg must be >= 0");
  }
};

struct ValueAndGradient {
  double value = 0.0;
  Matrix gradient;
};

namespace detail {

// Shared core for the relaxed objectives. `targets` (m x k) holds t_ji; when
// null, t = s (free objective).
inline ValueAndGradient softmax_slate_objective(const Matrix& X, const Matrix* targets, const ParticleBelief& belief,
                                                double tau) {
  const Matrix& U = belief.particles();
  const Vector& w = belief.weights();
  Matrix s = U * X.transpose();  // m x k
  Matrix p = s;
  for (Eigen::Index j = 0; j < p.rows(); ++j) softmax_inplace(p.row(j), tau);
  const Matrix& t = targets ? *targets : s;
  Vector f = (p.array() * t.array()).rowwise().sum();  // m
  Matrix g(p.rows(), p.cols());
  if (targets) {
    g = p.array() * (t.array().colwise() - f.array()) / tau;
  } else {
    g = p.array() * (1.0 + (s.array().colwise() - f.array()) / tau);
  }
  g.array().colwise() *= w.array();
  return ValueAndGradient{w.dot(f), g.transpose() * U};
}

}  // namespace detail

inline double objective_free(const Matrix& X, const ParticleBelief& belief, double tau) {
  return peu_matrix(X, X, belief, tau);
}

inline Matrix grad_free(const Matrix& X, const ParticleBelief& belief, double tau) {
  return detail::softmax_slate_objective(X, nullptr, belief, tau).gradient;
}

inline ValueAndGradient objective_free_with_grad(const Matrix& X, const ParticleBelief& belief, double tau) {
  return detail::softmax_slate_objective(X, nullptr, belief, tau);
}

// PEU of query X against a fixed recommendation slate Y, with gradient in X.
inline ValueAndGradient objective_alter(const Matrix& X, const Matrix& Y, const ParticleBelief& belief, double tau) {
  Matrix t = belief.particles() * Y.transpose();
  return detail::softmax_slate_objective(X, &t, belief, tau);
}

struct DeepRetrObjective {
  double value = 0.0;
  Matrix gradient;
  std::vector<Index> retrieved;  // deep-retrieved item for each response at X
};

// Feasible PEU of X: recommendation items deep-retrieved at X, gradient through
// the response probabilities with those items held fixed.
inline DeepRetrObjective objective_deep_retr(const Matrix& X, const ParticleBelief& belief, const Catalog& catalog,
                                             double tau) {
  ResponseMeans rm = response_means(X, belief, ResponseModel::logistic(tau));
  auto best = argmax_multi(catalog, rm.means);
  DeepRetrObjective out;
  for (const auto& b : best) out.retrieved.push_back(b.index);
  ValueAndGradient vg = objective_alter(X, gather_items(catalog, out.retrieved), belief, tau);
  out.value = vg.value;
  out.gradient = std::move(vg.gradient);
  return out;
}

struct RegularizerValue {
  double value = 0.0;
  Matrix gradient;
  std::vector<Index> nearest;
};

// sum_i min_z ||x_i - z||^2 over catalog items z, gradient 2 (x_i - z*_i).
inline RegularizerValue regularizer_nearest(const Matrix& X, const Catalog& catalog) {
  const Matrix& items = catalog.items();
  const Eigen::Index k = X.rows();
  std::vector<double> best(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  std::vector<Index> arg(static_cast<std::size_t>(k), 0);
  const Eigen::MatrixXd xt = X.transpose();
  Eigen::MatrixXd dots;
  constexpr Eigen::Index kBlock = 4096;
  for (Eigen::Index start = 0; start < items.rows(); start += kBlock) {
    const Eigen::Index len = std::min(kBlock, items.rows() - start);
    auto block = items.middleRows(start, len);
    dots.noalias() = block * xt;
    Vector sq = block.rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < k; ++i) {
      auto& b = best[static_cast<std::size_t>(i)];
      for (Eigen::Index r = 0; r < len; ++r) {
        // ||x - z||^2 minus the constant ||x||^2
        const double d = sq[r] - 2.0 * dots(r, i);
        if (d < b) {
          b = d;
          arg[static_cast<std::size_t>(i)] = static_cast<Index>(start + r);
        }
      }
    }
  }
  RegularizerValue out;
  out.gradient.resize(X.rows(), X.cols());
  out.nearest = arg;
  for (Eigen::Index i = 0; i < k; ++i) {
    auto diff = X.row(i) - catalog.item(arg[static_cast<std::size_t>(i)]);
    out.value += diff.squaredNorm();
    out.gradient.row(i) = 2.0 * diff;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

// Weighted k-means on the particles: k-means++ seeding then a fixed number of
// Lloyd iterations. Empty clusters keep their previous centre.
inline Matrix weighted_kmeans(const Matrix& points, const Vector& weights, Index k, Index iterations, Rng& rng) {
  const Eigen::Index m = points.rows();
  Matrix centers(static_cast<Eigen::Index>(k), points.cols());
  std::vector<double> w(weights.data(), weights.data() + m);
  {
    std::discrete_distribution<Eigen::Index> first(w.begin(), w.end());
    centers.row(0) = points.row(first(rng));
  }
  std::vector<double> d2(static_cast<std::size_t>(m), std::numeric_limits<double>::infinity());
  for (Index c = 1; c < k; ++c) {
    std::vector<double> score(static_cast<std::size_t>(m));
    double total = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      d2[static_cast<std::size_t>(j)] =
          std::min(d2[static_cast<std::size_t>(j)], (points.row(j) - centers.row(static_cast<Eigen::Index>(c - 1))).squaredNorm());
      score[static_cast<std::size_t>(j)] = w[static_cast<std::size_t>(j)] * d2[static_cast<std::size_t>(j)];
      total += score[static_cast<std::size_t>(j)];
    }
    if (!(total > 0.0)) {
      // Every weighted point already sits on a centre; reuse weight-proportional draws.
      score = w;
    }
    std::discrete_distribution<Eigen::Index> next(score.begin(), score.end());
    centers.row(static_cast<Eigen::Index>(c)) = points.row(next(rng));
  }
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(m), 0);
  for (Index it = 0; it < iterations; ++it) {
    for (Eigen::Index j = 0; j < m; ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < centers.rows(); ++c) {
        const double d = (points.row(j) - centers.row(c)).squaredNorm();
        if (d < best) {
          best = d;
          assign[static_cast<std::size_t>(j)] = c;
        }
      }
    }
    Matrix sums = Matrix::Zero(centers.rows(), centers.cols());
    Vector mass = Vector::Zero(centers.rows());
    for (Eigen::Index j = 0; j < m; ++j) {
      const auto c = assign[static_cast<std::size_t>(j)];
      sums.row(c) += w[static_cast<std::size_t>(j)] * points.row(j);
      mass[c] += w[static_cast<std::size_t>(j)];
    }
    for (Eigen::Index c = 0; c < centers.rows(); ++c)
      if (mass[c] > 0.0) centers.row(c) = sums.row(c) / mass[c];
  }
  return centers;
}

inline void rescale_rows(Matrix& x, double norm, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double n = x.row(i).norm();
    while (!(n > 0.0)) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(i, c) = normal(rng);
      n = x.row(i).norm();
    }
    x.row(i) *= norm / n;
  }
}

}  // namespace detail

inline Matrix init_slate(InitKind kind, const ParticleBelief& belief, const Catalog& catalog, Index k,
                         double norm_bound, Rng& rng) {
  switch (kind) {
    case InitKind::random: {
      Matrix x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(catalog.dim()));
      fill_standard_normal(x, rng);
      detail::rescale_rows(x, norm_bound / 2.0, rng);
      return x;
    }
    case InitKind::rand_user_top_item:
      return rand_user_top_item(catalog, belief, k, rng).vectors;
    case InitKind::balanced: {
      Matrix c = detail::weighted_kmeans(belief.particles(), belief.weights(), k, 20, rng);
      detail::rescale_rows(c, norm_bound, rng);
      return c;
    }
  }
  throw InvalidArgument("unknown init kind");
}

// ---------------------------------------------------------------------------
// Optimization driver

struct RestartOutcome {
  bool aborted = false;
  double initial_objective = 0.0;  // relaxed objective before the first step
  double final_objective = 0.0;    // relaxed objective after the last step
  Matrix relaxed;                  // X at the end of ascent
  std::vector<Index> items;        // DeepRetrUniq projection
  double evoi = -std::numeric_limits<double>::infinity();
};

struct ContinuousResult {
  QuerySlate slate;
  double evoi = 0.0;
  Index best_restart = 0;
  std::vector<RestartOutcome> restarts;
  Index aborted = 0;
};

namespace detail {

inline double relaxed_value(ContinuousVariant variant, const Matrix& X, const Matrix& Y, const ParticleBelief& belief,
                            const Catalog& catalog, double tau, double lambda) {
  switch (variant) {
    case ContinuousVariant::free:
      return objective_free(X, belief, tau);
    case ContinuousVariant::reg:
      return objective_free(X, belief, tau) - lambda * regularizer_nearest(X, catalog).value;
    case ContinuousVariant::alter:
      return peu_matrix(X, Y, belief, tau);
    case ContinuousVariant::deep_retr:
      return objective_deep_retr(X, belief, catalog, tau).value;
  }
  return 0.0;
}

// Runs ascent for one restart; returns false if the objective went non-finite.
inline bool ascend(const ContinuousConfig& cfg, const ParticleBelief& belief, const Catalog& catalog, Matrix& X,
                   RestartOutcome& outcome, const Deadline& deadline) {
  const double tau = cfg.tau_opt;
  const double bound = cfg.effective_norm_bound(catalog);
  const Index steps = cfg.effective_steps();
  AdamParams params{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};
  AdamAscent adam(X.rows(), X.cols(), params);
  const ResponseModel opt_model = ResponseModel::logistic(tau);

  switch (cfg.variant) {
    case ContinuousVariant::free: {
      project_rows_to_ball(X, bound);
      outcome.initial_objective = objective_free(X, belief, tau);
      for (Index s = 0; s < steps; ++s) {
        deadline.check();
        ValueAndGradient vg = objective_free_with_grad(X, belief, tau);
        if (!std::isfinite(vg.value) || !vg.gradient.allFinite()) return false;
        adam.step(X, vg.gradient);
        project_rows_to_ball(X, bound);
      }
      outcome.final_objective = objective_free(X, belief, tau);
      break;
    }
    case ContinuousVariant::reg: {
      outcome.initial_objective =
          relaxed_value(ContinuousVariant::reg, X, X, belief, catalog, tau, cfg.lambda_reg);
      for (Index s = 0; s < steps; ++s) {
        deadline.check();
        ValueAndGradient vg = objective_free_with_grad(X, belief, tau);
        RegularizerValue reg = regularizer_nearest(X, catalog);
        const double value = vg.value - cfg.lambda_reg * reg.value;
        Matrix grad = vg.gradient - cfg.lambda_reg * reg.gradient;
        if (!std::isfinite(value) || !grad.allFinite()) return false;
        adam.step(X, grad);
      }
      outcome.final_objective = relaxed_value(ContinuousVariant::reg, X, X, belief, catalog, tau, cfg.lambda_reg);
      break;
    }
    case ContinuousVariant::alter: {
      project_rows_to_ball(X, bound);
      Matrix Y = deep_retrieval(QuerySlate{X, std::nullopt}, belief, catalog, opt_model).vectors;
      outcome.initial_objective = peu_matrix(X, Y, belief, tau);
      for (Index outer = 0; outer < cfg.outer_iterations; ++outer) {
        adam.reset();
        for (Index s = 0; s < steps; ++s) {
          deadline.check();
          ValueAndGradient vg = objective_alter(X, Y, belief, tau);
          if (!std::isfinite(vg.value) || !vg.gradient.allFinite()) return false;
          adam.step(X, vg.gradient);
          project_rows_to_ball(X, bound);
        }
        Y = deep_retrieval(QuerySlate{X, std::nullopt}, belief, catalog, opt_model).vectors;
      }
      outcome.final_objective = peu_matrix(X, Y, belief, tau);
      break;
    }
    case ContinuousVariant::deep_retr: {
      outcome.initial_objective = objective_deep_retr(X, belief, catalog, tau).value;
      for (Index s = 0; s < steps; ++s) {
        deadline.check();
        DeepRetrObjective obj = objective_deep_retr(X, belief, catalog, tau);
        if (!std::isfinite(obj.value) || !obj.gradient.allFinite()) return false;
        adam.step(X, obj.gradient);
      }
      outcome.final_objective = objective_deep_retr(X, belief, catalog, tau).value;
      break;
    }
  }
  return std::isfinite(outcome.final_objective) && X.allFinite();
}

}  // namespace detail

// Best-of-restarts continuous EVOI optimization; ties keep the lowest restart.
inline ContinuousResult optimize(const ContinuousConfig& cfg, const ParticleBelief& belief, const Catalog& catalog,
                                 const ResponseModel& eval_model, const Deadline& deadline = {}) {
  cfg.validate();
  if (catalog.dim() != belief.dim()) throw InvalidArgument("belief and catalog dimensions differ");
  if (catalog.size() < cfg.slate_size) throw InvalidArgument("slate size exceeds catalog size");
  const ResponseModel opt_model = ResponseModel::logistic(cfg.tau_opt);
  const double bound = cfg.effective_norm_bound(catalog);
  EvoiEvaluator evaluator(belief, catalog, eval_model);
  std::map<std::vector<Index>, double> scored;  // restarts often land on the same slate

  ContinuousResult result;
  std::optional<Index> best;
  for (Index r = 0; r < cfg.restarts; ++r) {
    Rng rng = make_rng(derive_seed(cfg.seed, 0xC047, r));
    RestartOutcome outcome;
    Matrix X = init_slate(cfg.init, belief, catalog, cfg.slate_size, bound, rng);
    if (!detail::ascend(cfg, belief, catalog, X, outcome, deadline)) {
      outcome.aborted = true;
      ++result.aborted;
      result.restarts.push_back(std::move(outcome));
      continue;
    }
    RecSlate rec = deep_retr_uniq(QuerySlate{X, std::nullopt}, belief, catalog, opt_model);
    outcome.relaxed = std::move(X);
    outcome.items = rec.item_indices;
    std::vector<Index> key = rec.item_indices;
    std::sort(key.begin(), key.end());
    auto it = scored.find(key);
    if (it == scored.end()) it = scored.emplace(key, evaluator.evoi(rec.vectors)).first;
    outcome.evoi = it->second;
    if (!best || strictly_better(outcome.evoi, result.restarts[*best].evoi)) best = r;
    result.restarts.push_back(std::move(outcome));
  }
  if (!best) throw Error("every continuous-optimization restart produced a non-finite objective");
  result.best_restart = *best;
  result.evoi = result.restarts[*best].evoi;
  result.slate = QuerySlate::from_items(catalog, result.restarts[*best].items);
  return result;
}

}  // namespace evoi
