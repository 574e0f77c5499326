#pragma once

// Naive reference implementations, written as plain loops straight from the
// definitions. Slow on purpose; only used to check the library.

#include "evoi/partial.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

using evoi::Catalog;
using evoi::Index;
using evoi::Matrix;
using evoi::ParticleBelief;
using evoi::ResponseKind;
using evoi::ResponseModel;
using evoi::Vector;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, evoi::Rng& rng, double scale = 1.0) {
  Matrix x(rows, cols);
  evoi::fill_standard_normal(x, rng);
  return x * scale;
}

// Random belief; non-uniform weights unless `uniform`.
inline ParticleBelief random_belief(Index m, Index d, evoi::Rng& rng, bool uniform = false) {
  Matrix u = random_matrix(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d), rng);
  if (uniform) return ParticleBelief(u);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  Vector w(static_cast<Eigen::Index>(m));
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = unit(rng);
  return ParticleBelief::from_weights(u, w);
}

inline double dot(const Matrix& a, Eigen::Index ra, const Matrix& b, Eigen::Index rb) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) s += a(ra, c) * b(rb, c);
  return s;
}

// R(i | slate; u_j) for particle j.
inline std::vector<double> probs(const Matrix& slate, const Matrix& U, Eigen::Index j, const ResponseModel& model) {
  const Eigen::Index k = slate.rows();
  std::vector<double> s(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) s[static_cast<std::size_t>(i)] = dot(slate, i, U, j);
  std::vector<double> p(s.size(), 0.0);
  if (model.kind == ResponseKind::noiseless) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] > s[best]) best = i;
    p[best] = 1.0;
    return p;
  }
  double top = *std::max_element(s.begin(), s.end());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += std::exp((s[i] - top) / model.temperature);
  for (std::size_t i = 0; i < s.size(); ++i) p[i] = std::exp((s[i] - top) / model.temperature) / total;
  return p;
}

// sum_i max_y sum_j w_j R(i|q;u_j) y.u_j
inline double peu(const Matrix& slate, const ParticleBelief& b, const Catalog& c, const ResponseModel& model) {
  const Matrix& U = b.particles();
  const Matrix& Y = c.items();
  std::vector<std::vector<double>> P;
  for (Eigen::Index j = 0; j < U.rows(); ++j) P.push_back(probs(slate, U, j, model));
  double total = 0.0;
  for (Eigen::Index i = 0; i < slate.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < Y.rows(); ++y) {
      double v = 0.0;
      for (Eigen::Index j = 0; j < U.rows(); ++j)
        v += b.weights()[j] * P[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] * dot(Y, y, U, j);
      best = std::max(best, v);
    }
    total += best;
  }
  return total;
}

inline double eu_star(const ParticleBelief& b, const Catalog& c) {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index y = 0; y < c.items().rows(); ++y) {
    double v = 0.0;
    for (Eigen::Index j = 0; j < b.particles().rows(); ++j) v += b.weights()[j] * dot(c.items(), y, b.particles(), j);
    best = std::max(best, v);
  }
  return best;
}

inline double evoi(const Matrix& slate, const ParticleBelief& b, const Catalog& c, const ResponseModel& model) {
  return oracle::peu(slate, b, c, model) - oracle::eu_star(b, c);
}

inline double peu_matrix(const Matrix& X, const Matrix& Y, const ParticleBelief& b, double tau) {
  const ResponseModel model = ResponseModel::logistic(tau);
  double total = 0.0;
  for (Eigen::Index j = 0; j < b.particles().rows(); ++j) {
    auto p = probs(X, b.particles(), j, model);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      total += b.weights()[j] * p[static_cast<std::size_t>(i)] * dot(Y, i, b.particles(), j);
  }
  return total;
}

// Posterior-mass-weighted means v_i, one row per response.
inline Matrix response_means(const Matrix& slate, const ParticleBelief& b, const ResponseModel& model) {
  const Matrix& U = b.particles();
  Matrix v = Matrix::Zero(slate.rows(), U.cols());
  for (Eigen::Index j = 0; j < U.rows(); ++j) {
    auto p = probs(slate, U, j, model);
    for (Eigen::Index i = 0; i < slate.rows(); ++i)
      for (Eigen::Index c = 0; c < U.cols(); ++c) v(i, c) += b.weights()[j] * p[static_cast<std::size_t>(i)] * U(j, c);
  }
  return v;
}

// First index attaining the max of y . v_i.
inline std::vector<Index> deep_retrieval(const Matrix& slate, const ParticleBelief& b, const Catalog& c,
                                         const ResponseModel& model) {
  Matrix v = oracle::response_means(slate, b, model);
  std::vector<Index> out;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    Index best = 0;
    double best_v = dot(c.items(), 0, v, i);
    for (Eigen::Index y = 1; y < c.items().rows(); ++y) {
      const double s = dot(c.items(), y, v, i);
      if (s > best_v) {
        best_v = s;
        best = static_cast<Index>(y);
      }
    }
    out.push_back(best);
  }
  return out;
}

// Step-by-step transcription of the unique deep-retrieval pseudocode:
//   p = softmax(U X^T) row-wise, scores = (w o p)^T U Y^T (k x N),
//   T = top-k column indices of each score row, then S is built by letting each
//   response take its first T entry not already in S.
inline std::vector<Index> deep_retr_uniq_alg(const Matrix& X, const ParticleBelief& b, const Catalog& c,
                                             const ResponseModel& model) {
  const Matrix& U = b.particles();
  const Matrix& Y = c.items();
  const Eigen::Index k = X.rows(), m = U.rows(), n = Y.rows();
  Matrix p(m, k);
  for (Eigen::Index j = 0; j < m; ++j) {
    auto pj = probs(X, U, j, model);
    for (Eigen::Index i = 0; i < k; ++i) p(j, i) = pj[static_cast<std::size_t>(i)] * b.weights()[j];
  }
  Matrix scores = Matrix::Zero(k, n);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index y = 0; y < n; ++y)
      for (Eigen::Index j = 0; j < m; ++j) scores(i, y) += p(j, i) * dot(U, j, Y, y);
  std::vector<std::vector<Index>> T(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index bb) {
      return scores(i, static_cast<Eigen::Index>(a)) > scores(i, static_cast<Eigen::Index>(bb));
    });
    order.resize(static_cast<std::size_t>(k));
    T[static_cast<std::size_t>(i)] = order;
  }
  std::vector<Index> S;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index jj = 0; jj < k; ++jj) {
      const Index t = T[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)];
      if (std::find(S.begin(), S.end(), t) == S.end()) {
        S.push_back(t);
        break;
      }
    }
  }
  return S;
}

// Full sort by score descending, index ascending, truncated to k.
inline std::vector<std::pair<Index, double>> top_k(const Catalog& c, const Vector& v, Index k) {
  std::vector<std::pair<Index, double>> all;
  for (Eigen::Index y = 0; y < c.items().rows(); ++y) {
    double s = 0.0;
    for (Eigen::Index a = 0; a < v.size(); ++a) s += c.items()(y, a) * v[a];
    all.emplace_back(static_cast<Index>(y), s);
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  all.resize(k);
  return all;
}

inline Vector posterior_mean(const ParticleBelief& b) {
  Vector mean = Vector::Zero(b.particles().cols());
  for (Eigen::Index j = 0; j < b.particles().rows(); ++j)
    for (Eigen::Index c = 0; c < mean.size(); ++c) mean[c] += b.weights()[j] * b.particles()(j, c);
  return mean;
}

// Selection utility sum_j w_j sum_i R(i|q;u_j) x_i.u_j.
inline double selection_utility(const Matrix& slate, const ParticleBelief& b, const ResponseModel& model) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < b.particles().rows(); ++j) {
    auto p = probs(slate, b.particles(), j, model);
    for (Eigen::Index i = 0; i < slate.rows(); ++i)
      total += b.weights()[j] * p[static_cast<std::size_t>(i)] * dot(slate, i, b.particles(), j);
  }
  return total;
}

// Greedy from its definition: start at the prior-EU argmax, then append the
// candidate maximizing `objective` over every remaining item. Equal objective
// values prefer the higher prior EU, then the smaller index.
inline std::vector<Index> greedy(const Catalog& c, const ParticleBelief& b, Index k,
                                 const std::function<double(const Matrix&)>& objective) {
  Vector mean = oracle::posterior_mean(b);
  std::vector<double> eu;
  for (Eigen::Index y = 0; y < c.items().rows(); ++y) eu.push_back(c.items().row(y).dot(mean));
  std::vector<Index> slate{static_cast<Index>(std::max_element(eu.begin(), eu.end()) - eu.begin())};
  while (slate.size() < k) {
    std::optional<Index> best;
    double best_v = 0.0;
    for (Index y = 0; y < c.size(); ++y) {
      if (std::find(slate.begin(), slate.end(), y) != slate.end()) continue;
      std::vector<Index> ext = slate;
      ext.push_back(y);
      const double v = objective(evoi::gather_items(c, ext));
      if (!best || v > best_v + evoi::kTieTolerance ||
          (std::abs(v - best_v) <= evoi::kTieTolerance && eu[y] > eu[*best])) {
        best = y;
        best_v = v;
      }
    }
    slate.push_back(*best);
  }
  return slate;
}

// sum_i min_z ||x_i - z||^2 by brute force.
inline double regularizer(const Matrix& X, const Catalog& c) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < c.items().rows(); ++y) best = std::min(best, (X.row(i) - c.items().row(y)).squaredNorm());
    total += best;
  }
  return total;
}

// Central differences of f at X.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& X, double h) {
  Matrix g(X.rows(), X.cols());
  Matrix Z = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      Z(i, c) = X(i, c) + h;
      const double up = f(Z);
      Z(i, c) = X(i, c) - h;
      const double down = f(Z);
      Z(i, c) = X(i, c);
      g(i, c) = (up - down) / (2.0 * h);
    }
  return g;
}

// max |a - b| / max(|b|, floor) over entries.
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      worst = std::max(worst, std::abs(a(i, c) - b(i, c)) / std::max(std::abs(b(i, c)), floor));
  return worst;
}

// ||a - b||_max / ||b||_max, a scale-aware relative error for whole gradients.
inline double relative_max_norm_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-12);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace oracle
