#pragma once

// Posterior expected utility and expected value of information for slate queries.
//
// For a slate q with responses i = 1..k and a weighted particle belief,
//
//   v_i    = sum_j w_j R(i | q; u_j) u_j        (response-weighted, unnormalized mean)
//   PEU(q) = sum_i max_{y in catalog} y . v_i
//   EVOI(q) = PEU(q) - max_y y . E[u]
//
// v_i is the posterior mean after response i scaled by the response mass, so
// the argmax over the catalog is the posterior-EU maximizer ("deep
// retrieval") and the product mass * EU* never divides by a tiny mass.

#include "evoi/belief.hpp"

#include <set>

namespace evoi {

struct QuerySlate {
  Matrix vectors;                                 // k x d
  std::optional<std::vector<Index>> item_indices;  // present iff every row is a catalog item

  Index size() const { return static_cast<Index>(vectors.rows()); }
  bool feasible() const { return item_indices.has_value(); }

  static QuerySlate from_vectors(Matrix vectors) {
    if (vectors.rows() < 2) throw InvalidArgument("a query slate needs at least two items");
    if (!vectors.allFinite()) throw InvalidArgument("query slate vectors must be finite");
    return QuerySlate{std::move(vectors), std::nullopt};
  }

  static QuerySlate from_items(const Catalog& catalog, std::vector<Index> indices) {
    if (indices.size() < 2) throw InvalidArgument("a query slate needs at least two items");
    std::set<Index> distinct(indices.begin(), indices.end());
    if (distinct.size() != indices.size()) throw InvalidArgument("query slate items must be distinct");
    Matrix v(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(catalog.dim()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= catalog.size()) throw InvalidArgument("query slate item index out of range");
      v.row(static_cast<Eigen::Index>(i)) = catalog.item(indices[i]);
    }
    return QuerySlate{std::move(v), std::move(indices)};
  }
};

struct RecSlate {
  Matrix vectors;
  std::vector<Index> item_indices;
  std::vector<double> scores;  // y*_i . v_i, i.e. response mass times posterior EU*
};

inline Matrix gather_items(const Catalog& catalog, const std::vector<Index>& indices) {
  Matrix v(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(catalog.dim()));
  for (std::size_t i = 0; i < indices.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = catalog.item(indices[i]);
  return v;
}

// Rows v_i = sum_j w_j R(i | q; u_j) u_j, plus the response masses.
struct ResponseMeans {
  Matrix means;   // k x d
  Vector masses;  // k, sums to 1
};

inline ResponseMeans response_means(const Matrix& slate, const ParticleBelief& belief, const ResponseModel& model) {
  Matrix p = response_matrix(slate, belief.particles(), model);  // m x k
  p.array().colwise() *= belief.weights().array();
  ResponseMeans out;
  out.means = p.transpose() * belief.particles();
  out.masses = p.colwise().sum().transpose();
  return out;
}

// EU*(P): best expected utility over the catalog under the current belief.
inline double eu_star(const ParticleBelief& belief, const Catalog& catalog) { return best_item(belief, catalog).score; }

inline RecSlate deep_retrieval(const QuerySlate& slate, const ParticleBelief& belief, const Catalog& catalog,
                               const ResponseModel& model) {
  ResponseMeans rm = response_means(slate.vectors, belief, model);
  auto best = argmax_multi(catalog, rm.means);
  RecSlate rec;
  for (const auto& b : best) {
    rec.item_indices.push_back(b.index);
    rec.scores.push_back(b.score);
  }
  rec.vectors = gather_items(catalog, rec.item_indices);
  return rec;
}

// Deep retrieval with distinct items: each response, in order, takes the best
// item of its own top-k list that no earlier response already claimed.
inline RecSlate deep_retr_uniq(const QuerySlate& slate, const ParticleBelief& belief, const Catalog& catalog,
                               const ResponseModel& model) {
  const Index k = slate.size();
  if (catalog.size() < k) throw InvalidArgument("deep_retr_uniq needs at least k catalog items");
  ResponseMeans rm = response_means(slate.vectors, belief, model);
  auto ranked = top_k_multi(catalog, rm.means, k);
  RecSlate rec;
  for (Index i = 0; i < k; ++i) {
    for (const auto& cand : ranked[i]) {
      // k is small; linear membership test.
      if (std::find(rec.item_indices.begin(), rec.item_indices.end(), cand.index) == rec.item_indices.end()) {
        rec.item_indices.push_back(cand.index);
        rec.scores.push_back(cand.score);
        break;
      }
    }
  }
  rec.vectors = gather_items(catalog, rec.item_indices);
  return rec;
}

inline double peu(const QuerySlate& slate, const ParticleBelief& belief, const Catalog& catalog,
                  const ResponseModel& model) {
  ResponseMeans rm = response_means(slate.vectors, belief, model);
  double total = 0.0;
  for (const auto& b : argmax_multi(catalog, rm.means)) total += b.score;
  return total;
}

inline double evoi(const QuerySlate& slate, const ParticleBelief& belief, const Catalog& catalog,
                   const ResponseModel& model) {
  return peu(slate, belief, catalog, model) - eu_star(belief, catalog);
}

// EVOI for many slates against one belief; caches EU*(P).
class EvoiEvaluator {
 public:
  EvoiEvaluator(const ParticleBelief& belief, const Catalog& catalog, const ResponseModel& model)
      : belief_(belief), catalog_(catalog), model_(model), prior_eu_star_(eu_star(belief, catalog)) {}

  double prior_eu_star() const { return prior_eu_star_; }
  double peu(const Matrix& slate) const {
    ResponseMeans rm = response_means(slate, belief_, model_);
    double total = 0.0;
    for (const auto& b : argmax_multi(catalog_, rm.means)) total += b.score;
    return total;
  }
  double evoi(const Matrix& slate) const { return peu(slate) - prior_eu_star_; }
  double evoi(const QuerySlate& slate) const { return evoi(slate.vectors); }
  double evoi_items(const std::vector<Index>& items) const { return evoi(gather_items(catalog_, items)); }

  const ParticleBelief& belief() const { return belief_; }
  const Catalog& catalog() const { return catalog_; }
  const ResponseModel& model() const { return model_; }

 private:
  const ParticleBelief& belief_;
  const Catalog& catalog_;
  ResponseModel model_;
  double prior_eu_star_;
};

// sum_j w_j sum_i (y_i . u_j) softmax_i((X u_j) / tau): PEU of query X with rec slate Y.
inline double peu_matrix(const Matrix& X, const Matrix& Y, const ParticleBelief& belief, double tau) {
  if (X.rows() != Y.rows() || X.cols() != Y.cols()) throw InvalidArgument("peu_matrix: X and Y shapes differ");
  Matrix p = response_matrix(X, belief.particles(), ResponseModel::logistic(tau));
  Matrix t = belief.particles() * Y.transpose();
  return belief.weights().dot((p.array() * t.array()).rowwise().sum().matrix());
}

// Slack in the logistic query-improvement bound:
//   Delta = sum_i E_{P_i}[1 - R(i | q; u)] * EU(y*_i; P_i),
// with P_i the posterior after response i and y*_i its deep-retrieved item.
inline double delta_bound(const QuerySlate& slate, const ParticleBelief& belief, const Catalog& catalog, double tau) {
  const ResponseModel model = ResponseModel::logistic(tau);
  Matrix p = response_matrix(slate.vectors, belief.particles(), model);
  Matrix wp = p;
  wp.array().colwise() *= belief.weights().array();
  Matrix means = wp.transpose() * belief.particles();
  auto best = argmax_multi(catalog, means);
  double delta = 0.0;
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    const double mass = wp.col(i).sum();
    if (!(mass > 0.0)) continue;
    const double miss = (wp.col(i).array() * (1.0 - p.col(i).array())).sum() / mass;
    delta += miss * best[static_cast<std::size_t>(i)].score / mass;
  }
  return delta;
}

}  // namespace evoi
