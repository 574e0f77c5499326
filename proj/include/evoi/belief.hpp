#pragma once

// Monte-Carlo belief over linear utility vectors.
//
// A belief is a fixed set of m particles with importance weights. Weights are
// kept in the log domain so that long sequences of logistic updates never
// collapse a weight to exactly zero.

#include "evoi/catalog.hpp"

namespace evoi {

class ParticleBelief {
 public:
  ParticleBelief() = default;

  // Uniform weights.
  explicit ParticleBelief(Matrix particles, std::uint64_t seed = 0)
      : ParticleBelief(particles, Vector::Constant(particles.rows(), -std::log(static_cast<double>(particles.rows()))),
                       seed) {}

  // `log_weights` need not be normalized; -inf entries are allowed but not all of them.
  ParticleBelief(Matrix particles, Vector log_weights, std::uint64_t seed)
      : particles_(std::move(particles)), log_weights_(std::move(log_weights)), seed_(seed) {
    if (particles_.rows() < 1 || particles_.cols() < 1) throw InvalidArgument("belief needs at least one particle");
    if (!particles_.allFinite()) throw InvalidArgument("belief particles must be finite");
    if (log_weights_.size() != particles_.rows()) throw InvalidArgument("weight count does not match particle count");
    normalize();
  }

  static ParticleBelief from_weights(Matrix particles, const Vector& weights, std::uint64_t seed = 0) {
    if (weights.size() != particles.rows()) throw InvalidArgument("weight count does not match particle count");
    Vector lw(weights.size());
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
      if (!(weights[j] >= 0.0) || !std::isfinite(weights[j])) throw InvalidArgument("weights must be finite and >= 0");
      lw[j] = weights[j] > 0.0 ? std::log(weights[j]) : -std::numeric_limits<double>::infinity();
    }
    return ParticleBelief(std::move(particles), std::move(lw), seed);
  }

  Index size() const { return static_cast<Index>(particles_.rows()); }
  Index dim() const { return static_cast<Index>(particles_.cols()); }
  const Matrix& particles() const { return particles_; }
  auto particle(Index j) const { return particles_.row(static_cast<Eigen::Index>(j)); }
  const Vector& weights() const { return weights_; }
  const Vector& log_weights() const { return log_weights_; }
  std::uint64_t seed() const { return seed_; }

 private:
  void normalize() {
    double top = log_weights_.maxCoeff();
    if (!std::isfinite(top)) throw DegeneratePosterior("all posterior weights are zero");
    double total = (log_weights_.array() - top).exp().sum();
    log_weights_.array() -= top + std::log(total);
    weights_ = log_weights_.array().exp();
    weights_ /= weights_.sum();
  }

  Matrix particles_;
  Vector log_weights_;
  Vector weights_;
  std::uint64_t seed_ = 0;
};

// ---------------------------------------------------------------------------
// Prior

enum class PriorKind { standard_normal, empirical_file };

struct PriorSpec {
  PriorKind kind = PriorKind::standard_normal;
  Index dim = 0;
  std::string source;  // empirical_file only
};

// A prior ready for sampling; empirical files are read once.
class Prior {
 public:
  explicit Prior(PriorSpec spec) : spec_(std::move(spec)) {
    if (spec_.kind == PriorKind::empirical_file) {
      CsvTable t = read_item_csv(spec_.source);
      rows_ = std::move(t.values);
      if (spec_.dim == 0) spec_.dim = static_cast<Index>(rows_.cols());
      if (static_cast<Index>(rows_.cols()) != spec_.dim)
        throw InvalidArgument("empirical prior has dimension " + std::to_string(rows_.cols()) + ", expected " +
                              std::to_string(spec_.dim));
    } else if (spec_.dim < 1) {
      throw InvalidArgument("standard-normal prior needs dim >= 1");
    }
  }

  Prior(PriorSpec spec, Matrix rows) : spec_(std::move(spec)), rows_(std::move(rows)) {
    spec_.kind = PriorKind::empirical_file;
    spec_.dim = static_cast<Index>(rows_.cols());
  }

  const PriorSpec& spec() const { return spec_; }
  Index dim() const { return spec_.dim; }
  Index empirical_rows() const { return static_cast<Index>(rows_.rows()); }

  // m particles; an empirical prior with m == rows uses every row in file order,
  // otherwise a seeded subset without replacement.
  Matrix sample(Index m, Rng& rng) const {
    if (m < 1) throw InvalidArgument("particle count must be >= 1");
    if (spec_.kind == PriorKind::standard_normal) {
      Matrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(spec_.dim));
      fill_standard_normal(out, rng);
      return out;
    }
    const Index n = empirical_rows();
    if (m > n)
      throw InvalidArgument("requested " + std::to_string(m) + " particles from an empirical prior of " +
                            std::to_string(n) + " rows");
    if (m == n) return rows_;
    std::vector<Index> order(n);
    for (Index i = 0; i < n; ++i) order[i] = i;
    for (Index i = 0; i < m; ++i) {
      std::uniform_int_distribution<Index> pick(i, n - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    Matrix out(static_cast<Eigen::Index>(m), rows_.cols());
    for (Index i = 0; i < m; ++i) out.row(static_cast<Eigen::Index>(i)) = rows_.row(static_cast<Eigen::Index>(order[i]));
    return out;
  }

  Vector sample_one(Rng& rng) const {
    if (spec_.kind == PriorKind::standard_normal) {
      Matrix out(1, static_cast<Eigen::Index>(spec_.dim));
      fill_standard_normal(out, rng);
      return out.row(0).transpose();
    }
    std::uniform_int_distribution<Index> pick(0, empirical_rows() - 1);
    return rows_.row(static_cast<Eigen::Index>(pick(rng))).transpose();
  }

 private:
  PriorSpec spec_;
  Matrix rows_;
};

inline ParticleBelief sample_prior(const Prior& prior, Index m, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return ParticleBelief(prior.sample(m, rng), seed);
}

inline ParticleBelief sample_prior(const PriorSpec& spec, Index m, std::uint64_t seed) {
  return sample_prior(Prior(spec), m, seed);
}

// ---------------------------------------------------------------------------
// Response models

enum class ResponseKind { noiseless, logistic };

struct ResponseModel {
  ResponseKind kind = ResponseKind::logistic;
  double temperature = 1.0;

  static ResponseModel logistic(double tau) {
    if (!(tau > 0.0)) throw InvalidArgument("logistic temperature must be > 0");
    return {ResponseKind::logistic, tau};
  }
  static ResponseModel noiseless() { return {ResponseKind::noiseless, 1.0}; }
};

// Turns a row of utilities into response probabilities in place.
template <typename Row>
void utilities_to_probs(Row&& row, const ResponseModel& model) {
  if (model.kind == ResponseKind::logistic) {
    softmax_inplace(row, model.temperature);
    return;
  }
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < row.size(); ++i)
    if (row[i] > row[best]) best = i;
  for (Eigen::Index i = 0; i < row.size(); ++i) row[i] = (i == best) ? 1.0 : 0.0;
}

inline Vector response_probs(const Matrix& slate, const Vector& u, const ResponseModel& model) {
  if (slate.rows() < 2) throw InvalidArgument("a slate needs at least two items");
  Vector p = slate * u;
  utilities_to_probs(p, model);
  return p;
}

// R(i | q; u_j) for every particle j (rows) and response i (columns).
inline Matrix response_matrix(const Matrix& slate, const Matrix& particles, const ResponseModel& model) {
  Matrix p = particles * slate.transpose();
  for (Eigen::Index j = 0; j < p.rows(); ++j) utilities_to_probs(p.row(j), model);
  return p;
}

inline Index sample_response(const Matrix& slate, const Vector& u, const ResponseModel& model, Rng& rng) {
  Vector p = response_probs(slate, u, model);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double draw = unif(rng);
  double cum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    cum += p[i];
    if (draw < cum) return static_cast<Index>(i);
  }
  // Rounding left cum slightly below 1; fall back to the last positive-mass index.
  for (Eigen::Index i = p.size() - 1; i >= 0; --i)
    if (p[i] > 0.0) return static_cast<Index>(i);
  return 0;
}

// log R(response | q; u_j) for every particle, exact in the log domain.
inline Vector log_response_likelihood(const Matrix& slate, Index response, const Matrix& particles,
                                      const ResponseModel& model) {
  const auto r = static_cast<Eigen::Index>(response);
  Matrix s = particles * slate.transpose();
  Vector out(s.rows());
  for (Eigen::Index j = 0; j < s.rows(); ++j) {
    if (model.kind == ResponseKind::logistic) {
      auto row = s.row(j);
      const double inv_t = 1.0 / model.temperature;
      double top = row.maxCoeff() * inv_t;
      double total = 0.0;
      for (Eigen::Index i = 0; i < row.size(); ++i) total += std::exp(row[i] * inv_t - top);
      out[j] = row[r] * inv_t - top - std::log(total);
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < s.cols(); ++i)
        if (s(j, i) > s(j, best)) best = i;
      out[j] = (best == r) ? 0.0 : -std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

// w_j <- w_j R(r | q; u_j), renormalized; particles are shared unchanged.
inline ParticleBelief bayes_update(const ParticleBelief& belief, const Matrix& slate, Index response,
                                   const ResponseModel& model) {
  if (response >= static_cast<Index>(slate.rows())) throw InvalidArgument("response index out of range");
  Vector lw = belief.log_weights() + log_response_likelihood(slate, response, belief.particles(), model);
  if (!std::isfinite(lw.maxCoeff()))
    throw DegeneratePosterior("no particle is consistent with the observed response");
  return ParticleBelief(belief.particles(), std::move(lw), belief.seed());
}

inline Vector posterior_mean(const ParticleBelief& belief) {
  return belief.particles().transpose() * belief.weights();
}

inline ScoredItem best_item(const ParticleBelief& belief, const Catalog& catalog) {
  return top_k_by_direction(catalog, posterior_mean(belief), 1).front();
}

// Non-negative: utility of the true best item minus that of the recommendation.
inline double regret(const Vector& true_u, Index item, const Catalog& catalog) {
  if (item >= catalog.size()) throw InvalidArgument("regret: item index out of range");
  Vector utils = catalog.items() * true_u;
  return std::max(0.0, utils.maxCoeff() - utils[static_cast<Eigen::Index>(item)]);
}

inline double effective_sample_size(const ParticleBelief& belief) {
  return 1.0 / belief.weights().squaredNorm();
}

// Multinomial resampling with isotropic Gaussian jitter; returns uniform weights.
inline ParticleBelief resample(const ParticleBelief& belief, double jitter_scale, Rng& rng) {
  if (jitter_scale < 0.0) throw InvalidArgument("jitter scale must be >= 0");
  const Vector& w = belief.weights();
  std::discrete_distribution<Index> pick(w.data(), w.data() + w.size());
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(belief.particles().rows(), belief.particles().cols());
  for (Eigen::Index j = 0; j < out.rows(); ++j) {
    out.row(j) = belief.particles().row(static_cast<Eigen::Index>(pick(rng)));
    if (jitter_scale > 0.0)
      for (Eigen::Index c = 0; c < out.cols(); ++c) out(j, c) += jitter_scale * normal(rng);
  }
  return ParticleBelief(std::move(out), belief.seed());
}

// Snapshot as a binary matrix (particles) with the log weights as a second matrix.
inline void save_belief_snapshot(const ParticleBelief& belief, std::ostream& out) {
  binary::write_matrix(out, belief.particles());
  Matrix lw(1, belief.log_weights().size());
  lw.row(0) = belief.log_weights().transpose();
  binary::write_matrix(out, lw);
}

inline ParticleBelief load_belief_snapshot(std::istream& in) {
  Matrix particles = binary::read_matrix(in);
  Matrix lw = binary::read_matrix(in);
  if (lw.rows() != 1 || lw.cols() != particles.rows()) throw Error("corrupt belief snapshot");
  return ParticleBelief(std::move(particles), lw.row(0).transpose(), 0);
}

}  // namespace evoi
