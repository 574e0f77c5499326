#pragma once

// One elicitation session: belief chain, per-turn query selection and
// response handling. The simulation harness and the HTTP service both drive
// this type, so a demo session and a harness trial with the same seed walk
// through identical beliefs.

#include "evoi/strategy.hpp"

#include <functional>
#include <memory>

namespace evoi {

// Seed streams derived from a session (or trial) seed.
namespace streams {
inline constexpr std::uint64_t kCatalog = 0x43415441;
inline constexpr std::uint64_t kPrior = 0x5052494f;
inline constexpr std::uint64_t kTrueUser = 0x54525545;
inline constexpr std::uint64_t kResponse = 0x52455350;
inline constexpr std::uint64_t kStrategy = 0x53545241;
inline constexpr std::uint64_t kResample = 0x52534d50;
inline constexpr std::uint64_t kTrial = 0x54524941;
}  // namespace streams

// Where a simulated user's true utility vector comes from.
//   particle: a uniformly chosen particle of the initial belief
//   prior:    a fresh draw from the prior
enum class TrueUserSource { particle, prior };

inline TrueUserSource parse_true_user(const std::string& s) {
  if (s == "particle") return TrueUserSource::particle;
  if (s == "prior") return TrueUserSource::prior;
  throw InvalidArgument("unknown true_user source '" + s + "'");
}

inline std::string to_string(TrueUserSource s) { return s == TrueUserSource::particle ? "particle" : "prior"; }

using QuerySelector =
    std::function<Selection(const ParticleBelief&, const Catalog&, std::uint64_t seed, const Deadline&)>;

struct SessionOptions {
  StrategySpec strategy;
  Index particles = 100;
  double tau_eval = 0.1;
  std::uint64_t seed = 0;
  bool simulated_user = false;  // demo mode: a known true user
  TrueUserSource true_user = TrueUserSource::particle;
  bool resample = false;            // resample when ESS < resample_fraction * m
  double resample_fraction = 0.5;
  double resample_jitter = 0.01;    // times the mean particle norm
  QuerySelector selector;           // overrides the strategy when set
};

struct TurnRecord {
  Index turn = 0;
  std::vector<Index> items;                       // empty for partial queries
  std::vector<std::vector<Index>> attributes;     // partial queries only
  Index response = 0;
  double evoi = 0.0;
  std::optional<double> regret;                   // simulated user only, after the update
  double wall_ms = 0.0;
  bool fallback = false;
  double ess = 0.0;                               // after the update
};

class ElicitationSession {
 public:
  ElicitationSession(std::shared_ptr<const Catalog> catalog, const Prior& prior, SessionOptions options)
      : catalog_(std::move(catalog)), options_(std::move(options)) {
    check_options();
    if (prior.dim() != catalog_->dim()) throw InvalidArgument("prior and catalog dimensions differ");
    if (options_.particles < 1) throw InvalidArgument("particle count must be >= 1");
    belief_ = sample_prior(prior, options_.particles, derive_seed(options_.seed, streams::kPrior));
    if (options_.simulated_user) {
      Rng rng = make_rng(derive_seed(options_.seed, streams::kTrueUser));
      if (options_.true_user == TrueUserSource::particle) {
        std::uniform_int_distribution<Index> pick(0, belief_.size() - 1);
        true_user_index_ = pick(rng);
        true_user_ = belief_.particle(*true_user_index_).transpose();
      } else {
        true_user_ = prior.sample_one(rng);
      }
      initial_regret_ = current_regret();
    }
  }

  // Explicit initial belief; `true_user` turns on the simulated user.
  ElicitationSession(std::shared_ptr<const Catalog> catalog, ParticleBelief initial, SessionOptions options,
                     std::optional<Vector> true_user = std::nullopt)
      : catalog_(std::move(catalog)), options_(std::move(options)), belief_(std::move(initial)) {
    check_options();
    if (belief_.dim() != catalog_->dim()) throw InvalidArgument("belief and catalog dimensions differ");
    options_.particles = belief_.size();
    if (true_user) {
      if (true_user->size() != static_cast<Eigen::Index>(catalog_->dim()))
        throw InvalidArgument("true user and catalog dimensions differ");
      options_.simulated_user = true;
      true_user_ = std::move(true_user);
      initial_regret_ = current_regret();
    }
  }

  const Catalog& catalog() const { return *catalog_; }
  std::shared_ptr<const Catalog> catalog_ptr() const { return catalog_; }
  const ParticleBelief& belief() const { return belief_; }
  const SessionOptions& options() const { return options_; }
  ResponseModel model() const { return ResponseModel::logistic(options_.tau_eval); }
  Index turn() const { return static_cast<Index>(history_.size()); }
  const std::vector<TurnRecord>& history() const { return history_; }
  const std::optional<Vector>& true_user() const { return true_user_; }
  std::optional<Index> true_user_index() const { return true_user_index_; }
  std::optional<double> initial_regret() const { return initial_regret_; }
  bool has_query() const { return query_.has_value(); }
  const Selection& query() const {
    if (!query_) throw Error("no query prepared for this turn");
    return *query_;
  }
  double last_select_ms() const { return last_select_ms_; }

  std::uint64_t strategy_seed() const { return derive_seed(options_.seed, streams::kStrategy, turn()); }

  // Computes the slate for the current turn. With `fallback_on_timeout`, a
  // deadline hit falls back to one RandUserTopItem draw (random slate for
  // partial strategies).
  const Selection& prepare_query(const Deadline& deadline = {}, bool fallback_on_timeout = false) {
    if (query_) return *query_;
    const auto start = std::chrono::steady_clock::now();
    try {
      query_ = run_selector(deadline);
    } catch (const DeadlineExceeded&) {
      if (!fallback_on_timeout) throw;
      query_ = fallback_selection();
    }
    last_select_ms_ =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return *query_;
  }

  // Installs a previously computed slate (event-log replay).
  void set_query(Selection selection) {
    if (selection.vectors.cols() != static_cast<Eigen::Index>(catalog_->dim()))
      throw InvalidArgument("query dimension differs from the catalog");
    query_ = std::move(selection);
  }

  Selection selection_for_items(const std::vector<Index>& items) const {
    QuerySlate q = QuerySlate::from_items(*catalog_, items);
    return selection_from_items(*catalog_, items, EvoiEvaluator(belief_, *catalog_, model()).evoi(q));
  }

  Selection selection_for_attributes(const std::vector<std::vector<Index>>& attributes) const {
    Matrix X = Matrix::Zero(static_cast<Eigen::Index>(attributes.size()), static_cast<Eigen::Index>(catalog_->dim()));
    for (std::size_t i = 0; i < attributes.size(); ++i)
      for (Index a : attributes[i]) {
        if (a >= catalog_->dim()) throw InvalidArgument("attribute index out of range");
        X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = 1.0;
      }
    Selection s;
    s.attributes = attributes;
    s.evoi = EvoiEvaluator(belief_, *catalog_, model()).evoi(X);
    s.vectors = std::move(X);
    return s;
  }

  // Response the simulated user gives to the current query.
  Index simulated_response() const {
    if (!true_user_) throw InvalidArgument("session has no simulated user");
    Rng rng = make_rng(derive_seed(options_.seed, streams::kResponse, turn()));
    return sample_response(query().vectors, *true_user_, model(), rng);
  }

  // Bayes update on the current query; advances to the next turn.
  const TurnRecord& answer(Index chosen, double wall_ms = 0.0) {
    const Selection& q = query();
    if (chosen >= static_cast<Index>(q.vectors.rows())) throw InvalidArgument("chosen index is outside the slate");
    belief_ = bayes_update(belief_, q.vectors, chosen, model());
    TurnRecord rec;
    rec.turn = turn();
    if (q.items) rec.items = *q.items;
    rec.attributes = q.attributes;
    rec.response = chosen;
    rec.evoi = q.evoi;
    rec.wall_ms = wall_ms;
    rec.fallback = q.fallback;
    if (options_.resample &&
        effective_sample_size(belief_) < options_.resample_fraction * static_cast<double>(belief_.size())) {
      const double scale = options_.resample_jitter * belief_.particles().rowwise().norm().mean();
      Rng rng = make_rng(derive_seed(options_.seed, streams::kResample, rec.turn));
      belief_ = resample(belief_, scale, rng);
    }
    rec.ess = effective_sample_size(belief_);
    if (true_user_) rec.regret = current_regret();
    query_.reset();
    history_.push_back(std::move(rec));
    return history_.back();
  }

  std::optional<double> current_regret() const {
    if (!true_user_) return std::nullopt;
    return regret(*true_user_, best_item(belief_, *catalog_).index, *catalog_);
  }

  std::vector<ScoredItem> recommendations(Index n) const {
    if (n < 1) throw InvalidArgument("n must be >= 1");
    return top_k_by_direction(*catalog_, posterior_mean(belief_), std::min(n, catalog_->size()));
  }

 private:
  void check_options() {
    if (!catalog_) throw InvalidArgument("session needs a catalog");
    if (!(options_.tau_eval > 0.0)) throw InvalidArgument("tau_eval must be > 0");
    options_.strategy.validate();
    if (is_partial(options_.strategy.kind)) {
      catalog_->require_partial_mode();
    } else if (options_.strategy.slate_size() > catalog_->size()) {
      throw InvalidArgument("slate size k exceeds catalog size N");
    }
  }

  Selection run_selector(const Deadline& deadline) const {
    if (options_.selector) return options_.selector(belief_, *catalog_, strategy_seed(), deadline);
    return select_query(options_.strategy, *catalog_, belief_, model(), strategy_seed(), deadline);
  }

  Selection fallback_selection() const {
    Rng rng = make_rng(strategy_seed());
    Selection s;
    if (is_partial(options_.strategy.kind)) {
      PartialSlate p = random_partial(*catalog_, options_.strategy.slate_size(), options_.strategy.attrs_per_item, rng);
      s = selection_for_attributes(p.selected());
    } else {
      QuerySlate q = rand_user_top_item(*catalog_, belief_, options_.strategy.slate_size(), rng);
      s = selection_for_items(*q.item_indices);
    }
    s.fallback = true;
    return s;
  }

  std::shared_ptr<const Catalog> catalog_;
  SessionOptions options_;
  ParticleBelief belief_;
  std::optional<Vector> true_user_;
  std::optional<Index> true_user_index_;
  std::optional<double> initial_regret_;
  std::optional<Selection> query_;
  std::vector<TurnRecord> history_;
  double last_select_ms_ = 0.0;
};

}  // namespace evoi
