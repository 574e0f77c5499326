#pragma once

// Named query-selection strategies and their JSON configuration.

#include "evoi/partial.hpp"

#include "json.hpp"

#include <chrono>

namespace evoi {

using Json = nlohmann::json;

enum class StrategyKind {
  random,
  exhaustive,
  top5_exhaustive,
  greedy,
  rand_user_top_item,
  query_iteration,
  cont_free,
  cont_reg,
  cont_alter,
  cont_deep_retr,
  random_partial,
  greedy_partial,
  exhaustive_partial,
  cont_partial,
};

inline constexpr std::array<std::pair<StrategyKind, std::string_view>, 14> kStrategyNames{{
    {StrategyKind::random, "random"},
    {StrategyKind::exhaustive, "exhaustive"},
    {StrategyKind::top5_exhaustive, "top5_exhaustive"},
    {StrategyKind::greedy, "greedy"},
    {StrategyKind::rand_user_top_item, "rand_user_top_item"},
    {StrategyKind::query_iteration, "query_iteration"},
    {StrategyKind::cont_free, "cont_free"},
    {StrategyKind::cont_reg, "cont_reg"},
    {StrategyKind::cont_alter, "cont_alter"},
    {StrategyKind::cont_deep_retr, "cont_deep_retr"},
    {StrategyKind::random_partial, "random_partial"},
    {StrategyKind::greedy_partial, "greedy_partial"},
    {StrategyKind::exhaustive_partial, "exhaustive_partial"},
    {StrategyKind::cont_partial, "cont_partial"},
}};

inline std::string to_string(StrategyKind kind) {
  for (const auto& [k, name] : kStrategyNames)
    if (k == kind) return std::string(name);
  return "unknown";
}

inline std::optional<StrategyKind> parse_strategy_kind(std::string_view name) {
  for (const auto& [k, n] : kStrategyNames)
    if (n == name) return k;
  return std::nullopt;
}

inline bool is_partial(StrategyKind kind) {
  return kind == StrategyKind::random_partial || kind == StrategyKind::greedy_partial ||
         kind == StrategyKind::exhaustive_partial || kind == StrategyKind::cont_partial;
}

inline bool is_continuous(StrategyKind kind) {
  return kind == StrategyKind::cont_free || kind == StrategyKind::cont_reg || kind == StrategyKind::cont_alter ||
         kind == StrategyKind::cont_deep_retr;
}

inline std::string to_string(ContinuousVariant v) {
  switch (v) {
    case ContinuousVariant::free: return "free";
    case ContinuousVariant::reg: return "reg";
    case ContinuousVariant::alter: return "alter";
    case ContinuousVariant::deep_retr: return "deep_retr";
  }
  return "unknown";
}

inline ContinuousVariant parse_variant(const std::string& s) {
  if (s == "free") return ContinuousVariant::free;
  if (s == "reg") return ContinuousVariant::reg;
  if (s == "alter") return ContinuousVariant::alter;
  if (s == "deep_retr") return ContinuousVariant::deep_retr;
  throw InvalidArgument("unknown continuous variant '" + s + "'");
}

inline InitKind parse_init(const std::string& s) {
  if (s == "random") return InitKind::random;
  if (s == "rand_user_top_item") return InitKind::rand_user_top_item;
  if (s == "balanced") return InitKind::balanced;
  throw InvalidArgument("unknown initializer '" + s + "'");
}

inline std::string to_string(InitKind kind) {
  switch (kind) {
    case InitKind::random: return "random";
    case InitKind::rand_user_top_item: return "rand_user_top_item";
    case InitKind::balanced: return "balanced";
  }
  return "unknown";
}

struct StrategySpec {
  StrategyKind kind = StrategyKind::cont_alter;
  StrategyConfig discrete;
  ContinuousConfig continuous;
  PartialConfig partial;
  Index attrs_per_item = 1;                        // partial strategies
  std::uint64_t partial_budget = 2'000'000;        // exhaustive_partial enumeration cap

  Index slate_size() const { return discrete.slate_size; }
  void set_slate_size(Index k) {
    discrete.slate_size = k;
    continuous.slate_size = k;
  }
  std::string name() const { return to_string(kind); }

  void validate() const {
    if (discrete.slate_size < 2) throw InvalidArgument("slate size must be >= 2");
    if (discrete.restarts < 1) throw InvalidArgument("restarts must be >= 1");
    if (is_continuous(kind)) continuous.validate();
    if (is_partial(kind) && attrs_per_item < 1) throw InvalidArgument("attributes per item must be >= 1");
  }
};

namespace detail {

template <class T>
void read_key(const Json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline void reject_negative(const Json& j, std::initializer_list<const char*> keys) {
  for (const char* key : keys)
    if (j.contains(key) && j.at(key).is_number() && j.at(key).get<double>() < 0)
      throw InvalidArgument(std::string("config key '") + key + "' must be non-negative");
}

}  // namespace detail

// `j` is either a strategy name or an object with a "name" key plus options:
//   k, restarts, max_iterations, top_pool, exhaustive_budget, greedy_objective,
//   variant, lr, steps, outer_iters, init, tau_opt, norm_bound, lambda_reg, seed,
//   p, lambda0, lambda_growth, partial_budget.
// Keys absent from `j` keep their values from `spec` (e.g. preset defaults).
inline StrategySpec parse_strategy(const Json& j, StrategySpec spec = {}) {
  Json obj = j.is_string() ? Json{{"name", j}} : j;
  if (!obj.is_object()) throw InvalidArgument("strategy must be a name or an object");
  if (!obj.contains("name")) throw InvalidArgument("strategy object needs a 'name'");
  detail::reject_negative(obj, {"k", "restarts", "max_iterations", "top_pool", "steps", "outer_iters", "p"});
  std::string name = obj.at("name").get<std::string>();
  if (name == "continuous") {
    name = "cont_" + obj.value("variant", std::string("alter"));
  }
  auto kind = parse_strategy_kind(name);
  if (!kind) throw InvalidArgument("unknown strategy '" + name + "'");
  spec.kind = *kind;
  if (is_continuous(spec.kind)) spec.continuous.variant = parse_variant(name.substr(5));

  Index k = spec.discrete.slate_size;
  detail::read_key(obj, "k", k);
  spec.set_slate_size(k);
  detail::read_key(obj, "restarts", spec.discrete.restarts);
  spec.continuous.restarts = spec.discrete.restarts;
  detail::read_key(obj, "max_iterations", spec.discrete.max_iterations);
  detail::read_key(obj, "top_pool", spec.discrete.top_pool);
  detail::read_key(obj, "exhaustive_budget", spec.discrete.exhaustive_budget);
  if (obj.contains("greedy_objective")) {
    const auto g = obj.at("greedy_objective").get<std::string>();
    if (g == "selection_utility") spec.discrete.greedy_objective = GreedyObjective::selection_utility;
    else if (g == "peu") spec.discrete.greedy_objective = GreedyObjective::peu;
    else throw InvalidArgument("unknown greedy_objective '" + g + "'");
  }

  detail::read_key(obj, "lr", spec.continuous.learning_rate);
  if (obj.contains("steps") && !obj.at("steps").is_null()) spec.continuous.steps = obj.at("steps").get<Index>();
  detail::read_key(obj, "outer_iters", spec.continuous.outer_iterations);
  if (obj.contains("init")) spec.continuous.init = parse_init(obj.at("init").get<std::string>());
  detail::read_key(obj, "tau_opt", spec.continuous.tau_opt);
  if (obj.contains("norm_bound") && !obj.at("norm_bound").is_null())
    spec.continuous.norm_bound = obj.at("norm_bound").get<double>();
  detail::read_key(obj, "lambda_reg", spec.continuous.lambda_reg);

  detail::read_key(obj, "p", spec.attrs_per_item);
  if (spec.kind == StrategyKind::cont_partial) {
    detail::read_key(obj, "restarts", spec.partial.restarts);
    detail::read_key(obj, "steps", spec.partial.steps);
    detail::read_key(obj, "lr", spec.partial.learning_rate);
    if (obj.contains("tau_opt")) spec.partial.tau_opt = obj.at("tau_opt").get<double>();
  }
  detail::read_key(obj, "lambda0", spec.partial.lambda_initial);
  detail::read_key(obj, "lambda_growth", spec.partial.lambda_growth);
  detail::read_key(obj, "partial_budget", spec.partial_budget);

  std::uint64_t seed = spec.discrete.seed;
  detail::read_key(obj, "seed", seed);
  spec.discrete.seed = seed;
  spec.continuous.seed = seed;
  spec.partial.seed = seed;
  spec.validate();
  return spec;
}

inline Json strategy_to_json(const StrategySpec& spec) {
  Json j{{"name", spec.name()}, {"k", spec.slate_size()}};
  if (is_continuous(spec.kind)) {
    const auto& c = spec.continuous;
    j["variant"] = to_string(c.variant);
    j["lr"] = c.learning_rate;
    j["steps"] = c.effective_steps();
    j["outer_iters"] = c.outer_iterations;
    j["restarts"] = c.restarts;
    j["init"] = to_string(c.init);
    j["tau_opt"] = c.tau_opt;
    j["norm_bound"] = c.norm_bound ? Json(*c.norm_bound) : Json(nullptr);
    j["lambda_reg"] = c.lambda_reg;
  } else if (is_partial(spec.kind)) {
    j["p"] = spec.attrs_per_item;
    if (spec.kind == StrategyKind::cont_partial) {
      j["restarts"] = spec.partial.restarts;
      j["steps"] = spec.partial.steps;
      j["lr"] = spec.partial.learning_rate;
      j["lambda0"] = spec.partial.lambda_initial;
      j["lambda_growth"] = spec.partial.lambda_growth;
    }
  } else {
    j["restarts"] = spec.discrete.restarts;
    j["max_iterations"] = spec.discrete.max_iterations;
    j["top_pool"] = spec.discrete.top_pool;
    j["greedy_objective"] =
        spec.discrete.greedy_objective == GreedyObjective::peu ? "peu" : "selection_utility";
  }
  j["seed"] = spec.discrete.seed;
  return j;
}

// The slate a strategy chose for one turn.
struct Selection {
  Matrix vectors;                            // k x d, what the response model sees
  std::optional<std::vector<Index>> items;   // full-item strategies
  std::vector<std::vector<Index>> attributes;  // partial strategies: selected attributes per row
  double evoi = 0.0;                         // at the evaluation temperature
  bool fallback = false;
};

inline Selection selection_from_items(const Catalog& catalog, std::vector<Index> items, double evoi) {
  Selection s;
  s.vectors = gather_items(catalog, items);
  s.items = std::move(items);
  s.evoi = evoi;
  return s;
}

inline Selection selection_from_partial(const PartialSlate& slate, double evoi) {
  Selection s;
  s.vectors = slate.raw;
  s.attributes = slate.selected();
  s.evoi = evoi;
  return s;
}

// Runs `spec` for one turn. `seed` replaces the configured seed so every turn
// draws fresh randomness; EVOI is reported under `eval_model`.
inline Selection select_query(const StrategySpec& spec, const Catalog& catalog, const ParticleBelief& belief,
                              const ResponseModel& eval_model, std::uint64_t seed, const Deadline& deadline = {}) {
  spec.validate();
  if (catalog.dim() != belief.dim()) throw InvalidArgument("belief and catalog dimensions differ");
  const Index k = spec.slate_size();
  StrategyConfig sc = spec.discrete;
  sc.seed = seed;
  EvoiEvaluator evaluator(belief, catalog, eval_model);
  auto from_result = [&](const StrategyResult& r) {
    return selection_from_items(catalog, *r.slate.item_indices, r.evoi);
  };
  auto items_selection = [&](const QuerySlate& q) {
    return selection_from_items(catalog, *q.item_indices, evaluator.evoi(q));
  };
  const double tau_eval = eval_model.kind == ResponseKind::logistic ? eval_model.temperature : 0.0;
  auto require_logistic = [&] {
    if (eval_model.kind != ResponseKind::logistic)
      throw InvalidArgument("partial strategies need a logistic response model");
  };

  switch (spec.kind) {
    case StrategyKind::random: {
      Rng rng = make_rng(seed);
      return items_selection(random_query(catalog, k, rng));
    }
    case StrategyKind::exhaustive:
      return from_result(exhaustive_search(catalog, belief, k, eval_model, sc.exhaustive_budget, deadline));
    case StrategyKind::top5_exhaustive:
      return from_result(top5_exhaustive(catalog, belief, k, eval_model, sc.top_pool, deadline));
    case StrategyKind::greedy: {
      StrategyResult r = greedy(catalog, belief, k, eval_model, sc.greedy_objective, deadline);
      return items_selection(r.slate);
    }
    case StrategyKind::rand_user_top_item:
      return from_result(rand_user_top_item_restarts(catalog, belief, eval_model, sc, deadline));
    case StrategyKind::query_iteration:
      return from_result(query_iteration_restarts(catalog, belief, eval_model, sc, deadline));
    case StrategyKind::cont_free:
    case StrategyKind::cont_reg:
    case StrategyKind::cont_alter:
    case StrategyKind::cont_deep_retr: {
      ContinuousConfig cc = spec.continuous;
      cc.slate_size = k;
      cc.seed = seed;
      ContinuousResult r = optimize(cc, belief, catalog, eval_model, deadline);
      return selection_from_items(catalog, *r.slate.item_indices, r.evoi);
    }
    case StrategyKind::random_partial: {
      require_logistic();
      Rng rng = make_rng(seed);
      PartialSlate s = random_partial(catalog, k, spec.attrs_per_item, rng);
      return selection_from_partial(s, partial_evoi(s, belief, catalog, tau_eval));
    }
    case StrategyKind::greedy_partial: {
      require_logistic();
      PartialResult r = greedy_partial(belief, catalog, k, spec.attrs_per_item, tau_eval, deadline);
      return selection_from_partial(r.slate, r.evoi);
    }
    case StrategyKind::exhaustive_partial: {
      require_logistic();
      if (spec.attrs_per_item != 1) throw InvalidArgument("exhaustive_partial supports p = 1 only");
      PartialResult r = exhaustive_partial(belief, catalog, k, tau_eval, spec.partial_budget, deadline);
      return selection_from_partial(r.slate, r.evoi);
    }
    case StrategyKind::cont_partial: {
      require_logistic();
      PartialConfig pc = spec.partial;
      pc.seed = seed;
      PartialResult r = cont_partial(pc, belief, catalog, k, spec.attrs_per_item, tau_eval, deadline);
      return selection_from_partial(r.slate, r.evoi);
    }
  }
  throw InvalidArgument("unhandled strategy");
}

}  // namespace evoi
