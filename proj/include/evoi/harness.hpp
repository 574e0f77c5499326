#pragma once

// Simulated elicitation trials, aggregation, CSV output and wall-clock benchmarks.

#include "evoi/session.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace evoi {

struct CatalogSource {
  enum class Kind { synthetic, file } kind = Kind::synthetic;
  Index n_items = 5000;
  Index dim = 10;
  std::optional<std::uint64_t> seed;  // synthetic: fixed catalog; unset = fresh catalog per trial
  std::optional<double> binary_density;  // synthetic 0/1 attributes instead of N(0, 1)
  std::string path;
};

struct Preset {
  std::string name;
  double learning_rate;
  double tau_opt;
  double tau_eval;
};

inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> all{
      {"synthetic", 5e-4, 0.02, 0.1},
      {"movielens", 1e-3, 0.03, 0.01},
      {"goodreads", 5e-4, 0.02, 0.1},
  };
  return all;
}

inline const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw InvalidArgument("unknown preset '" + name + "'");
}

struct ExperimentConfig {
  CatalogSource catalog;
  PriorKind prior_kind = PriorKind::standard_normal;
  std::string prior_path;
  StrategySpec strategy;
  Index m = 100;
  Index n_queries = 10;
  Index n_trials = 20;
  double tau_eval = 0.1;
  std::uint64_t seed = 0;
  TrueUserSource true_user = TrueUserSource::particle;
  bool resample = false;
  bool timing = false;  // record wall_ms; off keeps CSVs byte-identical across runs
  Index threads = 1;
  std::string output;            // per-trial CSV
  std::string aggregate_output;  // aggregate CSV
  std::string preset;

  Index k() const { return strategy.slate_size(); }

  void validate() const {
    if (n_queries < 1) throw InvalidArgument("n_queries must be >= 1");
    if (n_trials < 1) throw InvalidArgument("n_trials must be >= 1");
    if (m < 1) throw InvalidArgument("m must be >= 1");
    if (!(tau_eval > 0.0)) throw InvalidArgument("tau_eval must be > 0");
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
    if (catalog.kind == CatalogSource::Kind::synthetic && (catalog.n_items < 1 || catalog.dim < 1))
      throw InvalidArgument("synthetic catalog needs n >= 1 and d >= 1");
    strategy.validate();
  }
};

// Keys: catalog {type: synthetic|file, n, d, seed, binary_density, path}, prior {type:
// standard_normal|empirical_file, path}, strategy (name or object), m, k,
// n_queries, n_trials, tau_eval, seed, true_user, resample, timing, threads,
// output, aggregate_output, preset. A preset supplies lr, tau_opt and tau_eval
// defaults; explicit keys win. `preset_override` (CLI) beats the config's preset.
inline ExperimentConfig parse_experiment_config(const Json& j, const std::string& preset_override = "") {
  if (!j.is_object()) throw InvalidArgument("experiment config must be a JSON object");
  ExperimentConfig cfg;
  cfg.preset = !preset_override.empty() ? preset_override : j.value("preset", std::string());
  StrategySpec base;
  if (!cfg.preset.empty()) {
    const Preset& p = find_preset(cfg.preset);
    base.continuous.learning_rate = p.learning_rate;
    base.continuous.tau_opt = p.tau_opt;
    cfg.tau_eval = p.tau_eval;
  }
  if (j.contains("catalog")) {
    const Json& c = j.at("catalog");
    const std::string type = c.value("type", std::string("synthetic"));
    if (type == "synthetic") {
      cfg.catalog.kind = CatalogSource::Kind::synthetic;
      detail::read_key(c, "n", cfg.catalog.n_items);
      detail::read_key(c, "d", cfg.catalog.dim);
      if (c.contains("seed") && !c.at("seed").is_null()) cfg.catalog.seed = c.at("seed").get<std::uint64_t>();
      if (c.contains("binary_density")) cfg.catalog.binary_density = c.at("binary_density").get<double>();
    } else if (type == "file") {
      cfg.catalog.kind = CatalogSource::Kind::file;
      cfg.catalog.path = c.at("path").get<std::string>();
    } else {
      throw InvalidArgument("unknown catalog type '" + type + "'");
    }
  }
  if (j.contains("prior")) {
    const Json& p = j.at("prior");
    const std::string type = p.is_string() ? p.get<std::string>() : p.value("type", std::string("standard_normal"));
    if (type == "standard_normal") {
      cfg.prior_kind = PriorKind::standard_normal;
    } else if (type == "empirical_file") {
      cfg.prior_kind = PriorKind::empirical_file;
      cfg.prior_path = p.at("path").get<std::string>();
    } else {
      throw InvalidArgument("unknown prior type '" + type + "'");
    }
  }
  detail::reject_negative(j, {"m", "k", "n_queries", "n_trials", "threads"});
  cfg.strategy = parse_strategy(j.value("strategy", Json("cont_alter")), base);
  if (j.contains("k")) cfg.strategy.set_slate_size(j.at("k").get<Index>());
  detail::read_key(j, "m", cfg.m);
  detail::read_key(j, "n_queries", cfg.n_queries);
  detail::read_key(j, "n_trials", cfg.n_trials);
  detail::read_key(j, "tau_eval", cfg.tau_eval);
  detail::read_key(j, "seed", cfg.seed);
  if (j.contains("true_user")) cfg.true_user = parse_true_user(j.at("true_user").get<std::string>());
  detail::read_key(j, "resample", cfg.resample);
  detail::read_key(j, "timing", cfg.timing);
  detail::read_key(j, "threads", cfg.threads);
  detail::read_key(j, "output", cfg.output);
  detail::read_key(j, "aggregate_output", cfg.aggregate_output);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path, const std::string& preset_override = "") {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), 0);
  }
  return parse_experiment_config(j, preset_override);
}

struct TraceRow {
  Index query_idx = 0;  // 1-based
  std::vector<std::string> item_ids;
  Index response = 0;
  double evoi = 0.0;
  double regret = 0.0;
  double wall_ms = 0.0;
};

struct ElicitationTrace {
  Index trial = 0;
  std::uint64_t seed = 0;
  std::optional<Index> true_user_particle;  // unset when drawn fresh from the prior
  double initial_regret = 0.0;
  std::vector<TraceRow> rows;
  std::optional<std::string> error;  // set when the trial aborted
};

inline std::uint64_t trial_seed(const ExperimentConfig& cfg, Index trial) {
  return derive_seed(cfg.seed, streams::kTrial, trial);
}

inline std::shared_ptr<const Catalog> trial_catalog(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.catalog.kind == CatalogSource::Kind::file) return std::make_shared<const Catalog>(load_catalog_any(cfg.catalog.path));
  const std::uint64_t cs = cfg.catalog.seed ? *cfg.catalog.seed : derive_seed(seed, streams::kCatalog);
  const SynthSpec spec{cfg.catalog.n_items, cfg.catalog.dim, cs};
  if (cfg.catalog.binary_density) return std::make_shared<const Catalog>(synth_binary_catalog(spec, *cfg.catalog.binary_density));
  return std::make_shared<const Catalog>(synth_catalog(spec));
}

inline Prior make_prior(const ExperimentConfig& cfg, Index dim) {
  return Prior(PriorSpec{cfg.prior_kind, dim, cfg.prior_path});
}

inline SessionOptions session_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  SessionOptions o;
  o.strategy = cfg.strategy;
  o.particles = cfg.m;
  o.tau_eval = cfg.tau_eval;
  o.seed = seed;
  o.simulated_user = true;
  o.true_user = cfg.true_user;
  o.resample = cfg.resample;
  return o;
}

// Drives a simulated-user session for n_queries turns.
inline ElicitationTrace run_session_trial(ElicitationSession& session, Index n_queries, bool timing) {
  ElicitationTrace trace;
  trace.seed = session.options().seed;
  trace.true_user_particle = session.true_user_index();
  trace.initial_regret = *session.initial_regret();
  try {
    for (Index q = 0; q < n_queries; ++q) {
      const Selection& sel = session.prepare_query();
      const double ms = timing ? session.last_select_ms() : 0.0;
      TraceRow row;
      row.query_idx = q + 1;
      if (sel.items) {
        for (Index i : *sel.items) row.item_ids.push_back(session.catalog().id(i));
      } else {
        for (const auto& attrs : sel.attributes) {
          std::string label;
          for (Index a : attrs) label += (label.empty() ? "" : "+") + session.catalog().attribute_name(a);
          row.item_ids.push_back(label);
        }
      }
      row.response = session.simulated_response();
      const TurnRecord& rec = session.answer(row.response, ms);
      row.evoi = rec.evoi;
      row.regret = *rec.regret;
      row.wall_ms = ms;
      trace.rows.push_back(std::move(row));
    }
  } catch (const DegeneratePosterior& e) {
    trace.error = e.what();
  }
  return trace;
}

inline ElicitationTrace run_trial_with_seed(const ExperimentConfig& cfg, std::uint64_t seed, Index trial = 0,
                                            std::shared_ptr<const Catalog> catalog = nullptr) {
  if (!catalog) catalog = trial_catalog(cfg, seed);
  ElicitationSession session(catalog, make_prior(cfg, catalog->dim()), session_options(cfg, seed));
  ElicitationTrace trace = run_session_trial(session, cfg.n_queries, cfg.timing);
  trace.trial = trial;
  return trace;
}

inline ElicitationTrace run_trial(const ExperimentConfig& cfg, Index trial) {
  return run_trial_with_seed(cfg, trial_seed(cfg, trial), trial);
}

struct AggregateRow {
  Index query_idx = 0;
  std::string strategy;
  double mean_regret = 0.0;
  double se_regret = 0.0;
  double mean_evoi = 0.0;
  double se_evoi = 0.0;
  Index count = 0;
};

namespace detail {

inline std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

}  // namespace detail

// Row 0 is the prior (initial regret, EVOI 0). Aborted trials contribute only
// the rows they completed.
inline std::vector<AggregateRow> aggregate(const std::vector<ElicitationTrace>& traces, Index n_queries,
                                           const std::string& strategy) {
  std::vector<AggregateRow> out;
  for (Index q = 0; q <= n_queries; ++q) {
    std::vector<double> regrets, evois;
    for (const auto& t : traces) {
      if (q == 0) {
        regrets.push_back(t.initial_regret);
        evois.push_back(0.0);
      } else if (q <= t.rows.size()) {
        regrets.push_back(t.rows[q - 1].regret);
        evois.push_back(t.rows[q - 1].evoi);
      }
    }
    AggregateRow row;
    row.query_idx = q;
    row.strategy = strategy;
    row.count = regrets.size();
    std::tie(row.mean_regret, row.se_regret) = detail::mean_and_se(regrets);
    std::tie(row.mean_evoi, row.se_evoi) = detail::mean_and_se(evois);
    out.push_back(row);
  }
  return out;
}

inline constexpr std::string_view kTrialCsvHeader = "trial,query_idx,strategy,evoi,regret,wall_ms,response_idx";
inline constexpr std::string_view kAggregateCsvHeader = "query_idx,strategy,mean_regret,se_regret,mean_evoi,se_evoi";

// An aborted trial ends with a marker row: evoi and regret "nan", response -2.
inline void write_trial_csv(std::ostream& out, const std::vector<ElicitationTrace>& traces,
                            const std::string& strategy) {
  using detail::format_double;
  out << kTrialCsvHeader << '\n';
  for (const auto& t : traces) {
    out << t.trial << ",0," << strategy << ",0," << format_double(t.initial_regret) << ",0,-1\n";
    for (const auto& r : t.rows)
      out << t.trial << ',' << r.query_idx << ',' << strategy << ',' << format_double(r.evoi) << ','
          << format_double(r.regret) << ',' << format_double(r.wall_ms) << ',' << r.response << '\n';
    if (t.error) out << t.trial << ',' << t.rows.size() + 1 << ',' << strategy << ",nan,nan,0,-2\n";
  }
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  using detail::format_double;
  out << kAggregateCsvHeader << '\n';
  for (const auto& r : rows)
    out << r.query_idx << ',' << r.strategy << ',' << format_double(r.mean_regret) << ','
        << format_double(r.se_regret) << ',' << format_double(r.mean_evoi) << ',' << format_double(r.se_evoi)
        << '\n';
}

struct ExperimentResult {
  std::vector<ElicitationTrace> traces;
  std::vector<AggregateRow> aggregate;
};

// Trials are independent; with threads > 1 they run concurrently and are
// stored by trial index, so output order never depends on scheduling.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.traces.resize(cfg.n_trials);
  std::shared_ptr<const Catalog> shared;
  if (cfg.catalog.kind == CatalogSource::Kind::file || cfg.catalog.seed) shared = trial_catalog(cfg, 0);
  auto run_one = [&](Index t) { result.traces[t] = run_trial_with_seed(cfg, trial_seed(cfg, t), t, shared); };
  const Index workers = std::min(cfg.threads, cfg.n_trials);
  if (workers <= 1) {
    for (Index t = 0; t < cfg.n_trials; ++t) run_one(t);
  } else {
    std::atomic<Index> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (Index w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (Index t = next++; t < cfg.n_trials; t = next++) {
          try {
            run_one(t);
          } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }
  result.aggregate = aggregate(result.traces, cfg.n_queries, cfg.strategy.name());
  return result;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchCase {
  Index n_items = 0;
  Index m = 0;
  Index k = 0;
  std::string strategy;
};

struct BenchConfig {
  std::vector<Index> n_items{1'000'000};
  std::vector<Index> m{500};
  std::vector<Index> k{2};
  Index dim = 50;
  std::vector<Json> strategies{Json("greedy"), Json("cont_alter"), Json("cont_free")};
  Index trials = 10;
  Index queries = 10;
  std::optional<double> tau_eval;  // default: the preset's
  std::uint64_t seed = 0;
  std::string preset = "synthetic";
  std::string output;
};

inline BenchConfig parse_bench_config(const Json& j) {
  BenchConfig b;
  auto list = [&](const char* key, std::vector<Index>& out) {
    if (!j.contains(key)) return;
    out.clear();
    if (j.at(key).is_array()) {
      for (const auto& v : j.at(key)) out.push_back(v.get<Index>());
    } else {
      out.push_back(j.at(key).get<Index>());
    }
  };
  list("n", b.n_items);
  list("m", b.m);
  list("k", b.k);
  detail::read_key(j, "d", b.dim);
  if (j.contains("strategies")) b.strategies = j.at("strategies").get<std::vector<Json>>();
  detail::read_key(j, "trials", b.trials);
  detail::read_key(j, "queries", b.queries);
  if (j.contains("tau_eval")) b.tau_eval = j.at("tau_eval").get<double>();
  detail::read_key(j, "seed", b.seed);
  detail::read_key(j, "preset", b.preset);
  detail::read_key(j, "output", b.output);
  if (b.trials < 1 || b.queries < 1) throw InvalidArgument("benchmark needs trials >= 1 and queries >= 1");
  return b;
}

struct BenchRow {
  Index n_items = 0;
  Index m = 0;
  Index k = 0;
  Index dim = 0;
  std::string strategy;
  double mean_s = 0.0;
  double sd_s = 0.0;
  Index samples = 0;
};

inline BenchRow benchmark_case(const BenchConfig& b, Index n, Index m, Index k, const Json& strategy) {
  Json cfg_json{{"catalog", {{"type", "synthetic"}, {"n", n}, {"d", b.dim}}},
                {"strategy", strategy},
                {"m", m},
                {"k", k},
                {"n_queries", b.queries},
                {"n_trials", b.trials},
                {"seed", b.seed},
                {"timing", true}};
  if (!b.preset.empty()) cfg_json["preset"] = b.preset;
  if (b.tau_eval) cfg_json["tau_eval"] = *b.tau_eval;
  ExperimentConfig cfg = parse_experiment_config(cfg_json);
  std::vector<double> secs;
  for (Index t = 0; t < b.trials; ++t) {
    ElicitationTrace trace = run_trial(cfg, t);
    for (const auto& r : trace.rows) secs.push_back(r.wall_ms / 1000.0);
  }
  BenchRow row{n, m, k, b.dim, cfg.strategy.name()};
  row.samples = secs.size();
  if (!secs.empty()) {
    row.mean_s = std::accumulate(secs.begin(), secs.end(), 0.0) / static_cast<double>(secs.size());
    double ss = 0.0;
    for (double s : secs) ss += (s - row.mean_s) * (s - row.mean_s);
    row.sd_s = secs.size() > 1 ? std::sqrt(ss / static_cast<double>(secs.size() - 1)) : 0.0;
  }
  return row;
}

// One row per (N, m, k, strategy); mean and sd of per-query selection time.
inline std::vector<BenchRow> benchmark(const BenchConfig& b, std::ostream* progress = nullptr) {
  std::vector<BenchRow> rows;
  for (Index n : b.n_items)
    for (Index m : b.m)
      for (Index k : b.k)
        for (const auto& s : b.strategies) {
          rows.push_back(benchmark_case(b, n, m, k, s));
          if (progress) {
            const auto& r = rows.back();
            *progress << "N=" << r.n_items << " m=" << r.m << " k=" << r.k << " " << r.strategy << " mean "
                      << r.mean_s << " s (sd " << r.sd_s << ", " << r.samples << " queries)\n";
          }
        }
  return rows;
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  using detail::format_double;
  out << "n_items,m,k,d,strategy,mean_s,sd_s,samples\n";
  for (const auto& r : rows)
    out << r.n_items << ',' << r.m << ',' << r.k << ',' << r.dim << ',' << r.strategy << ','
        << format_double(r.mean_s) << ',' << format_double(r.sd_s) << ',' << r.samples << '\n';
}

}  // namespace evoi
