// elicit: catalogs, simulated elicitation, benchmarks, partial queries and the HTTP service.

#include "evoi/service.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <cstdlib>
#include <iostream>

namespace {

using namespace evoi;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int cmd_catalog_synth(Index n, Index d, std::uint64_t seed, const std::string& out, std::optional<double> density) {
  const SynthSpec spec{n, d, seed};
  Catalog c = density ? synth_binary_catalog(spec, *density) : synth_catalog(spec);
  if (ends_with(out, ".csv")) {
    save_catalog(c, out);
  } else {
    save_catalog_binary(c, out);
  }
  std::cerr << "wrote " << c.size() << " x " << c.dim() << " catalog to " << out << "\n";
  return 0;
}

int cmd_catalog_validate(const std::string& path) {
  Catalog c = load_catalog_any(path);
  std::cout << "ok: " << c.size() << " items, " << c.dim() << " attributes, max norm "
            << detail::format_double(c.max_norm()) << (c.in_unit_cube() ? ", partial mode available" : "") << "\n";
  return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& preset, std::string output,
                 std::string aggregate_output) {
  ExperimentConfig cfg = load_experiment_config(config_path, preset);
  if (output.empty()) output = cfg.output;
  if (aggregate_output.empty()) aggregate_output = cfg.aggregate_output;
  ExperimentResult r = run_experiment(cfg);
  std::ostringstream trials, agg;
  write_trial_csv(trials, r.traces, cfg.strategy.name());
  write_aggregate_csv(agg, r.aggregate);
  if (output.empty()) {
    std::cout << trials.str();
  } else {
    write_text_file(output, trials.str());
  }
  if (!aggregate_output.empty()) write_text_file(aggregate_output, agg.str());
  Index aborted = 0;
  for (const auto& t : r.traces) aborted += t.error ? 1 : 0;
  const auto& first = r.aggregate.front();
  const auto& last = r.aggregate.back();
  std::cerr << cfg.strategy.name() << ": " << cfg.n_trials << " trials, regret " << first.mean_regret << " -> "
            << last.mean_regret << " after " << cfg.n_queries << " queries";
  if (r.aggregate.size() > 1) std::cerr << ", first-query EVOI " << r.aggregate[1].mean_evoi;
  if (aborted) std::cerr << ", " << aborted << " aborted";
  std::cerr << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, std::string output) {
  std::ifstream in(config_path);
  if (!in) throw InvalidArgument("cannot open config '" + config_path + "'");
  BenchConfig b = parse_bench_config(Json::parse(in));
  if (output.empty()) output = b.output;
  auto rows = benchmark(b, &std::cerr);
  std::ostringstream out;
  write_bench_csv(out, rows);
  if (output.empty()) {
    std::cout << out.str();
  } else {
    write_text_file(output, out.str());
  }
  return 0;
}

int cmd_partial(const std::string& config_path, Index k, Index p, Index restarts, const std::string& method) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  auto catalog = trial_catalog(cfg, cfg.seed);
  catalog->require_partial_mode();
  ParticleBelief belief = sample_prior(make_prior(cfg, catalog->dim()), cfg.m, derive_seed(cfg.seed, streams::kPrior));
  Json out{{"k", k}, {"p", p}, {"tau_eval", cfg.tau_eval}, {"results", Json::array()}};
  auto report = [&](const std::string& name, const PartialResult& r) {
    out["results"].push_back(Json{{"method", name}, {"evoi", r.evoi}, {"items", r.slate.selected_names()}});
  };
  const bool all = method == "all";
  if (all || method == "cont_partial") {
    PartialConfig pc;
    pc.restarts = restarts;
    pc.seed = derive_seed(cfg.seed, streams::kStrategy, 0);
    report("cont_partial", cont_partial(pc, belief, *catalog, k, p, cfg.tau_eval));
  }
  if (all || method == "greedy_partial") report("greedy_partial", greedy_partial(belief, *catalog, k, p, cfg.tau_eval));
  if ((all && p == 1) || method == "exhaustive_partial") {
    try {
      report("exhaustive_partial", exhaustive_partial(belief, *catalog, k, cfg.tau_eval, 2'000'000));
    } catch (const BudgetExceeded& e) {
      if (!all) throw;
      std::cerr << "exhaustive_partial skipped: " << e.what() << "\n";
    }
  }
  if (all || method == "random_partial") {
    Rng rng = make_rng(derive_seed(cfg.seed, streams::kStrategy, 1));
    PartialSlate s = random_partial(*catalog, k, p, rng);
    report("random_partial", PartialResult{s, partial_evoi(s, belief, *catalog, cfg.tau_eval), 0, {}});
  }
  if (out["results"].empty()) throw InvalidArgument("unknown partial method '" + method + "'");
  std::cout << out.dump(2) << "\n";
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(std::optional<int> port, const std::string& host, const std::string& data_dir,
              const std::string& static_dir, double budget_ms) {
  if (!port) {
    const char* env = std::getenv("ELICIT_PORT");
    port = env ? std::stoi(env) : 8080;
  }
  ServiceOptions opts;
  opts.data_dir = data_dir;
  opts.default_budget_ms = budget_ms;
  ElicitationService service(opts);
  httplib::Server server;
  service.mount(server, static_dir);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cerr << "listening on " << host << ":" << *port << " (" << service.session_count()
            << " sessions restored from " << data_dir << ")\n";
  if (!server.listen(host, *port)) {
    std::cerr << "error: cannot listen on " << host << ":" << *port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian preference elicitation with EVOI-optimal slate queries"};
  app.require_subcommand(1);

  auto* catalog = app.add_subcommand("catalog", "create or check item catalogs");
  catalog->require_subcommand(1);
  auto* synth = catalog->add_subcommand("synth", "write a synthetic N(0, I) catalog");
  Index n = 5000, d = 10;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<double> density;
  synth->add_option("--n", n, "number of items")->required();
  synth->add_option("--d", d, "dimension")->required();
  synth->add_option("--seed", seed, "RNG seed");
  synth->add_option("--out", out, "output path (.csv, anything else = binary cache)")->required();
  synth->add_option("--binary-density", density, "0/1 attributes with this density (partial mode)");
  auto* validate = catalog->add_subcommand("validate", "parse a catalog and report its shape");
  std::string path;
  validate->add_option("path", path, "CSV or binary catalog")->required();

  auto* simulate = app.add_subcommand("simulate", "run simulated elicitation trials");
  std::string config, preset, output, aggregate_output;
  simulate->add_option("--config", config, "experiment config (JSON)")->required();
  simulate->add_option("--preset", preset, "synthetic | movielens | goodreads");
  simulate->add_option("--output", output, "per-trial CSV (default: config 'output' or stdout)");
  simulate->add_option("--aggregate", aggregate_output, "aggregate CSV");

  auto* bench = app.add_subcommand("bench", "per-query wall-clock benchmark");
  bench->add_option("--config", config, "benchmark config (JSON)")->required();
  bench->add_option("--output", output, "CSV output (default: stdout)");

  auto* serve = app.add_subcommand("serve", "HTTP session service");
  std::optional<int> port;
  std::string host = "0.0.0.0", data_dir = "elicit-data", static_dir = "webui/dist";
  double budget_ms = 2000.0;
  serve->add_option("--port", port, "port (default: $ELICIT_PORT or 8080)");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--data-dir", data_dir, "catalogs and session event logs");
  serve->add_option("--static", static_dir, "directory served at /");
  serve->add_option("--budget-ms", budget_ms, "default per-turn selection budget");

  auto* partial = app.add_subcommand("partial", "partial (attribute) comparison queries");
  partial->require_subcommand(1);
  auto* optimize_cmd = partial->add_subcommand("optimize", "optimize one partial query");
  Index k = 2, p = 1, restarts = 100;
  std::string method = "all";
  optimize_cmd->add_option("--k", k, "slate size");
  optimize_cmd->add_option("--p", p, "attributes per item");
  optimize_cmd->add_option("--restarts", restarts, "cont_partial restarts");
  optimize_cmd->add_option("--config", config, "config with catalog, prior, m, tau_eval, seed")->required();
  optimize_cmd->add_option("--method", method, "cont_partial | greedy_partial | exhaustive_partial | random_partial | all");

  CLI11_PARSE(app, argc, argv);
  try {
    if (synth->parsed()) return cmd_catalog_synth(n, d, seed, out, density);
    if (validate->parsed()) return cmd_catalog_validate(path);
    if (simulate->parsed()) return cmd_simulate(config, preset, output, aggregate_output);
    if (bench->parsed()) return cmd_bench(config, output);
    if (serve->parsed()) return cmd_serve(port, host, data_dir, static_dir, budget_ms);
    if (optimize_cmd->parsed()) return cmd_partial(config, k, p, restarts, method);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
