#pragma once

// Live elicitation sessions over HTTP.
//
// State lives in a data directory:
//   catalogs/<id>.evoicat   binary catalog cache with metadata
//   sessions/<id>.jsonl     append-only event log (create, query, response)
// On start every log is replayed; logged slates are reinstalled rather than
// recomputed, so a replayed belief never depends on timing.

#include "evoi/harness.hpp"

#include "httplib.h"

#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <shared_mutex>

namespace evoi {

struct Reply {
  int status = 200;
  Json body;
};

inline Reply error_reply(int status, const std::string& code, const std::string& message) {
  return Reply{status, Json{{"code", code}, {"message", message}}};
}

struct ServiceOptions {
  std::string data_dir = "elicit-data";
  double default_budget_ms = 2000.0;
  Index default_recommendations = 5;
};

class ElicitationService {
 public:
  explicit ElicitationService(ServiceOptions options) : options_(std::move(options)) {
    namespace fs = std::filesystem;
    fs::create_directories(catalog_dir());
    fs::create_directories(session_dir());
    load_catalogs();
    replay_sessions();
  }

  // ---- catalogs ----------------------------------------------------------

  Reply add_catalog_csv(const std::string& csv, const std::string& requested_id = "") {
    try {
      std::istringstream in(csv);
      return add_catalog(catalog_from_csv(in), requested_id);
    } catch (const ParseError& e) {
      return error_reply(400, "parse_error", e.what());
    } catch (const InvalidArgument& e) {
      return error_reply(400, "invalid_argument", e.what());
    }
  }

  // {"synthetic": {"n", "d", "seed"}, "id"?}
  Reply add_catalog_json(const Json& body) {
    try {
      if (!body.contains("synthetic")) return error_reply(400, "invalid_argument", "expected a CSV upload or 'synthetic'");
      const Json& s = body.at("synthetic");
      SynthSpec spec{s.at("n").get<Index>(), s.at("d").get<Index>(), s.value("seed", std::uint64_t{0})};
      return add_catalog(synth_catalog(spec), body.value("id", std::string()));
    } catch (const Json::exception& e) {
      return error_reply(400, "invalid_argument", e.what());
    } catch (const InvalidArgument& e) {
      return error_reply(400, "invalid_argument", e.what());
    }
  }

  Reply add_catalog(Catalog catalog, std::string id) {
    std::unique_lock lock(catalogs_mutex_);
    if (id.empty()) {
      do id = "cat-" + std::to_string(++catalog_counter_);
      while (catalogs_.count(id));
    } else {
      if (!valid_id(id)) return error_reply(400, "invalid_argument", "catalog id may contain only [A-Za-z0-9_-]");
      if (catalogs_.count(id)) return error_reply(409, "catalog_exists", "catalog '" + id + "' already exists");
    }
    auto ptr = std::make_shared<const Catalog>(std::move(catalog));
    save_catalog_binary(*ptr, (catalog_dir() / (id + ".evoicat")).string());
    catalogs_[id] = ptr;
    return Reply{201, catalog_json(id, *ptr)};
  }

  Reply list_catalogs() const {
    std::shared_lock lock(catalogs_mutex_);
    Json out = Json::array();
    for (const auto& [id, c] : catalogs_) out.push_back(catalog_json(id, *c));
    return Reply{200, Json{{"catalogs", out}}};
  }

  // ---- sessions ----------------------------------------------------------

  // Body: catalog, strategy (name or object), k, m, tau_eval, seed, mode
  // (live|demo), true_user (particle|prior), preset, budget_ms.
  Reply create_session(const Json& request) {
    try {
      Json req = request;
      if (!req.is_object()) return error_reply(400, "invalid_argument", "request body must be a JSON object");
      if (!req.contains("catalog")) return error_reply(400, "invalid_argument", "missing 'catalog'");
      auto catalog = find_catalog(req.at("catalog").get<std::string>());
      if (!catalog) return error_reply(404, "unknown_catalog", "no catalog '" + req.at("catalog").get<std::string>() + "'");
      if (!req.contains("seed")) req["seed"] = std::random_device{}() * std::uint64_t{4294967296} + std::random_device{}();
      if (!req.contains("budget_ms")) req["budget_ms"] = options_.default_budget_ms;
      std::string id;
      {
        std::unique_lock lock(sessions_mutex_);
        do id = random_token();
        while (sessions_.count(id));
      }
      auto entry = build_session(req, catalog);
      append_event(id, Json{{"type", "create"}, {"request", req}, {"created", entry->created}});
      Json query;
      {
        std::lock_guard turn_lock(entry->mutex);
        query = advance_query(id, *entry);
        std::unique_lock lock(sessions_mutex_);
        sessions_[id] = entry;
      }
      return Reply{201, Json{{"id", id}, {"session", describe(id, *entry)}, {"query", query}}};
    } catch (const Json::exception& e) {
      return error_reply(400, "invalid_argument", e.what());
    } catch (const UnknownStrategy& e) {
      return error_reply(400, "unknown_strategy", e.what());
    } catch (const InvalidArgument& e) {
      return error_reply(400, "invalid_argument", e.what());
    } catch (const BudgetExceeded& e) {
      return error_reply(400, "budget_exceeded", e.what());
    } catch (const std::exception& e) {
      return error_reply(500, "internal", e.what());
    }
  }

  Reply get_session(const std::string& id) {
    auto entry = find_session(id);
    if (!entry) return not_found(id);
    std::lock_guard lock(entry->mutex);
    return Reply{200, describe(id, *entry)};
  }

  Reply get_query(const std::string& id) {
    auto entry = find_session(id);
    if (!entry) return not_found(id);
    std::lock_guard lock(entry->mutex);
    if (!entry->session->has_query()) advance_query(id, *entry);
    return Reply{200, query_json(*entry)};
  }

  Reply post_response(const std::string& id, const Json& body) {
    auto entry = find_session(id);
    if (!entry) return not_found(id);
    try {
      if (!body.is_object() || !body.contains("turn") || !body.contains("chosen"))
        return error_reply(400, "invalid_argument", "body must be {turn: int, chosen: int}");
      const auto turn = body.at("turn").get<long long>();
      const auto chosen = body.at("chosen").get<long long>();
      std::lock_guard lock(entry->mutex);
      ElicitationSession& s = *entry->session;
      if (turn != static_cast<long long>(s.turn()))
        return error_reply(409, "stale_turn",
                           "turn " + std::to_string(turn) + " is not the current turn " + std::to_string(s.turn()));
      if (!s.has_query()) advance_query(id, *entry);
      if (chosen < 0 || chosen >= static_cast<long long>(s.query().vectors.rows()))
        return error_reply(400, "invalid_argument", "chosen must be in [0, k)");
      const Index answered = s.turn();
      const TurnRecord& rec = s.answer(static_cast<Index>(chosen));
      append_event(id, Json{{"type", "response"}, {"turn", answered}, {"chosen", chosen}});
      entry->updated = now_string();
      Json answered_json{{"turn", answered}, {"chosen", chosen}, {"evoi", rec.evoi}};
      Json next = advance_query(id, *entry);
      return Reply{200, Json{{"answered", answered_json},
                             {"query", next},
                             {"recommendations", recommendations_json(s, options_.default_recommendations)},
                             {"diagnostics", diagnostics_json(*entry)}}};
    } catch (const Json::exception& e) {
      return error_reply(400, "invalid_argument", e.what());
    } catch (const DegeneratePosterior& e) {
      return error_reply(422, "degenerate_posterior", e.what());
    }
  }

  Reply get_recommendations(const std::string& id, std::optional<long long> n) {
    auto entry = find_session(id);
    if (!entry) return not_found(id);
    const long long count = n.value_or(static_cast<long long>(options_.default_recommendations));
    if (count < 1) return error_reply(400, "invalid_argument", "n must be >= 1");
    std::lock_guard lock(entry->mutex);
    return Reply{200, Json{{"turn", entry->session->turn()},
                           {"items", recommendations_json(*entry->session, static_cast<Index>(count))}}};
  }

  Reply get_diagnostics(const std::string& id) {
    auto entry = find_session(id);
    if (!entry) return not_found(id);
    std::lock_guard lock(entry->mutex);
    return Reply{200, diagnostics_json(*entry)};
  }

  std::size_t session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
  }

  // Registers the REST routes; `static_dir` (if it exists) is served at "/".
  void mount(httplib::Server& server, const std::string& static_dir = "") {
    auto send = [](httplib::Response& res, const Reply& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto parse_body = [](const httplib::Request& req) -> std::optional<Json> {
      try {
        return Json::parse(req.body.empty() ? std::string("{}") : req.body);
      } catch (const Json::parse_error&) {
        return std::nullopt;
      }
    };
    const std::string sid = "/sessions/([A-Za-z0-9_-]+)";

    server.Post("/catalogs", [this, send, parse_body](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.has_param("id") ? req.get_param_value("id") : std::string();
      if (req.has_file("file")) {
        std::string name = req.has_file("id") ? req.get_file_value("id").content : id;
        send(res, add_catalog_csv(req.get_file_value("file").content, name));
      } else if (req.get_header_value("Content-Type").rfind("application/json", 0) == 0) {
        auto body = parse_body(req);
        if (!body) return send(res, error_reply(400, "parse_error", "body is not valid JSON"));
        send(res, add_catalog_json(*body));
      } else {
        send(res, add_catalog_csv(req.body, id));
      }
    });
    server.Get("/catalogs", [this, send](const httplib::Request&, httplib::Response& res) { send(res, list_catalogs()); });
    server.Post("/sessions", [this, send, parse_body](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req);
      if (!body) return send(res, error_reply(400, "parse_error", "body is not valid JSON"));
      send(res, create_session(*body));
    });
    server.Get(sid, [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, get_session(req.matches[1]));
    });
    server.Get(sid + "/query", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, get_query(req.matches[1]));
    });
    server.Post(sid + "/response", [this, send, parse_body](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req);
      if (!body) return send(res, error_reply(400, "parse_error", "body is not valid JSON"));
      send(res, post_response(req.matches[1], *body));
    });
    server.Get(sid + "/recommendations", [this, send](const httplib::Request& req, httplib::Response& res) {
      std::optional<long long> n;
      if (req.has_param("n")) {
        try {
          n = std::stoll(req.get_param_value("n"));
        } catch (const std::exception&) {
          return send(res, error_reply(400, "invalid_argument", "n must be an integer"));
        }
      }
      send(res, get_recommendations(req.matches[1], n));
    });
    server.Get(sid + "/diagnostics", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, get_diagnostics(req.matches[1]));
    });
    if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) server.set_mount_point("/", static_dir);
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty())
        res.set_content(Json{{"code", res.status == 404 ? "not_found" : "http_error"},
                             {"message", "HTTP " + std::to_string(res.status)}}.dump(),
                        "application/json");
    });
  }

 private:
  struct UnknownStrategy : InvalidArgument {
    using InvalidArgument::InvalidArgument;
  };

  struct Entry {
    std::mutex mutex;
    std::unique_ptr<ElicitationSession> session;
    std::string catalog_id;
    Json request;
    bool demo = false;
    double budget_ms = 0.0;
    Index fallbacks = 0;
    std::string created;
    std::string updated;
  };

  std::filesystem::path catalog_dir() const { return std::filesystem::path(options_.data_dir) / "catalogs"; }
  std::filesystem::path session_dir() const { return std::filesystem::path(options_.data_dir) / "sessions"; }

  static bool valid_id(const std::string& id) {
    if (id.empty() || id.size() > 64) return false;
    return std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; });
  }

  static std::string random_token() {
    std::random_device rd;
    std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
  }

  static std::string now_string() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  static Reply not_found(const std::string& id) { return error_reply(404, "not_found", "no session '" + id + "'"); }

  static Json catalog_json(const std::string& id, const Catalog& c) {
    return Json{{"id", id}, {"n_items", c.size()}, {"dim", c.dim()}, {"partial_mode", c.in_unit_cube()}};
  }

  std::shared_ptr<const Catalog> find_catalog(const std::string& id) const {
    std::shared_lock lock(catalogs_mutex_);
    auto it = catalogs_.find(id);
    return it == catalogs_.end() ? nullptr : it->second;
  }

  std::shared_ptr<Entry> find_session(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  void load_catalogs() {
    for (const auto& f : std::filesystem::directory_iterator(catalog_dir())) {
      if (f.path().extension() != ".evoicat") continue;
      catalogs_[f.path().stem().string()] = std::make_shared<const Catalog>(load_catalog_binary(f.path().string()));
    }
  }

  std::shared_ptr<Entry> build_session(const Json& req, std::shared_ptr<const Catalog> catalog) {
    StrategySpec base;
    double tau_eval = 0.1;
    if (req.contains("preset")) {
      const Preset& p = find_preset(req.at("preset").get<std::string>());
      base.continuous.learning_rate = p.learning_rate;
      base.continuous.tau_opt = p.tau_opt;
      tau_eval = p.tau_eval;
    }
    const Json strategy = req.value("strategy", Json("rand_user_top_item"));
    const std::string name = strategy.is_string() ? strategy.get<std::string>() : strategy.value("name", std::string());
    if (name != "continuous" && !parse_strategy_kind(name)) throw UnknownStrategy("unknown strategy '" + name + "'");
    SessionOptions o;
    o.strategy = parse_strategy(strategy, base);
    if (req.contains("k")) o.strategy.set_slate_size(req.at("k").get<Index>());
    if (req.contains("p")) o.strategy.attrs_per_item = req.at("p").get<Index>();
    o.particles = req.value("m", Index{100});
    o.tau_eval = req.value("tau_eval", tau_eval);
    o.seed = req.at("seed").get<std::uint64_t>();
    const std::string mode = req.value("mode", std::string("live"));
    if (mode != "live" && mode != "demo") throw InvalidArgument("mode must be 'live' or 'demo'");
    o.simulated_user = mode == "demo";
    if (req.contains("true_user")) o.true_user = parse_true_user(req.at("true_user").get<std::string>());
    o.resample = req.value("resample", false);
    if (o.strategy.slate_size() > catalog->size() && !is_partial(o.strategy.kind))
      throw InvalidArgument("k = " + std::to_string(o.strategy.slate_size()) + " exceeds the catalog size " +
                            std::to_string(catalog->size()));

    auto entry = std::make_shared<Entry>();
    Prior prior(PriorSpec{PriorKind::standard_normal, catalog->dim(), ""});
    entry->session = std::make_unique<ElicitationSession>(catalog, prior, std::move(o));
    entry->catalog_id = req.at("catalog").get<std::string>();
    entry->request = req;
    entry->demo = mode == "demo";
    entry->budget_ms = req.value("budget_ms", options_.default_budget_ms);
    entry->created = req.value("created", now_string());
    entry->updated = entry->created;
    return entry;
  }

  // Computes (or returns) the current query; logs newly computed slates.
  Json advance_query(const std::string& id, Entry& entry) {
    ElicitationSession& s = *entry.session;
    if (!s.has_query()) {
      const Deadline deadline = entry.budget_ms > 0 ? Deadline::after(std::chrono::milliseconds(static_cast<long>(entry.budget_ms))) : Deadline::none();
      const Selection& q = s.prepare_query(deadline, true);
      if (q.fallback) ++entry.fallbacks;
      Json ev{{"type", "query"}, {"turn", s.turn()}, {"fallback", q.fallback}};
      if (q.items) ev["items"] = *q.items;
      else ev["attributes"] = q.attributes;
      append_event(id, ev);
    }
    return query_json(entry);
  }

  Json query_json(const Entry& entry) const {
    const ElicitationSession& s = *entry.session;
    const Selection& q = s.query();
    const Catalog& c = s.catalog();
    Json items = Json::array();
    for (Eigen::Index i = 0; i < q.vectors.rows(); ++i) {
      Json item{{"position", i}};
      if (q.items) {
        const Index idx = (*q.items)[static_cast<std::size_t>(i)];
        item["index"] = idx;
        item["id"] = c.id(idx);
        item["name"] = c.name(idx);
      } else {
        Json names = Json::array();
        for (Index a : q.attributes[static_cast<std::size_t>(i)]) names.push_back(c.attribute_name(a));
        item["attributes"] = names;
      }
      items.push_back(item);
    }
    Json out{{"turn", s.turn()}, {"items", items}, {"evoi", q.evoi}, {"fallback", q.fallback}};
    if (s.true_user()) out["demo_choice"] = s.simulated_response();
    return out;
  }

  static Json recommendations_json(const ElicitationSession& s, Index n) {
    Json out = Json::array();
    for (const auto& r : s.recommendations(n))
      out.push_back(Json{{"index", r.index}, {"id", s.catalog().id(r.index)}, {"name", s.catalog().name(r.index)}, {"score", r.score}});
    return out;
  }

  Json diagnostics_json(const Entry& entry) const {
    const ElicitationSession& s = *entry.session;
    Json evoi = Json::array(), ess = Json::array(), regret = Json::array();
    for (const auto& h : s.history()) {
      evoi.push_back(h.evoi);
      ess.push_back(h.ess);
      if (h.regret) regret.push_back(*h.regret);
    }
    Json out{{"turn", s.turn()},
             {"ess", effective_sample_size(s.belief())},
             {"particles", s.belief().size()},
             {"evoi", evoi},
             {"ess_series", ess},
             {"fallbacks", entry.fallbacks}};
    if (entry.demo) {
      out["initial_regret"] = *s.initial_regret();
      out["regret"] = regret;
      out["current_regret"] = *s.current_regret();
    }
    return out;
  }

  Json describe(const std::string& id, const Entry& entry) const {
    const ElicitationSession& s = *entry.session;
    Json history = Json::array();
    for (const auto& h : s.history()) {
      Json row{{"turn", h.turn}, {"response", h.response}, {"evoi", h.evoi}, {"fallback", h.fallback}};
      if (!h.items.empty()) {
        Json ids = Json::array();
        for (Index i : h.items) ids.push_back(s.catalog().id(i));
        row["items"] = ids;
      } else {
        row["attributes"] = h.attributes;
      }
      if (h.regret) row["regret"] = *h.regret;
      history.push_back(row);
    }
    Json out{{"id", id},
             {"catalog", entry.catalog_id},
             {"strategy", strategy_to_json(s.options().strategy)},
             {"mode", entry.demo ? "demo" : "live"},
             {"m", s.options().particles},
             {"tau_eval", s.options().tau_eval},
             {"seed", s.options().seed},
             {"turn", s.turn()},
             {"created", entry.created},
             {"updated", entry.updated},
             {"history", history}};
    if (is_partial(s.options().strategy.kind)) {
      Json names = Json::array();
      for (Index a = 0; a < s.catalog().dim(); ++a) names.push_back(s.catalog().attribute_name(a));
      out["attribute_names"] = names;
    }
    return out;
  }

  void append_event(const std::string& id, const Json& event) {
    std::lock_guard lock(log_mutex_);
    std::ofstream out(session_dir() / (id + ".jsonl"), std::ios::app | std::ios::binary);
    out << event.dump() << '\n';
    out.flush();
    if (!out) throw Error("cannot append to the event log of session " + id);
  }

  void replay_sessions() {
    std::vector<std::filesystem::path> logs;
    for (const auto& f : std::filesystem::directory_iterator(session_dir()))
      if (f.path().extension() == ".jsonl") logs.push_back(f.path());
    std::sort(logs.begin(), logs.end());
    for (const auto& path : logs) {
      const std::string id = path.stem().string();
      std::ifstream in(path);
      std::string line;
      std::shared_ptr<Entry> entry;
      try {
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          Json ev = Json::parse(line);
          const std::string type = ev.at("type").get<std::string>();
          if (type == "create") {
            Json req = ev.at("request");
            req["created"] = ev.value("created", std::string());
            auto catalog = find_catalog(req.at("catalog").get<std::string>());
            if (!catalog) throw Error("catalog missing");
            entry = build_session(req, catalog);
          } else if (!entry) {
            throw Error("event before create");
          } else if (type == "query") {
            ElicitationSession& s = *entry->session;
            if (ev.at("turn").get<Index>() != s.turn()) throw Error("query event out of order");
            Selection sel = ev.contains("items") ? s.selection_for_items(ev.at("items").get<std::vector<Index>>())
                                                 : s.selection_for_attributes(ev.at("attributes").get<std::vector<std::vector<Index>>>());
            sel.fallback = ev.value("fallback", false);
            if (sel.fallback) ++entry->fallbacks;
            s.set_query(std::move(sel));
          } else if (type == "response") {
            ElicitationSession& s = *entry->session;
            if (ev.at("turn").get<Index>() != s.turn() || !s.has_query()) throw Error("response event out of order");
            s.answer(ev.at("chosen").get<Index>());
          }
        }
      } catch (const std::exception& e) {
        std::fprintf(stderr, "skipping session %s: %s\n", id.c_str(), e.what());
        continue;
      }
      if (entry) sessions_[id] = entry;
    }
  }

  ServiceOptions options_;
  mutable std::shared_mutex catalogs_mutex_;
  std::map<std::string, std::shared_ptr<const Catalog>> catalogs_;
  std::size_t catalog_counter_ = 0;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex log_mutex_;
};

}  // namespace evoi
