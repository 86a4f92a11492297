#pragma once

// Local HTTP/JSON session around one area collection: neighbourhood editing
// with undo, island audit, SVG rendering and background model fits.

#include "arelink/augment.hpp"
#include "arelink/fit.hpp"
#include "arelink/formula.hpp"
#include "arelink/geojson.hpp"
#include "arelink/nb.hpp"
#include "arelink/nb_io.hpp"
#include "arelink/render.hpp"

#include <httplib.h>

#include <atomic>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace arelink {

/// One recorded mutation of the session's structure.
struct SessionOp {
  enum class Kind { join, cut, bridges } kind = Kind::join;
  UnitRef a, b;
  int k = 1;
  bool remove_islands = false;
};

inline json op_json(const SessionOp& op) {
  json o = json::object();
  auto ref = [](const UnitRef& r) { return std::holds_alternative<int>(r) ? json(std::get<int>(r)) : json(std::get<std::string>(r)); };
  switch (op.kind) {
    case SessionOp::Kind::join:
    case SessionOp::Kind::cut:
      o["op"] = op.kind == SessionOp::Kind::join ? "join" : "cut";
      o["a"] = ref(op.a);
      o["b"] = ref(op.b);
      break;
    case SessionOp::Kind::bridges:
      o["op"] = "bridges";
      o["k"] = op.k;
      o["remove_islands"] = op.remove_islands;
      break;
  }
  return o;
}

struct SessionState {
  AreaCollection areas;
  NbStructure nb;
};

enum class FitStatus { idle, running, done, failed };

inline std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::idle: return "idle";
    case FitStatus::running: return "running";
    case FitStatus::done: return "done";
    case FitStatus::failed: return "failed";
  }
  return "idle";
}

/// Thrown for requests the session cannot honour in its current state; maps
/// to HTTP 503.
class BusyError : public Error {
 public:
  explicit BusyError(const std::string& what) : Error("busy", what) {}
};

class Session {
 public:
  /// Starts from `nb` when given, otherwise from st_bridges with k = 1.
  Session(AreaCollection input, std::string name_field, std::optional<NbStructure> nb = std::nullopt)
      : input_(detail::rekey(input, name_field)), name_field_(std::move(name_field)) {
    if (nb) {
      if (nb->names() != input_.names())
        throw InputError("neighbourhood structure names do not match the collection's '" + name_field_ +
                         "' values");
      initial_ = {input_, *nb};
      refresh_nb_column(initial_);
    } else {
      auto b = st_bridges(input_, name_field_);
      initial_ = {std::move(b.areas), std::move(b.nb)};
    }
    state_ = initial_;
  }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  ~Session() {
    if (worker_.joinable()) worker_.join();
  }

  SessionState snapshot() const {
    std::lock_guard lock(mu_);
    return state_;
  }

  NbStructure nb() const {
    std::lock_guard lock(mu_);
    return state_.nb;
  }

  std::vector<SessionOp> history() const {
    std::lock_guard lock(mu_);
    return history_;
  }

  /// Applies one mutation and returns the new structure. On error the state
  /// is left untouched.
  NbStructure apply(const SessionOp& op) {
    std::lock_guard lock(mu_);
    SessionState next = step(state_, op);
    undo_.push_back(std::move(state_));
    history_.push_back(op);
    state_ = std::move(next);
    return state_.nb;
  }

  NbStructure undo() {
    std::lock_guard lock(mu_);
    if (history_.empty()) throw NbError("nothing to undo");
    state_ = std::move(undo_.back());
    undo_.pop_back();
    history_.pop_back();
    return state_.nb;
  }

  /// Re-applies the recorded history to the initial state.
  SessionState replay() const {
    std::vector<SessionOp> ops;
    {
      std::lock_guard lock(mu_);
      ops = history_;
    }
    SessionState s = initial_;
    for (const auto& op : ops) s = step(s, op);
    return s;
  }

  /// Starts a fit on the current state in a background worker.
  void start_fit(const ModelSpec& spec) {
    std::lock_guard fl(fit_mu_);
    if (fit_status_ == FitStatus::running) throw BusyError("a fit is already running");
    if (worker_.joinable()) worker_.join();
    SessionState s = snapshot();
    fit_status_ = FitStatus::running;
    fit_error_.reset();
    worker_ = std::thread([this, spec, s = std::move(s)] {
      try {
        FitResult fit = fit_model(spec, s.areas, &s.nb);
        AugmentedCollection aug = st_augment(fit, s.areas);
        json summary = fit_to_json(fit);
        std::lock_guard fl2(fit_mu_);
        fit_summary_ = std::move(summary);
        aug_ = std::move(aug);
        fit_status_ = FitStatus::done;
      } catch (const std::exception& e) {
        std::lock_guard fl2(fit_mu_);
        fit_error_ = e.what();
        fit_status_ = FitStatus::failed;
      }
    });
  }

  /// Blocks until the worker (if any) has finished.
  void wait_fit() {
    std::thread t;
    {
      std::lock_guard fl(fit_mu_);
      t = std::move(worker_);
    }
    if (t.joinable()) t.join();
  }

  json fit_status() const {
    std::lock_guard fl(fit_mu_);
    json o = json::object();
    o["status"] = to_string(fit_status_);
    if (fit_status_ == FitStatus::failed) o["error"] = *fit_error_;
    if (fit_summary_) {
      o["summary"] = *fit_summary_;
      o["columns"] = aug_->prediction_columns();
    }
    return o;
  }

  std::optional<AugmentedCollection> augmented() const {
    std::lock_guard fl(fit_mu_);
    return aug_;
  }

  const std::string& name_field() const { return name_field_; }

 private:
  static void refresh_nb_column(SessionState& s) {
    for (std::size_t i = 0; i < s.areas.size(); ++i) s.areas[i].attrs["nb"] = detail::nb_column(s.nb, i, NbView::list);
  }

  SessionState step(const SessionState& s, const SessionOp& op) const {
    SessionState next;
    switch (op.kind) {
      case SessionOp::Kind::join:
        next = {s.areas, manual_join(s.nb, op.a, op.b)};
        break;
      case SessionOp::Kind::cut:
        next = {s.areas, manual_cut(s.nb, op.a, op.b)};
        break;
      case SessionOp::Kind::bridges: {
        BridgeOptions bo;
        bo.link_islands_k = op.k;
        bo.remove_islands = op.remove_islands;
        auto b = st_bridges(input_, name_field_, bo);
        return {std::move(b.areas), std::move(b.nb)};
      }
    }
    refresh_nb_column(next);
    return next;
  }

  const AreaCollection input_;
  const std::string name_field_;
  SessionState initial_;

  mutable std::mutex mu_;
  SessionState state_;
  std::vector<SessionOp> history_;
  std::vector<SessionState> undo_;

  mutable std::mutex fit_mu_;
  FitStatus fit_status_ = FitStatus::idle;
  std::optional<json> fit_summary_;
  std::optional<AugmentedCollection> aug_;
  std::optional<std::string> fit_error_;
  std::thread worker_;
};

struct ServerOptions {
  std::string save_path = "nb.json";
};

namespace detail {

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, std::string kind, const std::string& what)
      : std::runtime_error(what), status_(status), kind_(std::move(kind)) {}
  int status() const { return status_; }
  const std::string& kind() const { return kind_; }

 private:
  int status_;
  std::string kind_;
};

inline void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  json e = json::object();
  e["error"] = json::object();
  e["error"]["kind"] = kind;
  e["error"]["message"] = message;
  send_json(res, e, status);
}

inline json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json b = json::parse(req.body);
    if (!b.is_object()) throw HttpError(400, "input", "request body must be a JSON object");
    return b;
  } catch (const json::parse_error& e) {
    throw HttpError(400, "input", std::string("malformed JSON body: ") + e.what());
  }
}

inline UnitRef body_ref(const json& b, const char* key) {
  auto it = b.find(key);
  if (it == b.end()) throw HttpError(400, "input", std::string("missing field '") + key + "'");
  if (it->is_number_integer()) return it->get<int>();
  if (it->is_string()) return it->get<std::string>();
  throw HttpError(400, "input", std::string("field '") + key + "' must be a unit name or 1-based position");
}

template <typename T>
T body_value(const json& b, const char* key, T fallback) {
  auto it = b.find(key);
  if (it == b.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw HttpError(400, "input", std::string("field '") + key + "' has the wrong type");
  }
}

/// Runs a handler, mapping failures onto status codes: malformed requests
/// 400, semantic errors 409, busy 503.
template <typename F>
httplib::Server::Handler guarded(F f, int semantic_status = 409) {
  return [f, semantic_status](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const HttpError& e) {
      send_error(res, e.status(), e.kind(), e.what());
    } catch (const BusyError& e) {
      send_error(res, 503, e.kind(), e.what());
    } catch (const FormulaError& e) {
      json err = json::object();
      err["error"] = json::object();
      err["error"]["kind"] = "formula";
      err["error"]["message"] = e.what();
      err["error"]["offset"] = e.offset();
      send_json(res, err, 400);
    } catch (const Error& e) {
      send_error(res, semantic_status, e.kind(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

inline bool local_origin(const std::string& origin) {
  for (const char* prefix : {"http://localhost", "http://127.0.0.1", "http://[::1]"}) {
    const std::string p = prefix;
    if (origin.rfind(p, 0) == 0 && (origin.size() == p.size() || origin[p.size()] == ':')) return true;
  }
  return false;
}

inline NbMapOptions nb_map_options(const httplib::Request& req) {
  NbMapOptions o;
  if (req.has_param("nodes")) {
    const auto v = req.get_param_value("nodes");
    if (v == "numeric") o.nodes = NodeStyle::numeric;
    else if (v == "point") o.nodes = NodeStyle::point;
    else throw HttpError(400, "input", "nodes must be 'point' or 'numeric'");
  }
  if (req.has_param("hulls")) {
    const auto v = req.get_param_value("hulls");
    o.concavehull = v == "1" || v == "true";
  }
  return o;
}

inline PredMapOptions pred_map_options(const httplib::Request& req) {
  PredMapOptions o;
  if (req.has_param("low")) o.scale_low = req.get_param_value("low");
  if (req.has_param("mid")) o.scale_mid = req.get_param_value("mid");
  if (req.has_param("high")) o.scale_high = req.get_param_value("high");
  if (req.has_param("midpoint")) {
    try {
      o.scale_midpoint = std::stod(req.get_param_value("midpoint"));
    } catch (const std::exception&) {
      throw HttpError(400, "input", "midpoint must be a number");
    }
  }
  for (const auto* c : {&o.scale_low, &o.scale_mid, &o.scale_high}) {
    try {
      parse_colour(*c);
    } catch (const InputError& e) {
      throw HttpError(400, "input", e.what());
    }
  }
  return o;
}

}  // namespace detail

/// Registers every endpoint of the session API on `http`.
inline void register_routes(httplib::Server& http, Session& s, const ServerOptions& opt = {}) {
  using namespace detail;
  using Req = httplib::Request;
  using Res = httplib::Response;

  http.set_post_routing_handler([](const Req& req, Res& res) {
    const auto origin = req.get_header_value("Origin");
    if (local_origin(origin)) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Vary", "Origin");
    }
  });
  http.Options(".*", [](const Req& req, Res& res) {
    if (local_origin(req.get_header_value("Origin"))) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
    res.status = 204;
  });

  http.Get("/areas", guarded([&s](const Req&, Res& res) { send_json(res, to_geojson(s.snapshot().areas)); }));
  http.Get("/nb", guarded([&s](const Req&, Res& res) { send_json(res, nb_to_json(s.nb())); }));
  http.Get("/nb/audit", guarded([&s](const Req&, Res& res) { send_json(res, audit_json(check_islands(s.nb()))); }));
  http.Get("/history", guarded([&s](const Req&, Res& res) {
    json h = json::array();
    for (const auto& op : s.history()) h.push_back(op_json(op));
    send_json(res, h);
  }));

  http.Post("/bridges", guarded([&s](const Req& req, Res& res) {
    const json b = parse_body(req);
    SessionOp op;
    op.kind = SessionOp::Kind::bridges;
    op.k = body_value<int>(b, "k", 1);
    op.remove_islands = body_value<bool>(b, "remove_islands", false);
    send_json(res, nb_to_json(s.apply(op)));
  }));

  http.Post("/edit", guarded([&s](const Req& req, Res& res) {
    const json b = parse_body(req);
    const auto kind = body_value<std::string>(b, "op", "");
    SessionOp op;
    if (kind == "join") op.kind = SessionOp::Kind::join;
    else if (kind == "cut") op.kind = SessionOp::Kind::cut;
    else throw HttpError(400, "input", "op must be 'join' or 'cut'");
    op.a = body_ref(b, "a");
    op.b = body_ref(b, "b");
    send_json(res, nb_to_json(s.apply(op)));
  }));

  http.Post("/undo", guarded([&s](const Req&, Res& res) { send_json(res, nb_to_json(s.undo())); }));

  http.Post("/save", guarded([&s, opt](const Req& req, Res& res) {
    const json b = parse_body(req);
    const auto path = body_value<std::string>(b, "path", opt.save_path);
    const NbStructure nb = s.nb();
    write_file(path, nb_to_json(nb).dump(2) + "\n");
    json o = json::object();
    o["saved"] = path;
    o["nb"] = nb_to_json(nb);
    send_json(res, o);
  }, 500));

  http.Get("/render/nb.svg", guarded([&s](const Req& req, Res& res) {
    const auto opts = nb_map_options(req);
    const auto st = s.snapshot();
    res.set_content(render_nb_map(st.areas, st.nb, opts), "image/svg+xml");
  }));

  http.Get(R"(/render/preds/(.+)\.svg)", guarded([&s](const Req& req, Res& res) {
    const std::string column = req.matches[1];
    const auto opts = pred_map_options(req);
    const auto aug = s.augmented();
    const PredictionColumn* c = aug ? aug->find(column) : nullptr;
    if (!c) throw HttpError(404, "input", "no prediction column '" + column + "'");
    res.set_content(render_pred_map(aug->base, *c, opts), "image/svg+xml");
  }));

  http.Post("/fit", guarded([&s](const Req& req, Res& res) {
    const json b = parse_body(req);
    const auto formula = body_value<std::string>(b, "formula", "");
    if (formula.empty()) throw HttpError(400, "input", "missing field 'formula'");
    ModelSpec spec = parse_formula(formula);
    try {
      spec.family = parse_family(body_value<std::string>(b, "family", "gaussian"));
    } catch (const InputError& e) {
      throw HttpError(400, "input", e.what());
    }
    s.start_fit(spec);
    if (body_value<bool>(b, "wait", false)) {
      s.wait_fit();
      send_json(res, s.fit_status());
    } else {
      send_json(res, s.fit_status(), 202);
    }
  }));

  http.Get("/fit/status", guarded([&s](const Req&, Res& res) { send_json(res, s.fit_status()); }));
}

}  // namespace arelink
