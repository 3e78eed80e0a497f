#include "samplepilot/service.hpp"

#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "samplepilot/error.hpp"
#include "samplepilot/eval.hpp"
#include "samplepilot/pipeline.hpp"

namespace samplepilot {

ServiceDataset load_service_dataset(const std::filesystem::path& out) {
  const ArtifactPaths paths{out};
  ServiceDataset ds;
  auto table = std::make_shared<Table>(load_ingested_table(out));
  ds.name = table->name();
  ds.catalog = std::make_shared<SampleCatalog>(load_catalog(paths.samples(), *table));
  ds.model = std::make_shared<BtmModel>(load_btm(paths.btm()));
  if (std::filesystem::exists(paths.checkpoint())) ds.checkpoint = load_checkpoint(paths.checkpoint());
  ds.table = std::move(table);
  return ds;
}

struct SessionService::Served {
  ServiceDataset data;
  std::string checkpoint_id;
  SourceChooser agent;  // empty without a checkpoint
};

struct SessionService::Live {
  std::mutex mutex;
  std::string id;
  const Served* dataset = nullptr;
  std::string policy;
  SourceChooser chooser;
  SessionState state;
  std::optional<SessionState> mirror;
  nlohmann::json steps = nlohmann::json::array();
  nlohmann::json intent_trace = nlohmann::json::array();

  Live(const Table& table, const EngineOptions& engine) : state(table, engine) {}
};

SessionService::SessionService(std::vector<ServiceDataset> datasets, std::string config_hash, EngineOptions engine)
    : config_hash_(std::move(config_hash)), engine_(engine) {
  for (auto& d : datasets) {
    auto s = std::make_unique<Served>();
    s->data = std::move(d);
    if (s->data.checkpoint) {
      s->checkpoint_id = s->data.checkpoint->id();
      s->agent = agent_chooser(*s->data.checkpoint, *s->data.catalog, *s->data.model);
    }
    datasets_.push_back(std::move(s));
  }
}

SessionService::~SessionService() = default;

void SessionService::stamp(nlohmann::json& body, const Served* ds) const {
  if (!ds && !datasets_.empty()) ds = datasets_.front().get();
  body["config_hash"] = config_hash_;
  body["checkpoint_id"] = ds && !ds->checkpoint_id.empty() ? nlohmann::json(ds->checkpoint_id) : nlohmann::json();
}

ServiceResponse SessionService::error(int status, const std::string& code, const std::string& message,
                                      const Served* ds) const {
  nlohmann::json body = {{"error", code}, {"message", message}};
  stamp(body, ds);
  return {status, std::move(body)};
}

const SessionService::Served* SessionService::find_dataset(const std::string& name) const {
  if (name.empty()) return datasets_.empty() ? nullptr : datasets_.front().get();
  for (const auto& d : datasets_)
    if (d->data.name == name) return d.get();
  return nullptr;
}

std::shared_ptr<SessionService::Live> SessionService::find_session(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ServiceResponse SessionService::create_session(const nlohmann::json& request) {
  if (!request.is_object()) return error(422, "InvalidArgument", "request body must be a JSON object");
  std::string dataset, policy;
  bool mirror = false;
  try {
    dataset = request.value("dataset", std::string());
    policy = request.value("policy", std::string("agent"));
    mirror = request.value("mirror", false);
  } catch (const nlohmann::json::exception& e) {
    return error(422, "InvalidArgument", e.what());
  }
  const Served* ds = find_dataset(dataset);
  if (!ds) return error(404, "UnknownDataset", "no dataset named '" + dataset + "'");

  SourceChooser chooser;
  if (policy == "agent") {
    if (!ds->agent) return error(404, "UnknownPolicy", "no agent checkpoint loaded for '" + ds->data.name + "'", ds);
    chooser = ds->agent;
  } else {
    try {
      chooser = baseline_chooser(parse_baseline(policy), *ds->data.catalog);
    } catch (const Error& e) {
      return error(404, "UnknownPolicy", e.what(), ds);
    }
  }

  char id[24];
  std::snprintf(id, sizeof id, "s%06llu", static_cast<unsigned long long>(next_id_++));
  auto live = std::make_shared<Live>(*ds->data.table, engine_);
  live->id = id;
  live->dataset = ds;
  live->policy = policy;
  live->chooser = std::move(chooser);
  if (mirror) live->mirror.emplace(*ds->data.table, engine_);
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[live->id] = live;
  }
  nlohmann::json body = {{"session_id", live->id}, {"dataset", ds->data.name}, {"policy", policy}, {"mirror", mirror}};
  stamp(body, ds);
  return {200, std::move(body)};
}

namespace {

// Order of what the analyst sees first: bar keys for grouped displays,
// shown rows for filtered views.
std::vector<std::string> rank_order(const DisplayResult& d) {
  if (d.kind == DisplayKind::FilteredView) return d.top_rows;
  std::vector<std::string> keys;
  for (const auto& b : d.groups) keys.push_back(b.key);
  return keys;
}

}  // namespace

ServiceResponse SessionService::submit_query(const std::string& session_id, const nlohmann::json& query_json) {
  const auto live = find_session(session_id);
  if (!live) return error(404, "UnknownSession", "no session '" + session_id + "'");
  const Served* ds = live->dataset;
  const Table& table = *ds->data.table;

  Query q;
  try {
    q = query_from_json(query_json);
    validate_query(table, q);
  } catch (const Error& e) {
    return error(422, std::string(to_string(e.code())), e.what(), ds);
  } catch (const nlohmann::json::exception& e) {
    return error(422, "InvalidArgument", e.what(), ds);
  }

  std::lock_guard lock(live->mutex);
  if (q.op == OpType::Back && live->state.depth() <= 1)
    return error(409, "EmptyStack", "Back at the root frame", ds);

  nlohmann::json step;
  try {
    const std::size_t index = live->state.history().size();
    const SampleHandle* source = live->chooser(live->state, q, index);
    const StepRecord& rec = live->state.execute(q, source);
    const Session so_far{0, -1, live->state.history()};
    const auto intent = infer(*ds->data.model, tokenize(table, live->state.history()));
    step = {{"step", index},
            {"query", query_to_json(q)},
            {"sample_id", rec.sample_id},
            {"effective_sr", source ? source->effective_sr : 1.0},
            {"cost_ratio", rec.cost_ratio},
            {"latency_saved", session_latency_reduction(so_far)},
            {"intent", intent.probs},
            {"display", display_to_json(rec.display)}};
    if (live->mirror) {
      const StepRecord& full = live->mirror->execute(q, nullptr);
      step["mirror_display"] = display_to_json(full.display);
      step["divergent"] = rank_order(full.display) != rank_order(rec.display);
    }
    live->intent_trace.push_back(intent.probs);
  } catch (const Error& e) {
    const int status = e.code() == ErrorCode::EmptyStack ? 409 : 422;
    return error(status, std::string(to_string(e.code())), e.what(), ds);
  }
  live->steps.push_back(step);
  nlohmann::json body = step;
  body["session_id"] = live->id;
  stamp(body, ds);
  return {200, std::move(body)};
}

ServiceResponse SessionService::session_report(const std::string& session_id) {
  const auto live = find_session(session_id);
  if (!live) return error(404, "UnknownSession", "no session '" + session_id + "'");
  std::lock_guard lock(live->mutex);
  const Session so_far{0, -1, live->state.history()};
  nlohmann::json body = {{"session_id", live->id},
                         {"dataset", live->dataset->data.name},
                         {"policy", live->policy},
                         {"mirror", live->mirror.has_value()},
                         {"steps", live->steps},
                         {"latency_reduction", session_latency_reduction(so_far)},
                         {"intent_trace", live->intent_trace}};
  stamp(body, live->dataset);
  return {200, std::move(body)};
}

ServiceResponse SessionService::catalog(const std::string& dataset) {
  const Served* ds = find_dataset(dataset);
  if (!ds) return error(404, "UnknownDataset", "no dataset named '" + dataset + "'");
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& h : ds->data.catalog->handles)
    samples.push_back({{"sample_id", h.sample_id},
                       {"family", strategy_family(h.strategy)},
                       {"rows", h.row_indices.size()},
                       {"effective_sr", h.effective_sr},
                       {"strat_columns", h.strat_columns_used}});
  nlohmann::json body = {{"dataset", ds->data.name}, {"samples", std::move(samples)}};
  stamp(body, ds);
  return {200, std::move(body)};
}

ServiceResponse SessionService::datasets() {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& d : datasets_) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : d->data.table->columns()) cols.push_back({{"name", c.name}, {"type", to_string(c.type)}});
    list.push_back({{"name", d->data.name},
                    {"rows", d->data.table->row_count()},
                    {"columns", std::move(cols)},
                    {"samples", d->data.catalog->size()},
                    {"agent", !d->checkpoint_id.empty()}});
  }
  nlohmann::json body = {{"datasets", std::move(list)}};
  stamp(body, nullptr);
  return {200, std::move(body)};
}

ServiceResponse SessionService::handle(const std::string& method, const std::string& target, const std::string& body) {
  std::string path = target, query_string;
  if (const auto q = target.find('?'); q != std::string::npos) {
    path = target.substr(0, q);
    query_string = target.substr(q + 1);
  }
  auto parse_body = [&](nlohmann::json& out) {
    try {
      out = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
      return true;
    } catch (const nlohmann::json::exception&) {
      return false;
    }
  };
  auto param = [&](const std::string& key) {
    std::string value;
    std::size_t pos = 0;
    while (pos <= query_string.size()) {
      const auto end = std::min(query_string.find('&', pos), query_string.size());
      const auto part = query_string.substr(pos, end - pos);
      if (part.rfind(key + "=", 0) == 0) value = httplib::detail::decode_url(part.substr(key.size() + 1), true);
      pos = end + 1;
    }
    return value;
  };

  const std::string prefix = "/sessions/";
  if (method == "POST" && path == "/sessions") {
    nlohmann::json j;
    if (!parse_body(j)) return error(422, "InvalidArgument", "request body is not JSON");
    return create_session(j);
  }
  if (path.rfind(prefix, 0) == 0) {
    const auto rest = path.substr(prefix.size());
    const auto slash = rest.find('/');
    if (slash != std::string::npos) {
      const auto id = rest.substr(0, slash);
      const auto action = rest.substr(slash + 1);
      if (method == "POST" && action == "query") {
        nlohmann::json j;
        if (!parse_body(j)) return error(422, "InvalidArgument", "request body is not JSON");
        return submit_query(id, j);
      }
      if (method == "GET" && action == "report") return session_report(id);
    }
  }
  if (method == "GET" && path == "/catalog") return catalog(param("dataset"));
  if (method == "GET" && path == "/datasets") return datasets();
  return error(404, "NotFound", method + " " + path + " is not an endpoint");
}

std::pair<std::string, int> bind_address_from_env() {
  std::string value = "127.0.0.1:8080";
  if (const char* env = std::getenv("SAMPLEPILOT_BIND"); env && *env) value = env;
  const auto colon = value.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidConfig, "SAMPLEPILOT_BIND must be host:port");
  int port = 0;
  try {
    port = std::stoi(value.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "SAMPLEPILOT_BIND has a bad port");
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidConfig, "SAMPLEPILOT_BIND has a bad port");
  return {value.substr(0, colon), port};
}

struct HttpFrontend::Impl {
  SessionService* service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(SessionService& s) : service(&s) {
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      std::string target = req.path;
      if (!req.params.empty()) {
        target += '?';
        bool first = true;
        for (const auto& [k, v] : req.params) {
          if (!first) target += '&';
          target += k + "=" + httplib::detail::encode_query_param(v);
          first = false;
        }
      }
      const auto r = service->handle(req.method, target, req.body);
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/sessions", route);
    server.Post(R"(/sessions/[^/]+/query)", route);
    server.Get(R"(/sessions/[^/]+/report)", route);
    server.Get("/catalog", route);
    server.Get("/datasets", route);
  }
};

HttpFrontend::HttpFrontend(SessionService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::start(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool HttpFrontend::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void HttpFrontend::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace samplepilot
