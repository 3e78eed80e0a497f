#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "samplepilot/agent.hpp"
#include "samplepilot/intent.hpp"
#include "samplepilot/query.hpp"
#include "samplepilot/sampling.hpp"

namespace samplepilot {

// Immutable data one dataset serves from; shared by all its sessions.
struct ServiceDataset {
  std::string name;
  std::shared_ptr<const Table> table;
  std::shared_ptr<const SampleCatalog> catalog;
  std::shared_ptr<const BtmModel> model;
  std::optional<Checkpoint> checkpoint;
};

// Dataset from a pipeline output directory; the checkpoint is optional.
ServiceDataset load_service_dataset(const std::filesystem::path& out);

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

// Live sessions over HTTP-shaped requests. Safe for concurrent use; calls on
// one session are serialized by that session's mutex.
class SessionService {
 public:
  SessionService(std::vector<ServiceDataset> datasets, std::string config_hash, EngineOptions engine = {});
  ~SessionService();

  // `target` is the request path, optionally with a query string.
  ServiceResponse handle(const std::string& method, const std::string& target, const std::string& body);

  ServiceResponse create_session(const nlohmann::json& request);
  ServiceResponse submit_query(const std::string& session_id, const nlohmann::json& query);
  ServiceResponse session_report(const std::string& session_id);
  ServiceResponse catalog(const std::string& dataset);
  ServiceResponse datasets();

 private:
  struct Live;
  struct Served;

  ServiceResponse error(int status, const std::string& code, const std::string& message,
                        const Served* ds = nullptr) const;
  void stamp(nlohmann::json& body, const Served* ds) const;
  const Served* find_dataset(const std::string& name) const;
  std::shared_ptr<Live> find_session(const std::string& id) const;

  std::vector<std::unique_ptr<Served>> datasets_;
  std::string config_hash_;
  EngineOptions engine_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Live>> sessions_;
  std::atomic<std::uint64_t> next_id_{1};
};

// host:port from SAMPLEPILOT_BIND, default 127.0.0.1:8080.
std::pair<std::string, int> bind_address_from_env();

// HTTP/1.1 front end on a background thread.
class HttpFrontend {
 public:
  explicit HttpFrontend(SessionService& service);
  ~HttpFrontend();
  // Port 0 picks a free port; returns the bound port.
  int start(const std::string& host, int port);
  void stop();
  // Serves on the calling thread until stop() or failure; false if binding failed.
  bool listen(const std::string& host, int port);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace samplepilot
