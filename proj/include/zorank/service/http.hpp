#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "zorank/service/session.hpp"

namespace httplib {
class Server;
}

namespace zorank::service {

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "sessions";
  std::string log_level = "info";
  /// Directory of static UI assets served under /ui/, if any.
  std::optional<std::filesystem::path> static_dir;
  /// Pending batches older than this are replaced by fresh ones.
  std::optional<std::chrono::seconds> batch_ttl;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the JSON config file (if given), then applies the overrides
/// ZORANK_BIND_ADDRESS, ZORANK_PORT, ZORANK_DATA_DIR, ZORANK_LOG_LEVEL.
ServerConfig load_server_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env);
EnvLookup process_env();

/// Registers every endpoint on `server`:
///   POST /sessions                      create
///   GET  /sessions                      list ids
///   GET  /sessions/{id}                 status
///   GET  /sessions/{id}/batch           current batch
///   POST /sessions/{id}/ranking         {"batch_id", "ranking": [candidate ids]}
///   POST /sessions/{id}/selection       {"batch_id", "best": candidate id}
///   GET  /sessions/{id}/history         event log
///   GET  /sessions/{id}/trajectory      trajectory export (JSON lines)
///   POST /sessions/{id}/terminate       idempotent
///   GET  /healthz
/// Errors are {"error": message, "field": name?} with status 400, 404 or 409.
void install_routes(httplib::Server& server, SessionManager& manager, const ServerConfig& config);

}  // namespace zorank::service
