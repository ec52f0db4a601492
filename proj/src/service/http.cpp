#include "zorank/service/http.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace zorank::service {

using nlohmann::json;

ServerConfig load_server_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
  ServerConfig config;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw std::runtime_error("cannot open server config " + file->string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw std::invalid_argument(file->string() + ": " + e.what());
    }
    for (const auto& [key, value] : j.items()) {
      if (key == "bind_address") {
        config.bind_address = value.get<std::string>();
      } else if (key == "port") {
        config.port = value.get<int>();
      } else if (key == "data_dir") {
        config.data_dir = value.get<std::string>();
      } else if (key == "log_level") {
        config.log_level = value.get<std::string>();
      } else if (key == "static_dir") {
        if (!value.is_null()) config.static_dir = value.get<std::string>();
      } else if (key == "batch_ttl_seconds") {
        if (!value.is_null()) config.batch_ttl = std::chrono::seconds(value.get<std::int64_t>());
      } else {
        throw std::invalid_argument(file->string() + ": unknown key '" + key + "'");
      }
    }
  }
  if (auto v = env("ZORANK_BIND_ADDRESS")) config.bind_address = *v;
  if (auto v = env("ZORANK_PORT")) config.port = std::stoi(*v);
  if (auto v = env("ZORANK_DATA_DIR")) config.data_dir = *v;
  if (auto v = env("ZORANK_LOG_LEVEL")) config.log_level = *v;
  if (config.port < 0 || config.port > 65535) throw std::invalid_argument("port: out of range");
  if (config.batch_ttl && config.batch_ttl->count() <= 0) {
    throw std::invalid_argument("batch_ttl_seconds: must be positive");
  }
  return config;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
  };
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const std::string& field = {}) {
  json body = {{"error", message}};
  if (!field.empty()) body["field"] = field;
  send_json(res, status, body);
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ServiceError(ErrorKind::Invalid, std::string("request body is not valid JSON: ") + e.what(), "body");
  }
}

std::string string_field(const json& body, const char* name) {
  if (!body.is_object() || !body.contains(name) || !body.at(name).is_string()) {
    throw ServiceError(ErrorKind::Invalid, std::string(name) + ": expected a string", name);
  }
  return body.at(name).get<std::string>();
}

/// Wraps a handler with the error-to-status mapping.
template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const ServiceError& e) {
      const int status = e.kind() == ErrorKind::NotFound ? 404 : e.kind() == ErrorKind::Invalid ? 400 : 409;
      send_error(res, status, e.what(), e.field());
    } catch (const std::invalid_argument& e) {
      send_error(res, 400, e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

void install_routes(httplib::Server& server, SessionManager& manager, const ServerConfig& config) {
  const std::string id = "/sessions/([0-9a-f]+)";

  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"ok", true}});
  });

  server.Post("/sessions", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
    const json created = manager.create(parse_body(req));
    spdlog::info("created session {}", created.at("session_id").get<std::string>());
    send_json(res, 201, created);
  }));

  server.Get("/sessions", guarded([&manager](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"sessions", manager.session_ids()}});
  }));

  server.Get(id, guarded([&manager](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, manager.get(req.matches[1])->status());
  }));

  server.Get(id + "/batch", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, manager.get(req.matches[1])->current_batch());
  }));

  server.Post(id + "/ranking", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
    auto session = manager.get(req.matches[1]);
    const json body = parse_body(req);
    const std::string batch_id = string_field(body, "batch_id");
    if (!body.contains("ranking") || !body.at("ranking").is_array()) {
      throw ServiceError(ErrorKind::Invalid, "ranking: expected an array of candidate ids", "ranking");
    }
    std::vector<std::string> ranking;
    for (const auto& v : body.at("ranking")) {
      if (!v.is_string()) {
        throw ServiceError(ErrorKind::Invalid, "ranking: candidate ids are strings", "ranking");
      }
      ranking.push_back(v.get<std::string>());
    }
    send_json(res, 200, session->submit_ranking(batch_id, ranking));
  }));

  server.Post(id + "/selection", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
    auto session = manager.get(req.matches[1]);
    const json body = parse_body(req);
    const std::string batch_id = string_field(body, "batch_id");
    send_json(res, 200, session->submit_selection(batch_id, string_field(body, "best")));
  }));

  server.Get(id + "/history", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, manager.get(req.matches[1])->history());
  }));

  server.Get(id + "/trajectory", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
    res.set_content(manager.get(req.matches[1])->trajectory(), "application/x-ndjson");
  }));

  server.Post(id + "/terminate", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
    const std::string session_id = req.matches[1];
    send_json(res, 200, manager.get(session_id)->terminate());
    spdlog::info("terminated session {}", session_id);
  }));

  if (config.static_dir) {
    if (!server.set_mount_point("/ui", config.static_dir->string())) {
      throw std::runtime_error("static_dir " + config.static_dir->string() + " is not a directory");
    }
  }

  server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });
}

}  // namespace zorank::service
