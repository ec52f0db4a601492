// zorank-server: HTTP service for interactive ranking sessions.
//
//   zorank-server --config tools/configs/server.json
//
// Environment overrides: ZORANK_BIND_ADDRESS, ZORANK_PORT, ZORANK_DATA_DIR,
// ZORANK_LOG_LEVEL.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "zorank/service/http.hpp"

namespace {
httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive ranking session service"};
  std::string config_path;
  app.add_option("--config", config_path, "Server config (JSON)")->check(CLI::ExistingFile);
  CLI11_PARSE(app, argc, argv);

  try {
    using namespace zorank::service;
    std::optional<std::filesystem::path> file;
    if (!config_path.empty()) file = config_path;
    const ServerConfig config = load_server_config(file, process_env());
    spdlog::set_level(spdlog::level::from_str(config.log_level));

    ManagerOptions options;
    options.data_dir = config.data_dir;
    if (config.batch_ttl) options.batch_ttl = std::chrono::duration_cast<std::chrono::milliseconds>(*config.batch_ttl);
    SessionManager manager(std::move(options));
    for (const auto& err : manager.load_errors()) spdlog::error("skipped session log {}", err);
    spdlog::info("replayed {} session(s) from {}", manager.session_ids().size(), config.data_dir.string());

    httplib::Server server;
    install_routes(server, manager, config);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    spdlog::info("listening on {}:{}", config.bind_address, config.port);
    if (!server.listen(config.bind_address, config.port)) {
      spdlog::error("cannot listen on {}:{}", config.bind_address, config.port);
      return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
