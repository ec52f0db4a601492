#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zorank/optimizer.hpp"
#include "zorank/service/render.hpp"

namespace zorank::service {

enum class ErrorKind { NotFound, Invalid, Conflict };

/// Error reported to a client. `field` names the offending request field
/// when there is one.
class ServiceError : public std::runtime_error {
public:
  ServiceError(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}
  ErrorKind kind() const { return kind_; }
  const std::string& field() const { return field_; }

private:
  ErrorKind kind_;
  std::string field_;
};

/// Everything fixed at creation. Parsed from the create-session body:
/// {"config": {"eta", "mu", "gamma", "m", "k"}, "renderer": {...},
///  "x0": [...], "seed": n, "dim": d, "ground_truth": {"center": [...]}}
/// x0 defaults to a seeded standard-normal draw (stream 0 of the seed);
/// batches draw from stream 1.
struct SessionSetup {
  InteractiveConfig config;
  RendererSpec renderer;
  Vector x0;
  std::uint64_t seed = 0;
  /// Test mode: the session reports f(x*) = ||x* - center||^2.
  std::optional<Vector> ground_truth_center;

  nlohmann::json to_json() const;
  static SessionSetup from_json(const nlohmann::json& j);
};

/// Parses a create request; `fresh_seed` supplies the seed when none is given.
SessionSetup parse_create_request(const nlohmann::json& body, std::uint64_t fresh_seed);

enum class BatchPhase { Rank, Select };

const char* to_string(BatchPhase phase);

struct Batch {
  std::string batch_id;
  BatchPhase phase = BatchPhase::Rank;
  std::vector<std::string> candidate_ids;
  std::vector<Vector> points;
  /// Largest number of ids a rank answer may contain (1 for select).
  std::size_t k_max = 1;
  std::int64_t issued_at_ms = 0;
};

struct SessionCounters {
  std::int64_t rank_rounds = 0;
  std::int64_t select_rounds = 0;
  std::int64_t moves = 0;
  std::int64_t queries = 0;
};

/// Append-only JSON-lines file; every append is flushed and synced before
/// it returns.
class EventLog {
public:
  EventLog(const std::filesystem::path& path, bool create);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(const std::string& line);
  const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
};

using IdSource = std::function<std::string(std::size_t bytes)>;
using Clock = std::function<std::int64_t()>;  // milliseconds since the epoch

/// One interactive session. All state is derived from its event log: live
/// operations validate, append an event, then apply it through the same
/// code path that replay uses.
class Session {
public:
  /// Creates the log file and issues the first ranking batch.
  static std::unique_ptr<Session> create(const std::filesystem::path& data_dir,
                                         std::string session_id, const SessionSetup& setup,
                                         IdSource ids, Clock clock,
                                         std::optional<std::chrono::milliseconds> ttl);

  /// Rebuilds a session from its log. A torn final line is dropped.
  static std::unique_ptr<Session> replay(const std::filesystem::path& log_path, IdSource ids,
                                         Clock clock,
                                         std::optional<std::chrono::milliseconds> ttl);

  const std::string& id() const { return id_; }

  nlohmann::json status();
  nlohmann::json current_batch();
  nlohmann::json history() const;
  std::string trajectory() const;

  /// `ranking` holds candidate ids, best first.
  nlohmann::json submit_ranking(const std::string& batch_id, const std::vector<std::string>& ranking);
  nlohmann::json submit_selection(const std::string& batch_id, const std::string& best);
  nlohmann::json terminate();

  InteractiveState state() const;
  SessionCounters counters() const;
  bool terminated() const;
  /// Records of accepted moves, as in the trajectory export.
  std::vector<IterationRecord> moves() const;

private:
  Session(IdSource ids, Clock clock, std::optional<std::chrono::milliseconds> ttl);

  void commit(nlohmann::json event);
  void apply(const nlohmann::json& event);
  void apply_created(const nlohmann::json& event);
  void apply_batch_issued(const nlohmann::json& event);
  void apply_ranking_submitted(const nlohmann::json& event);
  void apply_selection_submitted(const nlohmann::json& event);
  void apply_batch_closed();

  void issue_batch();
  void expire_if_due();
  nlohmann::json batch_json(const Batch& batch) const;
  std::optional<nlohmann::json> replay_response(const std::string& batch_id,
                                                const nlohmann::json& answer) const;
  std::size_t position_of(const Batch& batch, const std::string& candidate_id) const;
  std::optional<double> ground_truth(const Vector& x) const;

  IdSource ids_;
  Clock clock_;
  std::optional<std::chrono::milliseconds> ttl_;

  mutable std::mutex mu_;
  std::unique_ptr<EventLog> log_;
  std::vector<nlohmann::json> events_;

  std::string id_;
  std::int64_t created_at_ms_ = 0;
  SessionSetup setup_;
  InteractiveState state_;
  Rng rng_;
  Mailbox mailbox_;
  std::optional<PendingAnswer> answer_;
  std::optional<Batch> pending_;
  std::optional<PerturbationBatch> rank_batch_;
  bool terminated_ = false;
  SessionCounters counters_;
  std::int64_t queries_at_last_move_ = 0;
  std::vector<IterationRecord> moves_;

  struct Answered {
    std::string batch_id;
    nlohmann::json answer;
    nlohmann::json response;
  };
  /// Resolved batch waiting for the next batch before its response is final.
  std::optional<Answered> awaiting_next_;
  /// Responses of the most recently answered batches, for duplicate submissions.
  std::deque<Answered> answered_;
};

inline constexpr std::size_t kRememberedResponses = 16;

struct ManagerOptions {
  std::filesystem::path data_dir;
  std::optional<std::chrono::milliseconds> batch_ttl;
  Clock clock;     // defaults to the system clock
  IdSource ids;    // defaults to random hex from std::random_device
};

/// Owns every session and routes requests to them. Sessions are
/// independent; each serializes its own writes.
class SessionManager {
public:
  explicit SessionManager(ManagerOptions options);

  /// Returns {"session_id", "batch"}.
  nlohmann::json create(const nlohmann::json& body);
  std::shared_ptr<Session> find(const std::string& session_id) const;
  /// Throws ServiceError(NotFound).
  std::shared_ptr<Session> get(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;
  /// Logs that could not be replayed at startup, with the reason.
  const std::vector<std::string>& load_errors() const { return load_errors_; }

private:
  ManagerOptions options_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<std::string> load_errors_;
};

/// Random lowercase hex of the given byte length.
IdSource random_hex_ids();
Clock system_clock_ms();

}  // namespace zorank::service
