#include "zorank/service/session.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

namespace zorank::service {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kLogVersion = 1;
constexpr const char* kRankInstruction =
    "Please rank the following images from best to worst. Rank as many as you like (at least one).";
constexpr const char* kSelectInstruction = "Please input the ID of the best image.";

ServiceError invalid(const std::string& field, const std::string& why) {
  return ServiceError(ErrorKind::Invalid, field + ": " + why, field);
}

/// Rethrows std::invalid_argument("field: why") as a field-level ServiceError.
[[noreturn]] void rethrow_invalid(const std::invalid_argument& e, const std::string& prefix) {
  const std::string msg = e.what();
  const auto colon = msg.find(':');
  const std::string field = colon == std::string::npos ? "" : prefix + msg.substr(0, colon);
  throw ServiceError(ErrorKind::Invalid, prefix + msg, field);
}

Vector parse_vector(const json& j, const std::string& field) {
  if (!j.is_array()) throw invalid(field, "expected an array of numbers");
  Vector v;
  v.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number()) throw invalid(field, "expected an array of numbers");
    v.push_back(e.get<double>());
    if (!std::isfinite(v.back())) throw invalid(field, "values must be finite");
  }
  return v;
}

json config_json(const InteractiveConfig& c) {
  return {{"eta", c.eta}, {"mu", c.mu}, {"gamma", c.gamma}, {"m", c.m}, {"k", c.k}};
}

}  // namespace

json SessionSetup::to_json() const {
  json j = {{"config", config_json(config)},
            {"renderer", service::to_json(renderer)},
            {"x0", x0},
            {"seed", seed}};
  if (ground_truth_center) j["ground_truth"] = {{"center", *ground_truth_center}};
  return j;
}

SessionSetup SessionSetup::from_json(const json& j) {
  SessionSetup s;
  const json& c = j.at("config");
  s.config.eta = c.at("eta").get<double>();
  s.config.mu = c.at("mu").get<double>();
  s.config.gamma = c.at("gamma").get<double>();
  s.config.m = c.at("m").get<std::size_t>();
  s.config.k = c.at("k").get<std::size_t>();
  json renderer = j.at("renderer");
  renderer.erase("dim");
  s.renderer = parse_renderer(renderer);
  s.x0 = j.at("x0").get<Vector>();
  s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("ground_truth")) s.ground_truth_center = j.at("ground_truth").at("center").get<Vector>();
  return s;
}

SessionSetup parse_create_request(const json& body, std::uint64_t fresh_seed) {
  if (!body.is_object()) throw invalid("body", "expected a JSON object");
  static const std::set<std::string> keys = {"config", "renderer", "x0", "seed", "dim", "ground_truth"};
  for (const auto& [key, value] : body.items()) {
    if (!keys.count(key)) throw invalid(key, "unknown field");
  }
  SessionSetup s;
  s.config.k = 0;  // defaults to m below
  if (body.contains("config")) {
    const json& c = body.at("config");
    if (!c.is_object()) throw invalid("config", "expected an object");
    static const std::set<std::string> config_keys = {"eta", "mu", "gamma", "m", "k"};
    for (const auto& [key, value] : c.items()) {
      if (!config_keys.count(key)) throw invalid("config." + key, "unknown field");
      if (!value.is_number()) throw invalid("config." + key, "expected a number");
    }
    auto positive_int = [&](const char* key) {
      const json& v = c.at(key);
      if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw invalid(std::string("config.") + key, "expected a non-negative integer");
      }
      return v.get<std::size_t>();
    };
    if (c.contains("eta")) s.config.eta = c.at("eta").get<double>();
    if (c.contains("mu")) s.config.mu = c.at("mu").get<double>();
    if (c.contains("gamma")) s.config.gamma = c.at("gamma").get<double>();
    if (c.contains("m")) s.config.m = positive_int("m");
    if (c.contains("k")) s.config.k = positive_int("k");
  }
  if (s.config.k == 0 && !(body.contains("config") && body.at("config").contains("k"))) {
    s.config.k = s.config.m;
  }
  try {
    s.config.validate();
  } catch (const std::invalid_argument& e) {
    rethrow_invalid(e, "config.");
  }

  try {
    s.renderer = parse_renderer(body.value("renderer", json{{"id", "color-swatch"}}));
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    const auto colon = msg.find(':');
    throw ServiceError(ErrorKind::Invalid, msg, colon == std::string::npos ? "renderer" : msg.substr(0, colon));
  }
  const std::size_t dim = s.renderer.dim();

  if (body.contains("seed")) {
    const json& seed = body.at("seed");
    if (!seed.is_number_unsigned()) throw invalid("seed", "expected a non-negative integer");
    s.seed = seed.get<std::uint64_t>();
  } else {
    s.seed = fresh_seed;
  }
  if (body.contains("dim")) {
    const json& d = body.at("dim");
    if (!d.is_number_unsigned()) throw invalid("dim", "expected a positive integer");
    if (d.get<std::size_t>() != dim) {
      throw invalid("dim", "renderer " + s.renderer.name() + " takes " + std::to_string(dim) +
                               " parameters, got " + std::to_string(d.get<std::size_t>()));
    }
  }
  if (body.contains("x0")) {
    s.x0 = parse_vector(body.at("x0"), "x0");
    if (s.x0.size() != dim) {
      throw invalid("x0", "renderer " + s.renderer.name() + " takes " + std::to_string(dim) +
                              " parameters, got " + std::to_string(s.x0.size()));
    }
  } else {
    Rng draw = Rng(s.seed).split(0);
    s.x0 = draw.normal_vector(dim);
  }
  if (body.contains("ground_truth")) {
    const json& gt = body.at("ground_truth");
    if (!gt.is_object() || !gt.contains("center")) {
      throw invalid("ground_truth", "expected {\"center\": [...]}");
    }
    s.ground_truth_center = parse_vector(gt.at("center"), "ground_truth.center");
    if (s.ground_truth_center->size() != dim) {
      throw invalid("ground_truth.center", "expected " + std::to_string(dim) + " values");
    }
  }
  return s;
}

const char* to_string(BatchPhase phase) { return phase == BatchPhase::Rank ? "rank" : "select"; }

EventLog::EventLog(const fs::path& path, bool create) : path_(path) {
  file_ = std::fopen(path.c_str(), create ? "wx" : "a");
  if (file_ == nullptr) throw std::runtime_error("cannot open event log " + path.string());
}

EventLog::~EventLog() {
  if (file_ != nullptr) std::fclose(file_);
}

void EventLog::append(const std::string& line) {
  const std::string record = line + "\n";
  if (std::fwrite(record.data(), 1, record.size(), file_) != record.size() || std::fflush(file_) != 0 ||
      ::fsync(::fileno(file_)) != 0) {
    throw std::runtime_error("cannot append to event log " + path_.string());
  }
}

Session::Session(IdSource ids, Clock clock, std::optional<std::chrono::milliseconds> ttl)
    : ids_(std::move(ids)), clock_(std::move(clock)), ttl_(ttl) {}

std::unique_ptr<Session> Session::create(const fs::path& data_dir, std::string session_id,
                                         const SessionSetup& setup, IdSource ids, Clock clock,
                                         std::optional<std::chrono::milliseconds> ttl) {
  std::unique_ptr<Session> s(new Session(std::move(ids), std::move(clock), ttl));
  std::lock_guard lock(s->mu_);
  s->log_ = std::make_unique<EventLog>(data_dir / (session_id + ".jsonl"), true);
  json created = setup.to_json();
  created["type"] = "created";
  created["version"] = kLogVersion;
  created["session_id"] = session_id;
  s->commit(std::move(created));
  s->issue_batch();
  return s;
}

std::unique_ptr<Session> Session::replay(const fs::path& log_path, IdSource ids, Clock clock,
                                         std::optional<std::chrono::milliseconds> ttl) {
  std::unique_ptr<Session> s(new Session(std::move(ids), std::move(clock), ttl));
  std::lock_guard lock(s->mu_);
  std::ifstream in(log_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + log_path.string());
  std::string line;
  std::uintmax_t good_bytes = 0;
  bool torn = false;
  while (std::getline(in, line)) {
    const bool complete = !in.eof();
    json event;
    try {
      event = json::parse(line);
    } catch (const json::parse_error&) {
      if (in.peek() == std::char_traits<char>::eof()) {
        torn = true;
        break;
      }
      throw std::runtime_error(log_path.string() + ": corrupt event after byte " +
                               std::to_string(good_bytes));
    }
    if (!complete) {
      torn = true;
      break;
    }
    s->apply(event);
    s->events_.push_back(std::move(event));
    good_bytes += line.size() + 1;
  }
  if (s->events_.empty()) throw std::runtime_error(log_path.string() + ": empty event log");
  in.close();
  if (torn) fs::resize_file(log_path, good_bytes);
  s->log_ = std::make_unique<EventLog>(log_path, false);
  return s;
}

void Session::commit(json event) {
  event["seq"] = events_.size();
  if (!event.contains("at")) event["at"] = clock_();
  log_->append(event.dump());
  apply(event);
  events_.push_back(std::move(event));
}

void Session::apply(const json& event) {
  const std::string type = event.at("type").get<std::string>();
  if (type == "created") {
    apply_created(event);
  } else if (type == "batch_issued") {
    apply_batch_issued(event);
  } else if (type == "ranking_submitted") {
    apply_ranking_submitted(event);
  } else if (type == "selection_submitted") {
    apply_selection_submitted(event);
  } else if (type == "batch_expired") {
    apply_batch_closed();
  } else if (type == "terminated") {
    apply_batch_closed();
    terminated_ = true;
  } else {
    throw std::runtime_error("unknown event type '" + type + "'");
  }
}

void Session::apply_created(const json& event) {
  if (event.at("version").get<int>() != kLogVersion) {
    throw std::runtime_error("unsupported event log version");
  }
  id_ = event.at("session_id").get<std::string>();
  created_at_ms_ = event.at("at").get<std::int64_t>();
  setup_ = SessionSetup::from_json(event);
  setup_.config.validate();
  state_ = InteractiveState::initial(setup_.x0);
  rng_ = Rng(setup_.seed).split(1);
}

void Session::apply_batch_issued(const json& event) {
  Batch batch;
  batch.batch_id = event.at("batch_id").get<std::string>();
  batch.phase = event.at("phase").get<std::string>() == "rank" ? BatchPhase::Rank : BatchPhase::Select;
  batch.candidate_ids = event.at("candidate_ids").get<std::vector<std::string>>();
  batch.issued_at_ms = event.at("at").get<std::int64_t>();
  const bool rank = state_.phase == InteractivePhase::GradientEstimation;
  if (rank != (batch.phase == BatchPhase::Rank)) {
    throw std::runtime_error("batch phase does not match the session phase");
  }
  if (rank) {
    rank_batch_ = interactive_ranking_batch(state_, setup_.config, rng_);
    batch.points = rank_batch_->candidates();
    batch.k_max = setup_.config.k;
  } else {
    batch.points = interactive_selection_candidates(state_, setup_.config);
    batch.k_max = 1;
  }
  if (batch.candidate_ids.size() != batch.points.size()) {
    throw std::runtime_error("batch candidate count does not match the session config");
  }
  OracleRequest request;
  request.points = batch.points;
  request.k = batch.k_max;
  request.request_id = batch.batch_id;
  answer_ = mailbox_.post(std::move(request));
  pending_ = std::move(batch);

  if (awaiting_next_) {
    awaiting_next_->response["batch"] = batch_json(*pending_);
    awaiting_next_->response["phase"] = to_string(pending_->phase);
    answered_.push_back(std::move(*awaiting_next_));
    awaiting_next_.reset();
    while (answered_.size() > kRememberedResponses) answered_.pop_front();
  }
}

void Session::apply_ranking_submitted(const json& event) {
  const std::string batch_id = event.at("batch_id").get<std::string>();
  if (!pending_ || pending_->batch_id != batch_id || pending_->phase != BatchPhase::Rank) {
    throw std::runtime_error("ranking for a batch that is not pending");
  }
  const auto ids = event.at("ranking").get<std::vector<std::string>>();
  std::vector<std::int64_t> order;
  for (const auto& id : ids) order.push_back(static_cast<std::int64_t>(position_of(*pending_, id)) + 1);
  const SubmitResult submitted = mailbox_.submit(batch_id, order);
  if (!submitted.ok()) throw std::runtime_error("logged ranking rejected: " + submitted.message);
  const RankingOutcome outcome = *answer_->try_get();
  state_ = apply_ranking(state_, *rank_batch_, outcome);
  counters_.rank_rounds += 1;
  counters_.queries += static_cast<std::int64_t>(pending_->points.size());
  awaiting_next_ = Answered{batch_id,
                            json{{"ranking", ids}},
                            json{{"status", "accepted"},
                                 {"batch_id", batch_id},
                                 {"k", ids.size()},
                                 {"message", "ranking recorded; select the best candidate"}}};
  pending_.reset();
  answer_.reset();
  rank_batch_.reset();
}

void Session::apply_selection_submitted(const json& event) {
  const std::string batch_id = event.at("batch_id").get<std::string>();
  if (!pending_ || pending_->batch_id != batch_id || pending_->phase != BatchPhase::Select) {
    throw std::runtime_error("selection for a batch that is not pending");
  }
  const std::string best = event.at("best").get<std::string>();
  const std::size_t winner = position_of(*pending_, best);
  const std::vector<std::int64_t> order = {static_cast<std::int64_t>(winner) + 1};
  const SubmitResult submitted = mailbox_.submit(batch_id, order);
  if (!submitted.ok()) throw std::runtime_error("logged selection rejected: " + submitted.message);

  const InteractiveState before = state_;
  state_ = apply_selection(state_, setup_.config, answer_->try_get()->best());
  counters_.select_rounds += 1;
  counters_.queries += static_cast<std::int64_t>(pending_->points.size());
  const bool moved = winner != 0;
  std::string message = "no move; refining gradient";
  if (moved) {
    counters_.moves += 1;
    IterationRecord rec;
    rec.t = counters_.moves;
    rec.point_before = before.best_point;
    rec.point_after = state_.best_point;
    rec.gradient_norm = norm(before.gradient_memory);
    rec.queries = counters_.queries - queries_at_last_move_;
    rec.cumulative_queries = counters_.queries;
    rec.eta = setup_.config.eta;
    rec.mu = setup_.config.mu;
    if (winner >= 2) rec.accepted_exponent = static_cast<int>(winner - 2);
    rec.f_value = ground_truth(state_.best_point);
    moves_.push_back(std::move(rec));
    queries_at_last_move_ = counters_.queries;
    message = winner == 1 ? "moved to the best ranked candidate"
                          : "moved along the gradient estimate (step " + std::to_string(winner - 2) + ")";
  }
  awaiting_next_ = Answered{batch_id, json{{"best", best}},
                            json{{"status", "accepted"},
                                 {"batch_id", batch_id},
                                 {"moved", moved},
                                 {"message", message}}};
  pending_.reset();
  answer_.reset();
}

void Session::apply_batch_closed() {
  if (pending_) mailbox_.withdraw(pending_->batch_id);
  pending_.reset();
  answer_.reset();
  rank_batch_.reset();
}

void Session::issue_batch() {
  const bool rank = state_.phase == InteractivePhase::GradientEstimation;
  const std::size_t count = rank ? setup_.config.m : setup_.config.m + 1;
  std::vector<std::string> ids;
  std::set<std::string> seen;
  while (ids.size() < count) {
    std::string id = ids_(4);
    if (seen.insert(id).second) ids.push_back(std::move(id));
  }
  commit(json{{"type", "batch_issued"},
              {"batch_id", ids_(8)},
              {"phase", rank ? "rank" : "select"},
              {"candidate_ids", ids}});
}

void Session::expire_if_due() {
  if (!ttl_ || !pending_ || terminated_) return;
  if (clock_() - pending_->issued_at_ms <= ttl_->count()) return;
  commit(json{{"type", "batch_expired"}, {"batch_id", pending_->batch_id}});
  issue_batch();
}

std::size_t Session::position_of(const Batch& batch, const std::string& candidate_id) const {
  const auto it = std::find(batch.candidate_ids.begin(), batch.candidate_ids.end(), candidate_id);
  if (it == batch.candidate_ids.end()) {
    throw ServiceError(ErrorKind::Invalid, "unknown candidate id '" + candidate_id + "'", "candidate_id");
  }
  return static_cast<std::size_t>(it - batch.candidate_ids.begin());
}

std::optional<double> Session::ground_truth(const Vector& x) const {
  if (!setup_.ground_truth_center) return std::nullopt;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - (*setup_.ground_truth_center)[i];
    s += d * d;
  }
  return s;
}

json Session::batch_json(const Batch& batch) const {
  json candidates = json::array();
  for (std::size_t i = 0; i < batch.points.size(); ++i) {
    candidates.push_back({{"candidate_id", batch.candidate_ids[i]},
                          {"x", batch.points[i]},
                          {"payload", render(setup_.renderer, batch.points[i]).to_json()}});
  }
  return {{"batch_id", batch.batch_id},
          {"phase", to_string(batch.phase)},
          {"instruction", batch.phase == BatchPhase::Rank ? kRankInstruction : kSelectInstruction},
          {"k_max", batch.k_max},
          {"issued_at", batch.issued_at_ms},
          {"candidates", candidates}};
}

std::optional<json> Session::replay_response(const std::string& batch_id, const json& answer) const {
  for (const Answered& a : answered_) {
    if (a.batch_id != batch_id) continue;
    if (a.answer != answer) {
      throw ServiceError(ErrorKind::Conflict,
                         "batch " + batch_id + " was already answered differently", "batch_id");
    }
    json response = a.response;
    response["replayed"] = true;
    return response;
  }
  return std::nullopt;
}

json Session::submit_ranking(const std::string& batch_id, const std::vector<std::string>& ranking) {
  std::lock_guard lock(mu_);
  if (auto replayed = replay_response(batch_id, json{{"ranking", ranking}})) return *replayed;
  if (terminated_) throw ServiceError(ErrorKind::Conflict, "session is terminated");
  expire_if_due();
  if (!pending_ || pending_->batch_id != batch_id) {
    throw ServiceError(ErrorKind::Conflict, "batch " + batch_id + " is not the pending batch", "batch_id");
  }
  if (pending_->phase != BatchPhase::Rank) {
    throw ServiceError(ErrorKind::Conflict, "the pending batch expects a selection", "batch_id");
  }
  if (ranking.empty()) throw invalid("ranking", "rank at least one candidate");
  std::vector<std::int64_t> order;
  for (const auto& id : ranking) order.push_back(static_cast<std::int64_t>(position_of(*pending_, id)) + 1);
  if (order.size() > pending_->k_max) {
    throw invalid("ranking", "at most " + std::to_string(pending_->k_max) + " candidates may be ranked");
  }
  try {
    (void)RankingOutcome::from_one_based(pending_->points.size(), order);
  } catch (const std::invalid_argument& e) {
    throw invalid("ranking", std::string(e.what()) + " (repeated candidate id?)");
  }
  commit(json{{"type", "ranking_submitted"}, {"batch_id", batch_id}, {"ranking", ranking}});
  issue_batch();
  return answered_.back().response;
}

json Session::submit_selection(const std::string& batch_id, const std::string& best) {
  std::lock_guard lock(mu_);
  if (auto replayed = replay_response(batch_id, json{{"best", best}})) return *replayed;
  if (terminated_) throw ServiceError(ErrorKind::Conflict, "session is terminated");
  expire_if_due();
  if (!pending_ || pending_->batch_id != batch_id) {
    throw ServiceError(ErrorKind::Conflict, "batch " + batch_id + " is not the pending batch", "batch_id");
  }
  if (pending_->phase != BatchPhase::Select) {
    throw ServiceError(ErrorKind::Conflict, "the pending batch expects a ranking", "batch_id");
  }
  (void)position_of(*pending_, best);
  commit(json{{"type", "selection_submitted"}, {"batch_id", batch_id}, {"best", best}});
  issue_batch();
  return answered_.back().response;
}

json Session::terminate() {
  std::lock_guard lock(mu_);
  if (terminated_) return {{"terminated", true}, {"already_terminated", true}};
  commit(json{{"type", "terminated"}});
  return {{"terminated", true}, {"already_terminated", false}};
}

json Session::status() {
  std::lock_guard lock(mu_);
  expire_if_due();
  json counters = {{"rank_rounds", counters_.rank_rounds},
                   {"select_rounds", counters_.select_rounds},
                   {"moves", counters_.moves},
                   {"tau", state_.tau},
                   {"queries", counters_.queries}};
  json j = {{"session_id", id_},
            {"created_at", created_at_ms_},
            {"terminated", terminated_},
            {"phase", to_string(state_.phase)},
            {"counters", counters},
            {"config", config_json(setup_.config)},
            {"renderer", service::to_json(setup_.renderer)},
            {"seed", setup_.seed},
            {"best_point", state_.best_point},
            {"best_render", render(setup_.renderer, state_.best_point).to_json()},
            {"state_image", base64_encode(serialize_state(state_))},
            {"pending_batch_id", pending_ ? json(pending_->batch_id) : json(nullptr)}};
  if (auto f = ground_truth(state_.best_point)) j["ground_truth_f"] = *f;
  return j;
}

json Session::current_batch() {
  std::lock_guard lock(mu_);
  if (terminated_) throw ServiceError(ErrorKind::Conflict, "session is terminated");
  expire_if_due();
  return batch_json(*pending_);
}

json Session::history() const {
  std::lock_guard lock(mu_);
  return {{"session_id", id_}, {"events", events_}};
}

std::string Session::trajectory() const {
  std::lock_guard lock(mu_);
  std::string out = trajectory_header_line() + "\n";
  for (const IterationRecord& rec : moves_) out += trajectory_record_line(rec) + "\n";
  return out;
}

InteractiveState Session::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

SessionCounters Session::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

bool Session::terminated() const {
  std::lock_guard lock(mu_);
  return terminated_;
}

std::vector<IterationRecord> Session::moves() const {
  std::lock_guard lock(mu_);
  return moves_;
}

SessionManager::SessionManager(ManagerOptions options) : options_(std::move(options)) {
  if (!options_.clock) options_.clock = system_clock_ms();
  if (!options_.ids) options_.ids = random_hex_ids();
  fs::create_directories(options_.data_dir);
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(options_.data_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const fs::path& path : logs) {
    try {
      auto session = Session::replay(path, options_.ids, options_.clock, options_.batch_ttl);
      const std::string id = session->id();
      sessions_.emplace(id, std::move(session));
    } catch (const std::exception& e) {
      load_errors_.push_back(path.filename().string() + ": " + e.what());
    }
  }
}

json SessionManager::create(const json& body) {
  const std::string seed_hex = options_.ids(8);
  const SessionSetup setup = parse_create_request(body, std::stoull(seed_hex, nullptr, 16));
  std::shared_ptr<Session> session;
  for (int attempt = 0;; ++attempt) {
    const std::string id = options_.ids(16);
    try {
      session = Session::create(options_.data_dir, id, setup, options_.ids, options_.clock,
                                options_.batch_ttl);
      break;
    } catch (const std::runtime_error&) {
      // An existing log with this id; draw another.
      if (attempt >= 3) throw;
    }
  }
  json batch = session->current_batch();
  {
    std::unique_lock lock(mu_);
    sessions_.emplace(session->id(), session);
  }
  return {{"session_id", session->id()}, {"batch", std::move(batch)}};
}

std::shared_ptr<Session> SessionManager::find(const std::string& session_id) const {
  std::shared_lock lock(mu_);
  const auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<Session> SessionManager::get(const std::string& session_id) const {
  auto s = find(session_id);
  if (!s) throw ServiceError(ErrorKind::NotFound, "unknown session '" + session_id + "'");
  return s;
}

std::vector<std::string> SessionManager::session_ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

IdSource random_hex_ids() {
  auto engine = std::make_shared<std::mt19937_64>(std::random_device{}());
  auto mu = std::make_shared<std::mutex>();
  return [engine, mu](std::size_t bytes) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    std::lock_guard lock(*mu);
    for (std::size_t i = 0; i < bytes; ++i) {
      const auto b = static_cast<unsigned>((*engine)() & 0xFF);
      out += kHex[b >> 4];
      out += kHex[b & 15];
    }
    return out;
  };
}

Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

}  // namespace zorank::service
