#include "zorank/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace zorank {

void OracleRequest::validate() const {
  if (points.size() < 2) throw std::invalid_argument("OracleRequest: need m >= 2 points");
  if (k < 1 || k > points.size()) {
    throw std::invalid_argument("OracleRequest: need 1 <= k <= m, got k=" + std::to_string(k) +
                                " m=" + std::to_string(points.size()));
  }
  for (const Vector& p : points) require_same_dim(points.front(), p, "OracleRequest");
}

EvaluationError::EvaluationError(std::size_t index, double value)
    : std::runtime_error("objective returned non-finite value " + std::to_string(value) +
                         " at point " + std::to_string(index + 1)),
      index_(index) {}

namespace {

std::vector<double> evaluate_all(const Objective& f, std::span<const Vector> points) {
  std::vector<double> values(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    values[i] = f(points[i]);
    if (!std::isfinite(values[i])) throw EvaluationError(i, values[i]);
  }
  return values;
}

RankingOutcome rank_values(std::span<const double> values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Ties resolve to the lower position.
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return values[a] < values[b] || (values[a] == values[b] && a < b);
                    });
  order.resize(k);
  return RankingOutcome(values.size(), std::move(order));
}

}  // namespace

RankingOutcome exact_rank(const Objective& f, const OracleRequest& request) {
  request.validate();
  const std::vector<double> values = evaluate_all(f, request.points);
  return rank_values(values, request.k);
}

RankingOutcome noisy_rank(const Objective& f, const OracleRequest& request, const NoiseSpec& noise,
                          Rng& rng) {
  if (!(noise.sigma >= 0.0) || !std::isfinite(noise.sigma)) {
    throw std::invalid_argument("noisy_rank: sigma must be finite and >= 0");
  }
  request.validate();
  std::vector<double> values = evaluate_all(f, request.points);
  // Noise is drawn even when sigma == 0 so the generator advances identically
  // across noise levels.
  for (double& v : values) {
    const double eps = rng.normal();
    if (noise.sigma > 0.0) v += noise.sigma * eps;
  }
  return rank_values(values, request.k);
}

std::size_t argmin_select(const Objective& f, std::span<const Vector> points) {
  if (points.empty()) throw std::invalid_argument("argmin_select: no points");
  const std::vector<double> values = evaluate_all(f, points);
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

RankingOutcome RankingOracle::rank(const OracleRequest& request) {
  request.validate();
  queries_ += static_cast<std::int64_t>(request.m());
  RankingOutcome outcome = do_rank(request);
  if (outcome.m() != request.m() || outcome.k() > request.k) {
    throw MalformedAnswer("oracle answer does not match the request shape");
  }
  return outcome;
}

std::size_t RankingOracle::select(std::span<const Vector> points) {
  if (points.empty()) throw std::invalid_argument("select: no points");
  if (points.size() == 1) {
    queries_ += 1;
    return 0;
  }
  OracleRequest request;
  request.points.assign(points.begin(), points.end());
  request.k = 1;
  return rank(request).best();
}

double ValueOracle::operator()(std::span<const double> x) {
  ++queries_;
  const double v = f_(x);
  if (!std::isfinite(v)) throw EvaluationError(0, v);
  return v;
}

const char* to_string(SubmitStatus status) {
  switch (status) {
    case SubmitStatus::Accepted: return "accepted";
    case SubmitStatus::Malformed: return "malformed";
    case SubmitStatus::Stale: return "stale";
    case SubmitStatus::Unknown: return "unknown";
    case SubmitStatus::Cancelled: return "cancelled";
  }
  return "unknown";
}

struct PendingAnswer::State {
  OracleRequest request;
  mutable std::mutex mu;
  std::condition_variable cv;
  std::optional<RankingOutcome> result;
  bool cancelled = false;
};

const std::string& PendingAnswer::request_id() const { return state_->request.request_id; }

bool PendingAnswer::ready() const {
  std::lock_guard lock(state_->mu);
  return state_->result.has_value();
}

std::optional<RankingOutcome> PendingAnswer::try_get() const {
  std::lock_guard lock(state_->mu);
  return state_->result;
}

RankingOutcome PendingAnswer::wait(std::optional<std::chrono::milliseconds> timeout) const {
  std::unique_lock lock(state_->mu);
  auto done = [&] { return state_->result.has_value() || state_->cancelled; };
  if (timeout) {
    if (!state_->cv.wait_for(lock, *timeout, done)) {
      throw OracleTimeout("no answer for request " + state_->request.request_id);
    }
  } else {
    state_->cv.wait(lock, done);
  }
  if (!state_->result) throw OracleCancelled("session cancelled");
  return *state_->result;
}

PendingAnswer Mailbox::post(OracleRequest request) {
  request.validate();
  std::lock_guard lock(mu_);
  if (cancelled_) throw OracleCancelled("session cancelled");
  if (pending_) throw std::logic_error("mailbox already has a pending request");
  auto state = std::make_shared<PendingAnswer::State>();
  state->request = std::move(request);
  pending_ = state;
  return PendingAnswer(std::move(state));
}

SubmitResult Mailbox::submit(const std::string& request_id,
                             std::span<const std::int64_t> one_based_order) {
  std::lock_guard lock(mu_);
  if (cancelled_) return {SubmitStatus::Cancelled, "session cancelled"};
  if (!pending_ || pending_->request.request_id != request_id) {
    if (std::find(resolved_.begin(), resolved_.end(), request_id) != resolved_.end()) {
      return {SubmitStatus::Stale, "request " + request_id + " was already answered"};
    }
    return {SubmitStatus::Unknown, "no pending request " + request_id};
  }
  const OracleRequest& request = pending_->request;
  if (one_based_order.size() > request.k) {
    return {SubmitStatus::Malformed, "at most " + std::to_string(request.k) +
                                         " indices may be ranked, got " +
                                         std::to_string(one_based_order.size())};
  }
  std::optional<RankingOutcome> outcome;
  try {
    outcome = RankingOutcome::from_one_based(request.m(), one_based_order);
  } catch (const std::invalid_argument& e) {
    return {SubmitStatus::Malformed, e.what()};
  }
  {
    std::lock_guard state_lock(pending_->mu);
    pending_->result = std::move(outcome);
  }
  pending_->cv.notify_all();
  resolved_.push_back(request_id);
  pending_.reset();
  return {SubmitStatus::Accepted, ""};
}

void Mailbox::cancel() {
  std::lock_guard lock(mu_);
  cancelled_ = true;
  if (pending_) {
    {
      std::lock_guard state_lock(pending_->mu);
      pending_->cancelled = true;
    }
    pending_->cv.notify_all();
    pending_.reset();
  }
}

bool Mailbox::withdraw(const std::string& request_id) {
  std::lock_guard lock(mu_);
  if (!pending_ || pending_->request.request_id != request_id) return false;
  {
    std::lock_guard state_lock(pending_->mu);
    pending_->cancelled = true;
  }
  pending_->cv.notify_all();
  resolved_.push_back(request_id);
  pending_.reset();
  return true;
}

std::optional<OracleRequest> Mailbox::pending_request() const {
  std::lock_guard lock(mu_);
  if (!pending_) return std::nullopt;
  return pending_->request;
}

bool Mailbox::cancelled() const {
  std::lock_guard lock(mu_);
  return cancelled_;
}

RankingOutcome DeferredOracle::do_rank(const OracleRequest& request) {
  // A request identical to one still outstanding (a retry after a timeout)
  // waits on the original handle instead of posting again. The answer may
  // already have arrived while nobody was waiting.
  PendingAnswer handle;
  if (outstanding_ && outstanding_points_ == request.points && outstanding_k_ == request.k) {
    handle = *outstanding_;
  } else {
    OracleRequest posted = request;
    if (posted.request_id.empty()) posted.request_id = "deferred-" + std::to_string(next_id_++);
    handle = mailbox_->post(std::move(posted));
    outstanding_ = handle;
    outstanding_points_ = request.points;
    outstanding_k_ = request.k;
  }
  RankingOutcome outcome = handle.wait(timeout_);
  outstanding_.reset();
  outstanding_points_.clear();
  return outcome;
}

}  // namespace zorank
