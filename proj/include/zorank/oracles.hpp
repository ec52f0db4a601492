#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "zorank/rank_grad.hpp"
#include "zorank/rng.hpp"
#include "zorank/vector_ops.hpp"

namespace zorank {

using Objective = std::function<double(std::span<const double>)>;

struct OracleRequest {
  std::vector<Vector> points;
  /// Upper bound on the number of ranked answers. Function-backed oracles
  /// return exactly k; a human may return any 1 <= k' <= k.
  std::size_t k = 1;
  std::string request_id;

  std::size_t m() const { return points.size(); }
  void validate() const;
};

struct NoiseSpec {
  double sigma = 0.0;
};

/// f returned a non-finite value.
class EvaluationError : public std::runtime_error {
public:
  EvaluationError(std::size_t index, double value);
  /// 0-based position of the offending point.
  std::size_t index() const { return index_; }

private:
  std::size_t index_;
};

class OracleTimeout : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class OracleCancelled : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Answer that does not fit the request it claims to answer.
class MalformedAnswer : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

RankingOutcome exact_rank(const Objective& f, const OracleRequest& request);
RankingOutcome noisy_rank(const Objective& f, const OracleRequest& request, const NoiseSpec& noise,
                          Rng& rng);

/// (l,1)-oracle: 0-based position of the smallest value, lowest position on ties.
std::size_t argmin_select(const Objective& f, std::span<const Vector> points);

/// Common interface of every ranking backend. Each call to rank() is metered
/// by the number of points in the request, so algorithms that only see this
/// interface are charged identically.
class RankingOracle {
public:
  virtual ~RankingOracle() = default;

  RankingOutcome rank(const OracleRequest& request);
  /// Convenience for (l,1) queries.
  std::size_t select(std::span<const Vector> points);

  std::int64_t queries() const { return queries_; }
  void reset_queries() { queries_ = 0; }

protected:
  virtual RankingOutcome do_rank(const OracleRequest& request) = 0;

private:
  std::int64_t queries_ = 0;
};

class ExactOracle final : public RankingOracle {
public:
  explicit ExactOracle(Objective f) : f_(std::move(f)) {}

protected:
  RankingOutcome do_rank(const OracleRequest& request) override { return exact_rank(f_, request); }

private:
  Objective f_;
};

/// Gaussian value noise applied once per request; fresh noise on every call.
class NoisyOracle final : public RankingOracle {
public:
  NoisyOracle(Objective f, NoiseSpec noise, Rng rng)
      : f_(std::move(f)), noise_(noise), rng_(std::move(rng)) {}

protected:
  RankingOutcome do_rank(const OracleRequest& request) override {
    return noisy_rank(f_, request, noise_, rng_);
  }

private:
  Objective f_;
  NoiseSpec noise_;
  Rng rng_;
};

/// Value oracle used by the ZO-SGD baseline, metered per evaluated point.
class ValueOracle {
public:
  explicit ValueOracle(Objective f) : f_(std::move(f)) {}
  double operator()(std::span<const double> x);
  std::int64_t queries() const { return queries_; }

private:
  Objective f_;
  std::int64_t queries_ = 0;
};

enum class SubmitStatus { Accepted, Malformed, Stale, Unknown, Cancelled };

const char* to_string(SubmitStatus status);

struct SubmitResult {
  SubmitStatus status;
  std::string message;
  bool ok() const { return status == SubmitStatus::Accepted; }
};

/// Handle to one outstanding request; resolves when the mailbox accepts an
/// answer for it.
class PendingAnswer {
public:
  PendingAnswer() = default;

  const std::string& request_id() const;
  bool ready() const;
  std::optional<RankingOutcome> try_get() const;
  /// Blocks until resolved. Throws OracleTimeout or OracleCancelled.
  RankingOutcome wait(std::optional<std::chrono::milliseconds> timeout) const;

private:
  friend class Mailbox;
  struct State;
  explicit PendingAnswer(std::shared_ptr<State> state) : state_(std::move(state)) {}
  std::shared_ptr<State> state_;
};

/// Answer channel of one session: at most one pending request, at most one
/// accepted answer per request id. Indices in submitted answers are 1-based.
class Mailbox {
public:
  PendingAnswer post(OracleRequest request);
  SubmitResult submit(const std::string& request_id, std::span<const std::int64_t> one_based_order);
  void cancel();
  /// Retires the pending request without an answer (e.g. it expired). Its
  /// waiters see OracleCancelled and later answers to it are Stale.
  bool withdraw(const std::string& request_id);

  std::optional<OracleRequest> pending_request() const;
  bool cancelled() const;

private:
  mutable std::mutex mu_;
  std::shared_ptr<PendingAnswer::State> pending_;
  std::vector<std::string> resolved_;
  bool cancelled_ = false;
};

/// Blocking adapter: rank() posts to the mailbox and waits for a human (or a
/// script standing in for one) to answer.
class DeferredOracle final : public RankingOracle {
public:
  explicit DeferredOracle(std::shared_ptr<Mailbox> mailbox,
                          std::optional<std::chrono::milliseconds> timeout = std::nullopt)
      : mailbox_(std::move(mailbox)), timeout_(timeout) {}

protected:
  RankingOutcome do_rank(const OracleRequest& request) override;

private:
  std::shared_ptr<Mailbox> mailbox_;
  std::optional<std::chrono::milliseconds> timeout_;
  std::optional<PendingAnswer> outstanding_;
  std::vector<Vector> outstanding_points_;
  std::size_t outstanding_k_ = 0;
  std::uint64_t next_id_ = 0;
};

}  // namespace zorank
