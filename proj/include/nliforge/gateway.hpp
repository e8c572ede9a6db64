#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nliforge::llm {

using Duration = std::chrono::milliseconds;

struct CompletionRequest {
    std::string prompt;
    double temperature = 1.0;
    int max_output_tokens = 512;
    std::vector<std::string> stop_sequences;
    // Honoured by the mock backend only.
    std::optional<std::uint64_t> seed;
};

// Throws std::invalid_argument when the prompt is empty, the temperature is
// negative or not finite, or max_output_tokens is not positive.
void validate(const CompletionRequest& request);

struct CompletionResponse {
    std::string text;  // verbatim, never trimmed; may be empty
    std::string backend_id;
    Duration latency{0};
    nlohmann::json raw;
    int attempts = 1;
};

// What a backend returns for one attempt. status 0 means the request never
// got an HTTP answer (connection refused, timeout, ...).
struct BackendReply {
    int status = 200;
    std::string text;
    nlohmann::json raw;
    std::string error;
};

class Backend {
public:
    virtual ~Backend() = default;
    [[nodiscard]] virtual BackendReply send(const CompletionRequest& request) = 0;
    [[nodiscard]] virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

// Retries exhausted on transient failures.
class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& what, int last_status, int attempts)
        : std::runtime_error(what), last_status_(last_status), attempts_(attempts) {}
    [[nodiscard]] int last_status() const { return last_status_; }
    [[nodiscard]] int attempts() const { return attempts_; }

private:
    int last_status_;
    int attempts_;
};

// Non-retryable HTTP failure.
class BackendError : public std::runtime_error {
public:
    BackendError(int status, std::string body_excerpt)
        : std::runtime_error("backend returned HTTP " + std::to_string(status) + ": " + body_excerpt),
          status_(status),
          body_excerpt_(std::move(body_excerpt)) {}
    [[nodiscard]] int status() const { return status_; }
    [[nodiscard]] const std::string& body_excerpt() const { return body_excerpt_; }

private:
    int status_;
    std::string body_excerpt_;
};

class UnscriptedPrompt : public std::runtime_error {
public:
    UnscriptedPrompt() : std::runtime_error("unscripted prompt") {}
};

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

class Clock {
public:
    using time_point = std::chrono::steady_clock::time_point;
    virtual ~Clock() = default;
    [[nodiscard]] virtual time_point now() const = 0;
    virtual void sleep_for(Duration d) = 0;
};

class SystemClock final : public Clock {
public:
    [[nodiscard]] time_point now() const override { return std::chrono::steady_clock::now(); }
    void sleep_for(Duration d) override;
};

// Sleeping advances virtual time instantly. Thread-safe.
class VirtualClock final : public Clock {
public:
    [[nodiscard]] time_point now() const override;
    void sleep_for(Duration d) override;
    void advance(Duration d) { sleep_for(d); }
    [[nodiscard]] Duration total_slept() const;

private:
    mutable std::mutex mutex_;
    time_point now_{};
    Duration slept_{0};
};

// Sliding-window limiter: at most `max_requests` admissions in any window of
// length `interval`.
class RateLimiter {
public:
    RateLimiter(std::size_t max_requests, Duration interval, std::shared_ptr<Clock> clock);
    // Blocks (via the clock) until a slot is free; returns the admission time.
    Clock::time_point acquire();

private:
    std::size_t max_requests_;
    Duration interval_;
    std::shared_ptr<Clock> clock_;
    std::mutex mutex_;
    std::deque<Clock::time_point> admitted_;
};

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

struct GenerationRecord {
    std::uint64_t call_id = 0;
    int attempt = 1;  // 1-based
    CompletionRequest request;
    int status = 0;
    std::string text;
    std::string error;
    std::string backend_id;
    Duration latency{0};
    std::string timestamp;  // UTC, ISO-8601
    nlohmann::json raw;
};

[[nodiscard]] nlohmann::ordered_json to_json(const GenerationRecord& record);

// Append-only; one entry per attempt. With a sink path every entry is also
// written as one JSON line.
class AuditLog {
public:
    AuditLog() = default;
    explicit AuditLog(const std::filesystem::path& sink);

    void append(GenerationRecord record);
    [[nodiscard]] std::vector<GenerationRecord> records() const;
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::vector<GenerationRecord> records_;
    std::optional<std::ofstream> sink_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct GatewayPolicy {
    int max_retries = 3;
    // Delay before retry k (1-based) is backoff[min(k, size) - 1].
    std::vector<Duration> backoff{Duration(250), Duration(1000), Duration(4000)};
    std::size_t rate_limit_requests = 600;
    Duration rate_limit_interval = std::chrono::seconds(60);
    Duration request_timeout = std::chrono::seconds(120);
    std::size_t max_in_flight = 4;

    // Throws std::invalid_argument on max_retries < 0, a zero rate limit or a
    // zero in-flight limit.
    void validate() const;
    [[nodiscard]] Duration backoff_for(int retry) const;
};

[[nodiscard]] bool is_retryable_status(int status);

class Gateway {
public:
    Gateway(std::shared_ptr<Backend> backend, GatewayPolicy policy = {},
            std::shared_ptr<Clock> clock = std::make_shared<SystemClock>(),
            std::shared_ptr<AuditLog> audit = std::make_shared<AuditLog>());

    // Thread-safe. See the error classes above for the failure contract.
    [[nodiscard]] CompletionResponse complete(const CompletionRequest& request);

    [[nodiscard]] const GatewayPolicy& policy() const { return policy_; }
    [[nodiscard]] const AuditLog& audit() const { return *audit_; }
    [[nodiscard]] std::shared_ptr<AuditLog> audit_ptr() const { return audit_; }
    [[nodiscard]] std::size_t max_in_flight() const { return policy_.max_in_flight; }
    [[nodiscard]] std::string backend_id() const { return backend_->id(); }

private:
    std::shared_ptr<Backend> backend_;
    GatewayPolicy policy_;
    std::shared_ptr<Clock> clock_;
    std::shared_ptr<AuditLog> audit_;
    RateLimiter limiter_;
    std::counting_semaphore<> in_flight_;
    std::atomic<std::uint64_t> next_call_id_{1};
};

}  // namespace nliforge::llm
