#include "nliforge/gateway.hpp"

#include <cmath>
#include <ctime>
#include <thread>

namespace nliforge::llm {

namespace {

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
    return out;
}

std::string excerpt(const std::string& body, std::size_t max_len = 200) {
    if (body.size() <= max_len) return body;
    return body.substr(0, max_len) + "...";
}

}  // namespace

void validate(const CompletionRequest& request) {
    if (request.prompt.empty()) throw std::invalid_argument("completion request has an empty prompt");
    if (!std::isfinite(request.temperature) || request.temperature < 0.0) {
        throw std::invalid_argument("temperature must be finite and >= 0");
    }
    if (request.max_output_tokens <= 0) throw std::invalid_argument("max_output_tokens must be positive");
}

void SystemClock::sleep_for(Duration d) {
    if (d.count() > 0) std::this_thread::sleep_for(d);
}

Clock::time_point VirtualClock::now() const {
    std::lock_guard lock(mutex_);
    return now_;
}

void VirtualClock::sleep_for(Duration d) {
    std::lock_guard lock(mutex_);
    if (d.count() <= 0) return;
    now_ += d;
    slept_ += d;
}

Duration VirtualClock::total_slept() const {
    std::lock_guard lock(mutex_);
    return slept_;
}

// ---------------------------------------------------------------------------

RateLimiter::RateLimiter(std::size_t max_requests, Duration interval, std::shared_ptr<Clock> clock)
    : max_requests_(max_requests), interval_(interval), clock_(std::move(clock)) {
    if (max_requests_ == 0) throw std::invalid_argument("rate limit must be > 0");
    if (interval_.count() <= 0) throw std::invalid_argument("rate limit interval must be > 0");
}

Clock::time_point RateLimiter::acquire() {
    std::lock_guard lock(mutex_);
    while (true) {
        const auto now = clock_->now();
        while (!admitted_.empty() && admitted_.front() + interval_ <= now) admitted_.pop_front();
        if (admitted_.size() < max_requests_) {
            admitted_.push_back(now);
            return now;
        }
        const auto wait = std::chrono::duration_cast<Duration>(admitted_.front() + interval_ - now);
        clock_->sleep_for(std::max(wait, Duration(1)));
    }
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json to_json(const GenerationRecord& r) {
    nlohmann::ordered_json j;
    j["call_id"] = r.call_id;
    j["attempt"] = r.attempt;
    j["timestamp"] = r.timestamp;
    j["backend"] = r.backend_id;
    nlohmann::ordered_json req;
    req["prompt"] = r.request.prompt;
    req["temperature"] = r.request.temperature;
    req["max_output_tokens"] = r.request.max_output_tokens;
    req["stop"] = r.request.stop_sequences;
    if (r.request.seed) req["seed"] = *r.request.seed;
    j["request"] = std::move(req);
    j["response"] = {{"status", r.status}, {"text", r.text}, {"latency_ms", r.latency.count()}};
    if (!r.error.empty()) j["error"] = r.error;
    if (!r.raw.is_null()) j["raw"] = r.raw;
    return j;
}

AuditLog::AuditLog(const std::filesystem::path& sink) {
    if (sink.has_parent_path()) std::filesystem::create_directories(sink.parent_path());
    sink_.emplace(sink, std::ios::app);
    if (!*sink_) throw std::runtime_error("cannot open audit log: " + sink.string());
}

void AuditLog::append(GenerationRecord record) {
    std::lock_guard lock(mutex_);
    if (sink_) {
        *sink_ << to_json(record).dump() << '\n';
        sink_->flush();
    }
    records_.push_back(std::move(record));
}

std::vector<GenerationRecord> AuditLog::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t AuditLog::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

// ---------------------------------------------------------------------------

void GatewayPolicy::validate() const {
    if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    if (rate_limit_requests == 0) throw std::invalid_argument("rate limit must be > 0");
    if (rate_limit_interval.count() <= 0) throw std::invalid_argument("rate limit interval must be > 0");
    if (max_in_flight == 0) throw std::invalid_argument("max_in_flight must be > 0");
}

Duration GatewayPolicy::backoff_for(int retry) const {
    if (backoff.empty() || retry <= 0) return Duration(0);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(retry), backoff.size()) - 1;
    return backoff[idx];
}

bool is_retryable_status(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayPolicy policy, std::shared_ptr<Clock> clock,
                 std::shared_ptr<AuditLog> audit)
    : backend_(std::move(backend)),
      policy_((policy.validate(), std::move(policy))),
      clock_(std::move(clock)),
      audit_(std::move(audit)),
      limiter_(policy_.rate_limit_requests, policy_.rate_limit_interval, clock_),
      in_flight_(static_cast<std::ptrdiff_t>(policy_.max_in_flight)) {
    if (!backend_) throw std::invalid_argument("gateway requires a backend");
}

CompletionResponse Gateway::complete(const CompletionRequest& request) {
    validate(request);
    const std::uint64_t call_id = next_call_id_.fetch_add(1);
    const int max_attempts = policy_.max_retries + 1;
    int last_status = 0;
    std::string last_error;

    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1) clock_->sleep_for(policy_.backoff_for(attempt - 1));
        limiter_.acquire();

        GenerationRecord rec;
        rec.call_id = call_id;
        rec.attempt = attempt;
        rec.request = request;
        rec.backend_id = backend_->id();
        rec.timestamp = utc_timestamp();

        BackendReply reply;
        const auto start = std::chrono::steady_clock::now();
        in_flight_.acquire();
        try {
            reply = backend_->send(request);
        } catch (const std::exception& e) {
            in_flight_.release();
            rec.latency = std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - start);
            rec.status = -1;
            rec.error = e.what();
            audit_->append(std::move(rec));
            throw;
        }
        in_flight_.release();
        rec.latency = std::chrono::duration_cast<Duration>(std::chrono::steady_clock::now() - start);
        rec.status = reply.status;
        rec.text = reply.text;
        rec.error = reply.error;
        rec.raw = reply.raw;
        const Duration latency = rec.latency;
        audit_->append(std::move(rec));

        if (reply.status >= 200 && reply.status < 300) {
            return CompletionResponse{std::move(reply.text), backend_->id(), latency, std::move(reply.raw), attempt};
        }
        last_status = reply.status;
        last_error = reply.error.empty() ? excerpt(reply.text) : reply.error;
        if (!is_retryable_status(reply.status)) {
            throw BackendError(reply.status, excerpt(reply.error.empty() ? reply.text : reply.error));
        }
    }
    throw TransportError("retries exhausted after " + std::to_string(max_attempts) +
                             " attempts (last status " + std::to_string(last_status) + "): " + last_error,
                         last_status, max_attempts);
}

}  // namespace nliforge::llm
