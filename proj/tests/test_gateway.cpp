#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "nliforge/gateway.hpp"
#include "nliforge/http_backend.hpp"
#include "nliforge/mock_backend.hpp"
#include "nliforge/parallel.hpp"

using namespace nliforge;
using namespace nliforge::llm;
using namespace std::chrono_literals;

namespace {

// Replays a fixed list of replies, then repeats the last one.
class ScriptedStatusBackend final : public Backend {
public:
    explicit ScriptedStatusBackend(std::vector<BackendReply> replies) : replies_(std::move(replies)) {}
    BackendReply send(const CompletionRequest&) override {
        const std::size_t i = std::min(calls_++, replies_.size() - 1);
        return replies_[i];
    }
    std::string id() const override { return "scripted"; }
    std::size_t calls() const { return calls_; }

private:
    std::vector<BackendReply> replies_;
    std::size_t calls_ = 0;
};

GatewayPolicy fast_policy(int retries) {
    GatewayPolicy p;
    p.max_retries = retries;
    p.backoff = {10ms, 20ms, 40ms};
    return p;
}

CompletionRequest req(std::string prompt) {
    CompletionRequest r;
    r.prompt = std::move(prompt);
    return r;
}

}  // namespace

TEST_CASE("mock backend echoes scripted text verbatim") {
    auto mock = std::make_shared<MockBackend>();
    mock->script("say hi", "text: {Hello}");
    mock->script("spaces", "  padded  \n");
    Gateway gw(mock, {}, std::make_shared<VirtualClock>());
    CHECK(gw.complete(req("say hi")).text == "text: {Hello}");
    CHECK(gw.complete(req("spaces")).text == "  padded  \n");
    CHECK(gw.audit().size() == 2);
}

TEST_CASE("unscripted prompt without fallback is an error") {
    auto mock = std::make_shared<MockBackend>();
    Gateway gw(mock, {}, std::make_shared<VirtualClock>());
    CHECK_THROWS_AS((void)gw.complete(req("nobody scripted this")), UnscriptedPrompt);
    CHECK_THROWS_WITH((void)gw.complete(req("x")), "unscripted prompt");
}

TEST_CASE("substring rules apply after exact matches") {
    auto mock = std::make_shared<MockBackend>(MockBackend::from_json(
        {{"responses", {{"exact", "E"}}}, {"rules", {{{"contains", "ex"}, {"text", "R"}}}}}));
    Gateway gw(mock, {}, std::make_shared<VirtualClock>());
    CHECK(gw.complete(req("exact")).text == "E");
    CHECK(gw.complete(req("an example")).text == "R");
}

TEST_CASE("retry on 429 then succeed; audit counts attempts") {
    auto backend = std::make_shared<ScriptedStatusBackend>(
        std::vector<BackendReply>{{429, "slow down", nullptr, {}}, {429, "slow down", nullptr, {}}, {200, "ok", nullptr, {}}});
    auto clock = std::make_shared<VirtualClock>();
    Gateway gw(backend, fast_policy(3), clock);
    const auto resp = gw.complete(req("p"));
    CHECK(resp.text == "ok");
    CHECK(resp.attempts == 3);
    const auto records = gw.audit().records();
    REQUIRE(records.size() == 3);
    CHECK(records[0].status == 429);
    CHECK(records[1].status == 429);
    CHECK(records[2].status == 200);
    CHECK(records[0].call_id == records[2].call_id);
    CHECK(records[2].attempt == 3);
    CHECK(clock->total_slept() == 30ms);
}

TEST_CASE("exhausted retries raise a transport error") {
    auto backend = std::make_shared<ScriptedStatusBackend>(std::vector<BackendReply>{{503, "down", nullptr, {}}});
    Gateway gw(backend, fast_policy(1), std::make_shared<VirtualClock>());
    try {
        (void)gw.complete(req("p"));
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.attempts() == 2);
        CHECK(e.last_status() == 503);
    }
    CHECK(backend->calls() == 2);
    CHECK(gw.audit().size() == 2);
}

TEST_CASE("non-retryable status raises a backend error at once") {
    auto backend = std::make_shared<ScriptedStatusBackend>(
        std::vector<BackendReply>{{400, std::string(1000, 'x'), nullptr, {}}});
    Gateway gw(backend, fast_policy(3), std::make_shared<VirtualClock>());
    try {
        (void)gw.complete(req("p"));
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.status() == 400);
        CHECK(e.body_excerpt().size() < 1000);
    }
    CHECK(backend->calls() == 1);
}

TEST_CASE("retryable statuses") {
    for (int s : {0, 408, 429, 500, 502, 503, 504}) CHECK(is_retryable_status(s));
    for (int s : {200, 400, 401, 403, 404, 422}) CHECK_FALSE(is_retryable_status(s));
}

TEST_CASE("request validation") {
    CompletionRequest r = req("");
    CHECK_THROWS_AS(validate(r), std::invalid_argument);
    r = req("p");
    r.temperature = -0.5;
    CHECK_THROWS_AS(validate(r), std::invalid_argument);
    r = req("p");
    r.max_output_tokens = 0;
    CHECK_THROWS_AS(validate(r), std::invalid_argument);
    CHECK_NOTHROW(validate(req("p")));
}

TEST_CASE("rate limiter never exceeds the window on a virtual clock") {
    auto clock = std::make_shared<VirtualClock>();
    RateLimiter limiter(5, 1000ms, clock);
    std::vector<Clock::time_point> admitted;
    for (int i = 0; i < 23; ++i) admitted.push_back(limiter.acquire());
    for (std::size_t i = 0; i < admitted.size(); ++i) {
        std::size_t in_window = 0;
        for (std::size_t j = 0; j < admitted.size(); ++j) {
            if (admitted[j] >= admitted[i] && admitted[j] < admitted[i] + 1000ms) ++in_window;
        }
        CHECK(in_window <= 5);
    }
    CHECK(admitted.back() - admitted.front() >= 4000ms);
}

TEST_CASE("gateway honors the rate limit across threads") {
    auto clock = std::make_shared<VirtualClock>();
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const CompletionRequest&, std::mt19937_64&) { return std::string("ok"); });
    GatewayPolicy policy;
    policy.rate_limit_requests = 10;
    policy.rate_limit_interval = 1000ms;
    Gateway gw(mock, policy, clock);
    parallel_for(40, 4, [&](std::size_t i) { (void)gw.complete(req("p" + std::to_string(i))); });
    CHECK(gw.audit().size() == 40);
    CHECK(clock->total_slept() >= 3000ms);
}

TEST_CASE("synthetic generator label frequencies follow the weights") {
    SyntheticGeneratorOptions opts;
    opts.label_weights = {0.5, 0.3, 0.2};
    auto mock = std::make_shared<MockBackend>(std::map<std::string, std::string>{}, synthetic_generator(opts));
    std::array<int, 3> counts{};
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        CompletionRequest r = req("premise: {A dog runs.}\nhypothesis: {");
        r.seed = static_cast<std::uint64_t>(i);
        const std::string text = mock->send(r).text;
        if (text.find("{entailment}") != std::string::npos) ++counts[0];
        else if (text.find("{contradiction}") != std::string::npos) ++counts[1];
        else if (text.find("{neutral}") != std::string::npos) ++counts[2];
    }
    CHECK(counts[0] + counts[1] + counts[2] == n);
    for (int l = 0; l < 3; ++l) CHECK(std::abs(counts[l] / double(n) - opts.label_weights[l]) <= 0.02);
}

TEST_CASE("mock responses are a pure function of prompt and seed") {
    auto make = [] {
        return std::make_shared<MockBackend>(std::map<std::string, std::string>{}, synthetic_generator());
    };
    auto a = make(), b = make();
    for (std::uint64_t s = 0; s < 50; ++s) {
        CompletionRequest r = req("domain: {news} length: {short} text: {");
        r.seed = s;
        CHECK(a->send(r).text == b->send(r).text);
    }
    CompletionRequest r1 = req("domain: {news} length: {short} text: {"), r2 = r1;
    r1.seed = 1;
    r2.seed = 2;
    CHECK(a->send(r1).text != a->send(r2).text);
}

TEST_CASE("audit log sink writes one JSON line per attempt") {
    const auto path = std::filesystem::temp_directory_path() / "nliforge_audit_test.jsonl";
    std::filesystem::remove(path);
    {
        auto audit = std::make_shared<AuditLog>(path);
        auto backend = std::make_shared<ScriptedStatusBackend>(
            std::vector<BackendReply>{{500, "", nullptr, {}}, {200, "fine", nullptr, {}}});
        Gateway gw(backend, fast_policy(2), std::make_shared<VirtualClock>(), audit);
        (void)gw.complete(req("p"));
    }
    std::ifstream in(path);
    std::string line;
    std::vector<nlohmann::json> rows;
    while (std::getline(in, line)) rows.push_back(nlohmann::json::parse(line));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["response"]["status"] == 500);
    CHECK(rows[1]["response"]["text"] == "fine");
    CHECK(rows[1]["request"]["prompt"] == "p");
    std::filesystem::remove(path);
}

TEST_CASE("endpoint parsing") {
    auto ep = parse_endpoint("http://localhost:8080/v1/complete");
    CHECK(ep.scheme_host_port == "http://localhost:8080");
    CHECK(ep.path == "/v1/complete");
    CHECK(parse_endpoint("https://example.com").path == "/");
    CHECK_THROWS_AS((void)parse_endpoint("ftp://x"), std::invalid_argument);
    CHECK_THROWS_AS((void)parse_endpoint("localhost"), std::invalid_argument);
}

TEST_CASE("http backend: 429 twice then 200 through a live server") {
    httplib::Server server;
    std::atomic<int> hits{0};
    nlohmann::json last_body;
    std::mutex body_mutex;
    server.Post("/complete", [&](const httplib::Request& rq, httplib::Response& rs) {
        {
            std::lock_guard lock(body_mutex);
            last_body = nlohmann::json::parse(rq.body);
        }
        if (++hits <= 2) {
            rs.status = 429;
            rs.set_content("rate limited", "text/plain");
            return;
        }
        rs.set_content(R"({"text":" text: {Hello} "})", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto backend = std::make_shared<HttpBackend>("http://127.0.0.1:" + std::to_string(port) + "/complete", 5s);
    Gateway gw(backend, fast_policy(3), std::make_shared<VirtualClock>());
    CompletionRequest r = req("hello");
    r.stop_sequences = {"}"};
    const auto resp = gw.complete(r);
    CHECK(resp.text == " text: {Hello} ");
    CHECK(resp.attempts == 3);
    CHECK(gw.audit().size() == 3);
    {
        std::lock_guard lock(body_mutex);
        CHECK(last_body["prompt"] == "hello");
        CHECK(last_body["stop"] == nlohmann::json::array({"}"}));
        CHECK(last_body.contains("temperature"));
        CHECK(last_body.contains("max_output_tokens"));
    }
    server.stop();
    th.join();
}

TEST_CASE("http backend: unreachable host maps to a transport error") {
    httplib::Server probe;
    const int port = probe.bind_to_any_port("127.0.0.1");
    probe.stop();  // port now closed
    auto backend = std::make_shared<HttpBackend>("http://127.0.0.1:" + std::to_string(port) + "/", 1s);
    Gateway gw(backend, fast_policy(1), std::make_shared<VirtualClock>());
    CHECK_THROWS_AS((void)gw.complete(req("p")), TransportError);
}
