#pragma once

#include <memory>
#include <string>

#include "nliforge/gateway.hpp"

namespace nliforge::llm {

inline constexpr const char* kApiKeyEnv = "NLIFORGE_API_KEY";

// Split form of an http(s) URL.
struct Endpoint {
    std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
    std::string path;              // e.g. "/v1/complete"; "/" when absent
};

// Throws std::invalid_argument for anything that is not http:// or https://.
[[nodiscard]] Endpoint parse_endpoint(const std::string& url);

// POSTs {prompt, temperature, max_output_tokens, stop} as JSON and expects
// {"text": ...} back. The API key, when the environment variable is set, is
// sent as a bearer token.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(const std::string& url, Duration timeout = std::chrono::seconds(120),
                         std::string api_key_env = kApiKeyEnv);
    ~HttpBackend() override;

    [[nodiscard]] BackendReply send(const CompletionRequest& request) override;
    [[nodiscard]] std::string id() const override { return "http:" + url_; }

private:
    std::string url_;
    Endpoint endpoint_;
    Duration timeout_;
    std::string api_key_;
};

}  // namespace nliforge::llm
