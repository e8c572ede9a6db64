#include "nliforge/http_backend.hpp"

#include <cstdlib>

#include <httplib.h>

namespace nliforge::llm {

Endpoint parse_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("not an http(s) URL: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw std::invalid_argument("unsupported URL scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    if (path_start == std::string::npos) {
        ep.scheme_host_port = url;
        ep.path = "/";
    } else {
        ep.scheme_host_port = url.substr(0, path_start);
        ep.path = url.substr(path_start);
    }
    if (ep.scheme_host_port.size() <= scheme_end + 3) throw std::invalid_argument("URL has no host: " + url);
    return ep;
}

HttpBackend::HttpBackend(const std::string& url, Duration timeout, std::string api_key_env)
    : url_(url), endpoint_(parse_endpoint(url)), timeout_(timeout) {
    if (const char* key = std::getenv(api_key_env.c_str()); key != nullptr) api_key_ = key;
}

HttpBackend::~HttpBackend() = default;

BackendReply HttpBackend::send(const CompletionRequest& request) {
    httplib::Client client(endpoint_.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    nlohmann::json body{{"prompt", request.prompt},
                        {"temperature", request.temperature},
                        {"max_output_tokens", request.max_output_tokens},
                        {"stop", request.stop_sequences}};
    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) return BackendReply{0, {}, nullptr, "transport failure: " + httplib::to_string(res.error())};

    BackendReply reply;
    reply.status = res->status;
    if (res->status < 200 || res->status >= 300) {
        reply.text = res->body;
        return reply;
    }
    try {
        reply.raw = nlohmann::json::parse(res->body);
        reply.text = reply.raw.at("text").get<std::string>();
    } catch (const std::exception& e) {
        throw BackendError(res->status, std::string("response lacks a string 'text' field: ") + e.what());
    }
    return reply;
}

}  // namespace nliforge::llm
