#pragma once

#include <memory>
#include <optional>
#include <string>

#include "nliforge/annotation_hub.hpp"

namespace nliforge::annotation {

// JSON API over an AnnotationHub:
//   POST /sessions                       -> 201 {id, examples, annotators}
//   GET  /sessions                       -> 200 [ids]
//   GET  /sessions/{id}                  -> 200 progress
//   GET  /sessions/{id}/next?annotator=A -> 200 {done, item?}
//   POST /sessions/{id}/votes            -> 201 {example_id, annotator, label}
//   GET  /sessions/{id}/report           -> 200 report, 409 with "missing" while incomplete
// Errors carry {"error": kind, "message": text}: 400 bad_request, 404
// not_found, 409 conflict / incomplete.
//
// POST /sessions takes {"annotators": [...], "seed": n, "threshold": k} plus
// either "examples" (id, premise, hypothesis, optional model_label) or
// "example_ids" selecting from the pool. With neither, the whole pool is used.
class HubServer {
public:
    explicit HubServer(AnnotationHub& hub, std::optional<Corpus> pool = std::nullopt);
    ~HubServer();
    HubServer(const HubServer&) = delete;
    HubServer& operator=(const HubServer&) = delete;

    // Returns the bound port, or -1.
    int bind_to_any_port(const std::string& host = "127.0.0.1");
    bool bind(const std::string& host, int port);
    // Blocks until stop().
    bool listen_after_bind();
    void wait_until_ready() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace nliforge::annotation
