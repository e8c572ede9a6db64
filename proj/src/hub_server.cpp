#include "nliforge/hub_server.hpp"

#include <httplib.h>

namespace nliforge::annotation {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, int status, const ojson& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& message) {
    ojson body;
    body["error"] = kind;
    body["message"] = message;
    send_json(res, status, body);
}

std::string required_string(const json& body, const char* key) {
    if (!body.contains(key) || !body.at(key).is_string()) {
        throw HubError(HubError::Kind::bad_request, std::string("missing string field: ") + key);
    }
    return body.at(key).get<std::string>();
}

}  // namespace

struct HubServer::Impl {
    AnnotationHub& hub;
    std::optional<Corpus> pool;
    httplib::Server server;

    Impl(AnnotationHub& h, std::optional<Corpus> p) : hub(h), pool(std::move(p)) { routes(); }

    template <typename Fn>
    auto guarded(Fn fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const HubError& e) {
                switch (e.kind()) {
                    case HubError::Kind::not_found: send_error(res, 404, "not_found", e.what()); break;
                    case HubError::Kind::conflict: send_error(res, 409, "conflict", e.what()); break;
                    case HubError::Kind::bad_request: send_error(res, 400, "bad_request", e.what()); break;
                }
            } catch (const IncompleteVoting& e) {
                ojson body;
                body["error"] = "incomplete";
                body["message"] = e.what();
                body["missing"] = ojson::array();
                for (const auto& [ex, ann] : e.missing()) body["missing"].push_back({{"example_id", ex}, {"annotator", ann}});
                send_json(res, 409, body);
            } catch (const json::exception& e) {
                send_error(res, 400, "bad_request", std::string("malformed JSON: ") + e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            }
        };
    }

    SessionSpec spec_from_body(const json& body) const {
        SessionSpec spec;
        if (!body.is_object()) throw HubError(HubError::Kind::bad_request, "request body must be a JSON object");
        if (!body.contains("annotators") || !body.at("annotators").is_array()) {
            throw HubError(HubError::Kind::bad_request, "missing array field: annotators");
        }
        spec.annotators = body.at("annotators").get<std::vector<std::string>>();
        spec.seed = body.value("seed", std::uint64_t{0});
        spec.threshold = body.value("threshold", std::size_t{2});

        if (body.contains("examples")) {
            for (const auto& e : body.at("examples")) {
                HubExample ex{required_string(e, "id"), required_string(e, "premise"),
                              required_string(e, "hypothesis"), std::nullopt};
                if (e.contains("model_label")) {
                    ex.model_label = parse_label(e.at("model_label").get<std::string>());
                    if (!ex.model_label) throw HubError(HubError::Kind::bad_request, "unknown model_label");
                }
                spec.examples.push_back(std::move(ex));
            }
            return spec;
        }
        if (!pool) throw HubError(HubError::Kind::bad_request, "no example pool loaded; send \"examples\"");
        auto all = hub_examples(*pool);
        if (!body.contains("example_ids")) {
            spec.examples = std::move(all);
            return spec;
        }
        std::map<std::string, const HubExample*> by_id;
        for (const auto& ex : all) by_id[ex.id] = &ex;
        for (const auto& id : body.at("example_ids").get<std::vector<std::string>>()) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw HubError(HubError::Kind::not_found, "unknown example id: " + id);
            spec.examples.push_back(*it->second);
        }
        return spec;
    }

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Headers", "Content-Type"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const SessionSpec spec = spec_from_body(json::parse(req.body));
            const std::string id = hub.create_session(spec);
            ojson body;
            body["id"] = id;
            body["examples"] = spec.examples.size();
            body["annotators"] = spec.annotators;
            send_json(res, 201, body);
        }));

        server.Get("/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, ojson(hub.sessions()));
        }));

        server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, hub.progress(req.matches[1]).to_json());
        }));

        server.Get(R"(/sessions/([^/]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            if (!req.has_param("annotator")) {
                throw HubError(HubError::Kind::bad_request, "missing query parameter: annotator");
            }
            const auto item = hub.next_unlabeled(req.matches[1], req.get_param_value("annotator"));
            ojson body;
            body["done"] = !item.has_value();
            if (item) body["item"] = item->to_json();
            send_json(res, 200, body);
        }));

        server.Post(R"(/sessions/([^/]+)/votes)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            if (!body.is_object()) throw HubError(HubError::Kind::bad_request, "request body must be a JSON object");
            const std::string example_id = required_string(body, "example_id");
            const std::string annotator = required_string(body, "annotator");
            const std::string label_text = required_string(body, "label");
            const auto label = parse_label(label_text);
            if (!label) throw HubError(HubError::Kind::bad_request, "unknown label: " + label_text);
            hub.submit_vote(req.matches[1], example_id, annotator, *label);
            ojson ack;
            ack["example_id"] = example_id;
            ack["annotator"] = annotator;
            ack["label"] = to_string(*label);
            send_json(res, 201, ack);
        }));

        server.Get(R"(/sessions/([^/]+)/report)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, hub.report(req.matches[1]).to_json());
        }));
    }
};

HubServer::HubServer(AnnotationHub& hub, std::optional<Corpus> pool)
    : impl_(std::make_unique<Impl>(hub, std::move(pool))) {}

HubServer::~HubServer() = default;

int HubServer::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HubServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }

bool HubServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HubServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

void HubServer::stop() { impl_->server.stop(); }

}  // namespace nliforge::annotation
