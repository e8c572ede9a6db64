#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "nliforge/gateway.hpp"

namespace nliforge::llm {

// Deterministic backend: every response is a pure function of
// (prompt, request seed).
class MockBackend final : public Backend {
public:
    // Called for prompts with no scripted response. The generator is seeded
    // from the prompt and the request seed, so equal inputs give equal text.
    using Fallback = std::function<std::string(const CompletionRequest&, std::mt19937_64&)>;

    struct Rule {
        std::string contains;
        std::string text;
    };

    MockBackend() = default;
    explicit MockBackend(std::map<std::string, std::string> exact, Fallback fallback = {});

    // Exact prompt matches win over substring rules; rules are tried in order.
    void script(std::string prompt, std::string text) { exact_[std::move(prompt)] = std::move(text); }
    void add_rule(std::string contains, std::string text) { rules_.push_back({std::move(contains), std::move(text)}); }
    void set_fallback(Fallback fallback) { fallback_ = std::move(fallback); }
    void set_id(std::string id) { id_ = std::move(id); }

    // Throws UnscriptedPrompt when nothing matches and there is no fallback.
    [[nodiscard]] BackendReply send(const CompletionRequest& request) override;
    [[nodiscard]] std::string id() const override { return id_; }

    // {"responses": {prompt: text}, "rules": [{"contains": s, "text": t}]}
    [[nodiscard]] static MockBackend from_json(const nlohmann::json& script);

private:
    std::map<std::string, std::string> exact_;
    std::vector<Rule> rules_;
    Fallback fallback_;
    std::string id_ = "mock";
};

// Fallback that imitates all three generation stages well enough to drive the
// pipeline end to end: discovery triples, premise continuations and
// hypothesis/label continuations, chosen from the shape of the prompt tail.
struct SyntheticGeneratorOptions {
    // Indexed by Label (entailment, contradiction, neutral).
    std::array<double, 3> label_weights{1.0, 1.0, 1.0};
    // Probability that a hypothesis completion is malformed.
    double malformed_rate = 0.0;
    std::size_t short_words = 21;
    std::size_t paragraph_words = 60;
    std::size_t word_jitter = 3;
    std::size_t hypothesis_words = 10;
    // Domains emitted by discovery completions with their weights.
    std::vector<std::pair<std::string, double>> discovery_domains;
};

[[nodiscard]] MockBackend::Fallback synthetic_generator(SyntheticGeneratorOptions options = {});

}  // namespace nliforge::llm
