#include "nliforge/mock_backend.hpp"

#include <string_view>

#include "nliforge/brace_format.hpp"
#include "nliforge/text.hpp"

namespace nliforge::llm {

MockBackend::MockBackend(std::map<std::string, std::string> exact, Fallback fallback)
    : exact_(std::move(exact)), fallback_(std::move(fallback)) {}

BackendReply MockBackend::send(const CompletionRequest& request) {
    if (auto it = exact_.find(request.prompt); it != exact_.end()) {
        return BackendReply{200, it->second, nlohmann::json{{"text", it->second}}, {}};
    }
    for (const auto& rule : rules_) {
        if (request.prompt.find(rule.contains) != std::string::npos) {
            return BackendReply{200, rule.text, nlohmann::json{{"text", rule.text}}, {}};
        }
    }
    if (!fallback_) throw UnscriptedPrompt();
    std::mt19937_64 rng(combine_seed(fnv1a64(request.prompt), request.seed.value_or(0)));
    std::string text = fallback_(request, rng);
    nlohmann::json raw{{"text", text}};
    return BackendReply{200, std::move(text), std::move(raw), {}};
}

MockBackend MockBackend::from_json(const nlohmann::json& script) {
    MockBackend backend;
    if (script.contains("responses")) {
        for (const auto& [prompt, text] : script.at("responses").items()) {
            backend.script(prompt, text.get<std::string>());
        }
    }
    if (script.contains("rules")) {
        for (const auto& rule : script.at("rules")) {
            backend.add_rule(rule.at("contains").get<std::string>(), rule.at("text").get<std::string>());
        }
    }
    return backend;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 48> kVocabulary{
    "the",     "river",   "market",  "quietly", "bright",  "station", "yesterday", "morning", "report",  "garden",
    "old",     "signal",  "coffee",  "bridge",  "team",    "window",  "battery",   "season",  "local",   "shared",
    "quick",   "story",   "price",   "weekend", "review",  "doctor",  "recipe",    "music",   "council", "forest",
    "light",   "screen",  "student", "answer",  "city",    "train",   "summer",    "late",    "simple",  "crowd",
    "ticket",  "friend",  "office",  "rain",    "ocean",   "dinner",  "update",    "letter",
};

constexpr std::array<std::string_view, 3> kLabelNames{"entailment", "contradiction", "neutral"};

std::string random_sentence(std::mt19937_64& rng, std::size_t words) {
    std::uniform_int_distribution<std::size_t> pick(0, kVocabulary.size() - 1);
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
        if (i) out.push_back(' ');
        std::string word(kVocabulary[pick(rng)]);
        if (i == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
        out += word;
    }
    out.push_back('.');
    return out;
}

std::size_t jittered(std::mt19937_64& rng, std::size_t base, std::size_t jitter) {
    if (jitter == 0 || base <= jitter) return std::max<std::size_t>(base, 1);
    std::uniform_int_distribution<std::size_t> d(base - jitter, base + jitter);
    return d(rng);
}

// Value of the last `name: {...}` field in the prompt, if any.
std::string last_field(const std::string& prompt, std::string_view name) {
    std::string value;
    std::size_t from = 0;
    while (auto m = brace::extract_field(prompt, name, from)) {
        value = m->value;
        from = m->end;
    }
    return value;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

MockBackend::Fallback synthetic_generator(SyntheticGeneratorOptions options) {
    if (options.discovery_domains.empty()) {
        options.discovery_domains = {{"travel forums", 3.0}, {"us travel forums", 1.0}, {"quora", 2.0},
                                     {"recipe", 2.0},        {"news", 2.0},             {"song lyrics", 1.0}};
    }
    return [opts = std::move(options)](const CompletionRequest& request, std::mt19937_64& rng) -> std::string {
        const std::string& prompt = request.prompt;

        if (ends_with(prompt, brace::open_field("hypothesis"))) {
            std::bernoulli_distribution malformed(opts.malformed_rate);
            std::discrete_distribution<std::size_t> label(opts.label_weights.begin(), opts.label_weights.end());
            const bool broken = malformed(rng);
            const std::size_t which = label(rng);
            std::string hyp = random_sentence(rng, jittered(rng, opts.hypothesis_words, 2));
            if (broken) return hyp;  // never closed
            return hyp + "} " + brace::render_field("label", kLabelNames[which]);
        }

        if (ends_with(prompt, brace::open_field("text"))) {
            const std::string length = last_field(prompt, "length");
            const std::size_t base = length == "paragraph" ? opts.paragraph_words : opts.short_words;
            std::string text = random_sentence(rng, jittered(rng, base, opts.word_jitter));
            return text + "} " + brace::open_field("domain");
        }

        std::vector<double> weights;
        for (const auto& [_, w] : opts.discovery_domains) weights.push_back(w);
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        const std::string& domain = opts.discovery_domains[pick(rng)].first;
        const bool paragraph = std::bernoulli_distribution(0.5)(rng);
        std::string text = random_sentence(rng, jittered(rng, paragraph ? opts.paragraph_words : opts.short_words,
                                                         opts.word_jitter));
        return brace::render_field("domain", domain) + " " +
               brace::render_field("length", paragraph ? "paragraph" : "short") + " " +
               brace::render_field("text", text);
    };
}

}  // namespace nliforge::llm
