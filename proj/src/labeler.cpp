#include "nliforge/labeler.hpp"

#include <cstdio>

#include "nliforge/brace_format.hpp"
#include "nliforge/parallel.hpp"
#include "nliforge/text.hpp"

namespace nliforge::labeler {

const char* const kDefaultInstruction =
    "Read the premise and write a hypothesis about it, then give the label that describes how the hypothesis "
    "relates to the premise. Judge the hypothesis against the premise only, not against background knowledge.\n"
    "entailment: the hypothesis is definitely true given the premise.\n"
    "contradiction: the hypothesis is definitely false given the premise.\n"
    "neutral: the hypothesis might be true or might be false given the premise.\n"
    "Answer in the format hypothesis: {...} label: {entailment, contradiction or neutral}.";

std::string_view to_string(DiscardReason reason) {
    switch (reason) {
        case DiscardReason::misformatted: return "misformatted";
        case DiscardReason::unknown_label: return "unknown_label";
    }
    return "unknown";
}

std::string build_labeler_input(const std::string& instruction, const std::string& premise) {
    if (trim(premise).empty()) throw std::invalid_argument("premise is empty");
    if (!brace::is_brace_safe(premise)) throw std::invalid_argument("premise contains '}'");
    std::string prompt;
    if (!instruction.empty()) {
        prompt += instruction;
        prompt += "\n\n";
    }
    prompt += brace::render_field("premise", premise);
    prompt += '\n';
    prompt += brace::open_field("hypothesis");
    return prompt;
}

ParseResult parse_labeler_output(std::string_view raw) {
    auto hyp = brace::extract_field(raw, "hypothesis");
    if (!hyp || trim(hyp->value).empty()) return {std::nullopt, DiscardReason::misformatted};
    auto label_field = brace::extract_field(raw, "label", hyp->end);
    if (!label_field) return {std::nullopt, DiscardReason::misformatted};
    auto label = parse_label(label_field->value);
    if (!label) return {std::nullopt, DiscardReason::unknown_label};
    return {std::make_pair(trim(hyp->value), *label), std::nullopt};
}

nlohmann::ordered_json LabelingResult::summary_json() const {
    nlohmann::ordered_json j;
    j["requested"] = requested;
    j["examples"] = examples.size();
    j["discarded"] = discards.size();
    j["transport_failures"] = transport_failures.size();
    j["discard_rate"] = discard_rate;
    j["expected_max_discard_rate"] = kExpectedMaxDiscardRate;
    j["warning"] = warning;
    if (warning) j["warning_message"] = warning_message;
    nlohmann::ordered_json reasons = nlohmann::ordered_json::object();
    for (const auto& d : discards) {
        const std::string key(to_string(*d.discard_reason));
        reasons[key] = reasons.value(key, 0) + 1;
    }
    j["discard_reasons"] = reasons;
    return j;
}

LabelingResult label_premises(llm::Gateway& gateway, std::span<const premises::Premise> premises,
                              const LabelingOptions& options) {
    LabelingResult result;
    result.requested = premises.size();

    struct Slot {
        std::optional<std::string> completion;
        std::string error;
    };
    std::vector<Slot> slots(premises.size());
    parallel_for(premises.size(), gateway.max_in_flight(), [&](std::size_t i) {
        llm::CompletionRequest req;
        req.prompt = build_labeler_input(options.instruction, premises[i].text);
        req.temperature = options.temperature;
        req.max_output_tokens = options.max_output_tokens;
        req.seed = combine_seed(options.seed, fnv1a64(premises[i].id));
        try {
            slots[i].completion = gateway.complete(req).text;
        } catch (const llm::TransportError& e) {
            slots[i].error = e.what();
        } catch (const llm::BackendError& e) {
            slots[i].error = e.what();
        }
    });

    std::size_t received = 0;
    const std::string cue = brace::open_field("hypothesis");
    for (std::size_t i = 0; i < premises.size(); ++i) {
        const auto& premise = premises[i];
        if (!slots[i].completion) {
            result.transport_failures.push_back({premise.id, std::move(slots[i].error)});
            continue;
        }
        ++received;
        std::string& raw = *slots[i].completion;
        const ParseResult parsed = parse_labeler_output(cue + raw);
        if (!parsed.parsed) {
            result.discards.push_back(LabelerOutput{premise.id, std::move(raw), std::nullopt, parsed.discard});
            continue;
        }
        NliExample ex;
        ex.id = premise.id;
        ex.domain = premise.domain;
        ex.length = premise.length;
        ex.premise = premise.text;
        ex.hypothesis = parsed.parsed->first;
        ex.label = parsed.parsed->second;
        ex.split = Split::unassigned;
        result.examples.push_back(std::move(ex));
    }
    result.discard_rate = received ? static_cast<double>(result.discards.size()) / static_cast<double>(received) : 0.0;
    if (result.discard_rate >= kExpectedMaxDiscardRate) {
        result.warning = true;
        char buf[160];
        std::snprintf(buf, sizeof buf, "discard rate %.2f%% is not below the expected <%.0f%% of generated outputs",
                      result.discard_rate * 100.0, kExpectedMaxDiscardRate * 100.0);
        result.warning_message = buf;
    }
    return result;
}

void write_discard_log(std::span<const LabelerOutput> discards, const std::filesystem::path& path) {
    std::string out;
    for (const auto& d : discards) {
        nlohmann::ordered_json j;
        j["premise_id"] = d.premise_id;
        j["raw"] = d.raw_completion;
        j["reason"] = d.discard_reason ? to_string(*d.discard_reason) : "unknown";
        out += j.dump() + "\n";
    }
    write_file(path, out);
}

}  // namespace nliforge::labeler
