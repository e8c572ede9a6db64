#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nliforge/corpus.hpp"
#include "nliforge/gateway.hpp"
#include "nliforge/premise_forge.hpp"

namespace nliforge::labeler {

// Task description with MNLI-style definitions of the three labels.
extern const char* const kDefaultInstruction;

// Discard rates at or above this raise a warning.
inline constexpr double kExpectedMaxDiscardRate = 0.01;

enum class DiscardReason { misformatted, unknown_label };

[[nodiscard]] std::string_view to_string(DiscardReason reason);

struct LabelerOutput {
    std::string premise_id;
    std::string raw_completion;
    std::optional<std::pair<std::string, Label>> parsed;
    std::optional<DiscardReason> discard_reason;
};

// instruction, blank line, "premise: {P}", newline, "hypothesis: {".
// Throws std::invalid_argument on an empty premise or one containing '}'.
[[nodiscard]] std::string build_labeler_input(const std::string& instruction, const std::string& premise);

struct ParseResult {
    std::optional<std::pair<std::string, Label>> parsed;
    std::optional<DiscardReason> discard;
};

// Parses "hypothesis: {H} label: {L}". A hypothesis that is empty after
// trimming counts as misformatted; a label outside the three canonical names
// (case-insensitive) is unknown_label.
[[nodiscard]] ParseResult parse_labeler_output(std::string_view raw);

struct LabelingOptions {
    std::string instruction = kDefaultInstruction;
    double temperature = 0.0;
    int max_output_tokens = 512;
    std::uint64_t seed = 0;
};

struct TransportFailure {
    std::string premise_id;
    std::string error;
};

struct LabelingResult {
    std::vector<NliExample> examples;     // input premise order, split=unassigned
    std::vector<LabelerOutput> discards;  // parsed is empty, discard_reason set
    std::vector<TransportFailure> transport_failures;
    std::size_t requested = 0;
    double discard_rate = 0.0;  // discards / completions received
    bool warning = false;       // discard_rate >= kExpectedMaxDiscardRate
    std::string warning_message;

    [[nodiscard]] nlohmann::ordered_json summary_json() const;
};

// One completion per premise, no retries on malformed output. The completion
// is read as the continuation of the open "hypothesis: {" cue.
[[nodiscard]] LabelingResult label_premises(llm::Gateway& gateway, std::span<const premises::Premise> premises,
                                            const LabelingOptions& options = {});

// Discard log: one JSON object per line with premise_id, raw, reason.
void write_discard_log(std::span<const LabelerOutput> discards, const std::filesystem::path& path);

}  // namespace nliforge::labeler
