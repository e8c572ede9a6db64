#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nliforge/corpus.hpp"
#include "nliforge/discovery.hpp"
#include "nliforge/gateway.hpp"

namespace nliforge::premises {

struct Premise {
    std::string id;
    std::string domain;
    LengthCategory length = LengthCategory::short_text;
    std::string text;
    int attempt_count = 1;

    bool operator==(const Premise&) const = default;
};

struct PremiseBatchSpec {
    DomainRoster roster = DomainRoster::default_roster();
    std::vector<LengthCategory> lengths{LengthCategory::short_text, LengthCategory::paragraph};
    // Used for cells without a roster quota.
    std::size_t per_cell = 1;
    std::uint64_t seed = 0;
    int max_attempts_per_item = 5;
    double temperature = 1.0;
    int max_output_tokens = 512;
    std::vector<discovery::SeedTriple> seeds = discovery::default_seeds();
    std::string instruction = discovery::kDefaultInstruction;

    // Throws std::invalid_argument on per_cell == 0, empty lengths, an empty
    // roster or max_attempts_per_item < 1.
    void validate() const;
};

// The discovery prompt with the target cell appended and the text field left
// open: "... domain: {D} length: {L} text: {".
[[nodiscard]] std::string build_premise_prompt(const std::string& discovery_prompt, const std::string& domain,
                                               LengthCategory length);

// Output up to the first '}', trimmed. nullopt if that is empty or still holds
// an unmatched '{'.
[[nodiscard]] std::optional<std::string> extract_premise_text(std::string_view completion);

class GenerationError : public std::runtime_error {
public:
    GenerationError(const std::string& what, int attempts) : std::runtime_error(what), attempts_(attempts) {}
    [[nodiscard]] int attempts() const { return attempts_; }

private:
    int attempts_;
};

struct PremiseRequest {
    std::string discovery_prompt;
    std::string domain;
    LengthCategory length = LengthCategory::short_text;
    std::uint64_t seed = 0;
    int max_attempts = 5;
    double temperature = 1.0;
    int max_output_tokens = 512;
};

// Samples until a usable text comes back, drawing a fresh sample (new seed)
// per attempt. Throws GenerationError when attempts run out; the returned
// premise has no id yet.
[[nodiscard]] Premise generate_premise(llm::Gateway& gateway, const PremiseRequest& request);

struct CellReport {
    std::string domain;
    LengthCategory length = LengthCategory::short_text;
    std::size_t target = 0;
    std::size_t produced = 0;
    std::size_t attempts = 0;
    std::vector<std::string> errors;
};

struct GenerationReport {
    std::vector<CellReport> cells;
    std::size_t total_target = 0;
    std::size_t total_produced = 0;

    [[nodiscard]] std::vector<const CellReport*> shortfalls() const;
    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

struct StratifiedResult {
    std::vector<Premise> premises;  // ordered by (roster order, length order, item index)
    GenerationReport report;
};

// Fills every (domain, length) cell to its quota. Failed items are reported
// as shortfalls, never padded.
[[nodiscard]] StratifiedResult generate_stratified(llm::Gateway& gateway, const PremiseBatchSpec& spec);

struct DedupResult {
    std::vector<Premise> premises;
    std::size_t removed = 0;
    std::vector<std::string> removed_ids;
};

// Drops later premises whose text equals an earlier one after lowercasing and
// whitespace collapse.
[[nodiscard]] DedupResult dedup_premises(std::span<const Premise> premises);

struct LengthAudit {
    std::array<std::size_t, 2> counts{};
    std::array<double, 2> mean_words{};  // indexed by LengthCategory
    // Domains whose short mean exceeds their paragraph mean.
    std::vector<std::string> flagged_domains;
    bool warning = false;  // overall short mean > paragraph mean, or any flagged domain

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

[[nodiscard]] LengthAudit audit_lengths(std::span<const Premise> premises);

[[nodiscard]] nlohmann::ordered_json to_json(const Premise& premise);
void write_premises(std::span<const Premise> premises, const std::filesystem::path& path);
[[nodiscard]] std::vector<Premise> read_premises(const std::filesystem::path& path);

}  // namespace nliforge::premises
