#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nliforge/corpus.hpp"
#include "nliforge/gateway.hpp"

namespace nliforge::discovery {

struct SeedTriple {
    std::string domain;
    LengthCategory length = LengthCategory::short_text;
    std::string text;

    bool operator==(const SeedTriple&) const = default;
};

// Neutral description of the triple format placed above the few-shot block.
extern const char* const kDefaultInstruction;

// The 18 in-prompt examples drawn from 8 seed domains.
[[nodiscard]] const std::vector<SeedTriple>& default_seeds();

// Distinct normalized domains of `seeds`, in first-occurrence order.
[[nodiscard]] std::vector<std::string> seed_domains(std::span<const SeedTriple> seeds);

// "domain: {D} length: {L} text: {T}". Throws std::invalid_argument if any
// field contains '}'.
[[nodiscard]] std::string render_triple(const SeedTriple& triple);

// Instruction, blank line, then one rendered triple per line. Throws
// std::invalid_argument on an empty seed list or a seed containing '}'.
[[nodiscard]] std::string build_discovery_prompt(std::span<const SeedTriple> seeds,
                                                 const std::string& instruction = kDefaultInstruction);

enum class ParseFailure { missing_domain, missing_length, missing_text, unknown_length, empty_field };

[[nodiscard]] std::string_view to_string(ParseFailure failure);

struct ParsedTriple {
    std::optional<SeedTriple> triple;
    std::optional<ParseFailure> failure;
};

// Extracts the domain, length and text fields, in that order. Field values
// are taken verbatim (no trimming) so parse(render(t)) == t.
[[nodiscard]] ParsedTriple parse_triple(std::string_view completion);

struct SampleFailure {
    std::size_t index = 0;
    std::string raw;
    ParseFailure reason = ParseFailure::missing_domain;
};

struct DiscoverySample {
    std::vector<SeedTriple> triples;  // in sample-index order
    std::vector<SampleFailure> failures;
};

struct SamplingOptions {
    std::size_t n = 1000;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    int max_output_tokens = 512;
    std::string instruction = kDefaultInstruction;
};

// Issues `n` completions of the discovery prompt. Unparseable completions are
// logged in `failures`; transport errors propagate.
[[nodiscard]] DiscoverySample sample_domain_triples(llm::Gateway& gateway, std::span<const SeedTriple> seeds,
                                                    const SamplingOptions& options);

struct DomainTally {
    std::map<std::string, std::size_t> counts;  // normalized name -> occurrences
    std::set<std::string> novel;                // names not among the seed domains
    std::vector<std::string> seed_domains;      // normalized

    [[nodiscard]] bool is_novel(const std::string& name) const { return novel.count(name) != 0; }
};

[[nodiscard]] DomainTally tally_domains(std::span<const SeedTriple> triples,
                                        std::span<const std::string> seed_domains);

struct CuratedRoster {
    DomainRoster roster;
    // name -> subset of {"seed", "tally", "include"}
    std::map<std::string, std::set<std::string>> provenance;
};

// (tally ∪ include ∪ seed domains) minus exclude, deduplicated and sorted.
// Throws std::invalid_argument when include and exclude overlap or the
// result is empty.
[[nodiscard]] CuratedRoster curate_roster(const DomainTally& tally, std::span<const std::string> include,
                                          std::span<const std::string> exclude);

[[nodiscard]] nlohmann::ordered_json roster_to_json(const CuratedRoster& curated);
void write_roster_file(const CuratedRoster& curated, const std::filesystem::path& path);
// Accepts the provenance-annotated form or a plain JSON list of names.
[[nodiscard]] DomainRoster read_roster_file(const std::filesystem::path& path);

// Seed file: one JSON object per line with keys domain, length, text.
[[nodiscard]] std::vector<SeedTriple> read_seed_file(const std::filesystem::path& path);
void write_seed_file(std::span<const SeedTriple> seeds, const std::filesystem::path& path);

}  // namespace nliforge::discovery
