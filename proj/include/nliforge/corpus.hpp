#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace nliforge {

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

// Declaration order is also the tie-break order used by argmax predictions.
enum class Label : std::uint8_t { entailment = 0, contradiction = 1, neutral = 2 };

inline constexpr std::array<Label, 3> kAllLabels{Label::entailment, Label::contradiction, Label::neutral};

enum class LengthCategory : std::uint8_t { short_text = 0, paragraph = 1 };

inline constexpr std::array<LengthCategory, 2> kAllLengths{LengthCategory::short_text, LengthCategory::paragraph};

enum class Split : std::uint8_t { train, dev, test, human_holdout, unassigned };

inline constexpr std::array<Split, 5> kAllSplits{Split::train, Split::dev, Split::test, Split::human_holdout,
                                                 Split::unassigned};

[[nodiscard]] std::string_view to_string(Label label);
[[nodiscard]] std::string_view to_string(LengthCategory length);
[[nodiscard]] std::string_view to_string(Split split);

// Case-insensitive, surrounding whitespace ignored.
[[nodiscard]] std::optional<Label> parse_label(std::string_view text);
[[nodiscard]] std::optional<LengthCategory> parse_length(std::string_view text);
[[nodiscard]] std::optional<Split> parse_split(std::string_view text);

[[nodiscard]] inline std::size_t index_of(Label l) { return static_cast<std::size_t>(l); }
[[nodiscard]] inline std::size_t index_of(LengthCategory l) { return static_cast<std::size_t>(l); }

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct NliExample {
    std::string id;
    std::string domain;
    LengthCategory length = LengthCategory::short_text;
    std::string premise;
    std::string hypothesis;
    Label label = Label::entailment;
    Split split = Split::unassigned;

    bool operator==(const NliExample&) const = default;
};

using Corpus = std::vector<NliExample>;

class DomainRoster {
public:
    DomainRoster() = default;
    // Names are normalized; throws std::invalid_argument on a duplicate after
    // normalization or on an empty name.
    explicit DomainRoster(std::vector<std::string> names);

    // The 38 curated domains, alphabetically ordered.
    [[nodiscard]] static DomainRoster default_roster();

    [[nodiscard]] const std::vector<std::string>& names() const { return names_; }
    [[nodiscard]] std::size_t size() const { return names_.size(); }
    [[nodiscard]] bool empty() const { return names_.empty(); }
    [[nodiscard]] bool contains(std::string_view name) const;

    void set_quota(const std::string& domain, LengthCategory length, std::size_t quota);
    [[nodiscard]] std::optional<std::size_t> quota(const std::string& domain, LengthCategory length) const;

    bool operator==(const DomainRoster&) const = default;

private:
    std::vector<std::string> names_;
    std::map<std::pair<std::string, LengthCategory>, std::size_t> quotas_;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct ValidationReport {
    std::vector<std::string> violations;
    [[nodiscard]] bool ok() const { return violations.empty(); }
};

// Validates a raw record (as read from a line of a corpus file). Reports every
// violation, not only the first.
[[nodiscard]] ValidationReport validate_example(const nlohmann::json& record, const DomainRoster* roster = nullptr);
[[nodiscard]] ValidationReport validate_example(const NliExample& example, const DomainRoster* roster = nullptr);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct CorpusStats {
    std::size_t total = 0;
    std::array<std::size_t, 3> label_counts{};
    std::array<double, 3> label_fractions{};
    std::map<std::string, std::size_t> domain_counts;
    std::array<std::size_t, 2> length_counts{};
    // Indexed by LengthCategory; zero when that category is absent.
    std::array<double, 2> mean_premise_words{};
    std::array<double, 2> mean_hypothesis_words{};

    [[nodiscard]] std::size_t count(Label l) const { return label_counts[index_of(l)]; }
    [[nodiscard]] double fraction(Label l) const { return label_fractions[index_of(l)]; }
};

// Streaming accumulator behind compute_stats; useful when the corpus is too
// large to hold in memory.
class StatsAccumulator {
public:
    void add(const NliExample& example);
    // Adds `n` examples of the given label without text (for count-only fixtures).
    void add_label_count(Label label, std::size_t n);
    [[nodiscard]] std::size_t total() const { return total_; }
    // Throws std::invalid_argument("empty corpus") when nothing was added.
    [[nodiscard]] CorpusStats finish() const;

private:
    std::size_t total_ = 0;
    std::array<std::size_t, 3> labels_{};
    std::map<std::string, std::size_t> domains_;
    std::array<std::size_t, 2> lengths_{};
    std::array<std::size_t, 2> premise_words_{};
    std::array<std::size_t, 2> hypothesis_words_{};
};

[[nodiscard]] CorpusStats compute_stats(std::span<const NliExample> corpus);

// Per-split stats for every split that occurs in the corpus.
[[nodiscard]] std::map<Split, CorpusStats> compute_split_stats(std::span<const NliExample> corpus);

[[nodiscard]] nlohmann::ordered_json stats_to_json(const CorpusStats& stats);

// Human-readable table: one row per split plus an "All" row, in the
// Size / # Labels (E/C/N) layout, followed by label fractions and word means.
[[nodiscard]] std::string format_stats_table(std::span<const NliExample> corpus);

// ---------------------------------------------------------------------------
// Storage (one JSON object per line)
// ---------------------------------------------------------------------------

class CorpusError : public std::runtime_error {
public:
    CorpusError(const std::string& message, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
    [[nodiscard]] std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

[[nodiscard]] nlohmann::ordered_json to_json(const NliExample& example);
// Throws CorpusError listing all violations.
[[nodiscard]] NliExample example_from_json(const nlohmann::json& record, const DomainRoster* roster = nullptr);

[[nodiscard]] std::string serialize_corpus(std::span<const NliExample> corpus);
[[nodiscard]] Corpus parse_corpus(std::string_view contents, const DomainRoster* roster = nullptr);

void write_corpus(std::span<const NliExample> corpus, const std::filesystem::path& path);
[[nodiscard]] Corpus read_corpus(const std::filesystem::path& path, const DomainRoster* roster = nullptr);

// Small helpers shared by all file-producing stages.
[[nodiscard]] std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace nliforge
