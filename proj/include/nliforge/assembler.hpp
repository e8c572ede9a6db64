#pragma once

#include <cstdint>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nliforge/corpus.hpp"

namespace nliforge::assembly {

enum class StratumKey { label, domain, length };

[[nodiscard]] std::string_view to_string(StratumKey key);
[[nodiscard]] std::optional<StratumKey> parse_stratum_key(std::string_view text);

struct SplitSpec {
    std::size_t holdout_count = 500;
    // Fractions of what remains after the holdout; the draw size is
    // ceil(fraction * remainder).
    double dev_fraction = 0.01;
    double test_fraction = 0.01;
    std::uint64_t seed = 0;
    std::set<StratumKey> stratify_by{StratumKey::label};

    // Throws std::invalid_argument when a fraction is outside (0,1) or the
    // fractions sum to 1 or more.
    void validate() const;
    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

// Largest-remainder apportionment of `total` draws over strata with the given
// sizes: every stratum gets floor or ceil of its exact proportional share.
// Ties in the remainder go to the earlier stratum.
[[nodiscard]] std::vector<std::size_t> apportion(std::span<const std::size_t> stratum_sizes, std::size_t total);

// Stratum key of an example as a printable string, e.g. "entailment|news".
[[nodiscard]] std::string stratum_of(const NliExample& example, const std::set<StratumKey>& keys);

struct SplitSizes {
    std::size_t holdout = 0;
    std::size_t dev = 0;
    std::size_t test = 0;
    std::size_t train = 0;
};

// Split sizes assemble() would produce for a corpus of `total` examples.
[[nodiscard]] SplitSizes plan_split_sizes(std::size_t total, const SplitSpec& spec);

struct AssemblyResult {
    Corpus corpus;  // input order, split assigned
    std::map<Split, std::size_t> sizes;
};

// Draws the holdout first, then dev and test from the remainder; train is
// what is left. Throws std::invalid_argument when the corpus is smaller than
// the holdout or an example is already assigned.
[[nodiscard]] AssemblyResult assemble(std::span<const NliExample> examples, const SplitSpec& spec);

struct BalanceTolerances {
    // Maximum |fraction - 1/3| per label.
    double label = 0.05;
    // Per-(domain, length) count must lie within expected * (1 ± cell); the
    // expected count is the roster quota or, without one, the mean cell size.
    double cell = 0.05;
};

struct SplitBalance {
    std::string name;  // split name, or "all"
    std::size_t size = 0;
    std::array<std::size_t, 3> label_counts{};
    std::array<double, 3> label_fractions{};
    std::vector<std::string> flags;
};

struct BalanceReport {
    std::vector<SplitBalance> splits;  // one per split present, plus an "all" entry first
    std::map<std::pair<std::string, LengthCategory>, std::size_t> cell_counts;
    std::vector<std::string> cell_flags;
    double max_label_deviation = 0.0;

    [[nodiscard]] bool pass() const;
    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

[[nodiscard]] BalanceReport verify_balance(std::span<const NliExample> corpus, const BalanceTolerances& tolerances = {},
                                           const DomainRoster* roster = nullptr);

// Label-level variant for count-only fixtures.
[[nodiscard]] SplitBalance label_balance(const std::array<std::size_t, 3>& label_counts, double tolerance);

struct AblationSpec {
    std::vector<std::size_t> sizes{1000, 2000, 5000, 10000, 50000, 100000, 300000, 392000, 671000};
    std::uint64_t seed = 0;

    // Throws std::invalid_argument unless sizes are non-empty, positive and
    // strictly increasing.
    void validate() const;
    [[nodiscard]] static AblationSpec scaled(std::size_t divisor, std::uint64_t seed = 0);
};

struct Subset {
    std::size_t size = 0;
    Corpus examples;
};

// Nested label-stratified subsets: subset i is a prefix of one stratified
// ordering of the train split, so ids(subset_i) ⊆ ids(subset_j) for i < j and
// every prefix stays within one example of proportional per label.
[[nodiscard]] std::vector<Subset> subsample_nested(std::span<const NliExample> train, const AblationSpec& spec);

// The stratified ordering used by subsample_nested, truncated to `count`.
[[nodiscard]] std::vector<std::size_t> stratified_order(std::span<const NliExample> examples, std::size_t count,
                                                        std::uint64_t seed);

}  // namespace nliforge::assembly
