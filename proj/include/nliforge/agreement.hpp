#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nliforge/corpus.hpp"

namespace nliforge::annotation {

// Cohen's kappa between two aligned label sequences. Returns 1 when the
// observed agreement is 1. Throws std::invalid_argument on empty input or a
// length mismatch.
[[nodiscard]] double cohen_kappa(std::span<const Label> a, std::span<const Label> b);

struct MajorityResult {
    std::optional<Label> label;
    bool tie = false;  // two or more labels reached the threshold
};

// Label with at least `threshold` votes. Throws std::invalid_argument when
// there are fewer votes than the threshold or the threshold is 0.
[[nodiscard]] MajorityResult majority_label(std::span<const Label> votes, std::size_t threshold = 2);

[[nodiscard]] bool is_unanimous(std::span<const Label> votes);

// (example id, annotator id)
using VoteKey = std::pair<std::string, std::string>;

struct VoteTable {
    std::vector<std::string> example_ids;
    std::vector<std::string> annotators;
    std::map<VoteKey, Label> votes;
    std::size_t threshold = 2;
};

class IncompleteVoting : public std::runtime_error {
public:
    explicit IncompleteVoting(std::vector<VoteKey> missing);
    [[nodiscard]] const std::vector<VoteKey>& missing() const { return missing_; }

private:
    std::vector<VoteKey> missing_;
};

struct PairKappa {
    std::string a;
    std::string b;
    double kappa = 0.0;
};

struct AgreementReport {
    std::size_t examples = 0;
    std::vector<std::string> annotators;
    std::vector<PairKappa> pairwise;
    double average_kappa = 0.0;
    std::map<std::string, Label> majority;  // example id -> majority label
    std::vector<std::string> no_majority;
    std::vector<std::string> ties;
    double majority_coverage = 0.0;
    std::vector<std::string> unanimous;

    // Set only when model labels were supplied.
    std::optional<double> model_accuracy_majority;
    std::optional<double> model_accuracy_unanimous;
    std::optional<double> model_kappa_majority;
    std::optional<double> model_kappa_unanimous;
    std::size_t model_correct_majority = 0;
    std::size_t model_correct_unanimous = 0;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
    // Human-readable summary; kappa shown as a percentage.
    [[nodiscard]] std::string format_text() const;
};

// Throws IncompleteVoting listing every missing (example, annotator) pair,
// and std::invalid_argument when model labels are given for only some
// examples or fewer than two annotators are present.
[[nodiscard]] AgreementReport agreement_report(const VoteTable& table,
                                               const std::map<std::string, Label>& model_labels = {});

}  // namespace nliforge::annotation
