#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nliforge/assembler.hpp"
#include "nliforge/corpus.hpp"

namespace nliforge::eval {

// Probabilities indexed by Label (entailment, contradiction, neutral).
using Distribution = std::array<double, 3>;

class ScorerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Throws ScorerError unless every entry is finite and >= 0 and the sum is
// within 1e-6 of 1.
void validate_distribution(const Distribution& d);

struct ScorePair {
    std::string premise;
    std::string hypothesis;
};

class Scorer {
public:
    virtual ~Scorer() = default;
    [[nodiscard]] virtual Distribution score(const std::string& premise, const std::string& hypothesis) = 0;
    // Default: one score() call per pair.
    [[nodiscard]] virtual std::vector<Distribution> score_batch(std::span<const ScorePair> pairs);
    [[nodiscard]] virtual std::string id() const = 0;
};

// Adapts a plain function.
class FunctionScorer final : public Scorer {
public:
    using Fn = std::function<Distribution(const std::string&, const std::string&)>;
    FunctionScorer(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
    Distribution score(const std::string& p, const std::string& h) override { return fn_(p, h); }
    std::string id() const override { return id_; }

private:
    std::string id_;
    Fn fn_;
};

// Remote scorer. Single pairs are sent as {premise, hypothesis}; batches as a
// JSON array of those. Replies are {entailment, contradiction, neutral} or an
// array of them.
class HttpScorer final : public Scorer {
public:
    explicit HttpScorer(std::string url, std::size_t batch_size = 16,
                        std::chrono::milliseconds timeout = std::chrono::seconds(60));
    Distribution score(const std::string& premise, const std::string& hypothesis) override;
    std::vector<Distribution> score_batch(std::span<const ScorePair> pairs) override;
    std::string id() const override { return url_; }
    [[nodiscard]] std::size_t batch_size() const { return batch_size_; }

private:
    [[nodiscard]] nlohmann::json post(const nlohmann::json& body) const;
    std::string url_;
    std::size_t batch_size_;
    std::chrono::milliseconds timeout_;
};

enum class Binary : std::uint8_t { negative = 0, positive = 1 };

// entailment -> positive; neutral, contradiction -> negative.
[[nodiscard]] constexpr Binary to_binary(Label label) {
    return label == Label::entailment ? Binary::positive : Binary::negative;
}

struct AucResult {
    double auc = 0.5;
    bool all_ties = false;  // every score equal
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

// Mann-Whitney AUC via midranks: ties between a positive and a negative
// count one half. Throws std::invalid_argument("undefined AUC ...") unless
// both classes are present, and on a size mismatch or a NaN score.
[[nodiscard]] AucResult roc_auc(std::span<const double> scores, std::span<const Binary> gold);

struct EvalInstance {
    std::string id;
    std::string task;
    std::string grounding;
    std::string claim;
    Binary gold = Binary::negative;
};

struct Exclusion {
    std::string id;
    std::string error;
};

struct EvalOptions {
    std::size_t max_in_flight = 4;
    std::size_t batch_size = 16;
    // Grounding texts longer than this many words are cut; 0 disables.
    std::size_t max_grounding_words = 1024;
};

struct Truncation {
    std::string text;
    bool truncated = false;
};

// First `max_words` whitespace-separated words, joined by single spaces, when
// the text is longer; otherwise the text unchanged.
[[nodiscard]] Truncation truncate_words(const std::string& text, std::size_t max_words);

struct BinaryTaskResult {
    std::string task;
    AucResult auc;
    std::size_t instances = 0;  // scored
    std::size_t truncated = 0;
    std::vector<Exclusion> exclusions;
    std::vector<double> scores;  // P(entailment), aligned with the scored instances
};

// Score = the scorer's entailment probability. Scorer failures (exceptions or
// invalid distributions) exclude the instance and are reported. Throws
// std::invalid_argument on empty input or when the scored set lacks a class.
[[nodiscard]] BinaryTaskResult evaluate_binary_task(Scorer& scorer, std::span<const EvalInstance> instances,
                                                    const EvalOptions& options = {});

// Argmax with ties going to the earlier label (entailment < contradiction <
// neutral). `tie` is set when the maximum is shared.
[[nodiscard]] Label argmax_label(const Distribution& d, bool* tie = nullptr);

struct ThreeWayResult {
    double accuracy = 0.0;
    std::size_t instances = 0;  // scored
    std::size_t correct = 0;
    std::size_t ties = 0;
    std::size_t truncated = 0;
    std::array<std::array<std::size_t, 3>, 3> confusion{};  // [gold][predicted]
    std::vector<Exclusion> exclusions;
    std::vector<std::string> tied_ids;
};

[[nodiscard]] ThreeWayResult evaluate_3way(Scorer& scorer, std::span<const NliExample> corpus,
                                           const EvalOptions& options = {});

// ---------------------------------------------------------------------------
// Reports

struct TaskScore {
    std::string task;
    std::string metric;  // "auc" or "accuracy"
    double value = 0.0;
    std::size_t instances = 0;
    std::size_t excluded = 0;
    std::size_t truncated = 0;
    bool all_ties = false;
};

struct EvalReport {
    std::string scorer_id;
    std::vector<TaskScore> tasks;
    double macro_average = 0.0;
    std::size_t instances = 0;
    nlohmann::ordered_json config;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
    // Tasks as columns, average last; values as percentages.
    [[nodiscard]] std::string format_table() const;
};

[[nodiscard]] TaskScore task_score(const BinaryTaskResult& r);
[[nodiscard]] TaskScore task_score(const std::string& task, const ThreeWayResult& r);
[[nodiscard]] EvalReport make_report(std::string scorer_id, std::vector<TaskScore> tasks,
                                     nlohmann::ordered_json config = nlohmann::ordered_json::object());

// ---------------------------------------------------------------------------
// Learning-curve ablation

struct EvalSet {
    std::string name;
    // Exactly one of these is used: binary instances give AUC, an NLI corpus
    // gives accuracy.
    std::vector<EvalInstance> binary;
    Corpus nli;
};

// Produces a scorer for a training subset (for example by launching a remote
// training job). Throwing marks that size as failed.
using ScorerFactory = std::function<std::shared_ptr<Scorer>(const assembly::Subset&)>;

struct CurveRow {
    std::size_t size = 0;
    std::string eval_set;
    std::string metric;
    std::optional<double> value;
    bool failed = false;
    std::string error;
};

// One row per (subset, eval set), ordered by subset then eval set. Throws
// std::invalid_argument when the subsets are not nested by increasing size.
[[nodiscard]] std::vector<CurveRow> run_ablation(const ScorerFactory& factory,
                                                 std::span<const assembly::Subset> subsets,
                                                 std::span<const EvalSet> eval_sets, const EvalOptions& options = {});

[[nodiscard]] nlohmann::ordered_json curve_to_json(std::span<const CurveRow> rows);
// Tab-separated size, eval_set, metric, value ("failed" when failed).
[[nodiscard]] std::string format_curve_tsv(std::span<const CurveRow> rows);

// ---------------------------------------------------------------------------
// Ingesting binary factual-consistency files

struct TaskAdapter {
    std::string name;
    std::string grounding_column = "grounding";
    std::string claim_column = "generated_text";
    std::string label_column = "label";
    std::string id_column;  // empty: ids are "<task>-<row>"
    // Lower-cased label text -> class.
    std::map<std::string, Binary> label_map{{"1", Binary::positive}, {"0", Binary::negative}};
    // 0 infers from the extension: ".tsv" tab, otherwise comma.
    char delimiter = 0;
};

// "true": label 1/0. "consistency": label consistent/inconsistent.
[[nodiscard]] TaskAdapter builtin_adapter(const std::string& name);

struct IngestResult {
    std::vector<EvalInstance> instances;
    std::size_t rows = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

// Throws std::runtime_error naming a missing column, on an empty file, or on
// a label outside the adapter's map (with the row number).
[[nodiscard]] IngestResult ingest_true_task(const std::filesystem::path& path, const TaskAdapter& adapter,
                                            const std::string& task_name = "");

// RFC 4180-style rows: quoted fields may hold delimiters, doubled quotes and
// newlines. Exposed for testing.
[[nodiscard]] std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter);

}  // namespace nliforge::eval
