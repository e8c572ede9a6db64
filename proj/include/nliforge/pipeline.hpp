#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nliforge/assembler.hpp"
#include "nliforge/gateway.hpp"

namespace nliforge::pipeline {

struct BackendConfig {
    // "mock", "mock:<script.json>" or an http(s) completion URL.
    std::string endpoint = "mock";
    llm::GatewayPolicy policy;
    // Synthetic mock only.
    double mock_malformed_rate = 0.0;
};

struct PipelineConfig {
    BackendConfig backend;
    std::filesystem::path seeds;  // empty: built-in seed triples
    // "builtin", a roster file, or empty for <output_dir>/roster.json.
    std::string roster;
    std::size_t discovery_samples = 1000;
    std::vector<std::string> discovery_include;
    std::vector<std::string> discovery_exclude;
    double discovery_temperature = 1.0;
    std::size_t per_cell = 1;
    double premise_temperature = 1.0;
    int premise_max_attempts = 5;
    double labeling_temperature = 0.0;
    assembly::SplitSpec split;
    assembly::BalanceTolerances balance;
    assembly::AblationSpec ablation;
    std::size_t ablation_divisor = 1;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;

    // Throws std::invalid_argument on out-of-range values or a referenced
    // path that does not exist.
    void validate() const;
    // Everything except output_dir, so reruns into another directory match.
    [[nodiscard]] nlohmann::ordered_json to_json() const;

    // TOML subset: top-level keys plus [backend], [discovery], [premises],
    // [labeling], [split], [balance], [ablation] tables. Unknown keys throw.
    [[nodiscard]] static PipelineConfig from_toml(const std::string& text);
    [[nodiscard]] static PipelineConfig load(const std::filesystem::path& path);
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DependencyError : public std::runtime_error {
public:
    DependencyError(std::string required_stage, const std::filesystem::path& missing)
        : std::runtime_error("missing " + missing.string() + "; run `" + required_stage + "` first"),
          required_stage_(std::move(required_stage)) {}
    [[nodiscard]] const std::string& required_stage() const { return required_stage_; }

private:
    std::string required_stage_;
};

[[nodiscard]] std::string sha256_hex(std::string_view data);
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

[[nodiscard]] std::shared_ptr<llm::Backend> make_backend(const BackendConfig& config);

// Artifact names, relative to the output directory.
namespace artifacts {
inline constexpr const char* kDomainSamples = "domain_samples.jsonl";
inline constexpr const char* kDiscoveryFailures = "discovery_failures.jsonl";
inline constexpr const char* kDomainTally = "domain_tally.json";
inline constexpr const char* kRosterCandidates = "roster.candidates.json";
inline constexpr const char* kRoster = "roster.json";
inline constexpr const char* kPremises = "premises.jsonl";
inline constexpr const char* kPremiseReport = "premise_report.json";
inline constexpr const char* kLabeled = "labeled.jsonl";
inline constexpr const char* kDiscards = "discards.jsonl";
inline constexpr const char* kLabeling = "labeling.json";
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kBalance = "balance.json";
inline constexpr const char* kAblationDir = "ablation";
}  // namespace artifacts

struct StageResult {
    std::string stage;
    std::filesystem::path manifest_path;
    nlohmann::ordered_json manifest;
    std::vector<std::string> warnings;
};

[[nodiscard]] const std::vector<std::string>& stage_names();

class Pipeline {
public:
    // A null backend is built from the config. The mock backends run on a
    // virtual clock so rate limiting and backoff never sleep.
    explicit Pipeline(PipelineConfig config, std::shared_ptr<llm::Backend> backend = nullptr);

    StageResult discover_domains(bool write_roster = false);
    StageResult gen_premises();
    StageResult gen_hypotheses();
    StageResult assemble();
    StageResult ablate_split();
    // By stage name; throws std::invalid_argument for an unknown one.
    StageResult run(const std::string& stage);

    [[nodiscard]] const PipelineConfig& config() const { return config_; }
    [[nodiscard]] std::filesystem::path out(const std::string& name) const { return config_.output_dir / name; }

private:
    [[nodiscard]] std::unique_ptr<llm::Gateway> make_gateway(const std::string& stage) const;
    [[nodiscard]] DomainRoster resolve_roster(nlohmann::ordered_json& inputs) const;
    StageResult finish(const std::string& stage, nlohmann::ordered_json inputs, const std::vector<std::string>& outputs,
                       nlohmann::ordered_json counts, std::vector<std::string> warnings) const;

    PipelineConfig config_;
    std::shared_ptr<llm::Backend> backend_;
    bool virtual_time_ = false;
};

}  // namespace nliforge::pipeline
