#include "nliforge/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "nliforge/discovery.hpp"
#include "nliforge/http_backend.hpp"
#include "nliforge/labeler.hpp"
#include "nliforge/mock_backend.hpp"
#include "nliforge/premise_forge.hpp"
#include "nliforge/text.hpp"

namespace nliforge::pipeline {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Hashing

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Config

namespace {

using Values = std::vector<std::string>;

std::string single(const std::string& key, const Values& v) {
    if (v.size() != 1) throw ConfigError(key + ": expected a single value");
    return v.front();
}

double as_double(const std::string& key, const Values& v) {
    const std::string s = single(key, v);
    try {
        std::size_t used = 0;
        const double d = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: " + s);
    }
}

std::uint64_t as_uint(const std::string& key, const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError(key + ": not a non-negative integer: " + s);
    }
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw ConfigError(key + ": out of range: " + s);
    }
}

std::uint64_t as_uint(const std::string& key, const Values& v) { return as_uint(key, single(key, v)); }

std::vector<std::size_t> as_uints(const std::string& key, const Values& v) {
    std::vector<std::size_t> out;
    for (const auto& s : v) out.push_back(as_uint(key, s));
    return out;
}

}  // namespace

PipelineConfig PipelineConfig::from_toml(const std::string& text) {
    std::istringstream in(text);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }

    PipelineConfig c;
    bool stratify_set = false;
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") continue;
        std::string key;
        for (const auto& p : item.parents) key += p + ".";
        key += item.name;
        const Values& v = item.inputs;

        if (key == "seed") c.seed = as_uint(key, v);
        else if (key == "output_dir") c.output_dir = single(key, v);
        else if (key == "seeds") c.seeds = single(key, v);
        else if (key == "roster") c.roster = single(key, v);
        else if (key == "per_cell") c.per_cell = as_uint(key, v);
        else if (key == "backend.endpoint") c.backend.endpoint = single(key, v);
        else if (key == "backend.max_retries") c.backend.policy.max_retries = static_cast<int>(as_uint(key, v));
        else if (key == "backend.backoff_ms") {
            c.backend.policy.backoff.clear();
            for (auto ms : as_uints(key, v)) c.backend.policy.backoff.emplace_back(ms);
        } else if (key == "backend.rate_limit_requests") c.backend.policy.rate_limit_requests = as_uint(key, v);
        else if (key == "backend.rate_limit_interval_s") {
            c.backend.policy.rate_limit_interval = std::chrono::seconds(as_uint(key, v));
        } else if (key == "backend.timeout_s") c.backend.policy.request_timeout = std::chrono::seconds(as_uint(key, v));
        else if (key == "backend.max_in_flight") c.backend.policy.max_in_flight = as_uint(key, v);
        else if (key == "backend.mock_malformed_rate") c.backend.mock_malformed_rate = as_double(key, v);
        else if (key == "discovery.samples") c.discovery_samples = as_uint(key, v);
        else if (key == "discovery.temperature") c.discovery_temperature = as_double(key, v);
        else if (key == "discovery.include") c.discovery_include = v;
        else if (key == "discovery.exclude") c.discovery_exclude = v;
        else if (key == "premises.temperature") c.premise_temperature = as_double(key, v);
        else if (key == "premises.max_attempts") c.premise_max_attempts = static_cast<int>(as_uint(key, v));
        else if (key == "labeling.temperature") c.labeling_temperature = as_double(key, v);
        else if (key == "split.holdout") c.split.holdout_count = as_uint(key, v);
        else if (key == "split.dev_fraction") c.split.dev_fraction = as_double(key, v);
        else if (key == "split.test_fraction") c.split.test_fraction = as_double(key, v);
        else if (key == "split.stratify_by") {
            stratify_set = true;
            c.split.stratify_by.clear();
            for (const auto& s : v) {
                auto k = assembly::parse_stratum_key(s);
                if (!k) throw ConfigError(key + ": unknown stratum key: " + s);
                c.split.stratify_by.insert(*k);
            }
        } else if (key == "balance.label_tolerance") c.balance.label = as_double(key, v);
        else if (key == "balance.cell_tolerance") c.balance.cell = as_double(key, v);
        else if (key == "ablation.sizes") c.ablation.sizes = as_uints(key, v);
        else if (key == "ablation.divisor") c.ablation_divisor = as_uint(key, v);
        else throw ConfigError("unknown config key: " + key);
    }
    if (stratify_set && c.split.stratify_by.empty()) throw ConfigError("split.stratify_by must not be empty");
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    auto c = from_toml(read_file(path));
    // Relative paths in the file are relative to the file.
    const fs::path base = path.parent_path();
    auto rebase = [&](fs::path& p) {
        if (!p.empty() && p.is_relative()) p = base / p;
    };
    rebase(c.seeds);
    rebase(c.output_dir);
    if (!c.roster.empty() && c.roster != "builtin" && fs::path(c.roster).is_relative()) {
        c.roster = (base / c.roster).string();
    }
    if (c.backend.endpoint.rfind("mock:", 0) == 0) {
        fs::path script = c.backend.endpoint.substr(5);
        rebase(script);
        c.backend.endpoint = "mock:" + script.string();
    }
    return c;
}

void PipelineConfig::validate() const {
    backend.policy.validate();
    if (!(backend.mock_malformed_rate >= 0.0 && backend.mock_malformed_rate <= 1.0)) {
        throw std::invalid_argument("backend.mock_malformed_rate must lie in [0,1]");
    }
    if (backend.endpoint != "mock" && backend.endpoint.rfind("mock:", 0) != 0) {
        (void)llm::parse_endpoint(backend.endpoint);
    }
    if (backend.endpoint.rfind("mock:", 0) == 0 && !fs::exists(backend.endpoint.substr(5))) {
        throw std::invalid_argument("mock script not found: " + backend.endpoint.substr(5));
    }
    if (!seeds.empty() && !fs::exists(seeds)) throw std::invalid_argument("seed file not found: " + seeds.string());
    if (!roster.empty() && roster != "builtin" && !fs::exists(roster)) {
        throw std::invalid_argument("roster file not found: " + roster);
    }
    if (per_cell == 0) throw std::invalid_argument("per_cell must be positive");
    if (discovery_samples == 0) throw std::invalid_argument("discovery.samples must be positive");
    for (double t : {discovery_temperature, premise_temperature, labeling_temperature}) {
        if (!std::isfinite(t) || t < 0.0) throw std::invalid_argument("temperatures must be finite and >= 0");
    }
    if (premise_max_attempts < 1) throw std::invalid_argument("premises.max_attempts must be >= 1");
    split.validate();
    if (ablation_divisor == 0) throw std::invalid_argument("ablation.divisor must be positive");
    auto scaled = ablation;
    for (auto& s : scaled.sizes) s /= ablation_divisor;
    scaled.validate();
}

ojson PipelineConfig::to_json() const {
    ojson j;
    j["seed"] = seed;
    j["seeds"] = seeds.empty() ? "builtin" : seeds.filename().string();
    j["roster"] = roster.empty() ? std::string(artifacts::kRoster) : roster == "builtin" ? roster : fs::path(roster).filename().string();
    j["per_cell"] = per_cell;
    ojson b;
    b["endpoint"] = backend.endpoint.rfind("mock:", 0) == 0 ? "mock:" + fs::path(backend.endpoint.substr(5)).filename().string()
                                                           : backend.endpoint;
    b["max_retries"] = backend.policy.max_retries;
    std::vector<long long> backoff;
    for (auto d : backend.policy.backoff) backoff.push_back(d.count());
    b["backoff_ms"] = backoff;
    b["rate_limit_requests"] = backend.policy.rate_limit_requests;
    b["rate_limit_interval_ms"] = backend.policy.rate_limit_interval.count();
    b["timeout_ms"] = backend.policy.request_timeout.count();
    b["max_in_flight"] = backend.policy.max_in_flight;
    if (backend.endpoint == "mock") b["mock_malformed_rate"] = backend.mock_malformed_rate;
    j["backend"] = b;
    j["discovery"] = {{"samples", discovery_samples},
                      {"temperature", discovery_temperature},
                      {"include", discovery_include},
                      {"exclude", discovery_exclude}};
    j["premises"] = {{"temperature", premise_temperature}, {"max_attempts", premise_max_attempts}};
    j["labeling"] = {{"temperature", labeling_temperature}};
    j["split"] = split.to_json();
    j["balance"] = {{"label_tolerance", balance.label}, {"cell_tolerance", balance.cell}};
    j["ablation"] = {{"sizes", ablation.sizes}, {"divisor", ablation_divisor}};
    return j;
}

// ---------------------------------------------------------------------------

std::shared_ptr<llm::Backend> make_backend(const BackendConfig& config) {
    if (config.endpoint == "mock") {
        llm::SyntheticGeneratorOptions opts;
        opts.malformed_rate = config.mock_malformed_rate;
        auto backend = std::make_shared<llm::MockBackend>(std::map<std::string, std::string>{},
                                                          llm::synthetic_generator(opts));
        return backend;
    }
    if (config.endpoint.rfind("mock:", 0) == 0) {
        const fs::path script = config.endpoint.substr(5);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(script));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("mock script " + script.string() + ": " + e.what());
        }
        auto backend = std::make_shared<llm::MockBackend>(llm::MockBackend::from_json(j));
        // "synthetic": true (or an options object) answers unscripted prompts.
        if (j.contains("synthetic") && j.at("synthetic") != false) {
            llm::SyntheticGeneratorOptions opts;
            if (j.at("synthetic").is_object()) opts.malformed_rate = j.at("synthetic").value("malformed_rate", 0.0);
            backend->set_fallback(llm::synthetic_generator(opts));
        }
        backend->set_id("mock:" + script.filename().string());
        return backend;
    }
    return std::make_shared<llm::HttpBackend>(config.endpoint, config.policy.request_timeout);
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"discover-domains", "gen-premises", "gen-hypotheses", "assemble",
                                                "ablate-split"};
    return names;
}

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<llm::Backend> backend)
    : config_(std::move(config)), backend_(std::move(backend)) {
    config_.validate();
    const bool mock_endpoint = config_.backend.endpoint.rfind("mock", 0) == 0;
    if (!backend_) backend_ = make_backend(config_.backend);
    virtual_time_ = mock_endpoint || dynamic_cast<llm::MockBackend*>(backend_.get()) != nullptr;
}

std::unique_ptr<llm::Gateway> Pipeline::make_gateway(const std::string& stage) const {
    std::shared_ptr<llm::Clock> clock;
    if (virtual_time_) {
        clock = std::make_shared<llm::VirtualClock>();
    } else {
        clock = std::make_shared<llm::SystemClock>();
    }
    auto audit = std::make_shared<llm::AuditLog>(out("logs") / (stage + ".audit.jsonl"));
    return std::make_unique<llm::Gateway>(backend_, config_.backend.policy, clock, audit);
}

namespace {

ojson input_entry(const fs::path& dir, const std::string& name, const std::string& stage) {
    ojson e;
    e["path"] = name;
    e["sha256"] = sha256_file(dir / name);
    e["stage"] = stage;
    return e;
}

void require(const fs::path& path, const std::string& stage) {
    if (!fs::exists(path)) throw DependencyError(stage, path);
}

std::string dump_json(const ojson& j) { return j.dump(2) + "\n"; }

}  // namespace

DomainRoster Pipeline::resolve_roster(ojson& inputs) const {
    if (config_.roster == "builtin") return DomainRoster::default_roster();
    if (!config_.roster.empty()) {
        ojson e;
        e["path"] = fs::path(config_.roster).filename().string();
        e["sha256"] = sha256_file(config_.roster);
        e["stage"] = "config";
        inputs.push_back(e);
        return discovery::read_roster_file(config_.roster);
    }
    const fs::path path = out(artifacts::kRoster);
    if (!fs::exists(path)) {
        throw DependencyError("discover-domains --write-roster", path);
    }
    inputs.push_back(input_entry(config_.output_dir, artifacts::kRoster, "discover-domains"));
    return discovery::read_roster_file(path);
}

StageResult Pipeline::finish(const std::string& stage, ojson inputs, const std::vector<std::string>& outputs,
                             ojson counts, std::vector<std::string> warnings) const {
    ojson m;
    m["stage"] = stage;
    m["seed"] = config_.seed;
    m["backend"] = backend_->id();
    m["config"] = config_.to_json();
    m["inputs"] = std::move(inputs);
    m["outputs"] = ojson::array();
    for (const auto& name : outputs) {
        ojson e;
        e["path"] = name;
        e["sha256"] = sha256_file(out(name));
        m["outputs"].push_back(e);
    }
    m["counts"] = std::move(counts);
    m["warnings"] = warnings;
    m["log"] = "logs/" + stage + ".audit.jsonl";
    const fs::path path = out("manifests") / (stage + ".json");
    write_file(path, dump_json(m));
    return StageResult{stage, path, std::move(m), std::move(warnings)};
}

StageResult Pipeline::discover_domains(bool write_roster) {
    ojson inputs = ojson::array();
    std::vector<discovery::SeedTriple> seeds = discovery::default_seeds();
    if (!config_.seeds.empty()) {
        seeds = discovery::read_seed_file(config_.seeds);
        inputs.push_back({{"path", config_.seeds.filename().string()},
                          {"sha256", sha256_file(config_.seeds)},
                          {"stage", "config"}});
    }
    auto gateway = make_gateway("discover-domains");
    discovery::SamplingOptions opts;
    opts.n = config_.discovery_samples;
    opts.temperature = config_.discovery_temperature;
    opts.seed = combine_seed(config_.seed, 1);
    const auto sample = discovery::sample_domain_triples(*gateway, seeds, opts);

    discovery::write_seed_file(sample.triples, out(artifacts::kDomainSamples));
    std::string failures;
    for (const auto& f : sample.failures) {
        ojson j;
        j["index"] = f.index;
        j["reason"] = discovery::to_string(f.reason);
        j["raw"] = f.raw;
        failures += j.dump() + "\n";
    }
    write_file(out(artifacts::kDiscoveryFailures), failures);

    const auto seed_domains = discovery::seed_domains(seeds);
    const auto tally = discovery::tally_domains(sample.triples, seed_domains);
    ojson t;
    ojson counts = ojson::object();
    for (const auto& [name, n] : tally.counts) counts[name] = n;
    t["counts"] = counts;
    t["novel"] = tally.novel;
    t["seed_domains"] = tally.seed_domains;
    write_file(out(artifacts::kDomainTally), dump_json(t));

    const auto curated = discovery::curate_roster(tally, config_.discovery_include, config_.discovery_exclude);
    discovery::write_roster_file(curated, out(artifacts::kRosterCandidates));
    std::vector<std::string> outputs{artifacts::kDomainSamples, artifacts::kDiscoveryFailures, artifacts::kDomainTally,
                                     artifacts::kRosterCandidates};
    if (write_roster) {
        discovery::write_roster_file(curated, out(artifacts::kRoster));
        outputs.emplace_back(artifacts::kRoster);
    }

    std::vector<std::string> warnings;
    if (!sample.failures.empty()) {
        warnings.push_back(std::to_string(sample.failures.size()) + " of " + std::to_string(opts.n) +
                           " discovery samples did not parse");
    }
    ojson c;
    c["samples"] = opts.n;
    c["parsed"] = sample.triples.size();
    c["failures"] = sample.failures.size();
    c["distinct_domains"] = tally.counts.size();
    c["novel_domains"] = tally.novel.size();
    c["roster_candidates"] = curated.roster.size();
    return finish("discover-domains", std::move(inputs), outputs, std::move(c), std::move(warnings));
}

StageResult Pipeline::gen_premises() {
    ojson inputs = ojson::array();
    premises::PremiseBatchSpec spec;
    spec.roster = resolve_roster(inputs);
    if (!config_.seeds.empty()) {
        spec.seeds = discovery::read_seed_file(config_.seeds);
        inputs.push_back({{"path", config_.seeds.filename().string()},
                          {"sha256", sha256_file(config_.seeds)},
                          {"stage", "config"}});
    }
    spec.per_cell = config_.per_cell;
    spec.seed = combine_seed(config_.seed, 2);
    spec.temperature = config_.premise_temperature;
    spec.max_attempts_per_item = config_.premise_max_attempts;

    auto gateway = make_gateway("gen-premises");
    const auto result = premises::generate_stratified(*gateway, spec);
    const auto dedup = premises::dedup_premises(result.premises);
    const auto audit = premises::audit_lengths(dedup.premises);
    premises::write_premises(dedup.premises, out(artifacts::kPremises));

    ojson report;
    report["generation"] = result.report.to_json();
    report["duplicates_removed"] = dedup.removed;
    report["duplicate_ids"] = dedup.removed_ids;
    report["length_audit"] = audit.to_json();
    write_file(out(artifacts::kPremiseReport), dump_json(report));

    std::vector<std::string> warnings;
    if (const auto shortfalls = result.report.shortfalls(); !shortfalls.empty()) {
        warnings.push_back(std::to_string(shortfalls.size()) + " cells fell short of their quota");
    }
    if (dedup.removed) warnings.push_back(std::to_string(dedup.removed) + " duplicate premises removed");
    if (audit.warning) warnings.emplace_back("short premises are longer than paragraph premises on average");

    ojson c;
    c["target"] = result.report.total_target;
    c["produced"] = result.report.total_produced;
    c["duplicates_removed"] = dedup.removed;
    c["premises"] = dedup.premises.size();
    return finish("gen-premises", std::move(inputs), {artifacts::kPremises, artifacts::kPremiseReport}, std::move(c),
                  std::move(warnings));
}

StageResult Pipeline::gen_hypotheses() {
    require(out(artifacts::kPremises), "gen-premises");
    ojson inputs = ojson::array();
    inputs.push_back(input_entry(config_.output_dir, artifacts::kPremises, "gen-premises"));
    const auto premises = premises::read_premises(out(artifacts::kPremises));

    labeler::LabelingOptions opts;
    opts.temperature = config_.labeling_temperature;
    opts.seed = combine_seed(config_.seed, 3);
    auto gateway = make_gateway("gen-hypotheses");
    const auto result = labeler::label_premises(*gateway, premises, opts);

    write_corpus(result.examples, out(artifacts::kLabeled));
    labeler::write_discard_log(result.discards, out(artifacts::kDiscards));
    ojson summary = result.summary_json();
    summary["transport_failure_ids"] = ojson::array();
    for (const auto& f : result.transport_failures) summary["transport_failure_ids"].push_back(f.premise_id);
    write_file(out(artifacts::kLabeling), dump_json(summary));

    std::vector<std::string> warnings;
    if (result.warning) warnings.push_back(result.warning_message);
    if (!result.transport_failures.empty()) {
        warnings.push_back(std::to_string(result.transport_failures.size()) + " premises failed in transport");
    }
    ojson c;
    c["premises"] = premises.size();
    c["examples"] = result.examples.size();
    c["discarded"] = result.discards.size();
    c["transport_failures"] = result.transport_failures.size();
    return finish("gen-hypotheses", std::move(inputs), {artifacts::kLabeled, artifacts::kDiscards, artifacts::kLabeling},
                  std::move(c), std::move(warnings));
}

StageResult Pipeline::assemble() {
    require(out(artifacts::kLabeled), "gen-hypotheses");
    ojson inputs = ojson::array();
    inputs.push_back(input_entry(config_.output_dir, artifacts::kLabeled, "gen-hypotheses"));
    const Corpus labeled = read_corpus(out(artifacts::kLabeled));

    auto spec = config_.split;
    spec.seed = combine_seed(config_.seed, 4);
    const auto result = assembly::assemble(labeled, spec);
    write_corpus(result.corpus, out(artifacts::kCorpus));

    const auto balance = assembly::verify_balance(result.corpus, config_.balance);
    write_file(out(artifacts::kBalance), dump_json(balance.to_json()));

    std::vector<std::string> warnings;
    if (!balance.pass()) warnings.emplace_back("balance check flagged deviations; see balance.json");
    ojson c;
    c["examples"] = result.corpus.size();
    for (const auto& [split, n] : result.sizes) c[std::string(to_string(split))] = n;
    return finish("assemble", std::move(inputs), {artifacts::kCorpus, artifacts::kBalance}, std::move(c),
                  std::move(warnings));
}

StageResult Pipeline::ablate_split() {
    require(out(artifacts::kCorpus), "assemble");
    ojson inputs = ojson::array();
    inputs.push_back(input_entry(config_.output_dir, artifacts::kCorpus, "assemble"));
    const Corpus corpus = read_corpus(out(artifacts::kCorpus));
    Corpus train;
    for (const auto& ex : corpus) {
        if (ex.split == Split::train) train.push_back(ex);
    }
    auto spec = config_.ablation;
    for (auto& s : spec.sizes) s /= config_.ablation_divisor;
    spec.seed = combine_seed(config_.seed, 5);
    if (spec.sizes.back() > train.size()) {
        throw std::invalid_argument("largest ablation size " + std::to_string(spec.sizes.back()) +
                                    " exceeds the train split (" + std::to_string(train.size()) + ")");
    }
    const auto subsets = assembly::subsample_nested(train, spec);

    std::vector<std::string> outputs;
    ojson c;
    c["train"] = train.size();
    c["sizes"] = spec.sizes;
    for (const auto& s : subsets) {
        const std::string name = std::string(artifacts::kAblationDir) + "/train_" + std::to_string(s.size) + ".jsonl";
        write_corpus(s.examples, out(name));
        outputs.push_back(name);
    }
    return finish("ablate-split", std::move(inputs), outputs, std::move(c), {});
}

StageResult Pipeline::run(const std::string& stage) {
    if (stage == "discover-domains") return discover_domains();
    if (stage == "gen-premises") return gen_premises();
    if (stage == "gen-hypotheses") return gen_hypotheses();
    if (stage == "assemble") return assemble();
    if (stage == "ablate-split") return ablate_split();
    throw std::invalid_argument("unknown stage: " + stage);
}

}  // namespace nliforge::pipeline
