// nliforge: command-line entry point for the corpus pipeline.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 transport error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "nliforge/agreement.hpp"
#include "nliforge/annotation_hub.hpp"
#include "nliforge/corpus.hpp"
#include "nliforge/discovery.hpp"
#include "nliforge/eval.hpp"
#include "nliforge/gateway.hpp"
#include "nliforge/hub_server.hpp"
#include "nliforge/pipeline.hpp"

namespace fs = std::filesystem;
using namespace nliforge;

namespace {

constexpr int kOk = 0, kUsage = 1, kData = 2, kTransport = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineArgs {
    std::string config;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
};

pipeline::Pipeline open_pipeline(const PipelineArgs& args) {
    pipeline::PipelineConfig config;
    try {
        config = pipeline::PipelineConfig::load(args.config);
        if (!args.output_dir.empty()) config.output_dir = args.output_dir;
        if (args.seed) config.seed = *args.seed;
        return pipeline::Pipeline(std::move(config));
    } catch (const pipeline::ConfigError& e) {
        throw UsageError(e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("invalid config: ") + e.what());
    }
}

void print_stage(const pipeline::StageResult& r) {
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << r.stage << ": " << r.manifest["counts"].dump() << "\n";
    std::cout << "manifest: " << r.manifest_path.string() << "\n";
}

std::shared_ptr<eval::Scorer> make_scorer(const std::string& spec, std::size_t batch_size) {
    if (spec == "constant") {
        return std::make_shared<eval::FunctionScorer>("constant", [](const std::string&, const std::string&) {
            return eval::Distribution{1.0 / 3, 1.0 / 3, 1.0 / 3};
        });
    }
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
        return std::make_shared<eval::HttpScorer>(spec, batch_size);
    }
    throw UsageError("scorer must be an http(s) URL or \"constant\": " + spec);
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    return out + "'";
}

// Runs `command <subset file>` and reads the scorer URL from the last
// non-empty line of its standard output.
std::string run_factory(const std::string& command, const fs::path& subset) {
    const std::string full = command + " " + shell_quote(subset.string());
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) throw std::runtime_error("cannot run scorer factory: " + command);
    std::string output;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
    const int status = pclose(pipe);
    if (status != 0) throw std::runtime_error("scorer factory exited with status " + std::to_string(status));
    std::string last;
    std::size_t start = 0;
    while (start < output.size()) {
        std::size_t end = output.find('\n', start);
        if (end == std::string::npos) end = output.size();
        std::string line = output.substr(start, end - start);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) last = line;
        start = end + 1;
    }
    if (last.empty()) throw std::runtime_error("scorer factory printed no URL");
    return last;
}

annotation::HubServer* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nliforge: synthetic NLI corpus pipeline"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    PipelineArgs pargs;
    auto add_pipeline_options = [&](CLI::App* sub) {
        sub->add_option("-c,--config", pargs.config, "Pipeline config (TOML)")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", pargs.output_dir, "Override output_dir");
        sub->add_option("--seed", pargs.seed, "Override seed");
    };

    bool write_roster = false;
    auto* discover = app.add_subcommand("discover-domains", "Sample domain triples and tally candidate domains");
    add_pipeline_options(discover);
    discover->add_flag("--write-roster", write_roster, "Also write roster.json from the candidates");

    std::vector<std::pair<std::string, CLI::App*>> stages;
    for (const char* name : {"gen-premises", "gen-hypotheses", "assemble", "ablate-split"}) {
        static const std::map<std::string, std::string> help{
            {"gen-premises", "Generate premises for every (domain, length) cell"},
            {"gen-hypotheses", "Generate labeled hypotheses for each premise"},
            {"assemble", "Assign holdout/dev/test/train splits and check balance"},
            {"ablate-split", "Write nested training subsets for the learning curve"}};
        auto* sub = app.add_subcommand(name, help.at(name));
        add_pipeline_options(sub);
        stages.emplace_back(name, sub);
    }

    std::string stats_path, stats_roster;
    bool stats_json = false;
    auto* stats = app.add_subcommand("stats", "Print corpus statistics");
    stats->add_option("corpus", stats_path, "Corpus JSONL")->required()->check(CLI::ExistingFile);
    stats->add_option("--roster", stats_roster, "Validate domains against this roster")->check(CLI::ExistingFile);
    stats->add_flag("--json", stats_json, "Emit JSON");

    auto* annotate = app.add_subcommand("annotate", "Human annotation hub");
    annotate->require_subcommand(1);
    std::string serve_corpus, state_dir = "annotation_state", host = "127.0.0.1";
    int port = 8080;
    auto* serve = annotate->add_subcommand("serve", "Serve the annotation HTTP API");
    serve->add_option("--corpus", serve_corpus, "Example pool (corpus JSONL)")->check(CLI::ExistingFile);
    serve->add_option("--state-dir", state_dir, "Session state directory");
    serve->add_option("--port", port, "Port (0 picks a free one)");
    serve->add_option("--host", host, "Bind address");

    std::string agree_session;
    bool agree_json = false;
    auto* agreement = app.add_subcommand("agreement", "Agreement report for a completed session");
    agreement->add_option("--state-dir", state_dir, "Session state directory");
    agreement->add_option("--session", agree_session, "Session id")->required();
    agreement->add_flag("--json", agree_json, "Emit JSON");

    std::string scorer_spec, adapter = "true", report_json;
    std::vector<std::string> task_files;
    eval::EvalOptions eval_opts;
    std::optional<std::size_t> max_words;
    auto add_eval_options = [&](CLI::App* sub) {
        sub->add_option("--batch-size", eval_opts.batch_size, "Pairs per scorer request");
        sub->add_option("--max-in-flight", eval_opts.max_in_flight, "Concurrent scorer requests");
        sub->add_option("--max-grounding-words", max_words,
                        "Truncate groundings to this many words (0: never; default 1024, 512 for eval-3way)");
        sub->add_option("--json", report_json, "Write the JSON report here");
    };
    auto* ev = app.add_subcommand("eval", "AUC on binary factual-consistency tasks");
    ev->add_option("--scorer", scorer_spec, "Scorer URL or \"constant\"")->required();
    ev->add_option("--task", task_files, "Task CSV/TSV files")->required()->check(CLI::ExistingFile);
    ev->add_option("--adapter", adapter, "Label adapter: true or consistency");
    add_eval_options(ev);

    std::string nli_corpus, nli_split;
    auto* ev3 = app.add_subcommand("eval-3way", "3-way accuracy on an NLI corpus");
    ev3->add_option("--scorer", scorer_spec, "Scorer URL or \"constant\"")->required();
    ev3->add_option("--corpus", nli_corpus, "Corpus JSONL")->required()->check(CLI::ExistingFile);
    ev3->add_option("--split", nli_split, "Only examples in this split");
    add_eval_options(ev3);

    std::string factory_cmd, subsets_dir, subsets_manifest;
    std::vector<std::string> nli_files;
    auto* ablate = app.add_subcommand("ablate", "Learning curve over nested training subsets");
    ablate->add_option("--scorer-factory", factory_cmd,
                       "Command run as `CMD <subset.jsonl>`; prints the trained scorer URL")
        ->required();
    auto* subsets_opt = ablate->add_option("--subsets", subsets_dir, "Directory written by ablate-split")
                            ->check(CLI::ExistingDirectory);
    ablate->add_option("--manifest", subsets_manifest, "Manifest written by ablate-split")
        ->check(CLI::ExistingFile)
        ->excludes(subsets_opt);
    ablate->add_option("--task", task_files, "Binary task files")->check(CLI::ExistingFile);
    ablate->add_option("--adapter", adapter, "Label adapter: true or consistency");
    ablate->add_option("--nli", nli_files, "NLI corpora evaluated by accuracy")->check(CLI::ExistingFile);
    add_eval_options(ablate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    eval_opts.max_grounding_words = max_words.value_or(*ev3 ? 512 : 1024);

    try {
        if (*discover) {
            auto p = open_pipeline(pargs);
            print_stage(p.discover_domains(write_roster));
            return kOk;
        }
        for (const auto& [name, sub] : stages) {
            if (*sub) {
                auto p = open_pipeline(pargs);
                print_stage(p.run(name));
                return kOk;
            }
        }
        if (*stats) {
            std::optional<DomainRoster> roster;
            if (!stats_roster.empty()) roster = discovery::read_roster_file(stats_roster);
            const Corpus corpus = read_corpus(stats_path, roster ? &*roster : nullptr);
            if (stats_json) {
                nlohmann::ordered_json j;
                j["all"] = stats_to_json(compute_stats(corpus));
                for (const auto& [split, s] : compute_split_stats(corpus)) j[std::string(to_string(split))] = stats_to_json(s);
                std::cout << j.dump(2) << "\n";
            } else {
                std::cout << format_stats_table(corpus);
            }
            return kOk;
        }
        if (*serve) {
            annotation::AnnotationHub hub(state_dir);
            std::optional<Corpus> pool;
            if (!serve_corpus.empty()) pool = read_corpus(serve_corpus);
            annotation::HubServer server(hub, std::move(pool));
            int bound = port;
            if (port == 0) {
                bound = server.bind_to_any_port(host);
            } else if (!server.bind(host, port)) {
                bound = -1;
            }
            if (bound < 0) {
                std::cerr << "error: cannot bind " << host << ":" << port << "\n";
                return kTransport;
            }
            g_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            std::cout << "listening on http://" << host << ":" << bound << std::endl;
            server.listen_after_bind();
            g_server = nullptr;
            return kOk;
        }
        if (*agreement) {
            annotation::AnnotationHub hub(state_dir);
            const auto report = hub.report(agree_session);
            std::cout << (agree_json ? report.to_json().dump(2) + "\n" : report.format_text());
            return kOk;
        }
        if (*ev) {
            auto scorer = make_scorer(scorer_spec, eval_opts.batch_size);
            std::vector<eval::TaskScore> scores;
            for (const auto& f : task_files) {
                const auto ingested = eval::ingest_true_task(f, eval::builtin_adapter(adapter));
                const auto r = eval::evaluate_binary_task(*scorer, ingested.instances, eval_opts);
                for (const auto& x : r.exclusions) std::cerr << "excluded " << x.id << ": " << x.error << "\n";
                scores.push_back(eval::task_score(r));
            }
            nlohmann::ordered_json config;
            config["score"] = "p_entailment";
            config["adapter"] = adapter;
            config["max_grounding_words"] = eval_opts.max_grounding_words;
            const auto report = eval::make_report(scorer->id(), std::move(scores), config);
            std::cout << report.format_table();
            if (!report_json.empty()) write_file(report_json, report.to_json().dump(2) + "\n");
            return kOk;
        }
        if (*ev3) {
            auto scorer = make_scorer(scorer_spec, eval_opts.batch_size);
            Corpus corpus = read_corpus(nli_corpus);
            if (!nli_split.empty()) {
                const auto split = parse_split(nli_split);
                if (!split) throw UsageError("unknown split: " + nli_split);
                std::erase_if(corpus, [&](const NliExample& ex) { return ex.split != *split; });
            }
            const auto r = eval::evaluate_3way(*scorer, corpus, eval_opts);
            for (const auto& x : r.exclusions) std::cerr << "excluded " << x.id << ": " << x.error << "\n";
            if (r.ties) std::cerr << "warning: " << r.ties << " predictions were ties\n";
            nlohmann::ordered_json config;
            config["prediction"] = "argmax, ties to entailment < contradiction < neutral";
            config["split"] = nli_split.empty() ? "all" : nli_split;
            const auto report =
                eval::make_report(scorer->id(), {eval::task_score(fs::path(nli_corpus).stem().string(), r)}, config);
            std::cout << report.format_table();
            if (!report_json.empty()) write_file(report_json, report.to_json().dump(2) + "\n");
            return kOk;
        }
        if (*ablate) {
            if (task_files.empty() && nli_files.empty()) throw UsageError("ablate needs --task or --nli");
            std::vector<std::pair<std::size_t, fs::path>> files;
            if (!subsets_manifest.empty()) {
                std::ifstream in(subsets_manifest);
                const auto m = nlohmann::json::parse(in);
                const fs::path root = fs::path(subsets_manifest).parent_path().parent_path();
                for (const auto& o : m.at("outputs")) {
                    const fs::path path = root / o.at("path").get<std::string>();
                    if (pipeline::sha256_file(path) != o.at("sha256").get<std::string>()) {
                        throw std::runtime_error("subset file changed since the manifest was written: " + path.string());
                    }
                    files.emplace_back(0, path);
                }
            } else if (!subsets_dir.empty()) {
                for (const auto& entry : fs::directory_iterator(subsets_dir)) {
                    if (entry.path().extension() == ".jsonl" && entry.path().stem().string().rfind("train_", 0) == 0) {
                        files.emplace_back(0, entry.path());
                    }
                }
            } else {
                throw UsageError("ablate needs --subsets or --manifest");
            }
            if (files.empty()) throw std::runtime_error("no subset files found");
            for (auto& [size, path] : files) size = std::stoull(path.stem().string().substr(6));
            std::sort(files.begin(), files.end());
            std::vector<assembly::Subset> subsets;
            std::map<std::size_t, fs::path> path_of;
            for (const auto& [size, path] : files) {
                subsets.push_back({size, read_corpus(path)});
                path_of[subsets.back().examples.size()] = path;
            }
            std::vector<eval::EvalSet> sets;
            const auto adapter_def = eval::builtin_adapter(adapter);
            for (const auto& f : task_files) {
                eval::EvalSet s;
                s.name = fs::path(f).stem().string();
                s.binary = eval::ingest_true_task(f, adapter_def).instances;
                sets.push_back(std::move(s));
            }
            for (const auto& f : nli_files) {
                eval::EvalSet s;
                s.name = fs::path(f).stem().string();
                s.nli = read_corpus(f);
                sets.push_back(std::move(s));
            }
            const auto factory = [&](const assembly::Subset& subset) -> std::shared_ptr<eval::Scorer> {
                const std::string url = run_factory(factory_cmd, path_of.at(subset.examples.size()));
                return make_scorer(url, eval_opts.batch_size);
            };
            const auto rows = eval::run_ablation(factory, subsets, sets, eval_opts);
            for (const auto& r : rows) {
                if (r.failed) std::cerr << "failed at size " << r.size << " on " << r.eval_set << ": " << r.error << "\n";
            }
            std::cout << eval::format_curve_tsv(rows);
            if (!report_json.empty()) write_file(report_json, eval::curve_to_json(rows).dump(2) + "\n");
            return kOk;
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const llm::TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        return kTransport;
    } catch (const llm::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kTransport;
    } catch (const eval::ScorerError& e) {
        std::cerr << "scorer error: " << e.what() << "\n";
        return kTransport;
    } catch (const pipeline::DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}
