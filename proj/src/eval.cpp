#include "nliforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include <httplib.h>

#include "nliforge/http_backend.hpp"
#include "nliforge/parallel.hpp"
#include "nliforge/text.hpp"

namespace nliforge::eval {

using json = nlohmann::json;

void validate_distribution(const Distribution& d) {
    double sum = 0.0;
    for (double p : d) {
        if (!std::isfinite(p) || p < 0.0) throw ScorerError("scorer returned a negative or non-finite probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw ScorerError("scorer probabilities sum to " + std::to_string(sum));
}

std::vector<Distribution> Scorer::score_batch(std::span<const ScorePair> pairs) {
    std::vector<Distribution> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(score(p.premise, p.hypothesis));
    return out;
}

// ---------------------------------------------------------------------------

HttpScorer::HttpScorer(std::string url, std::size_t batch_size, std::chrono::milliseconds timeout)
    : url_(std::move(url)), batch_size_(std::max<std::size_t>(batch_size, 1)), timeout_(timeout) {
    (void)llm::parse_endpoint(url_);
}

json HttpScorer::post(const json& body) const {
    const auto ep = llm::parse_endpoint(url_);
    httplib::Client client(ep.scheme_host_port);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    auto res = client.Post(ep.path, body.dump(), "application/json");
    if (!res) throw ScorerError("scorer unreachable: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
        throw ScorerError("scorer returned HTTP " + std::to_string(res->status));
    }
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw ScorerError(std::string("scorer reply is not JSON: ") + e.what());
    }
}

namespace {

Distribution distribution_from_json(const json& j) {
    try {
        return {j.at("entailment").get<double>(), j.at("contradiction").get<double>(), j.at("neutral").get<double>()};
    } catch (const json::exception& e) {
        throw ScorerError(std::string("scorer reply lacks label probabilities: ") + e.what());
    }
}

}  // namespace

Distribution HttpScorer::score(const std::string& premise, const std::string& hypothesis) {
    return distribution_from_json(post({{"premise", premise}, {"hypothesis", hypothesis}}));
}

std::vector<Distribution> HttpScorer::score_batch(std::span<const ScorePair> pairs) {
    std::vector<Distribution> out;
    for (std::size_t start = 0; start < pairs.size(); start += batch_size_) {
        json body = json::array();
        const std::size_t end = std::min(pairs.size(), start + batch_size_);
        for (std::size_t i = start; i < end; ++i) {
            body.push_back({{"premise", pairs[i].premise}, {"hypothesis", pairs[i].hypothesis}});
        }
        const json reply = post(body);
        if (!reply.is_array() || reply.size() != end - start) {
            throw ScorerError("scorer batch reply has the wrong shape");
        }
        for (const auto& r : reply) out.push_back(distribution_from_json(r));
    }
    return out;
}

// ---------------------------------------------------------------------------

AucResult roc_auc(std::span<const double> scores, std::span<const Binary> gold) {
    if (scores.size() != gold.size()) throw std::invalid_argument("scores and labels differ in length");
    AucResult r;
    for (Binary g : gold) (g == Binary::positive ? r.positives : r.negatives)++;
    if (r.positives == 0 || r.negatives == 0) {
        throw std::invalid_argument("undefined AUC: gold labels contain a single class");
    }
    for (double s : scores) {
        if (std::isnan(s)) throw std::invalid_argument("NaN score");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of positive midranks, kept doubled so it stays an integer.
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const std::uint64_t twice_midrank = i + 1 + j;  // ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (gold[idx[k]] == Binary::positive) twice_rank_sum += twice_midrank;
        }
        i = j;
    }
    r.all_ties = scores[idx.front()] == scores[idx.back()];
    const std::uint64_t p = r.positives, n = r.negatives;
    // U = R - p(p+1)/2, with everything doubled.
    const std::uint64_t twice_u = twice_rank_sum - p * (p + 1);
    r.auc = static_cast<double>(twice_u) / (2.0 * static_cast<double>(p) * static_cast<double>(n));
    return r;
}

Truncation truncate_words(const std::string& text, std::size_t max_words) {
    if (max_words == 0) return {text, false};
    const auto words = split_words(text);
    if (words.size() <= max_words) return {text, false};
    std::string out;
    for (std::size_t i = 0; i < max_words; ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return {std::move(out), true};
}

Label argmax_label(const Distribution& d, bool* tie) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
        if (d[i] > d[best]) best = i;
    }
    if (tie) {
        std::size_t at_max = 0;
        for (double p : d) at_max += p == d[best];
        *tie = at_max > 1;
    }
    return kAllLabels[best];
}

namespace {

struct Scored {
    std::optional<Distribution> dist;
    std::string error;
};

// Scores pairs in batches with bounded concurrency; a failed batch is retried
// item by item so one bad instance does not exclude its neighbours.
std::vector<Scored> score_all(Scorer& scorer, const std::vector<ScorePair>& pairs, const EvalOptions& options) {
    std::vector<Scored> out(pairs.size());
    const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
    const std::size_t batches = (pairs.size() + batch - 1) / batch;
    auto score_one = [&](std::size_t i) {
        try {
            const Distribution d = scorer.score(pairs[i].premise, pairs[i].hypothesis);
            validate_distribution(d);
            out[i].dist = d;
        } catch (const std::exception& e) {
            out[i].error = e.what();
        }
    };
    parallel_for(batches, std::max<std::size_t>(options.max_in_flight, 1), [&](std::size_t b) {
        const std::size_t start = b * batch, end = std::min(pairs.size(), start + batch);
        if (end - start == 1) {
            score_one(start);
            return;
        }
        try {
            const auto dists = scorer.score_batch(std::span<const ScorePair>(pairs).subspan(start, end - start));
            if (dists.size() != end - start) throw ScorerError("batch size mismatch");
            for (std::size_t i = start; i < end; ++i) {
                try {
                    validate_distribution(dists[i - start]);
                    out[i].dist = dists[i - start];
                } catch (const std::exception& e) {
                    out[i].error = e.what();
                }
            }
        } catch (const std::exception&) {
            for (std::size_t i = start; i < end; ++i) score_one(i);
        }
    });
    return out;
}

}  // namespace

BinaryTaskResult evaluate_binary_task(Scorer& scorer, std::span<const EvalInstance> instances,
                                      const EvalOptions& options) {
    if (instances.empty()) throw std::invalid_argument("no instances to evaluate");
    BinaryTaskResult r;
    r.task = instances.front().task;
    std::vector<ScorePair> pairs;
    pairs.reserve(instances.size());
    for (const auto& inst : instances) {
        auto t = truncate_words(inst.grounding, options.max_grounding_words);
        r.truncated += t.truncated;
        pairs.push_back({std::move(t.text), inst.claim});
    }
    const auto scored = score_all(scorer, pairs, options);
    std::vector<Binary> gold;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (!scored[i].dist) {
            r.exclusions.push_back({instances[i].id, scored[i].error});
            continue;
        }
        r.scores.push_back((*scored[i].dist)[index_of(Label::entailment)]);
        gold.push_back(instances[i].gold);
    }
    r.instances = r.scores.size();
    r.auc = roc_auc(r.scores, gold);
    return r;
}

ThreeWayResult evaluate_3way(Scorer& scorer, std::span<const NliExample> corpus, const EvalOptions& options) {
    if (corpus.empty()) throw std::invalid_argument("no examples to evaluate");
    ThreeWayResult r;
    std::vector<ScorePair> pairs;
    pairs.reserve(corpus.size());
    for (const auto& ex : corpus) {
        auto t = truncate_words(ex.premise, options.max_grounding_words);
        r.truncated += t.truncated;
        pairs.push_back({std::move(t.text), ex.hypothesis});
    }
    const auto scored = score_all(scorer, pairs, options);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (!scored[i].dist) {
            r.exclusions.push_back({corpus[i].id, scored[i].error});
            continue;
        }
        bool tie = false;
        const Label predicted = argmax_label(*scored[i].dist, &tie);
        if (tie) {
            ++r.ties;
            r.tied_ids.push_back(corpus[i].id);
        }
        ++r.instances;
        r.correct += predicted == corpus[i].label;
        ++r.confusion[index_of(corpus[i].label)][index_of(predicted)];
    }
    if (r.instances == 0) throw std::invalid_argument("every instance failed to score");
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.instances);
    return r;
}

// ---------------------------------------------------------------------------

TaskScore task_score(const BinaryTaskResult& r) {
    return TaskScore{r.task, "auc", r.auc.auc, r.instances, r.exclusions.size(), r.truncated, r.auc.all_ties};
}

TaskScore task_score(const std::string& task, const ThreeWayResult& r) {
    return TaskScore{task, "accuracy", r.accuracy, r.instances, r.exclusions.size(), r.truncated, false};
}

EvalReport make_report(std::string scorer_id, std::vector<TaskScore> tasks, nlohmann::ordered_json config) {
    EvalReport report;
    report.scorer_id = std::move(scorer_id);
    report.tasks = std::move(tasks);
    report.config = std::move(config);
    double sum = 0.0;
    for (const auto& t : report.tasks) {
        sum += t.value;
        report.instances += t.instances;
    }
    if (!report.tasks.empty()) report.macro_average = sum / static_cast<double>(report.tasks.size());
    return report;
}

nlohmann::ordered_json EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["scorer"] = scorer_id;
    j["tasks"] = nlohmann::ordered_json::array();
    for (const auto& t : tasks) {
        nlohmann::ordered_json e;
        e["task"] = t.task;
        e["metric"] = t.metric;
        e["value"] = t.value;
        e["instances"] = t.instances;
        e["excluded"] = t.excluded;
        e["truncated"] = t.truncated;
        if (t.metric == "auc") e["all_ties"] = t.all_ties;
        j["tasks"].push_back(std::move(e));
    }
    j["macro_average"] = macro_average;
    j["instances"] = instances;
    j["config"] = config;
    return j;
}

std::string EvalReport::format_table() const {
    std::vector<std::string> header{"Scorer"}, row{scorer_id};
    char buf[32];
    for (const auto& t : tasks) {
        header.push_back(t.task);
        std::snprintf(buf, sizeof buf, "%.1f", t.value * 100.0);
        row.push_back(buf);
    }
    header.emplace_back("Avg");
    std::snprintf(buf, sizeof buf, "%.1f", macro_average * 100.0);
    row.emplace_back(buf);

    std::string out;
    for (const auto* line : {&header, &row}) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            const std::size_t width = std::max(header[c].size(), row[c].size());
            std::string cell = (*line)[c];
            if (c == 0) {
                cell.resize(width, ' ');
            } else {
                cell.insert(0, width - cell.size(), ' ');
            }
            out += (c ? "  " : "") + cell;
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<CurveRow> run_ablation(const ScorerFactory& factory, std::span<const assembly::Subset> subsets,
                                   std::span<const EvalSet> eval_sets, const EvalOptions& options) {
    for (std::size_t i = 1; i < subsets.size(); ++i) {
        if (subsets[i].examples.size() <= subsets[i - 1].examples.size()) {
            throw std::invalid_argument("ablation subsets must grow strictly");
        }
        std::unordered_set<std::string> bigger;
        for (const auto& ex : subsets[i].examples) bigger.insert(ex.id);
        for (const auto& ex : subsets[i - 1].examples) {
            if (!bigger.count(ex.id)) throw std::invalid_argument("ablation subsets are not nested: " + ex.id);
        }
    }
    std::vector<CurveRow> rows;
    for (const auto& subset : subsets) {
        std::shared_ptr<Scorer> scorer;
        std::string factory_error;
        try {
            scorer = factory(subset);
            if (!scorer) factory_error = "factory returned no scorer";
        } catch (const std::exception& e) {
            factory_error = e.what();
        }
        for (const auto& set : eval_sets) {
            CurveRow row;
            row.size = subset.examples.size();
            row.eval_set = set.name;
            row.metric = set.binary.empty() ? "accuracy" : "auc";
            if (!scorer) {
                row.failed = true;
                row.error = factory_error;
            } else {
                try {
                    row.value = set.binary.empty() ? evaluate_3way(*scorer, set.nli, options).accuracy
                                                   : evaluate_binary_task(*scorer, set.binary, options).auc.auc;
                } catch (const std::exception& e) {
                    row.failed = true;
                    row.error = e.what();
                }
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

nlohmann::ordered_json curve_to_json(std::span<const CurveRow> rows) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json e;
        e["size"] = r.size;
        e["eval_set"] = r.eval_set;
        e["metric"] = r.metric;
        e["value"] = r.value ? nlohmann::ordered_json(*r.value) : nlohmann::ordered_json();
        e["failed"] = r.failed;
        if (r.failed) e["error"] = r.error;
        out.push_back(std::move(e));
    }
    return out;
}

std::string format_curve_tsv(std::span<const CurveRow> rows) {
    std::string out = "size\teval_set\tmetric\tvalue\n";
    char buf[32];
    for (const auto& r : rows) {
        out += std::to_string(r.size) + "\t" + r.eval_set + "\t" + r.metric + "\t";
        if (r.value) {
            std::snprintf(buf, sizeof buf, "%.6f", *r.value);
            out += buf;
        } else {
            out += "failed";
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> parse_delimited(std::string_view text, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, field_started = false;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == delimiter) {
            end_field();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_row();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) throw std::runtime_error("unterminated quoted field");
    if (!field.empty() || !row.empty()) end_row();
    return rows;
}

TaskAdapter builtin_adapter(const std::string& name) {
    TaskAdapter a;
    a.name = name;
    if (name == "true") return a;
    if (name == "consistency") {
        a.label_map = {{"consistent", Binary::positive}, {"inconsistent", Binary::negative}};
        return a;
    }
    throw std::invalid_argument("unknown adapter: " + name + " (known: true, consistency)");
}

IngestResult ingest_true_task(const std::filesystem::path& path, const TaskAdapter& adapter,
                              const std::string& task_name) {
    char delimiter = adapter.delimiter;
    if (delimiter == 0) delimiter = to_lower_ascii(path.extension().string()) == ".tsv" ? '\t' : ',';
    const auto rows = parse_delimited(read_file(path), delimiter);
    if (rows.empty()) throw std::runtime_error("empty file: " + path.string());

    const auto& header = rows.front();
    auto column = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (trim(header[i]) == name) return i;
        }
        throw std::runtime_error("missing column: " + name + " in " + path.string());
    };
    const std::size_t g = column(adapter.grounding_column), c = column(adapter.claim_column),
                      l = column(adapter.label_column);
    const std::optional<std::size_t> id_col =
        adapter.id_column.empty() ? std::nullopt : std::optional<std::size_t>(column(adapter.id_column));
    if (rows.size() == 1) throw std::runtime_error("empty file (header only): " + path.string());

    IngestResult out;
    const std::string task = task_name.empty() ? path.stem().string() : task_name;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const std::size_t needed = std::max({g, c, l, id_col.value_or(0)});
        if (row.size() <= needed) {
            throw std::runtime_error("row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                                     " fields, expected at least " + std::to_string(needed + 1));
        }
        const std::string label_text = to_lower_ascii(trim(row[l]));
        auto it = adapter.label_map.find(label_text);
        if (it == adapter.label_map.end()) {
            throw std::runtime_error("row " + std::to_string(r + 1) + ": label '" + row[l] + "' not in adapter " +
                                     adapter.name);
        }
        EvalInstance inst;
        inst.id = id_col ? row[*id_col] : task + "-" + std::to_string(r);
        inst.task = task;
        inst.grounding = row[g];
        inst.claim = row[c];
        inst.gold = it->second;
        if (trim(inst.grounding).empty() || trim(inst.claim).empty()) {
            throw std::runtime_error("row " + std::to_string(r + 1) + ": empty grounding or claim");
        }
        (inst.gold == Binary::positive ? out.positives : out.negatives)++;
        out.instances.push_back(std::move(inst));
    }
    out.rows = out.instances.size();
    return out;
}

}  // namespace nliforge::eval
