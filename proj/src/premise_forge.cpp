#include "nliforge/premise_forge.hpp"

#include <cstdio>
#include <unordered_set>

#include "nliforge/brace_format.hpp"
#include "nliforge/parallel.hpp"
#include "nliforge/text.hpp"

namespace nliforge::premises {

using json = nlohmann::json;

void PremiseBatchSpec::validate() const {
    if (per_cell == 0) throw std::invalid_argument("per_cell must be >= 1");
    if (lengths.empty()) throw std::invalid_argument("at least one length category is required");
    if (roster.empty()) throw std::invalid_argument("roster is empty");
    if (max_attempts_per_item < 1) throw std::invalid_argument("max_attempts_per_item must be >= 1");
}

std::string build_premise_prompt(const std::string& discovery_prompt, const std::string& domain,
                                 LengthCategory length) {
    return discovery_prompt + brace::render_field("domain", domain) + " " +
           brace::render_field("length", to_string(length)) + " " + brace::open_field("text");
}

std::optional<std::string> extract_premise_text(std::string_view completion) {
    std::string text = trim(brace::truncate_at_close(completion));
    if (text.empty() || text.find('{') != std::string::npos) return std::nullopt;
    return text;
}

Premise generate_premise(llm::Gateway& gateway, const PremiseRequest& request) {
    const std::string prompt = build_premise_prompt(request.discovery_prompt, request.domain, request.length);
    for (int attempt = 1; attempt <= request.max_attempts; ++attempt) {
        llm::CompletionRequest req;
        req.prompt = prompt;
        req.temperature = request.temperature;
        req.max_output_tokens = request.max_output_tokens;
        req.seed = combine_seed(request.seed, static_cast<std::uint64_t>(attempt));
        const auto response = gateway.complete(req);
        if (auto text = extract_premise_text(response.text)) {
            return Premise{{}, request.domain, request.length, std::move(*text), attempt};
        }
    }
    throw GenerationError("no usable text for (" + request.domain + ", " + std::string(to_string(request.length)) +
                              ") after " + std::to_string(request.max_attempts) + " attempts",
                          request.max_attempts);
}

std::vector<const CellReport*> GenerationReport::shortfalls() const {
    std::vector<const CellReport*> out;
    for (const auto& c : cells) {
        if (c.produced < c.target) out.push_back(&c);
    }
    return out;
}

nlohmann::ordered_json GenerationReport::to_json() const {
    nlohmann::ordered_json j;
    j["total_target"] = total_target;
    j["total_produced"] = total_produced;
    j["cells"] = nlohmann::ordered_json::array();
    j["shortfalls"] = nlohmann::ordered_json::array();
    for (const auto& c : cells) {
        nlohmann::ordered_json cell;
        cell["domain"] = c.domain;
        cell["length"] = to_string(c.length);
        cell["target"] = c.target;
        cell["produced"] = c.produced;
        cell["attempts"] = c.attempts;
        cell["retries"] = c.attempts >= c.target ? c.attempts - c.target : 0;
        if (!c.errors.empty()) cell["errors"] = c.errors;
        if (c.produced < c.target) {
            j["shortfalls"].push_back({{"domain", c.domain},
                                       {"length", to_string(c.length)},
                                       {"produced", c.produced},
                                       {"target", c.target}});
        }
        j["cells"].push_back(std::move(cell));
    }
    return j;
}

StratifiedResult generate_stratified(llm::Gateway& gateway, const PremiseBatchSpec& spec) {
    spec.validate();
    const std::string discovery_prompt = discovery::build_discovery_prompt(spec.seeds, spec.instruction);

    struct Item {
        std::size_t cell;
        std::size_t index;
    };
    StratifiedResult result;
    std::vector<Item> items;
    for (const auto& domain : spec.roster.names()) {
        for (LengthCategory len : spec.lengths) {
            CellReport cell;
            cell.domain = domain;
            cell.length = len;
            cell.target = spec.roster.quota(domain, len).value_or(spec.per_cell);
            for (std::size_t i = 0; i < cell.target; ++i) items.push_back({result.report.cells.size(), i});
            result.report.total_target += cell.target;
            result.report.cells.push_back(std::move(cell));
        }
    }

    struct Outcome {
        std::optional<Premise> premise;
        int attempts = 0;
        std::string error;
    };
    std::vector<Outcome> outcomes(items.size());
    parallel_for(items.size(), gateway.max_in_flight(), [&](std::size_t k) {
        const auto& cell = result.report.cells[items[k].cell];
        PremiseRequest req;
        req.discovery_prompt = discovery_prompt;
        req.domain = cell.domain;
        req.length = cell.length;
        req.seed = combine_seed(combine_seed(spec.seed, fnv1a64(cell.domain)),
                                (static_cast<std::uint64_t>(index_of(cell.length)) << 32) | items[k].index);
        req.max_attempts = spec.max_attempts_per_item;
        req.temperature = spec.temperature;
        req.max_output_tokens = spec.max_output_tokens;
        try {
            outcomes[k].premise = generate_premise(gateway, req);
            outcomes[k].attempts = outcomes[k].premise->attempt_count;
        } catch (const GenerationError& e) {
            outcomes[k].attempts = e.attempts();
            outcomes[k].error = e.what();
        } catch (const llm::TransportError& e) {
            outcomes[k].attempts = 1;
            outcomes[k].error = std::string("transport: ") + e.what();
        } catch (const llm::BackendError& e) {
            outcomes[k].attempts = 1;
            outcomes[k].error = std::string("backend: ") + e.what();
        }
    });

    std::size_t next_id = 1;
    for (std::size_t k = 0; k < items.size(); ++k) {
        auto& cell = result.report.cells[items[k].cell];
        cell.attempts += static_cast<std::size_t>(outcomes[k].attempts);
        if (!outcomes[k].premise) {
            cell.errors.push_back(std::move(outcomes[k].error));
            continue;
        }
        Premise p = std::move(*outcomes[k].premise);
        char id[32];
        std::snprintf(id, sizeof id, "p%07zu", next_id++);
        p.id = id;
        ++cell.produced;
        ++result.report.total_produced;
        result.premises.push_back(std::move(p));
    }
    return result;
}

DedupResult dedup_premises(std::span<const Premise> premises) {
    DedupResult out;
    std::unordered_set<std::string> seen;
    for (const auto& p : premises) {
        if (seen.insert(normalize_name(p.text)).second) {
            out.premises.push_back(p);
        } else {
            ++out.removed;
            out.removed_ids.push_back(p.id);
        }
    }
    return out;
}

nlohmann::ordered_json LengthAudit::to_json() const {
    nlohmann::ordered_json j;
    for (LengthCategory len : kAllLengths) {
        j[std::string(to_string(len))] = {{"count", counts[index_of(len)]}, {"mean_words", mean_words[index_of(len)]}};
    }
    j["flagged_domains"] = flagged_domains;
    j["warning"] = warning;
    return j;
}

LengthAudit audit_lengths(std::span<const Premise> premises) {
    LengthAudit audit;
    std::array<std::size_t, 2> words{};
    std::map<std::string, std::array<std::pair<std::size_t, std::size_t>, 2>> per_domain;  // (words, count)
    for (const auto& p : premises) {
        const std::size_t i = index_of(p.length);
        const std::size_t w = word_count(p.text);
        ++audit.counts[i];
        words[i] += w;
        auto& cell = per_domain[p.domain][i];
        cell.first += w;
        ++cell.second;
    }
    for (std::size_t i = 0; i < 2; ++i) {
        if (audit.counts[i]) audit.mean_words[i] = static_cast<double>(words[i]) / static_cast<double>(audit.counts[i]);
    }
    const std::size_t s = index_of(LengthCategory::short_text), p = index_of(LengthCategory::paragraph);
    for (const auto& [domain, cells] : per_domain) {
        if (cells[s].second == 0 || cells[p].second == 0) continue;
        const double short_mean = static_cast<double>(cells[s].first) / static_cast<double>(cells[s].second);
        const double para_mean = static_cast<double>(cells[p].first) / static_cast<double>(cells[p].second);
        if (short_mean > para_mean) audit.flagged_domains.push_back(domain);
    }
    const bool overall = audit.counts[s] && audit.counts[p] && audit.mean_words[s] > audit.mean_words[p];
    audit.warning = overall || !audit.flagged_domains.empty();
    return audit;
}

nlohmann::ordered_json to_json(const Premise& p) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["domain"] = p.domain;
    j["length"] = to_string(p.length);
    j["text"] = p.text;
    j["attempt_count"] = p.attempt_count;
    return j;
}

void write_premises(std::span<const Premise> premises, const std::filesystem::path& path) {
    std::string out;
    for (const auto& p : premises) out += to_json(p).dump() + "\n";
    write_file(path, out);
}

std::vector<Premise> read_premises(const std::filesystem::path& path) {
    const std::string contents = read_file(path);
    std::vector<Premise> out;
    std::unordered_set<std::string> ids;
    std::size_t pos = 0, line_no = 0;
    while (pos < contents.size()) {
        std::size_t end = contents.find('\n', pos);
        if (end == std::string::npos) end = contents.size();
        const std::string line = contents.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            auto len = parse_length(j.at("length").get<std::string>());
            if (!len) throw std::runtime_error("unknown length");
            Premise p{j.at("id").get<std::string>(), j.at("domain").get<std::string>(), *len,
                      j.at("text").get<std::string>(), j.value("attempt_count", 1)};
            if (trim(p.text).empty()) throw std::runtime_error("empty text");
            if (!ids.insert(p.id).second) throw std::runtime_error("duplicate id: " + p.id);
            out.push_back(std::move(p));
        } catch (const std::exception& e) {
            throw CorpusError(std::string("bad premise record: ") + e.what(), line_no);
        }
    }
    return out;
}

}  // namespace nliforge::premises
