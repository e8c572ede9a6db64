#include "nliforge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

#include "nliforge/text.hpp"

namespace nliforge {

using json = nlohmann::json;

std::string_view to_string(Label label) {
    switch (label) {
        case Label::entailment: return "entailment";
        case Label::contradiction: return "contradiction";
        case Label::neutral: return "neutral";
    }
    return "unknown";
}

std::string_view to_string(LengthCategory length) {
    switch (length) {
        case LengthCategory::short_text: return "short";
        case LengthCategory::paragraph: return "paragraph";
    }
    return "unknown";
}

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
        case Split::human_holdout: return "human_holdout";
        case Split::unassigned: return "unassigned";
    }
    return "unknown";
}

std::optional<Label> parse_label(std::string_view text) {
    const std::string key = to_lower_ascii(trim(text));
    for (Label l : kAllLabels) {
        if (key == to_string(l)) return l;
    }
    return std::nullopt;
}

std::optional<LengthCategory> parse_length(std::string_view text) {
    const std::string key = to_lower_ascii(trim(text));
    for (LengthCategory l : kAllLengths) {
        if (key == to_string(l)) return l;
    }
    return std::nullopt;
}

std::optional<Split> parse_split(std::string_view text) {
    const std::string key = to_lower_ascii(trim(text));
    for (Split s : kAllSplits) {
        if (key == to_string(s)) return s;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------

DomainRoster::DomainRoster(std::vector<std::string> names) {
    std::set<std::string> seen;
    names_.reserve(names.size());
    for (const auto& raw : names) {
        std::string name = normalize_name(raw);
        if (name.empty()) throw std::invalid_argument("empty domain name");
        if (!seen.insert(name).second) throw std::invalid_argument("duplicate domain name: " + name);
        names_.push_back(std::move(name));
    }
}

DomainRoster DomainRoster::default_roster() {
    return DomainRoster({
        "ads", "blog post", "book reviews", "casual dialog", "chat message", "email", "essay", "fans forum",
        "forum post", "google play reviews", "government documents", "legal", "legal document", "medical",
        "movie plot", "movie reviews", "news", "news comments", "news headlines", "phone conversation",
        "place reviews", "quora", "recipe", "reddit comment", "reddit title", "research paper abstract",
        "scientific article", "shopping reviews", "song lyrics", "sports news", "story for kids", "student forum",
        "student papers", "support forum", "travel guides", "twitter", "wikipedia", "youtube comments",
    });
}

bool DomainRoster::contains(std::string_view name) const {
    const std::string key = normalize_name(name);
    return std::find(names_.begin(), names_.end(), key) != names_.end();
}

void DomainRoster::set_quota(const std::string& domain, LengthCategory length, std::size_t quota) {
    const std::string key = normalize_name(domain);
    if (!contains(key)) throw std::invalid_argument("quota for domain not in roster: " + key);
    quotas_[{key, length}] = quota;
}

std::optional<std::size_t> DomainRoster::quota(const std::string& domain, LengthCategory length) const {
    auto it = quotas_.find({normalize_name(domain), length});
    if (it == quotas_.end()) return std::nullopt;
    return it->second;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<const char*, 7> kFields{"id", "domain", "length", "premise", "hypothesis", "label", "split"};

}  // namespace

ValidationReport validate_example(const json& record, const DomainRoster* roster) {
    ValidationReport report;
    auto& v = report.violations;
    if (!record.is_object()) {
        v.emplace_back("record is not an object");
        return report;
    }
    for (const char* field : kFields) {
        if (!record.contains(field)) {
            v.emplace_back(std::string("missing field: ") + field);
        } else if (!record[field].is_string()) {
            v.emplace_back(std::string("field is not a string: ") + field);
        }
    }
    auto str = [&](const char* field) -> std::optional<std::string> {
        if (record.contains(field) && record[field].is_string()) return record[field].get<std::string>();
        return std::nullopt;
    };
    if (auto id = str("id"); id && trim(*id).empty()) v.emplace_back("empty id");
    if (auto p = str("premise"); p && trim(*p).empty()) v.emplace_back("empty premise");
    if (auto h = str("hypothesis"); h && trim(*h).empty()) v.emplace_back("empty hypothesis");
    if (auto l = str("label"); l && !parse_label(*l)) v.emplace_back("unknown label");
    if (auto l = str("length"); l && !parse_length(*l)) v.emplace_back("unknown length");
    if (auto s = str("split"); s && !parse_split(*s)) v.emplace_back("unknown split");
    if (auto d = str("domain")) {
        if (trim(*d).empty()) {
            v.emplace_back("empty domain");
        } else if (roster != nullptr && !roster->contains(*d)) {
            v.emplace_back("domain not in roster");
        }
    }
    return report;
}

ValidationReport validate_example(const NliExample& example, const DomainRoster* roster) {
    return validate_example(json(to_json(example)), roster);
}

// ---------------------------------------------------------------------------

void StatsAccumulator::add(const NliExample& example) {
    ++total_;
    ++labels_[index_of(example.label)];
    ++domains_[example.domain];
    const std::size_t len = index_of(example.length);
    ++lengths_[len];
    premise_words_[len] += word_count(example.premise);
    hypothesis_words_[len] += word_count(example.hypothesis);
}

void StatsAccumulator::add_label_count(Label label, std::size_t n) {
    total_ += n;
    labels_[index_of(label)] += n;
}

CorpusStats StatsAccumulator::finish() const {
    if (total_ == 0) throw std::invalid_argument("empty corpus");
    CorpusStats s;
    s.total = total_;
    s.label_counts = labels_;
    for (std::size_t i = 0; i < 3; ++i) {
        s.label_fractions[i] = static_cast<double>(labels_[i]) / static_cast<double>(total_);
    }
    s.domain_counts = domains_;
    s.length_counts = lengths_;
    for (std::size_t i = 0; i < 2; ++i) {
        if (lengths_[i] == 0) continue;
        s.mean_premise_words[i] = static_cast<double>(premise_words_[i]) / static_cast<double>(lengths_[i]);
        s.mean_hypothesis_words[i] = static_cast<double>(hypothesis_words_[i]) / static_cast<double>(lengths_[i]);
    }
    return s;
}

CorpusStats compute_stats(std::span<const NliExample> corpus) {
    StatsAccumulator acc;
    for (const auto& ex : corpus) acc.add(ex);
    return acc.finish();
}

std::map<Split, CorpusStats> compute_split_stats(std::span<const NliExample> corpus) {
    std::map<Split, StatsAccumulator> accs;
    for (const auto& ex : corpus) accs[ex.split].add(ex);
    std::map<Split, CorpusStats> out;
    for (const auto& [split, acc] : accs) out.emplace(split, acc.finish());
    return out;
}

nlohmann::ordered_json stats_to_json(const CorpusStats& stats) {
    nlohmann::ordered_json j;
    j["total"] = stats.total;
    for (Label l : kAllLabels) {
        j["labels"][std::string(to_string(l))] = {{"count", stats.count(l)}, {"fraction", stats.fraction(l)}};
    }
    for (LengthCategory len : kAllLengths) {
        const std::size_t i = index_of(len);
        j["lengths"][std::string(to_string(len))] = {
            {"count", stats.length_counts[i]},
            {"mean_premise_words", stats.mean_premise_words[i]},
            {"mean_hypothesis_words", stats.mean_hypothesis_words[i]},
        };
    }
    j["domains"] = nlohmann::ordered_json::object();
    for (const auto& [domain, n] : stats.domain_counts) j["domains"][domain] = n;
    return j;
}

std::string format_stats_table(std::span<const NliExample> corpus) {
    const CorpusStats all = compute_stats(corpus);
    const auto per_split = compute_split_stats(corpus);

    std::ostringstream out;
    auto row = [&](std::string_view name, const CorpusStats& s) {
        out << std::left << std::setw(16) << name << std::right << std::setw(12) << format_count(s.total) << "   "
            << format_count(s.count(Label::entailment)) << " / " << format_count(s.count(Label::contradiction))
            << " / " << format_count(s.count(Label::neutral)) << '\n';
    };
    out << std::left << std::setw(16) << "Split" << std::right << std::setw(12) << "Size"
        << "   # Labels (E/C/N)\n";
    row("All", all);
    for (const auto& [split, s] : per_split) row(to_string(split), s);
    out << "\nLabel fractions: " << format_percent(all.fraction(Label::entailment)) << " entailment, "
        << format_percent(all.fraction(Label::contradiction)) << " contradiction, "
        << format_percent(all.fraction(Label::neutral)) << " neutral\n";
    for (LengthCategory len : kAllLengths) {
        const std::size_t i = index_of(len);
        if (all.length_counts[i] == 0) continue;
        out << "Mean words (" << to_string(len) << "): premise " << std::fixed << std::setprecision(1)
            << all.mean_premise_words[i] << ", hypothesis " << all.mean_hypothesis_words[i] << '\n';
    }
    out << "Domains: " << all.domain_counts.size() << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json to_json(const NliExample& ex) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["domain"] = ex.domain;
    j["length"] = to_string(ex.length);
    j["premise"] = ex.premise;
    j["hypothesis"] = ex.hypothesis;
    j["label"] = to_string(ex.label);
    j["split"] = to_string(ex.split);
    return j;
}

NliExample example_from_json(const json& record, const DomainRoster* roster) {
    const ValidationReport report = validate_example(record, roster);
    if (!report.ok()) {
        std::string msg = "invalid record:";
        for (const auto& v : report.violations) msg += " [" + v + "]";
        throw CorpusError(msg);
    }
    NliExample ex;
    ex.id = record["id"].get<std::string>();
    ex.domain = record["domain"].get<std::string>();
    ex.length = *parse_length(record["length"].get<std::string>());
    ex.premise = record["premise"].get<std::string>();
    ex.hypothesis = record["hypothesis"].get<std::string>();
    ex.label = *parse_label(record["label"].get<std::string>());
    ex.split = *parse_split(record["split"].get<std::string>());
    return ex;
}

std::string serialize_corpus(std::span<const NliExample> corpus) {
    std::string out;
    std::unordered_set<std::string> ids;
    for (const auto& ex : corpus) {
        const auto report = validate_example(ex);
        if (!report.ok()) throw CorpusError("cannot write invalid example '" + ex.id + "': " + report.violations.front());
        if (!ids.insert(ex.id).second) throw CorpusError("duplicate id: " + ex.id);
        out += to_json(ex).dump();
        out.push_back('\n');
    }
    return out;
}

Corpus parse_corpus(std::string_view contents, const DomainRoster* roster) {
    Corpus corpus;
    std::unordered_set<std::string> ids;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < contents.size()) {
        std::size_t end = contents.find('\n', pos);
        if (end == std::string_view::npos) end = contents.size();
        std::string_view line = contents.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw CorpusError(std::string("malformed JSON: ") + e.what(), line_no);
        }
        NliExample ex;
        try {
            ex = example_from_json(record, roster);
        } catch (const CorpusError& e) {
            throw CorpusError(e.what(), line_no);
        }
        if (!ids.insert(ex.id).second) throw CorpusError("duplicate id: " + ex.id, line_no);
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_corpus(std::span<const NliExample> corpus, const std::filesystem::path& path) {
    write_file(path, serialize_corpus(corpus));
}

Corpus read_corpus(const std::filesystem::path& path, const DomainRoster* roster) {
    return parse_corpus(read_file(path), roster);
}

}  // namespace nliforge
