#include "nliforge/discovery.hpp"

#include <algorithm>
#include <stdexcept>

#include "nliforge/brace_format.hpp"
#include "nliforge/parallel.hpp"
#include "nliforge/text.hpp"

namespace nliforge::discovery {

using json = nlohmann::json;

const char* const kDefaultInstruction =
    "Each example below is a piece of text together with the domain it comes from and its length "
    "(short for a single sentence, paragraph for a longer text). Write a new example in the same format.";

const std::vector<SeedTriple>& default_seeds() {
    using L = LengthCategory;
    static const std::vector<SeedTriple> seeds{
        {"news headlines", L::short_text, "Congress approves debt deal, averting a US default"},
        {"news headlines", L::short_text, "Man airlifted to hospital from Skye beauty spot"},
        {"news", L::short_text,
         "Expectations were set high by the WSC concerning what the event would do for upcoming Indian "
         "entrepreneurs."},
        {"news", L::short_text,
         "But despite high promises, it didn’t take long for the first day of the convention to be plunged "
         "into chaos."},
        {"shopping reviews", L::paragraph,
         "Good value for the seventy eight dollars that I paid for it. easy to change the filter. Quite on high. "
         "Haven't had it long enough to say how well it filters the air but I can see lint and dust on the filter "
         "pre screen. And I've only had it nine days I think. Love that I can turn the lights off."},
        {"shopping reviews", L::short_text,
         "my first impressions are that's the Google Pixel 7 is a nice phone, BUT not as good as the moto g power "
         "in terms of ease of use and functionality."},
        {"shopping reviews", L::short_text,
         "Battery has yet to be determined on the Pixel, but from a full charge, I'm down to 56% after 2 hours of "
         "use."},
        {"wikipedia", L::paragraph,
         "Alfred was baptised by Frederick Cornwallis, Archbishop of Canterbury, in the Great Council Chamber at "
         "St James's Palace on 21 October 1780. His godparents were his elder siblings George, Prince of Wales; "
         "Prince Frederick; and Charlotte, Princess Royal. Alfred was a delicate child."},
        {"wikipedia", L::short_text,
         "The premise of Two Hundred Rabbits was based on a dream that author Lonzo Anderson had after reading a "
         "French folk tale."},
        {"movie reviews", L::paragraph,
         "As usual, James Cameron shows us his creative genius. The story is very different from the first, and I "
         "don't want to give out any story until you've seen it. It is worth watching, and if you own the first it "
         "is also worth buying. My only complaint, and it is BIG, is it turns out to only be in 480p "
         "resolution...not even 1080p or 4K. It looks good if you play it in YouTube, but still. It should be in "
         "4K."},
        {"movie reviews", L::short_text,
         "The actor portraying Mr. Darcy had no concept of the kind of man Darcy is or his nature."},
        {"place reviews", L::paragraph,
         "Beautiful space which is nicely a bit secluded from the hussle at coal drop but still easy to reach. "
         "Wines were excellent, cheeses delicious, food great, and cocktails outstanding. Folks were kind and "
         "professional. Crowd was elegant but relaxed.\n\nAmazed they just opened three days ago, they operate like "
         "they have been at it forever. Loved every minute!"},
        {"place reviews", L::short_text,
         "The steep stairs need to be negotiated with caution especially after indulging in bout of revelry."},
        {"place reviews", L::short_text, "I waited an hour. The doctor was terribly stressed. She didn't answer questions."},
        {"twitter", L::short_text, "Sevilla is Red and White ♥"},
        {"twitter", L::short_text, "Lil X just asked if there are police cats, since there are police dogs :))"},
        {"reddit post", L::paragraph,
         "Hey there everyone! I often see people asking where to start when getting into prog metal, so I thought "
         "instead of answering every one of them individually I'd make a list. I'm not going into too much depth "
         "because otherwise this will become endless, but I'll try to give a brief explanation of all styles I'm "
         "going over. So let's get started!"},
        {"reddit post", L::short_text, "I am someone who hates doing laundry."},
    };
    return seeds;
}

std::vector<std::string> seed_domains(std::span<const SeedTriple> seeds) {
    std::vector<std::string> out;
    for (const auto& s : seeds) {
        std::string name = normalize_name(s.domain);
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
    }
    return out;
}

std::string render_triple(const SeedTriple& triple) {
    return brace::render_field("domain", triple.domain) + " " +
           brace::render_field("length", to_string(triple.length)) + " " + brace::render_field("text", triple.text);
}

std::string build_discovery_prompt(std::span<const SeedTriple> seeds, const std::string& instruction) {
    if (seeds.empty()) throw std::invalid_argument("discovery prompt needs at least one seed");
    std::string prompt;
    if (!instruction.empty()) {
        prompt += instruction;
        prompt += "\n\n";
    }
    for (const auto& seed : seeds) {
        prompt += render_triple(seed);
        prompt += '\n';
    }
    return prompt;
}

std::string_view to_string(ParseFailure failure) {
    switch (failure) {
        case ParseFailure::missing_domain: return "missing domain field";
        case ParseFailure::missing_length: return "missing length field";
        case ParseFailure::missing_text: return "missing text field";
        case ParseFailure::unknown_length: return "unknown length category";
        case ParseFailure::empty_field: return "empty field";
    }
    return "unknown";
}

ParsedTriple parse_triple(std::string_view completion) {
    auto fail = [](ParseFailure f) { return ParsedTriple{std::nullopt, f}; };
    auto domain = brace::extract_field(completion, "domain");
    if (!domain) return fail(ParseFailure::missing_domain);
    auto length = brace::extract_field(completion, "length", domain->end);
    if (!length) return fail(ParseFailure::missing_length);
    auto text = brace::extract_field(completion, "text", length->end);
    if (!text) return fail(ParseFailure::missing_text);
    auto category = parse_length(length->value);
    if (!category) return fail(ParseFailure::unknown_length);
    if (trim(domain->value).empty() || trim(text->value).empty()) return fail(ParseFailure::empty_field);
    return ParsedTriple{SeedTriple{std::move(domain->value), *category, std::move(text->value)}, std::nullopt};
}

DiscoverySample sample_domain_triples(llm::Gateway& gateway, std::span<const SeedTriple> seeds,
                                      const SamplingOptions& options) {
    DiscoverySample sample;
    if (options.n == 0) return sample;
    const std::string prompt = build_discovery_prompt(seeds, options.instruction);

    std::vector<std::string> raw(options.n);
    parallel_for(options.n, gateway.max_in_flight(), [&](std::size_t i) {
        llm::CompletionRequest req;
        req.prompt = prompt;
        req.temperature = options.temperature;
        req.max_output_tokens = options.max_output_tokens;
        req.seed = combine_seed(options.seed, i);
        raw[i] = gateway.complete(req).text;
    });

    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto parsed = parse_triple(raw[i]);
        if (parsed.triple) {
            sample.triples.push_back(std::move(*parsed.triple));
        } else {
            sample.failures.push_back(SampleFailure{i, std::move(raw[i]), *parsed.failure});
        }
    }
    return sample;
}

DomainTally tally_domains(std::span<const SeedTriple> triples, std::span<const std::string> seed_domain_names) {
    DomainTally tally;
    for (const auto& s : seed_domain_names) {
        std::string name = normalize_name(s);
        if (std::find(tally.seed_domains.begin(), tally.seed_domains.end(), name) == tally.seed_domains.end()) {
            tally.seed_domains.push_back(std::move(name));
        }
    }
    for (const auto& t : triples) {
        std::string name = normalize_name(t.domain);
        if (name.empty()) continue;
        ++tally.counts[name];
        if (std::find(tally.seed_domains.begin(), tally.seed_domains.end(), name) == tally.seed_domains.end()) {
            tally.novel.insert(name);
        }
    }
    return tally;
}

CuratedRoster curate_roster(const DomainTally& tally, std::span<const std::string> include,
                            std::span<const std::string> exclude) {
    std::set<std::string> excluded;
    for (const auto& e : exclude) excluded.insert(normalize_name(e));
    for (const auto& i : include) {
        if (excluded.count(normalize_name(i))) {
            throw std::invalid_argument("domain both included and excluded: " + normalize_name(i));
        }
    }

    std::map<std::string, std::set<std::string>> provenance;
    auto add = [&](const std::string& raw, const char* source) {
        std::string name = normalize_name(raw);
        if (name.empty() || excluded.count(name)) return;
        provenance[name].insert(source);
    };
    for (const auto& s : tally.seed_domains) add(s, "seed");
    for (const auto& [name, _] : tally.counts) add(name, "tally");
    for (const auto& i : include) add(i, "include");

    if (provenance.empty()) throw std::invalid_argument("curated roster is empty");
    std::vector<std::string> names;
    for (const auto& [name, _] : provenance) names.push_back(name);  // std::map keeps them sorted
    return CuratedRoster{DomainRoster(std::move(names)), std::move(provenance)};
}

nlohmann::ordered_json roster_to_json(const CuratedRoster& curated) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& name : curated.roster.names()) {
        nlohmann::ordered_json entry;
        entry["name"] = name;
        auto it = curated.provenance.find(name);
        entry["sources"] = it == curated.provenance.end() ? std::vector<std::string>{}
                                                          : std::vector<std::string>(it->second.begin(), it->second.end());
        nlohmann::ordered_json quota;
        for (LengthCategory len : kAllLengths) {
            if (auto q = curated.roster.quota(name, len)) quota[std::string(to_string(len))] = *q;
        }
        if (!quota.empty()) entry["quota"] = quota;
        out.push_back(std::move(entry));
    }
    return out;
}

void write_roster_file(const CuratedRoster& curated, const std::filesystem::path& path) {
    write_file(path, roster_to_json(curated).dump(2) + "\n");
}

DomainRoster read_roster_file(const std::filesystem::path& path) {
    const json j = json::parse(read_file(path));
    if (!j.is_array()) throw std::runtime_error("roster file must hold a JSON list: " + path.string());
    std::vector<std::string> names;
    std::vector<std::tuple<std::string, LengthCategory, std::size_t>> quotas;
    for (const auto& entry : j) {
        if (entry.is_string()) {
            names.push_back(entry.get<std::string>());
            continue;
        }
        const std::string name = entry.at("name").get<std::string>();
        names.push_back(name);
        if (entry.contains("quota")) {
            for (const auto& [len, q] : entry.at("quota").items()) {
                auto category = parse_length(len);
                if (!category) throw std::runtime_error("unknown length in roster quota: " + len);
                quotas.emplace_back(name, *category, q.get<std::size_t>());
            }
        }
    }
    DomainRoster roster(std::move(names));
    for (const auto& [name, len, q] : quotas) roster.set_quota(name, len, q);
    return roster;
}

std::vector<SeedTriple> read_seed_file(const std::filesystem::path& path) {
    const std::string contents = read_file(path);
    std::vector<SeedTriple> seeds;
    std::size_t line_no = 0, pos = 0;
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
            seeds.push_back(SeedTriple{j.at("domain").get<std::string>(), *len, j.at("text").get<std::string>()});
        } catch (const std::exception& e) {
            throw CorpusError(std::string("bad seed record: ") + e.what(), line_no);
        }
    }
    return seeds;
}

void write_seed_file(std::span<const SeedTriple> seeds, const std::filesystem::path& path) {
    std::string out;
    for (const auto& s : seeds) {
        nlohmann::ordered_json j;
        j["domain"] = s.domain;
        j["length"] = to_string(s.length);
        j["text"] = s.text;
        out += j.dump() + "\n";
    }
    write_file(path, out);
}

}  // namespace nliforge::discovery
