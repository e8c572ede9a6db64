#include "nliforge/assembler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "nliforge/text.hpp"

namespace nliforge::assembly {

std::string_view to_string(StratumKey key) {
    switch (key) {
        case StratumKey::label: return "label";
        case StratumKey::domain: return "domain";
        case StratumKey::length: return "length";
    }
    return "unknown";
}

std::optional<StratumKey> parse_stratum_key(std::string_view text) {
    const std::string key = to_lower_ascii(trim(text));
    for (StratumKey k : {StratumKey::label, StratumKey::domain, StratumKey::length}) {
        if (key == to_string(k)) return k;
    }
    return std::nullopt;
}

void SplitSpec::validate() const {
    auto in_open_unit = [](double f) { return std::isfinite(f) && f > 0.0 && f < 1.0; };
    if (!in_open_unit(dev_fraction)) throw std::invalid_argument("dev fraction must lie in (0,1)");
    if (!in_open_unit(test_fraction)) throw std::invalid_argument("test fraction must lie in (0,1)");
    if (dev_fraction + test_fraction >= 1.0) throw std::invalid_argument("dev + test fractions must sum to < 1");
}

nlohmann::ordered_json SplitSpec::to_json() const {
    nlohmann::ordered_json j;
    j["holdout_count"] = holdout_count;
    j["dev_fraction"] = dev_fraction;
    j["test_fraction"] = test_fraction;
    j["seed"] = seed;
    std::vector<std::string> keys;
    for (auto k : stratify_by) keys.emplace_back(to_string(k));
    j["stratify_by"] = keys;
    j["draw_size_rule"] = "ceil(fraction * remainder_after_holdout)";
    return j;
}

std::vector<std::size_t> apportion(std::span<const std::size_t> sizes, std::size_t total) {
    const std::size_t n = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (total > n) throw std::invalid_argument("cannot draw more than the population");
    std::vector<std::size_t> out(sizes.size(), 0);
    if (n == 0 || total == 0) return out;
    std::vector<std::pair<unsigned __int128, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const unsigned __int128 scaled = static_cast<unsigned __int128>(total) * sizes[i];
        out[i] = static_cast<std::size_t>(scaled / n);
        assigned += out[i];
        remainders.emplace_back(scaled % n, i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[remainders[k].second];
    return out;
}

std::string stratum_of(const NliExample& ex, const std::set<StratumKey>& keys) {
    std::string out;
    for (StratumKey k : keys) {
        if (!out.empty()) out += '|';
        switch (k) {
            case StratumKey::label: out += to_string(ex.label); break;
            case StratumKey::domain: out += normalize_name(ex.domain); break;
            case StratumKey::length: out += to_string(ex.length); break;
        }
    }
    return out;
}

namespace {

// Draws `count` indices from `pool` (stratified by `keys`) and removes them
// from the pool. Pool order is preserved for what remains.
std::vector<std::size_t> draw(std::span<const NliExample> examples, std::vector<std::size_t>& pool, std::size_t count,
                              const std::set<StratumKey>& keys, std::mt19937_64& rng) {
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t idx : pool) strata[stratum_of(examples[idx], keys)].push_back(idx);
    std::vector<std::size_t> sizes;
    for (const auto& [_, members] : strata) sizes.push_back(members.size());
    const auto quota = apportion(sizes, count);

    std::vector<std::size_t> chosen;
    std::size_t s = 0;
    for (auto& [_, members] : strata) {
        std::shuffle(members.begin(), members.end(), rng);
        chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[s++]));
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::size_t> rest;
    rest.reserve(pool.size() - chosen.size());
    std::set_difference(pool.begin(), pool.end(), chosen.begin(), chosen.end(), std::back_inserter(rest));
    pool = std::move(rest);
    return chosen;
}

std::size_t fraction_count(double fraction, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

}  // namespace

SplitSizes plan_split_sizes(std::size_t total, const SplitSpec& spec) {
    spec.validate();
    if (total < spec.holdout_count) {
        throw std::invalid_argument("corpus has " + std::to_string(total) + " examples, fewer than the " +
                                    std::to_string(spec.holdout_count) + " requested for the holdout");
    }
    SplitSizes s;
    s.holdout = spec.holdout_count;
    const std::size_t remainder = total - s.holdout;
    s.dev = fraction_count(spec.dev_fraction, remainder);
    s.test = fraction_count(spec.test_fraction, remainder);
    if (s.dev + s.test > remainder) throw std::invalid_argument("dev + test exceed the remaining examples");
    s.train = remainder - s.dev - s.test;
    return s;
}

AssemblyResult assemble(std::span<const NliExample> examples, const SplitSpec& spec) {
    const SplitSizes sizes = plan_split_sizes(examples.size(), spec);
    for (const auto& ex : examples) {
        if (ex.split != Split::unassigned) throw std::invalid_argument("example already assigned to a split: " + ex.id);
    }

    std::vector<std::size_t> pool(examples.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::mt19937_64 holdout_rng(combine_seed(spec.seed, 1));
    std::mt19937_64 dev_rng(combine_seed(spec.seed, 2));
    std::mt19937_64 test_rng(combine_seed(spec.seed, 3));

    AssemblyResult result;
    result.corpus.assign(examples.begin(), examples.end());
    auto mark = [&](const std::vector<std::size_t>& ids, Split split) {
        for (std::size_t i : ids) result.corpus[i].split = split;
        result.sizes[split] = ids.size();
    };

    mark(draw(examples, pool, sizes.holdout, spec.stratify_by, holdout_rng), Split::human_holdout);
    mark(draw(examples, pool, sizes.dev, spec.stratify_by, dev_rng), Split::dev);
    mark(draw(examples, pool, sizes.test, spec.stratify_by, test_rng), Split::test);
    mark(pool, Split::train);
    return result;
}

// ---------------------------------------------------------------------------

SplitBalance label_balance(const std::array<std::size_t, 3>& counts, double tolerance) {
    SplitBalance b;
    b.label_counts = counts;
    b.size = counts[0] + counts[1] + counts[2];
    for (std::size_t i = 0; i < 3; ++i) {
        b.label_fractions[i] = b.size ? static_cast<double>(counts[i]) / static_cast<double>(b.size) : 0.0;
        const double dev = std::abs(b.label_fractions[i] - 1.0 / 3.0);
        if (b.size && dev > tolerance) {
            b.flags.push_back("label " + std::string(to_string(kAllLabels[i])) + " fraction " +
                              format_percent(b.label_fractions[i]) + " outside 1/3 ± " + format_percent(tolerance));
        }
    }
    return b;
}

bool BalanceReport::pass() const {
    if (!cell_flags.empty()) return false;
    return std::all_of(splits.begin(), splits.end(), [](const auto& s) { return s.flags.empty(); });
}

nlohmann::ordered_json BalanceReport::to_json() const {
    nlohmann::ordered_json j;
    j["pass"] = pass();
    j["max_label_deviation"] = max_label_deviation;
    j["splits"] = nlohmann::ordered_json::array();
    for (const auto& s : splits) {
        nlohmann::ordered_json e;
        e["split"] = s.name;
        e["size"] = s.size;
        for (Label l : kAllLabels) {
            e["labels"][std::string(to_string(l))] = {{"count", s.label_counts[index_of(l)]},
                                                      {"fraction", s.label_fractions[index_of(l)]}};
        }
        e["flags"] = s.flags;
        j["splits"].push_back(std::move(e));
    }
    j["cells"] = nlohmann::ordered_json::array();
    for (const auto& [cell, n] : cell_counts) {
        j["cells"].push_back({{"domain", cell.first}, {"length", to_string(cell.second)}, {"count", n}});
    }
    j["cell_flags"] = cell_flags;
    return j;
}

BalanceReport verify_balance(std::span<const NliExample> corpus, const BalanceTolerances& tol,
                             const DomainRoster* roster) {
    BalanceReport report;
    std::array<std::size_t, 3> all{};
    std::map<Split, std::array<std::size_t, 3>> per_split;
    for (const auto& ex : corpus) {
        ++all[index_of(ex.label)];
        ++per_split[ex.split][index_of(ex.label)];
        ++report.cell_counts[{normalize_name(ex.domain), ex.length}];
    }
    auto add = [&](std::string name, const std::array<std::size_t, 3>& counts) {
        SplitBalance b = label_balance(counts, tol.label);
        b.name = std::move(name);
        for (double f : b.label_fractions) {
            if (b.size) report.max_label_deviation = std::max(report.max_label_deviation, std::abs(f - 1.0 / 3.0));
        }
        report.splits.push_back(std::move(b));
    };
    add("all", all);
    for (const auto& [split, counts] : per_split) add(std::string(to_string(split)), counts);

    if (roster != nullptr) {
        for (const auto& name : roster->names()) {
            for (LengthCategory len : kAllLengths) report.cell_counts.try_emplace({name, len}, 0);
        }
    }
    if (!report.cell_counts.empty()) {
        const double mean = static_cast<double>(corpus.size()) / static_cast<double>(report.cell_counts.size());
        for (const auto& [cell, n] : report.cell_counts) {
            double expected = mean;
            if (roster != nullptr) {
                if (auto q = roster->quota(cell.first, cell.second)) expected = static_cast<double>(*q);
            }
            const double slack = expected * tol.cell + 1e-9;
            if (std::abs(static_cast<double>(n) - expected) > slack) {
                report.cell_flags.push_back(cell.first + "/" + std::string(to_string(cell.second)) + ": " +
                                            std::to_string(n) + " examples, expected about " +
                                            std::to_string(static_cast<long long>(std::llround(expected))));
            }
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

void AblationSpec::validate() const {
    if (sizes.empty()) throw std::invalid_argument("ablation needs at least one size");
    if (sizes.front() == 0) throw std::invalid_argument("ablation sizes must be positive");
    for (std::size_t i = 1; i < sizes.size(); ++i) {
        if (sizes[i] <= sizes[i - 1]) throw std::invalid_argument("ablation sizes must be strictly increasing");
    }
}

AblationSpec AblationSpec::scaled(std::size_t divisor, std::uint64_t seed) {
    AblationSpec spec;
    for (auto& s : spec.sizes) s /= divisor;
    spec.seed = seed;
    return spec;
}

std::vector<std::size_t> stratified_order(std::span<const NliExample> examples, std::size_t count,
                                          std::uint64_t seed) {
    if (count > examples.size()) throw std::invalid_argument("requested more examples than available");
    std::array<std::vector<std::size_t>, 3> queues;
    for (std::size_t i = 0; i < examples.size(); ++i) queues[index_of(examples[i].label)].push_back(i);
    std::mt19937_64 rng(combine_seed(seed, 0xab1a7e));
    for (auto& q : queues) std::shuffle(q.begin(), q.end(), rng);

    // Proportionate-fair interleaving: label l's (j+1)-th pick has window
    // [floor(j*N/n_l), ceil((j+1)*N/n_l)); the eligible label with the earliest
    // window end goes next. This keeps |taken_l - t*n_l/N| < 1 for every
    // prefix length t.
    using u128 = unsigned __int128;
    const u128 total = examples.size();
    std::array<std::size_t, 3> taken{};
    std::vector<std::size_t> order;
    order.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
        std::optional<std::size_t> best;
        u128 best_deadline = 0;
        for (std::size_t l = 0; l < 3; ++l) {
            const u128 n = queues[l].size();
            if (taken[l] >= queues[l].size()) continue;
            const u128 release = (u128(taken[l]) * total) / n;
            if (release > t) continue;
            const u128 deadline = ((u128(taken[l]) + 1) * total + n - 1) / n;
            if (!best || deadline < best_deadline) {
                best = l;
                best_deadline = deadline;
            }
        }
        if (!best) throw std::logic_error("stratified ordering found no eligible label");
        order.push_back(queues[*best][taken[*best]++]);
    }
    return order;
}

std::vector<Subset> subsample_nested(std::span<const NliExample> train, const AblationSpec& spec) {
    spec.validate();
    if (spec.sizes.back() > train.size()) {
        throw std::invalid_argument("ablation size " + std::to_string(spec.sizes.back()) + " exceeds train size " +
                                    std::to_string(train.size()));
    }
    const auto order = stratified_order(train, spec.sizes.back(), spec.seed);
    std::vector<Subset> out;
    for (std::size_t size : spec.sizes) {
        Subset s;
        s.size = size;
        s.examples.reserve(size);
        for (std::size_t k = 0; k < size; ++k) s.examples.push_back(train[order[k]]);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace nliforge::assembly
