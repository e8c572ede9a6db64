// Acceptance checks: one PASS/FAIL line per criterion; exit status 1 if any
// fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "nliforge/agreement.hpp"
#include "nliforge/assembler.hpp"
#include "nliforge/brace_format.hpp"
#include "nliforge/corpus.hpp"
#include "nliforge/discovery.hpp"
#include "nliforge/eval.hpp"
#include "nliforge/mock_backend.hpp"
#include "nliforge/pipeline.hpp"
#include "nliforge/premise_forge.hpp"
#include "nliforge/text.hpp"

using namespace nliforge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects the first few failure messages.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (ok) return;
        ++failures_;
        if (failures_ <= 3) messages_ += (messages_.empty() ? "" : "; ") + what;
    }
    Outcome outcome(std::string detail) const {
        if (failures_ == 0) return {true, std::move(detail)};
        return {false, std::to_string(failures_) + " failure(s): " + messages_};
    }

private:
    std::size_t failures_ = 0;
    std::string messages_;
};

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------
// Independent oracles

double pairwise_auc(const std::vector<double>& s, const std::vector<eval::Binary>& g) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (g[i] != eval::Binary::positive) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (g[j] != eval::Binary::negative) continue;
            pairs += 1;
            if (s[i] > s[j]) wins += 1;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

using Table = std::array<std::array<std::size_t, 3>, 3>;

double kappa_from_table(const Table& t) {
    double n = 0, diag = 0;
    std::array<double, 3> rows{}, cols{};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            n += double(t[i][j]);
            rows[i] += double(t[i][j]);
            cols[j] += double(t[i][j]);
        }
        diag += double(t[i][i]);
    }
    const double po = diag / n;
    double pe = 0;
    for (std::size_t i = 0; i < 3; ++i) pe += rows[i] * cols[i] / (n * n);
    if (po == 1.0) return 1.0;
    return (po - pe) / (1 - pe);
}

// Random scores on a small grid (many ties) with both classes present.
void random_case(std::mt19937_64& rng, std::size_t n, std::vector<double>& s, std::vector<eval::Binary>& g) {
    s.assign(n, 0.0);
    g.assign(n, eval::Binary::negative);
    const std::uint64_t levels = 1 + rng() % 25;
    std::bernoulli_distribution positive(0.1 + 0.8 * std::uniform_real_distribution<double>(0, 1)(rng));
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = double(rng() % levels) / double(levels) - 0.5;
        g[i] = positive(rng) ? eval::Binary::positive : eval::Binary::negative;
    }
    const auto positives = std::count(g.begin(), g.end(), eval::Binary::positive);
    if (positives == 0) g.front() = eval::Binary::positive;
    if (positives == static_cast<long>(n)) g.back() = eval::Binary::negative;
}

// ---------------------------------------------------------------------------

Outcome auc_oracle() {
    Check c;
    std::mt19937_64 rng(20240101);
    const auto t0 = Clock::now();
    double worst = 0;
    std::size_t cases = 0, max_n = 0, tied_cases = 0;
    std::vector<double> s;
    std::vector<eval::Binary> g;
    for (int k = 0; k < 1200; ++k) {
        const std::size_t n = k == 0 ? 2 : k == 1 ? 500 : 2 + rng() % 499;
        random_case(rng, n, s, g);
        const double fast = eval::roc_auc(s, g).auc;
        const double slow = pairwise_auc(s, g);
        worst = std::max(worst, std::abs(fast - slow));
        std::set<double> distinct(s.begin(), s.end());
        tied_cases += distinct.size() < s.size();
        max_n = std::max(max_n, n);
        ++cases;
    }
    const double secs = seconds_since(t0);
    c.expect(worst < 1e-12, "max |delta| " + fmt("%.3g", worst));
    c.expect(secs < 10.0, "runtime " + fmt("%.2f s", secs));
    c.expect(tied_cases > cases / 2, "too few tied cases");
    return c.outcome(std::to_string(cases) + " cases, n in [2," + std::to_string(max_n) + "], " +
                     std::to_string(tied_cases) + " with ties, max |delta| " + fmt("%.2g", worst) + ", " +
                     fmt("%.2f s", secs));
}

Outcome auc_invariances() {
    Check c;
    std::mt19937_64 rng(77);
    double worst = 0;
    std::vector<double> s;
    std::vector<eval::Binary> g;
    const std::vector<std::function<double(double)>> transforms{
        [](double x) { return std::exp(2 * x); }, [](double x) { return 3 * x + 11; },
        [](double x) { return x * x * x; }, [](double x) { return std::atan(x); }};
    for (int k = 0; k < 1000; ++k) {
        random_case(rng, 2 + rng() % 300, s, g);
        const double a = eval::roc_auc(s, g).auc;
        std::vector<eval::Binary> flipped;
        for (auto b : g) flipped.push_back(b == eval::Binary::positive ? eval::Binary::negative : eval::Binary::positive);
        const double comp = std::abs(eval::roc_auc(s, flipped).auc - (1 - a));
        std::vector<double> t;
        for (double x : s) t.push_back(transforms[k % transforms.size()](x));
        const double inv = std::abs(eval::roc_auc(t, g).auc - a);
        worst = std::max({worst, comp, inv});
    }
    c.expect(worst < 1e-12, "max deviation " + fmt("%.3g", worst));
    return c.outcome("1000 cases, complement and monotone transforms, max deviation " + fmt("%.2g", worst));
}

Outcome kappa() {
    Check c;
    constexpr auto E = Label::entailment, C = Label::contradiction, N = Label::neutral;
    std::mt19937_64 rng(4242);
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Table t{};
        std::vector<Label> a, b;
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                t[i][j] = rng() % 40 + (i == j ? rng() % 40 : 0);
                for (std::size_t k = 0; k < t[i][j]; ++k) {
                    a.push_back(kAllLabels[i]);
                    b.push_back(kAllLabels[j]);
                }
            }
        }
        std::vector<std::size_t> order(a.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<Label> sa, sb;
        for (std::size_t i : order) {
            sa.push_back(a[i]);
            sb.push_back(b[i]);
        }
        a = std::move(sa);
        b = std::move(sb);
        const double k = annotation::cohen_kappa(a, b);
        worst = std::max(worst, std::abs(k - kappa_from_table(t)));
        c.expect(std::abs(annotation::cohen_kappa(b, a) - k) < 1e-12, "symmetry");
        const std::array<Label, 3> perm{C, N, E};
        std::vector<Label> pa, pb;
        for (Label l : a) pa.push_back(perm[index_of(l)]);
        for (Label l : b) pb.push_back(perm[index_of(l)]);
        c.expect(std::abs(annotation::cohen_kappa(pa, pb) - k) < 1e-12, "permutation invariance");
    }
    c.expect(worst < 1e-12, "table mismatch " + fmt("%.3g", worst));

    // By hand: po = 3/5, marginals E2 C2 N1 on both sides, pe = 9/25.
    const std::vector<Label> h1{E, E, C, C, N}, h2{E, E, C, N, C};
    c.expect(std::abs(annotation::cohen_kappa(h1, h2) - (0.6 - 0.36) / (1 - 0.36)) < 1e-12, "hand example");

    std::vector<Label> same;
    for (int i = 0; i < 1000; ++i) same.push_back(kAllLabels[rng() % 3]);
    c.expect(annotation::cohen_kappa(same, same) == 1.0, "identical sequences");

    std::vector<Label> x, y;
    for (int i = 0; i < 100000; ++i) {
        x.push_back(kAllLabels[rng() % 3]);
        y.push_back(kAllLabels[rng() % 3]);
    }
    const double indep = annotation::cohen_kappa(x, y);
    c.expect(std::abs(indep) < 0.02, "independent kappa " + fmt("%.4f", indep));
    return c.outcome("20 tables max |delta| " + fmt("%.2g", worst) + ", identical -> 1, independent n=100000 -> " +
                     fmt("%.4f", indep));
}

Outcome majority() {
    Check c;
    std::size_t majorities = 0, unanimous = 0;
    for (Label a : kAllLabels) {
        for (Label b : kAllLabels) {
            for (Label d : kAllLabels) {
                const std::vector<Label> v{a, b, d};
                const auto m = annotation::majority_label(v);
                const bool u = annotation::is_unanimous(v);
                majorities += m.label.has_value();
                unanimous += u;
                c.expect(!u || m.label == a, "unanimous without matching majority");
            }
        }
    }
    c.expect(majorities == 21, "majorities " + std::to_string(majorities));
    c.expect(unanimous == 3, "unanimous " + std::to_string(unanimous));
    return c.outcome("27 combinations: " + std::to_string(majorities) + " majorities, " + std::to_string(unanimous) +
                     " unanimous, unanimous within majority");
}

Outcome table3() {
    Check c;
    const auto sizes = assembly::plan_split_sizes(684929, assembly::SplitSpec{});
    c.expect(sizes.train == 670739 && sizes.dev == 6845 && sizes.test == 6845 && sizes.holdout == 500,
             "split sizes " + std::to_string(sizes.train) + "/" + std::to_string(sizes.dev) + "/" +
                 std::to_string(sizes.test) + "/" + std::to_string(sizes.holdout));

    const std::array<std::array<std::size_t, 3>, 3> per_split{
        {{237325, 208676, 224738}, {2453, 2146, 2246}, {2376, 2128, 2341}}};
    StatsAccumulator all;
    std::size_t total = 0;
    for (const auto& counts : per_split) {
        StatsAccumulator split;
        for (std::size_t l = 0; l < 3; ++l) {
            split.add_label_count(kAllLabels[l], counts[l]);
            all.add_label_count(kAllLabels[l], counts[l]);
        }
        total += split.finish().total;
    }
    const auto s = all.finish();
    total += 500;
    c.expect(total == 684929, "total " + std::to_string(total));
    c.expect(s.count(Label::entailment) == 242154 && s.count(Label::contradiction) == 212950 &&
                 s.count(Label::neutral) == 229325,
             "label sums");
    const std::string fr = format_percent(s.fraction(Label::entailment)) + "/" +
                           format_percent(s.fraction(Label::contradiction)) + "/" +
                           format_percent(s.fraction(Label::neutral));
    c.expect(fr == "35.4%/31.1%/33.5%", "fractions " + fr);

    StatsAccumulator human;
    human.add_label_count(Label::entailment, 181);
    human.add_label_count(Label::contradiction, 155);
    human.add_label_count(Label::neutral, 154);
    const auto h = human.finish();
    c.expect(h.total == 490, "human total " + std::to_string(h.total));
    return c.outcome("670,739+6,845+6,845+500 = " + format_count(total) + ", labels " + fr + ", human 181+155+154 = " +
                     std::to_string(h.total));
}

// ---------------------------------------------------------------------------

struct E2eRun {
    std::map<std::string, std::string> files;  // relative path -> contents (logs excluded)
    std::size_t premises = 0;
    std::set<std::string> planted;
    std::set<std::string> discarded;
    std::vector<std::string> label_warnings;
    Corpus corpus;
};

E2eRun run_pipeline(const fs::path& out) {
    fs::remove_all(out);
    pipeline::PipelineConfig cfg;
    cfg.output_dir = out;
    cfg.seed = 2023;
    cfg.roster = "builtin";
    cfg.per_cell = 5;
    cfg.discovery_samples = 100;
    cfg.split.holdout_count = 10;
    cfg.split.dev_fraction = 0.1;
    cfg.split.test_fraction = 0.1;

    auto backend = std::make_shared<llm::MockBackend>(std::map<std::string, std::string>{},
                                                      llm::synthetic_generator());
    pipeline::Pipeline p(cfg, backend);
    E2eRun run;
    (void)p.discover_domains();
    (void)p.gen_premises();
    const auto prem = premises::read_premises(out / pipeline::artifacts::kPremises);
    run.premises = prem.size();
    // Every 50th premise gets an unclosed hypothesis: 8 of 380, about 2%.
    for (std::size_t i = 0; i < prem.size(); i += 50) {
        backend->add_rule(prem[i].text, "The claim never closes its brace");
        run.planted.insert(prem[i].id);
    }
    const auto labeled = p.gen_hypotheses();
    run.label_warnings = labeled.warnings;
    for (const auto& line : split_lines(read_file(out / pipeline::artifacts::kDiscards))) {
        run.discarded.insert(nlohmann::json::parse(line).at("premise_id").get<std::string>());
    }
    (void)p.assemble();
    run.corpus = read_corpus(out / pipeline::artifacts::kCorpus);
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), out);
        if (*rel.begin() == "logs") continue;
        run.files[rel.string()] = read_file(entry.path());
    }
    return run;
}

Outcome end_to_end() {
    Check c;
    const auto t0 = Clock::now();
    const fs::path base = fs::temp_directory_path() / "nliforge_acceptance";
    const auto a = run_pipeline(base / "a");
    const auto b = run_pipeline(base / "b");
    const double secs = seconds_since(t0);
    fs::remove_all(base);

    c.expect(a.premises == 380, "premises " + std::to_string(a.premises));
    c.expect(a.discarded == a.planted, "discards " + std::to_string(a.discarded.size()) + " vs planted " +
                                           std::to_string(a.planted.size()));
    bool warned = false;
    for (const auto& w : a.label_warnings) warned |= w.find("1%") != std::string::npos;
    c.expect(warned, "no discard-rate warning");

    std::map<Split, std::size_t> sizes;
    std::unordered_set<std::string> ids;
    for (const auto& ex : a.corpus) {
        ++sizes[ex.split];
        c.expect(ids.insert(ex.id).second, "duplicate id " + ex.id);
        c.expect(ex.split != Split::unassigned, "unassigned example " + ex.id);
    }
    const std::size_t n = a.corpus.size();
    const std::size_t remainder = n - 10;
    const auto tenth = static_cast<std::size_t>(std::ceil(0.1 * double(remainder) - 1e-9));
    c.expect(n == 380 - a.planted.size(), "corpus size " + std::to_string(n));
    c.expect(sizes[Split::human_holdout] == 10, "holdout size");
    c.expect(sizes[Split::dev] == tenth && sizes[Split::test] == tenth, "dev/test sizes");
    c.expect(sizes[Split::train] + sizes[Split::dev] + sizes[Split::test] + sizes[Split::human_holdout] == n,
             "splits not exhaustive");
    c.expect(a.files == b.files, "two runs differ");
    c.expect(secs < 60.0, "runtime " + fmt("%.1f s", secs));
    return c.outcome("380 premises, " + std::to_string(a.planted.size()) + " planted = " +
                     std::to_string(a.discarded.size()) + " discarded with warning, splits " +
                     std::to_string(sizes[Split::train]) + "/" + std::to_string(sizes[Split::dev]) + "/" +
                     std::to_string(sizes[Split::test]) + "/" + std::to_string(sizes[Split::human_holdout]) + ", " +
                     std::to_string(a.files.size()) + " files byte-identical, " + fmt("%.2f s", secs));
}

Outcome parsing() {
    Check c;
    std::mt19937_64 rng(31337);
    const std::vector<std::string> pieces{"a", "b", "Z", "9", " ", "{", ":", ",", ".", "\n", "\t", "'", "\"", "é", "—"};
    auto random_text = [&](bool allow_close) {
        std::string s;
        const std::size_t n = 1 + rng() % 60;
        for (std::size_t i = 0; i < n; ++i) s += (allow_close && rng() % 8 == 0) ? "}" : pieces[rng() % pieces.size()];
        if (trim(s).empty()) s += "x";
        return s;
    };
    for (int i = 0; i < 1000; ++i) {
        const discovery::SeedTriple t{random_text(false), i % 2 ? LengthCategory::paragraph : LengthCategory::short_text,
                                      random_text(false)};
        const auto parsed = discovery::parse_triple(discovery::render_triple(t));
        c.expect(parsed.triple && *parsed.triple == t, "round trip #" + std::to_string(i));
    }
    for (int i = 0; i < 1000; ++i) {
        const std::string s = random_text(true);
        const std::string once(brace::truncate_at_close(s));
        c.expect(brace::truncate_at_close(once) == once, "truncate_at_close not idempotent");
        if (const auto p = premises::extract_premise_text(s)) {
            c.expect(premises::extract_premise_text(*p) == p, "premise extraction not idempotent");
        }
    }
    return c.outcome("1000 triples round-trip, first-'}' truncation idempotent on 1000 strings");
}

Outcome ablation_nesting() {
    Check c;
    // Train pool in the paper's train label proportions, 1/1000 scale.
    Corpus train;
    const std::array<std::size_t, 3> counts{237, 209, 225};
    for (std::size_t l = 0; l < 3; ++l) {
        for (std::size_t i = 0; i < counts[l]; ++i) {
            NliExample ex;
            ex.id = std::string(to_string(kAllLabels[l])).substr(0, 1) + std::to_string(i);
            ex.label = kAllLabels[l];
            ex.split = Split::train;
            train.push_back(ex);
        }
    }
    const auto spec = assembly::AblationSpec::scaled(1000, 9);
    const std::vector<std::size_t> expected{1, 2, 5, 10, 50, 100, 300, 392, 671};
    c.expect(spec.sizes == expected, "scaled sizes");
    const auto subsets = assembly::subsample_nested(train, spec);
    c.expect(subsets.size() == 9, "subset count");
    const double total = double(train.size());
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        const auto& s = subsets[i].examples;
        c.expect(s.size() == expected[i], "size " + std::to_string(s.size()));
        std::array<std::size_t, 3> have{};
        for (const auto& ex : s) ++have[index_of(ex.label)];
        for (std::size_t l = 0; l < 3; ++l) {
            const double ideal = double(s.size()) * double(counts[l]) / total;
            c.expect(std::abs(double(have[l]) - ideal) < 1.0, "label share off at size " + std::to_string(s.size()));
        }
        if (i > 0) {
            std::unordered_set<std::string> bigger;
            for (const auto& ex : s) bigger.insert(ex.id);
            for (const auto& ex : subsets[i - 1].examples) c.expect(bigger.count(ex.id) == 1, "not nested");
        }
    }
    return c.outcome("9 nested subsets {1,2,5,10,50,100,300,392,671}, each label within one of proportional");
}

Outcome eval_sanity() {
    Check c;
    auto make_binary = [](std::size_t n, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::vector<eval::EvalInstance> v;
        for (std::size_t i = 0; i < n; ++i) {
            const bool pos = rng() % 2;
            v.push_back({"b" + std::to_string(i), "sanity", "grounding " + std::to_string(i),
                         (pos ? "supported " : "unsupported ") + std::to_string(i),
                         pos ? eval::Binary::positive : eval::Binary::negative});
        }
        return v;
    };
    const auto small = make_binary(500, 1);
    eval::FunctionScorer oracle("oracle", [](const std::string&, const std::string& h) {
        return h.rfind("supported", 0) == 0 ? eval::Distribution{0.9, 0.05, 0.05} : eval::Distribution{0.1, 0.6, 0.3};
    });
    const double auc_oracle = eval::evaluate_binary_task(oracle, small).auc.auc;
    c.expect(auc_oracle == 1.0, "oracle AUC " + fmt("%.4f", auc_oracle));

    Corpus nli;
    for (std::size_t i = 0; i < 300; ++i) {
        NliExample ex;
        ex.id = "n" + std::to_string(i);
        ex.label = kAllLabels[i % 3];
        ex.premise = "premise " + std::to_string(i);
        ex.hypothesis = std::string(to_string(ex.label));
        nli.push_back(ex);
    }
    eval::FunctionScorer nli_oracle("oracle", [](const std::string&, const std::string& h) {
        eval::Distribution d{0.1, 0.1, 0.1};
        d[index_of(*parse_label(h))] = 0.8;
        return d;
    });
    const double acc = eval::evaluate_3way(nli_oracle, nli).accuracy;
    c.expect(acc == 1.0, "oracle accuracy " + fmt("%.4f", acc));

    eval::FunctionScorer constant("constant", [](const std::string&, const std::string&) {
        return eval::Distribution{0.4, 0.3, 0.3};
    });
    const auto cr = eval::evaluate_binary_task(constant, small).auc;
    c.expect(cr.auc == 0.5 && cr.all_ties, "constant AUC " + fmt("%.4f", cr.auc));

    const auto big = make_binary(10000, 2);
    eval::FunctionScorer random("random", [](const std::string& p, const std::string& h) {
        std::mt19937_64 rng(fnv1a64(p + '\n' + h));
        const double e = std::uniform_real_distribution<double>(0, 1)(rng);
        return eval::Distribution{e, (1 - e) / 2, (1 - e) / 2};
    });
    eval::EvalOptions opts;
    opts.max_in_flight = 8;
    const double ra = eval::evaluate_binary_task(random, big, opts).auc.auc;
    c.expect(std::abs(ra - 0.5) <= 0.02, "random AUC " + fmt("%.4f", ra));
    return c.outcome("oracle AUC 1.0 and accuracy 1.0, constant AUC 0.5 (all ties), random n=10000 AUC " +
                     fmt("%.4f", ra));
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"auc-oracle-equivalence", auc_oracle},
        {"auc-invariances", auc_invariances},
        {"kappa-correctness", kappa},
        {"majority-unanimous", majority},
        {"table3-fixture", table3},
        {"end-to-end-mock-pipeline", end_to_end},
        {"parsing-grammar", parsing},
        {"ablation-nesting", ablation_nesting},
        {"evaluation-sanity", eval_sanity},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed ? 1 : 0;
}
