#include "nliforge/agreement.hpp"

#include <array>
#include <cstdio>

#include "nliforge/text.hpp"

namespace nliforge::annotation {

double cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("label sequences differ in length: " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
    if (a.empty()) throw std::invalid_argument("label sequences are empty");
    const double n = static_cast<double>(a.size());
    std::size_t agree = 0;
    std::array<std::size_t, 3> ma{}, mb{};
    for (std::size_t i = 0; i < a.size(); ++i) {
        agree += a[i] == b[i];
        ++ma[index_of(a[i])];
        ++mb[index_of(b[i])];
    }
    if (agree == a.size()) return 1.0;
    const double po = static_cast<double>(agree) / n;
    double pe = 0.0;
    for (std::size_t l = 0; l < 3; ++l) pe += (static_cast<double>(ma[l]) / n) * (static_cast<double>(mb[l]) / n);
    // pe == 1 forces identical constant sequences, handled above.
    return (po - pe) / (1.0 - pe);
}

MajorityResult majority_label(std::span<const Label> votes, std::size_t threshold) {
    if (threshold == 0) throw std::invalid_argument("threshold must be >= 1");
    if (votes.size() < threshold) {
        throw std::invalid_argument(std::to_string(votes.size()) + " votes cannot reach a threshold of " +
                                    std::to_string(threshold));
    }
    std::array<std::size_t, 3> counts{};
    for (Label v : votes) ++counts[index_of(v)];
    MajorityResult r;
    for (Label l : kAllLabels) {
        if (counts[index_of(l)] < threshold) continue;
        if (r.label) {
            r.tie = true;
            r.label.reset();
            return r;
        }
        r.label = l;
    }
    return r;
}

bool is_unanimous(std::span<const Label> votes) {
    if (votes.empty()) return false;
    for (Label v : votes) {
        if (v != votes.front()) return false;
    }
    return true;
}

namespace {

std::string describe_missing(const std::vector<VoteKey>& missing) {
    std::string msg = "incomplete voting: " + std::to_string(missing.size()) + " missing vote(s)";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) {
        msg += i ? ", " : ": ";
        msg += "(" + missing[i].first + ", " + missing[i].second + ")";
    }
    if (missing.size() > 10) msg += ", ...";
    return msg;
}

}  // namespace

IncompleteVoting::IncompleteVoting(std::vector<VoteKey> missing)
    : std::runtime_error(describe_missing(missing)), missing_(std::move(missing)) {}

AgreementReport agreement_report(const VoteTable& table, const std::map<std::string, Label>& model_labels) {
    if (table.annotators.size() < 2) throw std::invalid_argument("agreement needs at least two annotators");
    if (table.example_ids.empty()) throw std::invalid_argument("no examples to report on");

    std::vector<VoteKey> missing;
    for (const auto& ex : table.example_ids) {
        for (const auto& ann : table.annotators) {
            if (!table.votes.count({ex, ann})) missing.emplace_back(ex, ann);
        }
    }
    if (!missing.empty()) throw IncompleteVoting(std::move(missing));
    if (!model_labels.empty()) {
        for (const auto& ex : table.example_ids) {
            if (!model_labels.count(ex)) throw std::invalid_argument("no model label for example " + ex);
        }
    }

    AgreementReport r;
    r.examples = table.example_ids.size();
    r.annotators = table.annotators;

    std::vector<std::vector<Label>> by_annotator(table.annotators.size());
    for (std::size_t k = 0; k < table.annotators.size(); ++k) {
        for (const auto& ex : table.example_ids) by_annotator[k].push_back(table.votes.at({ex, table.annotators[k]}));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < table.annotators.size(); ++i) {
        for (std::size_t j = i + 1; j < table.annotators.size(); ++j) {
            const double k = cohen_kappa(by_annotator[i], by_annotator[j]);
            r.pairwise.push_back({table.annotators[i], table.annotators[j], k});
            sum += k;
        }
    }
    r.average_kappa = sum / static_cast<double>(r.pairwise.size());

    std::vector<Label> model_maj, human_maj, model_una, human_una;
    for (std::size_t e = 0; e < table.example_ids.size(); ++e) {
        const std::string& ex = table.example_ids[e];
        std::vector<Label> votes;
        for (const auto& column : by_annotator) votes.push_back(column[e]);
        const auto m = majority_label(votes, table.threshold);
        if (!m.label) {
            r.no_majority.push_back(ex);
            if (m.tie) r.ties.push_back(ex);
            continue;
        }
        r.majority[ex] = *m.label;
        const bool unanimous = is_unanimous(votes);
        if (unanimous) r.unanimous.push_back(ex);
        if (!model_labels.empty()) {
            const Label model = model_labels.at(ex);
            model_maj.push_back(model);
            human_maj.push_back(*m.label);
            r.model_correct_majority += model == *m.label;
            if (unanimous) {
                model_una.push_back(model);
                human_una.push_back(*m.label);
                r.model_correct_unanimous += model == *m.label;
            }
        }
    }
    r.majority_coverage = static_cast<double>(r.majority.size()) / static_cast<double>(r.examples);
    if (!model_labels.empty()) {
        if (!model_maj.empty()) {
            r.model_accuracy_majority =
                static_cast<double>(r.model_correct_majority) / static_cast<double>(model_maj.size());
            r.model_kappa_majority = cohen_kappa(model_maj, human_maj);
        }
        if (!model_una.empty()) {
            r.model_accuracy_unanimous =
                static_cast<double>(r.model_correct_unanimous) / static_cast<double>(model_una.size());
            r.model_kappa_unanimous = cohen_kappa(model_una, human_una);
        }
    }
    return r;
}

nlohmann::ordered_json AgreementReport::to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json j;
    j["examples"] = examples;
    j["annotators"] = annotators;
    j["pairwise_kappa"] = nlohmann::ordered_json::array();
    for (const auto& p : pairwise) j["pairwise_kappa"].push_back({{"a", p.a}, {"b", p.b}, {"kappa", p.kappa}});
    j["average_kappa"] = average_kappa;
    j["majority_count"] = majority.size();
    j["majority_coverage"] = majority_coverage;
    j["unanimous_count"] = unanimous.size();
    nlohmann::ordered_json labels = nlohmann::ordered_json::object();
    for (const auto& [id, l] : majority) labels[id] = to_string(l);
    j["majority_labels"] = labels;
    j["no_majority"] = no_majority;
    j["ties"] = ties;
    j["unanimous"] = unanimous;
    j["model_accuracy_majority"] = opt(model_accuracy_majority);
    j["model_accuracy_unanimous"] = opt(model_accuracy_unanimous);
    j["model_kappa_majority"] = opt(model_kappa_majority);
    j["model_kappa_unanimous"] = opt(model_kappa_unanimous);
    return j;
}

std::string AgreementReport::format_text() const {
    auto pct = [](double v) { return format_percent(v, 2); };
    std::string out;
    out += "examples:            " + std::to_string(examples) + "\n";
    for (const auto& p : pairwise) out += "kappa " + p.a + "/" + p.b + ":  " + pct(p.kappa) + "\n";
    out += "average kappa:       " + pct(average_kappa) + "\n";
    out += "majority:            " + std::to_string(majority.size()) + "/" + std::to_string(examples) + " (" +
           pct(majority_coverage) + ")\n";
    out += "unanimous:           " + std::to_string(unanimous.size()) + "/" + std::to_string(examples) + "\n";
    if (model_accuracy_majority) {
        out += "model vs majority:   " + std::to_string(model_correct_majority) + "/" +
               std::to_string(majority.size()) + " = " + pct(*model_accuracy_majority) + ", kappa " +
               pct(*model_kappa_majority) + "\n";
    }
    if (model_accuracy_unanimous) {
        out += "model vs unanimous:  " + std::to_string(model_correct_unanimous) + "/" +
               std::to_string(unanimous.size()) + " = " + pct(*model_accuracy_unanimous) + ", kappa " +
               pct(*model_kappa_unanimous) + "\n";
    }
    return out;
}

}  // namespace nliforge::annotation
