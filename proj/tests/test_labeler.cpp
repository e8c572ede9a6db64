#include <doctest.h>

#include "nliforge/labeler.hpp"
#include "nliforge/mock_backend.hpp"

using namespace nliforge;
using namespace nliforge::labeler;

namespace {

std::vector<premises::Premise> make_premises(std::size_t n) {
    std::vector<premises::Premise> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back({"p" + std::to_string(i), "news", LengthCategory::short_text,
                       "Premise number " + std::to_string(i) + ".", 1});
    }
    return out;
}

// Valid output for every premise except those listed, which get an unclosed
// hypothesis.
std::shared_ptr<llm::MockBackend> planted_backend(const std::set<std::string>& broken_texts) {
    auto mock = std::make_shared<llm::MockBackend>();
    mock->set_fallback([broken_texts](const llm::CompletionRequest& r, std::mt19937_64&) {
        for (const auto& t : broken_texts) {
            if (r.prompt.find("premise: {" + t + "}") != std::string::npos) return std::string("never closed");
        }
        return std::string("Something holds.} label: {Neutral}");
    });
    return mock;
}

llm::Gateway gateway_for(std::shared_ptr<llm::MockBackend> mock) {
    return llm::Gateway(std::move(mock), {}, std::make_shared<llm::VirtualClock>());
}

}  // namespace

TEST_CASE("labeler prompt") {
    const std::string prompt = build_labeler_input(kDefaultInstruction, "The sky is blue.");
    CHECK(prompt.size() > 12);
    CHECK(prompt.substr(prompt.size() - 13) == "hypothesis: {");
    CHECK(prompt.find("premise: {The sky is blue.}") != std::string::npos);
    for (const char* l : {"entailment", "contradiction", "neutral"}) CHECK(prompt.find(l) != std::string::npos);
    CHECK_THROWS_AS((void)build_labeler_input(kDefaultInstruction, ""), std::invalid_argument);
    CHECK_THROWS_AS((void)build_labeler_input(kDefaultInstruction, "  "), std::invalid_argument);
    CHECK_THROWS_AS((void)build_labeler_input(kDefaultInstruction, "a } b"), std::invalid_argument);
}

TEST_CASE("labeler output parsing") {
    auto ok = parse_labeler_output("hypothesis: {The sky has a color.} label: {entailment}");
    REQUIRE(ok.parsed);
    CHECK(ok.parsed->first == "The sky has a color.");
    CHECK(ok.parsed->second == Label::entailment);
    CHECK(parse_labeler_output("hypothesis: {X} label: {CONTRADICTION}").parsed->second == Label::contradiction);
    CHECK(parse_labeler_output("hypothesis: {X} label: {maybe}").discard == DiscardReason::unknown_label);
    CHECK(parse_labeler_output("hypothesis: {unclosed").discard == DiscardReason::misformatted);
    CHECK(parse_labeler_output("hypothesis: {X}").discard == DiscardReason::misformatted);
    CHECK(parse_labeler_output("hypothesis: {  } label: {neutral}").discard == DiscardReason::misformatted);
}

TEST_CASE("labeling run") {
    SUBCASE("100 premises, 1 malformed") {
        const auto ps = make_premises(100);
        auto gw = gateway_for(planted_backend({ps[17].text}));
        const auto r = label_premises(gw, ps);
        CHECK(r.examples.size() == 99);
        REQUIRE(r.discards.size() == 1);
        CHECK(r.discards[0].premise_id == "p17");
        CHECK(r.discards[0].discard_reason == DiscardReason::misformatted);
        CHECK(r.discard_rate == doctest::Approx(0.01));
        CHECK(gw.audit().size() == 100);
    }
    SUBCASE("all valid") {
        const auto ps = make_premises(20);
        auto gw = gateway_for(planted_backend({}));
        const auto r = label_premises(gw, ps);
        CHECK(r.examples.size() == 20);
        CHECK(r.discard_rate == 0.0);
        CHECK_FALSE(r.warning);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            CHECK(r.examples[i].premise == ps[i].text);
            CHECK(r.examples[i].id == ps[i].id);
            CHECK(r.examples[i].label == Label::neutral);
            CHECK(r.examples[i].split == Split::unassigned);
        }
    }
    SUBCASE("3% discards warn against the 1% expectation") {
        const auto ps = make_premises(100);
        auto gw = gateway_for(planted_backend({ps[1].text, ps[50].text, ps[99].text}));
        const auto r = label_premises(gw, ps);
        CHECK(r.discard_rate == doctest::Approx(0.03));
        CHECK(r.warning);
        CHECK(r.warning_message.find("1%") != std::string::npos);
        CHECK(r.summary_json()["warning"] == true);
        CHECK(r.summary_json()["discard_reasons"]["misformatted"] == 3);
    }
    SUBCASE("transport errors are counted apart from discards") {
        class Failing final : public llm::Backend {
        public:
            llm::BackendReply send(const llm::CompletionRequest& r) override {
                if (r.prompt.find("number 3.") != std::string::npos) return {503, "", nullptr, "down"};
                return {200, "H.} label: {entailment}", nullptr, {}};
            }
            std::string id() const override { return "failing"; }
        };
        llm::GatewayPolicy policy;
        policy.max_retries = 1;
        llm::Gateway gw(std::make_shared<Failing>(), policy, std::make_shared<llm::VirtualClock>());
        const auto ps = make_premises(10);
        const auto r = label_premises(gw, ps);
        CHECK(r.examples.size() == 9);
        CHECK(r.discards.empty());
        REQUIRE(r.transport_failures.size() == 1);
        CHECK(r.transport_failures[0].premise_id == "p3");
        CHECK(gw.audit().size() == 11);
    }
    SUBCASE("deterministic with the synthetic generator") {
        const auto ps = make_premises(30);
        auto run = [&] {
            auto mock = std::make_shared<llm::MockBackend>(std::map<std::string, std::string>{},
                                                           llm::synthetic_generator());
            auto gw = gateway_for(mock);
            return label_premises(gw, ps).examples;
        };
        CHECK(run() == run());
    }
}

TEST_CASE("discard log") {
    const auto path = std::filesystem::temp_directory_path() / "nliforge_discards.jsonl";
    std::vector<LabelerOutput> d{{"p1", "raw }", std::nullopt, DiscardReason::unknown_label}};
    write_discard_log(d, path);
    const auto j = nlohmann::json::parse(read_file(path));
    CHECK(j["premise_id"] == "p1");
    CHECK(j["reason"] == "unknown_label");
    std::filesystem::remove(path);
}
