#include <doctest.h>

#include <random>

#include "nliforge/brace_format.hpp"
#include "nliforge/mock_backend.hpp"
#include "nliforge/text.hpp"
#include "nliforge/premise_forge.hpp"

using namespace nliforge;
using namespace nliforge::premises;

namespace {

std::shared_ptr<llm::Gateway> make_gateway(std::shared_ptr<llm::MockBackend> mock) {
    return std::make_shared<llm::Gateway>(std::move(mock), llm::GatewayPolicy{}, std::make_shared<llm::VirtualClock>());
}

PremiseRequest request_for(std::string domain, LengthCategory len) {
    PremiseRequest r;
    r.discovery_prompt = discovery::build_discovery_prompt(discovery::default_seeds());
    r.domain = std::move(domain);
    r.length = len;
    return r;
}

Premise premise(std::string id, std::string domain, LengthCategory len, std::string text) {
    return Premise{std::move(id), std::move(domain), len, std::move(text), 1};
}

}  // namespace

TEST_CASE("premise prompt ends with the open text field") {
    const std::string base = discovery::build_discovery_prompt(discovery::default_seeds());
    const std::string prompt = build_premise_prompt(base, "book reviews", LengthCategory::short_text);
    CHECK(prompt.rfind(base, 0) == 0);
    CHECK(prompt.substr(base.size()) == "domain: {book reviews} length: {short} text: {");
}

TEST_CASE("first-brace truncation") {
    CHECK(extract_premise_text("A great read.} domain: {sports") == "A great read.");
    CHECK(extract_premise_text("  spaced out  } tail") == "spaced out");
    CHECK(extract_premise_text("no close brace") == "no close brace");
    CHECK_FALSE(extract_premise_text("}"));
    CHECK_FALSE(extract_premise_text("   } x"));
    CHECK_FALSE(extract_premise_text("domain: {leak} more"));

    std::mt19937_64 rng(3);
    const std::string chars = "ab }{ \n";
    for (int i = 0; i < 300; ++i) {
        std::string s;
        for (int k = 0; k < 20; ++k) s.push_back(chars[rng() % chars.size()]);
        const auto once = brace::truncate_at_close(s);
        CHECK(brace::truncate_at_close(once) == once);
    }
}

TEST_CASE("generate_premise") {
    SUBCASE("scripted book review") {
        auto mock = std::make_shared<llm::MockBackend>();
        mock->add_rule("domain: {book reviews} length: {short} text: {", "A great read.} domain: {x");
        auto gw = make_gateway(mock);
        const auto p = generate_premise(*gw, request_for("book reviews", LengthCategory::short_text));
        CHECK(p.text == "A great read.");
        CHECK(p.attempt_count == 1);
    }
    SUBCASE("ads pass-through") {
        auto mock = std::make_shared<llm::MockBackend>();
        mock->add_rule("domain: {ads} length: {short} text: {", "50% off all rugs this weekend only!");
        auto gw = make_gateway(mock);
        const auto p = generate_premise(*gw, request_for("ads", LengthCategory::short_text));
        CHECK(p.domain == "ads");
        CHECK(p.length == LengthCategory::short_text);
        CHECK(p.text == "50% off all rugs this weekend only!");
    }
    SUBCASE("empty output retries, then fails") {
        auto mock = std::make_shared<llm::MockBackend>();
        mock->add_rule("text: {", "}");
        auto gw = make_gateway(mock);
        auto req = request_for("ads", LengthCategory::short_text);
        req.max_attempts = 4;
        try {
            (void)generate_premise(*gw, req);
            FAIL("expected GenerationError");
        } catch (const GenerationError& e) {
            CHECK(e.attempts() == 4);
        }
        CHECK(gw->audit().size() == 4);
    }
    SUBCASE("retry succeeds on a later attempt") {
        auto mock = std::make_shared<llm::MockBackend>();
        int calls = 0;
        mock->set_fallback([&](const llm::CompletionRequest&, std::mt19937_64&) {
            return ++calls < 3 ? std::string("}") : std::string("Third time.}");
        });
        auto gw = make_gateway(mock);
        const auto p = generate_premise(*gw, request_for("ads", LengthCategory::short_text));
        CHECK(p.text == "Third time.");
        CHECK(p.attempt_count == 3);
    }
}

TEST_CASE("stratified generation") {
    auto synthetic = [] {
        return std::make_shared<llm::MockBackend>(std::map<std::string, std::string>{}, llm::synthetic_generator());
    };
    SUBCASE("38 domains x 2 lengths x 5 per cell") {
        auto gw = make_gateway(synthetic());
        PremiseBatchSpec spec;
        spec.per_cell = 5;
        spec.seed = 42;
        const auto r = generate_stratified(*gw, spec);
        CHECK(r.premises.size() == 380);
        CHECK(r.report.total_produced == 380);
        CHECK(r.report.shortfalls().empty());
        std::map<std::pair<std::string, LengthCategory>, int> cells;
        for (const auto& p : r.premises) ++cells[{p.domain, p.length}];
        CHECK(cells.size() == 76);
        for (const auto& [_, n] : cells) CHECK(n == 5);
        CHECK(r.premises.front().id == "p0000001");
        CHECK(r.premises.front().domain == DomainRoster::default_roster().names().front());
    }
    SUBCASE("deterministic") {
        PremiseBatchSpec spec;
        spec.roster = DomainRoster({"news", "quora"});
        spec.per_cell = 3;
        spec.seed = 9;
        auto gw1 = make_gateway(synthetic());
        auto gw2 = make_gateway(synthetic());
        CHECK(generate_stratified(*gw1, spec).premises == generate_stratified(*gw2, spec).premises);
    }
    SUBCASE("a failing cell is reported as a shortfall") {
        auto mock = synthetic();
        mock->add_rule("domain: {quora} length: {paragraph} text: {", "}");
        auto gw = make_gateway(mock);
        PremiseBatchSpec spec;
        spec.roster = DomainRoster({"news", "quora"});
        spec.per_cell = 5;
        const auto r = generate_stratified(*gw, spec);
        CHECK(r.premises.size() == 15);
        const auto missing = r.report.shortfalls();
        REQUIRE(missing.size() == 1);
        CHECK(missing[0]->domain == "quora");
        CHECK(missing[0]->length == LengthCategory::paragraph);
        CHECK(missing[0]->produced == 0);
        CHECK(missing[0]->target == 5);
        CHECK(r.report.to_json()["shortfalls"].size() == 1);
    }
    SUBCASE("roster quota overrides per_cell") {
        PremiseBatchSpec spec;
        spec.roster = DomainRoster({"news"});
        spec.roster.set_quota("news", LengthCategory::paragraph, 2);
        spec.per_cell = 4;
        auto gw = make_gateway(synthetic());
        const auto r = generate_stratified(*gw, spec);
        CHECK(r.premises.size() == 6);
    }
    SUBCASE("spec validation") {
        PremiseBatchSpec spec;
        spec.per_cell = 0;
        auto gw = make_gateway(synthetic());
        CHECK_THROWS_AS((void)generate_stratified(*gw, spec), std::invalid_argument);
    }
}

TEST_CASE("dedup") {
    std::vector<Premise> ps{premise("1", "d", LengthCategory::short_text, "Hello world"),
                            premise("2", "d", LengthCategory::short_text, "hello  world"),
                            premise("3", "d", LengthCategory::short_text, "Bye")};
    auto r = dedup_premises(ps);
    CHECK(r.removed == 1);
    REQUIRE(r.premises.size() == 2);
    CHECK(r.premises[0].text == "Hello world");
    CHECK(r.premises[1].text == "Bye");
    CHECK(r.removed_ids == std::vector<std::string>{"2"});

    std::vector<Premise> unique{ps[0], ps[2]};
    CHECK(dedup_premises(unique).premises == unique);

    std::mt19937_64 rng(5);
    std::vector<Premise> many;
    for (int i = 0; i < 900; ++i) many.push_back(premise("u" + std::to_string(i), "d", LengthCategory::short_text,
                                                           "unique text " + std::to_string(i)));
    for (int i = 0; i < 100; ++i) {
        auto dup = many[rng() % 900];
        dup.id = "dup" + std::to_string(i);
        dup.text = "  " + to_lower_ascii(dup.text) + " ";
        many.insert(many.begin() + static_cast<std::ptrdiff_t>(rng() % (many.size() + 1)), dup);
    }
    // A planted copy may land before its original; either way exactly 100 go.
    CHECK(dedup_premises(many).removed == 100);
    CHECK(dedup_premises(many).premises.size() == 900);
}

TEST_CASE("length audit") {
    auto words = [](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w");
        return s;
    };
    std::vector<Premise> ps{premise("1", "news", LengthCategory::short_text, words(20)),
                            premise("2", "news", LengthCategory::short_text, words(22)),
                            premise("3", "news", LengthCategory::paragraph, words(60)),
                            premise("4", "news", LengthCategory::paragraph, words(60))};
    auto a = audit_lengths(ps);
    CHECK(a.mean_words[index_of(LengthCategory::short_text)] == doctest::Approx(21.0));
    CHECK(a.mean_words[index_of(LengthCategory::paragraph)] == doctest::Approx(60.0));
    CHECK_FALSE(a.warning);

    ps.push_back(premise("5", "ads", LengthCategory::short_text, words(50)));
    ps.push_back(premise("6", "ads", LengthCategory::paragraph, words(10)));
    a = audit_lengths(ps);
    CHECK(a.warning);
    CHECK(a.flagged_domains == std::vector<std::string>{"ads"});
}

TEST_CASE("premise file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "nliforge_premises_test.jsonl";
    std::vector<Premise> ps{premise("p1", "news", LengthCategory::short_text, "Line \"quoted\" é"),
                            premise("p2", "ads", LengthCategory::paragraph, "Two\n\nparagraphs")};
    write_premises(ps, path);
    CHECK(read_premises(path) == ps);
    write_file(path, to_json(ps[0]).dump() + "\n" + to_json(ps[0]).dump() + "\n");
    CHECK_THROWS_AS((void)read_premises(path), CorpusError);
    std::filesystem::remove(path);
}
