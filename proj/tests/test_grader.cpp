#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "musiqa/dataset.hpp"
#include "musiqa/grader.hpp"
#include "musiqa/theory.hpp"

using namespace musiqa;
using namespace musiqa::grader;

namespace {

const std::string kData = MUSIQA_TEST_DATA;

struct ExtractCase {
    const char* response;
    std::optional<char> label;
    std::optional<FailureReason> reason_against_b;  // graded with answer B
};

const std::vector<ExtractCase> kExtractCases = {
    {"reasoning ... \\boxed{C}", 'C', FailureReason::wrong},
    {"\\boxed{B}", 'B', std::nullopt},
    {"\\boxed{A} ... actually \\boxed{B}", 'B', std::nullopt},
    {"\\boxed{B} then on reflection \\boxed{D}", 'D', FailureReason::wrong},
    {"The answer is C", std::nullopt, FailureReason::no_boxed},
    {"", std::nullopt, FailureReason::no_boxed},
    {"\\boxed{b}", 'B', std::nullopt},
    {"\\boxed{(B)}", 'B', std::nullopt},
    {"\\boxed{B.}", 'B', std::nullopt},
    {"\\boxed{ B }", 'B', std::nullopt},
    {"\\boxed{B)}", 'B', std::nullopt},
    {"$\\boxed{\\text{B}}$", 'B', std::nullopt},
    {"\\boxed{\\textbf{(B)}}", 'B', std::nullopt},
    {"\\boxed {B}", 'B', std::nullopt},
    {"\\boxed{E}", std::nullopt, FailureReason::unparseable},
    {"\\boxed{}", std::nullopt, FailureReason::unparseable},
    {"\\boxed{AB}", std::nullopt, FailureReason::unparseable},
    {"\\boxed{4/4}", std::nullopt, FailureReason::unparseable},
    {"\\boxed{Option B}", std::nullopt, FailureReason::unparseable},
    {"\\boxed{B", std::nullopt, FailureReason::unparseable},
    {"\\boxed{B} and then \\boxed{maybe}", std::nullopt, FailureReason::unparseable},
    {"boxed{B}", std::nullopt, FailureReason::no_boxed},
    {"**B**", std::nullopt, FailureReason::no_boxed},
    {"\\boxed{{B}}", 'B', std::nullopt},
    {"Final: \\boxed{\\mathrm{d}}", 'D', FailureReason::wrong},
    {"\\boxed{'A'}", 'A', FailureReason::wrong},
};

std::vector<nlohmann::json> rc_suite() {
    std::ifstream f(kData + "/rc/continuations.jsonl");
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(f, line)) out.push_back(nlohmann::json::parse(line));
    return out;
}

}  // namespace

TEST_CASE("boxed extraction fixtures") {
    REQUIRE(kExtractCases.size() >= 20);
    for (const auto& c : kExtractCases) {
        CAPTURE(c.response);
        CHECK(extract_answer(c.response) == c.label);
        const GradeResult g = score_label(c.response, 'B', "r");
        CHECK(g.reason == c.reason_against_b);
        CHECK(g.reward == (c.label == 'B' ? 1 : 0));
        CHECK(g.extracted == c.label);
    }
}

TEST_CASE("boxed groups nest") {
    CHECK(boxed_groups("\\boxed{a{b}c} x \\boxed{d}") == std::vector<std::string>{"a{b}c", "d"});
    CHECK(boxed_groups("\\boxed{open").empty());
}

TEST_CASE("score follows the seeded presentation order") {
    qgen::QARecord r;
    r.id = "rhythms-0001";
    r.tmpl = qgen::Template::time_signature;
    r.choices = {"2/2", {"9/8", "12/8", "7/8"}};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        r.seed = seed;
        const auto p = qgen::present(r);
        CHECK(p.options[static_cast<std::size_t>(p.answer_label - 'A')] == "2/2");
        for (char l : std::string("ABCD")) {
            const auto g = score(std::string("\\boxed{") + l + "}", r);
            CHECK(g.reward == (l == p.answer_label ? 1 : 0));
            CHECK(g.record_id == "rhythms-0001");
        }
        // The same response always grades the same.
        CHECK(score("\\boxed{A}", r) == score("\\boxed{A}", r));
    }
}

TEST_CASE("group advantage fixtures") {
    CHECK(group_advantages({1, 0, 1, 0}) == std::vector<double>{1, -1, 1, -1});
    CHECK(group_advantages({1, 1, 1, 1}) == std::vector<double>{0, 0, 0, 0});
    CHECK(group_advantages({0, 0}) == std::vector<double>{0, 0});
    const auto a = group_advantages({1, 0, 0, 0});
    // mean 1/4, population std sqrt(3)/4
    CHECK(a[0] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
    for (int i = 1; i < 4; ++i) CHECK(a[static_cast<std::size_t>(i)] == doctest::Approx(-1 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK_THROWS_AS(group_advantages({1}), GroupTooSmall);
    CHECK_THROWS_AS(group_advantages({}), GroupTooSmall);
}

TEST_CASE("group advantages are standardized") {
    Rng rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> r(static_cast<std::size_t>(rng.between(2, 16)));
        for (auto& x : r) x = static_cast<double>(rng.below(1000001)) / 1000000.0;
        if (std::all_of(r.begin(), r.end(), [&](double x) { return x == r[0]; })) r[0] += 1;
        const auto a = group_advantages(r);
        double mean = 0;
        for (double x : a) mean += x;
        mean /= static_cast<double>(a.size());
        double var = 0;
        for (double x : a) var += (x - mean) * (x - mean);
        const double sd = std::sqrt(var / static_cast<double>(a.size()));
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(sd - 1) < 1e-9);
        double rmean = 0;
        for (double x : r) rmean += x;
        rmean /= static_cast<double>(r.size());
        for (std::size_t i = 0; i < r.size(); ++i) {
            const int sr = (r[i] > rmean) - (r[i] < rmean);
            const int sa = (a[i] > 0) - (a[i] < 0);
            CHECK(sr == sa);
        }
    }
}

TEST_CASE("grouped advantages") {
    CHECK(grouped_advantages({1, 0, 1, 1}, 2) == std::vector<double>{1, -1, 0, 0});
    CHECK_THROWS_AS(grouped_advantages({1, 0, 1}, 2), ShapeError);
    CHECK_THROWS_AS(grouped_advantages({1, 0}, 1), GroupTooSmall);
    CHECK(grouped_advantages({}, 8).empty());
}

TEST_CASE("rhythmic consistency examples") {
    const abc::Meter m34{3, 4};
    const Duration eighth(1, 8);
    const auto ok = check_rhythmic_consistency("A2 B2 c2 | d4 c2 | B2 A2 G2 | A6 |", m34, eighth);
    CHECK(ok.syntax_ok);
    CHECK(ok.score == 1);
    REQUIRE(ok.per_measure.size() == 4);
    CHECK(ok.per_measure[0].capacity == Duration(3, 4));

    const auto short_bar = check_rhythmic_consistency("A2 B2 c2 | d5 | B2 A2 G2 | A6 |", m34, eighth);
    CHECK(short_bar.score == 0);
    CHECK_FALSE(short_bar.per_measure[1].ok);
    CHECK(short_bar.per_measure[1].duration == Duration(5, 8));
    CHECK(short_bar.per_measure[0].ok);

    const auto flat = check_rhythmic_consistency("Bb c d e f g | d6 | c6 | B6 |", m34, eighth);
    CHECK_FALSE(flat.syntax_ok);
    CHECK(flat.score == 0);
    CHECK(flat.syntax_error.find("Bb") != std::string::npos);

    const auto five = check_rhythmic_consistency("A6 | A6 | A6 | A6 | A6 |", m34, eighth);
    CHECK(five.syntax_ok);
    CHECK_FALSE(five.measure_count_ok);
    CHECK(five.measure_count == 5);
    CHECK(five.score == 0);
}

TEST_CASE("non-ABC pitch spellings") {
    CHECK(nonstandard_pitch_token("C# D") == "C#");
    CHECK(nonstandard_pitch_token("Eb2 F") == "Eb");
    CHECK(nonstandard_pitch_token("f# g") == "f#");
    CHECK_FALSE(nonstandard_pitch_token("_B ^C =F ab ba").has_value());
    CHECK_FALSE(nonstandard_pitch_token("\"Bb\" B2 | c").has_value());  // chord symbol text
    CHECK_FALSE(nonstandard_pitch_token("K:Bb\nB c d").has_value());
}

TEST_CASE("rhythmic consistency agrees with the measure validator") {
    // Same capacity arithmetic as the corpus checker for any 4-bar input.
    Rng rng(3);
    const char* pieces[] = {"A", "B2", "c/", "d3", "z", "(3ABc", "[CEG]2", "e/f/"};
    for (int trial = 0; trial < 300; ++trial) {
        std::string body;
        for (int m = 0; m < 4; ++m) {
            const int n = rng.between(1, 5);
            for (int k = 0; k < n; ++k) body += std::string(pieces[rng.below(8)]) + " ";
            body += "| ";
        }
        const abc::Meter meter{rng.between(2, 4), 4};
        const auto v = check_rhythmic_consistency(body, meter, Duration(1, 8));
        REQUIRE(v.syntax_ok);
        const auto tune = abc::parse_tune("M:" + meter.str() + "\nL:1/8\nK:C\n" + body);
        const auto report = theory::validate_measures(tune, meter);
        CHECK(v.score == (report.all_full() && tune.measures.size() == 4 ? 1 : 0));
    }
}

TEST_CASE("constructed continuation suite matches hand labels") {
    const auto suite = rc_suite();
    REQUIRE(suite.size() == 50);
    int agree = 0;
    for (const auto& c : suite) {
        CAPTURE(c.dump());
        const auto meter = parse_meter(c.value("meter", "9/8"));
        const auto unit = parse_unit(c.value("unit_length", "1/8"));
        REQUIRE(meter);
        REQUIRE(unit);
        const auto v = check_rhythmic_consistency(c["continuation"], *meter, *unit, c["sample_id"]);
        CHECK(v.score == c["label"].get<int>());
        agree += v.score == c["label"].get<int>();
        if (c["sums"].is_null()) {
            CHECK_FALSE(v.syntax_ok);
        } else {
            const auto sums = c["sums"].get<std::vector<int>>();
            REQUIRE(v.per_measure.size() == sums.size());
            for (std::size_t i = 0; i < sums.size(); ++i) CHECK(v.per_measure[i].duration == *unit * Duration(sums[i]));
        }
    }
    CHECK(agree == 50);

    std::ifstream f(kData + "/rc/continuations.jsonl");
    const auto verdicts = check_continuations(f);
    REQUIRE(verdicts.size() == 50);
    CHECK(verdicts[46].score == 1);  // meter and unit taken from the continuation headers
}

TEST_CASE("rc score") {
    std::vector<RcVerdict> v(200);
    for (int i = 0; i < 152; ++i) v[static_cast<std::size_t>(i)].score = 1;
    CHECK(rc_score(v) == doctest::Approx(0.76));
    CHECK(format_percent(rc_score(v)) == "76.00");
    std::vector<RcVerdict> all(3);
    for (auto& x : all) x.score = 1;
    CHECK(rc_score(all) == 1.0);
    all[0].score = 0;
    all.push_back({});
    CHECK(rc_score(all) == 0.5);
    CHECK_THROWS_AS(rc_score({}), EmptySet);
}

TEST_CASE("meter and unit parsing") {
    CHECK(parse_meter("C") == abc::Meter{4, 4});
    CHECK(parse_meter("C|") == abc::Meter{2, 2});
    CHECK(parse_meter(" 6/8 ") == abc::Meter{6, 8});
    CHECK_FALSE(parse_meter("6/8x"));
    CHECK_FALSE(parse_meter("0/4"));
    CHECK(parse_unit("1/16") == Duration(1, 16));
    CHECK(parse_unit("1") == Duration(1));
    CHECK_FALSE(parse_unit("1/"));
}

TEST_CASE("batch grading and accuracy table") {
    // 12 records: 3 per category; hand counts per category below.
    std::vector<qgen::QARecord> gold;
    const qgen::Template per_cat[] = {qgen::Template::time_signature, qgen::Template::chord_id,
                                      qgen::Template::interval_number, qgen::Template::scale_id};
    for (int c = 0; c < 4; ++c) {
        for (int k = 0; k < 3; ++k) {
            qgen::QARecord r;
            r.id = "r" + std::to_string(c) + std::to_string(k);
            r.tmpl = per_cat[c];
            r.choices = {"right", {"w1", "w2", "w3"}};
            r.seed = static_cast<std::uint64_t>(c * 10 + k);
            gold.push_back(r);
        }
    }
    // Correct answers: Rhythm 3/3, Chord 2/3, Interval 1/3, Scale 0/3.
    const int correct_per_cat[] = {3, 2, 1, 0};
    std::vector<Response> responses;
    for (int c = 0; c < 4; ++c) {
        for (int k = 0; k < 3; ++k) {
            const auto& r = gold[static_cast<std::size_t>(c * 3 + k)];
            const char right = qgen::present(r).answer_label;
            const char wrong = right == 'A' ? 'B' : 'A';
            const std::string text = k < correct_per_cat[c] ? std::string("\\boxed{") + right + "}"
                                     : k == 2               ? std::string("no box")
                                                            : std::string("\\boxed{") + wrong + "}";
            responses.push_back({r.id, text});
        }
    }
    const auto results = grade_batch(responses, gold, 3);
    const auto table = accuracy_table(results, gold);
    CHECK(table.per_category.at(qgen::Category::rhythm).correct == 3);
    CHECK(table.per_category.at(qgen::Category::chord).correct == 2);
    CHECK(table.per_category.at(qgen::Category::interval).correct == 1);
    CHECK(table.per_category.at(qgen::Category::scale).correct == 0);
    CHECK(table.overall.correct == 6);
    CHECK(format_table(table) ==
          "Rhythm    Chord     Interval  Scale     Overall\n"
          "100.00    66.67     33.33     0.00      50.00\n");

    std::stringstream ss;
    write_results(results, ss);
    CHECK(read_results(ss) == results);

    CHECK_THROWS_AS(grade_batch({{"missing", "\\boxed{A}"}}, gold), BatchError);
    std::stringstream bad("{\"record_id\": \"r00\"}\n");
    CHECK_THROWS_AS(read_responses(bad), dataset::SchemaError);
    std::stringstream good("{\"record_id\": \"r00\", \"response_text\": \"\\\\boxed{A}\"}\n\n");
    const auto parsed = read_responses(good);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].response_text == "\\boxed{A}");
}

TEST_CASE("all-correct and half-correct batches") {
    std::vector<qgen::QARecord> gold;
    std::vector<Response> all_right;
    std::vector<Response> half;
    for (int i = 0; i < 40; ++i) {
        qgen::QARecord r;
        r.id = "x" + std::to_string(i);
        r.tmpl = qgen::all_templates()[static_cast<std::size_t>(i % 9)];
        r.choices = {"right", {"w1", "w2", "w3"}};
        r.seed = static_cast<std::uint64_t>(i);
        gold.push_back(r);
        const char right = qgen::present(r).answer_label;
        all_right.push_back({r.id, std::string("\\boxed{") + right + "}"});
        half.push_back({r.id, i % 2 ? std::string("\\boxed{") + right + "}" : std::string("I think ") + right});
    }
    CHECK(format_percent(accuracy_table(grade_batch(all_right, gold), gold).overall.accuracy()) == "100.00");
    CHECK(format_percent(accuracy_table(grade_batch(half, gold), gold).overall.accuracy()) == "50.00");
}
