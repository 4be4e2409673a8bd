#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "musiqa/dataset.hpp"
#include "musiqa/synth.hpp"

using namespace musiqa;
using namespace musiqa::dataset;
namespace fs = std::filesystem;

namespace {

const fs::path kData = MUSIQA_TEST_DATA;

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("musiqa-test-dataset-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const CorpusTune* by_title(const CorpusIndex& index, const std::string& title) {
    for (const auto& t : index.tunes) {
        if (t.tune.header.title == title) return &t;
    }
    return nullptr;
}

// Synthetic corpus shared by the assembly tests.
const CorpusIndex& synth_index() {
    static const CorpusIndex index = [] {
        const fs::path dir = temp_dir("synth");
        synth::write_synth_corpus(dir, 2024, 3000, 100);
        return ingest_corpus(dir);
    }();
    return index;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("split_tunes separates on X: lines") {
    const auto parts = split_tunes("% preamble\nX:1\nK:C\nCDE\n\nX:2\nK:G\nGAB\n");
    REQUIRE(parts.size() == 2);
    CHECK(parts[0] == "X:1\nK:C\nCDE\n\n");
    CHECK(parts[1] == "X:2\nK:G\nGAB\n");
    CHECK(split_tunes("K:C\nCDE\n").size() == 1);
    CHECK(split_tunes("\n\n").empty());
}

TEST_CASE("fixture corpus: three tunes, one rejection, one duplicate") {
    const CorpusIndex index = ingest_corpus(kData / "corpus", {}, 2);
    CHECK(index.tunes.size() == 3);
    CHECK(index.duplicates == 1);
    REQUIRE(index.rejections.size() == 1);
    CHECK(index.rejections[0].source == "reels.abc#2");
    CHECK(index.rejections[0].reason.find("measure 3") != std::string::npos);

    std::set<std::string> ids;
    for (const auto& t : index.tunes) ids.insert(t.tune_id);
    CHECK(ids.size() == 3);

    const CorpusTune* reel = by_title(index, "First Reel");
    REQUIRE(reel != nullptr);
    CHECK(reel->source == "reels.abc#1");  // the copy in sub/ sorts later and is dropped
}

TEST_CASE("eligibility matrix for the fixture tunes") {
    const CorpusIndex index = ingest_corpus(kData / "corpus");
    const CorpusTune* air = by_title(index, "Air Without Meter");
    const CorpusTune* reel = by_title(index, "First Reel");
    const CorpusTune* waltz = by_title(index, "Slow Waltz");
    REQUIRE(air);
    REQUIRE(reel);
    REQUIRE(waltz);

    // No meter: nothing that needs bar lines.
    CHECK_FALSE(air->eligible_for(Template::time_signature));
    CHECK_FALSE(air->eligible_for(Template::bar_placement));
    for (Template t : {Template::interval_number, Template::note_completion, Template::chords_completion,
                       Template::chord_root_id, Template::chord_id, Template::scale_id, Template::scale_selection}) {
        CHECK(air->eligible_for(t));
    }
    for (Template t : qgen::all_templates()) CHECK(reel->eligible_for(t));
    // The waltz has a pickup, then four full bars.
    CHECK(waltz->eligible_for(Template::time_signature));
    CHECK(waltz->eligible_for(Template::scale_id));
}

TEST_CASE("empty or missing corpus") {
    const fs::path empty = temp_dir("empty");
    CHECK_THROWS_AS(ingest_corpus(empty), EmptyCorpusError);
    std::ofstream(empty / "bad.abc") << "X:1\nM:2/4\nL:1/8\nK:C\nCDEF | CD | CDEF |]\n";
    CHECK_THROWS_AS(ingest_corpus(empty), EmptyCorpusError);
    CHECK_THROWS_AS(ingest_corpus(empty / "nope"), IoError);
}

TEST_CASE("tune hash ignores reference number and title") {
    const abc::Tune a = abc::parse_tune("X:1\nT:One\nM:2/4\nL:1/8\nK:C\nCDEF | G4 |]\n");
    const abc::Tune b = abc::parse_tune("X:9\nT:Two\nM:2/4\nL:1/8\nK:C\nCDEF|G4|]\n");
    const abc::Tune c = abc::parse_tune("X:1\nT:One\nM:2/4\nL:1/8\nK:G\nCDEF | G4 |]\n");
    CHECK(tune_hash(a) == tune_hash(b));
    CHECK(tune_hash(a) != tune_hash(c));
}

TEST_CASE("apportion") {
    // Largest-remainder oracle: every share within one of its exact quota,
    // and the total preserved.
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const int total = rng.between(0, 3000);
        std::vector<double> w(static_cast<std::size_t>(rng.between(1, 5)));
        for (auto& x : w) x = rng.between(0, 50);
        if (std::accumulate(w.begin(), w.end(), 0.0) == 0) w[0] = 1;
        const auto n = apportion(total, w);
        const double sum = std::accumulate(w.begin(), w.end(), 0.0);
        CHECK(std::accumulate(n.begin(), n.end(), 0) == total);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double q = total * w[i] / sum;
            CHECK(n[i] >= std::floor(q - 1e-9));
            CHECK(n[i] <= std::ceil(q + 1e-9));
        }
    }
    CHECK(apportion(400, {1, 1}) == std::vector<int>{200, 200});
    CHECK(apportion(400, {1, 1, 1}) == std::vector<int>{134, 133, 133});
}

TEST_CASE("reference per-template counts under table5 weights") {
    DatasetConfig cfg;
    cfg.weights = table5_weights();
    using T = Template;
    const std::map<T, int> expected = {
        {T::scale_id, 352},         {T::scale_selection, 48},   {T::time_signature, 217},
        {T::bar_placement, 183},    {T::interval_number, 199},  {T::note_completion, 201},
        {T::chords_completion, 156}, {T::chord_root_id, 200},   {T::chord_id, 44},
    };
    for (Category c : qgen::all_categories()) {
        for (const auto& [t, n] : template_counts(cfg, c)) CHECK(n == expected.at(t));
    }
    const auto train = DatasetConfig::train_default();
    DatasetConfig t5 = train;
    t5.weights = table5_weights();
    CHECK(template_counts(t5, Category::scale).at(T::scale_id) == 1760);
    CHECK(template_counts(t5, Category::chord).at(T::chord_id) == 220);
}

TEST_CASE("config file") {
    const DatasetConfig a = parse_config("# demo\nsplit = train\nweights=table5\ncount.scale=10\nseed=42\n");
    CHECK(a.split == Split::train);
    CHECK(a.count(Category::rhythm) == 2000);
    CHECK(a.count(Category::scale) == 10);
    CHECK(a.seed == 42);
    CHECK(a.weight(Template::scale_id) == 352);

    // Split is applied before counts regardless of line order.
    const DatasetConfig b = parse_config("count=5\nsplit=train\nweight.Chord ID=0\nmodality=visual\n");
    CHECK(b.count(Category::chord) == 5);
    CHECK(b.weight(Template::chord_id) == 0);
    CHECK(b.modality == Modality::visual);

    CHECK_THROWS_AS(parse_config("colour=blue\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("count=-1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("weight.Time Sig=0\nweight.Bar Placement=0\n"), ConfigError);

    const DatasetConfig c = parse_config(format_config(a));
    CHECK(format_config(c) == format_config(a));
}

TEST_CASE("benchmark pool membership is fixed per tune") {
    int in = 0;
    for (int i = 0; i < 20000; ++i) in += in_benchmark_pool("tune" + std::to_string(i), 0.2);
    CHECK(in > 3800);
    CHECK(in < 4200);
}

TEST_CASE("default benchmark and train sets") {
    const CorpusIndex& index = synth_index();
    const auto bench = build_set(index, DatasetConfig::benchmark_default());
    const auto train = build_set(index, DatasetConfig::train_default());
    CHECK(bench.size() == 1600);
    CHECK(train.size() == 8000);

    std::map<Category, int> per;
    std::map<Category, std::set<std::string>> tunes;
    std::set<std::string> ids;
    for (const auto& r : bench) {
        ++per[r.category()];
        ids.insert(r.id);
        if (r.tmpl == Template::scale_selection) {
            CHECK(r.source_tune_id.empty());
        } else {
            CHECK(tunes[r.category()].insert(r.source_tune_id).second);
        }
    }
    for (Category c : qgen::all_categories()) CHECK(per[c] == 400);
    CHECK(ids.size() == 1600);
    CHECK(bench.front().id == "rhythms-0000");
    CHECK(bench.back().id == "scales-0399");

    std::set<std::string> bench_tunes;
    for (const auto& r : bench) {
        if (!r.source_tune_id.empty()) bench_tunes.insert(r.source_tune_id);
    }
    for (const auto& r : train) {
        if (!r.source_tune_id.empty()) CHECK(bench_tunes.count(r.source_tune_id) == 0);
    }

    for (const auto& r : bench) CHECK(qgen::verify_record(r).pass);
    CHECK(build_set(index, DatasetConfig::benchmark_default()) == bench);
}

TEST_CASE("undersized corpus names the category") {
    const fs::path dir = temp_dir("small");
    synth::write_synth_corpus(dir, 11, 10);
    const CorpusIndex index = ingest_corpus(dir);
    try {
        build_set(index, DatasetConfig::benchmark_default());
        FAIL("expected InsufficientCorpusError");
    } catch (const InsufficientCorpusError& e) {
        CHECK(e.category() == Category::rhythm);
        CHECK(e.needed() == 400);
        CHECK(e.available() < 10);
        CHECK(std::string(e.what()).find("Rhythm") != std::string::npos);
    }
}

TEST_CASE("data format sample round-trips field for field") {
    const std::string sample =
        R"({"class_name": "TimeSignatureQuestion", "question": "What is the time signature of the given ABC notation music?", )"
        R"("abc_context": "L:1/8\nQ:1/4=120\nK:C\n| c3 c B2 G2 | A2 G2 TF3 E | E4 z2 G2 | A2 B2 c3 c |", )"
        R"("correct_answer": "2/2", "incorrect_answer1": "9/8", "incorrect_answer2": "12/8", )"
        R"("incorrect_answer3": "7/8", "category": "Rhythm"})";
    const QARecord r = from_json_line(sample);
    CHECK(r.tmpl == Template::time_signature);
    CHECK(r.choices.correct == "2/2");
    CHECK(r.id.empty());
    CHECK(r.seed == 0);

    const auto original = nlohmann::json::parse(sample);
    const auto written = nlohmann::json::parse(to_json_line(r, Modality::textual));
    for (const auto& [k, v] : original.items()) CHECK(written.at(k) == v);
    CHECK(from_json_line(to_json_line(r, Modality::textual)) == r);
}

TEST_CASE("read_jsonl inverts write_jsonl") {
    const CorpusIndex& index = synth_index();
    DatasetConfig cfg;
    cfg.category_counts = {25, 25, 25, 25};
    cfg.seed = 3;
    const auto records = build_set(index, cfg);
    for (Modality m : {Modality::textual, Modality::visual}) {
        std::stringstream ss;
        write_jsonl(records, ss, m);
        CHECK(read_jsonl(ss) == records);
    }
    const fs::path p = temp_dir("jsonl") / "out.jsonl";
    write_jsonl(records, p, Modality::textual);
    CHECK(read_jsonl(p) == records);
}

TEST_CASE("visual image names") {
    qgen::QARecord r;
    r.id = "chords-0044";
    r.tmpl = Template::chord_id;
    r.abc_context = "K:C\nL:1/4\n[CEG]";
    CHECK(context_image_path(r) == "image/visual-chords-0044.png");
    CHECK(choice_image_paths(r).empty());

    r.id = "scales-0007";
    r.tmpl = Template::scale_selection;
    r.abc_context = "None";
    CHECK_FALSE(context_image_path(r).has_value());
    CHECK(choice_image_paths(r) == std::vector<std::string>{
                                       "image/visual-scales-0007-a.png", "image/visual-scales-0007-b.png",
                                       "image/visual-scales-0007-c.png", "image/visual-scales-0007-d.png"});

    const auto j = nlohmann::json::parse(to_json_line(r, Modality::visual));
    CHECK(j.at("context_image").is_null());
    CHECK(j.at("choice_images").size() == 4);
}

TEST_CASE("schema errors carry the line number") {
    std::stringstream ss;
    ss << R"({"class_name":"ChordIdentificationQuestion"})" << "\n";
    std::stringstream bad;
    bad << "\n" << "{}" << "\n";
    try {
        read_jsonl(bad);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(read_jsonl(ss), SchemaError);
    CHECK_THROWS_AS(from_json_line("not json", 4), SchemaError);
    CHECK_THROWS_AS(from_json_line(R"({"class_name":"Nope"})"), SchemaError);
}

TEST_CASE("golden file for the fixture corpus") {
    const CorpusIndex index = ingest_corpus(kData / "corpus");
    DatasetConfig cfg;
    cfg.disjoint_splits = false;
    cfg.category_counts = {2, 2, 2, 2};
    cfg.seed = 99;
    std::stringstream ss;
    write_jsonl(build_set(index, cfg), ss, Modality::visual);
    const fs::path golden = kData / "golden" / "fixture-benchmark.jsonl";
    if (std::getenv("MUSIQA_UPDATE_GOLDEN")) std::ofstream(golden, std::ios::binary) << ss.str();
    CHECK(ss.str() == slurp(golden));
}
