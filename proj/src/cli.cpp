#include "musiqa/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "musiqa/dataset.hpp"
#include "musiqa/grader.hpp"
#include "musiqa/render.hpp"
#include "musiqa/rng.hpp"
#include "musiqa/synth.hpp"

namespace musiqa::cli {

namespace fs = std::filesystem;

namespace {

using json = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw dataset::IoError("cannot read " + path);
    return f;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw dataset::IoError("cannot write " + path.string());
    return f;
}

// "bench.jsonl" -> "bench<suffix>" in the same directory.
fs::path sibling(const fs::path& out, const std::string& suffix) {
    return out.parent_path() / (out.stem().string() + suffix);
}

void write_manifest(const RunManifest& m, const fs::path& path) { open_out(path) << m.to_json(); }

struct Common {
    std::vector<std::string> args;
};

// ---------------------------------------------------------------------------

struct GenArgs {
    std::string corpus;
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string modality;
    std::string split;
    std::string weights;
    std::vector<std::string> categories;
    std::optional<int> count;
    int jobs = 0;
};

int cmd_gen(const GenArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    dataset::DatasetConfig cfg;
    if (!a.config.empty()) {
        cfg = dataset::load_config(a.config);
    } else if (!a.split.empty()) {
        const auto s = dataset::parse_split(a.split);
        if (!s) throw dataset::ConfigError("unknown split " + a.split);
        cfg = *s == dataset::Split::train ? dataset::DatasetConfig::train_default()
                                          : dataset::DatasetConfig::benchmark_default();
    }
    if (!a.split.empty()) cfg.split = *dataset::parse_split(a.split);
    if (a.seed) cfg.seed = *a.seed;
    if (!a.modality.empty()) {
        const auto m = dataset::parse_modality(a.modality);
        if (!m) throw dataset::ConfigError("unknown modality " + a.modality);
        cfg.modality = *m;
    }
    if (!a.weights.empty()) {
        if (a.weights == "table5") {
            cfg.weights = dataset::table5_weights();
        } else if (a.weights == "uniform") {
            cfg.weights = dataset::uniform_weights();
        } else {
            throw dataset::ConfigError("unknown weights preset " + a.weights);
        }
        cfg.weights_preset = a.weights;
    }
    if (a.count) cfg.category_counts.fill(*a.count);
    if (!a.categories.empty()) {
        std::array<bool, 4> keep{};
        for (const auto& name : a.categories) {
            const auto cat = qgen::parse_category(name);
            if (!cat) throw dataset::ConfigError("unknown category " + name);
            keep[static_cast<std::size_t>(*cat)] = true;
        }
        for (std::size_t i = 0; i < 4; ++i) {
            if (!keep[i]) cfg.category_counts[i] = 0;
        }
    }
    cfg.validate();

    const auto index = dataset::ingest_corpus(a.corpus, cfg.gen, a.jobs);
    err << "ingested " << index.tunes.size() << " tunes (" << index.rejections.size() << " rejected, "
        << index.duplicates << " duplicates)\n";

    const auto records = dataset::build_set(index, cfg);
    const fs::path out_path = a.out;

    RunManifest m;
    m.command = "gen";
    m.arguments = c.args;
    m.config = dataset::format_config(cfg);
    m.seed = cfg.seed;
    m.corpus_hash = hex64(index.content_hash);

    auto emit = [&](const fs::path& p, dataset::Modality mod) {
        auto f = open_out(p);
        dataset::write_jsonl(records, f, mod);
        f.close();
        m.output_hashes[p.filename().string()] = file_hash(p.string());
    };
    if (cfg.modality == dataset::Modality::both) {
        emit(out_path, dataset::Modality::textual);
        emit(sibling(out_path, "-visual.jsonl"), dataset::Modality::visual);
    } else {
        emit(out_path, cfg.modality);
    }
    {
        const fs::path rej = sibling(out_path, ".rejects.tsv");
        auto f = open_out(rej);
        for (const auto& r : index.rejections) f << r.source << '\t' << r.reason << '\n';
        f.close();
        m.output_hashes[rej.filename().string()] = file_hash(rej.string());
    }
    write_manifest(m, sibling(out_path, ".manifest.json"));
    out << "wrote " << records.size() << " records to " << out_path.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string in;
    std::string out;
    int jobs = 0;
    std::optional<int> dpi;
};

int cmd_render(const RenderArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto records = dataset::read_jsonl(fs::path(a.in));
    render::ToolchainRenderer renderer(render::ToolchainConfig::from_env());
    const int dpi = a.dpi.value_or(renderer.config().dpi);
    if (dpi < render::kMinDpi || dpi > render::kMaxDpi) throw dataset::ConfigError("dpi must be in [72, 600]");
    if (!records.empty() && !renderer.available()) {
        throw render::ToolMissing("engraver or converter not found (" + renderer.config().engraver + ", " +
                                  renderer.config().converter + ")");
    }
    const fs::path dir = a.out;
    const auto set = render::build_visual_set(records, dir, renderer, {dpi, a.jobs});

    std::vector<qgen::QARecord> ok;
    for (const auto& v : set.records) ok.push_back(v.base);
    const fs::path visual = dir / "visual.jsonl";
    dataset::write_jsonl(ok, visual, dataset::Modality::visual);

    RunManifest m;
    m.command = "render";
    m.arguments = c.args;
    m.config = "dpi=" + std::to_string(dpi) + "\n";
    m.tool_versions = renderer.versions();
    m.output_hashes["visual.jsonl"] = file_hash(visual.string());
    m.output_hashes["manifest.json"] = file_hash((dir / "manifest.json").string());
    write_manifest(m, dir / "run-manifest.json");

    out << "rendered " << set.records.size() << "/" << records.size() << " records";
    out << ", " << set.failures.size() << " failed\n";
    for (const auto& f : set.failures) err << "failed " << f.record_id << ": " << f.error << "\n";
    return set.failures.empty() ? kExitOk : kExitTool;
}

// ---------------------------------------------------------------------------

struct GradeArgs {
    std::string pred;
    std::string gold;
    std::string out;
    int jobs = 0;
};

int cmd_grade(const GradeArgs& a, const Common& c, std::ostream& out, std::ostream&) {
    const auto gold = dataset::read_jsonl(fs::path(a.gold));
    auto pin = open_in(a.pred);
    const auto responses = grader::read_responses(pin);
    const auto results = grader::grade_batch(responses, gold, a.jobs);
    if (!a.out.empty()) {
        auto f = open_out(a.out);
        grader::write_results(results, f);
        f.close();
        RunManifest m;
        m.command = "grade";
        m.arguments = c.args;
        m.output_hashes[fs::path(a.out).filename().string()] = file_hash(a.out);
        write_manifest(m, sibling(a.out, ".manifest.json"));
    }
    out << grader::format_table(grader::accuracy_table(results, gold));
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_check_rhythm(const std::string& in, const std::string& out_path, std::ostream& out) {
    auto f = open_in(in);
    const auto verdicts = grader::check_continuations(f);
    const double s = grader::rc_score(verdicts);
    if (!out_path.empty()) {
        auto o = open_out(out_path);
        for (const auto& v : verdicts) {
            json j;
            j["sample_id"] = v.sample_id;
            j["score"] = v.score;
            j["syntax_ok"] = v.syntax_ok;
            if (!v.syntax_ok) j["syntax_error"] = v.syntax_error;
            j["measure_count"] = v.measure_count;
            json bars = json::array();
            for (const auto& pm : v.per_measure) {
                bars.push_back({{"duration", pm.duration.str()}, {"capacity", pm.capacity.str()}, {"ok", pm.ok}});
            }
            j["measures"] = bars;
            o << j.dump() << '\n';
        }
    }
    int pass = 0;
    for (const auto& v : verdicts) pass += v.score;
    out << "RC " << grader::format_percent(s) << " (" << pass << "/" << verdicts.size() << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

std::string stats_table(const std::vector<qgen::QARecord>& records) {
    std::map<qgen::Template, int> per;
    for (const auto& r : records) ++per[r.tmpl];
    using qgen::Category;
    const Category order[] = {Category::scale, Category::rhythm, Category::interval, Category::chord};
    std::ostringstream o;
    char line[96];
    std::snprintf(line, sizeof line, "%-10s %-15s %7s\n", "Category", "Template", "Count");
    o << line;
    int total = 0;
    for (Category c : order) {
        int sub = 0;
        bool first = true;
        for (qgen::Template t : qgen::templates_in(c)) {
            std::snprintf(line, sizeof line, "%-10s %-15s %7d\n", first ? qgen::category_name(c).c_str() : "",
                          qgen::short_name(t).c_str(), per[t]);
            o << line;
            sub += per[t];
            first = false;
        }
        std::snprintf(line, sizeof line, "%-10s %-15s %7d\n", "", "Total", sub);
        o << line;
        total += sub;
    }
    std::snprintf(line, sizeof line, "%-10s %-15s %7d\n", "Total", "", total);
    o << line;
    return o.str();
}

int cmd_stats(const std::string& in, std::ostream& out) {
    out << stats_table(dataset::read_jsonl(fs::path(in)));
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_present(const std::string& in, const std::string& only_id, std::ostream& out) {
    for (const auto& r : dataset::read_jsonl(fs::path(in))) {
        if (!only_id.empty() && r.id != only_id) continue;
        const auto p = qgen::present(r);
        json j;
        j["record_id"] = r.id;
        j["question"] = r.question;
        j["abc_context"] = r.abc_context;
        json opts = json::object();
        for (std::size_t k = 0; k < 4; ++k) opts[std::string(1, static_cast<char>('A' + k))] = p.options[k];
        j["options"] = opts;
        j["answer"] = std::string(1, p.answer_label);
        out << j.dump() << '\n';
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_advantages(const std::string& in, std::size_t group, std::ostream& out) {
    auto f = open_in(in);
    std::vector<double> rewards;
    std::string tok;
    while (f >> tok) {
        try {
            std::size_t used = 0;
            rewards.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw dataset::SchemaError(rewards.size() + 1, "not a number: " + tok);
        }
    }
    char buf[40];
    for (double a : grader::grouped_advantages(rewards, group)) {
        std::snprintf(buf, sizeof buf, "%.17g\n", a);
        out << buf;
    }
    return kExitOk;
}

}  // namespace

std::string RunManifest::to_json() const {
    json j;
    j["command"] = command;
    j["arguments"] = arguments;
    j["config"] = config;
    j["seed"] = seed;
    j["corpus_hash"] = corpus_hash;
    j["tool_versions"] = json::object();
    for (const auto& [k, v] : tool_versions) j["tool_versions"][k] = v;
    j["output_hashes"] = json::object();
    for (const auto& [k, v] : output_hashes) j["output_hashes"][k] = v;
    return j.dump(2) + "\n";
}

std::string file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw dataset::IoError("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return hex64(fnv1a64(ss.str()));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Music theory question generation, rendering and grading"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "musiqa 0.1.0");

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a question set from an ABC corpus");
    g->add_option("--corpus", gen.corpus, "Directory of .abc files")->required();
    g->add_option("--out", gen.out, "Output JSONL path")->required();
    g->add_option("--config", gen.config, "key=value config file");
    g->add_option("--seed", gen.seed, "Master seed");
    g->add_option("--modality", gen.modality, "textual, visual or both")
        ->check(CLI::IsMember({"textual", "visual", "both"}));
    g->add_option("--split", gen.split, "benchmark or train")->check(CLI::IsMember({"benchmark", "train"}));
    g->add_option("--weights", gen.weights, "uniform or table5")->check(CLI::IsMember({"uniform", "table5"}));
    g->add_option("--categories", gen.categories, "Categories to emit (comma separated)")->delimiter(',');
    g->add_option("--count", gen.count, "Records per category")->check(CLI::NonNegativeNumber);
    g->add_option("--jobs", gen.jobs, "Parallel ingestion workers (0: all cores)")->check(CLI::NonNegativeNumber);

    RenderArgs ren;
    auto* r = app.add_subcommand("render", "Render a question set to images");
    r->add_option("--in", ren.in, "Input JSONL")->required();
    r->add_option("--out", ren.out, "Output directory")->required();
    r->add_option("--jobs", ren.jobs, "Parallel render jobs (0: all cores)")->check(CLI::NonNegativeNumber);
    r->add_option("--dpi", ren.dpi, "Raster resolution")->check(CLI::Range(render::kMinDpi, render::kMaxDpi));

    GradeArgs gr;
    auto* gd = app.add_subcommand("grade", "Grade model responses against a question set");
    gd->add_option("--pred", gr.pred, "Responses JSONL {record_id, response_text}")->required();
    gd->add_option("--gold", gr.gold, "Question set JSONL")->required();
    gd->add_option("--out", gr.out, "Results JSONL");
    gd->add_option("--jobs", gr.jobs, "Parallel graders (0: all cores)")->check(CLI::NonNegativeNumber);

    std::string rc_in;
    std::string rc_out;
    auto* rc = app.add_subcommand("check-rhythm", "Score continuations for rhythmic consistency");
    rc->add_option("--in", rc_in, "Continuations JSONL")->required();
    rc->add_option("--out", rc_out, "Per-sample verdict JSONL");

    std::string stats_in;
    auto* st = app.add_subcommand("stats", "Per-template and per-category counts");
    st->add_option("--in", stats_in, "Question set JSONL")->required();

    std::string present_in;
    std::string present_id;
    auto* pr = app.add_subcommand("present", "Print questions with options in presentation order");
    pr->add_option("--in", present_in, "Question set JSONL")->required();
    pr->add_option("--id", present_id, "Only this record");

    std::string adv_in;
    std::size_t adv_group = 8;
    auto* ad = app.add_subcommand("advantages", "Group-normalized advantages for consecutive reward groups");
    ad->add_option("--in", adv_in, "Whitespace-separated rewards")->required();
    ad->add_option("--group-size", adv_group, "Rewards per group");

    std::string synth_out;
    int synth_count = 1000;
    std::uint64_t synth_seed = 1;
    auto* sy = app.add_subcommand("synth-corpus", "Write a synthetic ABC corpus");
    sy->add_option("--out", synth_out, "Output directory")->required();
    sy->add_option("--count", synth_count, "Number of tunes")->check(CLI::NonNegativeNumber);
    sy->add_option("--seed", synth_seed, "Seed");

    std::vector<const char*> argv = {"musiqa"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::Success& e) {
        // --help and --version
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    Common common{args};
    try {
        if (*g) return cmd_gen(gen, common, out, err);
        if (*r) return cmd_render(ren, common, out, err);
        if (*gd) return cmd_grade(gr, common, out, err);
        if (*rc) return cmd_check_rhythm(rc_in, rc_out, out);
        if (*st) return cmd_stats(stats_in, out);
        if (*pr) return cmd_present(present_in, present_id, out);
        if (*ad) return cmd_advantages(adv_in, adv_group, out);
        if (*sy) {
            const int files = synth::write_synth_corpus(synth_out, synth_seed, synth_count);
            out << "wrote " << synth_count << " tunes in " << files << " files to " << synth_out << "\n";
            return kExitOk;
        }
    } catch (const dataset::ConfigError& e) {
        err << "error[config]: " << e.what() << "\n";
        return kExitUsage;
    } catch (const dataset::InsufficientCorpusError& e) {
        err << "error[insufficient-corpus]: " << e.what() << "\n";
        return kExitData;
    } catch (const dataset::EmptyCorpusError& e) {
        err << "error[empty-corpus]: " << e.what() << "\n";
        return kExitData;
    } catch (const dataset::SchemaError& e) {
        err << "error[schema]: " << e.what() << "\n";
        return kExitData;
    } catch (const render::ToolMissing& e) {
        err << "error[tool-missing]: " << e.what() << "\n";
        return kExitTool;
    } catch (const render::RenderError& e) {
        err << "error[render]: " << e.what() << "\n";
        return kExitTool;
    } catch (const grader::EmptySet& e) {
        err << "error[empty-set]: " << e.what() << "\n";
        return kExitData;
    } catch (const Error& e) {
        err << "error[data]: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error[io]: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, out, err);
}

}  // namespace musiqa::cli
