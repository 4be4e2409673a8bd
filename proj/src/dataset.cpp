#include "musiqa/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "musiqa/rng.hpp"
#include "musiqa/theory.hpp"

namespace musiqa::dataset {

namespace {

using json = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int worker_count(int jobs, std::size_t work) {
    int n = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return std::max(1, std::min(n, static_cast<int>(work)));
}

struct Parsed {
    std::optional<CorpusTune> tune;
    std::optional<Rejection> rejection;
    std::uint64_t hash = 0;
};

Parsed parse_one(const std::string& source, const std::string& text, const qgen::GenOptions& opt) {
    Parsed out;
    try {
        abc::Tune tune = abc::parse_tune(text);
        if (tune.header.meter) {
            const auto report = theory::validate_measures(tune, *tune.header.meter);
            if (!report.valid_with_pickup()) {
                for (std::size_t i = 0; i < report.measures.size(); ++i) {
                    if (!report.measures[i].full) {
                        out.rejection = Rejection{source, "measure " + std::to_string(i + 1) + " lasts " +
                                                              report.measures[i].duration.str() + ", capacity " +
                                                              report.measures[i].capacity.str()};
                        break;
                    }
                }
                if (!out.rejection) out.rejection = Rejection{source, "measure durations do not match the meter"};
                return out;
            }
        }
        CorpusTune ct;
        out.hash = tune_hash(tune);
        ct.tune_id = hex64(out.hash);
        ct.source = source;
        for (Template t : qgen::all_templates()) ct.eligible[static_cast<std::size_t>(t)] = qgen::eligible(t, tune, opt);
        ct.tune = std::move(tune);
        out.tune = std::move(ct);
    } catch (const Error& e) {
        out.rejection = Rejection{source, e.what()};
    }
    return out;
}

const std::array<Category, 4> kCategoryOrder = {Category::rhythm, Category::chord, Category::interval, Category::scale};

bool parse_bool(const std::string& v) {
    const std::string s = lower(v);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("not a boolean: " + v);
}

long long parse_int(const std::string& v) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("not an integer: " + v);
    }
    if (used != v.size()) throw ConfigError("not an integer: " + v);
    return x;
}

double parse_double(const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError("not a number: " + v);
    }
    if (used != v.size() || !std::isfinite(x)) throw ConfigError("not a number: " + v);
    return x;
}

std::optional<Template> find_template(const std::string& name) {
    if (auto t = qgen::template_from_class_name(name)) return t;
    if (auto t = qgen::template_from_short_name(name)) return t;
    for (Template t : qgen::all_templates()) {
        if (lower(qgen::short_name(t)) == lower(name) || lower(qgen::class_name(t)) == lower(name)) return t;
    }
    return std::nullopt;
}

}  // namespace

InsufficientCorpusError::InsufficientCorpusError(Category category, int needed, int available)
    : Error("insufficient corpus for " + qgen::category_name(category) + ": need " + std::to_string(needed) +
            " distinct eligible tunes, " + std::to_string(available) + " available"),
      category_(category),
      needed_(needed),
      available_(available) {}

SchemaError::SchemaError(std::size_t line, const std::string& message)
    : Error("line " + std::to_string(line) + ": " + message), line_(line) {}

std::vector<std::string> split_tunes(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    std::string current;
    bool started = false;
    bool any_x = false;
    while (std::getline(in, line)) {
        if (line.rfind("X:", 0) == 0) {
            if (started && !trim(current).empty()) out.push_back(current);
            current.clear();
            started = true;
            any_x = true;
        }
        if (started || !any_x) {
            current += line;
            current += '\n';
        }
    }
    if (!trim(current).empty()) out.push_back(current);
    if (!any_x && !out.empty() && trim(out.front()).empty()) out.clear();
    return out;
}

std::uint64_t tune_hash(const abc::Tune& tune) {
    abc::Tune t = tune;
    t.header.reference_number.reset();
    t.header.title.reset();
    return fnv1a64(abc::serialize(t));
}

CorpusIndex index_texts(const std::vector<std::pair<std::string, std::string>>& sources, const qgen::GenOptions& opt,
                        int jobs) {
    std::vector<Parsed> parsed(sources.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < sources.size(); i = next++) {
            parsed[i] = parse_one(sources[i].first, sources[i].second, opt);
        }
    };
    const int n = worker_count(jobs, sources.size());
    std::vector<std::thread> pool;
    for (int i = 1; i < n; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    CorpusIndex index;
    std::set<std::uint64_t> seen;
    for (auto& p : parsed) {
        if (p.rejection) {
            index.rejections.push_back(std::move(*p.rejection));
        } else if (p.tune) {
            if (!seen.insert(p.hash).second) {
                ++index.duplicates;
                continue;
            }
            index.tunes.push_back(std::move(*p.tune));
        }
    }
    std::sort(index.tunes.begin(), index.tunes.end(),
              [](const CorpusTune& a, const CorpusTune& b) { return a.tune_id < b.tune_id; });
    std::uint64_t h = fnv1a64("corpus");
    for (const auto& t : index.tunes) h = fnv1a64(t.tune_id, h);
    index.content_hash = h;
    return index;
}

CorpusIndex ingest_corpus(const std::filesystem::path& dir, const qgen::GenOptions& opt, int jobs) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".abc") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::pair<std::string, std::string>> sources;
    for (const auto& f : files) {
        const auto tunes = split_tunes(read_file(f));
        const std::string rel = fs::relative(f, dir).generic_string();
        for (std::size_t i = 0; i < tunes.size(); ++i) {
            sources.emplace_back(rel + "#" + std::to_string(i + 1), tunes[i]);
        }
    }
    CorpusIndex index = index_texts(sources, opt, jobs);
    if (index.tunes.empty()) {
        throw EmptyCorpusError("no usable tunes under " + dir.string() + " (" + std::to_string(files.size()) +
                               " files, " + std::to_string(index.rejections.size()) + " rejected)");
    }
    return index;
}

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::textual: return "textual";
        case Modality::visual: return "visual";
        case Modality::both: return "both";
    }
    return "textual";
}

std::optional<Modality> parse_modality(const std::string& s) {
    const std::string l = lower(s);
    if (l == "textual") return Modality::textual;
    if (l == "visual") return Modality::visual;
    if (l == "both") return Modality::both;
    return std::nullopt;
}

std::string split_name(Split s) { return s == Split::benchmark ? "benchmark" : "train"; }

std::optional<Split> parse_split(const std::string& s) {
    const std::string l = lower(s);
    if (l == "benchmark") return Split::benchmark;
    if (l == "train") return Split::train;
    return std::nullopt;
}

std::array<double, 9> table5_weights() {
    // Same order as Template.
    return {352, 48, 217, 183, 199, 201, 156, 200, 44};
}

std::array<double, 9> uniform_weights() {
    std::array<double, 9> w{};
    w.fill(1.0);
    return w;
}

void DatasetConfig::validate() const {
    for (Category c : kCategoryOrder) {
        if (count(c) < 0) throw ConfigError("negative count for " + qgen::category_name(c));
        double sum = 0;
        for (Template t : qgen::templates_in(c)) {
            if (weight(t) < 0 || !std::isfinite(weight(t))) throw ConfigError("bad weight for " + qgen::short_name(t));
            sum += weight(t);
        }
        if (count(c) > 0 && sum <= 0) throw ConfigError("all weights zero for " + qgen::category_name(c));
    }
    if (benchmark_fraction <= 0 || benchmark_fraction >= 1) throw ConfigError("benchmark_fraction must be in (0, 1)");
    if (gen.context_measures < 1) throw ConfigError("context_measures must be positive");
    if (gen.melody_min_notes < 1 || gen.melody_max_notes < gen.melody_min_notes) {
        throw ConfigError("melody note bounds are inconsistent");
    }
}

DatasetConfig DatasetConfig::benchmark_default() { return {}; }

DatasetConfig DatasetConfig::train_default() {
    DatasetConfig cfg;
    cfg.split = Split::train;
    cfg.category_counts = {2000, 2000, 2000, 2000};
    return cfg;
}

DatasetConfig parse_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
        entries.emplace_back(lower(trim(line.substr(0, eq))), trim(line.substr(eq + 1)));
    }

    DatasetConfig cfg;
    for (const auto& [k, v] : entries) {
        if (k == "split") {
            const auto s = parse_split(v);
            if (!s) throw ConfigError("unknown split: " + v);
            cfg = *s == Split::train ? DatasetConfig::train_default() : DatasetConfig::benchmark_default();
        }
    }
    for (const auto& [k, v] : entries) {
        if (k == "split") continue;
        if (k == "modality") {
            const auto m = parse_modality(v);
            if (!m) throw ConfigError("unknown modality: " + v);
            cfg.modality = *m;
        } else if (k == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_int(v));
        } else if (k == "weights") {
            const std::string p = lower(v);
            if (p == "uniform") {
                cfg.weights = uniform_weights();
            } else if (p == "table5") {
                cfg.weights = table5_weights();
            } else {
                throw ConfigError("unknown weights preset: " + v);
            }
            cfg.weights_preset = p;
        } else if (k == "count") {
            const int n = static_cast<int>(parse_int(v));
            cfg.category_counts.fill(n);
        } else if (k.rfind("count.", 0) == 0) {
            const auto c = qgen::parse_category(k.substr(6));
            if (!c) throw ConfigError("unknown category: " + k.substr(6));
            cfg.category_counts[static_cast<std::size_t>(*c)] = static_cast<int>(parse_int(v));
        } else if (k.rfind("weight.", 0) == 0) {
            const auto t = find_template(k.substr(7));
            if (!t) throw ConfigError("unknown template: " + k.substr(7));
            cfg.weights[static_cast<std::size_t>(*t)] = parse_double(v);
            cfg.weights_preset = "custom";
        } else if (k == "disjoint_splits") {
            cfg.disjoint_splits = parse_bool(v);
        } else if (k == "benchmark_fraction") {
            cfg.benchmark_fraction = parse_double(v);
        } else if (k == "context_measures") {
            cfg.gen.context_measures = static_cast<int>(parse_int(v));
        } else if (k == "melody_min_notes") {
            cfg.gen.melody_min_notes = static_cast<int>(parse_int(v));
        } else if (k == "melody_max_notes") {
            cfg.gen.melody_max_notes = static_cast<int>(parse_int(v));
        } else {
            throw ConfigError("unknown config key: " + k);
        }
    }
    cfg.validate();
    return cfg;
}

DatasetConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

std::string format_config(const DatasetConfig& cfg) {
    std::ostringstream out;
    out << "split=" << split_name(cfg.split) << "\n";
    out << "modality=" << modality_name(cfg.modality) << "\n";
    out << "seed=" << cfg.seed << "\n";
    for (Category c : kCategoryOrder) out << "count." << lower(qgen::category_name(c)) << "=" << cfg.count(c) << "\n";
    for (Template t : qgen::all_templates()) out << "weight." << qgen::class_name(t) << "=" << cfg.weight(t) << "\n";
    out << "disjoint_splits=" << (cfg.disjoint_splits ? "true" : "false") << "\n";
    out << "benchmark_fraction=" << cfg.benchmark_fraction << "\n";
    out << "context_measures=" << cfg.gen.context_measures << "\n";
    out << "melody_min_notes=" << cfg.gen.melody_min_notes << "\n";
    out << "melody_max_notes=" << cfg.gen.melody_max_notes << "\n";
    return out.str();
}

std::vector<int> apportion(int total, const std::vector<double>& weights) {
    std::vector<int> out(weights.size(), 0);
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total <= 0 || sum <= 0) return out;
    std::vector<double> rem(weights.size());
    int assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = total * weights[i] / sum;
        // Guard against 351.99999 for weights that divide evenly.
        double whole = std::floor(exact + 1e-9);
        out[i] = static_cast<int>(whole);
        rem[i] = std::max(0.0, exact - whole);
        assigned += out[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
        if (weights[order[k]] <= 0) continue;
        ++out[order[k]];
        ++assigned;
    }
    return out;
}

std::map<Template, int> template_counts(const DatasetConfig& cfg, Category c) {
    const auto ts = qgen::templates_in(c);
    std::vector<double> w;
    for (Template t : ts) w.push_back(cfg.weight(t));
    const auto n = apportion(cfg.count(c), w);
    std::map<Template, int> out;
    for (std::size_t i = 0; i < ts.size(); ++i) out[ts[i]] = n[i];
    return out;
}

bool in_benchmark_pool(const std::string& tune_id, double fraction) {
    const std::uint64_t h = mix64(fnv1a64(tune_id, fnv1a64("split")));
    return static_cast<double>(h % 1000000) < fraction * 1000000.0;
}

std::vector<QARecord> build_set(const CorpusIndex& index, const DatasetConfig& cfg, BuildStats* stats) {
    cfg.validate();
    BuildStats local;
    BuildStats& st = stats ? *stats : local;

    std::vector<const CorpusTune*> pool;
    for (const auto& t : index.tunes) {
        if (!cfg.disjoint_splits || in_benchmark_pool(t.tune_id, cfg.benchmark_fraction) == (cfg.split == Split::benchmark)) {
            pool.push_back(&t);
        }
    }

    const std::uint64_t split_seed = derive_seed(cfg.seed, fnv1a64(split_name(cfg.split)));
    std::vector<QARecord> out;
    for (Category c : kCategoryOrder) {
        if (cfg.count(c) == 0) continue;
        const auto counts = template_counts(cfg, c);
        const std::uint64_t cat_seed = derive_seed(split_seed, fnv1a64(qgen::category_name(c)));

        std::vector<const CorpusTune*> order = pool;
        Rng rng(cat_seed);
        rng.shuffle(std::span<const CorpusTune*>(order));

        int needed = 0;
        std::set<const CorpusTune*> usable;
        for (const auto& [t, n] : counts) {
            if (t == Template::scale_selection || n == 0) continue;
            needed += n;
            for (const auto* ct : order) {
                if (ct->eligible_for(t)) usable.insert(ct);
            }
        }
        if (static_cast<int>(usable.size()) < needed) {
            throw InsufficientCorpusError(c, needed, static_cast<int>(usable.size()));
        }

        // Scarce templates claim tunes first.
        std::vector<Template> fill;
        for (const auto& [t, n] : counts) fill.push_back(t);
        auto eligible_count = [&](Template t) {
            return std::count_if(order.begin(), order.end(), [&](const CorpusTune* ct) { return ct->eligible_for(t); });
        };
        std::stable_sort(fill.begin(), fill.end(),
                         [&](Template a, Template b) { return eligible_count(a) < eligible_count(b); });

        std::map<Template, std::vector<QARecord>> made;
        std::set<const CorpusTune*> used;
        for (Template t : fill) {
            const int n = counts.at(t);
            auto& bucket = made[t];
            const std::uint64_t tmpl_seed = derive_seed(cat_seed, fnv1a64(qgen::class_name(t)));
            if (t == Template::scale_selection) {
                static const abc::Tune kNoTune;
                for (std::uint64_t k = 0; static_cast<int>(bucket.size()) < n; ++k) {
                    ++st.attempts;
                    QARecord r = qgen::generate(t, kNoTune, derive_seed(tmpl_seed, k), cfg.gen);
                    if (!qgen::verify_record(r).pass) {
                        ++st.verify_failures;
                        continue;
                    }
                    bucket.push_back(std::move(r));
                }
                continue;
            }
            std::uint64_t k = 0;
            for (const auto* ct : order) {
                if (static_cast<int>(bucket.size()) == n) break;
                if (!ct->eligible_for(t) || used.count(ct)) continue;
                ++st.attempts;
                try {
                    QARecord r = qgen::generate(t, ct->tune, derive_seed(tmpl_seed, k++), cfg.gen);
                    if (!qgen::verify_record(r).pass) {
                        ++st.verify_failures;
                        continue;
                    }
                    r.source_tune_id = ct->tune_id;
                    used.insert(ct);
                    bucket.push_back(std::move(r));
                } catch (const qgen::IneligibleError&) {
                    ++st.ineligible;
                }
            }
            if (static_cast<int>(bucket.size()) < n) {
                // Every eligible tune was tried; report the shortfall.
                throw InsufficientCorpusError(c, needed, needed - (n - static_cast<int>(bucket.size())));
            }
        }

        int serial = 0;
        for (const auto& [t, n] : counts) {
            for (auto& r : made[t]) {
                char id[32];
                std::snprintf(id, sizeof id, "%s-%04d", category_slug(c).c_str(), serial++);
                r.id = id;
                out.push_back(std::move(r));
            }
        }
    }
    return out;
}

std::string category_slug(Category c) { return lower(qgen::category_name(c)) + "s"; }

std::optional<std::string> context_image_path(const QARecord& r) {
    if (r.abc_context.empty() || r.abc_context == "None") return std::nullopt;
    return "image/visual-" + r.id + ".png";
}

std::vector<std::string> choice_image_paths(const QARecord& r) {
    if (!qgen::has_score_choices(r.tmpl)) return {};
    std::vector<std::string> out;
    for (char s : std::string("abcd")) out.push_back("image/visual-" + r.id + "-" + s + ".png");
    return out;
}

std::string to_json_line(const QARecord& r, Modality modality) {
    json j;
    j["id"] = r.id;
    j["class_name"] = r.class_name();
    j["question"] = r.question;
    j["abc_context"] = r.abc_context;
    j["correct_answer"] = r.choices.correct;
    j["incorrect_answer1"] = r.choices.distractors[0];
    j["incorrect_answer2"] = r.choices.distractors[1];
    j["incorrect_answer3"] = r.choices.distractors[2];
    j["category"] = qgen::category_name(r.category());
    j["seed"] = r.seed;
    j["source_tune_id"] = r.source_tune_id;
    if (modality != Modality::textual) {
        const auto ctx = context_image_path(r);
        j["context_image"] = ctx ? json(*ctx) : json(nullptr);
        j["choice_images"] = choice_image_paths(r);
    }
    return j.dump();
}

QARecord from_json_line(const std::string& line, std::size_t line_number) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw SchemaError(line_number, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError(line_number, "expected an object");
    auto text = [&](const char* key, bool required) -> std::string {
        const auto it = j.find(key);
        if (it == j.end()) {
            if (required) throw SchemaError(line_number, std::string("missing field ") + key);
            return {};
        }
        if (!it->is_string()) throw SchemaError(line_number, std::string("field ") + key + " is not a string");
        return it->get<std::string>();
    };
    QARecord r;
    const std::string cls = text("class_name", true);
    const auto t = qgen::template_from_class_name(cls);
    if (!t) throw SchemaError(line_number, "unknown class_name " + cls);
    r.tmpl = *t;
    r.id = text("id", false);
    r.question = text("question", true);
    r.abc_context = text("abc_context", true);
    r.choices.correct = text("correct_answer", true);
    r.choices.distractors[0] = text("incorrect_answer1", true);
    r.choices.distractors[1] = text("incorrect_answer2", true);
    r.choices.distractors[2] = text("incorrect_answer3", true);
    const std::string cat = text("category", true);
    const auto c = qgen::parse_category(cat);
    if (!c || *c != qgen::category_of(*t)) throw SchemaError(line_number, "category " + cat + " does not match " + cls);
    r.source_tune_id = text("source_tune_id", false);
    if (const auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_unsigned()) throw SchemaError(line_number, "seed is not an unsigned integer");
        r.seed = it->get<std::uint64_t>();
    }
    return r;
}

void write_jsonl(const std::vector<QARecord>& records, std::ostream& out, Modality modality) {
    for (const auto& r : records) out << to_json_line(r, modality) << '\n';
    if (!out) throw IoError("write failed");
}

void write_jsonl(const std::vector<QARecord>& records, const std::filesystem::path& path, Modality modality) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    write_jsonl(records, f, modality);
}

std::vector<QARecord> read_jsonl(std::istream& in) {
    std::vector<QARecord> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        out.push_back(from_json_line(line, number));
    }
    return out;
}

std::vector<QARecord> read_jsonl(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    return read_jsonl(f);
}

}  // namespace musiqa::dataset
