#pragma once

// Corpus ingestion, benchmark/train assembly and JSONL persistence.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "musiqa/abc.hpp"
#include "musiqa/qgen.hpp"

namespace musiqa::dataset {

using qgen::Category;
using qgen::QARecord;
using qgen::Template;

struct CorpusTune {
    std::string tune_id;  // hex content hash
    abc::Tune tune;
    std::array<bool, 9> eligible{};  // indexed by Template
    std::string source;              // "<file>#<tune number within file>"

    bool eligible_for(Template t) const { return eligible[static_cast<std::size_t>(t)]; }
};

struct Rejection {
    std::string source;
    std::string reason;
};

struct CorpusIndex {
    std::vector<CorpusTune> tunes;  // sorted by tune_id
    std::vector<Rejection> rejections;
    int duplicates = 0;
    std::uint64_t content_hash = 0;  // over the sorted tune ids
};

class EmptyCorpusError : public Error {
public:
    using Error::Error;
};

class InsufficientCorpusError : public Error {
public:
    InsufficientCorpusError(Category category, int needed, int available);
    Category category() const { return category_; }
    int needed() const { return needed_; }
    int available() const { return available_; }

private:
    Category category_;
    int needed_;
    int available_;
};

class SchemaError : public Error {
public:
    SchemaError(std::size_t line, const std::string& message);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Splits a multi-tune file on X: lines. Text before the first X: is dropped
// unless the file has no X: at all.
std::vector<std::string> split_tunes(const std::string& text);

// Content hash used for dedup: the canonical serialization with X: and T:
// removed.
std::uint64_t tune_hash(const abc::Tune& tune);

// Parses, rhythm-checks and indexes tunes. A tune with a meter whose bars
// are not full (apart from a pickup and a closing partial bar) is rejected.
CorpusIndex index_texts(const std::vector<std::pair<std::string, std::string>>& sources,
                        const qgen::GenOptions& opt = {}, int jobs = 0);

// Reads every *.abc file under `dir` (recursively) and indexes them. Throws
// EmptyCorpusError when no tune is accepted.
CorpusIndex ingest_corpus(const std::filesystem::path& dir, const qgen::GenOptions& opt = {}, int jobs = 0);

enum class Modality { textual, visual, both };
enum class Split { benchmark, train };

std::string modality_name(Modality m);
std::optional<Modality> parse_modality(const std::string& s);
std::string split_name(Split s);
std::optional<Split> parse_split(const std::string& s);

// Per-template weights from the reference dataset statistics.
std::array<double, 9> table5_weights();
std::array<double, 9> uniform_weights();

struct DatasetConfig {
    Split split = Split::benchmark;
    Modality modality = Modality::textual;
    std::uint64_t seed = 0;
    std::array<int, 4> category_counts{400, 400, 400, 400};  // indexed by Category
    std::array<double, 9> weights = uniform_weights();       // indexed by Template
    std::string weights_preset = "uniform";
    bool disjoint_splits = true;
    double benchmark_fraction = 0.2;  // share of tunes reserved for the benchmark pool
    qgen::GenOptions gen;

    int count(Category c) const { return category_counts[static_cast<std::size_t>(c)]; }
    double weight(Template t) const { return weights[static_cast<std::size_t>(t)]; }

    // Throws ConfigError on a negative count, a negative weight or a
    // category with records whose weights are all zero.
    void validate() const;

    static DatasetConfig benchmark_default();
    static DatasetConfig train_default();  // 2000 per category
};

// key=value lines, '#' comments. Keys: split, modality, seed, weights
// (uniform|table5), count, count.<category>, weight.<class or short name>,
// disjoint_splits, benchmark_fraction, context_measures, melody_min_notes,
// melody_max_notes. Split is applied first so its default counts can be
// overridden by later keys.
DatasetConfig parse_config(const std::string& text);
DatasetConfig load_config(const std::filesystem::path& path);
std::string format_config(const DatasetConfig& cfg);

// Largest-remainder split of `total` by weight; ties go to the earlier entry.
std::vector<int> apportion(int total, const std::vector<double>& weights);

// Per-template record counts for a category under the config.
std::map<Template, int> template_counts(const DatasetConfig& cfg, Category c);

// Whether a tune belongs to the benchmark pool. Fixed per tune, independent
// of the seed, so every benchmark and train build stays tune-disjoint.
bool in_benchmark_pool(const std::string& tune_id, double fraction);

struct BuildStats {
    int attempts = 0;
    int ineligible = 0;
    int verify_failures = 0;
};

// Assembles the records for cfg.split. Records are grouped by category
// (Rhythm, Chord, Interval, Scale), then by template; ids are
// "<category>s-NNNN" numbered within the category. Tune-backed records in
// one category use distinct tunes.
std::vector<QARecord> build_set(const CorpusIndex& index, const DatasetConfig& cfg, BuildStats* stats = nullptr);

// Record id stem used in ids and image names ("chords").
std::string category_slug(Category c);

// Visual image paths, relative to the dataset file.
std::optional<std::string> context_image_path(const QARecord& r);
std::vector<std::string> choice_image_paths(const QARecord& r);  // empty or 4, presented order A..D

std::string to_json_line(const QARecord& r, Modality modality);
QARecord from_json_line(const std::string& line, std::size_t line_number = 1);

void write_jsonl(const std::vector<QARecord>& records, std::ostream& out, Modality modality);
void write_jsonl(const std::vector<QARecord>& records, const std::filesystem::path& path, Modality modality);
std::vector<QARecord> read_jsonl(std::istream& in);
std::vector<QARecord> read_jsonl(const std::filesystem::path& path);

}  // namespace musiqa::dataset
