#pragma once

// Question-template generators. Each template pairs a generator with a
// checker; the checker decides whether an option payload answers the
// question, and every distractor is kept only if the checker rejects it.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "musiqa/abc.hpp"
#include "musiqa/rng.hpp"
#include "musiqa/theory.hpp"

namespace musiqa::qgen {

enum class Template {
    scale_id,
    scale_selection,
    time_signature,
    bar_placement,
    interval_number,
    note_completion,
    chords_completion,
    chord_root_id,
    chord_id,
};

enum class Category { rhythm, chord, interval, scale };

const std::array<Template, 9>& all_templates();
const std::array<Category, 4>& all_categories();

std::string class_name(Template t);   // "TimeSignatureQuestion"
std::string short_name(Template t);   // "Time Sig"
std::optional<Template> template_from_class_name(const std::string& name);
std::optional<Template> template_from_short_name(const std::string& name);

Category category_of(Template t);
std::string category_name(Category c);  // "Rhythm"
std::optional<Category> parse_category(const std::string& name);  // case-insensitive
std::vector<Template> templates_in(Category c);

// Templates whose options are ABC scores rather than short text.
bool has_score_choices(Template t);

struct ChoiceSet {
    std::string correct;
    std::array<std::string, 3> distractors;

    friend bool operator==(const ChoiceSet&, const ChoiceSet&) = default;
};

struct QARecord {
    std::string id;
    Template tmpl = Template::time_signature;
    std::string question;
    std::string abc_context;  // "None" when the question has no score
    ChoiceSet choices;
    std::uint64_t seed = 0;
    std::string source_tune_id;

    std::string class_name() const { return qgen::class_name(tmpl); }
    Category category() const { return category_of(tmpl); }
    friend bool operator==(const QARecord&, const QARecord&) = default;
};

struct Presented {
    std::array<std::string, 4> options;
    char answer_label = 'A';
};

// Fisher-Yates over the four payloads; the label follows the correct one.
Presented shuffle_choices(const ChoiceSet& cs, Rng& rng);

// Stream id mixed into the record seed for option shuffling.
inline constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

// Presentation order used everywhere a record is shown or graded.
Presented present(const QARecord& r);

struct GenOptions {
    int context_measures = 4;  // Time Sig and Bar Placement window
    int melody_min_notes = 12;  // Scale ID
    int melody_max_notes = 20;
};

class IneligibleError : public Error {
public:
    using Error::Error;
};

class InsufficientCandidatesError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Checking

enum class Verdict { correct, wrong, ambiguous };

struct Check {
    Verdict verdict = Verdict::wrong;
    std::string reason;
};

class CheckError : public Error {
public:
    using Error::Error;
};

// Judges one option payload against the question and context. Throws
// CheckError when the question or context itself cannot be interpreted.
Check check_choice(Template t, const std::string& question, const std::string& context, const std::string& payload);

struct VerifyResult {
    bool pass = true;
    std::string predicate;  // empty on pass: "duplicate", "equal-capacity", ...
    std::string detail;
};

VerifyResult verify_record(const QARecord& r);

// Picks three distractors. Groups are tried in order, one pick per group
// while groups last, then the remainder is filled from every leftover
// candidate. Only candidates the checker judges wrong are kept.
ChoiceSet gen_distractors(Template t, const std::string& question, const std::string& context,
                          const std::string& correct, std::vector<std::vector<std::string>> groups, Rng& rng);

// ---------------------------------------------------------------------------
// Generators. All throw IneligibleError when the tune cannot host the
// template. The returned record has no id or source id yet.

QARecord gen_time_signature(const abc::Tune& tune, Rng& rng, const GenOptions& opt = {});
QARecord gen_bar_placement(const abc::Tune& tune, Rng& rng, const GenOptions& opt = {});
QARecord gen_interval_number(const abc::Tune& tune, Rng& rng, const GenOptions& opt = {});
QARecord gen_note_completion(const abc::Tune& tune, Rng& rng, const GenOptions& opt = {});
QARecord gen_chords_completion(const abc::Tune& tune, Rng& rng, const GenOptions& opt = {});
QARecord gen_chord_root_id(const abc::Tune& tune, Rng& rng, const GenOptions& opt = {});
QARecord gen_chord_id(const abc::Tune& tune, Rng& rng, const GenOptions& opt = {});
QARecord gen_scale_id(const abc::Tune& tune, Rng& rng, const GenOptions& opt = {});
QARecord gen_scale_selection(const theory::ScaleSpec& spec, Rng& rng);

// Fixed-parameter variants used by tests and fixtures.
QARecord gen_chords_completion_for(const theory::Triad& target, const theory::Pitch& a, const theory::Pitch& b,
                                   Rng& rng);
QARecord gen_note_completion_for(const abc::Header& header, const theory::Pitch& seed,
                                 const theory::Interval& iv, Rng& rng);
QARecord gen_chord_id_for(const std::vector<theory::Pitch>& written_order, Rng& rng);

// Dispatches on template; Scale Sel draws its spec from the seed and ignores
// the tune. Seeds the content stream from `seed` and stores it on the record.
QARecord generate(Template t, const abc::Tune& tune, std::uint64_t seed, const GenOptions& opt = {});

// Cheap structural pre-check used during corpus indexing. A true result does
// not guarantee generation succeeds for every seed.
bool eligible(Template t, const abc::Tune& tune, const GenOptions& opt = {});

// Question texts.
std::string question_text(Template t);  // for templates without parameters
std::string note_completion_question(const theory::Interval& iv);
std::string chords_completion_question(const theory::Triad& target);
std::string scale_selection_question(const theory::ScaleSpec& spec);

// Every pitch written with its accidental, a natural sign only where the
// line's own earlier accidental would otherwise carry over.
std::string spell_line(const std::vector<theory::Pitch>& pitches);

}  // namespace musiqa::qgen
