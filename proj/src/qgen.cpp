#include "musiqa/qgen.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace musiqa::qgen {

using abc::Event;
using abc::EventKind;
using abc::Header;
using abc::Meter;
using abc::Tune;
using abc::WrittenNote;
using theory::Interval;
using theory::Pitch;
using theory::PitchClass;
using theory::Quality;
using theory::ScaleDirection;
using theory::ScaleMode;
using theory::ScaleSpec;
using theory::TheoryError;
using theory::Triad;
using theory::TriadQuality;

namespace {

struct TemplateInfo {
    Template tmpl;
    const char* class_name;
    const char* short_name;
    Category category;
    bool score_choices;
};

constexpr TemplateInfo kTemplates[] = {
    {Template::scale_id, "ScaleIdentificationFromAbcQuestion", "Scale ID", Category::scale, false},
    {Template::scale_selection, "ScaleSelectionQuestion", "Scale Sel", Category::scale, true},
    {Template::time_signature, "TimeSignatureQuestion", "Time Sig", Category::rhythm, false},
    {Template::bar_placement, "BarLinePlacementQuestion", "Bar Placement", Category::rhythm, true},
    {Template::interval_number, "IntervalNumberQuestion", "Interval No", Category::interval, false},
    {Template::note_completion, "NoteCompletionByInterval", "Note Comp", Category::interval, true},
    {Template::chords_completion, "ChordsCompletionQuestion", "Chord Comp", Category::chord, true},
    {Template::chord_root_id, "ChordKeyRootIdentificationQuestion", "Chord Root ID", Category::chord, false},
    {Template::chord_id, "ChordIdentificationQuestion", "Chord ID", Category::chord, false},
};

const TemplateInfo& info(Template t) {
    for (const auto& i : kTemplates) {
        if (i.tmpl == t) return i;
    }
    throw Error("unknown template");
}

constexpr const char* kScaleIdQuestion = "Select the most suitable key for the following musical score.";
constexpr const char* kTimeSigQuestion = "Select the correct time signature for the music score.";
constexpr const char* kBarQuestion =
    "Based on the time signature, which option correctly places the bar lines for the given sequence of notes?";
constexpr const char* kIntervalQuestion =
    "Given two notes with their ABC scores, select the correct name of the interval between them.";
constexpr const char* kRootQuestion = "Identify the correct root note of the chord in the following sheet music.";
constexpr const char* kChordIdQuestion = "Select the correct chord name based on the following music sheet.";

constexpr const char* kNoteCompPrefix = "Select the correct note to make the following note in music score form the ";
constexpr const char* kNoteCompSuffix = " interval.";
constexpr const char* kChordCompPrefix = "Given several notes, select the correct Note to form a ";
constexpr const char* kChordCompSuffix = " chord.";
constexpr const char* kScaleSelPrefix = "Select the correctly written ";
constexpr const char* kScaleSelMiddle = " key with ";
constexpr const char* kScaleSelSuffix = " direction.";

constexpr const char* kChordHeader = "K:C\nL:1/4\n";
constexpr const char* kScaleHeader = "L:1/4\nK:C\n";

const std::vector<Meter>& meter_pool() {
    static const std::vector<Meter> pool = {{2, 4}, {3, 4}, {4, 4}, {2, 2},  {3, 8}, {6, 8},
                                            {9, 8}, {12, 8}, {5, 8}, {7, 8}, {4, 2}, {3, 2}};
    return pool;
}

bool starts_with(const std::string& s, const std::string& p) { return s.compare(0, p.size(), p) == 0; }
bool ends_with(const std::string& s, const std::string& p) {
    return s.size() >= p.size() && s.compare(s.size() - p.size(), p.size(), p) == 0;
}

// Text between a fixed prefix and suffix, or nullopt.
std::optional<std::string> between(const std::string& s, const std::string& prefix, const std::string& suffix) {
    if (s.size() < prefix.size() + suffix.size() || !starts_with(s, prefix) || !ends_with(s, suffix)) {
        return std::nullopt;
    }
    return s.substr(prefix.size(), s.size() - prefix.size() - suffix.size());
}

abc::ParseOptions relaxed() {
    abc::ParseOptions o;
    o.allow_duplicate_chord_notes = true;
    return o;
}

Tune parse_context(const std::string& context) {
    try {
        return abc::parse_tune(context, relaxed());
    } catch (const abc::ParseError& e) {
        throw CheckError(std::string("context does not parse: ") + e.what());
    }
}

std::optional<Tune> parse_payload(const std::string& payload) {
    try {
        return abc::parse_tune(payload, relaxed());
    } catch (const abc::ParseError&) {
        return std::nullopt;
    }
}

std::vector<Event> flatten(const Tune& t) {
    std::vector<Event> out;
    for (const auto& m : t.measures) out.insert(out.end(), m.events.begin(), m.events.end());
    return out;
}

// Sounding pitches of every note event, measure memory applied.
std::vector<std::vector<Pitch>> sounding(const Tune& t) {
    std::vector<std::vector<Pitch>> out;
    for (const auto& m : t.measures) {
        for (auto& pitches : theory::sounding_events(m, t.header.key)) {
            if (!pitches.empty()) out.push_back(std::move(pitches));
        }
    }
    return out;
}

Header clean_header(Header h, bool keep_meter) {
    h.reference_number.reset();
    h.title.reset();
    if (!keep_meter) h.meter.reset();
    return h;
}

std::vector<WrittenNote> spell_notes(const std::vector<Pitch>& pitches) {
    std::map<std::pair<abc::Letter, int>, int> memory;
    std::vector<WrittenNote> out;
    for (const auto& p : pitches) {
        WrittenNote w{p.letter, std::nullopt, p.octave};
        const auto key = std::make_pair(p.letter, p.octave);
        const auto it = memory.find(key);
        if (p.accidental != 0 || (it != memory.end() && it->second != 0)) w.accidental = p.accidental;
        memory[key] = p.accidental;
        out.push_back(w);
    }
    return out;
}

std::string chord_payload(const std::vector<Pitch>& pitches) {
    std::string out = std::string(kChordHeader) + "[";
    for (const auto& w : spell_notes(pitches)) out += abc::serialize_note(w);
    return out + "]";
}

std::string scale_payload(const std::vector<Pitch>& pitches) { return std::string(kScaleHeader) + spell_line(pitches); }

std::optional<Meter> parse_meter(const std::string& s) {
    const auto slash = s.find('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == s.size()) return std::nullopt;
    const auto digits = [](const std::string& d) {
        return !d.empty() && d.size() <= 3 && std::all_of(d.begin(), d.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    const std::string a = s.substr(0, slash);
    const std::string b = s.substr(slash + 1);
    if (!digits(a) || !digits(b)) return std::nullopt;
    const Meter m{std::stoi(a), std::stoi(b)};
    if (m.beats <= 0 || m.beat_unit <= 0) return std::nullopt;
    return m;
}

bool same_events_ignoring_beams(std::vector<Event> a, std::vector<Event> b) {
    if (a.size() != b.size()) return false;
    for (auto& e : a) e.beam_next = false;
    for (auto& e : b) e.beam_next = false;
    return a == b;
}

std::set<int> semitone_set(const std::vector<Pitch>& pitches) {
    std::set<int> out;
    for (const auto& p : pitches) out.insert(p.pitch_class().semitone_class());
    return out;
}

bool in_octave_range(int octave) { return octave >= abc::kMinOctave && octave <= abc::kMaxOctave; }

Pitch from_step(int step, int accidental) {
    const int octave = step >= 0 ? step / 7 : -((-step + 6) / 7);
    return {static_cast<abc::Letter>(step - 7 * octave), accidental, octave};
}

int signature_accidental(const abc::Key& key, abc::Letter l) {
    const auto sig = theory::key_signature(key);
    const auto it = sig.find(l);
    return it == sig.end() ? 0 : it->second;
}

const std::array<TriadQuality, 4> kQualities = {TriadQuality::major, TriadQuality::minor, TriadQuality::diminished,
                                                TriadQuality::augmented};

std::optional<TriadQuality> parse_quality(const std::string& s) {
    for (auto q : kQualities) {
        if (theory::quality_name(q) == s) return q;
    }
    return std::nullopt;
}

// Close-position pitches of a triad with the root in `octave`.
std::optional<std::vector<Pitch>> stack_triad(const Triad& t, int octave) {
    const auto m = t.members();
    std::vector<Pitch> out;
    const int root_step = 7 * octave + static_cast<int>(t.root.letter);
    for (int i = 0; i < 3; ++i) {
        if (m[i].accidental < -2 || m[i].accidental > 2) return std::nullopt;
        Pitch p = from_step(root_step + 2 * i, m[i].accidental);
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkers

Check judged(Verdict v, std::string reason = {}) { return {v, std::move(reason)}; }

Check check_time_signature(const std::string& context, const std::string& payload) {
    Tune t = parse_context(context);
    const auto meter = parse_meter(payload);
    if (!meter) return judged(Verdict::wrong, "not a meter");
    t.header.meter = meter;
    const auto report = theory::validate_measures(t, *meter);
    for (const auto& m : report.measures) {
        if (!m.full) {
            return judged(Verdict::wrong, "measure " + std::to_string(m.index + 1) + " holds " + m.duration.str() +
                                              " units, capacity " + m.capacity.str());
        }
    }
    return judged(Verdict::correct);
}

Check check_bar_placement(const std::string& context, const std::string& payload) {
    const Tune ctx = parse_context(context);
    if (!ctx.header.meter) throw CheckError("bar placement context has no meter");
    const auto opt = parse_payload(payload);
    if (!opt) return judged(Verdict::wrong, "option does not parse");
    if (opt->header != ctx.header) return judged(Verdict::wrong, "headers differ");
    if (!same_events_ignoring_beams(flatten(*opt), flatten(ctx))) return judged(Verdict::wrong, "notes differ");
    const auto report = theory::validate_measures(*opt, *ctx.header.meter);
    if (report.all_full()) return judged(Verdict::correct);
    if (report.valid_with_pickup()) return judged(Verdict::ambiguous, "valid as pickup/partial measure");
    for (const auto& m : report.measures) {
        if (!m.full) {
            return judged(Verdict::wrong, "measure " + std::to_string(m.index + 1) + " holds " + m.duration.str() +
                                              " units, capacity " + m.capacity.str());
        }
    }
    return judged(Verdict::wrong);
}

std::pair<Pitch, Pitch> ordered(const Pitch& a, const Pitch& b) {
    const auto key = [](const Pitch& p) { return std::make_pair(theory::semitone_index(p), p.step()); };
    return key(a) <= key(b) ? std::make_pair(a, b) : std::make_pair(b, a);
}

Check check_interval_number(const std::string& context, const std::string& payload) {
    const auto notes = sounding(parse_context(context));
    if (notes.size() != 2 || notes[0].size() != 1 || notes[1].size() != 1) {
        throw CheckError("interval context must hold two single notes");
    }
    const auto [low, high] = ordered(notes[0][0], notes[1][0]);
    Interval actual;
    try {
        actual = theory::interval_between(low, high);
    } catch (const TheoryError& e) {
        throw CheckError(std::string("interval context not nameable: ") + e.what());
    }
    const auto named = theory::parse_interval_name(payload);
    if (!named) return judged(Verdict::wrong, "not an interval name");
    if (*named == actual) return judged(Verdict::correct);
    if (named->semitones() == actual.semitones()) return judged(Verdict::ambiguous, "enharmonic interval name");
    return judged(Verdict::wrong, "interval is " + actual.name());
}

Check check_note_completion(const std::string& question, const std::string& context, const std::string& payload) {
    const auto name = between(question, kNoteCompPrefix, kNoteCompSuffix);
    const auto target = name ? theory::parse_interval_name(*name) : std::nullopt;
    if (!target) throw CheckError("note completion question names no interval");
    const Tune ctx = parse_context(context);
    const auto seed = sounding(ctx);
    if (seed.size() != 1 || seed[0].size() != 1) throw CheckError("note completion context must hold one note");

    const auto opt = parse_payload(payload);
    if (!opt) return judged(Verdict::wrong, "option does not parse");
    if (opt->header != ctx.header) return judged(Verdict::wrong, "headers differ");
    const auto notes = sounding(*opt);
    if (notes.size() != 2 || notes[0].size() != 1 || notes[1].size() != 1) {
        return judged(Verdict::wrong, "option must hold two single notes");
    }
    if (notes[0][0] != seed[0][0]) return judged(Verdict::wrong, "first note differs from the given note");
    const Pitch& second = notes[1][0];
    const int semis = theory::semitone_index(second) - theory::semitone_index(seed[0][0]);
    try {
        const Interval actual = theory::interval_between(seed[0][0], second);
        if (actual == *target) return judged(Verdict::correct);
        if (semis == target->semitones()) return judged(Verdict::ambiguous, "enharmonic spelling of the answer");
        return judged(Verdict::wrong, "forms a " + actual.name());
    } catch (const TheoryError& e) {
        if (semis == target->semitones()) return judged(Verdict::ambiguous, "enharmonic spelling of the answer");
        return judged(Verdict::wrong, e.what());
    }
}

std::vector<Pitch> single_chord(const Tune& t) {
    const auto s = sounding(t);
    if (s.size() != 1) return {};
    return s[0];
}

Check check_chords_completion(const std::string& question, const std::string& context, const std::string& payload) {
    const auto body = between(question, kChordCompPrefix, kChordCompSuffix);
    std::optional<Triad> target;
    if (body) {
        const auto space = body->rfind(' ');
        if (space != std::string::npos) {
            const auto q = parse_quality(body->substr(space + 1));
            const auto root = theory::parse_chord_symbol(body->substr(0, space));
            if (q && root && root->quality == TriadQuality::major) target = Triad{root->root, *q};
        }
    }
    if (!target) throw CheckError("chord completion question names no triad");
    const auto given = single_chord(parse_context(context));
    if (given.size() < 2) throw CheckError("chord completion context must hold one multinote");

    const auto opt = parse_payload(payload);
    if (!opt) return judged(Verdict::wrong, "option does not parse");
    const auto notes = single_chord(*opt);
    if (notes.size() != given.size() + 1) return judged(Verdict::wrong, "option must add exactly one note");
    if (!std::equal(given.begin(), given.end(), notes.begin())) return judged(Verdict::wrong, "given notes changed");
    try {
        const Triad t = theory::identify_triad(notes);
        if (t == *target) return judged(Verdict::correct);
    } catch (const TheoryError&) {
    }
    const auto want = theory::sounding_classes(*target);
    if (semitone_set(notes) == std::set<int>(want.begin(), want.end())) {
        return judged(Verdict::ambiguous, "enharmonic spelling of the triad");
    }
    return judged(Verdict::wrong, "not a " + theory::class_name(target->root) + " " +
                                      theory::quality_name(target->quality) + " triad");
}

Triad context_triad(const std::vector<Pitch>& notes) {
    try {
        return theory::identify_triad(notes);
    } catch (const TheoryError& e) {
        throw CheckError(std::string("chord context is not a triad: ") + e.what());
    }
}

Check check_chord_root_id(const std::string& context, const std::string& payload) {
    const auto notes = single_chord(parse_context(context));
    const Triad t = context_triad(notes);
    const Pitch root = notes[theory::root_member(notes, t)];
    const auto named = theory::parse_pitch_name(payload);
    if (!named) return judged(Verdict::wrong, "not a note name");
    if (named->pitch_class == root.pitch_class()) {
        if (named->octave == root.octave) return judged(Verdict::correct);
        return judged(Verdict::ambiguous, "root in another octave");
    }
    if (named->pitch_class.semitone_class() == root.pitch_class().semitone_class()) {
        return judged(Verdict::ambiguous, "enharmonic root name");
    }
    return judged(Verdict::wrong, "root is " + theory::pitch_name(root));
}

Check check_chord_id(const std::string& context, const std::string& payload) {
    const Triad t = context_triad(single_chord(parse_context(context)));
    const auto named = theory::parse_chord_symbol(payload);
    if (!named) return judged(Verdict::wrong, "not a chord symbol");
    if (*named == t) return judged(Verdict::correct);
    if (named->root.accidental >= -2 && named->root.accidental <= 2 &&
        theory::sounding_classes(*named) == theory::sounding_classes(t)) {
        return judged(Verdict::ambiguous, "enharmonic chord name");
    }
    return judged(Verdict::wrong, "chord is " + theory::chord_symbol(t));
}

Check check_scale_id(const std::string& context, const std::string& payload) {
    std::vector<Pitch> melody;
    for (const auto& ev : sounding(parse_context(context))) melody.insert(melody.end(), ev.begin(), ev.end());
    if (melody.empty()) throw CheckError("scale context has no notes");
    const auto key = abc::parse_key_name(payload);
    if (!key || key->tonic_accidental < -1 || key->tonic_accidental > 1) return judged(Verdict::wrong, "not a key name");
    const auto scale = theory::key_scale_classes(*key);
    const std::set<PitchClass> spelled(scale.begin(), scale.end());
    std::set<int> classes;
    for (const auto& pc : scale) classes.insert(pc.semitone_class());
    bool spelled_fit = true;
    for (const auto& p : melody) {
        if (!classes.count(p.pitch_class().semitone_class())) {
            return judged(Verdict::wrong, theory::class_name(p.pitch_class()) + " lies outside " + key->name());
        }
        if (!spelled.count(p.pitch_class())) spelled_fit = false;
    }
    if (spelled_fit) return judged(Verdict::correct);
    return judged(Verdict::ambiguous, "fits " + key->name() + " enharmonically");
}

std::optional<ScaleSpec> parse_scale_question(const std::string& question) {
    const auto body = between(question, kScaleSelPrefix, kScaleSelSuffix);
    if (!body) return std::nullopt;
    const auto mid = body->find(kScaleSelMiddle);
    if (mid == std::string::npos) return std::nullopt;
    const auto key = abc::parse_key_name(body->substr(0, mid));
    const std::string dir = body->substr(mid + std::string(kScaleSelMiddle).size());
    if (!key || (dir != "ascending" && dir != "descending")) return std::nullopt;
    return ScaleSpec{{key->tonic, key->tonic_accidental},
                     key->mode == abc::Mode::major ? ScaleMode::major : ScaleMode::natural_minor,
                     dir == "ascending" ? ScaleDirection::ascending : ScaleDirection::descending};
}

Check check_scale_selection(const std::string& question, const std::string& payload) {
    const auto spec = parse_scale_question(question);
    if (!spec) throw CheckError("scale selection question names no scale");
    std::vector<Pitch> expected;
    try {
        expected = theory::scale_pitches(*spec);
    } catch (const TheoryError& e) {
        throw CheckError(e.what());
    }
    const auto opt = parse_payload(payload);
    if (!opt) return judged(Verdict::wrong, "option does not parse");
    std::vector<Pitch> got;
    for (const auto& ev : sounding(*opt)) got.insert(got.end(), ev.begin(), ev.end());
    if (got == expected) return judged(Verdict::correct);
    if (got.size() == expected.size() &&
        std::equal(got.begin(), got.end(), expected.begin(), [](const Pitch& a, const Pitch& b) {
            return theory::semitone_index(a) == theory::semitone_index(b);
        })) {
        return judged(Verdict::ambiguous, "enharmonic spelling of the scale");
    }
    for (std::size_t i = 0; i < std::min(got.size(), expected.size()); ++i) {
        if (got[i] != expected[i]) return judged(Verdict::wrong, "degree " + std::to_string(i + 1) + " differs");
    }
    return judged(Verdict::wrong, "wrong number of notes");
}

// ---------------------------------------------------------------------------
// Generation helpers

QARecord make_record(Template t, std::string question, std::string context, std::string correct,
                     std::vector<std::vector<std::string>> groups, Rng& rng) {
    QARecord r;
    r.tmpl = t;
    r.question = std::move(question);
    r.abc_context = std::move(context);
    const Check c = check_choice(t, r.question, r.abc_context, correct);
    if (c.verdict != Verdict::correct) throw IneligibleError("correct answer fails its own check: " + c.reason);
    try {
        r.choices = gen_distractors(t, r.question, r.abc_context, correct, std::move(groups), rng);
    } catch (const InsufficientCandidatesError& e) {
        throw IneligibleError(e.what());
    }
    return r;
}

// Start indices of windows of `n` consecutive full measures.
std::vector<std::size_t> full_windows(const Tune& tune, int n) {
    std::vector<std::size_t> out;
    if (!tune.header.meter || n < 1 || tune.measures.size() < static_cast<std::size_t>(n)) return out;
    const auto report = theory::validate_measures(tune, *tune.header.meter);
    std::size_t run = 0;
    for (std::size_t i = 0; i < report.measures.size(); ++i) {
        run = report.measures[i].full ? run + 1 : 0;
        if (run >= static_cast<std::size_t>(n)) out.push_back(i + 1 - static_cast<std::size_t>(n));
    }
    return out;
}

Tune window(const Tune& tune, std::size_t start, int n, bool keep_meter) {
    Tune out;
    out.header = clean_header(tune.header, keep_meter);
    out.measures.assign(tune.measures.begin() + static_cast<std::ptrdiff_t>(start),
                        tune.measures.begin() + static_cast<std::ptrdiff_t>(start) + n);
    return out;
}

struct NotePair {
    const Event* first;
    const Event* second;
    Pitch a;
    Pitch b;
};

std::vector<NotePair> interval_pairs(const Tune& tune) {
    std::vector<NotePair> out;
    for (const auto& m : tune.measures) {
        const auto pitches = theory::sounding_events(m, tune.header.key);
        for (std::size_t j = 0; j + 1 < m.events.size(); ++j) {
            const Event& e1 = m.events[j];
            const Event& e2 = m.events[j + 1];
            if (e1.kind != EventKind::note || e2.kind != EventKind::note || e1.in_triplet || e2.in_triplet) continue;
            const auto [low, high] = ordered(pitches[j][0], pitches[j + 1][0]);
            try {
                theory::interval_between(low, high);
            } catch (const TheoryError&) {
                continue;
            }
            out.push_back({&e1, &e2, pitches[j][0], pitches[j + 1][0]});
        }
    }
    return out;
}

std::vector<Pitch> single_notes(const Tune& tune) {
    std::vector<Pitch> out;
    for (const auto& m : tune.measures) {
        const auto pitches = theory::sounding_events(m, tune.header.key);
        for (std::size_t j = 0; j < m.events.size(); ++j) {
            if (m.events[j].kind == EventKind::note && !m.events[j].in_triplet) out.push_back(pitches[j][0]);
        }
    }
    return out;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
    return items[static_cast<std::size_t>(rng.below(items.size()))];
}

}  // namespace

// ---------------------------------------------------------------------------
// Names and categories

const std::array<Template, 9>& all_templates() {
    static const std::array<Template, 9> all = {
        Template::scale_id,          Template::scale_selection, Template::time_signature,
        Template::bar_placement,     Template::interval_number, Template::note_completion,
        Template::chords_completion, Template::chord_root_id,   Template::chord_id};
    return all;
}

const std::array<Category, 4>& all_categories() {
    static const std::array<Category, 4> all = {Category::rhythm, Category::chord, Category::interval,
                                                Category::scale};
    return all;
}

std::string class_name(Template t) { return info(t).class_name; }
std::string short_name(Template t) { return info(t).short_name; }
Category category_of(Template t) { return info(t).category; }
bool has_score_choices(Template t) { return info(t).score_choices; }

std::optional<Template> template_from_class_name(const std::string& name) {
    for (const auto& i : kTemplates) {
        if (name == i.class_name) return i.tmpl;
    }
    return std::nullopt;
}

std::optional<Template> template_from_short_name(const std::string& name) {
    for (const auto& i : kTemplates) {
        if (name == i.short_name) return i.tmpl;
    }
    return std::nullopt;
}

std::string category_name(Category c) {
    switch (c) {
        case Category::rhythm: return "Rhythm";
        case Category::chord: return "Chord";
        case Category::interval: return "Interval";
        case Category::scale: return "Scale";
    }
    return {};
}

std::optional<Category> parse_category(const std::string& name) {
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    for (Category c : all_categories()) {
        std::string n = category_name(c);
        std::transform(n.begin(), n.end(), n.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (n == lower) return c;
    }
    return std::nullopt;
}

std::vector<Template> templates_in(Category c) {
    std::vector<Template> out;
    for (Template t : all_templates()) {
        if (category_of(t) == c) out.push_back(t);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Questions

std::string question_text(Template t) {
    switch (t) {
        case Template::scale_id: return kScaleIdQuestion;
        case Template::time_signature: return kTimeSigQuestion;
        case Template::bar_placement: return kBarQuestion;
        case Template::interval_number: return kIntervalQuestion;
        case Template::chord_root_id: return kRootQuestion;
        case Template::chord_id: return kChordIdQuestion;
        default: throw Error(short_name(t) + " question text depends on its parameters");
    }
}

std::string note_completion_question(const Interval& iv) {
    return std::string(kNoteCompPrefix) + iv.name() + kNoteCompSuffix;
}

std::string chords_completion_question(const Triad& target) {
    return std::string(kChordCompPrefix) + theory::class_name(target.root) + " " +
           theory::quality_name(target.quality) + kChordCompSuffix;
}

std::string scale_selection_question(const ScaleSpec& spec) {
    return std::string(kScaleSelPrefix) + spec.key().name() + kScaleSelMiddle +
           (spec.direction == ScaleDirection::ascending ? "ascending" : "descending") + kScaleSelSuffix;
}

std::string spell_line(const std::vector<Pitch>& pitches) {
    std::string out;
    for (const auto& w : spell_notes(pitches)) {
        if (!out.empty()) out += ' ';
        out += abc::serialize_note(w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Choices

Presented shuffle_choices(const ChoiceSet& cs, Rng& rng) {
    std::array<int, 4> order = {0, 1, 2, 3};
    rng.shuffle(std::span<int>(order));
    const std::array<const std::string*, 4> payloads = {&cs.correct, &cs.distractors[0], &cs.distractors[1],
                                                        &cs.distractors[2]};
    Presented p;
    for (std::size_t i = 0; i < 4; ++i) {
        p.options[i] = *payloads[static_cast<std::size_t>(order[i])];
        if (order[i] == 0) p.answer_label = static_cast<char>('A' + i);
    }
    return p;
}

Presented present(const QARecord& r) {
    Rng rng(derive_seed(r.seed, kShuffleStream));
    return shuffle_choices(r.choices, rng);
}

Check check_choice(Template t, const std::string& question, const std::string& context, const std::string& payload) {
    switch (t) {
        case Template::time_signature: return check_time_signature(context, payload);
        case Template::bar_placement: return check_bar_placement(context, payload);
        case Template::interval_number: return check_interval_number(context, payload);
        case Template::note_completion: return check_note_completion(question, context, payload);
        case Template::chords_completion: return check_chords_completion(question, context, payload);
        case Template::chord_root_id: return check_chord_root_id(context, payload);
        case Template::chord_id: return check_chord_id(context, payload);
        case Template::scale_id: return check_scale_id(context, payload);
        case Template::scale_selection: return check_scale_selection(question, payload);
    }
    throw CheckError("unknown template");
}

ChoiceSet gen_distractors(Template t, const std::string& question, const std::string& context,
                          const std::string& correct, std::vector<std::vector<std::string>> groups, Rng& rng) {
    std::set<std::string> seen = {correct};
    std::vector<std::string> chosen;
    const auto try_take = [&](const std::string& candidate) {
        if (!seen.insert(candidate).second) return false;
        if (check_choice(t, question, context, candidate).verdict != Verdict::wrong) return false;
        chosen.push_back(candidate);
        return true;
    };
    for (auto& group : groups) {
        if (chosen.size() == 3) break;
        rng.shuffle(std::span<std::string>(group));
        for (const auto& c : group) {
            if (try_take(c)) break;
        }
    }
    std::vector<std::string> rest;
    for (const auto& group : groups) {
        for (const auto& c : group) {
            if (!seen.count(c) && std::find(rest.begin(), rest.end(), c) == rest.end()) rest.push_back(c);
        }
    }
    rng.shuffle(std::span<std::string>(rest));
    for (const auto& c : rest) {
        if (chosen.size() == 3) break;
        try_take(c);
    }
    if (chosen.size() < 3) {
        throw InsufficientCandidatesError(short_name(t) + ": only " + std::to_string(chosen.size()) +
                                          " falsifiable distractors");
    }
    return ChoiceSet{correct, {chosen[0], chosen[1], chosen[2]}};
}

VerifyResult verify_record(const QARecord& r) {
    const auto fail = [](std::string predicate, std::string detail) {
        return VerifyResult{false, std::move(predicate), std::move(detail)};
    };
    const std::array<const std::string*, 4> payloads = {&r.choices.correct, &r.choices.distractors[0],
                                                        &r.choices.distractors[1], &r.choices.distractors[2]};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = i + 1; j < 4; ++j) {
            if (*payloads[i] == *payloads[j]) return fail("duplicate", "options repeat: " + *payloads[i]);
        }
    }
    try {
        const Check c = check_choice(r.tmpl, r.question, r.abc_context, r.choices.correct);
        if (c.verdict != Verdict::correct) return fail("correct-fails", c.reason);
        for (const auto& d : r.choices.distractors) {
            const Check dc = check_choice(r.tmpl, r.question, r.abc_context, d);
            if (dc.verdict == Verdict::wrong) continue;
            if (r.tmpl == Template::time_signature) {
                const auto a = parse_meter(r.choices.correct);
                const auto b = parse_meter(d);
                if (a && b && a->capacity() == b->capacity()) return fail("equal-capacity", d);
            }
            if (dc.verdict == Verdict::ambiguous) return fail("ambiguous", d + ": " + dc.reason);
            return fail("distractor-correct", d);
        }
    } catch (const CheckError& e) {
        return fail("malformed-context", e.what());
    }
    const Presented p = present(r);
    if (p.options[static_cast<std::size_t>(p.answer_label - 'A')] != r.choices.correct) {
        return fail("label", "answer label does not point at the correct option");
    }
    return {};
}

// ---------------------------------------------------------------------------
// Generators

QARecord gen_time_signature(const Tune& tune, Rng& rng, const GenOptions& opt) {
    const auto starts = full_windows(tune, opt.context_measures);
    if (starts.empty()) throw IneligibleError("no window of full measures");
    const Tune ctx = window(tune, pick(rng, starts), opt.context_measures, false);
    std::vector<std::string> pool;
    for (const auto& m : meter_pool()) pool.push_back(m.str());
    return make_record(Template::time_signature, kTimeSigQuestion, abc::serialize(ctx), tune.header.meter->str(),
                       {pool}, rng);
}

QARecord gen_bar_placement(const Tune& tune, Rng& rng, const GenOptions& opt) {
    if (opt.context_measures < 2) throw IneligibleError("bar placement needs at least 2 measures");
    const auto starts = full_windows(tune, opt.context_measures);
    if (starts.empty()) throw IneligibleError("no window of full measures");
    const Tune barred = window(tune, pick(rng, starts), opt.context_measures, true);
    const abc::EventSequence seq = abc::strip_bars(barred);
    const auto& events = seq.events;
    const std::vector<std::size_t> cuts = abc::bar_positions(barred);
    const std::size_t n = events.size();
    const Duration capacity = theory::measure_capacity(*barred.header.meter, barred.header.unit_length);

    const auto cut_ok = [&](std::size_t pos) {
        return pos > 0 && pos < n && !(events[pos].in_triplet && !events[pos].triplet_start);
    };
    const auto render = [&](const std::vector<std::size_t>& c) {
        return abc::serialize(abc::bar_events(seq.header, events, c));
    };

    std::vector<std::string> greedy, merges, shifts, splits;
    for (const auto& m : meter_pool()) {
        const Duration c = theory::measure_capacity(m, barred.header.unit_length);
        if (c != capacity) greedy.push_back(render(theory::greedy_barring(events, c)));
    }
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        auto c = cuts;
        c.erase(c.begin() + static_cast<std::ptrdiff_t>(i));
        merges.push_back(render(c));
        for (int delta : {-1, 1}) {
            const std::size_t moved = cuts[i] + static_cast<std::size_t>(delta);
            const std::size_t lo = i == 0 ? 0 : cuts[i - 1];
            const std::size_t hi = i + 1 == cuts.size() ? n : cuts[i + 1];
            if (!cut_ok(moved) || moved <= lo || moved >= hi) continue;
            auto s = cuts;
            s[i] = moved;
            shifts.push_back(render(s));
        }
    }
    for (std::size_t m = 0; m <= cuts.size(); ++m) {
        const std::size_t lo = m == 0 ? 0 : cuts[m - 1];
        const std::size_t hi = m == cuts.size() ? n : cuts[m];
        for (std::size_t pos = lo + 1; pos < hi; ++pos) {
            if (!cut_ok(pos)) continue;
            auto s = cuts;
            s.insert(s.begin() + static_cast<std::ptrdiff_t>(m), pos);
            splits.push_back(render(s));
        }
    }
    return make_record(Template::bar_placement, kBarQuestion, abc::serialize(seq), abc::serialize(barred),
                       {greedy, merges, shifts, splits}, rng);
}

QARecord gen_interval_number(const Tune& tune, Rng& rng, const GenOptions&) {
    const auto pairs = interval_pairs(tune);
    if (pairs.empty()) throw IneligibleError("no successive nameable note pair");
    const NotePair& p = pick(rng, pairs);
    const Header header = clean_header(tune.header, true);
    theory::MeasureAccidentals memory;
    Event e1 = *p.first;
    Event e2 = *p.second;
    e1.notes = {theory::spell(p.a, header.key, memory)};
    e2.notes = {theory::spell(p.b, header.key, memory)};
    for (Event* e : {&e1, &e2}) {
        e->tie = false;
        e->beam_next = false;
    }
    const auto [low, high] = ordered(p.a, p.b);
    const Interval actual = theory::interval_between(low, high);

    std::vector<std::string> near, others;
    for (const auto& iv : theory::nameable_intervals()) {
        if (iv == actual) continue;
        (iv.number == actual.number || iv.quality == actual.quality ? near : others).push_back(iv.name());
    }
    return make_record(Template::interval_number, kIntervalQuestion, abc::serialize(abc::EventSequence{header, {e1, e2}}),
                       actual.name(), {near, others}, rng);
}

QARecord gen_note_completion_for(const Header& header_in, const Pitch& seed, const Interval& iv, Rng& rng) {
    const Header header = clean_header(header_in, true);
    Pitch answer;
    try {
        answer = theory::transpose(seed, iv, theory::Direction::up);
    } catch (const TheoryError& e) {
        throw IneligibleError(e.what());
    }
    const std::string head = abc::serialize_header(header) + "\n";
    const auto payload = [&](const Pitch& second) {
        theory::MeasureAccidentals memory;
        const WrittenNote w1 = theory::spell(seed, header.key, memory);
        const WrittenNote w2 = theory::spell(second, header.key, memory);
        return head + abc::serialize_note(w1) + " " + abc::serialize_note(w2);
    };
    theory::MeasureAccidentals fresh;
    const std::string context = head + abc::serialize_note(theory::spell(seed, header.key, fresh));

    std::vector<std::string> octave, neighbour, accidental, fill;
    for (int d : {-1, 1}) {
        if (in_octave_range(answer.octave + d)) octave.push_back(payload({answer.letter, answer.accidental, answer.octave + d}));
        const Pitch nb = from_step(answer.step() + d, 0);
        if (in_octave_range(nb.octave)) {
            neighbour.push_back(payload({nb.letter, signature_accidental(header.key, nb.letter), nb.octave}));
        }
        const int acc = answer.accidental + d;
        if (acc >= -2 && acc <= 2) accidental.push_back(payload({answer.letter, acc, answer.octave}));
        for (int far : {2 * d, 3 * d}) {
            const Pitch f = from_step(answer.step() + far, 0);
            if (!in_octave_range(f.octave)) continue;
            fill.push_back(payload({f.letter, signature_accidental(header.key, f.letter), f.octave}));
            fill.push_back(payload({f.letter, 0, f.octave}));
        }
        if (acc >= -2 && acc <= 2 && in_octave_range(answer.octave + d)) {
            fill.push_back(payload({answer.letter, acc, answer.octave + d}));
        }
    }
    return make_record(Template::note_completion, note_completion_question(iv), context, payload(answer),
                       {octave, neighbour, accidental, fill}, rng);
}

QARecord gen_note_completion(const Tune& tune, Rng& rng, const GenOptions&) {
    const auto notes = single_notes(tune);
    if (notes.empty()) throw IneligibleError("no single notes");
    const auto& intervals = theory::nameable_intervals();
    for (int attempt = 0; attempt < 16; ++attempt) {
        const Pitch seed = pick(rng, notes);
        const Interval& iv = pick(rng, intervals);
        Pitch answer;
        try {
            answer = theory::transpose(seed, iv, theory::Direction::up);
        } catch (const TheoryError&) {
            continue;
        }
        if (answer.octave > 2) continue;
        try {
            return gen_note_completion_for(tune.header, seed, iv, rng);
        } catch (const IneligibleError&) {
            continue;
        }
    }
    throw IneligibleError("no spellable note completion found");
}

QARecord gen_chords_completion_for(const Triad& target, const Pitch& a, const Pitch& b, Rng& rng) {
    Pitch missing;
    try {
        missing = theory::complete_triad(a, b, target);
    } catch (const TheoryError& e) {
        throw IneligibleError(e.what());
    }
    const auto payload = [&](const Pitch& x) { return chord_payload({a, b, x}); };
    const std::string context = chord_payload({a, b});

    std::vector<std::string> semitone, duplicate, letter, fill;
    for (int d : {-1, 1}) {
        const int acc = missing.accidental + d;
        if (acc >= -2 && acc <= 2) semitone.push_back(payload({missing.letter, acc, missing.octave}));
        const Pitch nb = from_step(missing.step() + d, 0);
        if (in_octave_range(nb.octave)) {
            letter.push_back(payload(nb));
            if (missing.accidental != 0) letter.push_back(payload({nb.letter, missing.accidental, nb.octave}));
        }
        const Pitch far = from_step(missing.step() + 2 * d, 0);
        if (in_octave_range(far.octave)) fill.push_back(payload(far));
    }
    duplicate.push_back(payload(a));
    duplicate.push_back(payload(b));
    return make_record(Template::chords_completion, chords_completion_question(target), context, payload(missing),
                       {semitone, duplicate, letter, fill}, rng);
}

QARecord gen_chords_completion(const Tune& tune, Rng& rng, const GenOptions&) {
    const auto degrees = theory::key_scale_classes(tune.header.key);
    for (int attempt = 0; attempt < 16; ++attempt) {
        const Triad target{pick(rng, degrees), kQualities[rng.below(kQualities.size())]};
        const auto stacked = stack_triad(target, 0);
        if (!stacked) continue;
        const std::size_t skip = static_cast<std::size_t>(rng.below(3));
        std::vector<Pitch> given;
        for (std::size_t i = 0; i < 3; ++i) {
            if (i != skip) given.push_back((*stacked)[i]);
        }
        try {
            return gen_chords_completion_for(target, given[0], given[1], rng);
        } catch (const IneligibleError&) {
            continue;
        }
    }
    throw IneligibleError("no spellable chord completion found");
}

QARecord gen_chord_root_id(const Tune& tune, Rng& rng, const GenOptions&) {
    const abc::Key& key = tune.header.key;
    const int degree = static_cast<int>(rng.below(7));
    const int root_letter = static_cast<int>(key.tonic) + degree;
    std::vector<WrittenNote> written;
    for (int i = 0; i < 3; ++i) {
        const Pitch p = from_step(root_letter + 2 * i, 0);
        written.push_back({p.letter, std::nullopt, static_cast<int>(rng.below(2))});
    }
    rng.shuffle(std::span<WrittenNote>(written));

    Event chord;
    chord.kind = EventKind::multinote;
    chord.notes = written;
    const std::string context = "K:" + key.name() + "\nL:1/4\n" + abc::serialize_event(chord);

    theory::MeasureAccidentals memory;
    std::vector<Pitch> notes;
    for (const auto& w : written) notes.push_back(theory::sounding_pitch(w, key, memory));
    const Triad t = theory::identify_triad(notes);
    const std::size_t r = theory::root_member(notes, t);
    const Pitch root = notes[r];

    std::vector<std::string> written_root, sounding_members, written_members, shifted;
    written_root.push_back(theory::pitch_name({root.letter, 0, root.octave}));
    for (std::size_t i = 0; i < notes.size(); ++i) {
        if (i == r) continue;
        sounding_members.push_back(theory::pitch_name(notes[i]));
        written_members.push_back(theory::pitch_name({notes[i].letter, 0, notes[i].octave}));
    }
    for (int d : {-1, 1}) {
        const int acc = root.accidental + d;
        if (acc >= -2 && acc <= 2) shifted.push_back(theory::pitch_name({root.letter, acc, root.octave}));
    }
    return make_record(Template::chord_root_id, kRootQuestion, context, theory::pitch_name(root),
                       {written_root, sounding_members, written_members, shifted}, rng);
}

QARecord gen_chord_id_for(const std::vector<Pitch>& written_order, Rng& rng) {
    Triad t;
    try {
        t = theory::identify_triad(written_order);
    } catch (const TheoryError& e) {
        throw IneligibleError(e.what());
    }
    const auto members = t.members();
    const auto symbol_ok = [](const Triad& x) { return x.root.accidental >= -1 && x.root.accidental <= 1; };
    std::vector<std::string> same_root, other_root;
    for (auto q : kQualities) {
        if (q != t.quality) same_root.push_back(theory::chord_symbol({t.root, q}));
    }
    for (int i = 1; i < 3; ++i) {
        for (auto q : kQualities) {
            const Triad x{members[static_cast<std::size_t>(i)], q};
            if (symbol_ok(x)) other_root.push_back(theory::chord_symbol(x));
        }
    }
    return make_record(Template::chord_id, kChordIdQuestion, chord_payload(written_order), theory::chord_symbol(t),
                       {same_root, other_root}, rng);
}

QARecord gen_chord_id(const Tune& tune, Rng& rng, const GenOptions&) {
    const auto degrees = theory::key_scale_classes(tune.header.key);
    for (int attempt = 0; attempt < 16; ++attempt) {
        const Triad target{pick(rng, degrees), kQualities[rng.below(kQualities.size())]};
        if (target.root.accidental < -1 || target.root.accidental > 1) continue;
        auto stacked = stack_triad(target, 0);
        if (!stacked) continue;
        // random inversion: lift the lowest members an octave
        const int inversion = static_cast<int>(rng.below(3));
        for (int i = 0; i < inversion; ++i) (*stacked)[static_cast<std::size_t>(i)].octave += 1;
        std::rotate(stacked->begin(), stacked->begin() + inversion, stacked->end());
        try {
            return gen_chord_id_for(*stacked, rng);
        } catch (const IneligibleError&) {
            continue;
        }
    }
    throw IneligibleError("no spellable chord found");
}

QARecord gen_scale_id(const Tune& tune, Rng& rng, const GenOptions& opt) {
    const abc::Key& key = tune.header.key;
    if (!theory::key_in_range(key)) throw IneligibleError("key out of range");
    const auto notes = single_notes(tune);
    if (static_cast<int>(notes.size()) < opt.melody_min_notes) throw IneligibleError("melody too short");
    const auto scale = theory::key_scale_classes(key);
    const std::set<PitchClass> in_key(scale.begin(), scale.end());

    std::vector<std::string> same_letter, parallel;
    for (int acc = -1; acc <= 1; ++acc) {
        if (acc != key.tonic_accidental) same_letter.push_back(abc::Key{key.tonic, acc, key.mode}.name());
    }
    parallel.push_back(
        abc::Key{key.tonic, key.tonic_accidental, key.mode == abc::Mode::major ? abc::Mode::minor : abc::Mode::major}
            .name());

    const int max_len = std::min(opt.melody_max_notes, static_cast<int>(notes.size()));
    for (int attempt = 0; attempt < 16; ++attempt) {
        const int len = rng.between(opt.melody_min_notes, max_len);
        const std::size_t start = static_cast<std::size_t>(rng.below(notes.size() - static_cast<std::size_t>(len) + 1));
        const std::vector<Pitch> melody(notes.begin() + static_cast<std::ptrdiff_t>(start),
                                        notes.begin() + static_cast<std::ptrdiff_t>(start) + len);
        if (!std::all_of(melody.begin(), melody.end(), [&](const Pitch& p) { return in_key.count(p.pitch_class()); })) {
            continue;
        }
        try {
            return make_record(Template::scale_id, kScaleIdQuestion, scale_payload(melody), key.name(),
                               {same_letter, parallel}, rng);
        } catch (const IneligibleError&) {
            continue;
        }
    }
    throw IneligibleError("no melody window that rules out every distractor key");
}

QARecord gen_scale_selection(const ScaleSpec& spec, Rng& rng) {
    std::vector<Pitch> expected;
    try {
        expected = theory::scale_pitches(spec);
    } catch (const TheoryError& e) {
        throw IneligibleError(e.what());
    }
    ScaleSpec ascending_spec = spec;
    ascending_spec.direction = ScaleDirection::ascending;
    const auto ascending = theory::scale_pitches(ascending_spec);
    const bool descending = spec.direction == ScaleDirection::descending;
    const auto oriented = [&](std::vector<Pitch> p) {
        if (descending) std::reverse(p.begin(), p.end());
        return p;
    };

    std::vector<std::string> reversed, parallel, altered;
    auto rev = expected;
    std::reverse(rev.begin(), rev.end());
    reversed.push_back(scale_payload(rev));
    try {
        ScaleSpec other = spec;
        other.mode = spec.mode == ScaleMode::major ? ScaleMode::natural_minor : ScaleMode::major;
        parallel.push_back(scale_payload(theory::scale_pitches(other)));
    } catch (const TheoryError&) {
    }
    for (std::size_t degree = 1; degree <= 6; ++degree) {
        for (int d : {-1, 1}) {
            auto p = ascending;
            p[degree].accidental += d;
            if (p[degree].accidental < -2 || p[degree].accidental > 2) continue;
            altered.push_back(scale_payload(oriented(p)));
        }
    }
    QARecord r = make_record(Template::scale_selection, scale_selection_question(spec), "None",
                             scale_payload(expected), {reversed, parallel, altered}, rng);
    return r;
}

QARecord generate(Template t, const Tune& tune, std::uint64_t seed, const GenOptions& opt) {
    Rng rng(seed);
    QARecord r;
    switch (t) {
        case Template::time_signature: r = gen_time_signature(tune, rng, opt); break;
        case Template::bar_placement: r = gen_bar_placement(tune, rng, opt); break;
        case Template::interval_number: r = gen_interval_number(tune, rng, opt); break;
        case Template::note_completion: r = gen_note_completion(tune, rng, opt); break;
        case Template::chords_completion: r = gen_chords_completion(tune, rng, opt); break;
        case Template::chord_root_id: r = gen_chord_root_id(tune, rng, opt); break;
        case Template::chord_id: r = gen_chord_id(tune, rng, opt); break;
        case Template::scale_id: r = gen_scale_id(tune, rng, opt); break;
        case Template::scale_selection: {
            const auto& keys = theory::supported_keys();
            const abc::Key& k = keys[static_cast<std::size_t>(rng.below(keys.size()))];
            const ScaleSpec spec{{k.tonic, k.tonic_accidental},
                                 k.mode == abc::Mode::major ? ScaleMode::major : ScaleMode::natural_minor,
                                 rng.chance(1, 2) ? ScaleDirection::ascending : ScaleDirection::descending};
            r = gen_scale_selection(spec, rng);
            break;
        }
    }
    r.seed = seed;
    return r;
}

bool eligible(Template t, const Tune& tune, const GenOptions& opt) {
    switch (t) {
        case Template::time_signature: return !full_windows(tune, opt.context_measures).empty();
        case Template::bar_placement:
            return opt.context_measures >= 2 && !full_windows(tune, opt.context_measures).empty();
        case Template::interval_number: return !interval_pairs(tune).empty();
        case Template::note_completion: return !single_notes(tune).empty();
        case Template::chords_completion:
        case Template::chord_root_id:
        case Template::chord_id: return theory::key_in_range(tune.header.key);
        case Template::scale_id:
            return theory::key_in_range(tune.header.key) &&
                   static_cast<int>(single_notes(tune).size()) >= opt.melody_min_notes;
        case Template::scale_selection: return true;
    }
    return false;
}

}  // namespace musiqa::qgen
