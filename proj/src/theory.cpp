#include "musiqa/theory.hpp"

#include <algorithm>
#include <set>

namespace musiqa::theory {

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int mod(int a, int b) { return ((a % b) + b) % b; }

// Accidental that turns `letter` into semitone class `target`, in [-6, 5].
int accidental_for(Letter letter, int target_class) {
    return mod(target_class - letter_base(letter) + 6, 12) - 6;
}

Letter letter_at(int index) { return static_cast<Letter>(mod(index, abc::kLetterCount)); }

// Pitch class from a signed position on the circle of fifths (C = 0).
PitchClass class_at_fifths(int fifths) {
    static constexpr Letter kOrder[] = {Letter::F, Letter::C, Letter::G, Letter::D,
                                        Letter::A, Letter::E, Letter::B};
    const int k = fifths + 1;
    return {kOrder[mod(k, 7)], floor_div(k, 7)};
}

// Semitone sizes indexed by [number - 1][quality]; -100 marks "no such name".
constexpr int kNone = -100;
constexpr int kIntervalTable[8][5] = {
    // perfect, major, minor, augmented, diminished
    {0, kNone, kNone, 1, kNone},    // unison
    {kNone, 2, 1, 3, 0},            // second
    {kNone, 4, 3, 5, 2},            // third
    {5, kNone, kNone, 6, 4},        // fourth
    {7, kNone, kNone, 8, 6},        // fifth
    {kNone, 9, 8, 10, 7},           // sixth
    {kNone, 11, 10, 12, 9},         // seventh
    {12, kNone, kNone, 13, 11},     // octave
};

constexpr const char* kNumberNames[8] = {"unison", "second", "third", "fourth",
                                         "fifth",  "sixth",  "seventh", "octave"};
constexpr const char* kQualityNames[5] = {"perfect", "major", "minor", "augmented", "diminished"};

constexpr int kMajorSteps[7] = {2, 2, 1, 2, 2, 2, 1};
constexpr int kMinorSteps[7] = {2, 1, 2, 2, 1, 2, 2};

std::string accidental_suffix(int acc) {
    if (acc > 0) return std::string(static_cast<std::size_t>(acc), '#');
    if (acc < 0) return std::string(static_cast<std::size_t>(-acc), 'b');
    return {};
}

}  // namespace

int letter_base(Letter l) {
    static constexpr int kBase[abc::kLetterCount] = {0, 2, 4, 5, 7, 9, 11};
    return kBase[static_cast<int>(l)];
}

int PitchClass::semitone_class() const { return mod(letter_base(letter) + accidental, 12); }

int semitone_index(const Pitch& p) { return 12 * p.octave + letter_base(p.letter) + p.accidental; }

// ---------------------------------------------------------------------------
// Keys

bool key_in_range(const Key& key) {
    const int f = abc::signature_fifths(key);
    return f >= -7 && f <= 7 && key.tonic_accidental >= -1 && key.tonic_accidental <= 1;
}

KeySignature key_signature(const Key& key) {
    if (!key_in_range(key)) {
        throw TheoryError(TheoryError::Kind::unsupported_key, "key out of range: " + key.name());
    }
    static constexpr Letter kSharps[] = {Letter::F, Letter::C, Letter::G, Letter::D,
                                         Letter::A, Letter::E, Letter::B};
    static constexpr Letter kFlats[] = {Letter::B, Letter::E, Letter::A, Letter::D,
                                        Letter::G, Letter::C, Letter::F};
    const int f = abc::signature_fifths(key);
    KeySignature sig;
    for (int i = 0; i < f; ++i) sig[kSharps[i]] = 1;
    for (int i = 0; i < -f; ++i) sig[kFlats[i]] = -1;
    return sig;
}

const std::vector<Key>& supported_keys() {
    static const std::vector<Key> keys = [] {
        std::vector<Key> out;
        for (Mode mode : {Mode::major, Mode::minor}) {
            for (int f = -7; f <= 7; ++f) {
                const PitchClass tonic = class_at_fifths(mode == Mode::major ? f : f + 3);
                out.push_back(Key{tonic.letter, tonic.accidental, mode});
            }
        }
        return out;
    }();
    return keys;
}

std::size_t MeasureAccidentals::index(Letter l, int octave) {
    return static_cast<std::size_t>(static_cast<int>(l) * (abc::kMaxOctave - abc::kMinOctave + 1) +
                                    (octave - abc::kMinOctave));
}

std::optional<int> MeasureAccidentals::get(Letter l, int octave) const {
    const signed char v = slots_[index(l, octave)];
    if (v == kUnset) return std::nullopt;
    return v;
}

void MeasureAccidentals::set(Letter l, int octave, int accidental) {
    slots_[index(l, octave)] = static_cast<signed char>(accidental);
}

Pitch sounding_pitch(const abc::WrittenNote& note, const Key& key, MeasureAccidentals& measure_state) {
    Pitch p{note.letter, 0, note.octave};
    if (note.accidental) {
        p.accidental = *note.accidental;
        measure_state.set(note.letter, note.octave, *note.accidental);
    } else if (auto remembered = measure_state.get(note.letter, note.octave)) {
        p.accidental = *remembered;
    } else {
        const KeySignature sig = key_signature(key);
        const auto it = sig.find(note.letter);
        p.accidental = it == sig.end() ? 0 : it->second;
    }
    return p;
}

abc::WrittenNote spell(const Pitch& pitch, const Key& key, MeasureAccidentals& measure_state) {
    int implied = 0;
    if (auto remembered = measure_state.get(pitch.letter, pitch.octave)) {
        implied = *remembered;
    } else {
        const KeySignature sig = key_signature(key);
        const auto it = sig.find(pitch.letter);
        implied = it == sig.end() ? 0 : it->second;
    }
    abc::WrittenNote note{pitch.letter, std::nullopt, pitch.octave};
    if (implied != pitch.accidental) {
        note.accidental = pitch.accidental;
        measure_state.set(pitch.letter, pitch.octave, pitch.accidental);
    }
    return note;
}

std::vector<std::vector<Pitch>> sounding_events(const abc::Measure& measure, const Key& key) {
    MeasureAccidentals state;
    std::vector<std::vector<Pitch>> out;
    for (const auto& e : measure.events) {
        std::vector<Pitch> pitches;
        for (const auto& n : e.notes) pitches.push_back(sounding_pitch(n, key, state));
        out.push_back(std::move(pitches));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Intervals

bool is_perfect_class(int number) { return number == 1 || number == 4 || number == 5 || number == 8; }

bool is_valid(const Interval& iv) {
    if (iv.number < 1 || iv.number > 8) return false;
    return kIntervalTable[iv.number - 1][static_cast<int>(iv.quality)] != kNone;
}

int Interval::semitones() const {
    if (!is_valid(*this)) {
        throw TheoryError(TheoryError::Kind::non_nameable, "no such interval: " + std::to_string(number));
    }
    return kIntervalTable[number - 1][static_cast<int>(quality)];
}

std::string Interval::name() const {
    return std::string(kQualityNames[static_cast<int>(quality)]) + " " + kNumberNames[number - 1];
}

std::optional<Interval> parse_interval_name(const std::string& name) {
    for (const auto& iv : nameable_intervals()) {
        if (iv.name() == name) return iv;
    }
    return std::nullopt;
}

const std::vector<Interval>& nameable_intervals() {
    static const std::vector<Interval> all = [] {
        std::vector<Interval> out;
        for (int n = 1; n <= 8; ++n) {
            for (Quality q : {Quality::diminished, Quality::minor, Quality::perfect, Quality::major,
                              Quality::augmented}) {
                Interval iv{n, q};
                if (is_valid(iv)) out.push_back(iv);
            }
        }
        return out;
    }();
    return all;
}

Interval interval_between(const Pitch& low, const Pitch& high) {
    const int semis = semitone_index(high) - semitone_index(low);
    const int steps = high.step() - low.step();
    if (semis < 0 || steps < 0 || steps > 7) {
        throw TheoryError(TheoryError::Kind::out_of_range, "interval outside unison..octave");
    }
    const int number = steps + 1;
    for (int q = 0; q < 5; ++q) {
        if (kIntervalTable[number - 1][q] == semis) return Interval{number, static_cast<Quality>(q)};
    }
    throw TheoryError(TheoryError::Kind::non_nameable,
                      "no name for " + std::to_string(semis) + " semitones over " + kNumberNames[number - 1]);
}

Pitch transpose(const Pitch& p, const Interval& iv, Direction direction) {
    const int sign = direction == Direction::up ? 1 : -1;
    const int step = p.step() + sign * (iv.number - 1);
    const int semis = semitone_index(p) + sign * iv.semitones();
    Pitch out;
    out.letter = letter_at(step);
    out.octave = floor_div(step, 7);
    out.accidental = semis - 12 * out.octave - letter_base(out.letter);
    if (out.octave < abc::kMinOctave || out.octave > abc::kMaxOctave) {
        throw TheoryError(TheoryError::Kind::out_of_range, "transposition leaves the supported octaves");
    }
    if (out.accidental < -2 || out.accidental > 2) {
        throw TheoryError(TheoryError::Kind::unspellable, "transposition needs a triple accidental");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scales

Key ScaleSpec::key() const {
    return Key{tonic.letter, tonic.accidental, mode == ScaleMode::major ? Mode::major : Mode::minor};
}

std::vector<Pitch> scale_pitches(const ScaleSpec& spec) {
    if (!key_in_range(spec.key())) {
        throw TheoryError(TheoryError::Kind::unsupported_key, "scale key out of range: " + spec.key().name());
    }
    const int* steps = spec.mode == ScaleMode::major ? kMajorSteps : kMinorSteps;
    std::vector<Pitch> out;
    Pitch current{spec.tonic.letter, spec.tonic.accidental, 0};
    out.push_back(current);
    for (int i = 0; i < 7; ++i) {
        const int target = semitone_index(current) + steps[i];
        Pitch next;
        next.letter = letter_at(static_cast<int>(current.letter) + 1);
        next.octave = current.octave + (current.letter == Letter::B ? 1 : 0);
        next.accidental = target - 12 * next.octave - letter_base(next.letter);
        out.push_back(next);
        current = next;
    }
    if (spec.direction == ScaleDirection::descending) std::reverse(out.begin(), out.end());
    return out;
}

std::vector<PitchClass> key_scale_classes(const Key& key) {
    const int* steps = key.mode == Mode::major ? kMajorSteps : kMinorSteps;
    std::vector<PitchClass> out;
    int target = letter_base(key.tonic) + key.tonic_accidental;
    for (int i = 0; i < 7; ++i) {
        const Letter l = letter_at(static_cast<int>(key.tonic) + i);
        out.push_back({l, accidental_for(l, mod(target, 12))});
        target += steps[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Triads

std::array<PitchClass, 3> Triad::members() const {
    int third = 4;
    int fifth = 7;
    switch (quality) {
        case TriadQuality::major: break;
        case TriadQuality::minor: third = 3; break;
        case TriadQuality::diminished: third = 3; fifth = 6; break;
        case TriadQuality::augmented: fifth = 8; break;
    }
    const int root_class = letter_base(root.letter) + root.accidental;
    const Letter third_letter = letter_at(static_cast<int>(root.letter) + 2);
    const Letter fifth_letter = letter_at(static_cast<int>(root.letter) + 4);
    return {root, PitchClass{third_letter, accidental_for(third_letter, mod(root_class + third, 12))},
            PitchClass{fifth_letter, accidental_for(fifth_letter, mod(root_class + fifth, 12))}};
}

std::string quality_name(TriadQuality q) {
    switch (q) {
        case TriadQuality::major: return "major";
        case TriadQuality::minor: return "minor";
        case TriadQuality::diminished: return "diminished";
        case TriadQuality::augmented: return "augmented";
    }
    return {};
}

std::string quality_suffix(TriadQuality q) {
    switch (q) {
        case TriadQuality::major: return "";
        case TriadQuality::minor: return "m";
        case TriadQuality::diminished: return "dim";
        case TriadQuality::augmented: return "aug";
    }
    return {};
}

Triad identify_triad(const std::vector<Pitch>& pitches) {
    std::set<PitchClass> classes;
    for (const auto& p : pitches) classes.insert(p.pitch_class());
    if (classes.size() != 3) {
        throw TheoryError(TheoryError::Kind::not_a_triad,
                          "need exactly 3 pitch classes, got " + std::to_string(classes.size()));
    }
    for (const auto& root : classes) {
        for (TriadQuality q : {TriadQuality::major, TriadQuality::minor, TriadQuality::diminished,
                               TriadQuality::augmented}) {
            const Triad t{root, q};
            const auto m = t.members();
            if (std::set<PitchClass>(m.begin(), m.end()) == classes) return t;
        }
    }
    throw TheoryError(TheoryError::Kind::not_a_triad, "pitch classes do not stack in thirds");
}

std::size_t root_member(const std::vector<Pitch>& pitches, const Triad& triad) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < pitches.size(); ++i) {
        if (pitches[i].pitch_class() != triad.root) continue;
        if (!best || semitone_index(pitches[i]) < semitone_index(pitches[*best])) best = i;
    }
    if (!best) throw TheoryError(TheoryError::Kind::not_members, "root not present");
    return *best;
}

Pitch complete_triad(const Pitch& a, const Pitch& b, const Triad& target) {
    const auto members = target.members();
    const auto is_member = [&](const PitchClass& pc) {
        return std::find(members.begin(), members.end(), pc) != members.end();
    };
    if (!is_member(a.pitch_class()) || !is_member(b.pitch_class())) {
        throw TheoryError(TheoryError::Kind::not_members, "given pitch is not a member of the target triad");
    }
    if (a.pitch_class() == b.pitch_class()) {
        throw TheoryError(TheoryError::Kind::ambiguous, "given pitches are the same member");
    }
    PitchClass missing;
    for (const auto& m : members) {
        if (m != a.pitch_class() && m != b.pitch_class()) missing = m;
    }
    const int lowest = std::min(semitone_index(a), semitone_index(b));
    for (int octave = abc::kMinOctave; octave <= abc::kMaxOctave; ++octave) {
        const Pitch p{missing.letter, missing.accidental, octave};
        if (semitone_index(p) > lowest) return p;
    }
    throw TheoryError(TheoryError::Kind::out_of_range, "no octave above the given pitches");
}

std::array<int, 3> sounding_classes(const Triad& t) {
    const auto m = t.members();
    std::array<int, 3> out{m[0].semitone_class(), m[1].semitone_class(), m[2].semitone_class()};
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Names

std::string class_name(const PitchClass& pc) { return abc::letter_char(pc.letter) + accidental_suffix(pc.accidental); }

std::string pitch_name(const Pitch& p) {
    std::string out;
    const char upper = abc::letter_char(p.letter);
    if (p.octave >= 1) {
        out += static_cast<char>(upper - 'A' + 'a');
        out.append(static_cast<std::size_t>(p.octave - 1), '\'');
    } else {
        out += upper;
        out.append(static_cast<std::size_t>(-p.octave), ',');
    }
    return out + accidental_suffix(p.accidental);
}

std::optional<NamedPitch> parse_pitch_name(const std::string& name) {
    if (name.empty()) return std::nullopt;
    auto letter = abc::letter_from_char(name[0]);
    if (!letter) return std::nullopt;
    NamedPitch out;
    out.pitch_class.letter = *letter;
    out.octave = (name[0] >= 'a' && name[0] <= 'z') ? 1 : 0;
    std::size_t i = 1;
    for (; i < name.size() && (name[i] == '\'' || name[i] == ','); ++i) out.octave += name[i] == '\'' ? 1 : -1;
    int acc = 0;
    for (; i < name.size(); ++i) {
        if (name[i] == '#' && acc >= 0) {
            ++acc;
        } else if (name[i] == 'b' && acc <= 0) {
            --acc;
        } else {
            return std::nullopt;
        }
    }
    if (acc < -2 || acc > 2) return std::nullopt;
    out.pitch_class.accidental = acc;
    return out;
}

std::string chord_symbol(const Triad& t) { return class_name(t.root) + quality_suffix(t.quality); }

std::optional<Triad> parse_chord_symbol(const std::string& symbol) {
    if (symbol.empty() || symbol[0] < 'A' || symbol[0] > 'G') return std::nullopt;
    Triad t;
    t.root.letter = *abc::letter_from_char(symbol[0]);
    std::size_t i = 1;
    int acc = 0;
    while (i < symbol.size() && (symbol[i] == '#' || symbol[i] == 'b')) {
        acc += symbol[i] == '#' ? 1 : -1;
        ++i;
    }
    t.root.accidental = acc;
    const std::string suffix = symbol.substr(i);
    if (suffix.empty()) {
        t.quality = TriadQuality::major;
    } else if (suffix == "m") {
        t.quality = TriadQuality::minor;
    } else if (suffix == "dim") {
        t.quality = TriadQuality::diminished;
    } else if (suffix == "aug") {
        t.quality = TriadQuality::augmented;
    } else {
        return std::nullopt;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Meter

Duration measure_capacity(const Meter& meter, const Duration& unit) { return meter.capacity() / unit; }

bool MeasureReport::all_full() const {
    return std::all_of(measures.begin(), measures.end(), [](const MeasureStatus& m) { return m.full; });
}

bool MeasureReport::valid_with_pickup() const {
    for (std::size_t i = 0; i < measures.size(); ++i) {
        if (measures[i].full) continue;
        if (i == 0 && anacrusis_first) continue;
        if (i + 1 == measures.size() && partial_last) continue;
        return false;
    }
    return true;
}

MeasureReport validate_measures(const abc::Tune& tune, const Meter& meter) {
    const Duration capacity = measure_capacity(meter, tune.header.unit_length);
    MeasureReport report;
    for (std::size_t i = 0; i < tune.measures.size(); ++i) {
        const Duration d = abc::total_duration(tune.measures[i].events);
        report.measures.push_back({i, d, capacity, d == capacity});
    }
    if (report.measures.size() > 1) {
        report.anacrusis_first = report.measures.front().duration < capacity;
        report.partial_last = report.measures.back().duration < capacity;
    }
    return report;
}

std::optional<std::vector<std::size_t>> rebar(const std::vector<abc::Event>& events, const Duration& capacity) {
    std::vector<std::size_t> cuts;
    Duration acc(0);
    for (std::size_t i = 0; i < events.size(); ++i) {
        acc += events[i].duration;
        if (acc > capacity) return std::nullopt;
        if (acc == capacity && i + 1 < events.size()) {
            if (events[i + 1].in_triplet && !events[i + 1].triplet_start) return std::nullopt;
            cuts.push_back(i + 1);
            acc = Duration(0);
        }
    }
    return cuts;
}

std::vector<std::size_t> greedy_barring(const std::vector<abc::Event>& events, const Duration& capacity) {
    std::vector<std::size_t> cuts;
    Duration acc(0);
    for (std::size_t i = 0; i < events.size(); ++i) {
        acc += events[i].duration;
        if (acc >= capacity && i + 1 < events.size()) {
            if (events[i + 1].in_triplet && !events[i + 1].triplet_start) continue;
            cuts.push_back(i + 1);
            acc = Duration(0);
        }
    }
    return cuts;
}

// ---------------------------------------------------------------------------
// Key inference

std::vector<KeyCandidate> infer_keys(const abc::Tune& tune) {
    std::set<PitchClass> used;
    std::vector<PitchClass> order;  // one class per pitched event (lowest note)
    for (const auto& m : tune.measures) {
        for (const auto& pitches : sounding_events(m, tune.header.key)) {
            if (pitches.empty()) continue;
            for (const auto& p : pitches) used.insert(p.pitch_class());
            const auto low = std::min_element(pitches.begin(), pitches.end(), [](const Pitch& a, const Pitch& b) {
                return semitone_index(a) < semitone_index(b);
            });
            order.push_back(low->pitch_class());
        }
    }

    std::vector<std::pair<std::size_t, KeyCandidate>> ranked;
    const auto& keys = supported_keys();
    for (std::size_t k = 0; k < keys.size(); ++k) {
        const auto scale = key_scale_classes(keys[k]);
        const bool consistent = std::all_of(used.begin(), used.end(), [&](const PitchClass& pc) {
            return std::find(scale.begin(), scale.end(), pc) != scale.end();
        });
        if (!consistent) continue;
        KeyCandidate c;
        c.key = keys[k];
        const KeySignature sig = key_signature(keys[k]);
        c.exact = std::all_of(sig.begin(), sig.end(), [&](const auto& entry) {
            return used.count(PitchClass{entry.first, entry.second}) > 0;
        });
        const PitchClass tonic{keys[k].tonic, keys[k].tonic_accidental};
        if (!order.empty()) {
            c.tonic_final = order.back() == tonic;
            c.tonic_first = order.front() == tonic;
        }
        c.tonic_count = static_cast<int>(std::count(order.begin(), order.end(), tonic));
        ranked.emplace_back(k, c);
    }
    if (ranked.empty()) throw NoCandidatesError("accidentals are inconsistent with every supported key");

    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        const KeyCandidate& x = a.second;
        const KeyCandidate& y = b.second;
        if (x.exact != y.exact) return x.exact;
        if (x.tonic_final != y.tonic_final) return x.tonic_final;
        if (x.tonic_first != y.tonic_first) return x.tonic_first;
        if (x.tonic_count != y.tonic_count) return x.tonic_count > y.tonic_count;
        return a.first < b.first;
    });
    std::vector<KeyCandidate> out;
    for (auto& [_, c] : ranked) out.push_back(c);
    return out;
}

}  // namespace musiqa::theory
