#pragma once

// Music-theory kernel: spelled pitches, key signatures, intervals, scales,
// triads and exact measure arithmetic.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "musiqa/abc.hpp"

namespace musiqa::theory {

using abc::Key;
using abc::Letter;
using abc::Meter;
using abc::Mode;

struct PitchClass {
    Letter letter = Letter::C;
    int accidental = 0;

    int semitone_class() const;  // 0..11
    friend bool operator==(const PitchClass&, const PitchClass&) = default;
    friend auto operator<=>(const PitchClass&, const PitchClass&) = default;
};

struct Pitch {
    Letter letter = Letter::C;
    int accidental = 0;  // -2..+2
    int octave = 0;      // 0 = uppercase ABC register

    PitchClass pitch_class() const { return {letter, accidental}; }
    // Diatonic position: 7 * octave + letter index.
    int step() const { return 7 * octave + static_cast<int>(letter); }
    friend bool operator==(const Pitch&, const Pitch&) = default;
};

int letter_base(Letter l);  // C:0 D:2 E:4 F:5 G:7 A:9 B:11

// 12 * octave + base(letter) + accidental.
int semitone_index(const Pitch& p);

class TheoryError : public Error {
public:
    enum class Kind { unsupported_key, out_of_range, non_nameable, unspellable, not_a_triad, not_members, ambiguous };

    TheoryError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// ---------------------------------------------------------------------------
// Keys

// Letters altered by the key and their accidental; unaltered letters absent.
using KeySignature = std::map<Letter, int>;

KeySignature key_signature(const Key& key);
bool key_in_range(const Key& key);

// The 30 supported keys (15 major, 15 minor), ordered by mode then fifths.
const std::vector<Key>& supported_keys();

// Per-measure accidental memory, keyed by letter and octave.
class MeasureAccidentals {
public:
    MeasureAccidentals() { clear(); }
    std::optional<int> get(Letter l, int octave) const;
    void set(Letter l, int octave, int accidental);
    void clear() { slots_.fill(kUnset); }

private:
    static constexpr signed char kUnset = 99;
    static std::size_t index(Letter l, int octave);
    std::array<signed char, abc::kLetterCount * (abc::kMaxOctave - abc::kMinOctave + 1)> slots_;
};

// Explicit accidental wins and is remembered; otherwise measure memory, then
// the key signature.
Pitch sounding_pitch(const abc::WrittenNote& note, const Key& key, MeasureAccidentals& measure_state);

// Inverse of sounding_pitch: writes an explicit accidental only where the
// reader would otherwise infer a different one.
abc::WrittenNote spell(const Pitch& pitch, const Key& key, MeasureAccidentals& measure_state);

// Sounding pitches of every note event in a measure (rests skipped,
// multinotes expanded in written order).
std::vector<std::vector<Pitch>> sounding_events(const abc::Measure& measure, const Key& key);

// ---------------------------------------------------------------------------
// Intervals

enum class Quality { perfect, major, minor, augmented, diminished };

struct Interval {
    int number = 1;  // 1 = unison .. 8 = octave
    Quality quality = Quality::perfect;

    int semitones() const;  // throws non_nameable for invalid combinations
    std::string name() const;  // "perfect octave"
    friend bool operator==(const Interval&, const Interval&) = default;
};

bool is_perfect_class(int number);
bool is_valid(const Interval& iv);
std::optional<Interval> parse_interval_name(const std::string& name);

// Every interval with a name in the quality table, unison..octave (27).
const std::vector<Interval>& nameable_intervals();

Interval interval_between(const Pitch& low, const Pitch& high);

enum class Direction { up, down };

Pitch transpose(const Pitch& p, const Interval& iv, Direction direction);

// ---------------------------------------------------------------------------
// Scales

enum class ScaleMode { major, natural_minor };
enum class ScaleDirection { ascending, descending };

struct ScaleSpec {
    PitchClass tonic;
    ScaleMode mode = ScaleMode::major;
    ScaleDirection direction = ScaleDirection::ascending;

    Key key() const;
    friend bool operator==(const ScaleSpec&, const ScaleSpec&) = default;
};

std::vector<Pitch> scale_pitches(const ScaleSpec& spec);

// Spelled pitch classes of the key's scale. Defined for any tonic, not just
// the 30 supported keys (theoretical keys may carry double accidentals or
// worse; such classes still compare correctly).
std::vector<PitchClass> key_scale_classes(const Key& key);

// ---------------------------------------------------------------------------
// Triads

enum class TriadQuality { major, minor, diminished, augmented };

struct Triad {
    PitchClass root;
    TriadQuality quality = TriadQuality::major;

    // Root, third, fifth.
    std::array<PitchClass, 3> members() const;
    friend bool operator==(const Triad&, const Triad&) = default;
};

std::string quality_name(TriadQuality q);    // "augmented"
std::string quality_suffix(TriadQuality q);  // "", "m", "dim", "aug"

Triad identify_triad(const std::vector<Pitch>& pitches);

// Index into `pitches` of a member carrying the root (the lowest such).
std::size_t root_member(const std::vector<Pitch>& pitches, const Triad& triad);

// Missing member, placed in the lowest octave above the lower given pitch.
Pitch complete_triad(const Pitch& a, const Pitch& b, const Triad& target);

// Semitone classes of the triad, sorted; equal for enharmonic spellings.
std::array<int, 3> sounding_classes(const Triad& t);

// ---------------------------------------------------------------------------
// Names

// Pitch class display name: uppercase letter plus '#', '##', 'b', 'bb'.
std::string class_name(const PitchClass& pc);
// ABC-cased name of a pitch, e.g. "G#", "d#", "_e" style is not used.
std::string pitch_name(const Pitch& p);
struct NamedPitch {
    PitchClass pitch_class;
    int octave = 0;
};
// Parses "G#", "d#", "Eb", "F##", "c'" style names.
std::optional<NamedPitch> parse_pitch_name(const std::string& name);

std::string chord_symbol(const Triad& t);  // "Fm", "Ebdim"
std::optional<Triad> parse_chord_symbol(const std::string& symbol);

// ---------------------------------------------------------------------------
// Meter

// Capacity in units of L.
Duration measure_capacity(const Meter& meter, const Duration& unit);

struct MeasureStatus {
    std::size_t index = 0;
    Duration duration;
    Duration capacity;
    bool full = false;
};

struct MeasureReport {
    std::vector<MeasureStatus> measures;
    bool anacrusis_first = false;  // first measure shorter than capacity
    bool partial_last = false;     // last measure shorter than capacity

    bool all_full() const;
    // Every measure is full except a short first and/or short last measure.
    bool valid_with_pickup() const;
};

MeasureReport validate_measures(const abc::Tune& tune, const Meter& meter);

// Bar positions that cut the sequence every `capacity` units; nullopt when
// an event would straddle a bar line. Inverse of strip_bars for full tunes.
std::optional<std::vector<std::size_t>> rebar(const std::vector<abc::Event>& events, const Duration& capacity);

// Greedy barring that closes a measure once it reaches or exceeds capacity.
std::vector<std::size_t> greedy_barring(const std::vector<abc::Event>& events, const Duration& capacity);

// ---------------------------------------------------------------------------
// Key inference

struct KeyCandidate {
    Key key;
    bool exact = false;        // every altered letter of the signature is used
    bool tonic_final = false;
    bool tonic_first = false;
    int tonic_count = 0;
};

// Keys whose signature agrees with every sounding note, best first.
std::vector<KeyCandidate> infer_keys(const abc::Tune& tune);

class NoCandidatesError : public Error {
public:
    using Error::Error;
};

}  // namespace musiqa::theory
