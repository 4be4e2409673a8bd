#pragma once

// ABC notation subset: data model, parser and canonical serializer.
//
// Accepted body syntax: notes with ^ ^^ _ __ = accidentals, ' and , octave
// marks, integer/fraction length suffixes, rests z (and single-measure Z),
// multinotes [...], the (3 triplet, ties, and bar lines | || |] [|.
// Decorations, slurs, grace notes, chord symbols, annotations, comments and
// lyric lines are consumed and dropped. Everything else (broken rhythm,
// other tuplets, repeats, endings, voices, inline fields) is rejected.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "musiqa/error.hpp"
#include "musiqa/rational.hpp"

namespace musiqa::abc {

enum class Letter : std::uint8_t { C = 0, D, E, F, G, A, B };

inline constexpr int kLetterCount = 7;
inline constexpr int kMinOctave = -4;
inline constexpr int kMaxOctave = 4;

char letter_char(Letter l);  // uppercase
std::optional<Letter> letter_from_char(char c);  // accepts either case

struct Meter {
    int beats = 4;
    int beat_unit = 4;

    Duration capacity() const { return Duration(beats, beat_unit); }
    std::string str() const { return std::to_string(beats) + "/" + std::to_string(beat_unit); }
    friend bool operator==(const Meter&, const Meter&) = default;
};

enum class Mode : std::uint8_t { major, minor };

struct Key {
    Letter tonic = Letter::C;
    int tonic_accidental = 0;  // -1, 0, +1
    Mode mode = Mode::major;

    // "C", "Am", "Eb", "C#m".
    std::string name() const;
    friend bool operator==(const Key&, const Key&) = default;
};

// Signature size: positive for sharps, negative for flats. Supported keys
// lie in [-7, 7].
int signature_fifths(const Key& key);

// Parses a key display name ("A", "C#m", "Ebm", "Bbmin", "A minor"). Range is
// not checked here; see theory::key_signature.
std::optional<Key> parse_key_name(std::string_view text);

struct WrittenNote {
    Letter letter = Letter::C;
    std::optional<int> accidental;  // absent: inherit from measure/key
    int octave = 0;                 // 0 = uppercase register, 1 = lowercase

    friend bool operator==(const WrittenNote&, const WrittenNote&) = default;
};

enum class EventKind : std::uint8_t { note, rest, multinote };

struct Event {
    EventKind kind = EventKind::note;
    std::vector<WrittenNote> notes;  // 1 for note, >= 2 for multinote, 0 for rest
    Duration duration{1};            // in units of L:
    bool tie = false;
    bool beam_next = false;      // written without whitespace before the next event
    bool triplet_start = false;  // first event of a (3 group
    bool in_triplet = false;     // duration already scaled by 2/3

    friend bool operator==(const Event&, const Event&) = default;
};

struct Measure {
    std::vector<Event> events;
    friend bool operator==(const Measure&, const Measure&) = default;
};

struct Header {
    Duration unit_length{1, 8};
    std::optional<Meter> meter;
    Key key;
    std::optional<std::string> tempo;
    std::optional<int> reference_number;
    std::optional<std::string> title;

    friend bool operator==(const Header&, const Header&) = default;
};

struct Tune {
    Header header;
    std::vector<Measure> measures;
    std::string raw_source;

    // Structural equality ignores raw_source.
    friend bool operator==(const Tune& a, const Tune& b) {
        return a.header == b.header && a.measures == b.measures;
    }
};

// The unbarred form of a tune: one flat event list under the same headers.
struct EventSequence {
    Header header;
    std::vector<Event> events;
};

class ParseError : public Error {
public:
    enum class Kind { unsupported_token, malformed_header, empty_body };

    ParseError(Kind kind, std::string message, std::size_t position = 0, std::string token = {});

    Kind kind() const { return kind_; }
    std::size_t position() const { return position_; }
    const std::string& token() const { return token_; }

private:
    Kind kind_;
    std::size_t position_;
    std::string token_;
};

struct ParseOptions {
    // Chord-completion distractors deliberately repeat a member ("[B^d^d]").
    // Strict parsing rejects that; verification and rendering relax it.
    bool allow_duplicate_chord_notes = false;
};

Tune parse_tune(std::string_view text, const ParseOptions& options = {});

// Canonical form: headers in order X,T,L,Q,M,K; "| " measure delimiters;
// one space between beam groups, none inside a beam group.
std::string serialize(const Tune& tune);
std::string serialize_header(const Header& header);
std::string serialize_events(const std::vector<Event>& events);
std::string serialize_event(const Event& event);
std::string serialize_note(const WrittenNote& note);
// Headers followed by the events with no bar lines.
std::string serialize(const EventSequence& seq);

// Length suffix for a duration in units of L ("" for 1, "/" for 1/2).
std::string length_suffix(const Duration& d);

class TooShortError : public Error {
public:
    using Error::Error;
};

EventSequence strip_bars(const Tune& tune);

// Builds a tune from a flat event list and bar positions. `cuts` are the
// indices of the first event of every measure after the first, ascending.
Tune bar_events(const Header& header, const std::vector<Event>& events, const std::vector<std::size_t>& cuts);

// Indices of the first event of every measure after the first.
std::vector<std::size_t> bar_positions(const Tune& tune);

Duration total_duration(const std::vector<Event>& events);

}  // namespace musiqa::abc
