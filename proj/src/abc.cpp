#include "musiqa/abc.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace musiqa::abc {

namespace {

constexpr std::string_view kDroppedFields = "ABCDFGHINORSZrWw";
constexpr std::string_view kDecorationChars = ".~HLMOPSTuv";

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

bool is_field_line(std::string_view line) {
    return line.size() >= 2 && std::isalpha(static_cast<unsigned char>(line[0])) && line[1] == ':';
}

std::optional<Meter> parse_meter_value(std::string_view v, bool& absent) {
    absent = false;
    v = trim(v);
    if (v == "none") {
        absent = true;
        return std::nullopt;
    }
    if (v == "C") return Meter{4, 4};
    if (v == "C|") return Meter{2, 2};
    const auto slash = v.find('/');
    if (slash == std::string_view::npos) return std::nullopt;
    auto beats = parse_int(trim(v.substr(0, slash)));
    auto unit = parse_int(trim(v.substr(slash + 1)));
    if (!beats || !unit || *beats <= 0 || *beats > 64 || !is_power_of_two(*unit) || *unit > 64) return std::nullopt;
    return Meter{static_cast<int>(*beats), static_cast<int>(*unit)};
}

std::optional<Duration> parse_unit_length(std::string_view v) {
    v = trim(v);
    const auto slash = v.find('/');
    if (slash == std::string_view::npos) {
        auto n = parse_int(v);
        if (!n || *n != 1) return std::nullopt;
        return Duration(1);
    }
    auto num = parse_int(trim(v.substr(0, slash)));
    auto den = parse_int(trim(v.substr(slash + 1)));
    if (!num || !den || *num <= 0 || !is_power_of_two(*den) || *den > 512) return std::nullopt;
    return Duration(*num, *den);
}

std::optional<Key> parse_key_field(std::string_view v) {
    std::string joined;
    std::size_t i = 0;
    while (i < v.size()) {
        while (i < v.size() && std::isspace(static_cast<unsigned char>(v[i]))) ++i;
        std::size_t j = i;
        while (j < v.size() && !std::isspace(static_cast<unsigned char>(v[j]))) ++j;
        std::string_view tok = v.substr(i, j - i);
        if (!tok.empty() && !tok.starts_with("clef=")) joined += tok;
        i = j;
    }
    auto key = parse_key_name(joined);
    if (!key || std::abs(signature_fifths(*key)) > 7) return std::nullopt;
    return key;
}

// Cursor over one body line, keeping absolute offsets for error reporting.
struct Cursor {
    std::string_view line;
    std::size_t base = 0;
    std::size_t i = 0;

    bool done() const { return i >= line.size(); }
    char peek(std::size_t ahead = 0) const { return i + ahead < line.size() ? line[i + ahead] : '\0'; }
    std::size_t pos() const { return base + i; }
};

[[noreturn]] void unsupported(const Cursor& c, std::string_view token, std::string_view what) {
    throw ParseError(ParseError::Kind::unsupported_token,
                     std::string(what) + " '" + std::string(token) + "' at offset " + std::to_string(c.pos()), c.pos(),
                     std::string(token));
}

Duration parse_length(Cursor& c) {
    const std::size_t start = c.i;
    std::int64_t num = 1;
    std::int64_t den = 1;
    std::size_t j = c.i;
    while (std::isdigit(static_cast<unsigned char>(c.peek(j - c.i)))) ++j;
    if (j > c.i) {
        auto v = parse_int(c.line.substr(c.i, j - c.i));
        if (!v || *v <= 0 || *v > 64) unsupported(c, c.line.substr(start, j - start), "note length");
        num = *v;
        c.i = j;
    }
    bool numeric_den = false;
    while (c.peek() == '/') {
        ++c.i;
        std::size_t k = c.i;
        while (std::isdigit(static_cast<unsigned char>(c.peek(k - c.i)))) ++k;
        if (k > c.i) {
            if (numeric_den) unsupported(c, c.line.substr(start, k - start), "note length");
            auto v = parse_int(c.line.substr(c.i, k - c.i));
            if (!v || !is_power_of_two(*v) || *v > 64) unsupported(c, c.line.substr(start, k - start), "note length");
            den *= *v;
            numeric_den = true;
            c.i = k;
        } else {
            den *= 2;
        }
        if (den > 64) unsupported(c, c.line.substr(start, c.i - start), "note length");
    }
    return Duration(num, den);
}

// Accidental, letter and octave marks. Returns nullopt if the cursor is not
// at a note.
std::optional<WrittenNote> parse_note_head(Cursor& c) {
    const std::size_t start = c.i;
    std::optional<int> acc;
    if (c.peek() == '^') {
        acc = c.peek(1) == '^' ? 2 : 1;
        c.i += static_cast<std::size_t>(*acc);
    } else if (c.peek() == '_') {
        acc = c.peek(1) == '_' ? -2 : -1;
        c.i += static_cast<std::size_t>(-*acc);
    } else if (c.peek() == '=') {
        acc = 0;
        ++c.i;
    }
    const char ch = c.peek();
    auto letter = letter_from_char(ch);
    if (!letter) {
        if (acc) unsupported(c, c.line.substr(start, c.i - start + 1), "accidental without note");
        c.i = start;
        return std::nullopt;
    }
    ++c.i;
    WrittenNote n;
    n.letter = *letter;
    n.accidental = acc;
    n.octave = std::islower(static_cast<unsigned char>(ch)) ? 1 : 0;
    while (c.peek() == '\'' || c.peek() == ',') {
        n.octave += c.peek() == '\'' ? 1 : -1;
        ++c.i;
    }
    if (n.octave < kMinOctave || n.octave > kMaxOctave) unsupported(c, c.line.substr(start, c.i - start), "octave");
    return n;
}

void skip_delimited(Cursor& c, char close, std::string_view what) {
    const std::size_t start = c.i;
    const auto end = c.line.find(close, c.i + 1);
    if (end == std::string_view::npos) unsupported(c, c.line.substr(start), what);
    c.i = end + 1;
}

class BodyParser {
public:
    BodyParser(const Header& header, const ParseOptions& options) : header_(header), options_(options) {}

    void feed_line(std::string_view line, std::size_t base) {
        Cursor c{line, base, 0};
        pending_space_ = true;  // a line break separates beam groups
        while (!c.done()) step(c);
    }

    std::vector<Measure> finish(std::size_t end_pos) {
        if (triplet_remaining_ > 0) {
            throw ParseError(ParseError::Kind::unsupported_token, "unterminated triplet", end_pos, "(3");
        }
        close_measure();
        if (measures_.empty()) throw ParseError(ParseError::Kind::empty_body, "tune body has no events", end_pos);
        return std::move(measures_);
    }

private:
    void step(Cursor& c) {
        const char ch = c.peek();
        if (ch == ' ' || ch == '\t') {
            pending_space_ = true;
            ++c.i;
            return;
        }
        if (ch == '%') {
            c.i = c.line.size();
            return;
        }
        if (ch == '\\' || ch == '`' || ch == 'y' || ch == ')') {
            ++c.i;
            return;
        }
        if (kDecorationChars.find(ch) != std::string_view::npos) {
            ++c.i;
            return;
        }
        switch (ch) {
            case '|': bar(c); return;
            case ':': unsupported(c, c.line.substr(c.i, 2), "repeat");
            case '[': open_bracket(c); return;
            case ']': unsupported(c, "]", "unmatched bracket");
            case '"': skip_delimited(c, '"', "annotation"); return;
            case '!': skip_delimited(c, '!', "decoration"); return;
            case '+': skip_delimited(c, '+', "decoration"); return;
            case '{': skip_delimited(c, '}', "grace notes"); return;
            case '(': paren(c); return;
            case '-': tie(c); return;
            case '>':
            case '<': unsupported(c, std::string_view(&c.line[c.i], 1), "broken rhythm");
            case 'z': rest(c); return;
            case 'Z': measure_rest(c); return;
            default: break;
        }
        if (auto head = parse_note_head(c)) {
            Event e;
            e.kind = EventKind::note;
            e.notes.push_back(*head);
            e.duration = parse_length(c);
            push(c, std::move(e));
            return;
        }
        unsupported(c, std::string_view(&c.line[c.i], 1), "unsupported token");
    }

    void bar(Cursor& c) {
        const std::size_t start = c.i;
        ++c.i;
        const char next = c.peek();
        if (next == ':') unsupported(c, c.line.substr(start, 2), "repeat");
        if (std::isdigit(static_cast<unsigned char>(next))) unsupported(c, c.line.substr(start, 2), "ending");
        if (next == '|' || next == ']') ++c.i;
        if (c.peek() == ':') unsupported(c, c.line.substr(start, c.i - start + 1), "repeat");
        if (triplet_remaining_ > 0) unsupported(c, "(3", "triplet across bar line");
        close_measure();
    }

    void open_bracket(Cursor& c) {
        const char next = c.peek(1);
        if (next == '|') {
            c.i += 2;
            if (c.peek() == ':') unsupported(c, "[|:", "repeat");
            if (triplet_remaining_ > 0) unsupported(c, "(3", "triplet across bar line");
            close_measure();
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(next))) unsupported(c, c.line.substr(c.i, 2), "ending");
        if (std::isalpha(static_cast<unsigned char>(next)) && c.peek(2) == ':') {
            const auto end = c.line.find(']', c.i);
            unsupported(c, c.line.substr(c.i, end == std::string_view::npos ? 3 : end - c.i + 1), "inline field");
        }
        chord(c);
    }

    void chord(Cursor& c) {
        const std::size_t start = c.i;
        ++c.i;  // '['
        std::vector<WrittenNote> notes;
        std::optional<Duration> inner;
        bool tied = false;
        while (true) {
            if (c.done()) unsupported(c, c.line.substr(start), "unterminated chord");
            const char ch = c.peek();
            if (ch == ']') {
                ++c.i;
                break;
            }
            if (ch == '!' || ch == '+') {
                skip_delimited(c, ch, "decoration");
                continue;
            }
            if (ch == '-') {
                tied = true;
                ++c.i;
                continue;
            }
            if (ch == ' ' || kDecorationChars.find(ch) != std::string_view::npos) {
                ++c.i;
                continue;
            }
            auto head = parse_note_head(c);
            if (!head) unsupported(c, std::string_view(&c.line[c.i], 1), "unsupported token in chord");
            const Duration len = parse_length(c);
            if (inner && *inner != len) unsupported(c, c.line.substr(start, c.i - start), "unequal chord note lengths");
            inner = len;
            if (!options_.allow_duplicate_chord_notes && std::find(notes.begin(), notes.end(), *head) != notes.end()) {
                unsupported(c, c.line.substr(start, c.i - start), "duplicate chord note");
            }
            notes.push_back(*head);
        }
        if (notes.empty()) unsupported(c, c.line.substr(start, c.i - start), "empty chord");
        Event e;
        e.kind = notes.size() == 1 ? EventKind::note : EventKind::multinote;
        e.notes = std::move(notes);
        e.duration = *inner * parse_length(c);
        e.tie = tied;
        push(c, std::move(e));
    }

    void paren(Cursor& c) {
        const char next = c.peek(1);
        if (!std::isdigit(static_cast<unsigned char>(next))) {
            ++c.i;  // slur
            return;
        }
        if (next != '3' || c.peek(2) == ':' || std::isdigit(static_cast<unsigned char>(c.peek(2)))) {
            unsupported(c, c.line.substr(c.i, 3), "tuplet");
        }
        if (triplet_remaining_ > 0) unsupported(c, "(3", "nested triplet");
        triplet_remaining_ = 3;
        c.i += 2;
    }

    void tie(Cursor& c) {
        if (current_.events.empty()) unsupported(c, "-", "tie without note");
        current_.events.back().tie = true;
        ++c.i;
    }

    void rest(Cursor& c) {
        ++c.i;
        Event e;
        e.kind = EventKind::rest;
        e.duration = parse_length(c);
        push(c, std::move(e));
    }

    void measure_rest(Cursor& c) {
        const std::size_t start = c.i;
        ++c.i;
        if (!header_.meter) unsupported(c, "Z", "measure rest without meter");
        const Duration count = parse_length(c);
        if (count != Duration(1)) unsupported(c, c.line.substr(start, c.i - start), "multi-measure rest");
        Event e;
        e.kind = EventKind::rest;
        e.duration = header_.meter->capacity() / header_.unit_length;
        push(c, std::move(e));
    }

    void push(const Cursor&, Event e) {
        if (triplet_remaining_ > 0) {
            e.in_triplet = true;
            e.triplet_start = triplet_remaining_ == 3;
            e.duration *= Duration(2, 3);
            --triplet_remaining_;
        }
        if (!pending_space_ && !current_.events.empty()) current_.events.back().beam_next = true;
        pending_space_ = false;
        current_.events.push_back(std::move(e));
    }

    void close_measure() {
        if (!current_.events.empty()) {
            current_.events.back().beam_next = false;
            measures_.push_back(std::move(current_));
            current_ = Measure{};
        }
        pending_space_ = true;
    }

    const Header& header_;
    const ParseOptions& options_;
    std::vector<Measure> measures_;
    Measure current_;
    bool pending_space_ = true;
    int triplet_remaining_ = 0;
};

}  // namespace

char letter_char(Letter l) { return "CDEFGAB"[static_cast<int>(l)]; }

std::optional<Letter> letter_from_char(char c) {
    switch (std::toupper(static_cast<unsigned char>(c))) {
        case 'C': return Letter::C;
        case 'D': return Letter::D;
        case 'E': return Letter::E;
        case 'F': return Letter::F;
        case 'G': return Letter::G;
        case 'A': return Letter::A;
        case 'B': return Letter::B;
        default: return std::nullopt;
    }
}

int signature_fifths(const Key& key) {
    static constexpr int kLetterFifths[kLetterCount] = {0, 2, 4, -1, 1, 3, 5};  // C D E F G A B
    int fifths = kLetterFifths[static_cast<int>(key.tonic)] + 7 * key.tonic_accidental;
    if (key.mode == Mode::minor) fifths -= 3;
    return fifths;
}

std::string Key::name() const {
    std::string out(1, letter_char(tonic));
    if (tonic_accidental > 0) out.append(static_cast<std::size_t>(tonic_accidental), '#');
    if (tonic_accidental < 0) out.append(static_cast<std::size_t>(-tonic_accidental), 'b');
    if (mode == Mode::minor) out += 'm';
    return out;
}

std::optional<Key> parse_key_name(std::string_view text) {
    text = trim(text);
    if (text.empty() || text[0] < 'A' || text[0] > 'G') return std::nullopt;
    Key key;
    key.tonic = *letter_from_char(text[0]);
    std::size_t i = 1;
    if (i < text.size() && (text[i] == '#' || text[i] == 'b')) {
        key.tonic_accidental = text[i] == '#' ? 1 : -1;
        ++i;
    }
    std::string mode;
    for (; i < text.size(); ++i) {
        if (!std::isspace(static_cast<unsigned char>(text[i]))) {
            mode += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
        }
    }
    if (mode.empty() || mode == "maj" || mode == "major" || mode == "ion" || mode == "ionian") {
        key.mode = Mode::major;
    } else if (mode == "m" || mode == "min" || mode == "minor" || mode == "aeo" || mode == "aeolian") {
        key.mode = Mode::minor;
    } else {
        return std::nullopt;
    }
    return key;
}

ParseError::ParseError(Kind kind, std::string message, std::size_t position, std::string token)
    : Error(std::move(message)), kind_(kind), position_(position), token_(std::move(token)) {}

Tune parse_tune(std::string_view text, const ParseOptions& options) {
    Tune tune;
    tune.raw_source = std::string(text);
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

    struct Line {
        std::string_view text;
        std::size_t offset;
    };
    std::vector<Line> body;
    bool in_header = true;
    bool have_key = false;
    bool have_title = false;

    std::size_t offset = 0;
    while (offset <= text.size()) {
        auto nl = text.find('\n', offset);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(offset, nl - offset);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::size_t line_offset = offset;
        offset = nl + 1;

        if (line.starts_with("%")) continue;
        if (in_header && trim(line).empty()) continue;
        if (!is_field_line(line)) {
            in_header = false;
            body.push_back({line, line_offset});
            continue;
        }
        const char field = line[0];
        const std::string_view value = trim(line.substr(2));
        const auto malformed = [&](std::string_view why) {
            throw ParseError(ParseError::Kind::malformed_header, std::string(why) + ": " + std::string(line),
                             line_offset, std::string(line));
        };
        if (!in_header) {
            if (field == 'w' || field == 'W') continue;
            throw ParseError(ParseError::Kind::unsupported_token, "field inside tune body: " + std::string(line),
                             line_offset, std::string(line));
        }
        if (kDroppedFields.find(field) != std::string_view::npos) continue;
        switch (field) {
            case 'X': {
                auto n = parse_int(value);
                if (!n || *n < 0 || *n > INT32_MAX) malformed("bad reference number");
                tune.header.reference_number = static_cast<int>(*n);
                break;
            }
            case 'T':
                if (!have_title) tune.header.title = std::string(value);
                have_title = true;
                break;
            case 'L': {
                auto l = parse_unit_length(value);
                if (!l) malformed("unsupported unit note length");
                tune.header.unit_length = *l;
                break;
            }
            case 'M': {
                bool absent = false;
                auto m = parse_meter_value(value, absent);
                if (!m && !absent) malformed("unsupported meter");
                tune.header.meter = m;
                break;
            }
            case 'Q':
                tune.header.tempo = std::string(value);
                break;
            case 'K': {
                auto k = parse_key_field(value);
                if (!k) malformed("unsupported key");
                tune.header.key = *k;
                have_key = true;
                break;
            }
            default: malformed("unsupported header field");
        }
    }
    if (!have_key) {
        throw ParseError(ParseError::Kind::malformed_header, "missing K: header", 0, "K:");
    }

    BodyParser parser(tune.header, options);
    for (const auto& line : body) parser.feed_line(line.text, line.offset);
    tune.measures = parser.finish(text.size());
    return tune;
}

std::string length_suffix(const Duration& d) {
    if (d == Duration(1)) return {};
    if (d.is_integer()) return std::to_string(d.num());
    if (d.num() == 1) return d.den() == 2 ? "/" : "/" + std::to_string(d.den());
    return std::to_string(d.num()) + "/" + std::to_string(d.den());
}

std::string serialize_note(const WrittenNote& note) {
    std::string out;
    if (note.accidental) {
        switch (*note.accidental) {
            case 2: out = "^^"; break;
            case 1: out = "^"; break;
            case 0: out = "="; break;
            case -1: out = "_"; break;
            case -2: out = "__"; break;
            default: break;
        }
    }
    const char upper = letter_char(note.letter);
    if (note.octave >= 1) {
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(upper)));
        out.append(static_cast<std::size_t>(note.octave - 1), '\'');
    } else {
        out += upper;
        out.append(static_cast<std::size_t>(-note.octave), ',');
    }
    return out;
}

std::string serialize_event(const Event& event) {
    std::string out;
    if (event.triplet_start) out += "(3";
    const Duration written = event.in_triplet ? event.duration * Duration(3, 2) : event.duration;
    switch (event.kind) {
        case EventKind::rest: out += 'z'; break;
        case EventKind::note: out += serialize_note(event.notes.front()); break;
        case EventKind::multinote:
            out += '[';
            for (const auto& n : event.notes) out += serialize_note(n);
            out += ']';
            break;
    }
    out += length_suffix(written);
    if (event.tie) out += '-';
    return out;
}

std::string serialize_events(const std::vector<Event>& events) {
    std::string out;
    for (std::size_t i = 0; i < events.size(); ++i) {
        out += serialize_event(events[i]);
        if (i + 1 < events.size() && !events[i].beam_next) out += ' ';
    }
    return out;
}

std::string serialize_header(const Header& h) {
    std::string out;
    const auto line = [&out](char field, const std::string& value) {
        if (!out.empty()) out += '\n';
        out += field;
        out += ':';
        out += value;
    };
    if (h.reference_number) line('X', std::to_string(*h.reference_number));
    if (h.title) line('T', *h.title);
    line('L', h.unit_length.is_integer() ? h.unit_length.str() + "/1" : h.unit_length.str());
    if (h.tempo) line('Q', *h.tempo);
    if (h.meter) line('M', h.meter->str());
    line('K', h.key.name());
    return out;
}

std::string serialize(const Tune& tune) {
    std::string out = serialize_header(tune.header);
    out += "\n|";
    for (const auto& m : tune.measures) {
        out += ' ';
        out += serialize_events(m.events);
        out += " |";
    }
    return out;
}

std::string serialize(const EventSequence& seq) {
    return serialize_header(seq.header) + "\n" + serialize_events(seq.events);
}

EventSequence strip_bars(const Tune& tune) {
    if (tune.measures.size() < 2) throw TooShortError("strip_bars needs at least 2 measures");
    EventSequence seq{tune.header, {}};
    for (const auto& m : tune.measures) {
        for (const auto& e : m.events) seq.events.push_back(e);
        seq.events.back().beam_next = false;
    }
    return seq;
}

Tune bar_events(const Header& header, const std::vector<Event>& events, const std::vector<std::size_t>& cuts) {
    Tune tune;
    tune.header = header;
    std::size_t begin = 0;
    auto emit = [&](std::size_t end) {
        Measure m;
        m.events.assign(events.begin() + static_cast<std::ptrdiff_t>(begin),
                        events.begin() + static_cast<std::ptrdiff_t>(end));
        if (!m.events.empty()) {
            m.events.back().beam_next = false;
            tune.measures.push_back(std::move(m));
        }
        begin = end;
    };
    for (std::size_t cut : cuts) emit(cut);
    emit(events.size());
    return tune;
}

std::vector<std::size_t> bar_positions(const Tune& tune) {
    std::vector<std::size_t> cuts;
    std::size_t index = 0;
    for (std::size_t i = 0; i < tune.measures.size(); ++i) {
        if (i > 0) cuts.push_back(index);
        index += tune.measures[i].events.size();
    }
    return cuts;
}

Duration total_duration(const std::vector<Event>& events) {
    Duration sum(0);
    for (const auto& e : events) sum += e.duration;
    return sum;
}

}  // namespace musiqa::abc
