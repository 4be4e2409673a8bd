#include "doctest.h"

#include <algorithm>
#include <set>

#include "musiqa/theory.hpp"

using namespace musiqa;
using namespace musiqa::theory;

namespace {

Key key(const char* name) { return *abc::parse_key_name(name); }

Pitch P(Letter l, int acc, int oct) { return {l, acc, oct}; }

TheoryError::Kind theory_kind(auto&& fn) {
    try {
        fn();
    } catch (const TheoryError& e) {
        return e.kind();
    }
    FAIL("expected TheoryError");
    return TheoryError::Kind::ambiguous;
}

std::vector<Pitch> all_pitches(int lo_oct, int hi_oct) {
    std::vector<Pitch> out;
    for (int o = lo_oct; o <= hi_oct; ++o)
        for (int l = 0; l < 7; ++l)
            for (int a = -2; a <= 2; ++a) out.push_back({static_cast<Letter>(l), a, o});
    return out;
}

// Interval naming by distance from the major-scale degree above the lower note.
std::optional<Interval> interval_oracle(const Pitch& low, const Pitch& high) {
    static constexpr int kMajorDegree[8] = {0, 2, 4, 5, 7, 9, 11, 12};
    const int steps = (7 * high.octave + static_cast<int>(high.letter)) - (7 * low.octave + static_cast<int>(low.letter));
    const int semis = semitone_index(high) - semitone_index(low);
    if (steps < 0 || steps > 7 || semis < 0) return std::nullopt;
    const int n = steps + 1;
    const int delta = semis - kMajorDegree[n - 1];
    const bool perfect = n == 1 || n == 4 || n == 5 || n == 8;
    if (perfect) {
        if (delta == 0) return Interval{n, Quality::perfect};
        if (delta == 1) return Interval{n, Quality::augmented};
        if (delta == -1 && n != 1) return Interval{n, Quality::diminished};
    } else {
        if (delta == 0) return Interval{n, Quality::major};
        if (delta == -1) return Interval{n, Quality::minor};
        if (delta == 1) return Interval{n, Quality::augmented};
        if (delta == -2) return Interval{n, Quality::diminished};
    }
    return std::nullopt;
}

// Key signatures built by walking the circle: each new sharp key raises the
// leading tone, each new flat key lowers the fourth degree.
std::map<std::string, KeySignature> signature_oracle() {
    std::map<std::string, KeySignature> out;
    struct State {
        int letter;
        int acc;
        KeySignature sig;
    };
    const auto name = [](int letter, int acc) {
        std::string s(1, abc::letter_char(static_cast<Letter>(letter)));
        if (acc > 0) s += '#';
        if (acc < 0) s += 'b';
        return s;
    };
    const auto sig_acc = [](const KeySignature& s, int letter) {
        auto it = s.find(static_cast<Letter>(letter));
        return it == s.end() ? 0 : it->second;
    };
    for (int dir : {1, -1}) {
        State s{0, 0, {}};
        out[name(0, 0)] = s.sig;
        for (int i = 0; i < 7; ++i) {
            State n = s;
            if (dir > 0) {
                n.letter = (s.letter + 4) % 7;
                n.acc = sig_acc(s.sig, n.letter);
                n.sig[static_cast<Letter>((n.letter + 6) % 7)] = 1;
            } else {
                n.letter = (s.letter + 3) % 7;
                n.acc = sig_acc(s.sig, n.letter);
                n.sig[static_cast<Letter>((n.letter + 3) % 7)] = -1;
            }
            s = n;
            out[name(s.letter, s.acc)] = s.sig;
        }
    }
    return out;
}

// Triad by exhaustive stacking over orderings.
std::optional<Triad> triad_oracle(std::vector<PitchClass> pcs) {
    std::sort(pcs.begin(), pcs.end());
    do {
        const int l0 = static_cast<int>(pcs[0].letter);
        if (static_cast<int>(pcs[1].letter) != (l0 + 2) % 7 || static_cast<int>(pcs[2].letter) != (l0 + 4) % 7) continue;
        const int third = ((pcs[1].semitone_class() - pcs[0].semitone_class()) % 12 + 12) % 12;
        const int fifth = ((pcs[2].semitone_class() - pcs[0].semitone_class()) % 12 + 12) % 12;
        if (third == 4 && fifth == 7) return Triad{pcs[0], TriadQuality::major};
        if (third == 3 && fifth == 7) return Triad{pcs[0], TriadQuality::minor};
        if (third == 3 && fifth == 6) return Triad{pcs[0], TriadQuality::diminished};
        if (third == 4 && fifth == 8) return Triad{pcs[0], TriadQuality::augmented};
    } while (std::next_permutation(pcs.begin(), pcs.end()));
    return std::nullopt;
}

}  // namespace

TEST_CASE("key_signature examples") {
    CHECK(key_signature(key("C")).empty());
    CHECK(key_signature(key("C#m")) ==
          KeySignature{{Letter::F, 1}, {Letter::C, 1}, {Letter::G, 1}, {Letter::D, 1}});
    CHECK(key_signature(key("Ebm")) == KeySignature{{Letter::B, -1}, {Letter::E, -1}, {Letter::A, -1},
                                                    {Letter::D, -1}, {Letter::G, -1}, {Letter::C, -1}});
    CHECK(theory_kind([] { key_signature(Key{Letter::G, 1, Mode::major}); }) == TheoryError::Kind::unsupported_key);
}

TEST_CASE("key_signature matches circle-of-fifths oracle for all 30 keys") {
    const auto oracle = signature_oracle();
    REQUIRE(oracle.size() == 15);
    REQUIRE(supported_keys().size() == 30);
    std::set<std::string> names;
    for (const Key& k : supported_keys()) {
        names.insert(k.name());
        Key major = k;
        if (k.mode == Mode::minor) {
            // relative major: up a minor third
            const Pitch up = transpose(P(k.tonic, k.tonic_accidental, 0), Interval{3, Quality::minor}, Direction::up);
            major = Key{up.letter, up.accidental, Mode::major};
        }
        INFO(k.name());
        REQUIRE(oracle.count(major.name()) == 1);
        CHECK(key_signature(k) == oracle.at(major.name()));
    }
    CHECK(names.size() == 30);
}

TEST_CASE("sounding_pitch examples") {
    MeasureAccidentals m;
    CHECK(sounding_pitch({Letter::G, std::nullopt, 0}, key("C#m"), m).accidental == 1);

    MeasureAccidentals m2;
    CHECK(sounding_pitch({Letter::G, 1, 0}, key("C"), m2).accidental == 1);
    CHECK(sounding_pitch({Letter::G, std::nullopt, 0}, key("C"), m2).accidental == 1);  // remembered
    CHECK(sounding_pitch({Letter::G, std::nullopt, 1}, key("C"), m2).accidental == 0);  // other octave
    CHECK(sounding_pitch({Letter::G, 0, 0}, key("C"), m2).accidental == 0);
    CHECK(sounding_pitch({Letter::G, std::nullopt, 0}, key("C"), m2).accidental == 0);

    MeasureAccidentals m3;
    const Pitch g = sounding_pitch({Letter::G, 1, 1}, key("C"), m3);
    CHECK(g == P(Letter::G, 1, 1));
    CHECK(semitone_index(g) == 20);
}

TEST_CASE("spell inverts sounding_pitch") {
    for (const Key& k : supported_keys()) {
        MeasureAccidentals write_state;
        MeasureAccidentals read_state;
        for (const Pitch& p : all_pitches(0, 1)) {
            const abc::WrittenNote w = spell(p, k, write_state);
            CHECK(sounding_pitch(w, k, read_state) == p);
        }
    }
    MeasureAccidentals s;
    CHECK_FALSE(spell(P(Letter::F, 1, 0), key("D"), s).accidental.has_value());
    CHECK(spell(P(Letter::F, 0, 0), key("D"), s).accidental == 0);
}

TEST_CASE("semitone_index") {
    CHECK(semitone_index(P(Letter::C, 0, 0)) == 0);
    CHECK(semitone_index(P(Letter::B, 0, 1)) - semitone_index(P(Letter::B, 0, 0)) == 12);
    CHECK(semitone_index(P(Letter::A, -1, 0)) == 8);
}

TEST_CASE("interval_between examples") {
    CHECK(interval_between(P(Letter::B, 0, 0), P(Letter::B, 0, 1)) == Interval{8, Quality::perfect});
    CHECK(interval_between(P(Letter::E, -1, 0), P(Letter::E, -1, 0)) == Interval{1, Quality::perfect});
    CHECK(interval_between(P(Letter::G, 0, 0), P(Letter::B, 0, 0)) == Interval{3, Quality::major});
    CHECK(interval_between(P(Letter::G, 0, 0), P(Letter::B, 0, 0)).name() == "major third");
    CHECK(theory_kind([] { interval_between(P(Letter::C, 0, 0), P(Letter::D, 0, 1)); }) ==
          TheoryError::Kind::out_of_range);
    CHECK(theory_kind([] { interval_between(P(Letter::C, -2, 0), P(Letter::E, 2, 0)); }) ==
          TheoryError::Kind::non_nameable);
}

TEST_CASE("interval_between agrees with oracle over two octaves") {
    int named = 0;
    for (const Pitch& low : all_pitches(0, 1)) {
        for (const Pitch& high : all_pitches(0, 1)) {
            if (semitone_index(low) > semitone_index(high)) continue;
            const auto expected = interval_oracle(low, high);
            const int steps = high.step() - low.step();
            if (expected) {
                ++named;
                CHECK(interval_between(low, high) == *expected);
            } else if (steps < 0 || steps > 7) {
                CHECK(theory_kind([&] { interval_between(low, high); }) == TheoryError::Kind::out_of_range);
            } else {
                CHECK(theory_kind([&] { interval_between(low, high); }) == TheoryError::Kind::non_nameable);
            }
        }
    }
    CHECK(named > 0);
}

TEST_CASE("interval names") {
    CHECK(nameable_intervals().size() == 27);
    for (const auto& iv : nameable_intervals()) {
        CHECK(parse_interval_name(iv.name()) == iv);
        CHECK(is_perfect_class(iv.number) ==
              (iv.quality == Quality::perfect ||
               ((iv.quality == Quality::augmented || iv.quality == Quality::diminished) &&
                (iv.number == 1 || iv.number == 4 || iv.number == 5 || iv.number == 8))));
    }
    CHECK_FALSE(is_valid(Interval{3, Quality::perfect}));
    CHECK_FALSE(is_valid(Interval{5, Quality::major}));
    CHECK_FALSE(parse_interval_name("perfect third").has_value());
}

TEST_CASE("transpose examples") {
    CHECK(transpose(P(Letter::G, 0, 0), Interval{3, Quality::major}, Direction::up) == P(Letter::B, 0, 0));
    CHECK(transpose(P(Letter::B, 0, 0), Interval{5, Quality::augmented}, Direction::up) == P(Letter::F, 2, 1));
    for (const Pitch& p : all_pitches(-1, 1)) {
        CHECK(transpose(p, Interval{1, Quality::perfect}, Direction::up) == p);
    }
    CHECK(theory_kind([] { transpose(P(Letter::B, 2, 0), Interval{3, Quality::augmented}, Direction::up); }) ==
          TheoryError::Kind::unspellable);
    CHECK(theory_kind([] { transpose(P(Letter::C, 0, 4), Interval{8, Quality::perfect}, Direction::up); }) ==
          TheoryError::Kind::out_of_range);
}

TEST_CASE("transpose agrees with brute-force spelling search and round-trips") {
    const auto candidates = all_pitches(-2, 3);
    for (const Pitch& p : all_pitches(-1, 1)) {
        for (const Interval& iv : nameable_intervals()) {
            // every spelling with the right letter distance and semitone size
            std::vector<Pitch> up;
            for (const Pitch& q : candidates) {
                if (q.step() - p.step() == iv.number - 1 && semitone_index(q) - semitone_index(p) == iv.semitones())
                    up.push_back(q);
            }
            REQUIRE(up.size() <= 1);
            if (up.empty()) {
                CHECK_THROWS_AS(transpose(p, iv, Direction::up), TheoryError);
                continue;
            }
            const Pitch q = transpose(p, iv, Direction::up);
            CHECK(q == up[0]);
            CHECK(interval_between(p, q) == iv);
            CHECK(transpose(q, iv, Direction::down) == p);
        }
    }
}

TEST_CASE("scale_pitches examples") {
    const ScaleSpec ebm{{Letter::E, -1}, ScaleMode::natural_minor, ScaleDirection::ascending};
    const std::vector<Pitch> expected = {P(Letter::E, -1, 0), P(Letter::F, 0, 0),  P(Letter::G, -1, 0),
                                         P(Letter::A, -1, 0), P(Letter::B, -1, 0), P(Letter::C, -1, 1),
                                         P(Letter::D, -1, 1), P(Letter::E, -1, 1)};
    CHECK(scale_pitches(ebm) == expected);
    ScaleSpec down = ebm;
    down.direction = ScaleDirection::descending;
    auto reversed = expected;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(scale_pitches(down) == reversed);

    const auto c = scale_pitches({{Letter::C, 0}, ScaleMode::major, ScaleDirection::ascending});
    REQUIRE(c.size() == 8);
    for (const auto& p : c) CHECK(p.accidental == 0);
    CHECK(c.back() == P(Letter::C, 0, 1));

    CHECK(theory_kind([] { scale_pitches({{Letter::G, 1}, ScaleMode::major, ScaleDirection::ascending}); }) ==
          TheoryError::Kind::unsupported_key);
}

TEST_CASE("scale_pitches: every supported key follows its signature") {
    for (const Key& k : supported_keys()) {
        const ScaleSpec spec{{k.tonic, k.tonic_accidental},
                             k.mode == Mode::major ? ScaleMode::major : ScaleMode::natural_minor,
                             ScaleDirection::ascending};
        INFO(k.name());
        const auto pitches = scale_pitches(spec);
        REQUIRE(pitches.size() == 8);
        const KeySignature sig = key_signature(k);
        for (std::size_t i = 0; i < pitches.size(); ++i) {
            const auto it = sig.find(pitches[i].letter);
            CHECK(pitches[i].accidental == (it == sig.end() ? 0 : it->second));
            if (i > 0) CHECK(pitches[i].step() == pitches[i - 1].step() + 1);
        }
        CHECK(semitone_index(pitches.back()) - semitone_index(pitches.front()) == 12);
        const auto classes = key_scale_classes(k);
        for (std::size_t i = 0; i < 7; ++i) CHECK(classes[i] == pitches[i].pitch_class());

        ScaleSpec down = spec;
        down.direction = ScaleDirection::descending;
        auto rev = pitches;
        std::reverse(rev.begin(), rev.end());
        CHECK(scale_pitches(down) == rev);
    }
}

TEST_CASE("identify_triad examples") {
    CHECK(identify_triad({P(Letter::F, 0, 0), P(Letter::A, -1, 0), P(Letter::C, 0, 1)}) ==
          Triad{{Letter::F, 0}, TriadQuality::minor});

    const abc::Tune t = abc::parse_tune("K:C#m\nL:1/4\n[BdG]");
    const auto sounding = sounding_events(t.measures[0], t.header.key)[0];
    const Triad gsm = identify_triad(sounding);
    CHECK(gsm == Triad{{Letter::G, 1}, TriadQuality::minor});
    CHECK(root_member(sounding, gsm) == 2);

    const Triad caug{{Letter::C, 0}, TriadQuality::augmented};
    CHECK(identify_triad({P(Letter::C, 0, 0), P(Letter::E, 0, 0), P(Letter::G, 1, 0)}) == caug);
    CHECK(identify_triad({P(Letter::E, 0, 0), P(Letter::G, 1, 0), P(Letter::C, 0, 1)}) == caug);
    CHECK(identify_triad({P(Letter::G, 1, 0), P(Letter::C, 0, 1), P(Letter::E, 0, 1)}) == caug);

    CHECK(theory_kind([] { identify_triad({P(Letter::C, 0, 0), P(Letter::D, 0, 0), P(Letter::E, 0, 0)}); }) ==
          TheoryError::Kind::not_a_triad);
    CHECK(theory_kind([] { identify_triad({P(Letter::C, 0, 0), P(Letter::C, 0, 1), P(Letter::E, 0, 0)}); }) ==
          TheoryError::Kind::not_a_triad);
}

TEST_CASE("identify_triad agrees with stacking oracle over all spelled class triples") {
    std::vector<PitchClass> classes;
    for (int l = 0; l < 7; ++l)
        for (int a = -2; a <= 2; ++a) classes.push_back({static_cast<Letter>(l), a});
    int found = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        for (std::size_t j = i + 1; j < classes.size(); ++j) {
            for (std::size_t k = j + 1; k < classes.size(); ++k) {
                const auto expected = triad_oracle({classes[i], classes[j], classes[k]});
                const std::vector<Pitch> pitches = {P(classes[i].letter, classes[i].accidental, 0),
                                                    P(classes[j].letter, classes[j].accidental, 1),
                                                    P(classes[k].letter, classes[k].accidental, 0)};
                if (expected) {
                    ++found;
                    CHECK(identify_triad(pitches) == *expected);
                } else {
                    CHECK_THROWS_AS(identify_triad(pitches), TheoryError);
                }
            }
        }
    }
    // 7 letters x 5 root accidentals x 4 qualities, minus those whose members
    // need a triple accidental
    CHECK(found > 0);
    CHECK(found <= 140);
}

TEST_CASE("identify_triad invariant under permutation, octave shift and doubling") {
    for (int l = 0; l < 7; ++l) {
        for (int a = -1; a <= 1; ++a) {
            for (TriadQuality q : {TriadQuality::major, TriadQuality::minor, TriadQuality::diminished,
                                   TriadQuality::augmented}) {
                const Triad t{{static_cast<Letter>(l), a}, q};
                const auto m = t.members();
                std::vector<Pitch> base = {P(m[0].letter, m[0].accidental, 0), P(m[1].letter, m[1].accidental, 0),
                                           P(m[2].letter, m[2].accidental, 1)};
                std::sort(base.begin(), base.end(), [](const Pitch& x, const Pitch& y) {
                    return std::tie(x.octave, x.letter, x.accidental) < std::tie(y.octave, y.letter, y.accidental);
                });
                do {
                    CHECK(identify_triad(base) == t);
                    auto shifted = base;
                    shifted[0].octave -= 1;
                    shifted.push_back({base[1].letter, base[1].accidental, base[1].octave + 1});
                    CHECK(identify_triad(shifted) == t);
                } while (std::next_permutation(base.begin(), base.end(), [](const Pitch& x, const Pitch& y) {
                    return std::tie(x.octave, x.letter, x.accidental) < std::tie(y.octave, y.letter, y.accidental);
                }));
            }
        }
    }
}

TEST_CASE("complete_triad examples and property") {
    const Triad cmaj{{Letter::C, 0}, TriadQuality::major};
    CHECK(complete_triad(P(Letter::C, 0, 0), P(Letter::E, 0, 0), cmaj).pitch_class() == PitchClass{Letter::G, 0});
    const Triad baug{{Letter::B, 0}, TriadQuality::augmented};
    const Pitch fss = complete_triad(P(Letter::B, 0, 0), P(Letter::D, 1, 1), baug);
    CHECK(fss.pitch_class() == PitchClass{Letter::F, 2});
    CHECK(semitone_index(fss) > semitone_index(P(Letter::B, 0, 0)));
    const Triad fm{{Letter::F, 0}, TriadQuality::minor};
    CHECK(complete_triad(P(Letter::F, 0, 0), P(Letter::C, 0, 1), fm).pitch_class() == PitchClass{Letter::A, -1});

    CHECK(theory_kind([&] { complete_triad(P(Letter::C, 0, 0), P(Letter::D, 0, 0), cmaj); }) ==
          TheoryError::Kind::not_members);
    CHECK(theory_kind([&] { complete_triad(P(Letter::C, 0, 0), P(Letter::C, 0, 1), cmaj); }) ==
          TheoryError::Kind::ambiguous);

    for (const Key& k : supported_keys()) {
        for (TriadQuality q : {TriadQuality::major, TriadQuality::minor, TriadQuality::diminished,
                               TriadQuality::augmented}) {
            const Triad t{{k.tonic, k.tonic_accidental}, q};
            const auto m = t.members();
            for (int skip = 0; skip < 3; ++skip) {
                std::vector<Pitch> given;
                for (int i = 0; i < 3; ++i)
                    if (i != skip) given.push_back(P(m[i].letter, m[i].accidental, 0));
                const Pitch missing = complete_triad(given[0], given[1], t);
                CHECK(missing.pitch_class() == m[skip]);
                given.push_back(missing);
                CHECK(identify_triad(given) == t);
            }
        }
    }
}

TEST_CASE("names") {
    CHECK(pitch_name(P(Letter::G, 1, 0)) == "G#");
    CHECK(pitch_name(P(Letter::D, 1, 1)) == "d#");
    CHECK(pitch_name(P(Letter::E, -1, 0)) == "Eb");
    CHECK(pitch_name(P(Letter::C, 0, 2)) == "c'");
    CHECK(pitch_name(P(Letter::C, 0, -1)) == "C,");
    for (const Pitch& p : all_pitches(-1, 2)) {
        const auto n = parse_pitch_name(pitch_name(p));
        REQUIRE(n.has_value());
        CHECK(n->pitch_class == p.pitch_class());
        CHECK(n->octave == p.octave);
    }
    CHECK_FALSE(parse_pitch_name("H").has_value());
    CHECK_FALSE(parse_pitch_name("C#b").has_value());

    CHECK(chord_symbol({{Letter::F, 0}, TriadQuality::minor}) == "Fm");
    CHECK(chord_symbol({{Letter::E, -1}, TriadQuality::diminished}) == "Ebdim");
    CHECK(chord_symbol({{Letter::B, 0}, TriadQuality::augmented}) == "Baug");
    CHECK(parse_chord_symbol("Bbm") == Triad{{Letter::B, -1}, TriadQuality::minor});
    CHECK(parse_chord_symbol("C#") == Triad{{Letter::C, 1}, TriadQuality::major});
    CHECK_FALSE(parse_chord_symbol("Cmaj7").has_value());
    CHECK(class_name({Letter::F, 2}) == "F##");
}

TEST_CASE("measure_capacity") {
    CHECK(measure_capacity({2, 2}, Duration(1, 8)) == Duration(8));
    CHECK(measure_capacity({3, 4}, Duration(1, 8)) == Duration(6));
    CHECK(measure_capacity({4, 4}, Duration(1, 4)) == Duration(4));
    CHECK(measure_capacity({6, 8}, Duration(1, 16)) == Duration(12));
}

TEST_CASE("validate_measures") {
    const abc::Tune t = abc::parse_tune("L:1/8\nK:C\n| efga fedc | c3 d edcd |");
    const auto r = validate_measures(t, {2, 2});
    CHECK(r.all_full());
    REQUIRE(r.measures.size() == 2);
    CHECK(r.measures[1].duration == Duration(8));

    const auto seven = validate_measures(t, {7, 8});
    for (const auto& m : seven.measures) {
        CHECK_FALSE(m.full);
        CHECK(m.duration > m.capacity);
    }
    CHECK_FALSE(seven.valid_with_pickup());

    CHECK(validate_measures(abc::parse_tune("L:1/8\nK:C\nz8"), {2, 2}).all_full());

    const abc::Tune pickup = abc::parse_tune("L:1/8\nK:C\n| c2 | c8 | d8 | e4 |");
    const auto pr = validate_measures(pickup, {4, 4});
    CHECK_FALSE(pr.all_full());
    CHECK(pr.anacrusis_first);
    CHECK(pr.partial_last);
    CHECK(pr.valid_with_pickup());

    const abc::Tune inner = abc::parse_tune("L:1/8\nK:C\n| c8 | c4 | d8 |");
    CHECK_FALSE(validate_measures(inner, {4, 4}).valid_with_pickup());

    // triplet eighths sum exactly
    const abc::Tune trip = abc::parse_tune("L:1/8\nK:C\n| (3cde f2 g4 |");
    CHECK(validate_measures(trip, {4, 4}).all_full());
}

TEST_CASE("rebar inverts strip_bars on full tunes") {
    const abc::Tune t = abc::parse_tune("L:1/8\nM:3/4\nK:F\n| f4 F2 | g2 gg gg | g4 G2 | a2 ba gf |");
    const auto seq = abc::strip_bars(t);
    const auto cuts = rebar(seq.events, Duration(6));
    REQUIRE(cuts.has_value());
    CHECK(*cuts == abc::bar_positions(t));
    CHECK(abc::bar_events(seq.header, seq.events, *cuts) == t);
    CHECK_FALSE(rebar(seq.events, Duration(5)).has_value());
    CHECK(greedy_barring(seq.events, Duration(5)).size() >= 3);
}

TEST_CASE("infer_keys") {
    const abc::Tune a = abc::parse_tune("L:1/4\nK:C\n^g ^c d B e e ^c ^f d B ^f a a ^g A A");
    const auto ranked = infer_keys(a);
    REQUIRE_FALSE(ranked.empty());
    CHECK(ranked.front().key.name() == "A");
    CHECK(ranked.front().exact);

    const abc::Tune c = abc::parse_tune("L:1/4\nK:C\nC D E F G A B c E D C");
    const auto rc = infer_keys(c);
    CHECK(rc.front().key.name() == "C");
    const auto am = std::find_if(rc.begin(), rc.end(), [](const KeyCandidate& k) { return k.key.name() == "Am"; });
    CHECK(am != rc.end());

    const abc::Tune f = abc::parse_tune("L:1/4\nK:C\nA _B c d c _B A G F");
    CHECK(infer_keys(f).front().key.name() == "F");

    const abc::Tune bad = abc::parse_tune("L:1/4\nK:C\n^C _C ^F _B");
    CHECK_THROWS_AS(infer_keys(bad), NoCandidatesError);
}
