#include "musiqa/synth.hpp"

#include <fstream>
#include <vector>

#include "musiqa/abc.hpp"
#include "musiqa/error.hpp"
#include "musiqa/rng.hpp"
#include "musiqa/theory.hpp"

namespace musiqa::synth {

namespace {

struct MeterChoice {
    abc::Meter meter;
    std::vector<int> unit_denominators;  // admissible L: 1/n
};

const std::vector<MeterChoice>& meters() {
    static const std::vector<MeterChoice> m = {
        {{2, 4}, {8, 16}}, {{3, 4}, {8, 4}}, {{4, 4}, {8, 4, 16}}, {{2, 2}, {8}}, {{6, 8}, {8}},
        {{9, 8}, {8}},     {{12, 8}, {8}},   {{3, 8}, {8, 16}},    {{5, 8}, {8}},
    };
    return m;
}

struct Piece {
    std::string text;
    int units = 0;
    bool short_note = false;
};

std::string length(int units) { return units == 1 ? std::string() : std::to_string(units); }

class TuneBuilder {
public:
    TuneBuilder(Rng& rng, const abc::Key& key, const SynthOptions& opt) : rng_(rng), key_(key), opt_(opt) {
        degree_ = rng_.between(0, 4);
    }

    std::vector<Piece> measure(int capacity) {
        std::vector<Piece> out;
        int remaining = capacity;
        while (remaining > 0) {
            const int roll = rng_.between(0, 99);
            if (roll < opt_.rest_percent) {
                const int u = duration(remaining);
                out.push_back({"z" + length(u), u, false});
                remaining -= u;
            } else if (roll < opt_.rest_percent + opt_.triplet_percent && remaining >= 2) {
                const int k = remaining >= 4 && rng_.chance(1, 3) ? 2 : 1;
                std::string t = "(3";
                for (int i = 0; i < 3; ++i) t += note() + length(k);
                out.push_back({t, 2 * k, false});
                remaining -= 2 * k;
            } else if (roll < opt_.rest_percent + opt_.triplet_percent + opt_.chord_percent) {
                const int u = duration(remaining);
                out.push_back({chord() + length(u), u, false});
                remaining -= u;
            } else if (roll < 95 || remaining < 2) {
                const int u = duration(remaining);
                std::string n = note();
                if (u < remaining && rng_.chance(1, 40)) {
                    // tie into a repeat of the same pitch
                    out.push_back({n + length(u) + "-", u, u == 1});
                    remaining -= u;
                    const int v = duration(remaining);
                    out.push_back({n + length(v), v, v == 1});
                    remaining -= v;
                    continue;
                }
                out.push_back({n + length(u), u, u == 1});
                remaining -= u;
            } else {
                // two half-length notes sharing one unit
                out.push_back({note() + "/" + note() + "/", 1, true});
                remaining -= 1;
            }
        }
        return out;
    }

private:
    int duration(int remaining) {
        static constexpr int kChoices[] = {1, 2, 3, 4, 6, 8};
        static constexpr int kWeights[] = {34, 30, 8, 16, 6, 6};
        int total = 0;
        for (std::size_t i = 0; i < 6; ++i) {
            if (kChoices[i] <= remaining) total += kWeights[i];
        }
        int r = rng_.between(0, total - 1);
        for (std::size_t i = 0; i < 6; ++i) {
            if (kChoices[i] > remaining) continue;
            if (r < kWeights[i]) return kChoices[i];
            r -= kWeights[i];
        }
        return 1;
    }

    abc::WrittenNote at_degree(int degree) const {
        const int step = static_cast<int>(key_.tonic) + degree;
        const int octave = step >= 0 ? step / 7 : -((-step + 6) / 7);
        return {static_cast<abc::Letter>(step - 7 * octave), std::nullopt, octave};
    }

    void walk() {
        degree_ += rng_.between(-2, 2);
        if (degree_ < -3) degree_ = -3 + rng_.between(0, 2);
        if (degree_ > 10) degree_ = 10 - rng_.between(0, 2);
    }

    std::string note() {
        walk();
        abc::WrittenNote w = at_degree(degree_);
        if (rng_.between(0, 99) < opt_.chromatic_percent) {
            const auto sig = theory::key_signature(key_);
            const auto it = sig.find(w.letter);
            const int base = it == sig.end() ? 0 : it->second;
            const int alt = base + (rng_.chance(1, 2) ? 1 : -1);
            w.accidental = alt < -1 ? base + 1 : (alt > 1 ? base - 1 : alt);
        }
        return abc::serialize_note(w);
    }

    std::string chord() {
        walk();
        std::string out = "[";
        for (int i = 0; i < 3; ++i) out += abc::serialize_note(at_degree(degree_ + 2 * i));
        return out + "]";
    }

    Rng& rng_;
    abc::Key key_;
    SynthOptions opt_;
    int degree_ = 0;
};

std::string join_measure(const std::vector<Piece>& pieces, int beat) {
    std::string out;
    int pos = 0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        out += pieces[i].text;
        const int next = pos + pieces[i].units;
        if (i + 1 < pieces.size()) {
            const bool beam = pieces[i].short_note && pieces[i + 1].short_note && pos / beat == next / beat;
            if (!beam) out += ' ';
        }
        pos = next;
    }
    return out;
}

}  // namespace

std::string synth_tune(std::uint64_t seed, int reference_number, const SynthOptions& opt) {
    Rng rng(seed);
    const auto& keys = theory::supported_keys();
    const abc::Key key = keys[static_cast<std::size_t>(rng.below(keys.size()))];
    const MeterChoice& mc = meters()[static_cast<std::size_t>(rng.below(meters().size()))];
    const int unit_den = mc.unit_denominators[static_cast<std::size_t>(rng.below(mc.unit_denominators.size()))];
    const Duration capacity_r = mc.meter.capacity() / Duration(1, unit_den);
    if (!capacity_r.is_integer()) throw Error("synth meter/unit mismatch");
    const int capacity = static_cast<int>(capacity_r.num());
    const bool compound = mc.meter.beat_unit == 8 && mc.meter.beats % 3 == 0 && mc.meter.beats > 3;
    const Duration beat_r = (compound ? Duration(3, 8) : Duration(1, mc.meter.beat_unit)) / Duration(1, unit_den);
    const int beat = beat_r.is_integer() && beat_r.num() > 0 ? static_cast<int>(beat_r.num()) : 1;

    std::string out = "X:" + std::to_string(reference_number) + "\n";
    out += "T:Synthetic tune " + std::to_string(reference_number) + "\n";
    out += "M:" + mc.meter.str() + "\n";
    out += "L:1/" + std::to_string(unit_den) + "\n";
    if (rng.chance(1, 3)) out += "Q:1/4=" + std::to_string(rng.between(60, 160)) + "\n";
    out += "K:" + key.name() + "\n";

    TuneBuilder builder(rng, key, opt);
    const int count = rng.between(opt.min_measures, opt.max_measures);
    const bool pickup = capacity > 1 && rng.between(0, 99) < opt.pickup_percent;
    const int pickup_len = pickup ? rng.between(1, capacity - 1) : 0;
    for (int m = 0; m < count; ++m) {
        int cap = capacity;
        if (pickup && m == 0) cap = pickup_len;
        if (pickup && m + 1 == count) cap = capacity - pickup_len;
        out += join_measure(builder.measure(cap), beat);
        if (m + 1 == count) {
            out += " |]\n";
        } else if (m % 4 == 3) {
            out += " |\n";
        } else {
            out += " | ";
        }
    }
    return out;
}

int write_synth_corpus(const std::filesystem::path& dir, std::uint64_t seed, int count, int per_file,
                       const SynthOptions& opt) {
    if (count < 0 || per_file <= 0) throw Error("synth corpus needs a positive file size");
    std::filesystem::create_directories(dir);
    int files = 0;
    for (int start = 0; start < count; start += per_file) {
        char name[32];
        std::snprintf(name, sizeof name, "synth-%04d.abc", files);
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw Error("cannot write " + (dir / name).string());
        for (int i = start; i < std::min(count, start + per_file); ++i) {
            if (i > start) f << "\n";
            f << synth_tune(derive_seed(seed, static_cast<std::uint64_t>(i)), i + 1, opt);
        }
        ++files;
    }
    return files;
}

}  // namespace musiqa::synth
