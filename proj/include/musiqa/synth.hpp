#pragma once

// Synthetic ABC tunes for tests, demos and smoke runs when no real corpus
// is at hand. Output stays inside the accepted ABC subset.

#include <cstdint>
#include <filesystem>
#include <string>

namespace musiqa::synth {

struct SynthOptions {
    int min_measures = 8;
    int max_measures = 16;
    int chromatic_percent = 4;  // chance per note of an explicit alteration
    int chord_percent = 4;
    int rest_percent = 5;
    int triplet_percent = 4;
    int pickup_percent = 15;
};

// One tune with X:, T:, M:, L:, optional Q:, K: headers.
std::string synth_tune(std::uint64_t seed, int reference_number, const SynthOptions& opt = {});

// Writes `count` tunes into `dir`, `per_file` tunes to a file
// (synth-0000.abc, ...). Returns the number of files written.
int write_synth_corpus(const std::filesystem::path& dir, std::uint64_t seed, int count, int per_file = 50,
                       const SynthOptions& opt = {});

}  // namespace musiqa::synth
