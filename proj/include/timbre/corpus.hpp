#ifndef TIMBRE_CORPUS_HPP
#define TIMBRE_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "timbre/dataset.hpp"
#include "timbre/distances.hpp"

namespace timbre::training {

/// Synthetic single-note corpus: every preset instrument at every pitch and
/// nuance, one WAV file each.
struct CorpusConfig {
    std::size_t instruments = 8;
    std::size_t pitches = 32;             // semitones upward from base_hz
    double base_hz = 110.0;
    std::vector<double> nuances_db{-20.0, -10.0, 0.0};
    double duration = 4.0;                // seconds
    std::size_t test_every = 4;           // pitch index % test_every == test_every - 1 goes to test
    std::uint64_t seed = 0;
    std::size_t threads = 0;
};

/// Writes <out>/<instrument>/<instrument>_p<pitch>_n<nuance>.wav (float32)
/// and <out>/manifest.csv, and returns the manifest. The instrument index is
/// the class label. The same config always yields byte-identical files.
Manifest generate_corpus(const std::filesystem::path& out, const CorpusConfig& cfg);

/// One point per note: the 12 MFCCs averaged over the frames that are not
/// entirely silent (all frames when every one is).
std::vector<double> note_mfcc(const AudioBuffer& audio, double silence_db = -60.0);

struct MfccStudy {
    std::vector<DistanceSummary> rows; // groupings instrument, instrument+pitch, instrument+nuance
    std::vector<std::string> warnings;
    /// Per instrument: median distance over all its notes divided by the
    /// median over its same-pitch pairs.
    std::map<std::string, double> pitch_ratio;
};

/// Every manifest entry of both splits. Throws DatasetError when an entry
/// lacks instrument, pitch or nuance.
MfccStudy mfcc_distance_study(const Manifest& manifest, double silence_db = -60.0, std::size_t threads = 0);

} // namespace timbre::training

#endif
