#ifndef TIMBRE_DATASET_HPP
#define TIMBRE_DATASET_HPP

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "timbre/cqt.hpp"
#include "timbre/network.hpp"
#include "timbre/tensor.hpp"

namespace timbre::training {

using arch::kClasses;

enum class Split { train, test };

std::string to_string(Split s);

/// One manifest row. Optional columns are empty when absent.
struct ManifestEntry {
    std::filesystem::path path; // resolved against the manifest directory
    std::size_t label = 0;
    Split split = Split::train;
    std::string artist;
    std::string instrument;
    std::optional<int> pitch;
    std::string nuance;
};

/// CSV with header. Required columns: path,label,split. Optional: artist,
/// instrument, pitch, nuance, class_name. Labels are integers in [0, 8);
/// class_name, when given, must agree across rows of the same label.
struct Manifest {
    std::vector<ManifestEntry> entries;
    std::array<std::string, kClasses> class_names;
};

Manifest parse_manifest(std::string_view csv, const std::filesystem::path& base_dir);
/// Parses and validates.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Throws DatasetError when a class has no training file, when the same file
/// is listed in both splits, or when an artist appears in both splits.
void validate_manifest(const Manifest& manifest);

/// Fraction of silence frames (kSilenceFrame samples each) overlapping the
/// sample range [first, first + count).
double silent_fraction(const std::vector<bool>& silent, std::size_t first, std::size_t count);

/// A window is usable when strictly less than half of it is silent.
inline constexpr double kMaxSilentFraction = 0.5;

/// One decoded file: full-length CQT magnitudes plus its silence map.
struct Recording {
    std::size_t entry = 0; // row in the manifest
    std::size_t label = 0;
    std::size_t n_samples = 0;
    Spectrogram magnitude; // every frame; frame i is centered on sample i * hop
    std::vector<bool> silent;
    /// Hop offsets b whose 3 s window [b*hop, b*hop + 3 s) is usable.
    std::vector<std::size_t> valid_starts;
};

struct DatasetConfig {
    double silence_db = -60.0;
    std::size_t threads = 0;
};

/// The recordings of one split, decoded and transformed once up front.
class Dataset {
public:
    Dataset() = default;
    Dataset(const Manifest& manifest, Split split, const DatasetConfig& cfg = {});
    /// Wraps already-computed recordings (used by tests).
    explicit Dataset(std::vector<Recording> recordings);

    [[nodiscard]] const std::vector<Recording>& recordings() const { return recordings_; }
    /// Number of usable training windows of class k across all recordings.
    [[nodiscard]] std::size_t window_count(std::size_t k) const { return cumulative_[k].empty() ? 0 : cumulative_[k].back(); }

    /// A uniformly drawn usable 3 s window of class k, as weighted dB
    /// (128 x 96). The window starting at hop b covers frames b+1 .. b+128,
    /// the frames a standalone 3 s transform of those samples keeps.
    Tensor sample_excerpt(std::size_t k, std::mt19937_64& rng) const;
    /// Weighted dB of the 128 frames following frame `first_frame`.
    Tensor excerpt(const Recording& r, std::size_t first_frame) const;

private:
    void index();

    std::vector<Recording> recordings_;
    std::array<std::vector<std::size_t>, kClasses> members_;    // recording indices per class
    std::array<std::vector<std::size_t>, kClasses> cumulative_; // running window counts
};

/// Builds a Recording from decoded audio; exposed for tests and tools.
Recording analyze_recording(const AudioBuffer& audio, std::size_t label, double silence_db);

struct Batch {
    Tensor inputs; // n x 128 x 96
    std::vector<std::size_t> labels;
};

/// `per_class` windows of every class in shuffled order.
Batch sample_batch(const Dataset& data, std::size_t per_class, std::mt19937_64& rng);

struct Normalization {
    double mean = 0.0;
    double stddev = 1.0;
};

/// Subtracts the single scalar mean and divides by the single scalar standard
/// deviation of every value in `inputs`. Throws NumericError on a constant input.
Normalization normalize_batch(Tensor& inputs);
/// Applies fixed statistics (evaluation).
void apply_normalization(Tensor& inputs, const Normalization& n);

} // namespace timbre::training

#endif
