#ifndef TIMBRE_FEATURES_HPP
#define TIMBRE_FEATURES_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "timbre/audio.hpp"

namespace timbre {

/// Rows are frames.
using FeatureMatrix = std::vector<std::vector<double>>;

struct StftConfig {
    std::size_t frame = 2048;
    std::size_t hop = 1024;
};

/// Frames start at sample 0 and never run past the end, except that a
/// signal shorter than one frame yields a single zero-padded frame.
std::size_t stft_frame_count(std::size_t n_samples, const StftConfig& cfg);

/// Symmetric Hann window; time reversal of a frame leaves |X| unchanged.
std::vector<double> hann_symmetric(std::size_t n);

/// |X|^2 per frame, frame/2 + 1 bins each.
FeatureMatrix power_spectra(const AudioBuffer& audio, const StftConfig& cfg = {});

double hz_to_mel(double hz); // HTK: 2595 log10(1 + f/700)
double mel_to_hz(double mel);

/// Triangular filters with unit peak, centers equally spaced on the mel
/// scale between fmin and fmax.
class MelFilterbank {
public:
    MelFilterbank(std::size_t n_bands, std::size_t n_fft, double sample_rate, double fmin = 0.0,
                  double fmax = -1.0);

    [[nodiscard]] std::size_t bands() const { return weights_.size(); }
    [[nodiscard]] const FeatureMatrix& weights() const { return weights_; }
    [[nodiscard]] std::vector<double> apply(std::span<const double> power) const;

private:
    FeatureMatrix weights_;
};

/// Orthonormal DCT-II, row j is quefrency j.
FeatureMatrix dct_matrix(std::size_t n);

inline constexpr std::size_t kMelBands = 40;
inline constexpr double kLogFloor = 1e-10;

/// power -> 40 mel bands -> ln(. + 1e-10) -> DCT-II, keeping quefrencies 1..n_keep.
FeatureMatrix mfcc(const AudioBuffer& audio, std::size_t n_keep, const StftConfig& cfg = {});

/// Regression deltas over +-width frames with edge replication:
/// d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2).
FeatureMatrix deltas(const FeatureMatrix& m, std::size_t width = 2);

struct Descriptors {
    double centroid = 0.0;  // Hz
    double bandwidth = 0.0; // Hz
    double skewness = 0.0;
    double rolloff = 0.0; // Hz, 85 % of power
    double zcr = 0.0;     // crossings per second
};

inline constexpr double kRolloffFraction = 0.85;

/// Moments of the normalized magnitude spectrum per frame. A silent frame
/// reports all zeros.
std::vector<Descriptors> spectral_descriptors(const AudioBuffer& audio, const StftConfig& cfg = {});

inline constexpr std::size_t kSilenceFrame = 1024;

/// Non-overlapping frames (the last one may be partial). A frame is silent
/// when its RMS in dB is below the loudest frame's RMS plus threshold_db.
/// Every frame is silent if the signal is all zeros.
std::vector<bool> detect_silence(const AudioBuffer& audio, double threshold_db = -60.0,
                                 std::size_t frame = kSilenceFrame);

} // namespace timbre

#endif
