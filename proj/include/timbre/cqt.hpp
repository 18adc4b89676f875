#ifndef TIMBRE_CQT_HPP
#define TIMBRE_CQT_HPP

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "timbre/audio.hpp"
#include "timbre/fft.hpp"
#include "timbre/tensor.hpp"

namespace timbre {

inline constexpr std::size_t kExcerptFrames = 128;
inline constexpr std::size_t kExcerptSamples = 132300; // 3 s at 44.1 kHz

struct CqtConfig {
    double fmin = 55.0;
    std::size_t n_bins = 96;
    std::size_t bins_per_octave = 12;
    std::size_t hop = 1024;
    double sample_rate = kSampleRate;
    /// Spectral kernel entries below this fraction of the kernel peak are dropped.
    double sparsity = 1e-3;
};

/// values is frames x bins. Holds magnitudes out of the transform and
/// weighted dB after `perceptual_weighting`.
struct Spectrogram {
    Tensor values;
    std::vector<double> bin_freqs;
    double hop_seconds = 0.0;

    [[nodiscard]] std::size_t frames() const { return values.dim(0); }
    [[nodiscard]] std::size_t bins() const { return values.dim(1); }
};

/// 1 / (2^(1/B) - 1).
double cqt_quality_factor(std::size_t bins_per_octave);
std::vector<double> cqt_frequencies(const CqtConfig& cfg);
/// ceil(Q_f * sr / f_k).
std::size_t cqt_kernel_length(const CqtConfig& cfg, std::size_t bin);

/// Constant-Q magnitude transform.
///
/// Frame i is centered on sample i*hop; the signal is zero outside its
/// support, so a signal of n samples has 1 + n/hop frames. Bin k correlates
/// the N_k = cqt_kernel_length(k) samples starting at i*hop - floor(N_k/2)
/// with w[n] e^{2 pi i f_k n / sr}, w the periodic Hann window of length N_k,
/// scaled by 2 / sum(w) so a unit-amplitude sinusoid at f_k has magnitude ~1.
/// The correlation is evaluated in the frequency domain with sparse kernels.
class CqtTransform {
public:
    explicit CqtTransform(CqtConfig cfg = {});

    [[nodiscard]] const CqtConfig& config() const { return cfg_; }
    [[nodiscard]] std::size_t fft_size() const { return fft_.size(); }
    [[nodiscard]] std::size_t frame_count(std::size_t n_samples) const { return 1 + n_samples / cfg_.hop; }
    [[nodiscard]] std::size_t nonzeros() const;

    /// Every frame of the signal. Throws DimensionError when the signal is
    /// shorter than the longest kernel.
    [[nodiscard]] Spectrogram magnitude(const AudioBuffer& audio) const;

private:
    struct SparseKernel {
        std::vector<std::uint32_t> index;
        std::vector<std::complex<double>> coef;
    };
    CqtConfig cfg_;
    RealFft fft_;
    std::vector<SparseKernel> kernels_;
    std::vector<double> freqs_;
};

/// Shared transform with the default configuration.
const CqtTransform& default_cqt();

/// All frames, default configuration.
Spectrogram cqt_frames(const AudioBuffer& audio);

/// Exactly kExcerptFrames frames, center-cropped or zero-padded.
Spectrogram cqt(const AudioBuffer& audio);

/// Frames [start, start + count); positions outside the source are zero.
Spectrogram crop_frames(const Spectrogram& s, std::ptrdiff_t start, std::size_t count);

/// Standard A-weighting curve in dB, normalized to 0 dB at 1 kHz.
double a_weighting_db(double freq_hz);

/// 10 log10(mag^2 * A_lin(f) + eps), clipped to [max - range_db, max].
Spectrogram perceptual_weighting(const Spectrogram& mag, double range_db = 80.0, double eps = 1e-10);

} // namespace timbre

#endif
