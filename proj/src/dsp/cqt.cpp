#include <algorithm>
#include <cmath>
#include <numbers>

#include "timbre/cqt.hpp"
#include "timbre/errors.hpp"

namespace timbre {

double cqt_quality_factor(std::size_t bins_per_octave)
{
    return 1.0 / (std::exp2(1.0 / static_cast<double>(bins_per_octave)) - 1.0);
}

std::vector<double> cqt_frequencies(const CqtConfig& cfg)
{
    std::vector<double> f(cfg.n_bins);
    for (std::size_t k = 0; k < cfg.n_bins; ++k) {
        f[k] = cfg.fmin * std::exp2(static_cast<double>(k) / static_cast<double>(cfg.bins_per_octave));
    }
    return f;
}

std::size_t cqt_kernel_length(const CqtConfig& cfg, std::size_t bin)
{
    const double f = cfg.fmin * std::exp2(static_cast<double>(bin) / static_cast<double>(cfg.bins_per_octave));
    return static_cast<std::size_t>(std::ceil(cqt_quality_factor(cfg.bins_per_octave) * cfg.sample_rate / f));
}

namespace {

std::size_t next_pow2(std::size_t n)
{
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

CqtConfig validated(CqtConfig cfg)
{
    if (!(cfg.fmin > 0.0) || cfg.n_bins == 0 || cfg.bins_per_octave == 0 || cfg.hop == 0 ||
        !(cfg.sample_rate > 0.0)) {
        throw ParameterError("CqtConfig: all fields must be positive");
    }
    const double top = cfg.fmin * std::exp2(static_cast<double>(cfg.n_bins - 1) / static_cast<double>(cfg.bins_per_octave));
    if (top >= cfg.sample_rate / 2) {
        throw ParameterError("CqtConfig: highest bin is above Nyquist");
    }
    return cfg;
}

} // namespace

CqtTransform::CqtTransform(CqtConfig cfg)
    : cfg_(validated(cfg)), fft_(next_pow2(cqt_kernel_length(cfg_, 0))), freqs_(cqt_frequencies(cfg_))
{
    const std::size_t n = fft_.size();
    std::vector<double> re(n), im(n);
    std::vector<std::complex<double>> spec_re(fft_.bins()), spec_im(fft_.bins());
    kernels_.resize(cfg_.n_bins);
    for (std::size_t k = 0; k < cfg_.n_bins; ++k) {
        const std::size_t len = cqt_kernel_length(cfg_, k);
        const std::size_t start = n / 2 - len / 2;
        std::fill(re.begin(), re.end(), 0.0);
        std::fill(im.begin(), im.end(), 0.0);
        const double scale = 4.0 / static_cast<double>(len); // 2 / sum(periodic Hann)
        for (std::size_t i = 0; i < len; ++i) {
            const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len));
            const double phase = 2.0 * std::numbers::pi * freqs_[k] * static_cast<double>(i) / cfg_.sample_rate;
            re[start + i] = scale * w * std::cos(phase);
            im[start + i] = scale * w * std::sin(phase);
        }
        fft_.forward(re, spec_re);
        fft_.forward(im, spec_im);
        // Complex kernel spectrum on the non-negative frequencies.
        std::vector<std::complex<double>> a(fft_.bins());
        double peak = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            a[j] = spec_re[j] + std::complex<double>(0.0, 1.0) * spec_im[j];
            peak = std::max(peak, std::abs(a[j]));
        }
        auto& sk = kernels_[k];
        for (std::size_t j = 0; j < a.size(); ++j) {
            if (std::abs(a[j]) >= cfg_.sparsity * peak) {
                sk.index.push_back(static_cast<std::uint32_t>(j));
                // Parseval: sum_m b[m] conj(a[m]) = (1/N) sum_j B[j] conj(A[j]).
                sk.coef.push_back(std::conj(a[j]) / static_cast<double>(n));
            }
        }
    }
}

std::size_t CqtTransform::nonzeros() const
{
    std::size_t total = 0;
    for (const auto& k : kernels_) total += k.index.size();
    return total;
}

Spectrogram CqtTransform::magnitude(const AudioBuffer& audio) const
{
    const std::size_t longest = cqt_kernel_length(cfg_, 0);
    if (audio.samples.size() < longest) {
        throw DimensionError("cqt: signal has " + std::to_string(audio.samples.size()) +
                             " samples, shorter than the longest kernel (" + std::to_string(longest) + ")");
    }
    if (std::abs(audio.sample_rate - cfg_.sample_rate) > 1e-9) {
        throw ParameterError("cqt: sample rate does not match the transform");
    }
    const std::size_t n = fft_.size();
    const std::size_t frames = frame_count(audio.samples.size());
    const auto len = static_cast<std::ptrdiff_t>(audio.samples.size());

    Spectrogram s{Tensor({frames, cfg_.n_bins}), freqs_, static_cast<double>(cfg_.hop) / cfg_.sample_rate};
    std::vector<double> block(n);
    std::vector<std::complex<double>> spectrum(fft_.bins());
    for (std::size_t f = 0; f < frames; ++f) {
        const auto origin = static_cast<std::ptrdiff_t>(f * cfg_.hop) - static_cast<std::ptrdiff_t>(n / 2);
        for (std::size_t m = 0; m < n; ++m) {
            const auto at = origin + static_cast<std::ptrdiff_t>(m);
            block[m] = at >= 0 && at < len ? audio.samples[static_cast<std::size_t>(at)] : 0.0;
        }
        fft_.forward(block, spectrum);
        for (std::size_t k = 0; k < cfg_.n_bins; ++k) {
            const auto& sk = kernels_[k];
            std::complex<double> acc = 0.0;
            for (std::size_t e = 0; e < sk.index.size(); ++e) {
                acc += spectrum[sk.index[e]] * sk.coef[e];
            }
            s.values(f, k) = static_cast<float>(std::abs(acc));
        }
    }
    return s;
}

const CqtTransform& default_cqt()
{
    static const CqtTransform t;
    return t;
}

Spectrogram cqt_frames(const AudioBuffer& audio)
{
    return default_cqt().magnitude(audio);
}

Spectrogram cqt(const AudioBuffer& audio)
{
    auto all = cqt_frames(audio);
    const auto excess = static_cast<std::ptrdiff_t>(all.frames()) - static_cast<std::ptrdiff_t>(kExcerptFrames);
    // Floor division keeps the crop/pad centered for either sign.
    const std::ptrdiff_t start = excess >= 0 ? excess / 2 : -((-excess + 1) / 2);
    return crop_frames(all, start, kExcerptFrames);
}

Spectrogram crop_frames(const Spectrogram& s, std::ptrdiff_t start, std::size_t count)
{
    Spectrogram out{Tensor({count, s.bins()}), s.bin_freqs, s.hop_seconds};
    const auto frames = static_cast<std::ptrdiff_t>(s.frames());
    for (std::size_t t = 0; t < count; ++t) {
        const auto src = start + static_cast<std::ptrdiff_t>(t);
        if (src < 0 || src >= frames) continue;
        for (std::size_t k = 0; k < s.bins(); ++k) {
            out.values(t, k) = s.values(static_cast<std::size_t>(src), k);
        }
    }
    return out;
}

double a_weighting_db(double freq_hz)
{
    auto response = [](double f) {
        const double f2 = f * f;
        const double num = 12194.0 * 12194.0 * f2 * f2;
        const double den = (f2 + 20.6 * 20.6) * std::sqrt((f2 + 107.7 * 107.7) * (f2 + 737.9 * 737.9)) *
                           (f2 + 12194.0 * 12194.0);
        return 20.0 * std::log10(num / den);
    };
    static const double ref = response(1000.0);
    return response(freq_hz) - ref;
}

Spectrogram perceptual_weighting(const Spectrogram& mag, double range_db, double eps)
{
    if (!(range_db > 0.0) || !(eps > 0.0)) {
        throw ParameterError("perceptual_weighting: range and eps must be positive");
    }
    Spectrogram out{Tensor(mag.values.shape()), mag.bin_freqs, mag.hop_seconds};
    std::vector<double> gain(mag.bins());
    for (std::size_t k = 0; k < gain.size(); ++k) {
        gain[k] = std::pow(10.0, a_weighting_db(mag.bin_freqs.at(k)) / 10.0);
    }
    double top = -INFINITY;
    std::vector<double> db(mag.values.size());
    for (std::size_t t = 0; t < mag.frames(); ++t) {
        for (std::size_t k = 0; k < mag.bins(); ++k) {
            const double m = mag.values(t, k);
            if (m < 0.0) throw ParameterError("perceptual_weighting: negative magnitude");
            const double v = 10.0 * std::log10(m * m * gain[k] + eps);
            db[t * mag.bins() + k] = v;
            top = std::max(top, v);
        }
    }
    for (std::size_t i = 0; i < db.size(); ++i) {
        out.values[i] = static_cast<float>(std::clamp(db[i], top - range_db, top));
    }
    return out;
}

} // namespace timbre
