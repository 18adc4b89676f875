#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "timbre/errors.hpp"
#include "timbre/features.hpp"
#include "timbre/fft.hpp"

namespace timbre {

std::size_t stft_frame_count(std::size_t n_samples, const StftConfig& cfg)
{
    if (cfg.frame == 0 || cfg.hop == 0) {
        throw ParameterError("StftConfig: frame and hop must be positive");
    }
    return n_samples <= cfg.frame ? 1 : 1 + (n_samples - cfg.frame) / cfg.hop;
}

std::vector<double> hann_symmetric(std::size_t n)
{
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
    }
    return w;
}

namespace {

// Calls fn(frame_index, windowed spectrum, raw frame samples) for every frame.
template <typename Fn>
void for_each_frame(const AudioBuffer& audio, const StftConfig& cfg, Fn&& fn)
{
    const std::size_t frames = stft_frame_count(audio.samples.size(), cfg);
    const RealFft fft(cfg.frame);
    const auto window = hann_symmetric(cfg.frame);
    std::vector<double> raw(cfg.frame), buf(cfg.frame);
    std::vector<std::complex<double>> spec(fft.bins());
    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t start = f * cfg.hop;
        for (std::size_t i = 0; i < cfg.frame; ++i) {
            raw[i] = start + i < audio.samples.size() ? audio.samples[start + i] : 0.0;
            buf[i] = raw[i] * window[i];
        }
        fft.forward(buf, spec);
        fn(f, spec, raw);
    }
}

} // namespace

FeatureMatrix power_spectra(const AudioBuffer& audio, const StftConfig& cfg)
{
    FeatureMatrix out(stft_frame_count(audio.samples.size(), cfg));
    for_each_frame(audio, cfg, [&](std::size_t f, const auto& spec, const auto&) {
        out[f].resize(spec.size());
        for (std::size_t j = 0; j < spec.size(); ++j) out[f][j] = std::norm(spec[j]);
    });
    return out;
}

double hz_to_mel(double hz)
{
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel)
{
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MelFilterbank::MelFilterbank(std::size_t n_bands, std::size_t n_fft, double sample_rate, double fmin,
                             double fmax)
{
    if (fmax < 0.0) fmax = sample_rate / 2;
    if (n_bands == 0 || n_fft < 2 || !(fmax > fmin) || fmin < 0.0 || fmax > sample_rate / 2) {
        throw ParameterError("MelFilterbank: invalid band layout");
    }
    const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
    std::vector<double> edges(n_bands + 2);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bands + 1));
    }
    const std::size_t bins = n_fft / 2 + 1;
    weights_.assign(n_bands, std::vector<double>(bins, 0.0));
    for (std::size_t b = 0; b < n_bands; ++b) {
        const double left = edges[b], center = edges[b + 1], right = edges[b + 2];
        for (std::size_t j = 0; j < bins; ++j) {
            const double f = static_cast<double>(j) * sample_rate / static_cast<double>(n_fft);
            double w = 0.0;
            if (f > left && f <= center) {
                w = (f - left) / (center - left);
            } else if (f > center && f < right) {
                w = (right - f) / (right - center);
            }
            weights_[b][j] = w;
        }
    }
}

std::vector<double> MelFilterbank::apply(std::span<const double> power) const
{
    if (power.size() != weights_.front().size()) {
        throw DimensionError("MelFilterbank: spectrum has " + std::to_string(power.size()) + " bins, expected " +
                             std::to_string(weights_.front().size()));
    }
    std::vector<double> out(weights_.size(), 0.0);
    for (std::size_t b = 0; b < weights_.size(); ++b) {
        for (std::size_t j = 0; j < power.size(); ++j) out[b] += weights_[b][j] * power[j];
    }
    return out;
}

FeatureMatrix dct_matrix(std::size_t n)
{
    FeatureMatrix m(n, std::vector<double>(n));
    for (std::size_t j = 0; j < n; ++j) {
        const double scale = std::sqrt((j == 0 ? 1.0 : 2.0) / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            m[j][i] = scale * std::cos(std::numbers::pi * static_cast<double>(j) * (2.0 * static_cast<double>(i) + 1.0) /
                                       (2.0 * static_cast<double>(n)));
        }
    }
    return m;
}

FeatureMatrix mfcc(const AudioBuffer& audio, std::size_t n_keep, const StftConfig& cfg)
{
    if (n_keep == 0 || n_keep >= kMelBands) {
        throw ParameterError("mfcc: n_keep must be in [1, " + std::to_string(kMelBands - 1) + "]");
    }
    const MelFilterbank bank(kMelBands, cfg.frame, audio.sample_rate);
    const auto dct = dct_matrix(kMelBands);
    FeatureMatrix out;
    for (const auto& power : power_spectra(audio, cfg)) {
        auto bands = bank.apply(power);
        for (auto& v : bands) v = std::log(v + kLogFloor);
        std::vector<double> c(n_keep, 0.0);
        for (std::size_t q = 1; q <= n_keep; ++q) {
            for (std::size_t b = 0; b < kMelBands; ++b) c[q - 1] += dct[q][b] * bands[b];
        }
        out.push_back(std::move(c));
    }
    return out;
}

FeatureMatrix deltas(const FeatureMatrix& m, std::size_t width)
{
    if (width == 0) throw ParameterError("deltas: width must be positive");
    if (m.empty()) return {};
    const auto last = static_cast<std::ptrdiff_t>(m.size()) - 1;
    double denom = 0.0;
    for (std::size_t n = 1; n <= width; ++n) denom += static_cast<double>(n * n);
    denom *= 2.0;
    FeatureMatrix out(m.size(), std::vector<double>(m.front().size(), 0.0));
    for (std::ptrdiff_t t = 0; t <= last; ++t) {
        for (std::size_t n = 1; n <= width; ++n) {
            const auto ahead = static_cast<std::size_t>(std::min(last, t + static_cast<std::ptrdiff_t>(n)));
            const auto behind = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, t - static_cast<std::ptrdiff_t>(n)));
            for (std::size_t c = 0; c < out[t].size(); ++c) {
                out[t][c] += static_cast<double>(n) * (m[ahead][c] - m[behind][c]);
            }
        }
        for (auto& v : out[t]) v /= denom;
    }
    return out;
}

std::vector<Descriptors> spectral_descriptors(const AudioBuffer& audio, const StftConfig& cfg)
{
    std::vector<Descriptors> out(stft_frame_count(audio.samples.size(), cfg));
    const double bin_hz = audio.sample_rate / static_cast<double>(cfg.frame);
    for_each_frame(audio, cfg, [&](std::size_t f, const auto& spec, const auto& raw) {
        Descriptors d;
        double mag_sum = 0.0, power_sum = 0.0;
        for (const auto& x : spec) {
            mag_sum += std::abs(x);
            power_sum += std::norm(x);
        }
        if (mag_sum > 0.0) {
            for (std::size_t j = 0; j < spec.size(); ++j) {
                d.centroid += static_cast<double>(j) * bin_hz * std::abs(spec[j]) / mag_sum;
            }
            double m2 = 0.0, m3 = 0.0;
            for (std::size_t j = 0; j < spec.size(); ++j) {
                const double dev = static_cast<double>(j) * bin_hz - d.centroid;
                const double p = std::abs(spec[j]) / mag_sum;
                m2 += dev * dev * p;
                m3 += dev * dev * dev * p;
            }
            d.bandwidth = std::sqrt(m2);
            d.skewness = m2 > 0.0 ? m3 / (m2 * d.bandwidth) : 0.0;
            double cumulative = 0.0;
            for (std::size_t j = 0; j < spec.size(); ++j) {
                cumulative += std::norm(spec[j]);
                if (cumulative >= kRolloffFraction * power_sum) {
                    d.rolloff = static_cast<double>(j) * bin_hz;
                    break;
                }
            }
        }
        std::size_t crossings = 0;
        for (std::size_t i = 1; i < raw.size(); ++i) {
            if ((raw[i - 1] >= 0.0) != (raw[i] >= 0.0)) ++crossings;
        }
        // An all-zero frame has no crossings, so zcr is already 0 there.
        d.zcr = static_cast<double>(crossings) * audio.sample_rate / static_cast<double>(cfg.frame);
        out[f] = d;
    });
    return out;
}

std::vector<bool> detect_silence(const AudioBuffer& audio, double threshold_db, std::size_t frame)
{
    if (frame == 0) throw ParameterError("detect_silence: frame must be positive");
    const std::size_t n = audio.samples.size();
    const std::size_t frames = (n + frame - 1) / frame;
    std::vector<double> rms(frames, 0.0);
    for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t end = std::min(n, (f + 1) * frame);
        double acc = 0.0;
        for (std::size_t i = f * frame; i < end; ++i) acc += static_cast<double>(audio.samples[i]) * audio.samples[i];
        rms[f] = std::sqrt(acc / static_cast<double>(end - f * frame));
    }
    const double peak = frames == 0 ? 0.0 : *std::max_element(rms.begin(), rms.end());
    std::vector<bool> silent(frames, true);
    if (peak == 0.0) return silent;
    // rms_dB < peak_dB + threshold  <=>  rms < peak * 10^(threshold/20)
    const double floor = peak * std::pow(10.0, threshold_db / 20.0);
    for (std::size_t f = 0; f < frames; ++f) silent[f] = rms[f] < floor;
    return silent;
}

} // namespace timbre
