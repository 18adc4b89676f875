#include <cmath>
#include <numbers>

#include "timbre/audio.hpp"
#include "timbre/errors.hpp"

namespace timbre {

namespace {

constexpr int kZeroCrossings = 32;
constexpr int kTableSteps = 1024; // per zero crossing
constexpr double kKaiserBeta = 8.6;
constexpr double kPassbandFraction = 0.97;

// Windowed sinc on [0, kZeroCrossings] in zero-crossing units, sampled finely.
const std::vector<double>& sinc_table()
{
    static const std::vector<double> table = [] {
        std::vector<double> t(kZeroCrossings * kTableSteps + 2, 0.0);
        const double norm = std::cyl_bessel_i(0.0, kKaiserBeta);
        for (std::size_t i = 0; i + 1 < t.size(); ++i) {
            const double x = static_cast<double>(i) / kTableSteps;
            const double r = x / kZeroCrossings;
            const double window = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / norm;
            const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
            t[i] = sinc * window;
        }
        return t;
    }();
    return table;
}

double kernel(double x)
{
    const auto& t = sinc_table();
    const double pos = std::abs(x) * kTableSteps;
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= t.size()) return 0.0;
    const double frac = pos - static_cast<double>(i);
    return t[i] + frac * (t[i + 1] - t[i]);
}

} // namespace

AudioBuffer resample(const AudioBuffer& audio, double target_rate)
{
    if (!(target_rate > 0.0) || !(audio.sample_rate > 0.0)) {
        throw ParameterError("resample: sample rates must be positive");
    }
    if (audio.sample_rate == target_rate) {
        return audio;
    }
    const double ratio = target_rate / audio.sample_rate;
    // Cutoff relative to the input Nyquist; lowered when decimating.
    const double cutoff = std::min(1.0, ratio) * kPassbandFraction;
    const double half_width = kZeroCrossings / cutoff;

    const auto n_in = static_cast<std::ptrdiff_t>(audio.samples.size());
    const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * ratio));
    AudioBuffer out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);
    for (std::size_t n = 0; n < n_out; ++n) {
        const double u = static_cast<double>(n) / ratio;
        const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(u - half_width)));
        const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(u + half_width)));
        double acc = 0.0;
        for (std::ptrdiff_t k = lo; k <= hi; ++k) {
            acc += audio.samples[static_cast<std::size_t>(k)] * kernel(cutoff * (u - static_cast<double>(k)));
        }
        out.samples[n] = static_cast<float>(cutoff * acc);
    }
    return out;
}

} // namespace timbre
