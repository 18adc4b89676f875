#ifndef TIMBRE_TESTS_DSP_ORACLES_HPP
#define TIMBRE_TESTS_DSP_ORACLES_HPP

// Direct-summation references for the DSP tests. Nothing here calls the
// library's FFT or kernel code.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

inline std::vector<float> sine(double freq, double seconds, double rate = 44100.0, double amp = 1.0,
                               double phase = 0.0)
{
    std::vector<float> x(static_cast<std::size_t>(std::llround(seconds * rate)));
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate + phase));
    }
    return x;
}

/// |sum_n x[n] e^{-2 pi i f n / rate}| evaluated at one arbitrary frequency.
inline double dft_magnitude_at(const std::vector<float>& x, double freq, double rate)
{
    std::complex<double> acc = 0.0;
    const double w = 2.0 * std::numbers::pi * freq / rate;
    for (std::size_t n = 0; n < x.size(); ++n) {
        acc += static_cast<double>(x[n]) * std::polar(1.0, -w * static_cast<double>(n));
    }
    return std::abs(acc);
}

/// Frequency of the largest direct-DFT magnitude on the grid lo, lo+step, ..., hi.
inline double dft_peak(const std::vector<float>& x, double rate, double lo, double hi, double step)
{
    double best_f = lo, best = -1.0;
    for (double f = lo; f <= hi; f += step) {
        const double m = dft_magnitude_at(x, f, rate);
        if (m > best) {
            best = m;
            best_f = f;
        }
    }
    return best_f;
}

/// Constant-Q coefficient by direct time-domain correlation:
/// N = ceil(Q sr / f_k), start = center - floor(N/2),
/// C = (2 / sum w) * sum_n x[start+n] w[n] e^{-2 pi i f_k n / sr},
/// w[n] = 0.5 - 0.5 cos(2 pi n / N), x = 0 outside its support.
inline double direct_cqt(const std::vector<float>& x, std::size_t bin, std::ptrdiff_t center,
                         double rate = 44100.0, double fmin = 55.0, double bins_per_octave = 12.0)
{
    const double q = 1.0 / (std::pow(2.0, 1.0 / bins_per_octave) - 1.0);
    const double f = fmin * std::pow(2.0, static_cast<double>(bin) / bins_per_octave);
    const auto n = static_cast<std::ptrdiff_t>(std::ceil(q * rate / f));
    const std::ptrdiff_t start = center - n / 2;
    std::complex<double> acc = 0.0;
    double wsum = 0.0;
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
        wsum += w;
        const std::ptrdiff_t at = start + i;
        if (at < 0 || at >= static_cast<std::ptrdiff_t>(x.size())) continue;
        acc += static_cast<double>(x[static_cast<std::size_t>(at)]) * w *
               std::polar(1.0, -2.0 * std::numbers::pi * f * static_cast<double>(i) / rate);
    }
    return std::abs(acc) * 2.0 / wsum;
}

inline double rms(const std::vector<float>& x)
{
    double s = 0.0;
    for (float v : x) s += static_cast<double>(v) * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

} // namespace oracle

#endif
