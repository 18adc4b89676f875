#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "dsp_oracles.hpp"
#include "timbre/errors.hpp"
#include "timbre/fft.hpp"
#include "timbre/synth.hpp"

using namespace timbre;

namespace {

// Fraction of spectral energy above `cutoff`, Blackman-Harris windowed
// (sidelobes below -92 dB so leakage does not mask the measurement).
double energy_fraction_above(const std::vector<float>& x, double cutoff, double rate)
{
    const std::size_t n = 1 << 17;
    std::vector<double> buf(n, 0.0);
    const std::size_t len = std::min(n, x.size());
    for (std::size_t i = 0; i < len; ++i) {
        const double p = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len - 1);
        const double w = 0.35875 - 0.48829 * std::cos(p) + 0.14128 * std::cos(2 * p) - 0.01168 * std::cos(3 * p);
        buf[i] = x[i] * w;
    }
    RealFft fft(n);
    std::vector<std::complex<double>> spec(fft.bins());
    fft.forward(buf, spec);
    double above = 0.0, total = 0.0;
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const double e = std::norm(spec[j]);
        total += e;
        if (static_cast<double>(j) * rate / static_cast<double>(n) > cutoff) above += e;
    }
    return above / total;
}

} // namespace

TEST(Synth, SinglePartialIsPureSinusoidAtF0)
{
    for (double f0 : {110.0, 440.0, 1234.5}) {
        SynthSpec s;
        s.f0 = f0;
        s.n_partials = 1;
        s.duration = 1.0;
        std::mt19937_64 rng(5);
        const auto a = synth_tone(s, rng);
        const double peak = oracle::dft_peak(a.samples, 44100.0, f0 * 0.99, f0 * 1.01, f0 * 1e-4);
        EXPECT_NEAR(peak, f0, 1e-3 * f0);
    }
}

TEST(Synth, CutoffIsIndependentOfF0)
{
    const SpectralEnvelope env{3000.0, 0.5, 1.0, 1000.0, 6.0, 0.5, 0.25};
    for (double f0 : {130.0, 207.0, 415.0}) {
        SynthSpec s;
        s.f0 = f0;
        s.n_partials = static_cast<std::size_t>(20000.0 / f0);
        s.envelope = env;
        s.duration = 3.0;
        std::mt19937_64 rng(9);
        const auto a = synth_tone(s, rng);
        EXPECT_LT(energy_fraction_above(a.samples, 3000.0 * 1.01, 44100.0), 1e-6) << f0;
    }
}

TEST(Synth, NuanceIsPureLinearGain)
{
    auto spec = preset_tone(3, 261.6, 0.0, 1.5);
    std::mt19937_64 r1(77), r2(77);
    const auto loud = synth_tone(spec, r1);
    spec.nuance_db = -20.0;
    const auto soft = synth_tone(spec, r2);
    EXPECT_NEAR(oracle::rms(loud.samples) / oracle::rms(soft.samples), 10.0, 1e-5);
    EXPECT_NEAR(oracle::rms(loud.samples), kReferenceRms, 1e-6);
}

TEST(Synth, SameSeedIsBitIdentical)
{
    std::mt19937_64 r1(8), r2(8);
    EXPECT_EQ(synth_tone(preset_tone(5, 300.0, -6.0, 1.0), r1).samples,
              synth_tone(preset_tone(5, 300.0, -6.0, 1.0), r2).samples);
}

TEST(Synth, InvalidSpecsAreRejected)
{
    std::mt19937_64 rng(1);
    SynthSpec s;
    s.f0 = 0.0;
    EXPECT_THROW(synth_tone(s, rng), ParameterError);
    s.f0 = 1000.0;
    s.n_partials = 23; // 23 kHz > Nyquist
    EXPECT_THROW(synth_tone(s, rng), ParameterError);
    s.n_partials = 2;
    s.duration = -1.0;
    EXPECT_THROW(synth_tone(s, rng), ParameterError);
    EXPECT_THROW(preset_tone(8, 440.0, 0.0, 1.0), ParameterError);
}

TEST(Synth, EnvelopeTaperReachesZeroAtCutoff)
{
    const SpectralEnvelope env{4000.0, 1.0};
    EXPECT_GT(envelope_gain(env, 3000.0), 0.0);
    EXPECT_NEAR(envelope_gain(env, 3999.0), 0.0, 1e-6);
    EXPECT_EQ(envelope_gain(env, 4000.0), 0.0);
    EXPECT_EQ(envelope_gain(env, 9000.0), 0.0);
}

TEST(Synth, PresetsCoverEightClassesBelowNyquist)
{
    ASSERT_EQ(instrument_presets().size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) {
        const auto s = preset_tone(i, 110.0, 0.0, 1.0);
        EXPECT_LT(s.f0 * static_cast<double>(s.n_partials), std::min(22050.0, s.envelope.cutoff_hz));
    }
}
