#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dsp_oracles.hpp"
#include "timbre/cqt.hpp"
#include "timbre/errors.hpp"
#include "timbre/synth.hpp"

using namespace timbre;

namespace {

std::size_t argmax_bin(const Spectrogram& s, std::size_t frame)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.bins(); ++k) {
        if (s.values(frame, k) > s.values(frame, best)) best = k;
    }
    return best;
}

// Frames whose longest kernel lies entirely inside the signal.
std::pair<std::size_t, std::size_t> interior_frames(std::size_t n_samples)
{
    const std::size_t half = cqt_kernel_length(CqtConfig{}, 0) / 2 + 1;
    const std::size_t first = (half + 1023) / 1024;
    const std::size_t last = (n_samples - half) / 1024;
    return {first, last};
}

} // namespace

TEST(Cqt, BinFrequencyLaw)
{
    const auto f = cqt_frequencies(CqtConfig{});
    ASSERT_EQ(f.size(), 96u);
    for (std::size_t k = 0; k < 96; ++k) {
        EXPECT_NEAR(f[k], 55.0 * std::pow(2.0, static_cast<double>(k) / 12.0), 1e-9 * f[k]);
    }
    EXPECT_NEAR(f[36], 440.0, 1e-9);
    EXPECT_NEAR(f[95], 14080.0 / std::pow(2.0, 1.0 / 12.0), 1e-6);
}

TEST(Cqt, QualityFactorAndKernelLength)
{
    EXPECT_NEAR(cqt_quality_factor(12), 16.817, 1e-3);
    // ceil(16.8171 * 44100 / 55)
    EXPECT_EQ(cqt_kernel_length(CqtConfig{}, 0), 13485u);
    EXPECT_EQ(default_cqt().fft_size(), 16384u);
}

TEST(Cqt, MatchesDirectTimeDomainCorrelation)
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> noise(0.0, 0.1);
    auto x = oracle::sine(261.6, 1.0, 44100.0, 0.3);
    const auto y = oracle::sine(3520.0, 1.0, 44100.0, 0.2);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i] + static_cast<float>(noise(rng));
    const auto s = cqt_frames(AudioBuffer{x});
    ASSERT_EQ(s.frames(), 1 + x.size() / 1024);
    for (std::size_t frame : {0ul, 5ul, 21ul, 43ul}) {
        double peak = 0.0, worst = 0.0;
        for (std::size_t k = 0; k < 96; ++k) {
            const double ref = oracle::direct_cqt(x, k, static_cast<std::ptrdiff_t>(frame * 1024));
            peak = std::max(peak, ref);
            worst = std::max(worst, std::abs(ref - s.values(frame, k)));
        }
        EXPECT_LT(worst, 2e-3 * peak) << "frame " << frame;
    }
}

TEST(Cqt, UnitSinusoidAtBinCenterHasUnitMagnitude)
{
    const auto x = oracle::sine(440.0, 2.0);
    const auto s = cqt_frames(AudioBuffer{x});
    EXPECT_NEAR(s.values(40, 36), 1.0, 0.01);
}

TEST(Cqt, A440PeaksAtBin36InEveryFrame)
{
    const auto s = cqt(AudioBuffer{oracle::sine(440.0, 3.0)});
    for (std::size_t t = 0; t < s.frames(); ++t) ASSERT_EQ(argmax_bin(s, t), 36u) << "frame " << t;
}

TEST(Cqt, EveryBinCenterToneIsLocalizedOnInteriorFrames)
{
    const auto f = cqt_frequencies(CqtConfig{});
    for (std::size_t k = 0; k < 96; k += 5) {
        const auto x = oracle::sine(f[k], 3.0, 44100.0, 0.5);
        const auto s = cqt_frames(AudioBuffer{x});
        const auto [first, last] = interior_frames(x.size());
        for (std::size_t t = first; t <= last; ++t) ASSERT_EQ(argmax_bin(s, t), k) << "frame " << t;
    }
}

TEST(Cqt, ThreeSecondsGives128By96)
{
    const auto s = cqt(AudioBuffer{std::vector<float>(kExcerptSamples, 0.0f)});
    EXPECT_EQ(s.frames(), 128u);
    EXPECT_EQ(s.bins(), 96u);
    EXPECT_NEAR(s.hop_seconds, 1024.0 / 44100.0, 1e-12);
    // 130 full frames, center crop drops one at each end.
    EXPECT_EQ(cqt_frames(AudioBuffer{std::vector<float>(kExcerptSamples, 0.0f)}).frames(), 130u);
}

TEST(Cqt, ShortInputIsPaddedToExactly128Frames)
{
    const auto s = cqt(AudioBuffer{oracle::sine(440.0, 1.0)});
    EXPECT_EQ(s.frames(), 128u);
    EXPECT_EQ(s.values(0, 36), 0.0f); // padding
    EXPECT_GT(s.values(64, 36), 0.5f);
}

TEST(Cqt, CenterCropMatchesFullFrameOffsets)
{
    const auto x = oracle::sine(300.0, 3.0, 44100.0, 0.4);
    const auto all = cqt_frames(AudioBuffer{x});
    const auto crop = cqt(AudioBuffer{x});
    for (std::size_t t = 0; t < 128; ++t) ASSERT_EQ(crop.values(t, 30), all.values(t + 1, 30));
}

TEST(Cqt, SilenceIsAllZero)
{
    const auto s = cqt(AudioBuffer{std::vector<float>(kExcerptSamples, 0.0f)});
    for (float v : s.values.data()) ASSERT_EQ(v, 0.0f);
}

TEST(Cqt, TooShortInputIsDimensionError)
{
    EXPECT_THROW(cqt(AudioBuffer{std::vector<float>(13484, 0.1f)}), DimensionError);
    EXPECT_NO_THROW(cqt(AudioBuffer{std::vector<float>(13485, 0.1f)}));
}

TEST(Cqt, PitchTranspositionTranslatesAlongBins)
{
    // Fixed envelope, cutoff 8 kHz: compare bins below 4 kHz.
    SpectralEnvelope env{8000.0, 0.8, 1.0, 0.0, 0.0, 0.5, 0.25};
    const double f0 = 196.0;
    const std::size_t limit_bin = 12 * 6 + 2; // 55 * 2^(74/12) ~ 3.9 kHz
    for (std::size_t j : {1ul, 2ul, 5ul}) {
        SynthSpec a{f0, 35, env};
        SynthSpec b = a;
        b.f0 = f0 * std::pow(2.0, static_cast<double>(j) / 12.0);
        b.n_partials = static_cast<std::size_t>(8000.0 / b.f0);
        a.jitter_db = b.jitter_db = 0.0;
        a.detune_cents = b.detune_cents = 0.0;
        std::mt19937_64 ra(1), rb(1);
        const auto sa = cqt(synth_tone(a, ra));
        const auto sb = cqt(synth_tone(b, rb));
        std::vector<double> dev;
        for (std::size_t t = 20; t < 108; ++t) {
            for (std::size_t k = 0; k + j < limit_bin; ++k) {
                const double da = 20.0 * std::log10(sa.values(t, k) + 1e-9);
                const double db = 20.0 * std::log10(sb.values(t, k + j) + 1e-9);
                dev.push_back(std::abs(da - db));
            }
        }
        std::nth_element(dev.begin(), dev.begin() + dev.size() / 2, dev.end());
        EXPECT_LT(dev[dev.size() / 2], 3.0) << "shift " << j;
    }
}

TEST(Weighting, AWeightingReferenceValues)
{
    EXPECT_NEAR(a_weighting_db(1000.0), 0.0, 1e-12);
    // Standard tabulated A-weighting values.
    EXPECT_NEAR(a_weighting_db(100.0), -19.1, 0.1);
    EXPECT_NEAR(a_weighting_db(10000.0), -2.5, 0.1);
    EXPECT_NEAR(a_weighting_db(50.0), -30.2, 0.1);
}

TEST(Weighting, SameFrequencyRatiosArePreserved)
{
    Spectrogram s{Tensor({2, 1}, std::vector<float>{1.0f, 10.0f}), {440.0}, 0.023};
    const auto w = perceptual_weighting(s);
    EXPECT_NEAR(w.values(1, 0) - w.values(0, 0), 20.0, 1e-5);
}

TEST(Weighting, OneKilohertzIsUnweightedPowerDb)
{
    Spectrogram s{Tensor({1, 1}, std::vector<float>{0.5f}), {1000.0}, 0.023};
    EXPECT_NEAR(perceptual_weighting(s).values[0], 10.0 * std::log10(0.25), 1e-5);
}

TEST(Weighting, AllZeroInputIsUniform)
{
    Spectrogram s{Tensor({4, 96}), cqt_frequencies(CqtConfig{}), 0.023};
    const auto w = perceptual_weighting(s);
    for (float v : w.values.data()) ASSERT_EQ(v, w.values[0]);
}

TEST(Weighting, DynamicRangeIsClippedTo80Db)
{
    const auto s = cqt(AudioBuffer{oracle::sine(440.0, 3.0)});
    const auto w = perceptual_weighting(s);
    const auto [lo, hi] = std::minmax_element(w.values.data().begin(), w.values.data().end());
    EXPECT_NEAR(*hi - *lo, 80.0, 1e-4);
}

TEST(Weighting, NegativeMagnitudeIsRejected)
{
    Spectrogram s{Tensor({1, 1}, std::vector<float>{-1.0f}), {440.0}, 0.023};
    EXPECT_THROW(perceptual_weighting(s), ParameterError);
}
