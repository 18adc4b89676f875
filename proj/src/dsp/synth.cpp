#include <cmath>
#include <complex>
#include <numbers>

#include "timbre/errors.hpp"
#include "timbre/synth.hpp"

namespace timbre {

double envelope_gain(const SpectralEnvelope& env, double freq_hz)
{
    if (freq_hz >= env.cutoff_hz || freq_hz <= 0.0) return 0.0;
    double g = std::pow(freq_hz / 100.0, -env.rolloff);
    if (env.formant_hz > 0.0) {
        const double d = std::log2(freq_hz / env.formant_hz) / env.formant_width_octaves;
        g *= std::pow(10.0, env.formant_gain_db * std::exp(-0.5 * d * d) / 20.0);
    }
    const double taper_start = env.cutoff_hz * std::exp2(-env.taper_octaves);
    if (freq_hz > taper_start) {
        const double x = std::log2(freq_hz / taper_start) / env.taper_octaves; // 0..1
        const double c = std::cos(0.5 * std::numbers::pi * x);
        g *= c * c;
    }
    return g;
}

AudioBuffer synth_tone(const SynthSpec& spec, std::mt19937_64& rng)
{
    const double nyquist = spec.sample_rate / 2;
    if (!(spec.f0 > 0.0) || spec.n_partials == 0 || !(spec.duration > 0.0) || !(spec.sample_rate > 0.0)) {
        throw ParameterError("synth_tone: f0, n_partials, duration and sample rate must be positive");
    }
    if (spec.f0 * static_cast<double>(spec.n_partials) >= nyquist) {
        throw ParameterError("synth_tone: f0 * n_partials must stay below Nyquist");
    }
    if (!(spec.envelope.cutoff_hz > 0.0) || !(spec.envelope.taper_octaves > 0.0) ||
        !(spec.envelope.formant_width_octaves > 0.0) || spec.attack < 0.0 || spec.decay < 0.0 ||
        spec.release < 0.0 || spec.detune_cents < 0.0 || spec.jitter_db < 0.0) {
        throw ParameterError("synth_tone: invalid envelope or timing");
    }

    const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate));
    std::vector<double> acc(n, 0.0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
    for (std::size_t p = 1; p <= spec.n_partials; ++p) {
        // Draw every random quantity even for silent partials so the stream
        // does not depend on the envelope.
        const double cents = spec.detune_cents * unit(rng);
        const double jitter = spec.jitter_db * unit(rng);
        const double phase = phase_dist(rng);
        const double nominal = spec.f0 * static_cast<double>(p);
        double amp = envelope_gain(spec.envelope, nominal) * std::pow(10.0, jitter / 20.0);
        if (p % 2 == 0) amp *= spec.envelope.even_gain;
        const double freq = nominal * std::exp2(cents / 1200.0);
        if (amp == 0.0 || freq >= nyquist) continue;
        const double w = 2.0 * std::numbers::pi * freq / spec.sample_rate;
        const std::complex<double> step(std::cos(w), std::sin(w));
        std::complex<double> z = std::polar(amp, phase);
        for (std::size_t i = 0; i < n; ++i) {
            acc[i] += z.imag();
            z *= step;
            if ((i & 4095) == 4095) z = std::polar(amp, phase + w * static_cast<double>(i + 1)); // bound drift
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.sample_rate;
        double a = spec.attack > 0.0 ? std::min(1.0, t / spec.attack) : 1.0;
        if (spec.decay > 0.0) a *= std::exp(-t / spec.decay);
        const double remaining = spec.duration - t;
        if (spec.release > 0.0 && remaining < spec.release) {
            const double c = std::sin(0.5 * std::numbers::pi * std::max(0.0, remaining) / spec.release);
            a *= c * c;
        }
        acc[i] *= a;
    }

    double energy = 0.0;
    for (double v : acc) energy += v * v;
    const double rms = std::sqrt(energy / static_cast<double>(n));
    if (rms == 0.0) {
        throw ParameterError("synth_tone: every partial lies above the envelope cutoff");
    }
    const double gain = kReferenceRms / rms * std::pow(10.0, spec.nuance_db / 20.0);

    AudioBuffer out;
    out.sample_rate = spec.sample_rate;
    out.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(acc[i] * gain);
    return out;
}

const std::vector<InstrumentPreset>& instrument_presets()
{
    // {cutoff, rolloff, even_gain, formant_hz, formant_gain_db, formant_width, taper}, attack, decay
    static const std::vector<InstrumentPreset> presets{
        {"brass", {6000.0, 0.6, 1.0, 1200.0, 8.0, 0.6, 0.25}, 0.05, 0.0},
        {"reed", {4500.0, 0.7, 0.15, 1500.0, 4.0, 0.5, 0.25}, 0.04, 0.0},
        {"flute", {3000.0, 1.8, 1.0, 0.0, 0.0, 0.5, 0.25}, 0.12, 0.0},
        {"bowed", {9000.0, 0.9, 0.8, 2800.0, 10.0, 0.4, 0.25}, 0.15, 0.0},
        {"plucked", {7000.0, 1.2, 1.0, 0.0, 0.0, 0.5, 0.25}, 0.005, 0.8},
        {"mallet", {2500.0, 1.5, 0.4, 800.0, 6.0, 0.5, 0.25}, 0.002, 0.7},
        {"organ", {12000.0, 0.4, 1.0, 0.0, 0.0, 0.5, 0.25}, 0.02, 0.0},
        {"vocal", {5000.0, 1.0, 1.0, 600.0, 12.0, 0.3, 0.25}, 0.08, 0.0},
    };
    return presets;
}

SynthSpec preset_tone(std::size_t instrument, double f0, double nuance_db, double duration)
{
    const auto& presets = instrument_presets();
    if (instrument >= presets.size()) {
        throw ParameterError("preset_tone: unknown instrument " + std::to_string(instrument));
    }
    if (!(f0 > 0.0)) throw ParameterError("preset_tone: f0 must be positive");
    const auto& p = presets[instrument];
    SynthSpec s;
    s.f0 = f0;
    s.envelope = p.envelope;
    s.nuance_db = nuance_db;
    s.duration = duration;
    s.instrument_id = static_cast<int>(instrument);
    s.attack = p.attack;
    s.decay = p.decay;
    const double limit = std::min(p.envelope.cutoff_hz, s.sample_rate / 2 * 0.999);
    s.n_partials = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(limit / f0)) - 1);
    return s;
}

} // namespace timbre
