#ifndef TIMBRE_SYNTH_HPP
#define TIMBRE_SYNTH_HPP

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "timbre/audio.hpp"

namespace timbre {

/// Pitch-independent spectral envelope (the "filter" of a source-filter
/// tone). Amplitude at frequency f is
///   (f / 100 Hz)^-rolloff * formant(f) * taper(f) [* even_gain for even partials]
/// where taper falls from 1 to exactly 0 over the taper_octaves below cutoff_hz.
struct SpectralEnvelope {
    double cutoff_hz = 5000.0;
    double rolloff = 1.0;
    double even_gain = 1.0;
    double formant_hz = 0.0; // 0 disables the formant
    double formant_gain_db = 0.0;
    double formant_width_octaves = 0.5;
    double taper_octaves = 0.25;
};

/// Linear envelope gain at freq_hz, ignoring the even-partial factor.
double envelope_gain(const SpectralEnvelope& env, double freq_hz);

struct SynthSpec {
    double f0 = 440.0;
    std::size_t n_partials = 1;
    SpectralEnvelope envelope;
    double nuance_db = 0.0; // pure gain
    double duration = 3.0;  // seconds
    int instrument_id = 0;
    double attack = 0.02;      // linear ramp, seconds
    double decay = 0.0;        // exponential time constant in seconds; 0 = sustained
    double release = 0.05;     // raised-cosine fade at the end, seconds
    double detune_cents = 0.5; // per-partial uniform detuning bound
    double jitter_db = 1.0;    // per-partial uniform amplitude jitter bound
    double sample_rate = kSampleRate;
};

/// Before the nuance gain every render is scaled to this RMS.
inline constexpr double kReferenceRms = 0.1;

/// Sum of partials n*f0 (n = 1..n_partials) shaped by the envelope.
/// Throws ParameterError unless f0 > 0, duration > 0 and f0*n_partials < Nyquist.
AudioBuffer synth_tone(const SynthSpec& spec, std::mt19937_64& rng);

struct InstrumentPreset {
    std::string name;
    SpectralEnvelope envelope;
    double attack;
    double decay;
};

/// Eight fixed-envelope instrument classes used for the synthetic corpus.
const std::vector<InstrumentPreset>& instrument_presets();

/// Spec for a preset at a given pitch: as many partials as fit below both
/// the cutoff and Nyquist.
SynthSpec preset_tone(std::size_t instrument, double f0, double nuance_db, double duration);

} // namespace timbre

#endif
