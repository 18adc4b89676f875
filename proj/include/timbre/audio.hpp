#ifndef TIMBRE_AUDIO_HPP
#define TIMBRE_AUDIO_HPP

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace timbre {

inline constexpr double kSampleRate = 44100.0;

/// Mono signal. After `load_audio` the rate is always kSampleRate.
struct AudioBuffer {
    std::vector<float> samples;
    double sample_rate = kSampleRate;

    [[nodiscard]] double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Interleaved samples exactly as stored, scaled to [-1, 1].
struct WavData {
    std::vector<float> interleaved;
    std::uint32_t sample_rate = 0;
    std::uint16_t channels = 0;
    std::uint16_t bits_per_sample = 0;
    bool is_float = false;

    [[nodiscard]] std::size_t frames() const { return channels == 0 ? 0 : interleaved.size() / channels; }
};

enum class SampleFormat { pcm16, pcm24, float32 };

// Decoders throw IngestError naming the byte offset of the first bad field.
WavData decode_wav(std::string_view bytes);
WavData read_wav(const std::filesystem::path& path);

std::string encode_wav(const AudioBuffer& audio, SampleFormat format = SampleFormat::pcm16);
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio,
               SampleFormat format = SampleFormat::pcm16);

/// Channel average.
AudioBuffer downmix(const WavData& wav);

/// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
AudioBuffer resample(const AudioBuffer& audio, double target_rate);

/// read_wav -> downmix -> resample to kSampleRate.
AudioBuffer load_audio(const std::filesystem::path& path);

} // namespace timbre

#endif
