#include <cmath>
#include <cstring>
#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "timbre/audio.hpp"
#include "timbre/errors.hpp"

namespace timbre {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    [[nodiscard]] std::size_t offset() const { return pos_; }
    [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const
    {
        if (remaining() < n) {
            fail(std::string("truncated ") + what);
        }
    }

    [[noreturn]] void fail(const std::string& what) const { fail_at(pos_, what); }

    [[noreturn]] static void fail_at(std::size_t offset, const std::string& what)
    {
        throw IngestError("WAV: " + what + " at byte offset " + std::to_string(offset));
    }

    std::string_view tag(const char* what)
    {
        need(4, what);
        auto s = bytes_.substr(pos_, 4);
        pos_ += 4;
        return s;
    }

    std::uint32_t u32(const char* what)
    {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint16_t u16(const char* what)
    {
        need(2, what);
        const auto v = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_]) |
                                                  static_cast<unsigned char>(bytes_[pos_ + 1]) << 8);
        pos_ += 2;
        return v;
    }

    void skip(std::size_t n) { pos_ = std::min(bytes_.size(), pos_ + n); }
    void seek(std::size_t at) { pos_ = at; }
    [[nodiscard]] std::string_view slice(std::size_t n) const { return bytes_.substr(pos_, n); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

struct Format {
    std::uint16_t tag = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t block_align = 0;
    std::uint16_t bits = 0;
};

Format parse_fmt(Reader& r, std::uint32_t size)
{
    const std::size_t start = r.offset();
    if (size < 16) {
        r.fail("fmt chunk shorter than 16 bytes");
    }
    r.need(size, "fmt chunk");
    Format f;
    f.tag = r.u16("format tag");
    f.channels = r.u16("channel count");
    f.rate = r.u32("sample rate");
    r.u32("byte rate");
    f.block_align = r.u16("block align");
    f.bits = r.u16("bits per sample");
    if (f.tag == kFormatExtensible) {
        if (size < 40) {
            Reader::fail_at(start, "extensible fmt chunk shorter than 40 bytes");
        }
        r.skip(8); // cbSize, valid bits, channel mask
        f.tag = r.u16("extensible sub-format");
    }
    r.seek(start + size);

    if (f.channels == 0) Reader::fail_at(start + 2, "zero channels");
    if (f.rate == 0) Reader::fail_at(start + 4, "zero sample rate");
    const bool ok = (f.tag == kFormatPcm && (f.bits == 16 || f.bits == 24)) ||
                    (f.tag == kFormatFloat && f.bits == 32);
    if (!ok) {
        Reader::fail_at(start, "unsupported codec (format tag " + std::to_string(f.tag) + ", " +
                                   std::to_string(f.bits) + " bits)");
    }
    if (f.block_align != f.channels * (f.bits / 8)) {
        Reader::fail_at(start + 12, "block align inconsistent with channels and bit depth");
    }
    return f;
}

std::vector<float> decode_samples(std::string_view data, const Format& f)
{
    const std::size_t width = f.bits / 8;
    const std::size_t n = data.size() / width;
    std::vector<float> out(n);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    for (std::size_t i = 0; i < n; ++i, p += width) {
        if (f.tag == kFormatFloat) {
            const std::uint32_t bits = p[0] | p[1] << 8 | p[2] << 16 | static_cast<std::uint32_t>(p[3]) << 24;
            float v;
            std::memcpy(&v, &bits, 4);
            out[i] = v;
        } else if (f.bits == 16) {
            const auto v = static_cast<std::int16_t>(p[0] | p[1] << 8);
            out[i] = static_cast<float>(v) / 32768.0f;
        } else {
            std::int32_t v = p[0] | p[1] << 8 | p[2] << 16;
            if (v & 0x800000) v -= 0x1000000;
            out[i] = static_cast<float>(v) / 8388608.0f;
        }
    }
    return out;
}

void put_u16(std::string& s, std::uint16_t v)
{
    s.push_back(static_cast<char>(v & 0xFF));
    s.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& s, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

} // namespace

WavData decode_wav(std::string_view bytes)
{
    Reader r(bytes);
    if (r.tag("RIFF header") != "RIFF") Reader::fail_at(0, "missing RIFF tag");
    r.u32("RIFF size");
    if (r.tag("WAVE tag") != "WAVE") Reader::fail_at(8, "missing WAVE tag");

    std::optional<Format> fmt;
    while (r.remaining() > 0) {
        const std::size_t chunk_at = r.offset();
        const auto id = r.tag("chunk id");
        const auto size = r.u32("chunk size");
        if (id == "fmt ") {
            fmt = parse_fmt(r, size);
        } else if (id == "data") {
            if (!fmt) Reader::fail_at(chunk_at, "data chunk before fmt chunk");
            if (r.remaining() < size) {
                Reader::fail_at(chunk_at + 4, "truncated data chunk (declares " + std::to_string(size) +
                                                  " bytes, " + std::to_string(r.remaining()) + " present)");
            }
            if (size % fmt->block_align != 0) {
                Reader::fail_at(chunk_at + 4, "data size is not a whole number of frames");
            }
            WavData w;
            w.interleaved = decode_samples(r.slice(size), *fmt);
            w.sample_rate = fmt->rate;
            w.channels = fmt->channels;
            w.bits_per_sample = fmt->bits;
            w.is_float = fmt->tag == kFormatFloat;
            return w;
        } else {
            if (r.remaining() < size) Reader::fail_at(chunk_at + 4, "truncated chunk");
            r.skip(size + (size & 1u));
        }
    }
    Reader::fail_at(bytes.size(), fmt ? "missing data chunk" : "missing fmt chunk");
}

WavData read_wav(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return decode_wav(ss.str());
    } catch (const IngestError& e) {
        throw IngestError(path.string() + ": " + e.what());
    }
}

std::string encode_wav(const AudioBuffer& audio, SampleFormat format)
{
    const std::uint16_t bits = format == SampleFormat::pcm16 ? 16 : format == SampleFormat::pcm24 ? 24 : 32;
    const std::uint16_t tag = format == SampleFormat::float32 ? kFormatFloat : kFormatPcm;
    const auto rate = static_cast<std::uint32_t>(std::lround(audio.sample_rate));
    const std::uint32_t width = bits / 8;
    const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * width);

    std::string s;
    s.reserve(44 + data_bytes);
    s += "RIFF";
    put_u32(s, 36 + data_bytes);
    s += "WAVEfmt ";
    put_u32(s, 16);
    put_u16(s, tag);
    put_u16(s, 1);
    put_u32(s, rate);
    put_u32(s, rate * width);
    put_u16(s, static_cast<std::uint16_t>(width));
    put_u16(s, bits);
    s += "data";
    put_u32(s, data_bytes);
    for (float v : audio.samples) {
        if (format == SampleFormat::float32) {
            std::uint32_t b;
            std::memcpy(&b, &v, 4);
            put_u32(s, b);
            continue;
        }
        const double scale = format == SampleFormat::pcm16 ? 32767.0 : 8388607.0;
        const auto q = static_cast<std::int32_t>(std::lround(std::clamp(static_cast<double>(v), -1.0, 1.0) * scale));
        s.push_back(static_cast<char>(q & 0xFF));
        s.push_back(static_cast<char>((q >> 8) & 0xFF));
        if (format == SampleFormat::pcm24) s.push_back(static_cast<char>((q >> 16) & 0xFF));
    }
    return s;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio, SampleFormat format)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IngestError("cannot write " + path.string());
    }
    const auto bytes = encode_wav(audio, format);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

AudioBuffer downmix(const WavData& wav)
{
    AudioBuffer a;
    a.sample_rate = wav.sample_rate;
    const std::size_t n = wav.frames();
    a.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < wav.channels; ++c) s += wav.interleaved[i * wav.channels + c];
        a.samples[i] = static_cast<float>(s / wav.channels);
    }
    return a;
}

AudioBuffer load_audio(const std::filesystem::path& path)
{
    auto audio = downmix(read_wav(path));
    for (float v : audio.samples) {
        if (!std::isfinite(v)) throw IngestError(path.string() + ": non-finite sample");
    }
    return resample(audio, kSampleRate);
}

} // namespace timbre
