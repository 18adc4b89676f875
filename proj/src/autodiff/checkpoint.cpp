#include "timbre/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace timbre::ad {

namespace {

constexpr char kMagic[8] = {'T', 'M', 'B', 'R', 'C', 'K', 'P', 'T'};
constexpr int kVersion = 1;

void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
}

std::uint64_t get_u64(const std::string& in, std::size_t at)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    }
    return v;
}

} // namespace

std::string encode_checkpoint(const Checkpoint& ckpt)
{
    if (ckpt.names.size() != ckpt.params.size()) {
        throw DimensionError("checkpoint: name count differs from tensor count");
    }
    nlohmann::json header;
    header["format"] = "timbre-checkpoint";
    header["version"] = kVersion;
    header["dtype"] = "float32-le";
    header["architecture"] = ckpt.architecture;
    header["metadata"] = ckpt.metadata;
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        const std::uint64_t bytes = ckpt.params[i].size() * 4;
        header["tensors"].push_back({{"name", ckpt.names[i]},
                                     {"shape", ckpt.params[i].shape()},
                                     {"offset", offset},
                                     {"bytes", bytes}});
        offset += bytes;
    }
    const std::string text = header.dump();

    std::string out(kMagic, sizeof kMagic);
    put_u64(out, text.size());
    out += text;
    out.reserve(out.size() + offset);
    for (const auto& t : ckpt.params) {
        for (float f : t.data()) {
            const auto bits = std::bit_cast<std::uint32_t>(f);
            for (int b = 0; b < 4; ++b) {
                out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
            }
        }
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes)
{
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw IngestError("checkpoint: bad magic at byte 0");
    }
    const std::uint64_t header_len = get_u64(bytes, 8);
    if (16 + header_len > bytes.size()) {
        throw IngestError("checkpoint: header truncated at byte " + std::to_string(bytes.size()));
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IngestError(std::string("checkpoint: header at byte 16 is not JSON: ") + e.what());
    }
    if (header.value("version", 0) != kVersion) {
        throw IngestError("checkpoint: unsupported version");
    }
    const std::size_t data_start = 16 + header_len;
    Checkpoint ckpt;
    ckpt.architecture = header.at("architecture");
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
    for (const auto& entry : header.at("tensors")) {
        const auto shape = entry.at("shape").get<Shape>();
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        const std::uint64_t nbytes = entry.at("bytes").get<std::uint64_t>();
        if (nbytes != shape_size(shape) * 4) {
            throw IngestError("checkpoint: tensor '" + entry.at("name").get<std::string>()
                              + "' byte count disagrees with its shape");
        }
        if (data_start + offset + nbytes > bytes.size()) {
            throw IngestError("checkpoint: tensor data truncated at byte "
                              + std::to_string(bytes.size()));
        }
        std::vector<float> values(shape_size(shape));
        const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + data_start + offset);
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
            }
            values[i] = std::bit_cast<float>(bits);
        }
        ckpt.names.push_back(entry.at("name").get<std::string>());
        ckpt.params.emplace_back(shape, std::move(values));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("checkpoint: write to " + path.string() + " failed");
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IngestError("checkpoint: cannot open " + path.string());
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace timbre::ad
