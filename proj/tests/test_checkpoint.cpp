#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <random>

#include "timbre/checkpoint.hpp"

using namespace timbre;
using namespace timbre::ad;

namespace {

Checkpoint sample_checkpoint()
{
    std::mt19937_64 rng(3);
    std::normal_distribution<float> d;
    Checkpoint c;
    c.architecture = {{"name", "toy"}};
    c.metadata = {{"seed", 42}};
    c.names = {"w", "b"};
    Tensor w({2, 3});
    for (auto& v : w.data()) v = d(rng);
    c.params = {w, Tensor({3}, std::vector<float>{1.5f, -0.0f, 3.25e-30f})};
    return c;
}

} // namespace

TEST(Checkpoint, RoundTripIsBitExact)
{
    const auto c = sample_checkpoint();
    const auto path = std::filesystem::temp_directory_path() / "timbre_ckpt_test.bin";
    save_checkpoint(path, c);
    const auto back = load_checkpoint(path);
    std::filesystem::remove(path);
    EXPECT_EQ(back.names, c.names);
    EXPECT_EQ(back.architecture, c.architecture);
    EXPECT_EQ(back.metadata, c.metadata);
    ASSERT_EQ(back.params.size(), c.params.size());
    for (std::size_t i = 0; i < c.params.size(); ++i) {
        ASSERT_EQ(back.params[i].shape(), c.params[i].shape());
        for (std::size_t e = 0; e < c.params[i].size(); ++e) {
            EXPECT_EQ(std::bit_cast<std::uint32_t>(back.params[i][e]),
                      std::bit_cast<std::uint32_t>(c.params[i][e]));
        }
    }
    EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(c));
}

TEST(Checkpoint, LayoutIsHeaderThenLittleEndianFloats)
{
    const auto bytes = encode_checkpoint(sample_checkpoint());
    ASSERT_EQ(bytes.substr(0, 8), "TMBRCKPT");
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) {
        len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    }
    const auto header = nlohmann::json::parse(bytes.substr(16, len));
    EXPECT_EQ(header["tensors"][1]["offset"], 24);
    EXPECT_EQ(bytes.size(), 16 + len + 4 * 9);
    // 1.5f == 0x3FC00000, little-endian.
    const std::size_t at = 16 + len + 24;
    EXPECT_EQ(static_cast<unsigned char>(bytes[at + 3]), 0x3F);
    EXPECT_EQ(static_cast<unsigned char>(bytes[at + 2]), 0xC0);
    EXPECT_EQ(static_cast<unsigned char>(bytes[at]), 0x00);
}

TEST(Checkpoint, TruncatedFileIsIngestError)
{
    auto bytes = encode_checkpoint(sample_checkpoint());
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IngestError);
    EXPECT_THROW(decode_checkpoint("garbage"), IngestError);
}
