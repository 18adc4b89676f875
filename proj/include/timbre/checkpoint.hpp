#ifndef TIMBRE_CHECKPOINT_HPP
#define TIMBRE_CHECKPOINT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "timbre/tensor.hpp"

namespace timbre::ad {

/// Parameter container: an 8-byte magic "TMBRCKPT", a little-endian u64 header
/// length, a JSON header (architecture, tensor names, shapes, byte offsets),
/// then raw little-endian float32 blocks in declaration order.
struct Checkpoint {
    nlohmann::json architecture;
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<std::string> names;
    std::vector<Tensor> params;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace timbre::ad

#endif
