#ifndef TIMBRE_NETWORK_HPP
#define TIMBRE_NETWORK_HPP

#include <cstddef>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "timbre/graph.hpp"
#include "timbre/tensor.hpp"

namespace timbre::arch {

inline constexpr std::size_t kInputFrames = 128;
inline constexpr std::size_t kInputBins = 96;
inline constexpr std::size_t kHiddenUnits = 64;
inline constexpr std::size_t kClasses = 8;
inline constexpr double kLeakySlope = 0.3;
inline constexpr double kDropoutRate = 0.5;

/// Half-open bin range [lo, hi) of the 96-bin input.
struct BandCrop {
    std::size_t lo = 0;
    std::size_t hi = kInputBins;
    bool operator==(const BandCrop&) const = default;
};

inline constexpr BandCrop kFullCrop{0, 96};
inline constexpr BandCrop kSpiralCrop{12, 60}; // A2 to A6
inline constexpr BandCrop kHighCrop{60, 96};   // A6 to A9

enum class LayerKind { conv2d, conv1d_fullheight, spiral, maxpool, dense, relu, dropout, softmax, flatten, concat };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

/// Geometry fields are read according to `kind`:
///  conv2d:            time x bins kernel, `channels` outputs
///  conv1d_fullheight: `time` x (whole input height) kernel, `channels` outputs
///  spiral:            time x bins kernel over `octaves` taps Q = bins_per_octave apart
///  maxpool:           time x bins window
///  dense:             `channels` units, optional bias
///  relu:              slope alpha;  dropout: rate
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t time = 0;
    std::size_t bins = 0;
    std::size_t channels = 0;
    std::size_t octaves = 1;
    std::size_t bins_per_octave = 12;
    double alpha = kLeakySlope;
    double rate = kDropoutRate;
    bool bias = true;
    bool operator==(const LayerSpec&) const = default;
};

struct Branch {
    std::string name;
    BandCrop crop;
    std::vector<LayerSpec> layers; // ends with flatten
    bool operator==(const Branch&) const = default;
};

/// Branch outputs are concatenated and fed to `head`, which must read
/// dropout, dense(64), relu, dropout, dense(8, no bias), softmax.
struct NetworkSpec {
    std::string name;
    std::vector<Branch> branches;
    std::vector<LayerSpec> head;
    bool operator==(const NetworkSpec&) const = default;
};

enum class Strategy { two_d, one_d, spiral };

NetworkSpec build_2d(std::size_t n_kernels = 32);
NetworkSpec build_1d();
NetworkSpec build_spiral();
/// Concatenates the branches of each strategy (2-d with 32 kernels) in the
/// order 2-d, 1-d, spiral. A single strategy returns its own builder's spec.
NetworkSpec build_hybrid(const std::set<Strategy>& strategies);

/// Registered names: 2d32 2d48 1d spiral spiral+1d spiral+2d 1d+2d all.
NetworkSpec architecture_by_name(const std::string& name);
std::vector<std::string> architecture_names();
/// A registered name, or a path to a JSON spec.
NetworkSpec load_architecture(const std::string& name_or_path);

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_from_json(const nlohmann::json& j);

struct ParamInfo {
    std::string name;
    Shape shape;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    bool is_bias = false;
};

struct LayerInfo {
    std::string where; // "<branch>/<index>" or "head/<index>"
    LayerKind kind;
    Shape output;
    std::size_t params = 0;
};

/// Shape inference without allocating tensors. Throws DimensionError naming
/// the offending layer when the spec does not fit a 128 x 96 input.
std::vector<LayerInfo> describe(const NetworkSpec& spec);
std::vector<ParamInfo> param_layout(const NetworkSpec& spec);
std::size_t count_params(const NetworkSpec& spec);

/// Glorot-uniform weights, zero biases.
std::vector<Tensor> init_params(const NetworkSpec& spec, std::mt19937_64& rng);

/// Records the network on `g`, reading parameters in param_layout order.
/// `input` is a 128 x 96 x 1 node. Dropout is active iff `dropout_rng` is
/// non-null. Returns the logits when `logits_only`, else the probabilities.
template <typename T>
ad::NodeId emit(ad::Graph<T>& g, const NetworkSpec& spec, ad::NodeId input, std::mt19937_64* dropout_rng,
                bool logits_only);

/// Inference on a 128 x 96 spectrogram; returns 8 probabilities.
Tensor forward(const NetworkSpec& spec, std::span<const Tensor> params, const Tensor& spectrogram);

} // namespace timbre::arch

#endif
