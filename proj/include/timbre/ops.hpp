#ifndef TIMBRE_OPS_HPP
#define TIMBRE_OPS_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "timbre/tensor.hpp"

// Forward and backward kernels for the layers of the spectrogram networks.
// All functions are pure; they are instantiated for float (training) and
// double (gradient and oracle tests).

namespace timbre::ops {

/// Time-frequency kernel: weights are dt x dk x in x out.
template <typename T>
struct ConvKernel {
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

/// Kernel on the pitch spiral: weights are dt x dk x octaves x in x out.
/// Tap j reads the input `bins_per_octave * j` bins below tap 0.
template <typename T>
struct SpiralKernel {
    BasicTensor<T> weights;
    BasicTensor<T> bias;
    std::size_t bins_per_octave = 12;
};

template <typename T>
struct DenseWeights {
    BasicTensor<T> weights; // in x out
    std::optional<BasicTensor<T>> bias;
};

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;   // empty when not requested
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

template <typename T>
struct DenseGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    std::optional<BasicTensor<T>> bias;
};

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    std::vector<std::uint32_t> argmax; // flat input index per output element
};

template <typename T>
struct DropoutResult {
    BasicTensor<T> output;
    std::vector<T> scale; // 0 or 1/(1-rate) per element; empty at inference
};

// Valid convolution, y[t,k,o] = b[o] + sum W[tau,kappa,i,o] x[t-tau, k-kappa, i]
// with output coordinates shifted so that index 0 is the first fully
// supported position.
template <typename T>
BasicTensor<T> conv2d_valid(const BasicTensor<T>& input, const ConvKernel<T>& kernel);

template <typename T>
ConvGrads<T> conv2d_valid_backward(const BasicTensor<T>& input, const ConvKernel<T>& kernel,
                                   const BasicTensor<T>& grad_output, bool want_input_grad);

// y[t,k,o] = b[o] + sum W[tau,kappa,j,i,o] x[t-tau, k-kappa-Q*j, i]
template <typename T>
BasicTensor<T> spiral_conv(const BasicTensor<T>& input, const SpiralKernel<T>& kernel);

template <typename T>
ConvGrads<T> spiral_conv_backward(const BasicTensor<T>& input, const SpiralKernel<T>& kernel,
                                  const BasicTensor<T>& grad_output, bool want_input_grad);

template <typename T>
BasicTensor<T> relu_leaky(const BasicTensor<T>& x, T alpha);

/// Slope alpha is used at x == 0.
template <typename T>
BasicTensor<T> relu_leaky_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_output,
                                   T alpha);

/// Non-overlapping max over pt x pk windows of a T x K x C map; the trailing
/// remainder is dropped.
template <typename T>
PoolResult<T> maxpool(const BasicTensor<T>& x, std::size_t pt, std::size_t pk);

template <typename T>
BasicTensor<T> maxpool_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                                const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const DenseWeights<T>& w);

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const DenseWeights<T>& w,
                             const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// Vector-Jacobian product of softmax given its output.
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& probs, const BasicTensor<T>& grad_output);

inline constexpr double kProbabilityFloor = 1e-12;

/// -log(p[k] + 1e-12).
template <typename T>
T cross_entropy(const BasicTensor<T>& probs, std::size_t label);

/// Gradient of cross_entropy(softmax(y), k) with respect to y: p - onehot(k).
template <typename T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& probs, std::size_t label);

/// Uniform double in [0, 1) from the top 53 bits; stable across standard libraries.
inline double unit_uniform(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverted dropout. `training == false` is the identity.
template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& x, double rate, bool training,
                         std::mt19937_64& rng);

} // namespace timbre::ops

#endif
