#include "timbre/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include <cblas.h>

namespace timbre::ops {

namespace {

// Parallelism lives one level up, across samples. One BLAS thread also keeps
// results independent of the core count.
[[maybe_unused]] const bool kBlasSingleThreaded = [] {
    openblas_set_num_threads(1);
    return true;
}();

struct ConvGeometry {
    std::size_t frames, bins, in_channels;
    std::size_t dt, dk, octaves, bins_per_octave, out_channels;
    std::size_t out_frames, out_bins;
};

template <typename T>
ConvGeometry check_conv(const char* op, const BasicTensor<T>& input, const BasicTensor<T>& weights,
                        const BasicTensor<T>& bias, std::size_t octaves, std::size_t q)
{
    if (input.rank() != 3) {
        throw DimensionError(std::string(op) + ": input must be rank 3 (time, bin, channel), got "
                             + shape_string(input.shape()));
    }
    ConvGeometry g{};
    g.frames = input.dim(0);
    g.bins = input.dim(1);
    g.in_channels = input.dim(2);
    const auto& ws = weights.shape();
    if (octaves == 0) {
        if (ws.size() != 4) {
            throw DimensionError(std::string(op) + ": kernel must be rank 4, got "
                                 + shape_string(ws));
        }
        g.dt = ws[0];
        g.dk = ws[1];
        g.octaves = 1;
        g.bins_per_octave = 0;
        if (ws[2] != g.in_channels) {
            throw DimensionError(std::string(op) + ": channel axis: kernel expects "
                                 + std::to_string(ws[2]) + " input channels, input has "
                                 + std::to_string(g.in_channels));
        }
        g.out_channels = ws[3];
    } else {
        if (ws.size() != 5) {
            throw DimensionError(std::string(op) + ": kernel must be rank 5, got "
                                 + shape_string(ws));
        }
        g.dt = ws[0];
        g.dk = ws[1];
        g.octaves = ws[2];
        g.bins_per_octave = q;
        if (ws[3] != g.in_channels) {
            throw DimensionError(std::string(op) + ": channel axis: kernel expects "
                                 + std::to_string(ws[3]) + " input channels, input has "
                                 + std::to_string(g.in_channels));
        }
        g.out_channels = ws[4];
    }
    if (bias.rank() != 1 || bias.dim(0) != g.out_channels) {
        throw DimensionError(std::string(op) + ": bias must have " + std::to_string(g.out_channels)
                             + " elements, got " + shape_string(bias.shape()));
    }
    if (g.frames < g.dt) {
        throw DimensionError(std::string(op) + ": time axis: input has " + std::to_string(g.frames)
                             + " frames, kernel needs " + std::to_string(g.dt));
    }
    const std::size_t span = g.bins_per_octave * (g.octaves - 1) + g.dk;
    if (g.bins < span) {
        throw DimensionError(std::string(op) + ": frequency axis: input has "
                             + std::to_string(g.bins) + " bins, kernel support needs "
                             + std::to_string(span));
    }
    g.out_frames = g.frames - g.dt + 1;
    g.out_bins = g.bins - span + 1;
    return g;
}

// Input row read by output (t, k) through tap (tau, kappa, j).
inline std::size_t source_frame(const ConvGeometry& g, std::size_t t, std::size_t tau)
{
    return t + g.dt - 1 - tau;
}

inline std::size_t source_bin(const ConvGeometry& g, std::size_t k, std::size_t kappa,
                              std::size_t j)
{
    return k + (g.dk - 1) + g.bins_per_octave * (g.octaves - 1 - j) - kappa;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const float* a,
          const float* b, float beta, float* c)
{
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0f, a,
                static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), beta, c,
                static_cast<int>(n));
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double beta, double* c)
{
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a,
                static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), beta, c,
                static_cast<int>(n));
}

// Patch matrix: row (t, k) holds every input value read by output (t, k),
// ordered like the weight tensor's leading axes (tau, kappa, j, i). The
// convolution is then patches x weights.
template <typename T>
std::vector<T> gather_patches(const ConvGeometry& g, const T* x)
{
    const std::size_t cin = g.in_channels;
    const std::size_t width = g.dt * g.dk * g.octaves * cin;
    std::vector<T> p(g.out_frames * g.out_bins * width);
    T* row = p.data();
    for (std::size_t t = 0; t < g.out_frames; ++t) {
        for (std::size_t k = 0; k < g.out_bins; ++k) {
            for (std::size_t tau = 0; tau < g.dt; ++tau) {
                const std::size_t xt = source_frame(g, t, tau);
                for (std::size_t kappa = 0; kappa < g.dk; ++kappa) {
                    for (std::size_t j = 0; j < g.octaves; ++j) {
                        const T* src = x + (xt * g.bins + source_bin(g, k, kappa, j)) * cin;
                        row = std::copy(src, src + cin, row);
                    }
                }
            }
        }
    }
    return p;
}

// Adjoint of gather_patches: accumulates patch gradients into the input.
template <typename T>
void scatter_patches(const ConvGeometry& g, const std::vector<T>& p, T* gx)
{
    const std::size_t cin = g.in_channels;
    const T* row = p.data();
    for (std::size_t t = 0; t < g.out_frames; ++t) {
        for (std::size_t k = 0; k < g.out_bins; ++k) {
            for (std::size_t tau = 0; tau < g.dt; ++tau) {
                const std::size_t xt = source_frame(g, t, tau);
                for (std::size_t kappa = 0; kappa < g.dk; ++kappa) {
                    for (std::size_t j = 0; j < g.octaves; ++j) {
                        T* dst = gx + (xt * g.bins + source_bin(g, k, kappa, j)) * cin;
                        for (std::size_t i = 0; i < cin; ++i) dst[i] += row[i];
                        row += cin;
                    }
                }
            }
        }
    }
}

// Single input channel (the spectrogram layer): the patch matrix would be
// only dt*dk*octaves wide, too narrow for an efficient product. Each tap
// instead adds x * w[tap, :] to a contiguous row of output channels.
template <typename T, typename Fn>
void for_each_single_channel_tap(const ConvGeometry& g, Fn&& fn)
{
    std::size_t tap = 0;
    for (std::size_t tau = 0; tau < g.dt; ++tau) {
        for (std::size_t kappa = 0; kappa < g.dk; ++kappa) {
            for (std::size_t j = 0; j < g.octaves; ++j, ++tap) fn(tap, tau, source_bin(g, 0, kappa, j));
        }
    }
}

#if defined(__GNUC__)
// Register-blocked float kernels for the single-channel layer. Channels are
// held in NV vectors of 16 lanes, so they apply when cout == 16 * NV.
// Taps are still summed in tap order; the bias is added after them.
using Lanes = float __attribute__((vector_size(64)));
using UnalignedLanes = float __attribute__((vector_size(64), aligned(4), may_alias));

inline Lanes load_lanes(const float* p)
{
    return *reinterpret_cast<const UnalignedLanes*>(p);
}

template <std::size_t NV>
void store_add_lanes(float* dst, const Lanes (&acc)[NV])
{
    for (std::size_t v = 0; v < NV; ++v) {
        auto* d = reinterpret_cast<UnalignedLanes*>(dst + 16 * v);
        *d = *d + acc[v];
    }
}

// Four output positions share each weight load.
template <std::size_t NV>
void single_channel_forward_blocked(const ConvGeometry& g, const float* x, const float* w, float* y,
                                    std::size_t& done)
{
    constexpr std::size_t kBlock = 4, cout = 16 * NV;
    done = g.out_bins - g.out_bins % kBlock;
    for (std::size_t t = 0; t < g.out_frames; ++t) {
        float* yrow = y + t * g.out_bins * cout;
        for (std::size_t k = 0; k < done; k += kBlock) {
            Lanes acc[kBlock][NV] = {};
            const float* wt = w;
            for (std::size_t tau = 0; tau < g.dt; ++tau) {
                const float* xrow = x + source_frame(g, t, tau) * g.bins + k;
                for (std::size_t kappa = 0; kappa < g.dk; ++kappa) {
                    for (std::size_t j = 0; j < g.octaves; ++j, wt += cout) {
                        const float* xs = xrow + source_bin(g, 0, kappa, j);
                        Lanes wv[NV];
                        for (std::size_t v = 0; v < NV; ++v) wv[v] = load_lanes(wt + 16 * v);
                        for (std::size_t b = 0; b < kBlock; ++b) {
                            for (std::size_t v = 0; v < NV; ++v) acc[b][v] += xs[b] * wv[v];
                        }
                    }
                }
            }
            for (std::size_t b = 0; b < kBlock; ++b) store_add_lanes(yrow + (k + b) * cout, acc[b]);
        }
    }
}

// Up to four taps of one kernel row share each upstream-gradient load.
template <std::size_t NV>
void single_channel_weight_grad_blocked(const ConvGeometry& g, const float* x, const float* go, float* gw)
{
    constexpr std::size_t kBlock = 4, cout = 16 * NV;
    const std::size_t row_taps = g.dk * g.octaves;
    std::vector<std::size_t> bin0(row_taps);
    for (std::size_t kappa = 0, i = 0; kappa < g.dk; ++kappa) {
        for (std::size_t j = 0; j < g.octaves; ++j, ++i) bin0[i] = source_bin(g, 0, kappa, j);
    }
    for (std::size_t t = 0; t < g.out_frames; ++t) {
        const float* grow = go + t * g.out_bins * cout;
        for (std::size_t tau = 0; tau < g.dt; ++tau) {
            const float* xrow = x + source_frame(g, t, tau) * g.bins;
            for (std::size_t i0 = 0; i0 < row_taps; i0 += kBlock) {
                const std::size_t n = std::min(kBlock, row_taps - i0);
                Lanes acc[kBlock][NV] = {};
                for (std::size_t k = 0; k < g.out_bins; ++k) {
                    Lanes gk[NV];
                    for (std::size_t c = 0; c < NV; ++c) gk[c] = load_lanes(grow + k * cout + 16 * c);
                    for (std::size_t b = 0; b < n; ++b) {
                        const float v = xrow[bin0[i0 + b] + k];
                        for (std::size_t c = 0; c < NV; ++c) acc[b][c] += v * gk[c];
                    }
                }
                for (std::size_t b = 0; b < n; ++b) {
                    store_add_lanes(gw + (tau * row_taps + i0 + b) * cout, acc[b]);
                }
            }
        }
    }
}

template <std::size_t NV = 1>
bool single_channel_fast(const ConvGeometry& g, auto&& run)
{
    if constexpr (NV > 4) {
        return false;
    } else {
        if (g.out_channels == 16 * NV) {
            run(std::integral_constant<std::size_t, NV>{});
            return true;
        }
        return single_channel_fast<NV + 1>(g, run);
    }
}
#endif

template <typename T>
void single_channel_forward(const ConvGeometry& g, const T* x, const T* w, T* y)
{
    const std::size_t cout = g.out_channels;
    std::size_t first_bin = 0;
#if defined(__GNUC__)
    if constexpr (std::is_same_v<T, float>) {
        single_channel_fast(g, [&](auto nv) { single_channel_forward_blocked<nv()>(g, x, w, y, first_bin); });
    }
#endif
    for (std::size_t t = 0; t < g.out_frames; ++t) {
        T* yrow = y + t * g.out_bins * cout;
        for_each_single_channel_tap<T>(g, [&](std::size_t tap, std::size_t tau, std::size_t bin0) {
            const T* xrow = x + source_frame(g, t, tau) * g.bins + bin0;
            const T* wt = w + tap * cout;
            for (std::size_t k = first_bin; k < g.out_bins; ++k) {
                const T v = xrow[k];
                T* yk = yrow + k * cout;
                for (std::size_t o = 0; o < cout; ++o) yk[o] += v * wt[o];
            }
        });
    }
}

template <typename T>
void single_channel_weight_grad(const ConvGeometry& g, const T* x, const T* go, T* gw)
{
    const std::size_t cout = g.out_channels;
#if defined(__GNUC__)
    if constexpr (std::is_same_v<T, float>) {
        if (single_channel_fast(g, [&](auto nv) { single_channel_weight_grad_blocked<nv()>(g, x, go, gw); })) {
            return;
        }
    }
#endif
    for (std::size_t t = 0; t < g.out_frames; ++t) {
        const T* grow = go + t * g.out_bins * cout;
        for_each_single_channel_tap<T>(g, [&](std::size_t tap, std::size_t tau, std::size_t bin0) {
            const T* xrow = x + source_frame(g, t, tau) * g.bins + bin0;
            T* gt = gw + tap * cout;
            for (std::size_t k = 0; k < g.out_bins; ++k) {
                const T v = xrow[k];
                const T* gk = grow + k * cout;
                for (std::size_t o = 0; o < cout; ++o) gt[o] += v * gk[o];
            }
        });
    }
}

template <typename T>
void single_channel_input_grad(const ConvGeometry& g, const T* go, const T* w, T* gx)
{
    const std::size_t cout = g.out_channels;
    for (std::size_t t = 0; t < g.out_frames; ++t) {
        const T* grow = go + t * g.out_bins * cout;
        for_each_single_channel_tap<T>(g, [&](std::size_t tap, std::size_t tau, std::size_t bin0) {
            T* xrow = gx + source_frame(g, t, tau) * g.bins + bin0;
            const T* wt = w + tap * cout;
            for (std::size_t k = 0; k < g.out_bins; ++k) {
                const T* gk = grow + k * cout;
                T acc{0};
                for (std::size_t o = 0; o < cout; ++o) acc += gk[o] * wt[o];
                xrow[k] += acc;
            }
        });
    }
}

template <typename T>
BasicTensor<T> octave_conv_forward(const ConvGeometry& g, const BasicTensor<T>& input,
                                   const BasicTensor<T>& weights, const BasicTensor<T>& bias)
{
    BasicTensor<T> out({g.out_frames, g.out_bins, g.out_channels});
    const std::size_t rows = g.out_frames * g.out_bins;
    const std::size_t width = g.dt * g.dk * g.octaves * g.in_channels;
    const std::size_t cout = g.out_channels;
    T* y = out.raw();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(bias.raw(), bias.raw() + cout, y + r * cout);
    }
    if (g.in_channels == 1) {
        single_channel_forward(g, input.raw(), weights.raw(), y);
        return out;
    }
    const auto patches = gather_patches(g, input.raw());
    gemm(false, false, rows, cout, width, patches.data(), weights.raw(), T{1}, y);
    return out;
}

template <typename T>
ConvGrads<T> octave_conv_backward(const ConvGeometry& g, const BasicTensor<T>& input,
                                  const BasicTensor<T>& weights, const BasicTensor<T>& grad_output,
                                  bool want_input_grad)
{
    const Shape expected{g.out_frames, g.out_bins, g.out_channels};
    if (grad_output.shape() != expected) {
        throw DimensionError("conv backward: upstream gradient shape "
                             + shape_string(grad_output.shape()) + " differs from output shape "
                             + shape_string(expected));
    }
    const std::size_t rows = g.out_frames * g.out_bins;
    const std::size_t width = g.dt * g.dk * g.octaves * g.in_channels;
    const std::size_t cout = g.out_channels;
    const T* go = grad_output.raw();

    ConvGrads<T> grads;
    grads.weights = BasicTensor<T>(weights.shape());
    grads.bias = BasicTensor<T>({cout});
    T* gb = grads.bias.raw();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < cout; ++o) gb[o] += go[r * cout + o];
    }
    if (g.in_channels == 1) {
        single_channel_weight_grad(g, input.raw(), go, grads.weights.raw());
        if (want_input_grad) {
            grads.input = BasicTensor<T>(input.shape());
            single_channel_input_grad(g, go, weights.raw(), grads.input.raw());
        }
        return grads;
    }
    auto patches = gather_patches(g, input.raw());
    gemm(true, false, width, cout, rows, patches.data(), go, T{0}, grads.weights.raw());
    if (want_input_grad) {
        grads.input = BasicTensor<T>(input.shape());
        // Reuse the patch buffer for d(loss)/d(patches) = grad_output x weights^T.
        gemm(false, true, rows, width, cout, go, weights.raw(), T{0}, patches.data());
        scatter_patches(g, patches, grads.input.raw());
    }
    return grads;
}

} // namespace

template <typename T>
BasicTensor<T> conv2d_valid(const BasicTensor<T>& input, const ConvKernel<T>& kernel)
{
    const auto g = check_conv("conv2d_valid", input, kernel.weights, kernel.bias, 0, 0);
    return octave_conv_forward(g, input, kernel.weights, kernel.bias);
}

template <typename T>
ConvGrads<T> conv2d_valid_backward(const BasicTensor<T>& input, const ConvKernel<T>& kernel,
                                   const BasicTensor<T>& grad_output, bool want_input_grad)
{
    const auto g = check_conv("conv2d_valid", input, kernel.weights, kernel.bias, 0, 0);
    return octave_conv_backward(g, input, kernel.weights, grad_output, want_input_grad);
}

template <typename T>
BasicTensor<T> spiral_conv(const BasicTensor<T>& input, const SpiralKernel<T>& kernel)
{
    const auto g = check_conv("spiral_conv", input, kernel.weights, kernel.bias,
                              kernel.weights.rank() == 5 ? kernel.weights.dim(2) : 1,
                              kernel.bins_per_octave);
    return octave_conv_forward(g, input, kernel.weights, kernel.bias);
}

template <typename T>
ConvGrads<T> spiral_conv_backward(const BasicTensor<T>& input, const SpiralKernel<T>& kernel,
                                  const BasicTensor<T>& grad_output, bool want_input_grad)
{
    const auto g = check_conv("spiral_conv", input, kernel.weights, kernel.bias,
                              kernel.weights.rank() == 5 ? kernel.weights.dim(2) : 1,
                              kernel.bins_per_octave);
    return octave_conv_backward(g, input, kernel.weights, grad_output, want_input_grad);
}

template <typename T>
BasicTensor<T> relu_leaky(const BasicTensor<T>& x, T alpha)
{
    if (!(alpha >= T{0} && alpha <= T{1})) {
        throw ParameterError("relu_leaky: slope must lie in [0, 1]");
    }
    BasicTensor<T> y(x.shape());
    const T* __restrict in = x.raw();
    T* __restrict out = y.raw();
    // max/min form vectorizes; a select on the sign does not.
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::max(in[i], T{0}) + alpha * std::min(in[i], T{0});
    }
    return y;
}

template <typename T>
BasicTensor<T> relu_leaky_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_output,
                                   T alpha)
{
    if (x.shape() != grad_output.shape()) {
        throw DimensionError("relu_leaky backward: upstream gradient shape mismatch");
    }
    BasicTensor<T> out(x.shape());
    const std::size_t n = out.size();
    const T* __restrict xs = x.raw();
    const T* __restrict go = grad_output.raw();
    T* __restrict gs = out.raw();
    for (std::size_t i = 0; i < n; ++i) {
        const T up = go[i];
        gs[i] = xs[i] > T{0} ? up : alpha * up;
    }
    return out;
}

template <typename T>
PoolResult<T> maxpool(const BasicTensor<T>& x, std::size_t pt, std::size_t pk)
{
    if (x.rank() != 3) {
        throw DimensionError("maxpool: input must be rank 3, got " + shape_string(x.shape()));
    }
    if (pt == 0 || pk == 0) {
        throw ParameterError("maxpool: window extents must be positive");
    }
    const std::size_t frames = x.dim(0), bins = x.dim(1), ch = x.dim(2);
    if (pt > frames) {
        throw DimensionError("maxpool: time axis: window " + std::to_string(pt) + " exceeds "
                             + std::to_string(frames) + " frames");
    }
    if (pk > bins) {
        throw DimensionError("maxpool: frequency axis: window " + std::to_string(pk) + " exceeds "
                             + std::to_string(bins) + " bins");
    }
    const std::size_t of = frames / pt, ob = bins / pk;
    PoolResult<T> r{BasicTensor<T>({of, ob, ch}), std::vector<std::uint32_t>(of * ob * ch)};
    for (std::size_t t = 0; t < of; ++t) {
        for (std::size_t k = 0; k < ob; ++k) {
            for (std::size_t c = 0; c < ch; ++c) {
                std::size_t best = (t * pt * bins + k * pk) * ch + c;
                T best_v = x[best];
                for (std::size_t dt = 0; dt < pt; ++dt) {
                    for (std::size_t dk = 0; dk < pk; ++dk) {
                        const std::size_t idx = ((t * pt + dt) * bins + (k * pk + dk)) * ch + c;
                        if (x[idx] > best_v) { // strict: first maximum wins ties
                            best_v = x[idx];
                            best = idx;
                        }
                    }
                }
                const std::size_t o = (t * ob + k) * ch + c;
                r.output[o] = best_v;
                r.argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                                const BasicTensor<T>& grad_output)
{
    if (argmax.size() != grad_output.size()) {
        throw DimensionError("maxpool backward: upstream gradient shape mismatch");
    }
    BasicTensor<T> g(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        g[argmax[i]] += grad_output[i];
    }
    return g;
}

template <typename T>
BasicTensor<T> dense(const BasicTensor<T>& x, const DenseWeights<T>& w)
{
    if (w.weights.rank() != 2) {
        throw DimensionError("dense: weights must be rank 2");
    }
    const std::size_t in = w.weights.dim(0), out = w.weights.dim(1);
    if (x.size() != in) {
        throw DimensionError("dense: input length " + std::to_string(x.size())
                             + " differs from weight rows " + std::to_string(in));
    }
    BasicTensor<T> y({out});
    if (w.bias) {
        if (w.bias->size() != out) {
            throw DimensionError("dense: bias length differs from weight columns");
        }
        std::copy(w.bias->raw(), w.bias->raw() + out, y.raw());
    }
    const T* __restrict wp = w.weights.raw();
    T* __restrict yp = y.raw();
    for (std::size_t i = 0; i < in; ++i) {
        const T xv = x[i];
        const T* wr = wp + i * out;
        for (std::size_t o = 0; o < out; ++o) {
            yp[o] += xv * wr[o];
        }
    }
    return y;
}

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const DenseWeights<T>& w,
                             const BasicTensor<T>& grad_output)
{
    const std::size_t in = w.weights.dim(0), out = w.weights.dim(1);
    if (x.size() != in || grad_output.size() != out) {
        throw DimensionError("dense backward: shape mismatch");
    }
    DenseGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(w.weights.shape()), std::nullopt};
    const T* __restrict wp = w.weights.raw();
    const T* __restrict go = grad_output.raw();
    T* __restrict gw = g.weights.raw();
    for (std::size_t i = 0; i < in; ++i) {
        const T xv = x[i];
        const T* wr = wp + i * out;
        T* gwr = gw + i * out;
        T s = 0;
        for (std::size_t o = 0; o < out; ++o) {
            gwr[o] = xv * go[o];
            s += wr[o] * go[o];
        }
        g.input[i] = s;
    }
    if (w.bias) {
        g.bias = grad_output.reshaped({out});
    }
    return g;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits)
{
    logits.require_finite("softmax");
    BasicTensor<T> p = logits;
    auto v = p.data();
    const T m = *std::max_element(v.begin(), v.end());
    T sum = 0;
    for (auto& e : v) {
        e = std::exp(e - m);
        sum += e;
    }
    for (auto& e : v) {
        e /= sum;
    }
    return p;
}

template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& probs, const BasicTensor<T>& grad_output)
{
    if (probs.shape() != grad_output.shape()) {
        throw DimensionError("softmax backward: upstream gradient shape mismatch");
    }
    T dot = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        dot += probs[i] * grad_output[i];
    }
    BasicTensor<T> g(probs.shape());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        g[i] = probs[i] * (grad_output[i] - dot);
    }
    return g;
}

template <typename T>
T cross_entropy(const BasicTensor<T>& probs, std::size_t label)
{
    if (label >= probs.size()) {
        throw IndexError("cross_entropy: class index " + std::to_string(label)
                         + " out of range for " + std::to_string(probs.size()) + " classes");
    }
    return -std::log(probs[label] + static_cast<T>(kProbabilityFloor));
}

template <typename T>
BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>& probs, std::size_t label)
{
    if (label >= probs.size()) {
        throw IndexError("cross_entropy: class index " + std::to_string(label)
                         + " out of range for " + std::to_string(probs.size()) + " classes");
    }
    BasicTensor<T> g = probs;
    g[label] -= T{1};
    return g;
}

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& x, double rate, bool training, std::mt19937_64& rng)
{
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ParameterError("dropout: rate must lie in [0, 1)");
    }
    if (!training || rate == 0.0) {
        return {x, {}};
    }
    DropoutResult<T> r{x, std::vector<T>(x.size())};
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < x.size(); ++i) {
        r.scale[i] = unit_uniform(rng) < rate ? T{0} : keep_scale;
        r.output[i] *= r.scale[i];
    }
    return r;
}

#define TIMBRE_INSTANTIATE_OPS(T)                                                                 \
    template BasicTensor<T> conv2d_valid(const BasicTensor<T>&, const ConvKernel<T>&);            \
    template ConvGrads<T> conv2d_valid_backward(const BasicTensor<T>&, const ConvKernel<T>&,      \
                                                const BasicTensor<T>&, bool);                     \
    template BasicTensor<T> spiral_conv(const BasicTensor<T>&, const SpiralKernel<T>&);           \
    template ConvGrads<T> spiral_conv_backward(const BasicTensor<T>&, const SpiralKernel<T>&,     \
                                               const BasicTensor<T>&, bool);                      \
    template BasicTensor<T> relu_leaky(const BasicTensor<T>&, T);                                 \
    template BasicTensor<T> relu_leaky_backward(const BasicTensor<T>&, const BasicTensor<T>&, T); \
    template PoolResult<T> maxpool(const BasicTensor<T>&, std::size_t, std::size_t);              \
    template BasicTensor<T> maxpool_backward(const Shape&, const std::vector<std::uint32_t>&,     \
                                             const BasicTensor<T>&);                              \
    template BasicTensor<T> dense(const BasicTensor<T>&, const DenseWeights<T>&);                 \
    template DenseGrads<T> dense_backward(const BasicTensor<T>&, const DenseWeights<T>&,          \
                                          const BasicTensor<T>&);                                 \
    template BasicTensor<T> softmax(const BasicTensor<T>&);                                       \
    template BasicTensor<T> softmax_backward(const BasicTensor<T>&, const BasicTensor<T>&);       \
    template T cross_entropy(const BasicTensor<T>&, std::size_t);                                 \
    template BasicTensor<T> softmax_cross_entropy_grad(const BasicTensor<T>&, std::size_t);       \
    template DropoutResult<T> dropout(const BasicTensor<T>&, double, bool, std::mt19937_64&);

TIMBRE_INSTANTIATE_OPS(float)
TIMBRE_INSTANTIATE_OPS(double)

#undef TIMBRE_INSTANTIATE_OPS

} // namespace timbre::ops
