#include "timbre/graph.hpp"

#include <algorithm>
#include <string>

namespace timbre::ad {

template <typename T>
Graph<T>::Graph(std::span<const BasicTensor<T>> params) : params_(params)
{
}

template <typename T>
NodeId Graph<T>::push(BasicTensor<T> value, bool needs_grad,
                      std::function<void(const BasicTensor<T>&)> backward, const char* op)
{
    value.require_finite(op);
    nodes_.push_back(Node{std::move(value), {}, needs_grad, std::move(backward)});
    return nodes_.size() - 1;
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(NodeId id) const
{
    if (id >= nodes_.size()) {
        throw StateError("graph: node " + std::to_string(id) + " does not exist");
    }
    return nodes_[id];
}

template <typename T>
const BasicTensor<T>& Graph<T>::param(ParamId id) const
{
    if (id >= params_.size()) {
        throw IndexError("graph: parameter " + std::to_string(id) + " does not exist");
    }
    return params_[id];
}

template <typename T>
void Graph<T>::accumulate(NodeId id, const BasicTensor<T>& g)
{
    Node& n = nodes_[id];
    if (!n.needs_grad) {
        return;
    }
    if (n.grad.empty()) {
        n.grad = g;
        return;
    }
    auto dst = n.grad.data();
    const auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

template <typename T>
void Graph<T>::accumulate_param(ParamId id, const BasicTensor<T>& g)
{
    if (id >= param_grads_.size()) {
        throw IndexError("graph: no gradient slot for parameter " + std::to_string(id));
    }
    auto& dst = param_grads_[id];
    if (dst.shape() != g.shape()) {
        throw DimensionError("graph: gradient slot for parameter " + std::to_string(id)
                             + " has shape " + shape_string(dst.shape()) + ", expected "
                             + shape_string(g.shape()));
    }
    auto d = dst.data();
    const auto s = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += s[i];
    }
}

template <typename T>
NodeId Graph<T>::input(BasicTensor<T> x, bool requires_grad)
{
    return push(std::move(x), requires_grad, nullptr, "input");
}

template <typename T>
NodeId Graph<T>::crop_bins(NodeId x, std::size_t lo, std::size_t hi)
{
    const auto& in = node(x).value;
    if (in.rank() != 3) {
        throw DimensionError("crop_bins: input must be rank 3");
    }
    const std::size_t frames = in.dim(0), bins = in.dim(1), ch = in.dim(2);
    if (!(lo < hi && hi <= bins)) {
        throw DimensionError("crop_bins: band [" + std::to_string(lo) + ", " + std::to_string(hi)
                             + ") outside " + std::to_string(bins) + " bins");
    }
    const std::size_t width = hi - lo;
    BasicTensor<T> out({frames, width, ch});
    for (std::size_t t = 0; t < frames; ++t) {
        const T* src = in.raw() + (t * bins + lo) * ch;
        std::copy(src, src + width * ch, out.raw() + t * width * ch);
    }
    const Shape in_shape = in.shape();
    return push(std::move(out), nodes_[x].needs_grad,
                [this, x, lo, width, in_shape](const BasicTensor<T>& g) {
                    if (!nodes_[x].needs_grad) {
                        return;
                    }
                    BasicTensor<T> gi(in_shape);
                    const std::size_t frames = in_shape[0], bins = in_shape[1], ch = in_shape[2];
                    for (std::size_t t = 0; t < frames; ++t) {
                        const T* src = g.raw() + t * width * ch;
                        std::copy(src, src + width * ch, gi.raw() + (t * bins + lo) * ch);
                    }
                    accumulate(x, gi);
                },
                "crop_bins");
}

template <typename T>
NodeId Graph<T>::conv2d(NodeId x, ParamId weights, ParamId bias)
{
    ops::ConvKernel<T> k{param(weights), param(bias)};
    auto out = ops::conv2d_valid(node(x).value, k);
    return push(std::move(out), true,
                [this, x, weights, bias](const BasicTensor<T>& g) {
                    ops::ConvKernel<T> k{params_[weights], params_[bias]};
                    auto grads =
                        ops::conv2d_valid_backward(nodes_[x].value, k, g, nodes_[x].needs_grad);
                    accumulate_param(weights, grads.weights);
                    accumulate_param(bias, grads.bias);
                    if (nodes_[x].needs_grad) {
                        accumulate(x, grads.input);
                    }
                },
                "conv2d");
}

template <typename T>
NodeId Graph<T>::spiral_conv(NodeId x, ParamId weights, ParamId bias, std::size_t bins_per_octave)
{
    ops::SpiralKernel<T> k{param(weights), param(bias), bins_per_octave};
    auto out = ops::spiral_conv(node(x).value, k);
    return push(std::move(out), true,
                [this, x, weights, bias, bins_per_octave](const BasicTensor<T>& g) {
                    ops::SpiralKernel<T> k{params_[weights], params_[bias], bins_per_octave};
                    auto grads =
                        ops::spiral_conv_backward(nodes_[x].value, k, g, nodes_[x].needs_grad);
                    accumulate_param(weights, grads.weights);
                    accumulate_param(bias, grads.bias);
                    if (nodes_[x].needs_grad) {
                        accumulate(x, grads.input);
                    }
                },
                "spiral_conv");
}

template <typename T>
NodeId Graph<T>::leaky_relu(NodeId x, T alpha)
{
    auto out = ops::relu_leaky(node(x).value, alpha);
    return push(std::move(out), nodes_[x].needs_grad,
                [this, x, alpha](const BasicTensor<T>& g) {
                    accumulate(x, ops::relu_leaky_backward(nodes_[x].value, g, alpha));
                },
                "leaky_relu");
}

template <typename T>
NodeId Graph<T>::maxpool(NodeId x, std::size_t pt, std::size_t pk)
{
    auto r = ops::maxpool(node(x).value, pt, pk);
    const Shape in_shape = nodes_[x].value.shape();
    return push(std::move(r.output), nodes_[x].needs_grad,
                [this, x, in_shape, argmax = std::move(r.argmax)](const BasicTensor<T>& g) {
                    accumulate(x, ops::maxpool_backward(in_shape, argmax, g));
                },
                "maxpool");
}

template <typename T>
NodeId Graph<T>::dropout(NodeId x, double rate, std::mt19937_64* rng)
{
    std::mt19937_64 unused;
    auto r = ops::dropout(node(x).value, rate, rng != nullptr, rng ? *rng : unused);
    return push(std::move(r.output), nodes_[x].needs_grad,
                [this, x, scale = std::move(r.scale)](const BasicTensor<T>& g) {
                    if (scale.empty()) {
                        accumulate(x, g);
                        return;
                    }
                    BasicTensor<T> gi = g;
                    for (std::size_t i = 0; i < scale.size(); ++i) {
                        gi[i] *= scale[i];
                    }
                    accumulate(x, gi);
                },
                "dropout");
}

template <typename T>
NodeId Graph<T>::flatten(NodeId x)
{
    const auto& in = node(x).value;
    const Shape in_shape = in.shape();
    return push(in.reshaped({in.size()}), nodes_[x].needs_grad,
                [this, x, in_shape](const BasicTensor<T>& g) {
                    accumulate(x, g.reshaped(in_shape));
                },
                "flatten");
}

template <typename T>
NodeId Graph<T>::concat(std::span<const NodeId> xs)
{
    if (xs.empty()) {
        throw DimensionError("concat: no inputs");
    }
    std::vector<NodeId> ids(xs.begin(), xs.end());
    std::vector<T> joined;
    bool needs = false;
    for (NodeId id : ids) {
        const auto& v = node(id).value;
        if (v.rank() != 1) {
            throw DimensionError("concat: inputs must be flattened vectors");
        }
        joined.insert(joined.end(), v.data().begin(), v.data().end());
        needs = needs || nodes_[id].needs_grad;
    }
    const std::size_t total = joined.size();
    return push(BasicTensor<T>({total}, std::move(joined)), needs,
                [this, ids](const BasicTensor<T>& g) {
                    std::size_t offset = 0;
                    for (NodeId id : ids) {
                        const std::size_t n = nodes_[id].value.size();
                        if (nodes_[id].needs_grad) {
                            std::vector<T> part(g.raw() + offset, g.raw() + offset + n);
                            accumulate(id, BasicTensor<T>({n}, std::move(part)));
                        }
                        offset += n;
                    }
                },
                "concat");
}

template <typename T>
NodeId Graph<T>::dense(NodeId x, ParamId weights, std::optional<ParamId> bias)
{
    ops::DenseWeights<T> w{param(weights), std::nullopt};
    if (bias) {
        w.bias = param(*bias);
    }
    auto out = ops::dense(node(x).value, w);
    return push(std::move(out), true,
                [this, x, weights, bias](const BasicTensor<T>& g) {
                    ops::DenseWeights<T> w{params_[weights], std::nullopt};
                    if (bias) {
                        w.bias = params_[*bias];
                    }
                    auto grads = ops::dense_backward(nodes_[x].value, w, g);
                    accumulate_param(weights, grads.weights);
                    if (bias) {
                        accumulate_param(*bias, *grads.bias);
                    }
                    accumulate(x, grads.input.reshaped(nodes_[x].value.shape()));
                },
                "dense");
}

template <typename T>
NodeId Graph<T>::softmax(NodeId logits)
{
    auto p = ops::softmax(node(logits).value);
    const NodeId self = nodes_.size();
    return push(std::move(p), nodes_[logits].needs_grad,
                [this, logits, self](const BasicTensor<T>& g) {
                    accumulate(logits, ops::softmax_backward(nodes_[self].value, g));
                },
                "softmax");
}

template <typename T>
NodeId Graph<T>::softmax_cross_entropy(NodeId logits, std::size_t label)
{
    auto p = ops::softmax(node(logits).value);
    const T loss = ops::cross_entropy(p, label);
    auto fused = ops::softmax_cross_entropy_grad(p, label);
    const NodeId id = push(BasicTensor<T>({1}, std::vector<T>{loss}), nodes_[logits].needs_grad,
                           [this, logits, fused = std::move(fused)](const BasicTensor<T>& g) {
                               BasicTensor<T> gi = fused;
                               for (auto& v : gi.data()) {
                                   v *= g[0];
                               }
                               accumulate(logits, gi);
                           },
                           "softmax_cross_entropy");
    loss_ = id;
    return id;
}

template <typename T>
const BasicTensor<T>& Graph<T>::value(NodeId id) const
{
    return node(id).value;
}

template <typename T>
const BasicTensor<T>& Graph<T>::gradient(NodeId id) const
{
    const auto& n = node(id);
    if (n.grad.empty()) {
        throw StateError("graph: node " + std::to_string(id) + " has no gradient");
    }
    return n.grad;
}

template <typename T>
void Graph<T>::backward(std::span<BasicTensor<T>> param_grads)
{
    if (!loss_) {
        throw StateError("graph: backward called before a loss was recorded by a forward pass");
    }
    backward(*loss_, BasicTensor<T>({1}, std::vector<T>{T{1}}), param_grads);
}

template <typename T>
void Graph<T>::backward(NodeId from, const BasicTensor<T>& upstream,
                        std::span<BasicTensor<T>> param_grads)
{
    if (nodes_.empty()) {
        throw StateError("graph: backward called before forward");
    }
    const auto& start = node(from);
    if (upstream.shape() != start.value.shape()) {
        throw DimensionError("graph: upstream gradient " + shape_string(upstream.shape())
                             + " does not match node value " + shape_string(start.value.shape()));
    }
    for (auto& n : nodes_) {
        n.grad = BasicTensor<T>();
    }
    param_grads_ = param_grads;
    nodes_[from].grad = upstream;
    for (NodeId id = from + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.grad.empty() || !n.backward) {
            continue;
        }
        n.backward(n.grad);
    }
    param_grads_ = {};
}

template class Graph<float>;
template class Graph<double>;

} // namespace timbre::ad
