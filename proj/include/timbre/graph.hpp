#ifndef TIMBRE_GRAPH_HPP
#define TIMBRE_GRAPH_HPP

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "timbre/ops.hpp"
#include "timbre/tensor.hpp"

namespace timbre::ad {

using NodeId = std::size_t;
using ParamId = std::size_t;

/// Single-sample reverse-mode tape over the feed-forward layer set.
///
/// Parameters live outside the graph and are referenced by position. A graph
/// is built by one forward pass and consumed by one or more backward passes;
/// parameter gradients are accumulated (+=) into caller-owned tensors.
template <typename T>
class Graph {
public:
    explicit Graph(std::span<const BasicTensor<T>> params);

    NodeId input(BasicTensor<T> x, bool requires_grad = false);

    /// Keeps bins [lo, hi) of a T x K x C map.
    NodeId crop_bins(NodeId x, std::size_t lo, std::size_t hi);
    NodeId conv2d(NodeId x, ParamId weights, ParamId bias);
    NodeId spiral_conv(NodeId x, ParamId weights, ParamId bias, std::size_t bins_per_octave);
    NodeId leaky_relu(NodeId x, T alpha);
    NodeId maxpool(NodeId x, std::size_t pt, std::size_t pk);
    /// `rng == nullptr` means inference: the node passes values through.
    NodeId dropout(NodeId x, double rate, std::mt19937_64* rng);
    NodeId flatten(NodeId x);
    NodeId concat(std::span<const NodeId> xs);
    NodeId dense(NodeId x, ParamId weights, std::optional<ParamId> bias);
    NodeId softmax(NodeId logits);
    /// Scalar loss -log softmax(logits)[label]; the backward pass uses the fused
    /// gradient p - onehot(label). Becomes the graph's loss node.
    NodeId softmax_cross_entropy(NodeId logits, std::size_t label);

    const BasicTensor<T>& value(NodeId id) const;
    /// Gradient of an input node created with requires_grad, after backward.
    const BasicTensor<T>& gradient(NodeId id) const;
    std::size_t size() const noexcept { return nodes_.size(); }
    std::optional<NodeId> loss_node() const noexcept { return loss_; }

    /// Backpropagates d(loss)/d(loss) = 1 from the loss node.
    void backward(std::span<BasicTensor<T>> param_grads);
    /// Backpropagates an arbitrary upstream gradient from any node.
    void backward(NodeId from, const BasicTensor<T>& upstream,
                  std::span<BasicTensor<T>> param_grads);

private:
    struct Node {
        BasicTensor<T> value;
        BasicTensor<T> grad;
        bool needs_grad = false;
        // Receives this node's gradient; pushes to parents and parameters.
        std::function<void(const BasicTensor<T>&)> backward;
    };

    NodeId push(BasicTensor<T> value, bool needs_grad,
                std::function<void(const BasicTensor<T>&)> backward, const char* op);
    const Node& node(NodeId id) const;
    void accumulate(NodeId id, const BasicTensor<T>& g);
    void accumulate_param(ParamId id, const BasicTensor<T>& g);
    const BasicTensor<T>& param(ParamId id) const;

    std::span<const BasicTensor<T>> params_;
    std::vector<Node> nodes_;
    std::optional<NodeId> loss_;
    std::span<BasicTensor<T>> param_grads_;
};

extern template class Graph<float>;
extern template class Graph<double>;

} // namespace timbre::ad

#endif
