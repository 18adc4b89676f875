#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "timbre/graph.hpp"

using namespace timbre;
using timbre::ad::Graph;
using timbre::ad::NodeId;

namespace {

constexpr double kTolerance = 1e-4;

void expect_gradients_match(std::vector<Tensor64> params, const Tensor64& input,
                            const oracle::Builder& build, std::mt19937_64& rng)
{
    const auto r = oracle::finite_difference_check(std::move(params), input, build, rng);
    EXPECT_LT(r.worst_param_error, kTolerance);
    EXPECT_LT(r.input_error, kTolerance);
}

} // namespace

TEST(GraphGradients, Conv2d)
{
    std::mt19937_64 rng(100);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t cin = 1 + trial % 2, cout = 2 + trial % 3;
        std::vector<Tensor64> p{oracle::random_tensor({3, 2, cin, cout}, rng),
                                oracle::random_tensor({cout}, rng)};
        const auto x = oracle::random_tensor({7, 6, cin}, rng);
        expect_gradients_match(p, x, [](Graph<double>& g, NodeId in) { return g.conv2d(in, 0, 1); },
                               rng);
    }
}

TEST(GraphGradients, SpiralConv)
{
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t q = 3, J = 1 + trial % 3;
        std::vector<Tensor64> p{oracle::random_tensor({2, 2, J, 2, 3}, rng),
                                oracle::random_tensor({3}, rng)};
        const auto x = oracle::random_tensor({6, q * (J - 1) + 5, 2}, rng);
        expect_gradients_match(
            p, x, [q](Graph<double>& g, NodeId in) { return g.spiral_conv(in, 0, 1, q); }, rng);
    }
}

TEST(GraphGradients, FullHeightTemporalConv)
{
    std::mt19937_64 rng(102);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t bins = 4 + trial;
        std::vector<Tensor64> p{oracle::random_tensor({3, bins, 1, 4}, rng),
                                oracle::random_tensor({4}, rng)};
        const auto x = oracle::random_tensor({9, bins, 1}, rng);
        expect_gradients_match(p, x, [](Graph<double>& g, NodeId in) { return g.conv2d(in, 0, 1); },
                               rng);
    }
}

TEST(GraphGradients, Dense)
{
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Tensor64> p{oracle::random_tensor({12, 5}, rng), oracle::random_tensor({5}, rng)};
        const auto x = oracle::random_tensor({12}, rng);
        const bool with_bias = trial % 2 == 0;
        expect_gradients_match(
            p, x,
            [with_bias](Graph<double>& g, NodeId in) {
                return with_bias ? g.dense(in, 0, 1) : g.dense(in, 0, std::nullopt);
            },
            rng);
    }
}

TEST(GraphGradients, LeakyRelu)
{
    std::mt19937_64 rng(104);
    for (int trial = 0; trial < 5; ++trial) {
        // Keep inputs away from the kink so central differences are valid.
        auto x = oracle::random_tensor({30}, rng);
        for (auto& v : x.data()) {
            if (std::abs(v) < 1e-3) v = 0.5;
        }
        std::vector<Tensor64> p;
        expect_gradients_match(p, x, [](Graph<double>& g, NodeId in) { return g.leaky_relu(in, 0.3); },
                               rng);
    }
}

TEST(GraphGradients, Maxpool)
{
    std::mt19937_64 rng(105);
    for (int trial = 0; trial < 5; ++trial) {
        const auto x = oracle::random_tensor({11, 8, 2}, rng);
        std::vector<Tensor64> p;
        expect_gradients_match(p, x, [](Graph<double>& g, NodeId in) { return g.maxpool(in, 5, 3); },
                               rng);
    }
}

TEST(GraphGradients, SoftmaxCrossEntropy)
{
    std::mt19937_64 rng(106);
    for (int trial = 0; trial < 5; ++trial) {
        const auto x = oracle::random_tensor({8}, rng, -3.0, 3.0);
        std::vector<Tensor64> p;
        const std::size_t label = static_cast<std::size_t>(trial) % 8;
        expect_gradients_match(
            p, x, [label](Graph<double>& g, NodeId in) { return g.softmax_cross_entropy(in, label); },
            rng);
        expect_gradients_match(p, x, [](Graph<double>& g, NodeId in) { return g.softmax(in); }, rng);
    }
}

TEST(GraphGradients, TwoLayerToyNetwork)
{
    std::mt19937_64 rng(107);
    // conv -> relu -> pool -> conv -> relu -> pool -> flatten -> dense -> relu -> dense -> CE
    std::vector<Tensor64> p{oracle::random_tensor({3, 3, 1, 3}, rng),
                            oracle::random_tensor({3}, rng),
                            oracle::random_tensor({2, 2, 3, 2}, rng),
                            oracle::random_tensor({2}, rng),
                            oracle::random_tensor({8, 5}, rng),
                            oracle::random_tensor({5}, rng),
                            oracle::random_tensor({5, 4}, rng)};
    const auto x = oracle::random_tensor({14, 12, 1}, rng);
    expect_gradients_match(
        p, x,
        [](Graph<double>& g, NodeId in) {
            auto h = g.maxpool(g.leaky_relu(g.conv2d(in, 0, 1), 0.3), 2, 2);
            h = g.maxpool(g.leaky_relu(g.conv2d(h, 2, 3), 0.3), 2, 2);
            h = g.leaky_relu(g.dense(g.flatten(h), 4, 5), 0.3);
            return g.softmax_cross_entropy(g.dense(h, 6, std::nullopt), 2);
        },
        rng);
}

TEST(GraphGradients, BranchesCropAndConcat)
{
    std::mt19937_64 rng(108);
    std::vector<Tensor64> p{oracle::random_tensor({2, 2, 1, 2}, rng),
                            oracle::random_tensor({2}, rng),
                            oracle::random_tensor({2, 1, 2, 1, 2}, rng),
                            oracle::random_tensor({2}, rng)};
    const auto x = oracle::random_tensor({5, 10, 1}, rng);
    expect_gradients_match(
        p, x,
        [](Graph<double>& g, NodeId in) {
            const auto a = g.flatten(g.conv2d(g.crop_bins(in, 0, 6), 0, 1));
            const auto b = g.flatten(g.spiral_conv(g.crop_bins(in, 4, 10), 2, 3, 3));
            const NodeId parts[] = {a, b};
            return g.concat(parts);
        },
        rng);
}

TEST(GraphGradients, DropoutUsesSameMaskBackward)
{
    std::mt19937_64 rng(109);
    const auto x = oracle::random_tensor({40}, rng);
    std::vector<Tensor64> none;
    Graph<double> g(none);
    std::mt19937_64 drop_rng(5);
    const auto in = g.input(x, true);
    const auto out = g.dropout(in, 0.5, &drop_rng);
    g.backward(out, Tensor64({40}, 1.0), {});
    const auto& y = g.value(out);
    const auto& gx = g.gradient(in);
    for (std::size_t i = 0; i < 40; ++i) {
        EXPECT_DOUBLE_EQ(gx[i], y[i] == 0.0 ? 0.0 : 2.0);
    }
}

TEST(Graph, FusedLossGradientIsExact)
{
    std::vector<Tensor64> none;
    Graph<double> g(none);
    const auto in = g.input(Tensor64({8}), true);
    g.softmax_cross_entropy(in, 0);
    g.backward({});
    const auto& grad = g.gradient(in);
    EXPECT_EQ(grad[0], -7.0 / 8.0);
    for (std::size_t i = 1; i < 8; ++i) EXPECT_EQ(grad[i], 1.0 / 8.0);
}

TEST(Graph, ZeroUpstreamGivesZeroParameterGradients)
{
    std::mt19937_64 rng(110);
    std::vector<Tensor64> p{oracle::random_tensor({2, 2, 1, 3}, rng), oracle::random_tensor({3}, rng),
                            oracle::random_tensor({27, 4}, rng), oracle::random_tensor({4}, rng)};
    Graph<double> g(p);
    const auto in = g.input(oracle::random_tensor({4, 4, 1}, rng));
    const auto out = g.dense(g.flatten(g.leaky_relu(g.conv2d(in, 0, 1), 0.3)), 2, 3);
    std::vector<Tensor64> grads;
    for (const auto& t : p) grads.emplace_back(t.shape());
    g.backward(out, Tensor64({4}), grads);
    for (const auto& t : grads) {
        for (double v : t.data()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Graph, BackwardBeforeForwardIsStateError)
{
    std::vector<Tensor64> none;
    Graph<double> g(none);
    EXPECT_THROW(g.backward({}), StateError);
    g.input(Tensor64({3}));
    EXPECT_THROW(g.backward({}), StateError); // no loss recorded
}

TEST(Graph, NonFiniteValuesAreRejected)
{
    std::vector<Tensor64> none;
    Graph<double> g(none);
    EXPECT_THROW(g.input(Tensor64({2}, std::numeric_limits<double>::quiet_NaN())), NumericError);
}
