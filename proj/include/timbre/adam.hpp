#ifndef TIMBRE_ADAM_HPP
#define TIMBRE_ADAM_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "timbre/tensor.hpp"

namespace timbre::ad {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment estimates, one pair per parameter tensor.
template <typename T>
struct AdamState {
    AdamConfig config;
    std::vector<BasicTensor<T>> first_moment;
    std::vector<BasicTensor<T>> second_moment;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(std::span<const BasicTensor<T>> params, AdamConfig cfg = {});
};

/// One bias-corrected Adam update, in place.
template <typename T>
void adam_step(AdamState<T>& state, std::span<BasicTensor<T>> params,
               std::span<const BasicTensor<T>> grads);

} // namespace timbre::ad

#endif
