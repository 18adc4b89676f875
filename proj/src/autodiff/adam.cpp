#include "timbre/adam.hpp"

#include <cmath>
#include <string>

namespace timbre::ad {

template <typename T>
AdamState<T>::AdamState(std::span<const BasicTensor<T>> params, AdamConfig cfg) : config(cfg)
{
    first_moment.reserve(params.size());
    second_moment.reserve(params.size());
    for (const auto& p : params) {
        first_moment.emplace_back(p.shape());
        second_moment.emplace_back(p.shape());
    }
}

template <typename T>
void adam_step(AdamState<T>& state, std::span<BasicTensor<T>> params,
               std::span<const BasicTensor<T>> grads)
{
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw DimensionError("adam_step: parameter, gradient and moment counts differ");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (params[p].shape() != grads[p].shape()
            || params[p].shape() != state.first_moment[p].shape()) {
            throw DimensionError("adam_step: shape mismatch at parameter " + std::to_string(p));
        }
    }
    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    const T b1 = static_cast<T>(c.beta1);
    const T b2 = static_cast<T>(c.beta2);
    const T step_size = static_cast<T>(c.learning_rate / correction1);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
    const T eps = static_cast<T>(c.epsilon);

    for (std::size_t p = 0; p < params.size(); ++p) {
        T* w = params[p].raw();
        const T* g = grads[p].raw();
        T* m = state.first_moment[p].raw();
        T* v = state.second_moment[p].raw();
        const std::size_t n = params[p].size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (T{1} - b1) * g[i];
            v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
        }
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(AdamState<float>&, std::span<BasicTensor<float>>,
                        std::span<const BasicTensor<float>>);
template void adam_step(AdamState<double>&, std::span<BasicTensor<double>>,
                        std::span<const BasicTensor<double>>);

} // namespace timbre::ad
