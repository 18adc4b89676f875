#ifndef TIMBRE_TENSOR_HPP
#define TIMBRE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "timbre/errors.hpp"

namespace timbre {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array with shape metadata.
///
/// Feature maps use (time, bin, channel) order with channel fastest; kernels
/// are stored (tau, kappa, octave, in, out) with the output channel fastest.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape))
    {
        validate_shape();
        data_.assign(shape_size(shape_), fill);
    }

    BasicTensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data))
    {
        validate_shape();
        if (shape_size(shape_) != data_.size()) {
            throw DimensionError("tensor: shape " + shape_string(shape_) + " holds "
                                 + std::to_string(shape_size(shape_)) + " elements, data has "
                                 + std::to_string(data_.size()));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t dim(std::size_t axis) const
    {
        if (axis >= shape_.size()) {
            throw IndexError("tensor: axis " + std::to_string(axis) + " out of range for rank "
                             + std::to_string(shape_.size()));
        }
        return shape_[axis];
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
    const T& operator()(std::size_t i, std::size_t j) const noexcept
    {
        return data_[i * shape_[1] + j];
    }

    T& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept
    {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept
    {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    /// Same data viewed under a new shape with equal element count.
    BasicTensor reshaped(Shape shape) const
    {
        return BasicTensor(std::move(shape), data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const noexcept
    {
        for (T v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    void require_finite(std::string_view where) const
    {
        if (!all_finite()) {
            throw NumericError(std::string(where) + ": non-finite value in tensor "
                               + shape_string(shape_));
        }
    }

    template <typename U>
    BasicTensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    void validate_shape() const
    {
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (shape_[i] == 0) {
                throw DimensionError("tensor: extent of axis " + std::to_string(i)
                                     + " must be positive");
            }
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

} // namespace timbre

#endif
