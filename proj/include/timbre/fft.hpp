#ifndef TIMBRE_FFT_HPP
#define TIMBRE_FFT_HPP

#include <complex>
#include <cstddef>
#include <memory>
#include <span>

namespace timbre {

/// Real-to-complex forward DFT of a fixed size, unnormalized
/// (X[j] = sum_n x[n] e^{-2 pi i j n / N}). Output holds N/2 + 1 bins.
/// Planning is serialized internally; `forward` is safe to call concurrently.
class RealFft {
public:
    explicit RealFft(std::size_t size);
    ~RealFft();
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    [[nodiscard]] std::size_t size() const { return size_; }
    [[nodiscard]] std::size_t bins() const { return size_ / 2 + 1; }

    void forward(std::span<const double> in, std::span<std::complex<double>> out) const;

private:
    std::size_t size_;
    struct Plan;
    std::unique_ptr<Plan> plan_;
};

} // namespace timbre

#endif
