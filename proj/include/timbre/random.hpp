#ifndef TIMBRE_RANDOM_HPP
#define TIMBRE_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace timbre {

/// A generator keyed by a tuple of integers (master seed, epoch, index, ...).
/// Distinct tuples give independent streams; the same tuple always gives the
/// same stream, whichever thread asks for it.
inline std::mt19937_64 derive_rng(std::initializer_list<std::uint64_t> key)
{
    std::vector<std::uint32_t> words;
    for (auto k : key) {
        words.push_back(static_cast<std::uint32_t>(k));
        words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

} // namespace timbre

#endif
