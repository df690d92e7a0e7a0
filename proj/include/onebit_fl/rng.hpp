#pragma once

#include <cstdint>
#include <span>

namespace onebit {

/// Named streams derived from a single master seed. Each stream is keyed by
/// (seed, stream, index) so that e.g. every client owns an independent
/// stream and both endpoints of the protocol can rebuild the sketch operator
/// from the broadcast seed alone.
enum class Stream : std::uint64_t {
    sketch_seed = 1,
    sign_flips = 2,
    sample_indices = 3,
    client = 4,
    server_sampling = 5,
    data_generation = 6,
    partition = 7,
    model_init = 8,
    eval_subset = 9,
    diagnostics = 10,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: the i-th output of a stream with key k is
/// mix64(k + i * golden). State is the pair (key, counter), so a stream can
/// be copied, replayed or fast-forwarded without touching any other stream.
///
/// All distributions are implemented here rather than through <random>
/// distributions, whose algorithms are library-specific; outputs are
/// identical across standard libraries and platforms.
class CounterRng {
public:
    using result_type = std::uint64_t;

    constexpr CounterRng() noexcept = default;
    constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
        : key_(key), counter_(counter) {}

    /// Stream `stream` (and sub-stream `index`, e.g. a client id) of `seed`.
    static CounterRng derive(std::uint64_t seed, Stream stream, std::uint64_t index = 0) noexcept;

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next(); }

    result_type next() noexcept {
        ++counter_;
        return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    /// Uniform integer in [0, bound); bound must be positive.
    std::uint64_t uniform_below(std::uint64_t bound) noexcept;
    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    /// Standard normal via Box-Muller; consumes exactly two outputs.
    double normal() noexcept;
    bool coin() noexcept { return (next() >> 63) != 0; }

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::span<T> values) noexcept {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

    friend bool operator==(const CounterRng&, const CounterRng&) = default;

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace onebit
