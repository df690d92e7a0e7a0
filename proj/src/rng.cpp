#include "onebit_fl/rng.hpp"

#include <cmath>
#include <numbers>

namespace onebit {

CounterRng CounterRng::derive(std::uint64_t seed, Stream stream, std::uint64_t index) noexcept {
    const auto tag = static_cast<std::uint64_t>(stream);
    const std::uint64_t key = mix64(mix64(seed) ^ mix64(tag * 0xd1b54a32d192ed03ULL + index));
    return CounterRng(key);
}

std::uint64_t CounterRng::uniform_below(std::uint64_t bound) noexcept {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next();
    __uint128_t product = static_cast<__uint128_t>(x) * bound;
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            x = next();
            product = static_cast<__uint128_t>(x) * bound;
            low = static_cast<std::uint64_t>(product);
        }
    }
    return static_cast<std::uint64_t>(product >> 64);
}

double CounterRng::normal() noexcept {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace onebit
