#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "onebit_fl/rng.hpp"
#include "onebit_fl/sketch.hpp"

namespace onebit {

/// S distinct ids from [0, K), uniform without replacement, sorted ascending.
std::vector<std::size_t> sample_clients(std::size_t K, std::size_t S, CounterRng& rng);

struct WeightedSketch {
    std::reference_wrapper<const OneBitSketch> sketch;
    double weight;
};

enum class TieRule {
    zero,      // sign(0) = 0: the ternary consensus
    plus_one,  // strict one-bit downlink
};

/// Weighted majority vote v_j = sign(sum_k p_k z_kj), the exact minimizer of
/// sum_k p_k g(v, z_k) over v in {+-1}^m. Positive and negative votes are
/// summed separately in sorted order, so the result is invariant to the order
/// of `sketches` and exact ties (equal vote mass) map to 0.
ConsensusVector aggregate(std::span<const WeightedSketch> sketches, TieRule ties = TieRule::zero);

/// <v, sum_k p_k z_k>; the quantity the aggregation maximizes.
double consensus_alignment(const ConsensusVector& v, std::span<const WeightedSketch> sketches);

}  // namespace onebit
