#include "onebit_fl/server.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "onebit_fl/error.hpp"

namespace onebit {

std::vector<std::size_t> sample_clients(std::size_t K, std::size_t S, CounterRng& rng) {
    if (S == 0 || S > K) {
        throw ConfigError("sample_clients: need 1 <= S <= K (S=" + std::to_string(S) + ", K=" + std::to_string(K) + ")");
    }
    // Floyd's algorithm.
    std::vector<bool> taken(K, false);
    std::vector<std::size_t> out;
    out.reserve(S);
    for (std::size_t j = K - S; j < K; ++j) {
        auto t = static_cast<std::size_t>(rng.uniform_below(j + 1));
        if (taken[t]) t = j;
        taken[t] = true;
        out.push_back(t);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

void check_inputs(std::span<const WeightedSketch> sketches) {
    if (sketches.empty()) throw InvalidArgument("aggregate: no sketches");
    const std::size_t m = sketches.front().sketch.get().m();
    for (const auto& s : sketches) {
        if (s.sketch.get().m() != m) throw InvalidArgument("aggregate: sketch dimension mismatch");
        if (!(s.weight > 0.0) || !std::isfinite(s.weight)) throw InvalidArgument("aggregate: weights must be positive");
    }
}

}  // namespace

ConsensusVector aggregate(std::span<const WeightedSketch> sketches, TieRule ties) {
    check_inputs(sketches);
    const std::size_t m = sketches.front().sketch.get().m();
    std::vector<double> weights;
    weights.reserve(sketches.size());
    for (const auto& s : sketches) weights.push_back(s.weight);
    // Visit clients by ascending weight so both partial sums are order-free.
    std::vector<std::size_t> order(sketches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] < weights[b]; });

    std::vector<std::int8_t> entries(m);
    for (std::size_t j = 0; j < m; ++j) {
        double plus = 0.0;
        double minus = 0.0;
        for (std::size_t i : order) {
            if (sketches[i].sketch.get().sign(j) > 0) {
                plus += weights[i];
            } else {
                minus += weights[i];
            }
        }
        if (plus > minus) {
            entries[j] = 1;
        } else if (minus > plus) {
            entries[j] = -1;
        } else {
            entries[j] = ties == TieRule::zero ? 0 : 1;
        }
    }
    return ConsensusVector(std::move(entries));
}

double consensus_alignment(const ConsensusVector& v, std::span<const WeightedSketch> sketches) {
    double total = 0.0;
    for (const auto& s : sketches) {
        if (s.sketch.get().m() != v.m()) throw InvalidArgument("consensus_alignment: dimension mismatch");
        double inner = 0.0;
        for (std::size_t j = 0; j < v.m(); ++j) inner += v[j] * s.sketch.get().sign(j);
        total += s.weight * inner;
    }
    return total;
}

}  // namespace onebit
