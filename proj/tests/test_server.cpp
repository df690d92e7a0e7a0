#include <doctest.h>

#include <algorithm>
#include <limits>
#include <set>
#include <vector>

#include "onebit_fl/error.hpp"
#include "onebit_fl/server.hpp"
#include "support.hpp"

using namespace onebit;

namespace {

OneBitSketch sk(std::vector<int> s) { return OneBitSketch::from_signs(s); }

double server_objective(const ConsensusVector& v, const std::vector<OneBitSketch>& zs, const std::vector<double>& p) {
    // sum_k p_k * (1/2)(||z_k||_1 - <v, z_k>)
    double total = 0.0;
    for (std::size_t k = 0; k < zs.size(); ++k) {
        double inner = 0.0;
        for (std::size_t j = 0; j < v.m(); ++j) inner += v[j] * zs[k].sign(j);
        total += p[k] * 0.5 * (static_cast<double>(v.m()) - inner);
    }
    return total;
}

}  // namespace

TEST_CASE("client sampling") {
    auto rng = CounterRng::derive(1, Stream::server_sampling);
    const auto s = sample_clients(20, 7, rng);
    CHECK(s.size() == 7);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 7);
    CHECK(s.back() < 20);
    const auto all = sample_clients(5, 5, rng);
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK_THROWS_AS(sample_clients(3, 4, rng), ConfigError);
    CHECK_THROWS_AS(sample_clients(3, 0, rng), ConfigError);
}

TEST_CASE("client sampling is uniform over clients") {
    auto rng = CounterRng::derive(2, Stream::server_sampling);
    std::vector<int> hits(10, 0);
    for (int t = 0; t < 20000; ++t) {
        for (auto k : sample_clients(10, 3, rng)) ++hits[k];
    }
    for (int h : hits) CHECK(std::abs(h - 6000) < 300);
}

TEST_CASE("weighted majority vote") {
    const auto a = sk({1, 1, -1, -1});
    const auto b = sk({1, -1, 1, -1});
    const auto c = sk({-1, -1, 1, 1});
    const std::vector<WeightedSketch> w{{std::cref(a), 0.5}, {std::cref(b), 0.3}, {std::cref(c), 0.1}};
    const auto v = aggregate(w);
    CHECK(std::vector<std::int8_t>(v.entries().begin(), v.entries().end()) == std::vector<std::int8_t>{1, 1, -1, -1});
}

TEST_CASE("exact ties give zero, or +1 under the strict rule") {
    const auto a = sk({1, -1, 1});
    const auto b = sk({-1, -1, 1});
    const std::vector<WeightedSketch> w{{std::cref(a), 0.25}, {std::cref(b), 0.25}};
    const auto v = aggregate(w);
    CHECK(v[0] == 0);
    CHECK(v[1] == -1);
    CHECK(aggregate(w, TieRule::plus_one)[0] == 1);
}

TEST_CASE("aggregation is invariant to client order") {
    auto rng = CounterRng::derive(3, Stream::diagnostics);
    std::vector<OneBitSketch> zs;
    std::vector<double> p;
    for (int k = 0; k < 9; ++k) {
        std::vector<int> s(40);
        for (auto& e : s) e = rng.coin() ? 1 : -1;
        zs.push_back(sk(s));
        p.push_back(k % 3 == 0 ? 0.1 : 0.1 + 0.01 * k);
    }
    std::vector<std::size_t> order(9);
    for (std::size_t i = 0; i < 9; ++i) order[i] = i;
    std::vector<WeightedSketch> w;
    for (auto i : order) w.push_back({std::cref(zs[i]), p[i]});
    const auto ref = aggregate(w);
    for (int t = 0; t < 20; ++t) {
        rng.shuffle(std::span<std::size_t>(order));
        w.clear();
        for (auto i : order) w.push_back({std::cref(zs[i]), p[i]});
        CHECK(aggregate(w) == ref);
    }
}

TEST_CASE("aggregation minimizes the server objective (brute force)") {
    auto rng = CounterRng::derive(4, Stream::diagnostics);
    for (int inst = 0; inst < 30; ++inst) {
        const std::size_t m = 1 + rng.uniform_below(8);
        const std::size_t K = 2 + rng.uniform_below(5);
        std::vector<OneBitSketch> zs;
        std::vector<double> p;
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<int> s(m);
            for (auto& e : s) e = rng.coin() ? 1 : -1;
            zs.push_back(sk(s));
            p.push_back(inst % 2 ? 1.0 : rng.uniform01() + 0.01);
        }
        std::vector<WeightedSketch> w;
        for (std::size_t k = 0; k < K; ++k) w.push_back({std::cref(zs[k]), p[k]});
        const auto v = aggregate(w);
        double best = std::numeric_limits<double>::infinity();
        for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
            std::vector<std::int8_t> c(m);
            for (std::size_t j = 0; j < m; ++j) c[j] = (mask >> j) & 1u ? 1 : -1;
            best = std::min(best, server_objective(ConsensusVector(c), zs, p));
        }
        CHECK(server_objective(v, zs, p) == doctest::Approx(best).epsilon(1e-12));
        CHECK(server_objective(aggregate(w, TieRule::plus_one), zs, p) == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("aggregation input validation") {
    const auto a = sk({1, -1});
    const auto b = sk({1, -1, 1});
    CHECK_THROWS_AS(aggregate({}), InvalidArgument);
    const std::vector<WeightedSketch> mismatch{{std::cref(a), 1.0}, {std::cref(b), 1.0}};
    CHECK_THROWS_AS(aggregate(mismatch), InvalidArgument);
    const std::vector<WeightedSketch> zero{{std::cref(a), 0.0}};
    CHECK_THROWS_AS(aggregate(zero), InvalidArgument);
}

TEST_CASE("consensus alignment") {
    const auto a = sk({1, -1, 1});
    const std::vector<WeightedSketch> w{{std::cref(a), 0.5}};
    const ConsensusVector v(std::vector<std::int8_t>{1, 1, 0});
    CHECK(consensus_alignment(v, w) == doctest::Approx(0.0));
    CHECK(consensus_alignment(aggregate(w), w) == doctest::Approx(1.5));
}
