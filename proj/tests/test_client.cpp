#include <doctest.h>

#include <algorithm>
#include <limits>
#include <set>
#include <vector>

#include "onebit_fl/client.hpp"
#include "onebit_fl/error.hpp"
#include "support.hpp"

using namespace onebit;

namespace {

struct Fixture {
    Dataset data;
    ModelSpec spec = ModelSpec::linear(4);
    std::vector<std::size_t> all;

    explicit Fixture(std::size_t N = 40) {
        auto rng = CounterRng::derive(1, Stream::diagnostics);
        data.dim = 4;
        const std::vector<double> theta{1.0, -2.0, 0.5, 3.0};
        for (std::size_t i = 0; i < N; ++i) {
            const auto x = testing::gaussian(4, rng);
            data.append(x, testing::dot(x, theta) + 0.1 * rng.normal());
            all.push_back(i);
        }
    }

    ClientState state(std::uint64_t seed = 5) const {
        ClientState s;
        s.id = 3;
        s.w = std::vector<double>(spec.parameter_count(), 0.0);
        s.weight = 1.0;
        s.train = all;
        s.rng = CounterRng::derive(seed, Stream::client, 3);
        return s;
    }
};

}  // namespace

TEST_CASE("batch sampler covers the pool once per epoch") {
    std::vector<std::size_t> pool{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
    auto rng = CounterRng::derive(1, Stream::client);
    BatchSampler sampler(pool, 5, rng);
    std::multiset<std::size_t> seen;
    for (int b = 0; b < 2; ++b) {
        for (auto i : sampler.next()) seen.insert(i);
    }
    CHECK(seen == std::multiset<std::size_t>(pool.begin(), pool.end()));
    CHECK(sampler.next().size() == 5);
}

TEST_CASE("batch sampler validates batch size") {
    std::vector<std::size_t> pool{1, 2, 3};
    auto rng = CounterRng::derive(1, Stream::client);
    CHECK_THROWS_AS(BatchSampler(pool, 0, rng), ConfigError);
    CHECK_THROWS_AS(BatchSampler(pool, 4, rng), ConfigError);
}

TEST_CASE("client update is deterministic and advances the rng") {
    Fixture f;
    const SketchOperator op(2, f.spec.parameter_count(), 3);
    HyperParams hp;
    hp.batch_size = 8;
    const ConsensusVector v(std::vector<std::int8_t>{1, -1, 0});
    const auto a = client_update(f.state(), v, op, f.spec, hp, f.data);
    const auto b = client_update(f.state(), v, op, f.spec, hp, f.data);
    CHECK(a.state.w == b.state.w);
    CHECK(a.sketch == b.sketch);
    CHECK(a.state.rng == b.state.rng);
    CHECK(!(a.state.rng == f.state().rng));
    CHECK(a.stats.steps == hp.local_steps);
    CHECK(a.sketch == quantize(op.forward(a.state.w)));
}

TEST_CASE("zero regularization equals plain mini-batch SGD") {
    Fixture f;
    const SketchOperator op(2, f.spec.parameter_count(), 3);
    HyperParams hp;
    hp.lambda = 0.0;
    hp.mu = 0.0;
    hp.batch_size = 8;
    hp.local_steps = 7;
    const auto res = client_update(f.state(), ConsensusVector(3), op, f.spec, hp, f.data);

    auto s = f.state();
    BatchSampler sampler(s.train, hp.batch_size, s.rng);
    for (std::size_t r = 0; r < hp.local_steps; ++r) {
        const auto g = task_loss_and_grad(f.spec, s.w, f.data, sampler.next()).grad;
        for (std::size_t i = 0; i < s.w.size(); ++i) s.w[i] += -hp.eta * g[i];
    }
    CHECK(res.state.w == s.w);
}

TEST_CASE("full-batch step descends the client objective on a convex task") {
    Fixture f(32);
    const SketchOperator op(4, f.spec.parameter_count(), 4);
    HyperParams hp;
    hp.batch_size = 32;
    hp.local_steps = 1;
    hp.lambda = 0.01;
    hp.gamma = 10.0;
    hp.mu = 0.001;
    hp.eta = 0.01;  // far below 1/L_F for this data
    const ConsensusVector v(op.m());
    const auto s = f.state();
    const double before = client_objective(f.spec, op, s.w, v, hp, f.data, s.train);
    const auto res = client_update(s, v, op, f.spec, hp, f.data);
    const double after = client_objective(f.spec, op, res.state.w, v, hp, f.data, s.train);
    CHECK(after < before);
}

TEST_CASE("local sgd ignores the sketch and matches its own replay") {
    Fixture f;
    HyperParams hp;
    hp.batch_size = 10;
    auto a = f.state();
    auto b = f.state();
    const auto sa = local_sgd(a, f.spec, hp, f.data);
    local_sgd(b, f.spec, hp, f.data);
    CHECK(a.w == b.w);
    CHECK(sa.steps == hp.local_steps);
    CHECK(sa.max_task_grad_sq > 0.0);
}

TEST_CASE("numeric failure carries the client id") {
    Fixture f;
    f.data.features[0] = std::numeric_limits<double>::quiet_NaN();
    const SketchOperator op(2, f.spec.parameter_count(), 3);
    HyperParams hp;
    hp.batch_size = 40;
    try {
        (void)client_update(f.state(), ConsensusVector(3), op, f.spec, hp, f.data);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.client() == 3);
    }
}
