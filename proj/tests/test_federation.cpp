#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "onebit_fl/error.hpp"
#include "onebit_fl/federation.hpp"
#include "onebit_fl/report.hpp"
#include "support.hpp"

using namespace onebit;

namespace {

FederatedDataset synthetic(std::size_t K, std::size_t samples, std::size_t dim, SyntheticKind kind, std::uint64_t seed = 1) {
    SyntheticSpec spec;
    spec.kind = kind;
    spec.clients = K;
    spec.samples_per_client = samples;
    spec.dim = dim;
    spec.seed = seed;
    return federate(generate_synthetic(spec).clients, 0.2, seed, kind == SyntheticKind::linear ? 0 : 2);
}

FederationConfig small_config(std::size_t dim) {
    FederationConfig cfg;
    cfg.model = ModelSpec::logistic(dim, 2);
    cfg.hp.rounds = 5;
    cfg.hp.participants = 3;
    cfg.hp.batch_size = 8;
    cfg.hp.eta = 0.1;
    cfg.m_ratio = 0.25;
    cfg.threads = 1;
    return cfg;
}

std::string csv(const RunResult& r) {
    std::ostringstream out;
    write_metrics_csv(out, r.rounds);
    return out.str();
}

}  // namespace

TEST_CASE("sketch dimension and seed") {
    CHECK(sketch_dimension(102, 0.1) == 10);
    CHECK(sketch_dimension(203530, 0.1) == 20353);
    CHECK(sketch_dimension(3, 0.1) == 1);
    CHECK(sketch_dimension(8, 1.0) == 8);
    CHECK_THROWS_AS(sketch_dimension(8, 0.0), ConfigError);
    CHECK_THROWS_AS(sketch_dimension(8, 1.5), ConfigError);
    CHECK(sketch_seed(1) == sketch_seed(1));
    CHECK(sketch_seed(1) != sketch_seed(2));
}

TEST_CASE("communication arithmetic") {
    CHECK(comm_cost_reduction(32, 1000, 100) == doctest::Approx(0.996875).epsilon(1e-15));
    CHECK(comm_cost_reduction(1, 50, 50) == 0.0);
    CHECK_THROWS_AS(comm_cost_reduction(0, 1, 1), InvalidArgument);
    const auto l = round_ledger(1000, 100, 10, 32, false, false);
    CHECK(l.onebit_uplink == 1000);
    CHECK(l.onebit_downlink == 2000);
    CHECK(l.fedavg_uplink == 320000);
    CHECK(l.fedavg_downlink == 320000);
    const auto once = round_ledger(1000, 100, 10, 32, true, true);
    CHECK(once.onebit_downlink == 100);
    CHECK(once.fedavg_downlink == 32000);
}

TEST_CASE("parallel_for visits every index and rethrows") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 7) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
    parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("zero rounds give no metrics") {
    const auto fed = synthetic(4, 40, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    cfg.hp.rounds = 0;
    const auto r = run(cfg, fed);
    CHECK(r.rounds.empty());
    CHECK(r.clients.size() == 4);
    CHECK(csv(r) == "round,mean_train_loss,mean_test_accuracy,uplink_bits,downlink_bits,potential_estimate,"
                    "delta_max,sampling_error_term,grad_norm_sq\n");
}

TEST_CASE("single client without regularization is plain SGD") {
    const auto fed = synthetic(1, 60, 4, SyntheticKind::logistic);
    auto cfg = small_config(4);
    cfg.hp.participants = 1;
    cfg.hp.lambda = 0.0;
    cfg.hp.mu = 0.0;
    cfg.hp.rounds = 6;
    const auto r = run(cfg, fed);

    auto w = init_parameters(cfg.model, cfg.seed);
    auto rng = CounterRng::derive(cfg.seed, Stream::client, 0);
    // Each round's local pass draws a fresh shuffle from the client stream.
    for (std::size_t t = 0; t < cfg.hp.rounds; ++t) {
        BatchSampler sampler(fed.clients[0].train, cfg.hp.batch_size, rng);
        for (std::size_t step = 0; step < cfg.hp.local_steps; ++step) {
            const auto g = task_loss_and_grad(cfg.model, w, fed.data, sampler.next()).grad;
            for (std::size_t i = 0; i < w.size(); ++i) w[i] += -cfg.hp.eta * g[i];
        }
    }
    CHECK(r.clients[0].w == w);
}

TEST_CASE("ledger identities hold every round") {
    const auto fed = synthetic(6, 40, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    const std::size_t n = cfg.model.parameter_count();
    const std::size_t m = sketch_dimension(n, cfg.m_ratio);
    for (bool strict : {false, true}) {
        for (bool once : {false, true}) {
            cfg.strict_onebit_downlink = strict;
            cfg.broadcast_once = once;
            const auto r = run(cfg, fed);
            for (const auto& rm : r.rounds) {
                CHECK(rm.uplink_bits == cfg.hp.participants * m);
                CHECK(rm.downlink_bits == (once ? 1 : cfg.hp.participants) * (strict ? m : 2 * m));
            }
            if (strict) CHECK(r.consensus.zero_count() == 0);
        }
    }
    cfg.algorithm = Algorithm::fedavg;
    cfg.broadcast_once = false;
    for (const auto& rm : run(cfg, fed).rounds) {
        CHECK(rm.uplink_bits == cfg.hp.participants * n * 32);
        CHECK(rm.downlink_bits == cfg.hp.participants * n * 32);
    }
    cfg.algorithm = Algorithm::local;
    for (const auto& rm : run(cfg, fed).rounds) {
        CHECK(rm.uplink_bits == 0);
        CHECK(rm.downlink_bits == 0);
    }
}

TEST_CASE("runs are reproducible and independent of thread count") {
    const auto fed = synthetic(8, 40, 6, SyntheticKind::logistic);
    auto cfg = small_config(6);
    const auto a = run(cfg, fed);
    cfg.threads = 4;
    const auto b = run(cfg, fed);
    CHECK(csv(a) == csv(b));
    CHECK(a.consensus == b.consensus);
    cfg.seed = 2;
    CHECK(csv(run(cfg, fed)) != csv(a));
}

TEST_CASE("round metrics are well formed") {
    const auto fed = synthetic(6, 50, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    const auto r = run(cfg, fed);
    REQUIRE(r.rounds.size() == 5);
    for (std::size_t t = 0; t < 5; ++t) {
        const auto& rm = r.rounds[t];
        CHECK(rm.round == t);
        CHECK((rm.mean_test_accuracy >= 0.0 && rm.mean_test_accuracy <= 1.0));
        CHECK(std::isfinite(rm.potential_estimate));
        CHECK(rm.delta_max > 0.0);
        CHECK(rm.sampling_error_term >= 0.0);
        CHECK(rm.grad_norm_sq >= 0.0);
    }
    CHECK(r.server_steps_checked == 5);
    CHECK(r.max_sq_norm >= r.w0_sq);
}

TEST_CASE("full participation has no sampling error") {
    const auto fed = synthetic(4, 40, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    cfg.hp.participants = 4;
    const auto r = run(cfg, fed);
    for (const auto& rm : r.rounds) CHECK(rm.sampling_error_term == 0.0);
    CHECK(r.E_S == 0.0);
}

TEST_CASE("train_all_clients updates idle clients too") {
    const auto fed = synthetic(6, 40, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    cfg.hp.rounds = 1;
    cfg.hp.participants = 1;
    const auto w0 = init_parameters(cfg.model, cfg.seed);
    const auto sampled_only = run(cfg, fed);
    std::size_t moved = 0;
    for (const auto& c : sampled_only.clients) moved += c.w != w0;
    CHECK(moved == 1);
    cfg.train_all_clients = true;
    const auto all = run(cfg, fed);
    moved = 0;
    for (const auto& c : all.clients) moved += c.w != w0;
    CHECK(moved == 6);
    CHECK(all.rounds[0].uplink_bits == sampled_only.rounds[0].uplink_bits);
}

TEST_CASE("fedavg shares one global model") {
    const auto fed = synthetic(5, 40, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    cfg.algorithm = Algorithm::fedavg;
    const auto r = run(cfg, fed);
    for (const auto& c : r.clients) CHECK(c.w == r.clients[0].w);
}

TEST_CASE("configuration errors are raised before any compute") {
    const auto fed = synthetic(3, 40, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    cfg.hp.participants = 4;
    CHECK_THROWS_AS(run(cfg, fed), ConfigError);
    cfg = small_config(6);
    CHECK_THROWS_AS(run(cfg, fed), ConfigError);
    cfg = small_config(5);
    cfg.hp.batch_size = 1000;
    CHECK_THROWS_AS(run(cfg, fed), ConfigError);
    cfg = small_config(5);
    cfg.model = ModelSpec::logistic(5, 2);
    auto bad = fed;
    bad.data.targets[0] = 3.0;
    CHECK_THROWS_AS(run(cfg, bad), ConfigError);
}

TEST_CASE("numeric failures follow the error policy") {
    auto fed = synthetic(4, 40, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    cfg.hp.participants = 4;
    cfg.hp.batch_size = 32;  // the whole train split, so every step touches the bad sample
    cfg.hp.rounds = 2;
    cfg.eval_subset = 4;
    // Poison a train sample of client 2 that the evaluation subset skips.
    ClientState probe;
    probe.id = 2;
    probe.train = fed.clients[2].train;
    const auto evaluated = evaluation_subset(probe, cfg.eval_subset, cfg.seed);
    std::size_t victim = 0;
    for (auto i : probe.train) {
        if (std::find(evaluated.begin(), evaluated.end(), i) == evaluated.end()) victim = i;
    }
    fed.data.features[victim * 5] = std::numeric_limits<double>::quiet_NaN();

    try {
        (void)run(cfg, fed);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.client() == 2);
    }

    cfg.error_policy = ErrorPolicy::skip_client;
    const auto r = run(cfg, fed);
    REQUIRE(r.skipped.size() == 2);
    CHECK(r.skipped[0].client == 2);
    CHECK(r.skipped[1].round == 1);
    CHECK(r.rounds[0].uplink_bits == 3 * sketch_dimension(cfg.model.parameter_count(), cfg.m_ratio));
    CHECK(r.clients[2].w == init_parameters(cfg.model, cfg.seed));
}

TEST_CASE("potential value") {
    const auto fed = synthetic(3, 400, 5, SyntheticKind::logistic);
    auto cfg = small_config(5);
    cfg.hp.participants = 3;
    const auto r = run(cfg, fed);
    const std::size_t n = cfg.model.parameter_count();
    const SketchOperator op(sketch_seed(cfg.seed), n, sketch_dimension(n, cfg.m_ratio));

    SUBCASE("single client without regularization is its mean loss") {
        HyperParams hp = cfg.hp;
        hp.lambda = 0.0;
        hp.mu = 0.0;
        auto one = std::vector<ClientState>{r.clients[1]};
        one[0].weight = 1.0;
        const auto p = potential_value(one, r.consensus, op, cfg.model, hp, fed.data, PotentialMode::exact, 1);
        CHECK(p.value == doctest::Approx(task_loss(cfg.model, one[0].w, fed.data, one[0].train)).epsilon(1e-14));
        CHECK(p.standard_error == 0.0);
    }
    SUBCASE("invariant to client order") {
        auto reversed = r.clients;
        std::reverse(reversed.begin(), reversed.end());
        const auto a = potential_value(r.clients, r.consensus, op, cfg.model, cfg.hp, fed.data, PotentialMode::exact, 1);
        const auto b = potential_value(reversed, r.consensus, op, cfg.model, cfg.hp, fed.data, PotentialMode::exact, 1);
        CHECK(a.value == doctest::Approx(b.value).epsilon(1e-14));
    }
    SUBCASE("sampled estimate is consistent with the exact value") {
        const auto exact =
            potential_value(r.clients, r.consensus, op, cfg.model, cfg.hp, fed.data, PotentialMode::exact, 1);
        const auto sampled =
            potential_value(r.clients, r.consensus, op, cfg.model, cfg.hp, fed.data, PotentialMode::sampled, 1);
        REQUIRE(sampled.standard_error > 0.0);
        CHECK(std::fabs(exact.value - sampled.value) <= 3.0 * sampled.standard_error);
    }
}

TEST_CASE("potential is non-increasing on a full-batch convex benchmark") {
    const auto fed = synthetic(4, 30, 4, SyntheticKind::linear);
    FederationConfig cfg;
    cfg.model = ModelSpec::linear(4);
    cfg.hp.rounds = 30;
    cfg.hp.participants = 4;
    cfg.hp.batch_size = 24;  // the whole train split
    cfg.hp.lambda = 0.0005;
    cfg.hp.gamma = 100.0;
    cfg.hp.mu = 0.001;
    cfg.hp.eta = 0.02;
    cfg.m_ratio = 0.5;
    cfg.potential = PotentialMode::exact;
    cfg.threads = 1;
    const auto r = run(cfg, fed);
    double prev = r.initial_potential;
    for (const auto& rm : r.rounds) {
        CHECK(rm.potential_estimate <= prev);
        prev = rm.potential_estimate;
    }
    CHECK(prev < r.initial_potential);
}

TEST_CASE("evaluation subset is a fixed sorted sample of the train split") {
    ClientState c;
    c.id = 2;
    for (std::size_t i = 0; i < 500; ++i) c.train.push_back(i * 2);
    const auto a = evaluation_subset(c, 256, 1);
    CHECK(a.size() == 256);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(a == evaluation_subset(c, 256, 1));
    CHECK(evaluation_subset(c, 1000, 1) == c.train);
}
