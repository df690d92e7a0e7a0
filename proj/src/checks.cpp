#include "onebit_fl/checks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "onebit_fl/data.hpp"
#include "onebit_fl/diagnostics.hpp"
#include "onebit_fl/federation.hpp"
#include "onebit_fl/kernels.hpp"
#include "onebit_fl/server.hpp"

namespace onebit::diagnostics {
namespace {

CheckResult at_most(std::string name, double measured, double bound, std::string note = {}) {
    return {std::move(name), "<=", measured <= bound, measured, bound, std::move(note)};
}

CheckResult close_to(std::string name, double measured, double target, double rel_tol, std::string note = {}) {
    const bool ok = std::fabs(measured - target) <= rel_tol * std::max(1.0, std::fabs(target));
    return {std::move(name), "~=", ok, measured, target, std::move(note)};
}

double dot(std::span<const double> a, std::span<const double> b) {
    return kernels::active().dot(a.data(), b.data(), a.size());
}

CheckResult check_spectral_norm(std::uint64_t seed) {
    // n a power of two, so Phi has no truncation and Phi Phi^T = (n/m) I.
    SketchOperator op(seed, 256, 40);
    auto rng = CounterRng::derive(seed, Stream::diagnostics, 1);
    const double top = projection_gram_top_eigenvalue(op, rng, 200);
    return close_to("spectral_norm", top, op.scale() * op.scale(), 1e-6, "top eigenvalue of Phi Phi^T vs n_pad/m");
}

CheckResult check_spectral_norm_truncated(std::uint64_t seed) {
    SketchOperator op(seed, 200, 30);
    auto rng = CounterRng::derive(seed, Stream::diagnostics, 2);
    const double top = projection_gram_top_eigenvalue(op, rng, 200);
    const double bound = op.scale() * op.scale();
    return at_most("spectral_norm_truncated", top, bound * (1.0 + 1e-9),
                   "n not a power of two: zero padding can only shrink the norm");
}

CheckResult check_adjoint(std::uint64_t seed) {
    auto rng = CounterRng::derive(seed, Stream::diagnostics, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 3 + rng.uniform_below(1000);
        const std::size_t m = 1 + rng.uniform_below(next_pow2(n));
        SketchOperator op(rng.next(), n, m);
        std::vector<double> w(n), v(m);
        for (auto& x : w) x = rng.normal();
        for (auto& x : v) x = rng.normal();
        const auto pw = op.forward(w);
        const auto ptv = op.adjoint(v);
        const double denom = std::sqrt(dot(pw, pw) * dot(v, v));
        if (denom > 0.0) worst = std::max(worst, std::fabs(dot(pw, v) - dot(w, ptv)) / denom);
    }
    return at_most("adjoint_identity", worst, 1e-10, "max relative |<Phi w, v> - <w, Phi^T v>| over 20 operators");
}

CheckResult check_smoothness_formula(std::uint64_t seed) {
    SketchOperator op(seed, 8, 2);  // n_pad / m = 4
    HyperParams hp;
    hp.lambda = 1.0;
    hp.gamma = 1.0;
    hp.mu = 0.0;
    return close_to("smoothness_formula", smoothness_constant(1.0, hp, op), 5.0, 1e-15,
                    "L_F = L_hat + lambda gamma C_Phi^2 + mu at L_hat=1, lambda=gamma=1, C_Phi^2=4");
}

CheckResult check_smoothness_estimate(std::uint64_t seed) {
    // Squared loss: the Hessian is the second moment of [x, 1], independent of w.
    const std::size_t d = 6;
    const std::size_t N = 200;
    auto rng = CounterRng::derive(seed, Stream::diagnostics, 4);
    Dataset data;
    data.dim = d;
    std::vector<double> x(d);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < d; ++j) x[j] = rng.normal() * static_cast<double>(j + 1) * 0.5;
        data.append(x, rng.normal());
    }
    std::vector<double> H((d + 1) * (d + 1), 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const auto r = data.row(i);
        for (std::size_t a = 0; a <= d; ++a) {
            for (std::size_t b = 0; b <= d; ++b) {
                H[a * (d + 1) + b] += (a < d ? r[a] : 1.0) * (b < d ? r[b] : 1.0) / static_cast<double>(N);
            }
        }
    }
    std::vector<double> v(d + 1, 1.0), u(d + 1);
    double analytic = 0.0;
    for (int it = 0; it < 2000; ++it) {
        for (std::size_t a = 0; a <= d; ++a) {
            u[a] = 0.0;
            for (std::size_t b = 0; b <= d; ++b) u[a] += H[a * (d + 1) + b] * v[b];
        }
        analytic = dot(v, u) / dot(v, v);
        const double nu = std::sqrt(dot(u, u));
        for (std::size_t a = 0; a <= d; ++a) v[a] = u[a] / nu;
    }
    std::vector<std::size_t> all(N);
    for (std::size_t i = 0; i < N; ++i) all[i] = i;
    const auto spec = ModelSpec::linear(d);
    std::vector<double> w(spec.parameter_count(), 0.1);
    const double estimate = estimate_task_smoothness(spec, w, data, all, rng, 200);
    return close_to("task_smoothness_estimate", estimate, analytic, 0.05,
                    "matrix-free estimate vs analytic top Hessian eigenvalue of a quadratic");
}

CheckResult check_aggregation(std::uint64_t seed) {
    auto rng = CounterRng::derive(seed, Stream::diagnostics, 5);
    double worst_gap = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t m = 1 + rng.uniform_below(10);
        const std::size_t K = 2 + rng.uniform_below(6);
        std::vector<OneBitSketch> zs;
        std::vector<WeightedSketch> ws;
        zs.reserve(K);
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<int> s(m);
            for (auto& e : s) e = rng.coin() ? 1 : -1;
            zs.push_back(OneBitSketch::from_signs(s));
        }
        for (std::size_t k = 0; k < K; ++k) ws.push_back({std::cref(zs[k]), inst % 2 ? 1.0 : 0.1 + rng.uniform01()});
        const auto v = aggregate(ws);
        // sum_k p_k g(v, z_k) = const - (1/2) <v, sum_k p_k z_k>, so compare alignments.
        double best = -std::numeric_limits<double>::infinity();
        for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
            std::vector<std::int8_t> cand(m);
            for (std::size_t j = 0; j < m; ++j) cand[j] = (mask >> j) & 1u ? 1 : -1;
            best = std::max(best, consensus_alignment(ConsensusVector(cand), ws));
        }
        const double got = consensus_alignment(v, ws);
        worst_gap = std::max(worst_gap, best - got);
        // Every +-1 completion of the zero coordinates must be co-optimal.
        std::vector<std::size_t> zeros;
        for (std::size_t j = 0; j < m; ++j) {
            if (v[j] == 0) zeros.push_back(j);
        }
        for (std::uint32_t mask = 0; mask < (1u << zeros.size()); ++mask) {
            std::vector<std::int8_t> cand(v.entries().begin(), v.entries().end());
            for (std::size_t i = 0; i < zeros.size(); ++i) cand[zeros[i]] = (mask >> i) & 1u ? 1 : -1;
            worst_gap = std::max(worst_gap, best - consensus_alignment(ConsensusVector(cand), ws));
        }
    }
    return at_most("aggregation_optimality", worst_gap, 1e-12,
                   "max gap to the brute-force optimum over 50 instances, ties certified co-optimal");
}

CheckResult check_sampling_variance(std::uint64_t seed) {
    auto rng = CounterRng::derive(seed, Stream::diagnostics, 6);
    std::vector<OneBitSketch> zs;
    for (int k = 0; k < 20; ++k) {
        std::vector<int> s(64);
        for (auto& e : s) e = rng.uniform01() < 0.3 + 0.02 * k ? 1 : -1;
        zs.push_back(OneBitSketch::from_signs(s));
    }
    const auto r = sampling_variance_check(zs, 5, 20000, rng);
    CheckResult c{"sampling_variance", "~=", r.within_three_se, r.empirical, r.bound,
                  "Monte Carlo mean within 3 standard errors of the closed form (K=20, S=5)"};
    return c;
}

void convergence_checks(const CheckOptions& opt, std::vector<CheckResult>& out) {
    SyntheticSpec data_spec;
    data_spec.clients = 10;
    data_spec.samples_per_client = 200;
    data_spec.dim = 20;
    data_spec.seed = opt.seed;
    const auto fed = federate(generate_synthetic(data_spec).clients, 0.2, opt.seed, 2);

    FederationConfig cfg;
    cfg.model = ModelSpec::logistic(data_spec.dim, 2);
    cfg.seed = opt.seed;
    cfg.hp.participants = 5;
    cfg.hp.rounds = opt.rounds;
    cfg.hp.batch_size = 32;
    cfg.potential = PotentialMode::exact;
    cfg.m_ratio = 0.25;

    const std::size_t n = cfg.model.parameter_count();
    const SketchOperator op(sketch_seed(cfg.seed), n, sketch_dimension(n, cfg.m_ratio));
    auto rng = CounterRng::derive(opt.seed, Stream::diagnostics, 7);
    const auto w0 = init_parameters(cfg.model, cfg.seed);
    double L_hat = 0.0;
    for (const auto& c : fed.clients) {
        L_hat = std::max(L_hat, estimate_task_smoothness(cfg.model, w0, fed.data, c.train, rng, 50));
    }
    // Step size inside the descent regime eta <= 1/L_F.
    cfg.hp.eta = 0.5 / smoothness_constant(L_hat, cfg.hp, op);
    const double L_F = smoothness_constant(L_hat, cfg.hp, op);

    const auto result = run(cfg, fed);
    const double psi_T = result.rounds.empty() ? result.initial_potential : result.rounds.back().potential_estimate;
    out.push_back({"potential_descent", "<", psi_T < result.initial_potential, psi_T, result.initial_potential,
                   "Psi^T vs Psi^0 on a synthetic logistic task"});

    double sigma_sq = 0.0;
    double g_sq = result.max_task_grad_sq;
    for (const auto& c : result.clients) {
        const auto noise = estimate_gradient_noise(cfg.model, c.w, fed.data, c.train, cfg.hp.batch_size, 50, rng);
        sigma_sq = std::max(sigma_sq, noise.sigma_sq);
        g_sq = std::max(g_sq, noise.g_sq);
    }
    const double W_sq = bounded_norm_ceiling(cfg.hp, op, g_sq, result.w0_sq);
    out.push_back(at_most("bounded_model_norm", result.max_sq_norm, W_sq,
                          "max ||w_k^t||^2 vs W^2 built from the estimated G"));

    const double K = static_cast<double>(fed.clients.size());
    const double S = static_cast<double>(cfg.hp.participants);
    const double m = static_cast<double>(op.m());
    out.push_back(at_most("sampling_error_term", result.E_S, 4.0 * m * std::sqrt((K - S) / (S * (K - 1.0))),
                          "E_S vs its worst case with ||z_k - z_bar||^2 <= 4m"));

    double mean_grad = 0.0;
    double delta = 0.0;
    for (const auto& r : result.rounds) {
        mean_grad += r.grad_norm_sq;
        delta = std::max(delta, r.delta_max);
    }
    if (!result.rounds.empty()) mean_grad /= static_cast<double>(result.rounds.size());
    const double rhs = stationarity_bound(cfg.hp, L_F, result.initial_potential, potential_lower_bound(cfg.hp, op),
                                          cfg.hp.rounds, sigma_sq, delta, result.E_S);
    out.push_back(at_most("stationarity_bound", mean_grad, rhs,
                          "mean sum_k p_k ||grad F~_k||^2 vs the convergence bound with measured constants"));
}

}  // namespace

std::vector<CheckResult> run_check_suite(const CheckOptions& options) {
    std::vector<CheckResult> out;
    out.push_back(check_adjoint(options.seed));
    out.push_back(check_spectral_norm(options.seed));
    out.push_back(check_spectral_norm_truncated(options.seed));
    out.push_back(check_smoothness_formula(options.seed));
    out.push_back(check_smoothness_estimate(options.seed));
    out.push_back(check_aggregation(options.seed));
    out.push_back(check_sampling_variance(options.seed));
    convergence_checks(options, out);
    return out;
}

nlohmann::ordered_json checks_to_json(std::span<const CheckResult> results) {
    nlohmann::ordered_json j;
    bool all = true;
    auto& list = j["checks"] = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        all = all && r.pass;
        list.push_back({{"name", r.name},
                        {"pass", r.pass},
                        {"measured", r.measured},
                        {"relation", r.relation},
                        {"bound", r.bound},
                        {"note", r.note}});
    }
    j["all_pass"] = all;
    j["basis"] = "empirical means over sampled randomness";
    return j;
}

}  // namespace onebit::diagnostics
