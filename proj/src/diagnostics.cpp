#include "onebit_fl/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "onebit_fl/error.hpp"
#include "onebit_fl/kernels.hpp"
#include "onebit_fl/server.hpp"

namespace onebit::diagnostics {

namespace {

double norm(std::span<const double> x) { return std::sqrt(kernels::active().dot(x.data(), x.data(), x.size())); }

void normalize(std::vector<double>& x) {
    const double nx = norm(x);
    if (nx > 0.0) kernels::active().scale(x.data(), 1.0 / nx, x.size());
}

std::vector<double> random_unit(std::size_t n, CounterRng& rng) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    normalize(x);
    return x;
}

std::vector<double> mean_sketch(std::span<const OneBitSketch> sketches) {
    const std::size_t m = sketches.front().m();
    std::vector<double> mean(m, 0.0);
    for (const auto& z : sketches) {
        if (z.m() != m) throw InvalidArgument("sketch dimension mismatch");
        for (std::size_t j = 0; j < m; ++j) mean[j] += z.sign(j);
    }
    for (auto& v : mean) v /= static_cast<double>(sketches.size());
    return mean;
}

}  // namespace

double smoothness_constant(double L_hat, const HyperParams& hp, const SketchOperator& op) {
    const double c_phi_sq = static_cast<double>(op.n_pad()) / static_cast<double>(op.m());
    return L_hat + hp.lambda * hp.gamma * c_phi_sq + hp.mu;
}

double estimate_task_smoothness(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                                std::span<const std::size_t> samples, CounterRng& rng, std::size_t iterations) {
    const std::size_t n = w.size();
    std::vector<double> v = random_unit(n, rng);
    std::vector<double> wp(n), wm(n), hv(n);
    const double eps = 1e-4 * std::max(1.0, norm(w));
    double lambda = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            wp[i] = w[i] + eps * v[i];
            wm[i] = w[i] - eps * v[i];
        }
        const auto gp = task_loss_and_grad(spec, wp, data, samples).grad;
        const auto gm = task_loss_and_grad(spec, wm, data, samples).grad;
        for (std::size_t i = 0; i < n; ++i) hv[i] = (gp[i] - gm[i]) / (2.0 * eps);
        lambda = kernels::active().dot(v.data(), hv.data(), n);
        const double nh = norm(hv);
        if (nh == 0.0) return 0.0;
        for (std::size_t i = 0; i < n; ++i) v[i] = hv[i] / nh;
    }
    return std::fabs(lambda);
}

double projection_gram_top_eigenvalue(const SketchOperator& op, CounterRng& rng, std::size_t iterations) {
    std::vector<double> v = random_unit(op.m(), rng);
    double lambda = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
        const auto u = op.forward(op.adjoint(v));
        lambda = kernels::active().dot(v.data(), u.data(), u.size());
        const double nu = norm(u);
        if (nu == 0.0) return 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = u[i] / nu;
    }
    return lambda;
}

GradientNoise estimate_gradient_noise(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                                      std::span<const std::size_t> samples, std::size_t batch_size,
                                      std::size_t probes, CounterRng& rng) {
    const auto full = task_loss_and_grad(spec, w, data, samples).grad;
    GradientNoise out;
    std::vector<std::size_t> pool(samples.begin(), samples.end());
    batch_size = std::min(batch_size, pool.size());
    for (std::size_t p = 0; p < probes; ++p) {
        // Partial Fisher-Yates for one batch without replacement.
        for (std::size_t i = 0; i < batch_size; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.uniform_below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        const auto g = task_loss_and_grad(spec, w, data, std::span(pool).first(batch_size)).grad;
        double dev = 0.0;
        double sq = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            dev += (g[i] - full[i]) * (g[i] - full[i]);
            sq += g[i] * g[i];
        }
        out.sigma_sq += dev;
        out.g_sq = std::max(out.g_sq, sq);
    }
    if (probes > 0) out.sigma_sq /= static_cast<double>(probes);
    return out;
}

double sampling_variance_bound(std::span<const OneBitSketch> sketches, std::size_t S) {
    const std::size_t K = sketches.size();
    if (K == 0) throw InvalidArgument("sampling_variance_bound: no sketches");
    if (S == 0 || S > K) throw InvalidArgument("sampling_variance_bound: need 1 <= S <= K");
    if (S == K || K == 1) return 0.0;
    const auto mean = mean_sketch(sketches);
    double spread = 0.0;
    for (const auto& z : sketches) {
        for (std::size_t j = 0; j < mean.size(); ++j) {
            const double d = z.sign(j) - mean[j];
            spread += d * d;
        }
    }
    const double k = static_cast<double>(K);
    const double s = static_cast<double>(S);
    return (k - s) / (s * k * (k - 1.0)) * spread;
}

SamplingVarianceReport sampling_variance_check(std::span<const OneBitSketch> sketches, std::size_t S,
                                               std::size_t trials, CounterRng& rng) {
    const std::size_t K = sketches.size();
    if (trials == 0) throw InvalidArgument("sampling_variance_check: need at least one trial");
    SamplingVarianceReport r;
    r.trials = trials;
    r.bound = sampling_variance_bound(sketches, S);
    const auto mean = mean_sketch(sketches);
    const std::size_t m = mean.size();
    std::vector<double> sample_mean(m);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto chosen = sample_clients(K, S, rng);
        std::fill(sample_mean.begin(), sample_mean.end(), 0.0);
        for (std::size_t k : chosen) {
            for (std::size_t j = 0; j < m; ++j) sample_mean[j] += sketches[k].sign(j);
        }
        double dev = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double d = sample_mean[j] / static_cast<double>(S) - mean[j];
            dev += d * d;
        }
        sum += dev;
        sum_sq += dev * dev;
    }
    const double n = static_cast<double>(trials);
    r.empirical = sum / n;
    const double var = trials > 1 ? std::max(0.0, (sum_sq - n * r.empirical * r.empirical) / (n - 1.0)) : 0.0;
    r.standard_error = std::sqrt(var / n);
    r.ratio = r.bound > 0.0 ? r.empirical / r.bound : (r.empirical == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
    const double slack = 3.0 * r.standard_error + 1e-12 * std::max(1.0, r.bound);
    r.within_three_se = std::fabs(r.empirical - r.bound) <= slack;
    return r;
}

double sampling_error_summand(std::span<const OneBitSketch> sketches, std::size_t S) {
    const std::size_t K = sketches.size();
    if (K == 0) throw InvalidArgument("sampling_error_summand: no sketches");
    const auto mean = mean_sketch(sketches);
    const double m = static_cast<double>(mean.size());
    for (const auto& z : sketches) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < mean.size(); ++j) {
            const double d = z.sign(j) - mean[j];
            d2 += d * d;
        }
        if (d2 > 4.0 * m + 1e-9) throw std::logic_error("sketch deviation exceeds 4m");
    }
    return 2.0 * std::sqrt(m) * std::sqrt(sampling_variance_bound(sketches, S));
}

double delta_max(const HyperParams& hp, const SketchOperator& op, double W_hat) {
    const double m = static_cast<double>(op.m());
    return 2.0 * hp.lambda * (std::sqrt(m) * op.scale() * W_hat + m);
}

ErrorTerms bound_error_terms(const HyperParams& hp, const SketchOperator& op, double W_hat,
                               std::span<const std::vector<OneBitSketch>> sketches_per_round, std::size_t S) {
    ErrorTerms out;
    out.delta_max = delta_max(hp, op, W_hat);
    if (sketches_per_round.empty()) return out;
    double total = 0.0;
    for (const auto& round : sketches_per_round) total += sampling_error_summand(round, S);
    out.E_S = total / static_cast<double>(sketches_per_round.size());
    return out;
}

double bounded_norm_ceiling(const HyperParams& hp, const SketchOperator& op, double g_sq, double w0_sq) {
    const double eta = hp.eta;
    const double mu = hp.mu;
    if (!(mu > 0.0) || !(eta < 1.0 / (3.0 * mu))) return std::numeric_limits<double>::infinity();
    // 1 - alpha and 1 - alpha^R are formed directly; alpha is within 1e-6 of 1
    // at typical settings and the naive subtraction loses most digits.
    const double one_minus_alpha = eta * mu * (1.0 - 3.0 * eta * mu);
    const double one_minus_alpha_R =
        -std::expm1(static_cast<double>(hp.local_steps) * std::log1p(-one_minus_alpha));
    const double cg = 2.0 * op.scale() * std::sqrt(static_cast<double>(op.m()));
    const double c_prime = (eta / mu + 3.0 * eta * eta) * g_sq + 3.0 * eta * eta * hp.lambda * hp.lambda * cg * cg;
    const double ceiling = c_prime / (one_minus_alpha * one_minus_alpha_R);
    return std::max(w0_sq, ceiling);
}

double stationarity_bound(const HyperParams& hp, double L_F, double psi0, double f_star, std::size_t T,
                          double sigma_sq, double delta_max_value, double E_S) {
    if (hp.eta > 1.0 / L_F || T == 0) return std::numeric_limits<double>::infinity();
    const double R = static_cast<double>(hp.local_steps);
    const double c1 = hp.eta * R * (1.0 - hp.eta * L_F / 2.0);
    return (psi0 - f_star) / (c1 * static_cast<double>(T)) + hp.eta * hp.eta * R * L_F * sigma_sq / (2.0 * c1) +
           delta_max_value / c1 + hp.lambda * E_S / c1;
}

double potential_lower_bound(const HyperParams& hp, const SketchOperator& op) {
    return -hp.lambda * static_cast<double>(op.m()) * std::numbers::ln2 / hp.gamma;
}

}  // namespace onebit::diagnostics
