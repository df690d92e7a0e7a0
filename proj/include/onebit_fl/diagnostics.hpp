#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "onebit_fl/data.hpp"
#include "onebit_fl/objective.hpp"
#include "onebit_fl/rng.hpp"
#include "onebit_fl/sketch.hpp"

namespace onebit::diagnostics {

/// L_F = L_hat + lambda * gamma * C_Phi^2 + mu, with C_Phi^2 = n_pad / m.
double smoothness_constant(double L_hat, const HyperParams& hp, const SketchOperator& op);

/// Largest Hessian eigenvalue of the mean task loss over `samples` at w,
/// by power iteration on central-difference Hessian-vector products.
double estimate_task_smoothness(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                                std::span<const std::size_t> samples, CounterRng& rng, std::size_t iterations = 50);

/// Largest eigenvalue of Phi Phi^T by power iteration (Phi applied matrix-free).
double projection_gram_top_eigenvalue(const SketchOperator& op, CounterRng& rng, std::size_t iterations = 100);

/// Mini-batch gradient statistics at w: sigma^2 = E||g_B - g||^2 and
/// G^2 = max over probes of ||g_B||^2, both from `probes` random batches.
struct GradientNoise {
    double sigma_sq = 0.0;
    double g_sq = 0.0;
};
GradientNoise estimate_gradient_noise(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                                      std::span<const std::size_t> samples, std::size_t batch_size,
                                      std::size_t probes, CounterRng& rng);

/// (K - S) / (S K (K - 1)) * sum_k ||z_k - z_bar||^2 with z_bar the plain mean.
/// Zero when S = K or K = 1.
double sampling_variance_bound(std::span<const OneBitSketch> sketches, std::size_t S);

struct SamplingVarianceReport {
    double empirical = 0.0;       // Monte Carlo mean of ||mean_S z - z_bar||^2
    double standard_error = 0.0;  // of the Monte Carlo mean
    double bound = 0.0;
    double ratio = 0.0;           // empirical / bound (1 when both vanish)
    std::size_t trials = 0;
    bool within_three_se = false;
};

SamplingVarianceReport sampling_variance_check(std::span<const OneBitSketch> sketches, std::size_t S,
                                               std::size_t trials, CounterRng& rng);

/// 2 sqrt(m) * sqrt(sampling_variance_bound(...)): one round's contribution to E_S.
/// Also asserts ||z_k - z_bar||^2 <= 4m for every client.
double sampling_error_summand(std::span<const OneBitSketch> sketches, std::size_t S);

/// 2 lambda (sqrt(m) C_Phi W_hat + m).
double delta_max(const HyperParams& hp, const SketchOperator& op, double W_hat);

struct ErrorTerms {
    double delta_max = 0.0;
    double E_S = 0.0;
};

/// E_S is the mean of sampling_error_summand over the rounds given.
ErrorTerms bound_error_terms(const HyperParams& hp, const SketchOperator& op, double W_hat,
                               std::span<const std::vector<OneBitSketch>> sketches_per_round, std::size_t S);

/// W^2 = max(||w0||^2, C' / ((1 - alpha)(1 - alpha^R))) with
/// alpha = 1 - eta mu (1 - 3 eta mu) and
/// C' = (eta/mu + 3 eta^2) G^2 + 3 eta^2 lambda^2 (2 C_Phi sqrt(m))^2.
/// Infinite when mu = 0 or eta >= 1/(3 mu) (no bound applies).
double bounded_norm_ceiling(const HyperParams& hp, const SketchOperator& op, double g_sq, double w0_sq);

/// Right-hand side of the stationarity bound:
/// (Psi0 - F*)/(c1 T) + eta^2 R L_F sigma^2/(2 c1) + Delta_max/c1 + lambda E_S/c1,
/// c1 = eta R (1 - eta L_F / 2). Infinite when eta > 1/L_F.
double stationarity_bound(const HyperParams& hp, double L_F, double psi0, double f_star, std::size_t T,
                          double sigma_sq, double delta_max_value, double E_S);

/// Lower bound of the potential: f >= 0 and g~ >= -m ln2 / gamma.
double potential_lower_bound(const HyperParams& hp, const SketchOperator& op);

}  // namespace onebit::diagnostics
