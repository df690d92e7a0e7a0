#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "onebit_fl/data.hpp"
#include "onebit_fl/sketch.hpp"

namespace onebit {

enum class ModelKind { linear_regression, logistic_regression, mlp };
enum class Activation { tanh, relu };

/// A stack of affine layers; layer l maps layer_dims[l] -> layer_dims[l+1].
///
/// Flattening order is layer-major, weights before biases: for each layer
/// the out x in weight matrix in row-major order, then its out biases.
///
///   linear_regression   {d, 1}          squared error 0.5 * (y_hat - y)^2
///   logistic_regression {d, C}, C >= 2  softmax cross-entropy
///   mlp                 {d, h..., C}    hidden activation, softmax cross-entropy
struct ModelSpec {
    ModelKind kind = ModelKind::logistic_regression;
    std::vector<std::size_t> layer_dims;
    Activation activation = Activation::relu;

    static ModelSpec linear(std::size_t dim);
    static ModelSpec logistic(std::size_t dim, std::size_t classes = 2);
    static ModelSpec mlp(std::vector<std::size_t> dims, Activation activation = Activation::relu);

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }
    std::size_t layer_count() const { return layer_dims.size() - 1; }
    bool is_classifier() const { return kind != ModelKind::linear_regression; }
    std::size_t parameter_count() const;
    /// Throws ConfigError on an inconsistent layout.
    void validate() const;
};

struct HyperParams {
    double eta = 0.05;         // learning rate
    double lambda = 0.0005;    // sign-alignment strength
    double mu = 0.00001;       // l2 penalty
    double gamma = 10000.0;    // log-cosh smoothing
    std::size_t local_steps = 5;
    std::size_t rounds = 100;
    std::size_t participants = 20;
    std::size_t batch_size = 32;

    /// Throws ConfigError on a hard violation; returns soft warnings, e.g.
    /// eta >= 1/(3 mu), which voids the bounded-model-norm guarantee.
    std::vector<std::string> validate() const;
};

using Gradient = std::vector<double>;

struct LossAndGrad {
    double loss = 0.0;
    Gradient grad;
};

/// Parameters for round 0: zeros for linear/logistic models, Glorot-uniform
/// weights with zero biases for an MLP.
std::vector<double> init_parameters(const ModelSpec& spec, std::uint64_t seed);

/// Mean per-sample loss and gradient over `batch`. Throws NumericError with
/// the offending layer index if a forward pass produces NaN/Inf.
LossAndGrad task_loss_and_grad(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                               std::span<const std::size_t> batch);
double task_loss(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                 std::span<const std::size_t> samples);
/// Top-1 accuracy in [0, 1]; 0 for regression models and empty sample sets.
double accuracy(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                std::span<const std::size_t> samples);

/// tanh with exact +-1 for |x| > 20.
double saturated_tanh(double x) noexcept;
/// log(cosh(x)) = |x| + log1p(exp(-2|x|)) - log 2, finite for all finite x.
double log_cosh(double x) noexcept;

/// h_gamma(z) = (1/gamma) * sum_i log cosh(gamma z_i).
double logcosh_surrogate(std::span<const double> z, double gamma);

/// Smoothed sign regularizer g~(v, z) = h_gamma(z) - <v, z>, with z = Phi w.
double sign_regularizer(std::span<const double> z, const ConsensusVector& v, double gamma);

/// Phi^T (tanh(gamma Phi w) - v).
Gradient regularizer_grad(const SketchOperator& op, std::span<const double> w, const ConsensusVector& v,
                          double gamma);

/// F~_k(w; v) = f(w) + lambda * g~(v, Phi w) + (mu/2) ||w||^2, with f the mean
/// task loss over `samples`.
double client_objective(const ModelSpec& spec, const SketchOperator& op, std::span<const double> w,
                        const ConsensusVector& v, const HyperParams& hp, const Dataset& data,
                        std::span<const std::size_t> samples);

/// grad f(w; batch) + lambda * regularizer_grad + mu * w. `loss` is the task
/// loss on the batch. Terms with a zero coefficient are skipped entirely.
LossAndGrad client_grad(const ModelSpec& spec, const SketchOperator& op, std::span<const double> w,
                        const ConsensusVector& v, const HyperParams& hp, const Dataset& data,
                        std::span<const std::size_t> batch);

}  // namespace onebit
