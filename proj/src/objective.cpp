#include "onebit_fl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "onebit_fl/error.hpp"
#include "onebit_fl/kernels.hpp"
#include "onebit_fl/rng.hpp"

namespace onebit {

ModelSpec ModelSpec::linear(std::size_t dim) { return {ModelKind::linear_regression, {dim, 1}, Activation::relu}; }

ModelSpec ModelSpec::logistic(std::size_t dim, std::size_t classes) {
    return {ModelKind::logistic_regression, {dim, classes}, Activation::relu};
}

ModelSpec ModelSpec::mlp(std::vector<std::size_t> dims, Activation activation) {
    return {ModelKind::mlp, std::move(dims), activation};
}

std::size_t ModelSpec::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) n += layer_dims[l + 1] * (layer_dims[l] + 1);
    return n;
}

void ModelSpec::validate() const {
    if (layer_dims.size() < 2) throw ConfigError("model: need at least input and output dimensions");
    for (auto d : layer_dims) {
        if (d == 0) throw ConfigError("model: layer dimensions must be positive");
    }
    switch (kind) {
        case ModelKind::linear_regression:
            if (layer_dims.size() != 2 || layer_dims[1] != 1) throw ConfigError("linear model must be {d, 1}");
            break;
        case ModelKind::logistic_regression:
            if (layer_dims.size() != 2 || layer_dims[1] < 2) throw ConfigError("logistic model must be {d, C} with C >= 2");
            break;
        case ModelKind::mlp:
            if (layer_dims.size() < 3 || layer_dims.back() < 2) {
                throw ConfigError("mlp must have a hidden layer and C >= 2 outputs");
            }
            break;
    }
}

std::vector<std::string> HyperParams::validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("eta must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be non-negative");
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("mu must be non-negative");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be positive");
    if (local_steps == 0) throw ConfigError("R (local steps) must be positive");
    if (participants == 0) throw ConfigError("S (participants) must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    std::vector<std::string> warnings;
    if (mu > 0.0 && !(eta < 1.0 / (3.0 * mu))) {
        warnings.push_back("eta >= 1/(3 mu): the bounded model norm guarantee does not apply");
    }
    return warnings;
}

std::vector<double> init_parameters(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::vector<double> w(spec.parameter_count(), 0.0);
    if (spec.kind != ModelKind::mlp) return w;
    auto rng = CounterRng::derive(seed, Stream::model_init);
    std::size_t offset = 0;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const std::size_t in = spec.layer_dims[l];
        const std::size_t out = spec.layer_dims[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        for (std::size_t i = 0; i < in * out; ++i) w[offset + i] = (2.0 * rng.uniform01() - 1.0) * limit;
        offset += in * out + out;
    }
    return w;
}

namespace {

/// Per-thread scratch for one forward/backward pass through the network.
class Network {
public:
    Network(const ModelSpec& spec, std::span<const double> w) : spec_(spec), w_(w), k_(kernels::active()) {
        spec.validate();
        if (w.size() != spec.parameter_count()) {
            throw InvalidArgument("parameter vector has length " + std::to_string(w.size()) + ", model expects " +
                                  std::to_string(spec.parameter_count()));
        }
        const std::size_t layers = spec.layer_count();
        acts_.resize(layers + 1);
        deltas_.resize(layers + 1);
        offsets_.resize(layers);
        std::size_t offset = 0;
        for (std::size_t l = 0; l < layers; ++l) {
            offsets_[l] = offset;
            offset += spec.layer_dims[l + 1] * (spec.layer_dims[l] + 1);
        }
        for (std::size_t l = 1; l <= layers; ++l) {
            acts_[l].resize(spec.layer_dims[l]);
            deltas_[l].resize(spec.layer_dims[l]);
        }
        deltas_[0].resize(spec.layer_dims[0]);
    }

    /// Forward pass; returns the output layer (logits or regression output).
    std::span<const double> forward(std::span<const double> x) {
        const std::size_t layers = spec_.layer_count();
        acts_[0].assign(x.begin(), x.end());
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = spec_.layer_dims[l];
            const std::size_t out = spec_.layer_dims[l + 1];
            const double* W = w_.data() + offsets_[l];
            const double* b = W + in * out;
            auto& a = acts_[l + 1];
            const bool hidden = l + 1 < layers;
            for (std::size_t o = 0; o < out; ++o) {
                double z = k_.dot(W + o * in, acts_[l].data(), in) + b[o];
                if (hidden) z = spec_.activation == Activation::relu ? std::max(z, 0.0) : std::tanh(z);
                a[o] = z;
            }
            for (double v : a) {
                if (!std::isfinite(v)) {
                    throw NumericError("non-finite activation in layer " + std::to_string(l), l);
                }
            }
        }
        return acts_[layers];
    }

    /// Sample loss for the last forward pass; fills deltas_.back() with
    /// d loss / d output.
    double loss_and_output_delta(double target) {
        const auto& out = acts_.back();
        auto& delta = deltas_.back();
        if (spec_.kind == ModelKind::linear_regression) {
            const double r = out[0] - target;
            delta[0] = r;
            return 0.5 * r * r;
        }
        const auto cls = class_index(target);
        const double peak = *std::max_element(out.begin(), out.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < out.size(); ++c) {
            delta[c] = std::exp(out[c] - peak);
            sum += delta[c];
        }
        const double lse = peak + std::log(sum);
        for (std::size_t c = 0; c < out.size(); ++c) delta[c] /= sum;
        delta[cls] -= 1.0;
        return lse - out[cls];
    }

    double loss_only(double target) {
        const auto& out = acts_.back();
        if (spec_.kind == ModelKind::linear_regression) {
            const double r = out[0] - target;
            return 0.5 * r * r;
        }
        const auto cls = class_index(target);
        const double peak = *std::max_element(out.begin(), out.end());
        double sum = 0.0;
        for (double z : out) sum += std::exp(z - peak);
        return peak + std::log(sum) - out[cls];
    }

    /// Accumulates d loss / d w for the last forward pass into grad.
    void backward(std::span<double> grad) {
        const std::size_t layers = spec_.layer_count();
        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = spec_.layer_dims[l];
            const std::size_t out = spec_.layer_dims[l + 1];
            const double* W = w_.data() + offsets_[l];
            double* gW = grad.data() + offsets_[l];
            double* gb = gW + in * out;
            const auto& delta = deltas_[l + 1];
            for (std::size_t o = 0; o < out; ++o) {
                if (delta[o] == 0.0) continue;
                k_.axpy(gW + o * in, delta[o], acts_[l].data(), in);
                gb[o] += delta[o];
            }
            if (l == 0) break;
            auto& prev = deltas_[l];
            std::fill(prev.begin(), prev.end(), 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                if (delta[o] != 0.0) k_.axpy(prev.data(), delta[o], W + o * in, in);
            }
            const auto& a = acts_[l];
            if (spec_.activation == Activation::relu) {
                for (std::size_t i = 0; i < in; ++i) {
                    if (a[i] <= 0.0) prev[i] = 0.0;
                }
            } else {
                for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - a[i] * a[i];
            }
        }
    }

private:
    std::size_t class_index(double target) const {
        const std::size_t classes = spec_.output_dim();
        if (!(target >= 0.0) || target != std::floor(target) || target >= static_cast<double>(classes)) {
            throw InvalidArgument("class label " + std::to_string(target) + " outside [0, " +
                                  std::to_string(classes) + ")");
        }
        return static_cast<std::size_t>(target);
    }

    const ModelSpec& spec_;
    std::span<const double> w_;
    const kernels::KernelTable& k_;
    std::vector<std::vector<double>> acts_;
    std::vector<std::vector<double>> deltas_;
    std::vector<std::size_t> offsets_;
};

void check_features(const ModelSpec& spec, const Dataset& data) {
    if (data.dim != spec.input_dim()) {
        throw InvalidArgument("feature dimension " + std::to_string(data.dim) + " does not match model input " +
                              std::to_string(spec.input_dim()));
    }
}

}  // namespace

LossAndGrad task_loss_and_grad(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                               std::span<const std::size_t> batch) {
    if (batch.empty()) throw InvalidArgument("task_loss_and_grad: empty batch");
    check_features(spec, data);
    Network net(spec, w);
    LossAndGrad out;
    out.grad.assign(w.size(), 0.0);
    double total = 0.0;
    for (std::size_t idx : batch) {
        net.forward(data.row(idx));
        total += net.loss_and_output_delta(data.targets[idx]);
        net.backward(out.grad);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    out.loss = total * inv;
    kernels::active().scale(out.grad.data(), inv, out.grad.size());
    if (!std::isfinite(out.loss)) throw NumericError("non-finite task loss", spec.layer_count() - 1);
    return out;
}

double task_loss(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                 std::span<const std::size_t> samples) {
    if (samples.empty()) throw InvalidArgument("task_loss: empty sample set");
    check_features(spec, data);
    Network net(spec, w);
    double total = 0.0;
    for (std::size_t idx : samples) {
        net.forward(data.row(idx));
        total += net.loss_only(data.targets[idx]);
    }
    const double loss = total / static_cast<double>(samples.size());
    if (!std::isfinite(loss)) throw NumericError("non-finite task loss", spec.layer_count() - 1);
    return loss;
}

double accuracy(const ModelSpec& spec, std::span<const double> w, const Dataset& data,
                std::span<const std::size_t> samples) {
    if (!spec.is_classifier() || samples.empty()) return 0.0;
    check_features(spec, data);
    Network net(spec, w);
    std::size_t correct = 0;
    for (std::size_t idx : samples) {
        const auto out = net.forward(data.row(idx));
        const auto best = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
        if (static_cast<double>(best) == data.targets[idx]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------

double saturated_tanh(double x) noexcept {
    if (x > 20.0) return 1.0;
    if (x < -20.0) return -1.0;
    return std::tanh(x);
}

double log_cosh(double x) noexcept {
    const double a = std::fabs(x);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

double logcosh_surrogate(std::span<const double> z, double gamma) {
    if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
    double sum = 0.0;
    for (double zi : z) sum += log_cosh(gamma * zi);
    return sum / gamma;
}

double sign_regularizer(std::span<const double> z, const ConsensusVector& v, double gamma) {
    if (z.size() != v.m()) throw InvalidArgument("sign_regularizer: dimension mismatch");
    double inner = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) inner += v[i] * z[i];
    return logcosh_surrogate(z, gamma) - inner;
}

Gradient regularizer_grad(const SketchOperator& op, std::span<const double> w, const ConsensusVector& v,
                          double gamma) {
    if (v.m() != op.m()) throw InvalidArgument("regularizer_grad: consensus has dimension " + std::to_string(v.m()) +
                                               ", operator expects " + std::to_string(op.m()));
    std::vector<double> scratch;
    std::vector<double> z(op.m());
    op.forward(w, z, scratch);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = saturated_tanh(gamma * z[i]) - v[i];
    Gradient g(op.n());
    op.adjoint(z, g, scratch);
    return g;
}

double client_objective(const ModelSpec& spec, const SketchOperator& op, std::span<const double> w,
                        const ConsensusVector& v, const HyperParams& hp, const Dataset& data,
                        std::span<const std::size_t> samples) {
    double value = task_loss(spec, w, data, samples);
    if (hp.lambda != 0.0) value += hp.lambda * sign_regularizer(op.forward(w), v, hp.gamma);
    if (hp.mu != 0.0) {
        const double sq = kernels::active().dot(w.data(), w.data(), w.size());
        value += 0.5 * hp.mu * sq;
    }
    return value;
}

LossAndGrad client_grad(const ModelSpec& spec, const SketchOperator& op, std::span<const double> w,
                        const ConsensusVector& v, const HyperParams& hp, const Dataset& data,
                        std::span<const std::size_t> batch) {
    LossAndGrad out = task_loss_and_grad(spec, w, data, batch);
    const auto& k = kernels::active();
    if (hp.lambda != 0.0) {
        const Gradient reg = regularizer_grad(op, w, v, hp.gamma);
        k.axpy(out.grad.data(), hp.lambda, reg.data(), reg.size());
    }
    if (hp.mu != 0.0) k.axpy(out.grad.data(), hp.mu, w.data(), w.size());
    for (double g : out.grad) {
        if (!std::isfinite(g)) throw NumericError("non-finite client gradient");
    }
    return out;
}

}  // namespace onebit
