#include "onebit_fl/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "onebit_fl/error.hpp"
#include "onebit_fl/kernels.hpp"

namespace onebit {

BatchSampler::BatchSampler(std::span<const std::size_t> pool, std::size_t batch_size, CounterRng& rng)
    : order_(pool.begin(), pool.end()), batch_size_(batch_size), cursor_(0), rng_(rng) {
    if (batch_size == 0 || batch_size > order_.size()) {
        throw ConfigError("batch size " + std::to_string(batch_size) + " must lie in [1, " +
                          std::to_string(order_.size()) + "]");
    }
    rng_.shuffle(std::span<std::size_t>(order_));
}

std::span<const std::size_t> BatchSampler::next() {
    if (cursor_ + batch_size_ > order_.size()) {
        rng_.shuffle(std::span<std::size_t>(order_));
        cursor_ = 0;
    }
    const std::span<const std::size_t> batch(order_.data() + cursor_, batch_size_);
    cursor_ += batch_size_;
    return batch;
}

namespace {

template <typename GradFn>
LocalStats run_local_steps(ClientState& state, const HyperParams& hp, GradFn&& grad_fn) {
    LocalStats stats;
    if (hp.local_steps == 0) return stats;
    BatchSampler sampler(state.train, hp.batch_size, state.rng);
    const auto& k = kernels::active();
    for (std::size_t r = 0; r < hp.local_steps; ++r) {
        const auto batch = sampler.next();
        const Gradient g = grad_fn(batch, stats);
        k.axpy(state.w.data(), -hp.eta, g.data(), g.size());
        ++stats.steps;
    }
    for (double x : state.w) {
        if (!std::isfinite(x)) throw NumericError("client " + std::to_string(state.id) + ": non-finite parameters");
    }
    return stats;
}

}  // namespace

ClientUpdateResult client_update(ClientState state, const ConsensusVector& v, const SketchOperator& op,
                                 const ModelSpec& spec, const HyperParams& hp, const Dataset& data) {
    if (v.m() != op.m()) throw InvalidArgument("client_update: consensus dimension does not match operator");
    if (state.w.size() != op.n()) throw InvalidArgument("client_update: model dimension does not match operator");
    LocalStats stats;
    try {
        stats = run_local_steps(state, hp, [&](std::span<const std::size_t> batch, LocalStats& s) {
            LossAndGrad task = task_loss_and_grad(spec, state.w, data, batch);
            const auto& k = kernels::active();
            s.max_task_grad_sq = std::max(s.max_task_grad_sq, k.dot(task.grad.data(), task.grad.data(), task.grad.size()));
            if (hp.lambda != 0.0) {
                const Gradient reg = regularizer_grad(op, state.w, v, hp.gamma);
                k.axpy(task.grad.data(), hp.lambda, reg.data(), reg.size());
            }
            if (hp.mu != 0.0) k.axpy(task.grad.data(), hp.mu, state.w.data(), state.w.size());
            return std::move(task.grad);
        });
    } catch (const NumericError& e) {
        throw NumericError("client " + std::to_string(state.id) + ": " + e.what(), e.layer(), state.id);
    }
    OneBitSketch sketch = quantize(op.forward(state.w));
    return {std::move(sketch), std::move(state), stats};
}

LocalStats local_sgd(ClientState& state, const ModelSpec& spec, const HyperParams& hp, const Dataset& data) {
    try {
        return run_local_steps(state, hp, [&](std::span<const std::size_t> batch, LocalStats& s) {
            LossAndGrad task = task_loss_and_grad(spec, state.w, data, batch);
            const auto& k = kernels::active();
            s.max_task_grad_sq = std::max(s.max_task_grad_sq, k.dot(task.grad.data(), task.grad.data(), task.grad.size()));
            if (hp.mu != 0.0) k.axpy(task.grad.data(), hp.mu, state.w.data(), state.w.size());
            return std::move(task.grad);
        });
    } catch (const NumericError& e) {
        throw NumericError("client " + std::to_string(state.id) + ": " + e.what(), e.layer(), state.id);
    }
}

}  // namespace onebit
