#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "onebit_fl/data.hpp"
#include "onebit_fl/objective.hpp"
#include "onebit_fl/rng.hpp"
#include "onebit_fl/sketch.hpp"

namespace onebit {

struct ClientState {
    std::size_t id = 0;
    std::vector<double> w;
    double weight = 0.0;  // p_k
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    CounterRng rng;
};

/// Shuffle-once-per-epoch mini-batch cycling over a fixed index pool. Each
/// batch is drawn without replacement; when fewer than batch_size unused
/// indices remain the pool is reshuffled and the remainder dropped.
class BatchSampler {
public:
    BatchSampler(std::span<const std::size_t> pool, std::size_t batch_size, CounterRng& rng);
    std::span<const std::size_t> next();

private:
    std::vector<std::size_t> order_;
    std::size_t batch_size_;
    std::size_t cursor_;
    CounterRng& rng_;
};

struct LocalStats {
    std::size_t steps = 0;
    /// Largest squared norm of a mini-batch task gradient seen (feeds the G estimate).
    double max_task_grad_sq = 0.0;
};

struct ClientUpdateResult {
    OneBitSketch sketch;
    ClientState state;
    LocalStats stats;
};

/// R steps of w <- w - eta * client_grad(w; v, batch), then the sketch
/// sign(Phi w). The state's RNG advances deterministically. NumericError
/// from any step is rethrown with the client id attached.
ClientUpdateResult client_update(ClientState state, const ConsensusVector& v, const SketchOperator& op,
                                 const ModelSpec& spec, const HyperParams& hp, const Dataset& data);

/// R steps on the task loss plus (mu/2)||w||^2 only; shared by the FedAvg
/// and local-only baselines.
LocalStats local_sgd(ClientState& state, const ModelSpec& spec, const HyperParams& hp, const Dataset& data);

}  // namespace onebit
