#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "onebit_fl/client.hpp"
#include "onebit_fl/data.hpp"
#include "onebit_fl/objective.hpp"
#include "onebit_fl/sketch.hpp"

namespace onebit {

enum class Algorithm { pfed1bs, fedavg, local };
enum class PotentialMode { exact, sampled };
enum class ErrorPolicy { skip_client, abort_run };

std::string to_string(Algorithm a);
std::string to_string(PotentialMode p);
std::string to_string(ErrorPolicy p);

struct FederationConfig {
    Algorithm algorithm = Algorithm::pfed1bs;
    ModelSpec model = ModelSpec::logistic(50, 2);
    HyperParams hp;
    double m_ratio = 0.1;
    std::uint64_t seed = 1;
    /// Every client runs ClientUpdate each round; only the sampled ones upload.
    bool train_all_clients = false;
    /// Ties in the consensus go to +1 and the downlink is charged m bits, not 2m.
    bool strict_onebit_downlink = false;
    /// Charge the downlink once per round instead of once per participant.
    bool broadcast_once = false;
    PotentialMode potential = PotentialMode::sampled;
    ErrorPolicy error_policy = ErrorPolicy::abort_run;
    /// Worker threads for client updates; 0 picks hardware concurrency capped
    /// by the ONEBIT_FL_THREADS environment variable.
    std::size_t threads = 0;
    /// Per-client sample count of the sampled potential estimator.
    std::size_t eval_subset = 256;
};

/// m = max(1, round(m_ratio * n)).
std::size_t sketch_dimension(std::size_t n, double m_ratio);

/// The broadcast seed I from which every endpoint rebuilds Phi.
std::uint64_t sketch_seed(std::uint64_t master_seed);

struct RoundMetrics {
    std::size_t round = 0;
    double mean_train_loss = 0.0;     // sum_k p_k f_k(w_k) on the evaluation samples
    double mean_test_accuracy = 0.0;  // unweighted mean of per-client Top-1 on own test split
    std::uint64_t uplink_bits = 0;
    std::uint64_t downlink_bits = 0;
    double potential_estimate = 0.0;  // Psi^{t+1} = sum_k p_k F~_k(w_k^{t+1}; v^{t+1})
    double delta_max = 0.0;
    double sampling_error_term = 0.0;  // this round's summand of E_S
    double grad_norm_sq = 0.0;         // sum_k p_k ||grad F~_k(w_k^{t+1}; v^t)||^2
};

/// Column names of the metrics CSV, in order.
std::span<const char* const> metrics_columns();

struct SkippedClient {
    std::size_t round;
    std::size_t client;
    std::string reason;
};

struct RunResult {
    std::vector<RoundMetrics> rounds;
    double initial_potential = 0.0;  // Psi^0
    std::size_t n = 0;
    std::size_t n_pad = 0;
    std::size_t m = 0;
    std::uint64_t sketch_seed = 0;
    double w0_sq = 0.0;               // ||w^0||^2
    double max_sq_norm = 0.0;         // max over rounds and clients of ||w_k^t||^2
    double max_task_grad_sq = 0.0;    // largest mini-batch task gradient norm^2 observed (G^2 estimate)
    double E_S = 0.0;
    std::size_t server_steps_checked = 0;
    std::vector<ClientState> clients;
    ConsensusVector consensus;
    std::vector<SkippedClient> skipped;
};

/// Initial client states: shared w^0, p_k proportional to train size, and
/// one RNG stream per client derived from the master seed.
std::vector<ClientState> make_clients(const FederationConfig& config, const FederatedDataset& fed);

/// T rounds of the configured algorithm. Deterministic given the config and
/// data regardless of thread count.
RunResult run(const FederationConfig& config, const FederatedDataset& fed);

/// Samples used for client k's term of the sampled potential estimator: the
/// first min(size, |train|) entries of a seeded shuffle of its train split.
std::vector<std::size_t> evaluation_subset(const ClientState& client, std::size_t size, std::uint64_t seed);

struct PotentialEstimate {
    double value = 0.0;
    /// Standard error of the task-loss part (0 in exact mode); the
    /// regularizer terms are deterministic.
    double standard_error = 0.0;
};

/// Psi = sum_k p_k F~_k(w_k; v).
PotentialEstimate potential_value(std::span<const ClientState> clients, const ConsensusVector& v,
                                  const SketchOperator& op, const ModelSpec& spec, const HyperParams& hp,
                                  const Dataset& data, PotentialMode mode, std::uint64_t seed,
                                  std::size_t subset_size = 256);

/// 1 - m / (n * bits_per_param): uplink saving of one sketch over one dense model.
double comm_cost_reduction(std::size_t model_bits_per_param, std::size_t n, std::size_t m);

struct CommLedger {
    std::uint64_t onebit_uplink = 0;
    std::uint64_t onebit_downlink = 0;
    std::uint64_t fedavg_uplink = 0;
    std::uint64_t fedavg_downlink = 0;
    std::uint64_t onebit_total() const { return onebit_uplink + onebit_downlink; }
    std::uint64_t fedavg_total() const { return fedavg_uplink + fedavg_downlink; }
};

/// One round of traffic for both protocols with S participants.
CommLedger round_ledger(std::size_t n, std::size_t m, std::size_t S, std::size_t bits_per_param,
                        bool strict_onebit_downlink, bool broadcast_once);

/// Runs fn(i) for i in [0, count) on up to `threads` workers. The first
/// exception (by index) is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Threads to use when the config leaves the count at 0.
std::size_t default_thread_count();

}  // namespace onebit
