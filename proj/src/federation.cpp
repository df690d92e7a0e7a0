#include "onebit_fl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <thread>

#include "onebit_fl/diagnostics.hpp"
#include "onebit_fl/error.hpp"
#include "onebit_fl/kernels.hpp"
#include "onebit_fl/server.hpp"

namespace onebit {

std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::pfed1bs: return "pfed1bs";
        case Algorithm::fedavg: return "fedavg";
        case Algorithm::local: return "local";
    }
    return "?";
}

std::string to_string(PotentialMode p) { return p == PotentialMode::exact ? "exact" : "sampled"; }

std::string to_string(ErrorPolicy p) { return p == ErrorPolicy::skip_client ? "skip-client" : "abort-run"; }

std::size_t sketch_dimension(std::size_t n, double m_ratio) {
    if (!(m_ratio > 0.0 && m_ratio <= 1.0)) throw ConfigError("m_ratio must lie in (0, 1]");
    const auto m = static_cast<std::size_t>(std::llround(m_ratio * static_cast<double>(n)));
    return std::max<std::size_t>(1, m);
}

std::uint64_t sketch_seed(std::uint64_t master_seed) {
    return CounterRng::derive(master_seed, Stream::sketch_seed).next();
}

std::span<const char* const> metrics_columns() {
    static constexpr const char* kColumns[] = {
        "round",         "mean_train_loss", "mean_test_accuracy",  "uplink_bits",  "downlink_bits",
        "potential_estimate", "delta_max",  "sampling_error_term", "grad_norm_sq",
    };
    return kColumns;
}

double comm_cost_reduction(std::size_t model_bits_per_param, std::size_t n, std::size_t m) {
    if (model_bits_per_param == 0 || n == 0 || m == 0) throw InvalidArgument("comm_cost_reduction: inputs must be positive");
    return 1.0 - static_cast<double>(m) / (static_cast<double>(n) * static_cast<double>(model_bits_per_param));
}

CommLedger round_ledger(std::size_t n, std::size_t m, std::size_t S, std::size_t bits_per_param,
                        bool strict_onebit_downlink, bool broadcast_once) {
    const std::uint64_t receivers = broadcast_once ? 1 : S;
    CommLedger l;
    l.onebit_uplink = static_cast<std::uint64_t>(S) * m;
    l.onebit_downlink = receivers * (strict_onebit_downlink ? m : 2 * m);
    l.fedavg_uplink = static_cast<std::uint64_t>(S) * n * bits_per_param;
    l.fedavg_downlink = receivers * n * bits_per_param;
    return l;
}

std::size_t default_thread_count() {
    std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("ONEBIT_FL_THREADS"); env != nullptr) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1) threads = std::min<std::size_t>(threads, static_cast<std::size_t>(cap));
    }
    return threads;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    std::vector<std::exception_ptr> errors(count);
    auto work = [&](std::atomic<std::size_t>& next) {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::atomic<std::size_t> next{0};
    if (threads == 1) {
        work(next);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, std::ref(next));
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<ClientState> make_clients(const FederationConfig& config, const FederatedDataset& fed) {
    const std::size_t K = fed.clients.size();
    if (K == 0) throw ConfigError("federation needs at least one client");
    const auto w0 = init_parameters(config.model, config.seed);
    double total = 0.0;
    for (const auto& c : fed.clients) total += static_cast<double>(c.train.size());
    if (!(total > 0.0)) throw ConfigError("clients hold no training data");
    std::vector<ClientState> clients(K);
    for (std::size_t k = 0; k < K; ++k) {
        auto& c = clients[k];
        c.id = k;
        c.w = w0;
        c.weight = static_cast<double>(fed.clients[k].train.size()) / total;
        c.train = fed.clients[k].train;
        c.test = fed.clients[k].test;
        c.rng = CounterRng::derive(config.seed, Stream::client, k);
        if (c.train.empty()) throw ConfigError("client " + std::to_string(k) + " has an empty train split");
    }
    return clients;
}

std::vector<std::size_t> evaluation_subset(const ClientState& client, std::size_t size, std::uint64_t seed) {
    std::vector<std::size_t> pool = client.train;
    if (pool.size() <= size) return pool;
    auto rng = CounterRng::derive(seed, Stream::eval_subset, client.id);
    rng.shuffle(std::span<std::size_t>(pool));
    pool.resize(size);
    std::sort(pool.begin(), pool.end());
    return pool;
}

PotentialEstimate potential_value(std::span<const ClientState> clients, const ConsensusVector& v,
                                  const SketchOperator& op, const ModelSpec& spec, const HyperParams& hp,
                                  const Dataset& data, PotentialMode mode, std::uint64_t seed,
                                  std::size_t subset_size) {
    PotentialEstimate est;
    double variance = 0.0;
    for (const auto& c : clients) {
        const auto samples = mode == PotentialMode::exact ? c.train : evaluation_subset(c, subset_size, seed);
        est.value += c.weight * client_objective(spec, op, c.w, v, hp, data, samples);
        if (mode == PotentialMode::sampled && samples.size() < c.train.size() && samples.size() > 1) {
            // Sample variance of per-example losses, finite-population corrected.
            double mean = 0.0;
            double sq = 0.0;
            for (std::size_t i : samples) {
                const std::size_t one[] = {i};
                const double l = task_loss(spec, c.w, data, one);
                mean += l;
                sq += l * l;
            }
            const double n = static_cast<double>(samples.size());
            mean /= n;
            const double s2 = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
            const double fpc = 1.0 - n / static_cast<double>(c.train.size());
            variance += c.weight * c.weight * s2 / n * fpc;
        }
    }
    est.standard_error = std::sqrt(variance);
    return est;
}

namespace {

double sq_norm(std::span<const double> w) { return kernels::active().dot(w.data(), w.data(), w.size()); }

struct ClientEval {
    double task_loss = 0.0;
    double objective = 0.0;     // F~_k(w; v_next)
    double grad_norm_sq = 0.0;  // ||grad F~_k(w; v_prev)||^2
    double accuracy = 0.0;
};

ClientEval evaluate_client(const ClientState& c, const FederationConfig& cfg, const HyperParams& hp,
                           const SketchOperator* op, const ConsensusVector* v_prev, const ConsensusVector* v_next,
                           const Dataset& data) {
    const auto samples = cfg.potential == PotentialMode::exact ? c.train
                                                                : evaluation_subset(c, cfg.eval_subset, cfg.seed);
    auto lg = task_loss_and_grad(cfg.model, c.w, data, samples);
    ClientEval e;
    e.task_loss = lg.loss;
    e.objective = lg.loss;
    const auto& k = kernels::active();
    if (hp.lambda != 0.0 && op != nullptr) {
        std::vector<double> scratch;
        std::vector<double> z(op->m());
        op->forward(c.w, z, scratch);
        e.objective += hp.lambda * sign_regularizer(z, *v_next, hp.gamma);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = saturated_tanh(hp.gamma * z[i]) - (*v_prev)[i];
        std::vector<double> reg(op->n());
        op->adjoint(z, reg, scratch);
        k.axpy(lg.grad.data(), hp.lambda, reg.data(), reg.size());
    }
    if (hp.mu != 0.0) {
        e.objective += 0.5 * hp.mu * sq_norm(c.w);
        k.axpy(lg.grad.data(), hp.mu, c.w.data(), c.w.size());
    }
    e.grad_norm_sq = sq_norm(lg.grad);
    e.accuracy = accuracy(cfg.model, c.w, data, c.test);
    return e;
}

class Orchestrator {
public:
    Orchestrator(const FederationConfig& cfg, const FederatedDataset& fed)
        : cfg_(cfg), fed_(fed), threads_(cfg.threads > 0 ? cfg.threads : default_thread_count()) {
        cfg_.model.validate();
        for (const auto& w : cfg_.hp.validate()) warnings_.push_back(w);
        K_ = fed.clients.size();
        if (cfg_.hp.participants > K_) {
            throw ConfigError("S=" + std::to_string(cfg_.hp.participants) + " exceeds K=" + std::to_string(K_));
        }
        if (fed.data.dim != cfg_.model.input_dim()) {
            throw ConfigError("dataset dimension " + std::to_string(fed.data.dim) + " does not match model input " +
                              std::to_string(cfg_.model.input_dim()));
        }
        if (cfg_.model.is_classifier()) {
            for (double y : fed.data.targets) {
                if (!(y >= 0.0) || y >= static_cast<double>(cfg_.model.output_dim()) || y != std::floor(y)) {
                    throw ConfigError("label " + std::to_string(y) + " incompatible with " +
                                      std::to_string(cfg_.model.output_dim()) + " output classes");
                }
            }
        }
        clients_ = make_clients(cfg_, fed_);
        for (const auto& c : clients_) {
            if (cfg_.hp.batch_size > c.train.size()) {
                throw ConfigError("batch_size " + std::to_string(cfg_.hp.batch_size) + " exceeds client " +
                                  std::to_string(c.id) + "'s " + std::to_string(c.train.size()) + " train samples");
            }
        }
        n_ = cfg_.model.parameter_count();
        m_ = sketch_dimension(n_, cfg_.m_ratio);
        if (m_ > next_pow2(n_)) throw ConfigError("sketch dimension exceeds padded model dimension");
        seed_I_ = sketch_seed(cfg_.seed);
        op_.emplace(seed_I_, n_, m_);
        server_rng_ = CounterRng::derive(cfg_.seed, Stream::server_sampling);
        eval_hp_ = cfg_.hp;
        if (cfg_.algorithm != Algorithm::pfed1bs) eval_hp_.lambda = 0.0;
    }

    RunResult run() {
        RunResult r;
        r.n = n_;
        r.n_pad = op_->n_pad();
        r.m = m_;
        r.sketch_seed = seed_I_;
        r.w0_sq = sq_norm(clients_.front().w);
        r.max_sq_norm = r.w0_sq;
        ConsensusVector v(m_);
        r.initial_potential =
            potential_value(clients_, v, *op_, cfg_.model, eval_hp_, fed_.data, cfg_.potential, cfg_.seed,
                            cfg_.eval_subset)
                .value;
        double W_hat = std::sqrt(r.w0_sq);
        double es_total = 0.0;
        std::vector<double> global_w = clients_.front().w;

        for (std::size_t t = 0; t < cfg_.hp.rounds; ++t) {
            RoundMetrics rm;
            rm.round = t;
            const auto sampled = sample_clients(K_, cfg_.hp.participants, server_rng_);
            ConsensusVector v_next = v;
            switch (cfg_.algorithm) {
                case Algorithm::pfed1bs: v_next = pfed1bs_round(t, sampled, v, rm, r, es_total); break;
                case Algorithm::fedavg: fedavg_round(t, sampled, global_w, rm, r); break;
                case Algorithm::local: local_round(t, sampled, r); break;
            }
            for (const auto& c : clients_) {
                const double sq = sq_norm(c.w);
                if (!std::isfinite(sq)) throw NumericError("non-finite model for client " + std::to_string(c.id), NumericError::npos, c.id);
                r.max_sq_norm = std::max(r.max_sq_norm, sq);
                W_hat = std::max(W_hat, std::sqrt(sq));
            }
            if (cfg_.algorithm == Algorithm::pfed1bs) rm.delta_max = diagnostics::delta_max(cfg_.hp, *op_, W_hat);
            evaluate(rm, v, v_next);
            v = std::move(v_next);
            r.rounds.push_back(rm);
        }
        if (cfg_.hp.rounds > 0) r.E_S = es_total / static_cast<double>(cfg_.hp.rounds);
        r.clients = std::move(clients_);
        r.consensus = std::move(v);
        return r;
    }

    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    struct Outcome {
        std::optional<ClientUpdateResult> result;
        std::string error;
        std::exception_ptr exception;
    };

    /// Runs `body` for each listed client concurrently and applies the error
    /// policy afterwards, in client order.
    template <typename Body>
    std::vector<std::optional<LocalStats>> for_clients(std::size_t round, std::span<const std::size_t> ids, Body&& body,
                                                       RunResult& r) {
        std::vector<std::optional<LocalStats>> stats(ids.size());
        std::vector<std::exception_ptr> errors(ids.size());
        parallel_for(ids.size(), threads_, [&](std::size_t i) {
            try {
                stats[i] = body(ids[i]);
            } catch (const NumericError&) {
                errors[i] = std::current_exception();
            }
        });
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!errors[i]) continue;
            if (cfg_.error_policy == ErrorPolicy::abort_run) std::rethrow_exception(errors[i]);
            try {
                std::rethrow_exception(errors[i]);
            } catch (const NumericError& e) {
                r.skipped.push_back({round, ids[i], e.what()});
            }
        }
        for (const auto& s : stats) {
            if (s) r.max_task_grad_sq = std::max(r.max_task_grad_sq, s->max_task_grad_sq);
        }
        return stats;
    }

    ConsensusVector pfed1bs_round(std::size_t t, std::span<const std::size_t> sampled, const ConsensusVector& v,
                                  RoundMetrics& rm, RunResult& r, double& es_total) {
        std::vector<std::size_t> trainers;
        if (cfg_.train_all_clients) {
            trainers.resize(K_);
            std::iota(trainers.begin(), trainers.end(), std::size_t{0});
        } else {
            trainers.assign(sampled.begin(), sampled.end());
        }
        std::vector<std::optional<OneBitSketch>> sketches(K_);
        std::vector<ClientState> updated(K_);
        const auto stats = for_clients(
            t, trainers,
            [&](std::size_t k) {
                auto res = client_update(clients_[k], v, *op_, cfg_.model, cfg_.hp, fed_.data);
                sketches[k] = std::move(res.sketch);
                updated[k] = std::move(res.state);
                return res.stats;
            },
            r);
        for (std::size_t i = 0; i < trainers.size(); ++i) {
            if (stats[i]) clients_[trainers[i]] = std::move(updated[trainers[i]]);
        }

        std::vector<WeightedSketch> uploads;
        for (std::size_t k : sampled) {
            if (sketches[k]) uploads.push_back({std::cref(*sketches[k]), clients_[k].weight});
        }
        ConsensusVector v_next = v;
        if (!uploads.empty()) {
            v_next = aggregate(uploads, cfg_.strict_onebit_downlink ? TieRule::plus_one : TieRule::zero);
            const double before = consensus_alignment(v, uploads);
            const double after = consensus_alignment(v_next, uploads);
            if (after < before - 1e-12) {
                throw std::logic_error("server step increased the potential: <v_new, z_hat> < <v_old, z_hat>");
            }
            ++r.server_steps_checked;
        }
        rm.uplink_bits = static_cast<std::uint64_t>(uploads.size()) * m_;
        const std::uint64_t receivers = cfg_.broadcast_once ? 1 : sampled.size();
        rm.downlink_bits = receivers * (cfg_.strict_onebit_downlink ? m_ : 2 * m_);

        // E_S needs every client's current sketch; idle clients contribute
        // sign(Phi w_k) of their stale model (not transmitted).
        std::vector<OneBitSketch> all(K_);
        parallel_for(K_, threads_, [&](std::size_t k) {
            all[k] = sketches[k] ? *sketches[k] : quantize(op_->forward(clients_[k].w));
        });
        rm.sampling_error_term = diagnostics::sampling_error_summand(all, cfg_.hp.participants);
        es_total += rm.sampling_error_term;
        return v_next;
    }

    void fedavg_round(std::size_t t, std::span<const std::size_t> sampled, std::vector<double>& global_w,
                      RoundMetrics& rm, RunResult& r) {
        std::vector<ClientState> updated(K_);
        const auto stats = for_clients(
            t, sampled,
            [&](std::size_t k) {
                updated[k] = clients_[k];
                updated[k].w = global_w;
                return local_sgd(updated[k], cfg_.model, cfg_.hp, fed_.data);
            },
            r);
        std::vector<double> sum(n_, 0.0);
        double mass = 0.0;
        std::size_t uploads = 0;
        const auto& kt = kernels::active();
        for (std::size_t i = 0; i < sampled.size(); ++i) {
            const std::size_t k = sampled[i];
            if (!stats[i]) continue;
            clients_[k].rng = updated[k].rng;
            kt.axpy(sum.data(), clients_[k].weight, updated[k].w.data(), n_);
            mass += clients_[k].weight;
            ++uploads;
        }
        if (uploads > 0) {
            kt.scale(sum.data(), 1.0 / mass, n_);
            global_w = std::move(sum);
        }
        for (auto& c : clients_) c.w = global_w;
        rm.uplink_bits = static_cast<std::uint64_t>(uploads) * n_ * 32;
        const std::uint64_t receivers = cfg_.broadcast_once ? 1 : sampled.size();
        rm.downlink_bits = receivers * n_ * 32;
    }

    void local_round(std::size_t t, std::span<const std::size_t> sampled, RunResult& r) {
        std::vector<std::size_t> trainers;
        if (cfg_.train_all_clients) {
            trainers.resize(K_);
            std::iota(trainers.begin(), trainers.end(), std::size_t{0});
        } else {
            trainers.assign(sampled.begin(), sampled.end());
        }
        std::vector<ClientState> updated(K_);
        const auto stats = for_clients(
            t, trainers,
            [&](std::size_t k) {
                updated[k] = clients_[k];
                return local_sgd(updated[k], cfg_.model, cfg_.hp, fed_.data);
            },
            r);
        for (std::size_t i = 0; i < trainers.size(); ++i) {
            if (stats[i]) clients_[trainers[i]] = std::move(updated[trainers[i]]);
        }
    }

    void evaluate(RoundMetrics& rm, const ConsensusVector& v_prev, const ConsensusVector& v_next) {
        std::vector<ClientEval> evals(K_);
        const SketchOperator* op = cfg_.algorithm == Algorithm::pfed1bs ? &*op_ : nullptr;
        parallel_for(K_, threads_, [&](std::size_t k) {
            evals[k] = evaluate_client(clients_[k], cfg_, eval_hp_, op, &v_prev, &v_next, fed_.data);
        });
        for (std::size_t k = 0; k < K_; ++k) {
            const double p = clients_[k].weight;
            rm.mean_train_loss += p * evals[k].task_loss;
            rm.potential_estimate += p * evals[k].objective;
            rm.grad_norm_sq += p * evals[k].grad_norm_sq;
            rm.mean_test_accuracy += evals[k].accuracy;
        }
        rm.mean_test_accuracy /= static_cast<double>(K_);
    }

    FederationConfig cfg_;
    const FederatedDataset& fed_;
    std::size_t threads_;
    std::size_t K_ = 0;
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    std::uint64_t seed_I_ = 0;
    std::optional<SketchOperator> op_;
    CounterRng server_rng_;
    HyperParams eval_hp_;
    std::vector<ClientState> clients_;
    std::vector<std::string> warnings_;
};

}  // namespace

RunResult run(const FederationConfig& config, const FederatedDataset& fed) {
    Orchestrator orchestrator(config, fed);
    return orchestrator.run();
}

}  // namespace onebit
