#include "onebit_fl/report.hpp"

#include <cstdio>
#include <sstream>

#ifndef ONEBIT_FL_GIT_DESCRIBE
#define ONEBIT_FL_GIT_DESCRIBE "unknown"
#endif

namespace onebit {

std::string git_describe() { return ONEBIT_FL_GIT_DESCRIBE; }

namespace {

std::string g17(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds) {
    const auto columns = metrics_columns();
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    for (const auto& r : rounds) {
        out << r.round << ',' << g17(r.mean_train_loss) << ',' << g17(r.mean_test_accuracy) << ',' << r.uplink_bits
            << ',' << r.downlink_bits << ',' << g17(r.potential_estimate) << ',' << g17(r.delta_max) << ','
            << g17(r.sampling_error_term) << ',' << g17(r.grad_norm_sq) << '\n';
    }
}

nlohmann::ordered_json run_summary(const RunResult& result, const ExperimentConfig& config, double wall_seconds) {
    std::uint64_t up = 0;
    std::uint64_t down = 0;
    for (const auto& r : result.rounds) {
        up += r.uplink_bits;
        down += r.downlink_bits;
    }
    nlohmann::ordered_json j;
    j["algorithm"] = to_string(config.federation.algorithm);
    j["rounds"] = result.rounds.size();
    j["final_accuracy"] = result.rounds.empty() ? 0.0 : result.rounds.back().mean_test_accuracy;
    j["final_train_loss"] = result.rounds.empty() ? 0.0 : result.rounds.back().mean_train_loss;
    j["initial_potential"] = result.initial_potential;
    j["final_potential"] = result.rounds.empty() ? result.initial_potential : result.rounds.back().potential_estimate;
    j["total_uplink_bits"] = up;
    j["total_downlink_bits"] = down;
    j["total_bits"] = up + down;
    j["n"] = result.n;
    j["n_pad"] = result.n_pad;
    j["m"] = result.m;
    j["sketch_seed"] = result.sketch_seed;
    j["max_sq_norm"] = result.max_sq_norm;
    j["E_S"] = result.E_S;
    j["skipped_clients"] = nlohmann::ordered_json::array();
    for (const auto& s : result.skipped) {
        j["skipped_clients"].push_back({{"round", s.round}, {"client", s.client}, {"reason", s.reason}});
    }
    j["wall_seconds"] = wall_seconds;
    j["git_describe"] = git_describe();
    // The echo as an object; each value is the exact text that reproduces it.
    auto& echo = j["config"] = nlohmann::ordered_json::object();
    std::istringstream lines(canonical_echo(config));
    for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find(" = ");
        echo[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return j;
}

}  // namespace onebit
