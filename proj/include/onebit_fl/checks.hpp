#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace onebit::diagnostics {

/// One empirical check of a theoretical quantity. `measured` is compared
/// against `bound` in the direction given by `relation`.
struct CheckResult {
    std::string name;
    std::string relation;  // "<=", "<", "~=" (within tolerance)
    bool pass = false;
    double measured = 0.0;
    double bound = 0.0;
    std::string note;
};

struct CheckOptions {
    std::uint64_t seed = 1;
    /// Rounds of the small federated run that feeds the convergence checks.
    std::size_t rounds = 40;
};

/// Runs every check at desk scale. All comparisons are empirical means over
/// the sampled randomness, not high-probability statements.
std::vector<CheckResult> run_check_suite(const CheckOptions& options = {});

nlohmann::ordered_json checks_to_json(std::span<const CheckResult> results);

}  // namespace onebit::diagnostics
