#pragma once

#include <ostream>
#include <span>
#include <string>

#include <json.hpp>

#include "onebit_fl/config.hpp"
#include "onebit_fl/federation.hpp"

namespace onebit {

/// `git describe` of the source tree at build time, or "unknown".
std::string git_describe();

/// Header plus one row per round; doubles use %.17g so the file is a
/// bit-exact record.
void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds);

nlohmann::ordered_json run_summary(const RunResult& result, const ExperimentConfig& config, double wall_seconds);

}  // namespace onebit
