#pragma once

#include <cstdint>
#include <string>

#include "mplan/config.hpp"
#include "mplan/metrics.hpp"

namespace mplan {

struct RunResult {
  MetricsReport metrics;
  TimingReport timing;
  long long steps = 0;
  std::string dir;  // directory the outputs were written to
};

// Executes one seeded simulation and writes under out_dir: vehicles.csv,
// audit.csv, diagnostics.csv, metrics.json, timing.json, config.json (the
// effective configuration of exactly this run) and, when write_trace,
// trace.csv. Creates the directory if needed.
RunResult execute_run(const ScenarioConfig& cfg, std::uint64_t seed,
                      const std::string& out_dir, bool write_trace);

}  // namespace mplan
