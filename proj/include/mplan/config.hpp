#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mplan/simworld.hpp"

namespace mplan {

// One experiment description: the full world parameterization plus run
// control. Serialized as a single JSON document; unknown keys are errors.
struct ScenarioConfig {
  double duration = 3600.0;  // simulated time [s]
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "results";
  bool write_trace = true;
  WorldConfig world;
};

// Throws std::runtime_error naming the offending key path on unknown keys,
// type mismatches, or invalid values.
ScenarioConfig config_from_json_text(const std::string& text);
ScenarioConfig load_config(const std::string& path);

// Range and consistency checks; throws std::runtime_error.
void validate(const ScenarioConfig& cfg);

// Effective configuration with every key explicit; reloads to an identical
// scenario.
std::string to_json(const ScenarioConfig& cfg);

}  // namespace mplan
