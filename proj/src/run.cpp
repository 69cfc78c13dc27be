#include "mplan/run.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "mplan/trace.hpp"

namespace mplan {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

}  // namespace

RunResult execute_run(const ScenarioConfig& cfg, std::uint64_t seed,
                      const std::string& out_dir, bool write_trace) {
  std::filesystem::create_directories(out_dir);

  WorldConfig wc = cfg.world;
  wc.spawn.seed = seed;
  World world(wc);

  ScenarioConfig effective = cfg;
  effective.seeds = {seed};
  effective.output_dir = out_dir;
  effective.write_trace = write_trace;
  effective.world = wc;
  write_text(out_dir + "/config.json", to_json(effective));

  const long long steps = std::llround(cfg.duration / wc.dt);
  ControlSampler sampler;
  std::optional<TraceWriter> tracer;
  if (write_trace) tracer.emplace(out_dir + "/trace.csv");

  for (long long i = 0; i < steps; ++i) {
    world.step();
    sampler.add(world.last_rows(), wc.planner.bounds);
    if (tracer) tracer->append(world.last_rows());
  }
  if (tracer) tracer->close();

  const std::vector<TripRecord> trips = world.trip_records();
  write_vehicles_csv(out_dir + "/vehicles.csv", trips);
  write_audit_csv(out_dir + "/audit.csv", world.audit_log());
  write_diagnostics_csv(out_dir + "/diagnostics.csv", world.plan_log());

  RunResult result;
  result.metrics = compute_metrics(trips, world.audit_log(), sampler.finalize());
  result.timing = compute_timing(world.plan_log());
  result.steps = steps;
  result.dir = out_dir;
  write_text(out_dir + "/metrics.json", to_json(result.metrics));
  write_text(out_dir + "/timing.json", to_json(result.timing));
  return result;
}

}  // namespace mplan
