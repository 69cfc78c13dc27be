#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mplan/config.hpp"
#include "mplan/run.hpp"
#include "mplan/trace.hpp"

namespace {

using mplan::ClassKpis;
using mplan::MetricsReport;
using mplan::RunResult;
using mplan::ScenarioConfig;

std::string timestamp() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// Option values only applied when the user passed the flag.
struct Overrides {
  double duration = 0.0;
  double inflow = 0.0;
  double penetration = 0.0;
  int threads = 0;
  bool connected = true;
  std::vector<std::uint64_t> seeds;
  std::string output;
  bool trace = true;

  CLI::Option* duration_opt = nullptr;
  CLI::Option* inflow_opt = nullptr;
  CLI::Option* penetration_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
  CLI::Option* connected_opt = nullptr;
  CLI::Option* seeds_opt = nullptr;
  CLI::Option* output_opt = nullptr;
  CLI::Option* trace_opt = nullptr;
};

void add_common_options(CLI::App* cmd, Overrides& o) {
  o.duration_opt =
      cmd->add_option("--duration", o.duration, "Simulated time [s]");
  o.inflow_opt = cmd->add_option("--inflow", o.inflow, "Arrivals [veh/h]");
  o.penetration_opt = cmd->add_option("--penetration", o.penetration,
                                      "Automated fraction in [0, 1]");
  o.threads_opt =
      cmd->add_option("--threads", o.threads, "Planner worker threads");
  o.connected_opt = cmd->add_flag("--connected,!--non-connected", o.connected,
                                  "Automated vehicles broadcast plans");
  o.seeds_opt = cmd->add_option("--seeds", o.seeds, "Seeds to run")
                    ->delimiter(',');
  o.output_opt = cmd->add_option("--output", o.output,
                                 "Output directory (replaces the timestamped "
                                 "default)");
  o.trace_opt = cmd->add_flag("--trace,!--no-trace", o.trace,
                              "Write the per-step trace table");
}

void apply_overrides(ScenarioConfig& cfg, const Overrides& o) {
  if (o.duration_opt->count()) cfg.duration = o.duration;
  if (o.inflow_opt->count()) cfg.world.spawn.inflow = o.inflow;
  if (o.penetration_opt->count()) cfg.world.spawn.penetration = o.penetration;
  if (o.threads_opt->count()) cfg.world.threads = o.threads;
  if (o.connected_opt->count()) cfg.world.spawn.connected = o.connected;
  if (o.seeds_opt->count()) cfg.seeds = o.seeds;
  if (o.trace_opt->count()) cfg.write_trace = o.trace;
  mplan::validate(cfg);
}

std::string output_root(const ScenarioConfig& cfg, const Overrides& o) {
  if (o.output_opt->count()) return o.output;
  return cfg.output_dir + "/" + timestamp();
}

void print_summary(const std::string& label, const RunResult& r) {
  const MetricsReport& m = r.metrics;
  std::printf(
      "%s: entered %lld, completed %lld, delay %.2f s/km, speed %.1f km/h, "
      "speed dev %.2f m/s, audit %lld\n",
      label.c_str(), m.entered, m.exited, m.all.delay_s_per_km,
      m.all.speed_kmh, m.all.speed_deviation, m.audit.total);
}

int do_run(const std::string& config_path, const Overrides& o) {
  ScenarioConfig cfg = mplan::load_config(config_path);
  apply_overrides(cfg, o);
  const std::string root = output_root(cfg, o);

  long long violations = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string dir = root + "/seed" + std::to_string(seed);
    const RunResult r = mplan::execute_run(cfg, seed, dir, cfg.write_trace);
    print_summary("seed " + std::to_string(seed), r);
    violations += r.metrics.audit.total;
  }
  std::printf("outputs: %s\n", root.c_str());
  return violations == 0 ? 0 : 1;
}

struct CellResult {
  double penetration = 0.0;
  bool connected = true;
  int seeds_ok = 0;
  int seeds_failed = 0;
  // Sums of per-seed KPI values over successful seeds.
  double delay_all = 0.0, speed_all = 0.0, dev_all = 0.0, lc_all = 0.0;
  double delay_av = 0.0, speed_av = 0.0, dev_av = 0.0;
  double delay_man = 0.0, speed_man = 0.0, dev_man = 0.0;
  double plans_per_av = 0.0;
  long long overrides = 0, fallbacks = 0, audit_total = 0;
};

std::string pen_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", p);
  return buf;
}

int do_sweep(const std::string& config_path, const Overrides& o,
             const std::vector<double>& penetrations,
             const std::vector<std::string>& modes) {
  ScenarioConfig base = mplan::load_config(config_path);
  apply_overrides(base, o);
  const std::string root = output_root(base, o);

  std::vector<CellResult> cells;
  long long violations = 0;
  bool any_failed = false;
  for (double pen : penetrations) {
    for (const std::string& mode : modes) {
      const bool connected = mode == "connected";
      CellResult cell;
      cell.penetration = pen;
      cell.connected = connected;
      ScenarioConfig cfg = base;
      cfg.world.spawn.penetration = pen;
      cfg.world.spawn.connected = connected;
      mplan::validate(cfg);
      for (std::uint64_t seed : cfg.seeds) {
        const std::string dir = root + "/pen" + pen_label(pen) + "_" + mode +
                                "/seed" + std::to_string(seed);
        try {
          const RunResult r = mplan::execute_run(cfg, seed, dir, cfg.write_trace);
          const MetricsReport& m = r.metrics;
          cell.seeds_ok += 1;
          cell.delay_all += m.all.delay_s_per_km;
          cell.speed_all += m.all.speed_kmh;
          cell.dev_all += m.all.speed_deviation;
          cell.lc_all += m.all.lane_changes_per_vehicle;
          cell.delay_av += m.automated.delay_s_per_km;
          cell.speed_av += m.automated.speed_kmh;
          cell.dev_av += m.automated.speed_deviation;
          cell.delay_man += m.manual.delay_s_per_km;
          cell.speed_man += m.manual.speed_kmh;
          cell.dev_man += m.manual.speed_deviation;
          cell.plans_per_av += m.plans.per_completed_av;
          cell.overrides += m.plans.overrides;
          cell.fallbacks += m.plans.fallbacks;
          cell.audit_total += m.audit.total;
          violations += m.audit.total;
          print_summary("pen " + pen_label(pen) + " " + mode + " seed " +
                            std::to_string(seed),
                        r);
        } catch (const std::exception& e) {
          cell.seeds_failed += 1;
          any_failed = true;
          std::fprintf(stderr, "cell pen %s %s seed %llu failed: %s\n",
                       pen_label(pen).c_str(), mode.c_str(),
                       static_cast<unsigned long long>(seed), e.what());
        }
      }
      cells.push_back(cell);
    }
  }

  std::filesystem::create_directories(root);
  std::ofstream out(root + "/sweep.csv", std::ios::binary | std::ios::trunc);
  out << "penetration,mode,seeds_ok,seeds_failed,delay_all,speed_all,dev_all,"
         "lane_changes_all,delay_av,speed_av,dev_av,delay_manual,"
         "speed_manual,dev_manual,plans_per_av,overrides,fallbacks,audit\n";
  for (const CellResult& c : cells) {
    const double n = c.seeds_ok > 0 ? static_cast<double>(c.seeds_ok) : 1.0;
    out << mplan::format_double(c.penetration) << ','
        << (c.connected ? "connected" : "non-connected") << ',' << c.seeds_ok
        << ',' << c.seeds_failed << ','
        << mplan::format_double(c.delay_all / n) << ','
        << mplan::format_double(c.speed_all / n) << ','
        << mplan::format_double(c.dev_all / n) << ','
        << mplan::format_double(c.lc_all / n) << ','
        << mplan::format_double(c.delay_av / n) << ','
        << mplan::format_double(c.speed_av / n) << ','
        << mplan::format_double(c.dev_av / n) << ','
        << mplan::format_double(c.delay_man / n) << ','
        << mplan::format_double(c.speed_man / n) << ','
        << mplan::format_double(c.dev_man / n) << ','
        << mplan::format_double(c.plans_per_av / n) << ',' << c.overrides
        << ',' << c.fallbacks << ',' << c.audit_total << '\n';
  }
  out.close();
  std::printf("sweep table: %s/sweep.csv\n", root.c_str());
  return (violations == 0 && !any_failed) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motorway path planning and traffic simulation harness"};
  app.require_subcommand(1);

  std::string run_config;
  Overrides run_o;
  CLI::App* run_cmd =
      app.add_subcommand("run", "Execute one scenario for each seed");
  run_cmd->add_option("config", run_config, "Scenario file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  add_common_options(run_cmd, run_o);

  std::string sweep_config;
  Overrides sweep_o;
  std::vector<double> penetrations{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<std::string> modes{"connected", "non-connected"};
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Cross-product of penetration rates, modes and seeds");
  sweep_cmd->add_option("config", sweep_config, "Scenario file (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  add_common_options(sweep_cmd, sweep_o);
  sweep_cmd->add_option("--penetrations", penetrations, "Automated fractions")
      ->delimiter(',');
  sweep_cmd
      ->add_option("--modes", modes, "connected and/or non-connected")
      ->delimiter(',')
      ->check(CLI::IsMember({"connected", "non-connected"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return do_run(run_config, run_o);
    if (sweep_cmd->parsed()) return do_sweep(sweep_config, sweep_o,
                                             penetrations, modes);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
