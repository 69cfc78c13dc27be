#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mplan/simworld.hpp"

namespace mplan {

// Trip-level indicators for one vehicle class. Means are taken over
// vehicles that completed the section; partial trips would bias every
// indicator toward the congested tail of the run.
struct ClassKpis {
  long long completed = 0;
  double delay_s_per_km = 0.0;          // max(0, tt - dist/v_d) per km
  double speed_kmh = 0.0;               // dist / tt
  double lane_changes_per_vehicle = 0.0;
  double speed_deviation = 0.0;         // mean over rows of |v_x - v_d| [m/s]
};

// Input statistics over the recorded rows of automated vehicles.
struct ControlKpis {
  long long rows = 0;
  double jx_p99 = 0.0;     // 99th percentile of |j_x|
  double ay_p99 = 0.0;     // 99th percentile of |a_y|
  double jx_max = 0.0;
  double ay_max = 0.0;
  double ax_mean_abs = 0.0;
  long long bound_violations = 0;  // inputs outside the configured box
};

struct AuditCounts {
  long long total = 0;
  long long overlap = 0;
  long long road_departure = 0;
  long long negative_speed = 0;
  long long emergency_gap = 0;
  long long conservation = 0;
};

struct PlanCounts {
  long long total = 0;              // all vehicles, completed or not
  double per_completed_av = 0.0;    // mean over completed automated trips
  long long overrides = 0;
  long long fallbacks = 0;
};

struct MetricsReport {
  bool empty = true;  // no completed trips
  long long entered = 0;
  long long exited = 0;
  long long active = 0;
  ClassKpis all;
  ClassKpis automated;
  ClassKpis manual;
  PlanCounts plans;
  AuditCounts audit;
  ControlKpis control;
};

// Accumulates |j_x|, |a_y| and |a_x| from the automated rows of each step,
// in the order the rows are produced.
class ControlSampler {
 public:
  void add(const std::vector<TraceRow>& rows, const ControlBounds& bounds);
  ControlKpis finalize() const;

 private:
  std::vector<double> abs_jx_;
  std::vector<double> abs_ay_;
  double abs_ax_sum_ = 0.0;
  long long rows_ = 0;
  long long violations_ = 0;
};

// Report over the finished run. The "all" class is derived from the two
// class accumulators, so it is exactly their vehicle-weighted combination.
MetricsReport compute_metrics(const std::vector<TripRecord>& trips,
                              const std::vector<AuditEvent>& audit,
                              const ControlKpis& control);

// Stable-schema JSON document (keys sorted, trailing newline).
std::string to_json(const MetricsReport& r);

struct StageTiming {
  double mean_s = 0.0;
  double max_s = 0.0;
};

// Wall-clock statistics per planning stage. Kept out of MetricsReport so
// reproducibility checks can compare every other output byte for byte.
struct TimingReport {
  long long plans = 0;
  StageTiming dp;
  StageTiming bnb;
  StageTiming fda;
};

TimingReport compute_timing(const std::vector<PlanEvent>& events);
std::string to_json(const TimingReport& r);

// Rebuilds the run tables from previously written CSV files and recomputes
// the report through the same code path. Numbers are written with
// shortest-round-trip formatting, so the result matches the in-memory
// report exactly.
MetricsReport report_from_files(const std::string& trace_csv_path,
                                const std::string& vehicles_csv_path,
                                const std::string& audit_csv_path,
                                const ControlBounds& bounds);

// (vehicle id, lane transition count) from consecutive rows of a trace
// file, id-sorted. Cross-checks the per-vehicle lane-change counters.
std::vector<std::pair<int, int>> lane_transitions_from_trace(
    const std::string& trace_csv_path);

}  // namespace mplan
