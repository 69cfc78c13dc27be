#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mplan/cost.hpp"
#include "mplan/kinematics.hpp"
#include "mplan/planner.hpp"

namespace mplan {

// Arrival process and per-vehicle attribute sampling. Desired speeds are
// configured in km/h (converted at sampling); everything else is SI.
struct SpawnConfig {
  double inflow = 3000.0;      // arrivals [veh/h]
  double penetration = 0.5;    // automated fraction in [0, 1]
  bool connected = true;       // automated vehicles broadcast plans
  double v_d_min_kmh = 80.0;
  double v_d_max_kmh = 120.0;
  double time_gap_min = 0.8;   // [s]
  double time_gap_max = 1.8;   // [s]
  double length_min = 4.0;     // [m]
  double length_max = 5.0;     // [m]
  double min_entry_speed = 5.0;  // a lane admits entry at or above this [m/s]
  std::uint64_t seed = 1;
};

// Car-following and lane-change behaviour of manual drivers. v0 and T_hw are
// per-vehicle (the sampled desired speed and time gap); the rest are shared.
struct ManualDriverParams {
  double v0 = 30.0;           // desired speed [m/s]
  double T_hw = 1.2;          // time headway [s]
  double a_max = 1.5;         // [m/s^2]
  double b_comf = 2.0;        // comfortable braking [m/s^2]
  double s0_jam = 2.0;        // standstill gap [m]
  double delta_exp = 4.0;
  double lc_incentive = 0.2;   // gain needed to leave the lane [m/s^2]
  double lc_safe_decel = 3.0;  // max braking imposed on the new follower
  double lc_cooldown = 3.0;    // [s]
};

struct WorldConfig {
  double section_length = 3000.0;  // [m]
  double dt = 0.25;                // sim step, equals the planning step [s]
  int threads = 1;                 // planner parallelism; results identical
  SpawnConfig spawn;
  ManualDriverParams manual;
  PlannerConfig planner;
};

struct Vehicle {
  int id = -1;
  VehicleClass cls = VehicleClass::Manual;
  double length = 4.5;
  double v_d = 30.0;      // [m/s]
  double time_gap = 1.2;  // [s]
  VehicleState state;
  double entered_at = 0.0;
  // Manual driving state.
  double last_lane_change = 0.0;
  // Automated driving state.
  std::optional<Plan> plan;       // currently driven
  std::optional<Plan> published;  // visible to other connected vehicles
  bool tracking_failed = false;
  int plans_made = 0;
  int overrides = 0;
  int fallbacks = 0;
  // Rolling per-vehicle aggregates, mirrored row-by-row in the trace.
  long long steps_recorded = 0;
  double dev_sum = 0.0;  // sum of |v_x - v_d| over recorded rows
  int lane_changes = 0;
  int prev_lane = 0;
  // Inputs applied during the last step, for the trace.
  double cmd_j_x = 0.0;
  double cmd_a_y = 0.0;
};

enum class AuditKind {
  Overlap,        // two vehicle bodies intersect
  RoadDeparture,  // lateral position outside [0, width]
  NegativeSpeed,  // longitudinal speed below -0.01 m/s
  EmergencyGap,   // car-following queried with a non-positive gap
  Conservation,   // entered != present + exited
};

const char* to_string(AuditKind k);

struct AuditEvent {
  double t = 0.0;
  AuditKind kind = AuditKind::Overlap;
  int id_a = -1;
  int id_b = -1;
  double value = 0.0;
};

// One trace line: the post-step state of one vehicle.
struct TraceRow {
  double t = 0.0;
  int id = -1;
  VehicleClass cls = VehicleClass::Manual;
  double x = 0.0;
  double y = 0.0;
  int lane = 0;
  double v_x = 0.0;
  double v_y = 0.0;
  double a_x = 0.0;
  double j_x = 0.0;
  double a_y = 0.0;
  int plan_id = -1;
};

// Per-vehicle lifetime record, written once per vehicle.
struct TripRecord {
  int id = -1;
  VehicleClass cls = VehicleClass::Manual;
  double v_d = 0.0;
  double time_gap = 0.0;
  double length = 0.0;
  double entered_at = 0.0;
  double exited_at = 0.0;  // meaningful only when completed
  bool completed = false;
  double distance = 0.0;   // longitudinal position reached
  long long steps = 0;
  double dev_sum = 0.0;
  int lane_changes = 0;
  int plans = 0;
  int overrides = 0;
  int fallbacks = 0;
};

// One planner invocation, for the diagnostics log and timing stats.
struct PlanEvent {
  double t = 0.0;
  int vehicle_id = -1;
  int plan_id = -1;
  std::string trigger;
  bool safety_mode = false;
  bool fallback = false;
  double dp_cost = 0.0;
  double plan_cost = 0.0;
  int fda_iterations = 0;
  long long dp_micros = 0;
  long long bnb_micros = 0;
  long long fda_micros = 0;
};

// Car-following acceleration. Free term tapers toward v0; the interaction
// term uses the desired gap s0 + max(0, v*T_hw + v*(v - v_lead) /
// (2*sqrt(a_max*b_comf))). The caller must screen gap <= 0 (emergency).
double idm_accel(double gap, double v, double v_lead,
                 const ManualDriverParams& p);

// Deterministic multi-lane motorway section. Vehicles enter at x = 0 and
// leave past section_length; one step() advances every vehicle by dt in a
// fixed phase order (plan, manual lane changes, car-following, motion,
// exits, arrivals, audit, rows).
class World {
 public:
  explicit World(WorldConfig cfg);

  void step();

  double time() const { return clock_; }
  const WorldConfig& config() const { return cfg_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }

  // Rows produced by the most recent step, in vehicle id order.
  const std::vector<TraceRow>& last_rows() const { return last_rows_; }
  const std::vector<AuditEvent>& audit_log() const { return audit_; }
  const std::vector<PlanEvent>& plan_log() const { return plan_log_; }
  // Completed trips first (in completion order), then active vehicles.
  std::vector<TripRecord> trip_records() const;

  long long entered_count() const { return entered_; }
  long long exited_count() const { return static_cast<long long>(trips_.size()); }
  std::size_t queue_length() const { return queue_.size(); }

  // Places a fully-specified vehicle directly on the road (test scenarios);
  // returns its id.
  int add_vehicle(VehicleClass cls, const VehicleState& s, double v_d,
                  double time_gap, double length);

 private:
  struct PendingVehicle {
    VehicleClass cls;
    double v_d;
    double time_gap;
    double length;
  };

  void plan_phase(double now);
  void manual_lane_change_phase(double now);
  void car_following_phase(double now);
  void advance_phase(double now);
  void exit_phase(double now);
  void spawn_phase(double now);
  void audit_phase(double t_end);
  void record_phase(double t_end);

  std::vector<ObstacleInfo> snapshot_infos() const;
  EgoInfo ego_info(const Vehicle& v) const;
  const Vehicle* leader_in_lane(const Vehicle& v, int lane) const;
  const Vehicle* follower_in_lane(const Vehicle& v, int lane) const;
  double bumper_gap(const Vehicle& rear, const Vehicle& front) const;

  WorldConfig cfg_;
  double clock_ = 0.0;
  int next_vehicle_id_ = 0;
  int next_plan_id_ = 0;
  long long entered_ = 0;
  std::vector<Vehicle> vehicles_;  // ascending id
  std::deque<PendingVehicle> queue_;
  std::mt19937_64 rng_;
  std::poisson_distribution<int> arrivals_;
  std::vector<TripRecord> trips_;
  std::vector<AuditEvent> audit_;
  std::vector<PlanEvent> plan_log_;
  std::vector<TraceRow> last_rows_;
};

}  // namespace mplan
