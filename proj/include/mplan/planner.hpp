#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mplan/cost.hpp"
#include "mplan/dp_init.hpp"
#include "mplan/fda.hpp"
#include "mplan/kinematics.hpp"

namespace mplan {

enum class VehicleClass { Manual, AutomatedNonConnected, AutomatedConnected };

enum class PredictionSource { Extrapolated, Broadcast };

// Predicted obstacle motion over the ego's horizon: one sample per planning
// step, length horizon + 1. Extrapolated predictions hold the obstacle's
// current speed and lateral position; broadcast ones replay the obstacle's
// published plan, time-aligned to the ego's clock and extended at the plan's
// terminal speed and lateral position.
struct ObstaclePrediction {
  int vehicle_id = -1;
  std::vector<ObstaclePoint> points;
  PredictionSource source = PredictionSource::Extrapolated;
  double length = 4.5;  // obstacle's physical length [m]
};

// One committed open-loop plan. Controls cover `controls.steps.size()` steps
// of `controls.dt`; states is the rollout from the creation state. A plan is
// driven until valid_until (half its covered duration), unless an event
// triggers an earlier replan.
struct Plan {
  int id = -1;
  ControlTrajectory controls;
  std::vector<VehicleState> states;
  double cost = 0.0;
  double created_at = 0.0;
  double valid_until = 0.0;
  bool safety_mode = false;  // produced by the override path
  bool fallback = false;     // open-loop braking after total failure
  // Inputs the plan was built against, kept for deviation triggers.
  std::vector<int> obstacle_ids;
  std::vector<ObstaclePrediction> predictions;
};

struct PlannerParams {
  int horizon = 32;                     // K
  double step = 0.25;                   // T [s]
  double zone_ahead = 1.0;              // x v_d * K * T, forward reach
  double zone_behind = 0.5;             // x v_d * K * T, rearward reach
  double override_speed_factor = 0.95;  // of the leader's current speed
  double override_horizon_factor = 0.5;
  double replan_speed_dev = 1.0;        // obstacle speed deviation [m/s]
  double unsafe_field_level = 0.5;      // field value marking the hard core
};

// Nominal body width shared by every vehicle; lengths vary per vehicle but
// the lateral footprint does not.
inline constexpr double kVehicleWidth = 2.0;

// Everything a planner invocation needs besides the world snapshot.
struct PlannerConfig {
  PlannerParams params;
  Weights weights;
  RoadGeometry road;
  ControlBounds bounds;
  SolverConfig solver;
  DPConfig dp;
};

// Snapshot of the planning vehicle.
struct EgoInfo {
  int id = -1;
  VehicleClass cls = VehicleClass::AutomatedNonConnected;
  VehicleState state;
  double v_d = 30.0;      // desired speed [m/s]
  double time_gap = 1.2;  // desired headway, scales the obstacle fields [s]
  double length = 4.5;    // [m]
};

// Snapshot of one other vehicle. `broadcast` points at the plan the vehicle
// had published before this step (null when none); only connected egos
// observing connected vehicles read it.
struct ObstacleInfo {
  int id = -1;
  VehicleClass cls = VehicleClass::Manual;
  double x = 0.0;
  double y = 0.0;
  double v_x = 0.0;
  double length = 4.5;
  const Plan* broadcast = nullptr;
};

enum class ReplanTrigger {
  None,
  HalfHorizon,
  ObstacleDeviation,
  NewObstacle,
  TrackingFailure,
};

const char* to_string(ReplanTrigger t);

// Per-plan diagnostics; the timing fields are wall-clock and must stay out
// of any reproducibility-checked output.
struct PlanDiagnostics {
  double dp_cost = 0.0;
  double fda_cost = 0.0;
  int fda_iterations = 0;
  bool dp_feasible = false;
  bool used_override = false;
  bool used_fallback = false;
  long long dp_micros = 0;
  long long bnb_micros = 0;
  long long fda_micros = 0;
};

struct PlanResult {
  Plan plan;
  PlanDiagnostics diag;
};

// Ids of vehicles inside the ego's planning zone: closed interval from
// zone_behind * v_d * K * T behind to zone_ahead * v_d * K * T ahead, any
// lane. Order follows the input order.
std::vector<int> select_obstacles(const EgoInfo& ego,
                                  std::span<const ObstacleInfo> others,
                                  const PlannerParams& params);

// Predictions for the given ids over the ego horizon. Manual vehicles and
// every vehicle seen by a non-connected ego extrapolate at constant speed
// and lateral position; connected egos replay connected vehicles' broadcast
// plans where one exists.
std::vector<ObstaclePrediction> predict_obstacles(
    const EgoInfo& ego, std::span<const ObstacleInfo> others,
    std::span<const int> ids, double now, const PlannerConfig& cfg);

// A planned path is unsafe if an obstacle field at a planned state exceeds
// the hard-core level, or the ego's body enters an obstacle's lane-width
// slot while the two overlap longitudinally. Conflicts inherited from the
// initial state
// are tolerated while they persist — a vehicle caught inside an envelope
// must be allowed to drive its way out — but entering fresh or re-entering
// after clearing is unsafe. Field proximity and body contact are tracked
// separately, so a plan tolerated inside a field may still not advance into
// body contact.
bool check_safety(std::span<const VehicleState> states, const EgoInfo& ego,
                  std::span<const ObstaclePrediction> predictions,
                  const PlannerConfig& cfg);

// Open-loop braking used when planning fails outright: jerk drives the
// longitudinal acceleration toward a comfortable-braking profile that tapers
// near standstill; lateral input cancels any residual lateral speed at the
// bound and then holds the heading straight.
ControlTrajectory brake_fallback_controls(const VehicleState& s0, int steps,
                                          double dt, const ControlBounds& b);

// Full planning pipeline for one vehicle: zone selection, prediction,
// coarse seed, descent, safety check, and override/braking fallbacks.
PlanResult make_plan(const EgoInfo& ego, std::span<const ObstacleInfo> others,
                     double now, int plan_id, const PlannerConfig& cfg);

// Event check for an active plan. tracking_failed reports that the simulator
// could not execute the last commanded motion.
ReplanTrigger needs_replan(const EgoInfo& ego, const Plan& plan,
                           std::span<const ObstacleInfo> others, double now,
                           bool tracking_failed, const PlannerConfig& cfg);

}  // namespace mplan
