#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mplan/cost.hpp"
#include "mplan/kinematics.hpp"

namespace mplan {

// Coarse search problem used to seed the continuous solver: a short horizon
// of long steps over gridded speed and position, a small acceleration set,
// and whole-lane moves. Grid increments must tile the motion of every
// acceleration option (a * dt on the speed grid, v * dt and a * dt^2 / 2 on
// the position grid).
struct DPConfig {
  double coarse_dt = 1.0;
  int coarse_steps = 8;
  std::vector<double> accel_set{-3.0, 0.0, 3.0};
  double speed_increment = 3.0;     // [m/s]
  double position_increment = 1.5;  // [m]
  int max_lane_changes = 1;         // per horizon
  bool allow_lane_change = true;
  double w_accel = 1.0;
  double w_lane = 1.0;
  double w_speed = 0.05;
  double lane_change_duration = 3.0;  // used when lifting lane moves [s]
};

// Coarse plan: one acceleration per coarse step and the lane occupied at
// each coarse boundary (lane_seq has coarse_steps + 1 entries; a lane move
// at step k means lane_seq[k+1] != lane_seq[k] and takes effect at the start
// of that step).
struct DPPlan {
  std::vector<double> accel_seq;
  std::vector<int> lane_seq;
  double cost = 0.0;
};

struct DPStats {
  long long states_evaluated = 0;  // states processed by the backward sweep
  long long nodes_expanded = 0;    // nodes branched by the best-first search
};

// Exhaustive backward value iteration over the reachable grid. Transitions
// that leave the road, reverse, or enter an obstacle's time-gap envelope (at
// the midpoint or endpoint of the step, in the occupied lane) are excluded.
// Returns nullopt when no feasible action sequence exists. Cost ties are
// broken toward straight driving, then smaller accelerations, then earlier
// distinguishing steps.
std::optional<DPPlan> solve_backward(const VehicleState& s0, double v_d,
                                     const RoadGeometry& road,
                                     std::span<const ObstacleEllipse> obstacles,
                                     double fine_dt, const DPConfig& cfg,
                                     DPStats* stats = nullptr);

// Best-first forward search over the same graph: always branches the
// cheapest open state and stops when a full-horizon state is cheapest.
// Reaches the same optimal cost as the backward sweep while typically
// branching far fewer states.
std::optional<DPPlan> solve_forward_bnb(const VehicleState& s0, double v_d,
                                        const RoadGeometry& road,
                                        std::span<const ObstacleEllipse> obstacles,
                                        double fine_dt, const DPConfig& cfg,
                                        DPStats* stats = nullptr);

// Expands a coarse plan into bounded fine-step controls: longitudinal jerk
// tracks the coarse acceleration profile as fast as the bounds allow; each
// lane move becomes an antisymmetric lateral-acceleration pulse of
// lane_change_duration, displacing exactly one lane width and ending with
// zero added lateral speed. Pulses are centred on the coarse move and
// shifted to fit inside the horizon.
ControlTrajectory lift_to_continuous(const DPPlan& plan,
                                     const VehicleState& s0, double fine_dt,
                                     int fine_steps, const ControlBounds& bounds,
                                     double lane_width, const DPConfig& cfg);

}  // namespace mplan
