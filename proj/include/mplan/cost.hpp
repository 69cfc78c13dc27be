#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mplan/kinematics.hpp"

namespace mplan {

// Objective weights. Each weight multiplies one per-step term; epsilon
// smooths the reverse-speed barrier.
struct Weights {
  double jerk = 1.5;            // j_x^2
  double accel_x = 1.0;         // a_x^2
  double accel_y = 1.5;         // a_y^2
  double speed_x = 0.05;        // (v_x - v_dx)^2
  double speed_y = 1.0;         // (v_y - v_dy)^2
  double road = 15.0;           // road boundary penalty
  double collision = 15.0;      // obstacle potential fields
  double negative_speed = 1.0;  // reverse-speed barrier
  double epsilon = 0.1;
};

struct RoadGeometry {
  int n_lanes = 3;
  double lane_width = 3.0;       // [m]
  double boundary_margin = 1.4;  // keep-out band inside each edge [m]

  double width() const { return n_lanes * lane_width; }
  double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
};

// Lane index for a lateral position; lane 0 touches y = 0. Positions on or
// past the left edge map to the left-most lane.
inline int lane_of(double y, const RoadGeometry& road) {
  const int lane = static_cast<int>(std::floor(y / road.lane_width));
  return std::clamp(lane, 0, road.n_lanes - 1);
}

struct DrivingGoals {
  double v_dx = 0.0;  // desired longitudinal speed [m/s]
  double v_dy = 0.0;  // desired lateral speed, zero on plain sections [m/s]
};

struct ObstaclePoint {
  double x = 0.0;
  double y = 0.0;
  double v_x = 0.0;
};

// Predicted obstacle motion sampled once per planning step, plus the shape
// parameters of its repulsive field. The field is a superellipse whose
// longitudinal extent grows with both vehicles' speeds and whose centre
// shifts against the speed difference, mimicking an asymmetric time-gap
// envelope around the obstacle.
struct ObstacleEllipse {
  std::vector<ObstaclePoint> trajectory;  // >= horizon + 1 samples
  double length = 5.0;    // size of the field at standstill [m]
  double time_gap = 1.2;  // speed-proportional growth [s]
  double r_y = 3.0;       // lateral field diameter [m]
  int p1 = 18;            // longitudinal exponent (even)
  int p2 = 18;            // lateral exponent (even)
};

struct EllipseParams {
  double r_x = 0.0;   // longitudinal field diameter [m]
  double shift = 0.0; // rearward displacement of the field centre [m]
};

// Weighted per-term sums of the objective; total() is the scalar cost.
struct CostBreakdown {
  double jerk = 0.0;
  double accel_x = 0.0;
  double accel_y = 0.0;
  double speed_x = 0.0;
  double speed_y = 0.0;
  double road = 0.0;
  double collision = 0.0;
  double negative_speed = 0.0;

  double total() const {
    return jerk + accel_x + accel_y + speed_x + speed_y + road + collision +
           negative_speed;
  }
};

// Everything the objective needs besides the ego state and controls.
struct PlanningContext {
  Weights weights;
  RoadGeometry road;
  DrivingGoals goals;
  std::vector<ObstacleEllipse> obstacles;
};

// Quadratic penalty outside the flat band [margin, width - margin], zero
// inside; continuously differentiable at the joints.
double road_penalty(double y, const RoadGeometry& road);
double road_penalty_slope(double y, const RoadGeometry& road);

// Field extent and centre shift for an obstacle moving at v_obstacle as seen
// by an ego moving at v_x.
EllipseParams ellipse_params(double v_x, double v_obstacle, double time_gap,
                             double length);

// Repulsion in (0, 1]: ~1 inside the field core, decaying steeply across the
// boundary. dx, dy are ego minus obstacle positions.
double collision_penalty(double dx, double dy, const EllipseParams& p,
                         double r_y, int p1, int p2);

// Smooth barrier approaching -2*v_x for reversing speeds and 0 for forward
// ones.
double negative_speed_penalty(double v_x, double epsilon);

// Objective over the horizon: states[k] and steps[k] feed the k-th stage for
// k = 0..K-1 (states.size() == K+1; the terminal state carries no stage
// cost). Obstacle trajectories must cover at least K samples.
CostBreakdown evaluate_cost(std::span<const VehicleState> states,
                            const ControlTrajectory& u,
                            const PlanningContext& ctx);

// Convenience wrapper rolling out from s0 first.
CostBreakdown total_cost(const VehicleState& s0, const ControlTrajectory& u,
                         const PlanningContext& ctx);

// Exact objective gradient with respect to every control component, obtained
// from one backward sweep of the adjoint recursion over the linear dynamics.
// The speed dependence of each obstacle field (extent and shift both vary
// with v_x at the step) is differentiated through. states must be the
// rollout of u from its first element.
std::vector<ControlInput> cost_gradient(std::span<const VehicleState> states,
                                        const ControlTrajectory& u,
                                        const PlanningContext& ctx);

}  // namespace mplan
