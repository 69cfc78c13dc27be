#pragma once

#include <vector>

namespace mplan {

// Planar point-mass vehicle state. x runs along the road, y across it with
// y = 0 at the right road edge. Longitudinal motion is jerk-controlled,
// lateral motion is acceleration-controlled.
struct VehicleState {
  double x = 0.0;    // longitudinal position [m]
  double y = 0.0;    // lateral position [m]
  double v_x = 0.0;  // longitudinal speed [m/s]
  double v_y = 0.0;  // lateral speed [m/s]
  double a_x = 0.0;  // longitudinal acceleration [m/s^2]
};

struct ControlInput {
  double j_x = 0.0;  // longitudinal jerk [m/s^3]
  double a_y = 0.0;  // lateral acceleration [m/s^2]
};

struct ControlBounds {
  double j_x_min = -4.0;
  double j_x_max = 4.0;
  double a_y_min = -1.5;
  double a_y_max = 1.5;
};

// Piecewise-constant controls held over consecutive steps of length dt.
struct ControlTrajectory {
  std::vector<ControlInput> steps;
  double dt = 0.25;
};

// One step of length dt under constant controls. The polynomial update
// integrates the integrator chains exactly, so n equal-control steps of
// length dt compose to a single step of length n*dt.
inline VehicleState step_state(const VehicleState& s, const ControlInput& u,
                               double dt) {
  const double dt2 = dt * dt;
  VehicleState n;
  n.x = s.x + s.v_x * dt + 0.5 * s.a_x * dt2 + u.j_x * dt2 * dt / 6.0;
  n.y = s.y + s.v_y * dt + 0.5 * u.a_y * dt2;
  n.v_x = s.v_x + s.a_x * dt + 0.5 * u.j_x * dt2;
  n.v_y = s.v_y + u.a_y * dt;
  n.a_x = s.a_x + u.j_x * dt;
  return n;
}

// States visited under the control sequence; element 0 is the initial state,
// element k the state after k steps.
inline std::vector<VehicleState> rollout(const VehicleState& s0,
                                         const ControlTrajectory& u) {
  std::vector<VehicleState> states;
  states.reserve(u.steps.size() + 1);
  states.push_back(s0);
  for (const ControlInput& step : u.steps) {
    states.push_back(step_state(states.back(), step, u.dt));
  }
  return states;
}

}  // namespace mplan
