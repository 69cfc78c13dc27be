#include "mplan/cost.hpp"

#include <cassert>
#include <cmath>

namespace mplan {

namespace {

// x^p for small non-negative integer p, by squaring. Signed bases are fine;
// odd powers keep the sign.
double ipow(double x, int p) {
  double r = 1.0;
  double b = x;
  for (int e = p; e > 0; e >>= 1) {
    if (e & 1) r *= b;
    b *= b;
  }
  return r;
}

// Beyond this normalized distance the field is below ~1e-140 and both the
// penalty and its slopes are treated as exactly zero, keeping high powers
// away from overflow.
constexpr double kFieldCutoff = 1e8;

struct FieldSlopes {
  double value = 0.0;
  double d_x = 0.0;
  double d_y = 0.0;
  double d_vx = 0.0;
};

// Collision penalty and its partial derivatives with respect to the ego
// position and speed. The ego speed enters through both the field extent and
// the centre shift.
FieldSlopes field_slopes(double dx, double dy, double v_x,
                         const ObstacleEllipse& ob, double v_obstacle) {
  const EllipseParams p =
      ellipse_params(v_x, v_obstacle, ob.time_gap, ob.length);
  double hx = 0.5 * p.r_x;
  if (std::abs(hx) < 1e-12) hx = (hx < 0.0) ? -1e-12 : 1e-12;
  const double hy = 0.5 * ob.r_y;
  const double xi = (dx + p.shift) / hx;
  const double eta = dy / hy;
  FieldSlopes out;
  if (std::abs(xi) > kFieldCutoff || std::abs(eta) > kFieldCutoff) {
    return out;
  }
  const double t1 = ipow(xi, ob.p1);
  const double t2 = ipow(eta, ob.p2);
  const double denom = t1 + t2 + 1.0;
  const double c = 1.0 / denom;
  const double c2 = c * c;
  const double dt1_dxi = ob.p1 * ipow(xi, ob.p1 - 1);
  const double dt2_deta = ob.p2 * ipow(eta, ob.p2 - 1);
  // xi depends on v_x through both the shift (tg/2) and the extent (tg/2):
  // d(xi)/d(v_x) = (tg/2) * (1 - xi) / hx.
  const double dxi_dvx = 0.5 * ob.time_gap * (1.0 - xi) / hx;
  out.value = c;
  out.d_x = -c2 * dt1_dxi / hx;
  out.d_y = -c2 * dt2_deta / hy;
  out.d_vx = -c2 * dt1_dxi * dxi_dvx;
  return out;
}

}  // namespace

double road_penalty(double y, const RoadGeometry& road) {
  const double w = road.width();
  const double d = road.boundary_margin;
  if (y < d) {
    const double e = y - d;
    return e * e;
  }
  if (y > w - d) {
    const double e = y + d - w;
    return e * e;
  }
  return 0.0;
}

double road_penalty_slope(double y, const RoadGeometry& road) {
  const double w = road.width();
  const double d = road.boundary_margin;
  if (y < d) return 2.0 * (y - d);
  if (y > w - d) return 2.0 * (y + d - w);
  return 0.0;
}

EllipseParams ellipse_params(double v_x, double v_obstacle, double time_gap,
                             double length) {
  EllipseParams p;
  p.r_x = time_gap * v_x + time_gap * v_obstacle + length;
  p.shift = 0.5 * time_gap * (v_x - v_obstacle);
  return p;
}

double collision_penalty(double dx, double dy, const EllipseParams& p,
                         double r_y, int p1, int p2) {
  double hx = 0.5 * p.r_x;
  if (std::abs(hx) < 1e-12) hx = (hx < 0.0) ? -1e-12 : 1e-12;
  const double xi = (dx + p.shift) / hx;
  const double eta = dy / (0.5 * r_y);
  if (std::abs(xi) > kFieldCutoff || std::abs(eta) > kFieldCutoff) return 0.0;
  return 1.0 / (ipow(xi, p1) + ipow(eta, p2) + 1.0);
}

double negative_speed_penalty(double v_x, double epsilon) {
  return -v_x + std::sqrt(v_x * v_x + epsilon);
}

CostBreakdown evaluate_cost(std::span<const VehicleState> states,
                            const ControlTrajectory& u,
                            const PlanningContext& ctx) {
  const std::size_t K = u.steps.size();
  assert(states.size() == K + 1);
  const Weights& w = ctx.weights;
  CostBreakdown b;
  for (std::size_t k = 0; k < K; ++k) {
    const VehicleState& s = states[k];
    const ControlInput& c = u.steps[k];
    b.jerk += c.j_x * c.j_x;
    b.accel_x += s.a_x * s.a_x;
    b.accel_y += c.a_y * c.a_y;
    const double ev = s.v_x - ctx.goals.v_dx;
    b.speed_x += ev * ev;
    const double evy = s.v_y - ctx.goals.v_dy;
    b.speed_y += evy * evy;
    b.road += road_penalty(s.y, ctx.road);
    for (const ObstacleEllipse& ob : ctx.obstacles) {
      const ObstaclePoint& o = ob.trajectory[k];
      const EllipseParams p =
          ellipse_params(s.v_x, o.v_x, ob.time_gap, ob.length);
      b.collision +=
          collision_penalty(s.x - o.x, s.y - o.y, p, ob.r_y, ob.p1, ob.p2);
    }
    b.negative_speed += negative_speed_penalty(s.v_x, w.epsilon);
  }
  b.jerk *= w.jerk;
  b.accel_x *= w.accel_x;
  b.accel_y *= w.accel_y;
  b.speed_x *= w.speed_x;
  b.speed_y *= w.speed_y;
  b.road *= w.road;
  b.collision *= w.collision;
  b.negative_speed *= w.negative_speed;
  return b;
}

CostBreakdown total_cost(const VehicleState& s0, const ControlTrajectory& u,
                         const PlanningContext& ctx) {
  const std::vector<VehicleState> states = rollout(s0, u);
  return evaluate_cost(states, u, ctx);
}

std::vector<ControlInput> cost_gradient(std::span<const VehicleState> states,
                                        const ControlTrajectory& u,
                                        const PlanningContext& ctx) {
  const int K = static_cast<int>(u.steps.size());
  assert(static_cast<int>(states.size()) == K + 1);
  const Weights& w = ctx.weights;
  const double T = u.dt;
  const double T2 = T * T;

  std::vector<ControlInput> grad(K);

  // Adjoint of the stage sum: lambda carries dJ/d(state) accumulated over all
  // later stages; the terminal state has no stage cost, so lambda starts at
  // zero. Components follow the state order (x, y, v_x, v_y, a_x).
  double lx = 0.0, ly = 0.0, lvx = 0.0, lvy = 0.0, lax = 0.0;
  for (int k = K - 1; k >= 0; --k) {
    const VehicleState& s = states[k];
    const ControlInput& c = u.steps[k];

    // Control part of the stage plus the chain through the one-step map.
    grad[k].j_x = 2.0 * w.jerk * c.j_x + lx * T2 * T / 6.0 + lvx * 0.5 * T2 +
                  lax * T;
    grad[k].a_y = 2.0 * w.accel_y * c.a_y + ly * 0.5 * T2 + lvy * T;

    // State part of this stage.
    double gx = 0.0;
    double gy = w.road * road_penalty_slope(s.y, ctx.road);
    double gvx = 2.0 * w.speed_x * (s.v_x - ctx.goals.v_dx) +
                 w.negative_speed *
                     (-1.0 + s.v_x / std::sqrt(s.v_x * s.v_x + w.epsilon));
    double gvy = 2.0 * w.speed_y * (s.v_y - ctx.goals.v_dy);
    const double gax = 2.0 * w.accel_x * s.a_x;
    for (const ObstacleEllipse& ob : ctx.obstacles) {
      const ObstaclePoint& o = ob.trajectory[k];
      const FieldSlopes f =
          field_slopes(s.x - o.x, s.y - o.y, s.v_x, ob, o.v_x);
      gx += w.collision * f.d_x;
      gy += w.collision * f.d_y;
      gvx += w.collision * f.d_vx;
    }

    // Pull lambda back through the transposed dynamics.
    const double nlx = gx + lx;
    const double nly = gy + ly;
    const double nlvx = gvx + lx * T + lvx;
    const double nlvy = gvy + ly * T + lvy;
    const double nlax = gax + lx * 0.5 * T2 + lvx * T + lax;
    lx = nlx;
    ly = nly;
    lvx = nlvx;
    lvy = nlvy;
    lax = nlax;
  }
  return grad;
}

}  // namespace mplan
