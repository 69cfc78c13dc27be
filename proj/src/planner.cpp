#include "mplan/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace mplan {

namespace {

using Clock = std::chrono::steady_clock;

long long micros_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() -
                                                               t0)
      .count();
}

const ObstacleInfo* find_info(std::span<const ObstacleInfo> others, int id) {
  for (const ObstacleInfo& o : others) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

// The repulsive fields the ego plans against: one per prediction. The
// length term is the mean of the two bodies — the centre distance at bumper
// contact, which is the smallest admissible gap once both stand still.
std::vector<ObstacleEllipse> field_obstacles(
    std::span<const ObstaclePrediction> predictions, double ego_time_gap,
    double ego_length) {
  std::vector<ObstacleEllipse> out;
  out.reserve(predictions.size());
  for (const ObstaclePrediction& p : predictions) {
    ObstacleEllipse ob;
    ob.trajectory = p.points;
    ob.length = 0.5 * (ego_length + p.length);
    ob.time_gap = ego_time_gap;
    out.push_back(std::move(ob));
  }
  return out;
}

struct Attempt {
  ControlTrajectory controls;
  std::vector<VehicleState> states;
  double cost = 0.0;
};

// Overwrites the lateral commands so they cancel the residual lateral speed
// at the bound and then hold the heading straight. A frozen lateral command
// would let leftover lateral speed carry the vehicle across lanes or off the
// road.
void straighten_heading(ControlTrajectory& u, double v_y0,
                        const ControlBounds& b) {
  double vy = v_y0;
  for (ControlInput& c : u.steps) {
    c.a_y = std::clamp(-vy / u.dt, b.a_y_min, b.a_y_max);
    vy += c.a_y * u.dt;
  }
}

// One pass of the seed-then-descend pipeline over `steps` planning steps.
// The best-first variant runs alongside the backward sweep so both stages
// are timed on the live problem; the backward plan seeds the descent.
std::optional<Attempt> attempt_plan(const EgoInfo& ego,
                                    std::span<const ObstacleEllipse> fields,
                                    int steps, double v_goal,
                                    bool allow_lateral,
                                    const PlannerConfig& cfg,
                                    PlanDiagnostics& diag) {
  DPConfig dp = cfg.dp;
  dp.coarse_steps = std::max(
      1, static_cast<int>(std::lround(steps * cfg.params.step /
                                      dp.coarse_dt)));
  dp.allow_lane_change = dp.allow_lane_change && allow_lateral;

  Clock::time_point t0 = Clock::now();
  const std::optional<DPPlan> seed = solve_backward(
      ego.state, v_goal, cfg.road, fields, cfg.params.step, dp);
  diag.dp_micros += micros_since(t0);

  t0 = Clock::now();
  const std::optional<DPPlan> bb = solve_forward_bnb(
      ego.state, v_goal, cfg.road, fields, cfg.params.step, dp);
  diag.bnb_micros += micros_since(t0);
  (void)bb;

  if (!seed) return std::nullopt;
  diag.dp_feasible = true;
  diag.dp_cost = seed->cost;

  ControlBounds bounds = cfg.bounds;
  if (!allow_lateral) {
    bounds.a_y_min = 0.0;
    bounds.a_y_max = 0.0;
  }
  const ControlTrajectory u0 =
      lift_to_continuous(*seed, ego.state, cfg.params.step, steps, bounds,
                         cfg.road.lane_width, dp);

  PlanningContext ctx;
  ctx.weights = cfg.weights;
  ctx.road = cfg.road;
  ctx.goals.v_dx = v_goal;
  ctx.obstacles.assign(fields.begin(), fields.end());

  t0 = Clock::now();
  const SolveResult res = solve(ego.state, u0, bounds, ctx, cfg.solver);
  diag.fda_micros += micros_since(t0);
  if (!res.usable()) return std::nullopt;

  diag.fda_cost = res.cost.total();
  diag.fda_iterations = res.iterations;
  return Attempt{res.controls, res.states, res.cost.total()};
}

}  // namespace

const char* to_string(ReplanTrigger t) {
  switch (t) {
    case ReplanTrigger::None: return "None";
    case ReplanTrigger::HalfHorizon: return "HalfHorizon";
    case ReplanTrigger::ObstacleDeviation: return "ObstacleDeviation";
    case ReplanTrigger::NewObstacle: return "NewObstacle";
    case ReplanTrigger::TrackingFailure: return "TrackingFailure";
  }
  return "None";
}

std::vector<int> select_obstacles(const EgoInfo& ego,
                                  std::span<const ObstacleInfo> others,
                                  const PlannerParams& params) {
  const double span = ego.v_d * params.horizon * params.step;
  const double ahead = params.zone_ahead * span;
  const double behind = params.zone_behind * span;
  std::vector<int> ids;
  for (const ObstacleInfo& o : others) {
    if (o.id == ego.id) continue;
    const double dx = o.x - ego.state.x;
    if (dx >= -behind && dx <= ahead) ids.push_back(o.id);
  }
  return ids;
}

std::vector<ObstaclePrediction> predict_obstacles(
    const EgoInfo& ego, std::span<const ObstacleInfo> others,
    std::span<const int> ids, double now, const PlannerConfig& cfg) {
  const int K = cfg.params.horizon;
  const double T = cfg.params.step;
  std::vector<ObstaclePrediction> out;
  out.reserve(ids.size());
  for (int id : ids) {
    const ObstacleInfo* o = find_info(others, id);
    if (!o) continue;
    ObstaclePrediction p;
    p.vehicle_id = id;
    p.length = o->length;
    p.points.reserve(K + 1);

    const bool use_broadcast = ego.cls == VehicleClass::AutomatedConnected &&
                               o->cls == VehicleClass::AutomatedConnected &&
                               o->broadcast != nullptr &&
                               !o->broadcast->states.empty();
    if (use_broadcast) {
      const Plan& bp = *o->broadcast;
      const int last = static_cast<int>(bp.states.size()) - 1;
      const long long shift =
          std::max(0LL, std::llround((now - bp.created_at) / T));
      for (int m = 0; m <= K; ++m) {
        const long long idx = shift + m;
        if (idx <= last) {
          const VehicleState& s = bp.states[idx];
          p.points.push_back({s.x, s.y, s.v_x});
        } else {
          const VehicleState& s = bp.states[last];
          p.points.push_back(
              {s.x + s.v_x * (idx - last) * T, s.y, s.v_x});
        }
      }
      p.source = PredictionSource::Broadcast;
    } else {
      for (int m = 0; m <= K; ++m) {
        p.points.push_back({o->x + o->v_x * m * T, o->y, o->v_x});
      }
      p.source = PredictionSource::Extrapolated;
    }
    out.push_back(std::move(p));
  }
  return out;
}

bool check_safety(std::span<const VehicleState> states, const EgoInfo& ego,
                  std::span<const ObstaclePrediction> predictions,
                  const PlannerConfig& cfg) {
  const ObstacleEllipse shape;  // lateral extent and exponents
  for (const ObstaclePrediction& p : predictions) {
    // The zero-speed length term is the centre distance at bumper contact.
    const double len_term = 0.5 * (ego.length + p.length);
    // A conflict at the initial state is the uncontrollable present: the
    // strongest escape plan still spends its first steps inside the envelope
    // it inherited, so an inherited conflict is tolerated until it first
    // clears. Entering fresh or re-entering after clearing is unsafe. Field
    // proximity and body contact are tracked separately: a plan tolerated
    // inside the field may still not advance into contact.
    bool field_grace = false;
    bool body_grace = false;
    for (std::size_t k = 0; k < states.size(); ++k) {
      const VehicleState& s = states[k];
      const ObstaclePoint& q = p.points[k];
      const double dx = s.x - q.x;
      const double dy = s.y - q.y;
      const EllipseParams ep =
          ellipse_params(s.v_x, q.v_x, ego.time_gap, len_term);
      const double c =
          collision_penalty(dx, dy, ep, shape.r_y, shape.p1, shape.p2);
      const bool in_field = c > cfg.params.unsafe_field_level;
      // While overlapping longitudinally, the ego's body must stay out of
      // the obstacle's lane-width slot: conflict inside half a slot plus
      // half a body. Centred neighbours pass with half a metre spare, but a
      // drift toward an alongside vehicle is caught well before contact.
      const bool in_body =
          std::abs(dy) < 0.5 * (cfg.road.lane_width + kVehicleWidth) &&
          std::abs(dx) < len_term;
      if (k == 0) {
        field_grace = in_field;
        body_grace = in_body;
        continue;
      }
      if (in_body && !body_grace) return false;
      if (!in_body) body_grace = false;
      if (in_field && !field_grace) return false;
      if (!in_field) field_grace = false;
    }
  }
  return true;
}

ControlTrajectory brake_fallback_controls(const VehicleState& s0, int steps,
                                          double dt, const ControlBounds& b) {
  ControlTrajectory u;
  u.dt = dt;
  u.steps.assign(std::max(0, steps), ControlInput{});
  straighten_heading(u, s0.v_y, b);
  double v = s0.v_x;
  double a = s0.a_x;
  const double jm = b.j_x_max;
  for (ControlInput& c : u.steps) {
    // Comfortable braking, tapered so that ramping the deceleration back out
    // at the jerk bound consumes no more speed than remains.
    const double a_des =
        -std::min(3.0, 0.9 * std::sqrt(std::max(0.0, 2.0 * jm * v)));
    double j = std::clamp((a_des - a) / dt, b.j_x_min, jm);
    // Stay inside the recoverable region v' >= a'^2 / (2 j_max): from there a
    // max-jerk ramp-out always reaches a = 0 before the speed reaches zero,
    // and j = j_max preserves the region exactly. Quadratic in j below.
    const double qa = dt * dt / (2.0 * jm);
    const double qb = 0.5 * dt * dt - a * dt / jm;
    const double qc = v + a * dt - a * a / (2.0 * jm);
    const double disc = qb * qb + 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double j_lo = (qb - std::sqrt(disc)) / (2.0 * qa);
      j = std::clamp(std::max(j, j_lo), b.j_x_min, jm);
    } else {
      j = jm;  // entered unrecoverable; unwind as fast as the bound allows
    }
    c.j_x = j;
    v += a * dt + 0.5 * j * dt * dt;
    a += j * dt;
  }
  return u;
}

PlanResult make_plan(const EgoInfo& ego, std::span<const ObstacleInfo> others,
                     double now, int plan_id, const PlannerConfig& cfg) {
  const PlannerParams& P = cfg.params;
  PlanResult out;
  Plan& plan = out.plan;
  plan.id = plan_id;
  plan.created_at = now;
  plan.obstacle_ids = select_obstacles(ego, others, P);
  plan.predictions =
      predict_obstacles(ego, others, plan.obstacle_ids, now, cfg);
  const std::vector<ObstacleEllipse> fields =
      field_obstacles(plan.predictions, ego.time_gap, ego.length);

  std::optional<Attempt> found = attempt_plan(
      ego, fields, P.horizon, ego.v_d, /*allow_lateral=*/true, cfg, out.diag);
  if (found && check_safety(found->states, ego, plan.predictions, cfg)) {
    plan.controls = std::move(found->controls);
    plan.states = std::move(found->states);
    plan.cost = found->cost;
  } else {
    out.diag.used_override = true;
    const int half = std::max(
        1, static_cast<int>(std::lround(P.horizon * P.override_horizon_factor)));

    // Re-plan against the leader: match a fraction of its speed over half
    // the horizon. Without a leader the conflict is lateral; hold the lane.
    const ObstacleInfo* leader = nullptr;
    const int ego_lane = lane_of(ego.state.y, cfg.road);
    for (int id : plan.obstacle_ids) {
      const ObstacleInfo* o = find_info(others, id);
      if (!o || o->x <= ego.state.x) continue;
      if (lane_of(o->y, cfg.road) != ego_lane) continue;
      if (!leader || o->x < leader->x) leader = o;
    }

    if (leader) {
      found = attempt_plan(ego, fields, half,
                           P.override_speed_factor * leader->v_x,
                           /*allow_lateral=*/true, cfg, out.diag);
    } else {
      found = attempt_plan(ego, fields, half, ego.v_d,
                           /*allow_lateral=*/false, cfg, out.diag);
      if (found && ego.state.v_y != 0.0) {
        // Lateral bounds were pinned to zero for this attempt; splice the
        // heading straightening back in. The point-mass axes are decoupled,
        // so the optimized longitudinal controls remain optimal.
        straighten_heading(found->controls, ego.state.v_y, cfg.bounds);
        found->states = rollout(ego.state, found->controls);
        PlanningContext ctx;
        ctx.weights = cfg.weights;
        ctx.road = cfg.road;
        ctx.goals.v_dx = ego.v_d;
        ctx.obstacles = fields;
        found->cost =
            evaluate_cost(found->states, found->controls, ctx).total();
      }
    }

    if (found && check_safety(found->states, ego, plan.predictions, cfg)) {
      plan.controls = std::move(found->controls);
      plan.states = std::move(found->states);
      plan.cost = found->cost;
      plan.safety_mode = true;
    } else {
      out.diag.used_fallback = true;
      plan.safety_mode = true;
      plan.fallback = true;
      plan.controls =
          brake_fallback_controls(ego.state, half, P.step, cfg.bounds);
      plan.states = rollout(ego.state, plan.controls);
      PlanningContext ctx;
      ctx.weights = cfg.weights;
      ctx.road = cfg.road;
      ctx.goals.v_dx = ego.v_d;
      ctx.obstacles = fields;
      plan.cost = evaluate_cost(plan.states, plan.controls, ctx).total();
    }
  }

  plan.valid_until =
      now + 0.5 * static_cast<double>(plan.controls.steps.size()) * P.step;
  return out;
}

ReplanTrigger needs_replan(const EgoInfo& ego, const Plan& plan,
                           std::span<const ObstacleInfo> others, double now,
                           bool tracking_failed, const PlannerConfig& cfg) {
  if (tracking_failed) return ReplanTrigger::TrackingFailure;
  if (now >= plan.valid_until) return ReplanTrigger::HalfHorizon;

  for (const ObstaclePrediction& p : plan.predictions) {
    const ObstacleInfo* o = find_info(others, p.vehicle_id);
    if (!o) continue;  // exited; nothing left to deviate
    const long long last = static_cast<long long>(p.points.size()) - 1;
    const long long m = std::clamp(
        std::llround((now - plan.created_at) / cfg.params.step), 0LL, last);
    const ObstaclePoint& q = p.points[m];
    if (std::abs(o->v_x - q.v_x) > cfg.params.replan_speed_dev) {
      return ReplanTrigger::ObstacleDeviation;
    }
    if (lane_of(o->y, cfg.road) != lane_of(q.y, cfg.road)) {
      return ReplanTrigger::ObstacleDeviation;
    }
  }

  const std::vector<int> ids = select_obstacles(ego, others, cfg.params);
  for (int id : ids) {
    if (std::find(plan.obstacle_ids.begin(), plan.obstacle_ids.end(), id) ==
        plan.obstacle_ids.end()) {
      return ReplanTrigger::NewObstacle;
    }
  }
  return ReplanTrigger::None;
}

}  // namespace mplan
