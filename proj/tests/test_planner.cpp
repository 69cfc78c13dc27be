#include "doctest.h"

#include <cmath>
#include <optional>
#include <vector>

#include "mplan/planner.hpp"

using namespace mplan;

namespace {

EgoInfo make_ego(double x, double y, double v, double v_d,
                 VehicleClass cls = VehicleClass::AutomatedNonConnected) {
  EgoInfo e;
  e.id = 0;
  e.cls = cls;
  e.state = VehicleState{x, y, v, 0.0, 0.0};
  e.v_d = v_d;
  e.time_gap = 1.2;
  e.length = 4.5;
  return e;
}

ObstacleInfo make_obstacle(int id, double x, double y, double v,
                           VehicleClass cls = VehicleClass::Manual,
                           const Plan* broadcast = nullptr) {
  ObstacleInfo o;
  o.id = id;
  o.cls = cls;
  o.x = x;
  o.y = y;
  o.v_x = v;
  o.length = 4.5;
  o.broadcast = broadcast;
  return o;
}

bool same_controls(const ControlTrajectory& a, const ControlTrajectory& b) {
  if (a.steps.size() != b.steps.size()) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (a.steps[i].j_x != b.steps[i].j_x) return false;
    if (a.steps[i].a_y != b.steps[i].a_y) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("select_obstacles applies the closed asymmetric zone") {
  PlannerParams params;  // horizon 32 * step 0.25 = 8 s
  const EgoInfo ego = make_ego(1000.0, 4.5, 30.0, 30.0);
  // Reach: 240 m ahead, 120 m behind.
  std::vector<ObstacleInfo> others;
  others.push_back(make_obstacle(0, 1000.0, 4.5, 30.0));  // the ego itself
  others.push_back(make_obstacle(1, 1240.0, 1.5, 20.0));  // on the front edge
  others.push_back(make_obstacle(2, 1240.5, 1.5, 20.0));  // just past it
  others.push_back(make_obstacle(3, 880.0, 7.5, 20.0));   // on the rear edge
  others.push_back(make_obstacle(4, 879.5, 7.5, 20.0));   // just past it
  others.push_back(make_obstacle(5, 1001.0, 4.5, 20.0));  // right next to ego

  const std::vector<int> ids = select_obstacles(ego, others, params);
  CHECK(ids == std::vector<int>{1, 3, 5});

  const EgoInfo alone = make_ego(0.0, 4.5, 30.0, 30.0);
  CHECK(select_obstacles(alone, {}, params).empty());
}

TEST_CASE("predict_obstacles extrapolates at constant speed and lane") {
  PlannerConfig cfg;
  const EgoInfo ego = make_ego(90.0, 4.5, 25.0, 25.0);
  const std::vector<ObstacleInfo> others{make_obstacle(7, 100.0, 4.5, 20.0)};
  const std::vector<int> ids{7};

  const std::vector<ObstaclePrediction> preds =
      predict_obstacles(ego, others, ids, 3.0, cfg);
  REQUIRE(preds.size() == 1);
  const ObstaclePrediction& p = preds[0];
  CHECK(p.vehicle_id == 7);
  CHECK(p.source == PredictionSource::Extrapolated);
  REQUIRE(p.points.size() == 33);
  for (int k = 0; k <= 32; ++k) {
    CHECK(p.points[k].x == doctest::Approx(100.0 + 5.0 * k).epsilon(1e-14));
    CHECK(p.points[k].y == 4.5);
    CHECK(p.points[k].v_x == 20.0);
  }
}

TEST_CASE("predict_obstacles replays a broadcast plan time-aligned") {
  PlannerConfig cfg;
  const double T = cfg.params.step;

  // The obstacle published a 32-step plan one second ago that includes a
  // lateral manoeuvre.
  Plan bp;
  bp.created_at = 9.0;
  bp.controls.dt = T;
  bp.controls.steps.assign(32, ControlInput{});
  for (int i = 0; i < 8; ++i) bp.controls.steps[i].a_y = 0.5;
  for (int i = 8; i < 16; ++i) bp.controls.steps[i].a_y = -0.5;
  const VehicleState at_creation{50.0, 1.5, 20.0, 0.0, 0.0};
  bp.states = rollout(at_creation, bp.controls);

  const ObstacleInfo obs =
      make_obstacle(3, bp.states[4].x, bp.states[4].y, 20.0,
                    VehicleClass::AutomatedConnected, &bp);
  const std::vector<ObstacleInfo> others{obs};
  const std::vector<int> ids{3};

  SUBCASE("connected ego reads the plan, shifted and extended") {
    const EgoInfo ego =
        make_ego(40.0, 4.5, 22.0, 25.0, VehicleClass::AutomatedConnected);
    const std::vector<ObstaclePrediction> preds =
        predict_obstacles(ego, others, ids, 10.0, cfg);
    REQUIRE(preds.size() == 1);
    const ObstaclePrediction& p = preds[0];
    CHECK(p.source == PredictionSource::Broadcast);
    REQUIRE(p.points.size() == 33);
    // One second of the plan is already behind the obstacle: shift 4.
    for (int m = 0; m <= 28; ++m) {
      CHECK(p.points[m].x == bp.states[4 + m].x);
      CHECK(p.points[m].y == bp.states[4 + m].y);
      CHECK(p.points[m].v_x == bp.states[4 + m].v_x);
    }
    // Past the plan's end: terminal speed and lateral position held.
    const VehicleState& last = bp.states[32];
    for (int m = 29; m <= 32; ++m) {
      const double expect_x = last.x + last.v_x * (4 + m - 32) * T;
      CHECK(p.points[m].x == doctest::Approx(expect_x).epsilon(1e-14));
      CHECK(p.points[m].y == last.y);
      CHECK(p.points[m].v_x == last.v_x);
    }
  }

  SUBCASE("non-connected ego ignores the broadcast") {
    const EgoInfo ego =
        make_ego(40.0, 4.5, 22.0, 25.0, VehicleClass::AutomatedNonConnected);
    const std::vector<ObstaclePrediction> preds =
        predict_obstacles(ego, others, ids, 10.0, cfg);
    REQUIRE(preds.size() == 1);
    CHECK(preds[0].source == PredictionSource::Extrapolated);
    for (int k = 0; k <= 32; ++k) {
      CHECK(preds[0].points[k].x ==
            doctest::Approx(obs.x + 5.0 * k).epsilon(1e-14));
      CHECK(preds[0].points[k].y == obs.y);
    }
  }

  SUBCASE("manual obstacles always extrapolate") {
    const EgoInfo ego =
        make_ego(40.0, 4.5, 22.0, 25.0, VehicleClass::AutomatedConnected);
    std::vector<ObstacleInfo> manual_others{obs};
    manual_others[0].cls = VehicleClass::Manual;
    const std::vector<ObstaclePrediction> preds =
        predict_obstacles(ego, manual_others, ids, 10.0, cfg);
    REQUIRE(preds.size() == 1);
    CHECK(preds[0].source == PredictionSource::Extrapolated);
  }
}

TEST_CASE("check_safety judges the planned future, not the present") {
  PlannerConfig cfg;
  const EgoInfo ego = make_ego(0.0, 4.5, 20.0, 25.0);
  ControlTrajectory zero;
  zero.dt = cfg.params.step;
  zero.steps.assign(32, ControlInput{});
  const std::vector<VehicleState> states = rollout(ego.state, zero);

  SUBCASE("no obstacles is safe") {
    CHECK(check_safety(states, ego, {}, cfg));
  }

  SUBCASE("driving through an obstacle's centre is unsafe") {
    // Stationary obstacle 60 m ahead in-lane; the coasting ego reaches it
    // from clean air at step 12, so the conflict is entered fresh.
    ObstaclePrediction p;
    p.vehicle_id = 1;
    p.length = 4.5;
    for (std::size_t k = 0; k < states.size(); ++k) {
      p.points.push_back({60.0, states[0].y, 0.0});
    }
    const std::vector<ObstaclePrediction> preds{p};
    CHECK_FALSE(check_safety(states, ego, preds, cfg));
  }

  SUBCASE("a conflict held since the start is tolerated while it drains") {
    // Same-speed leader pinned half an envelope ahead for the whole horizon:
    // the conflict is inherited at step 0 and never entered fresh. Vetoing
    // it would leave a vehicle at a sub-nominal gap with no plan at all.
    ObstaclePrediction p;
    p.vehicle_id = 1;
    p.length = 4.5;
    for (const VehicleState& s : states) {
      p.points.push_back({s.x + 15.0, s.y, s.v_x});
    }
    const std::vector<ObstaclePrediction> preds{p};
    CHECK(check_safety(states, ego, preds, cfg));
  }

  SUBCASE("initial overlap alone does not condemn a diverging path") {
    ObstaclePrediction p;
    p.vehicle_id = 1;
    p.length = 4.5;
    // Meets the ego at step 0 and races away backwards afterwards.
    for (std::size_t k = 0; k < states.size(); ++k) {
      p.points.push_back(
          {states[0].x - 20.0 * cfg.params.step * static_cast<double>(k),
           states[0].y, -20.0});
    }
    const std::vector<ObstaclePrediction> preds{p};
    CHECK(check_safety(states, ego, preds, cfg));
  }

  SUBCASE("same-lane footprint overlap is unsafe even outside the field core") {
    // A 1 m/s creep toward a parked obstacle: at crawl speed the field core
    // ends 3.45 m out but the bodies meet at 4.5 m. The plan stops (in
    // distance) 4.2 m short of the obstacle: past contact, outside the core,
    // so only the footprint clause can flag it.
    const EgoInfo still = make_ego(0.0, 4.5, 1.0, 25.0);
    ControlTrajectory hold;
    hold.dt = cfg.params.step;
    hold.steps.assign(32, ControlInput{});
    const std::vector<VehicleState> creep = rollout(still.state, hold);
    ObstaclePrediction p;
    p.vehicle_id = 1;
    p.length = 4.5;
    for (std::size_t k = 0; k < creep.size(); ++k) {
      p.points.push_back({12.2, 4.5, 0.0});
    }
    const std::vector<ObstaclePrediction> preds{p};
    CHECK_FALSE(check_safety(creep, still, preds, cfg));
  }

  SUBCASE("a neighbour passing a full lane width aside is safe") {
    // Faster vehicle sweeps through from behind, centred one lane over: the
    // ego body stays half a metre clear of the passer's slot, and the field
    // is far too narrow laterally to reach it.
    ObstaclePrediction p;
    p.vehicle_id = 1;
    p.length = 4.5;
    for (std::size_t k = 0; k < states.size(); ++k) {
      const double t = cfg.params.step * static_cast<double>(k);
      p.points.push_back({-20.0 + 30.0 * t, 7.5, 30.0});
    }
    const std::vector<ObstaclePrediction> preds{p};
    CHECK(check_safety(states, ego, preds, cfg));
  }

  SUBCASE("being passed while drifting into the neighbour lane is unsafe") {
    // Same sweep, but the ego rides 1.7 m from the passer's centreline —
    // its body 0.8 m inside the passer's slot. The field stays below
    // threshold out there (c is about 0.1 beside the body), so only the
    // slot clause can catch the conflict.
    const EgoInfo drifted = make_ego(0.0, 5.8, 20.0, 25.0);
    ControlTrajectory hold;
    hold.dt = cfg.params.step;
    hold.steps.assign(32, ControlInput{});
    const std::vector<VehicleState> drift = rollout(drifted.state, hold);
    ObstaclePrediction p;
    p.vehicle_id = 1;
    p.length = 4.5;
    for (std::size_t k = 0; k < drift.size(); ++k) {
      const double t = cfg.params.step * static_cast<double>(k);
      p.points.push_back({-20.0 + 30.0 * t, 7.5, 30.0});
    }
    const std::vector<ObstaclePrediction> preds{p};
    CHECK_FALSE(check_safety(drift, drifted, preds, cfg));
  }

  SUBCASE("bumper contact inherited at the root does not freeze the plan") {
    // Already touching a parked obstacle (post-contact or jammed state):
    // holding position neither enters anything fresh nor worsens it.
    const EgoInfo still = make_ego(0.0, 4.5, 0.0, 25.0);
    ControlTrajectory hold;
    hold.dt = cfg.params.step;
    hold.steps.assign(32, ControlInput{});
    const std::vector<VehicleState> parked = rollout(still.state, hold);
    ObstaclePrediction p;
    p.vehicle_id = 1;
    p.length = 4.5;
    for (std::size_t k = 0; k < parked.size(); ++k) {
      p.points.push_back({3.0, 4.5, 0.0});
    }
    const std::vector<ObstaclePrediction> preds{p};
    CHECK(check_safety(parked, still, preds, cfg));
  }
}

TEST_CASE("brake_fallback_controls brakes hard but never reverses") {
  ControlBounds b;

  SUBCASE("from motorway speed") {
    const VehicleState s0{0.0, 4.5, 30.0, 0.0, 0.0};
    const ControlTrajectory u = brake_fallback_controls(s0, 16, 0.25, b);
    REQUIRE(u.steps.size() == 16);
    for (const ControlInput& c : u.steps) {
      CHECK(c.j_x >= b.j_x_min);
      CHECK(c.j_x <= b.j_x_max);
      CHECK(c.a_y == 0.0);
    }
    const std::vector<VehicleState> states = rollout(s0, u);
    for (std::size_t k = 1; k < states.size(); ++k) {
      CHECK(states[k].v_x <= states[k - 1].v_x + 1e-12);
      CHECK(states[k].v_x >= -1e-9);
    }
    CHECK(states.back().v_x < 22.0);  // roughly -3 m/s^2 sustained
  }

  SUBCASE("near standstill the taper holds the speed at zero") {
    const VehicleState s0{0.0, 4.5, 1.0, 0.0, 0.0};
    const ControlTrajectory u = brake_fallback_controls(s0, 16, 0.25, b);
    const std::vector<VehicleState> states = rollout(s0, u);
    for (const VehicleState& s : states) CHECK(s.v_x >= -1e-9);
    CHECK(states.back().v_x < 0.3);
  }

  SUBCASE("residual lateral speed is cancelled, not frozen in") {
    // Mid-lane-change fallback: drifting at 1.2 m/s toward the road edge.
    // The lateral commands must null the drift, inside bounds, instead of
    // carrying the vehicle off the road for the whole braking window.
    const VehicleState s0{0.0, 6.0, 20.0, 1.2, 0.0};
    const ControlTrajectory u = brake_fallback_controls(s0, 16, 0.25, b);
    for (const ControlInput& c : u.steps) {
      CHECK(c.a_y >= b.a_y_min);
      CHECK(c.a_y <= b.a_y_max);
    }
    const std::vector<VehicleState> states = rollout(s0, u);
    CHECK(std::abs(states.back().v_y) < 1e-9);
    CHECK(states.back().y < 6.6);  // drift arrested within half a metre
  }
}

TEST_CASE("make_plan on a free road tracks the desired speed") {
  PlannerConfig cfg;
  const EgoInfo ego = make_ego(0.0, 4.5, 25.0, 25.0);

  const PlanResult r = make_plan(ego, {}, 0.0, 42, cfg);
  CHECK(r.plan.id == 42);
  CHECK(r.plan.created_at == 0.0);
  CHECK(r.plan.valid_until == doctest::Approx(4.0).epsilon(1e-14));
  CHECK_FALSE(r.plan.safety_mode);
  CHECK_FALSE(r.plan.fallback);
  CHECK(r.diag.dp_feasible);
  REQUIRE(r.plan.controls.steps.size() == 32);
  REQUIRE(r.plan.states.size() == 33);
  CHECK(r.plan.obstacle_ids.empty());
  CHECK(r.plan.predictions.empty());
  // Only the smoothed reverse-speed barrier contributes at v = v_d.
  CHECK(r.plan.cost < 0.2);
  for (const ControlInput& c : r.plan.controls.steps) {
    CHECK(std::abs(c.j_x) < 0.1);
    CHECK(std::abs(c.a_y) < 0.1);
  }
  CHECK(r.plan.states.back().v_x == doctest::Approx(25.0).epsilon(1e-3));
}

TEST_CASE("make_plan escapes a slow leader through the free lane") {
  PlannerConfig cfg;
  const EgoInfo ego = make_ego(0.0, 1.5, 25.0, 25.0);  // lane 0

  SUBCASE("with room to cross, the plan changes lane at speed") {
    // 55 m back from an 18 m/s leader: holding 25 m/s in-lane runs into the
    // envelope near the horizon's end, and the lateral crossing completes
    // before the gap closes into the field.
    const std::vector<ObstacleInfo> others{make_obstacle(1, 55.0, 1.5, 18.0)};

    const PlanResult r = make_plan(ego, others, 0.0, 1, cfg);
    CHECK_FALSE(r.plan.safety_mode);
    CHECK(r.diag.dp_feasible);
    REQUIRE(r.plan.states.size() == 33);
    CHECK(lane_of(r.plan.states.back().y, cfg.road) == 1);
    CHECK(r.plan.states.back().v_x > 20.0);
    CHECK(r.plan.obstacle_ids == std::vector<int>{1});
  }

  SUBCASE("too late to cross cleanly, the plan brakes instead") {
    // 40 m back closing at 13 m/s: any crossing started now sweeps through
    // the leader's field before the lateral offset clears it, and even full
    // braking cannot restore the nominal gap within the horizon.
    const std::vector<ObstacleInfo> others{make_obstacle(1, 40.0, 1.5, 12.0)};

    const PlanResult r = make_plan(ego, others, 0.0, 1, cfg);
    CHECK(r.plan.safety_mode);
    REQUIRE(!r.plan.states.empty());
    CHECK(r.plan.states.back().v_x < ego.state.v_x);
    CHECK(lane_of(r.plan.states.back().y, cfg.road) == 0);
  }
}

TEST_CASE("make_plan falls back to braking when boxed in") {
  PlannerConfig cfg;
  const EgoInfo ego = make_ego(0.0, 4.5, 20.0, 30.0);  // lane 1
  const std::vector<ObstacleInfo> others{
      make_obstacle(1, 10.0, 4.5, 5.0),   // very close, very slow leader
      make_obstacle(2, -1.0, 1.5, 20.0),  // alongside in lane 0
      make_obstacle(3, -1.0, 7.5, 20.0),  // alongside in lane 2
  };

  const PlanResult r = make_plan(ego, others, 2.0, 9, cfg);
  CHECK(r.diag.used_override);
  CHECK(r.diag.used_fallback);
  CHECK(r.plan.safety_mode);
  CHECK(r.plan.fallback);
  REQUIRE(r.plan.controls.steps.size() == 16);  // half horizon
  CHECK(r.plan.valid_until == doctest::Approx(2.0 + 2.0).epsilon(1e-14));
  for (const ControlInput& c : r.plan.controls.steps) {
    CHECK(c.a_y == 0.0);
  }
  // The braking plan sheds speed immediately.
  CHECK(r.plan.states.back().v_x < ego.state.v_x);
  CHECK(r.plan.cost > 0.0);
}

TEST_CASE("prediction source is the only connected/non-connected fork") {
  PlannerConfig cfg;
  const std::vector<ObstacleInfo> others{
      make_obstacle(1, 60.0, 4.5, 18.0, VehicleClass::Manual),
      make_obstacle(2, -40.0, 1.5, 28.0, VehicleClass::Manual)};

  const EgoInfo conn =
      make_ego(0.0, 4.5, 24.0, 27.0, VehicleClass::AutomatedConnected);
  const EgoInfo non =
      make_ego(0.0, 4.5, 24.0, 27.0, VehicleClass::AutomatedNonConnected);

  const PlanResult a = make_plan(conn, others, 0.0, 1, cfg);
  const PlanResult b = make_plan(non, others, 0.0, 1, cfg);
  CHECK(a.plan.cost == b.plan.cost);
  CHECK(same_controls(a.plan.controls, b.plan.controls));
}

TEST_CASE("needs_replan triggers in priority order") {
  PlannerConfig cfg;
  const EgoInfo ego = make_ego(0.0, 4.5, 25.0, 25.0);
  const std::vector<ObstacleInfo> at_plan_time{
      make_obstacle(1, 100.0, 4.5, 20.0)};
  const PlanResult r = make_plan(ego, at_plan_time, 0.0, 1, cfg);
  const Plan& plan = r.plan;
  REQUIRE(plan.valid_until == doctest::Approx(4.0));

  EgoInfo later = ego;
  later.state.x = 25.0;

  SUBCASE("unchanged world, one second in: no trigger") {
    const std::vector<ObstacleInfo> now{make_obstacle(1, 120.0, 4.5, 20.0)};
    CHECK(needs_replan(later, plan, now, 1.0, false, cfg) ==
          ReplanTrigger::None);
  }

  SUBCASE("tracking failure dominates everything") {
    const std::vector<ObstacleInfo> now{make_obstacle(1, 120.0, 4.5, 18.0)};
    CHECK(needs_replan(later, plan, now, 5.0, true, cfg) ==
          ReplanTrigger::TrackingFailure);
  }

  SUBCASE("half-horizon expiry") {
    const std::vector<ObstacleInfo> now{make_obstacle(1, 180.0, 4.5, 20.0)};
    CHECK(needs_replan(later, plan, now, 4.0, false, cfg) ==
          ReplanTrigger::HalfHorizon);
    CHECK(needs_replan(later, plan, now, 3.75, false, cfg) ==
          ReplanTrigger::None);
  }

  SUBCASE("speed deviation beyond one metre per second") {
    const std::vector<ObstacleInfo> now{make_obstacle(1, 120.0, 4.5, 18.5)};
    CHECK(needs_replan(later, plan, now, 1.0, false, cfg) ==
          ReplanTrigger::ObstacleDeviation);
    const std::vector<ObstacleInfo> close{make_obstacle(1, 120.0, 4.5, 19.5)};
    CHECK(needs_replan(later, plan, close, 1.0, false, cfg) ==
          ReplanTrigger::None);
  }

  SUBCASE("lane departure from the prediction") {
    const std::vector<ObstacleInfo> now{make_obstacle(1, 120.0, 1.5, 20.0)};
    CHECK(needs_replan(later, plan, now, 1.0, false, cfg) ==
          ReplanTrigger::ObstacleDeviation);
  }

  SUBCASE("a vehicle entering the zone forces a replan") {
    const std::vector<ObstacleInfo> now{make_obstacle(1, 120.0, 4.5, 20.0),
                                        make_obstacle(9, 80.0, 1.5, 22.0)};
    CHECK(needs_replan(later, plan, now, 1.0, false, cfg) ==
          ReplanTrigger::NewObstacle);
  }

  SUBCASE("a planned-against vehicle that exited is ignored") {
    const std::vector<ObstacleInfo> now;
    CHECK(needs_replan(later, plan, now, 1.0, false, cfg) ==
          ReplanTrigger::None);
  }
}
