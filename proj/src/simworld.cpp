#include "mplan/simworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <limits>
#include <utility>

namespace mplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEmergencyBrake = -9.0;  // commanded on non-positive gaps

TripRecord make_record(const Vehicle& v, double t, bool completed) {
  TripRecord r;
  r.id = v.id;
  r.cls = v.cls;
  r.v_d = v.v_d;
  r.time_gap = v.time_gap;
  r.length = v.length;
  r.entered_at = v.entered_at;
  r.exited_at = completed ? t : 0.0;
  r.completed = completed;
  r.distance = v.state.x;
  r.steps = v.steps_recorded;
  r.dev_sum = v.dev_sum;
  r.lane_changes = v.lane_changes;
  r.plans = v.plans_made;
  r.overrides = v.overrides;
  r.fallbacks = v.fallbacks;
  return r;
}

}  // namespace

const char* to_string(AuditKind k) {
  switch (k) {
    case AuditKind::Overlap: return "overlap";
    case AuditKind::RoadDeparture: return "road_departure";
    case AuditKind::NegativeSpeed: return "negative_speed";
    case AuditKind::EmergencyGap: return "emergency_gap";
    case AuditKind::Conservation: return "conservation";
  }
  return "unknown";
}

double idm_accel(double gap, double v, double v_lead,
                 const ManualDriverParams& p) {
  const double dyn =
      v * p.T_hw + v * (v - v_lead) / (2.0 * std::sqrt(p.a_max * p.b_comf));
  const double s_star = p.s0_jam + std::max(0.0, dyn);
  const double free_term = std::pow(v / p.v0, p.delta_exp);
  const double gap_term = s_star / gap;
  return p.a_max * (1.0 - free_term - gap_term * gap_term);
}

World::World(WorldConfig cfg)
    : cfg_(std::move(cfg)),
      rng_(cfg_.spawn.seed),
      arrivals_(std::max(1e-12, cfg_.spawn.inflow / 3600.0 * cfg_.dt)) {}

void World::step() {
  const double now = clock_;
  const double t_end = now + cfg_.dt;
  plan_phase(now);
  manual_lane_change_phase(now);
  car_following_phase(t_end);
  advance_phase(now);
  exit_phase(t_end);
  spawn_phase(t_end);
  audit_phase(t_end);
  record_phase(t_end);
  // Plans created during this step become visible to others from the next.
  for (Vehicle& v : vehicles_) {
    if (v.cls == VehicleClass::Manual || !v.plan) continue;
    if (!v.published || v.published->id != v.plan->id) v.published = v.plan;
  }
  clock_ = t_end;
}

std::vector<ObstacleInfo> World::snapshot_infos() const {
  std::vector<ObstacleInfo> infos;
  infos.reserve(vehicles_.size());
  for (const Vehicle& v : vehicles_) {
    ObstacleInfo o;
    o.id = v.id;
    o.cls = v.cls;
    o.x = v.state.x;
    o.y = v.state.y;
    o.v_x = v.state.v_x;
    o.length = v.length;
    o.broadcast = v.published ? &*v.published : nullptr;
    infos.push_back(o);
  }
  return infos;
}

EgoInfo World::ego_info(const Vehicle& v) const {
  EgoInfo e;
  e.id = v.id;
  e.cls = v.cls;
  e.state = v.state;
  e.v_d = v.v_d;
  e.time_gap = v.time_gap;
  e.length = v.length;
  return e;
}

void World::plan_phase(double now) {
  const std::vector<ObstacleInfo> infos = snapshot_infos();

  struct Job {
    std::size_t vi;
    const char* trigger;
    int plan_id;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const Vehicle& v = vehicles_[i];
    if (v.cls == VehicleClass::Manual) continue;
    const char* trigger = nullptr;
    if (!v.plan) {
      trigger = "Initial";
    } else {
      const ReplanTrigger t = needs_replan(ego_info(v), *v.plan, infos, now,
                                           v.tracking_failed, cfg_.planner);
      if (t == ReplanTrigger::None) continue;
      trigger = to_string(t);
    }
    jobs.push_back({i, trigger, next_plan_id_++});
  }
  if (jobs.empty()) return;

  std::vector<PlanResult> results(jobs.size());
  const auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      const Vehicle& v = vehicles_[jobs[j].vi];
      results[j] =
          make_plan(ego_info(v), infos, now, jobs[j].plan_id, cfg_.planner);
    }
  };
  const int threads = std::max(1, cfg_.threads);
  if (threads == 1 || jobs.size() <= 1) {
    run_range(0, jobs.size());
  } else {
    const std::size_t chunk =
        (jobs.size() + threads - 1) / static_cast<std::size_t>(threads);
    std::vector<std::future<void>> parts;
    for (std::size_t lo = 0; lo < jobs.size(); lo += chunk) {
      const std::size_t hi = std::min(jobs.size(), lo + chunk);
      parts.push_back(std::async(std::launch::async, run_range, lo, hi));
    }
    for (std::future<void>& f : parts) f.get();
  }

  // Application is ordered by id (jobs were built in id order), so the
  // outcome does not depend on the thread count.
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    Vehicle& v = vehicles_[jobs[j].vi];
    PlanResult& r = results[j];
    v.plan = std::move(r.plan);
    v.tracking_failed = false;
    v.plans_made += 1;
    if (r.diag.used_override) v.overrides += 1;
    if (r.diag.used_fallback) v.fallbacks += 1;

    PlanEvent ev;
    ev.t = now;
    ev.vehicle_id = v.id;
    ev.plan_id = v.plan->id;
    ev.trigger = jobs[j].trigger;
    ev.safety_mode = v.plan->safety_mode;
    ev.fallback = v.plan->fallback;
    ev.dp_cost = r.diag.dp_cost;
    ev.plan_cost = v.plan->cost;
    ev.fda_iterations = r.diag.fda_iterations;
    ev.dp_micros = r.diag.dp_micros;
    ev.bnb_micros = r.diag.bnb_micros;
    ev.fda_micros = r.diag.fda_micros;
    plan_log_.push_back(std::move(ev));
  }
}

const Vehicle* World::leader_in_lane(const Vehicle& v, int lane) const {
  const Vehicle* best = nullptr;
  for (const Vehicle& o : vehicles_) {
    if (o.id == v.id) continue;
    if (lane_of(o.state.y, cfg_.planner.road) != lane) continue;
    if (o.state.x <= v.state.x) continue;
    if (!best || o.state.x < best->state.x) best = &o;
  }
  return best;
}

const Vehicle* World::follower_in_lane(const Vehicle& v, int lane) const {
  const Vehicle* best = nullptr;
  for (const Vehicle& o : vehicles_) {
    if (o.id == v.id) continue;
    if (lane_of(o.state.y, cfg_.planner.road) != lane) continue;
    if (o.state.x >= v.state.x) continue;
    if (!best || o.state.x > best->state.x) best = &o;
  }
  return best;
}

double World::bumper_gap(const Vehicle& rear, const Vehicle& front) const {
  return front.state.x - rear.state.x - 0.5 * (front.length + rear.length);
}

namespace {

// Car-following acceleration of `v` behind the current leader in `lane`;
// non-positive gaps command the emergency value.
double following_accel(const World& w, const Vehicle& v, int lane,
                       const ManualDriverParams& base,
                       const Vehicle** lead_out = nullptr) {
  ManualDriverParams p = base;
  p.v0 = v.v_d;
  p.T_hw = v.time_gap;
  const Vehicle* lead = nullptr;
  double gap = kInf;
  double v_lead = v.state.v_x;
  for (const Vehicle& o : w.vehicles()) {
    if (o.id == v.id) continue;
    if (lane_of(o.state.y, w.config().planner.road) != lane) continue;
    if (o.state.x <= v.state.x) continue;
    if (!lead || o.state.x < lead->state.x) lead = &o;
  }
  if (lead) {
    gap = lead->state.x - v.state.x - 0.5 * (lead->length + v.length);
    v_lead = lead->state.v_x;
  }
  if (lead_out) *lead_out = lead;
  if (gap <= 0.0) return kEmergencyBrake;
  return idm_accel(gap, v.state.v_x, v_lead, p);
}

}  // namespace

void World::manual_lane_change_phase(double now) {
  const RoadGeometry& road = cfg_.planner.road;

  const auto safe_to_enter = [&](const Vehicle& v, int target) {
    const Vehicle* lead = leader_in_lane(v, target);
    if (lead && bumper_gap(v, *lead) < cfg_.manual.s0_jam) return false;
    const Vehicle* fol = follower_in_lane(v, target);
    if (fol) {
      const double gap = bumper_gap(*fol, v);
      if (gap < cfg_.manual.s0_jam) return false;
      ManualDriverParams pf = cfg_.manual;
      pf.v0 = fol->v_d;
      pf.T_hw = fol->time_gap;
      if (idm_accel(gap, fol->state.v_x, v.state.v_x, pf) <
          -cfg_.manual.lc_safe_decel) {
        return false;
      }
    }
    return true;
  };

  // Decisions are made simultaneously from the pre-move configuration...
  struct Intent {
    std::size_t vi;
    int target;
  };
  std::vector<Intent> intents;
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const Vehicle& v = vehicles_[i];
    if (v.cls != VehicleClass::Manual) continue;
    if (now - v.last_lane_change < cfg_.manual.lc_cooldown) continue;
    const int lane = lane_of(v.state.y, road);
    const double a_cur = following_accel(*this, v, lane, cfg_.manual);
    int best = lane;
    double best_gain = cfg_.manual.lc_incentive;  // must be exceeded strictly
    for (int target : {lane - 1, lane + 1}) {
      if (target < 0 || target >= road.n_lanes) continue;
      if (!safe_to_enter(v, target)) continue;
      const double gain =
          following_accel(*this, v, target, cfg_.manual) - a_cur;
      if (gain > best_gain) {
        best_gain = gain;
        best = target;
      }
    }
    if (best != lane) intents.push_back({i, best});
  }

  // ...and applied in id order, re-validated against the moves already made.
  for (const Intent& in : intents) {
    Vehicle& v = vehicles_[in.vi];
    if (!safe_to_enter(v, in.target)) continue;
    v.state.y = road.lane_center(in.target);
    v.state.v_y = 0.0;
    v.last_lane_change = now;
  }
}

void World::car_following_phase(double t_end) {
  std::vector<double> accel(vehicles_.size(), 0.0);
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    const Vehicle& v = vehicles_[i];
    if (v.cls != VehicleClass::Manual) continue;
    const int lane = lane_of(v.state.y, cfg_.planner.road);
    const Vehicle* lead = nullptr;
    accel[i] = following_accel(*this, v, lane, cfg_.manual, &lead);
    if (accel[i] == kEmergencyBrake && lead) {
      audit_.push_back({t_end, AuditKind::EmergencyGap, v.id, lead->id,
                        bumper_gap(v, *lead)});
    }
  }
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    if (vehicles_[i].cls == VehicleClass::Manual) {
      vehicles_[i].state.a_x = accel[i];
    }
  }
}

void World::advance_phase(double now) {
  const double dt = cfg_.dt;
  for (Vehicle& v : vehicles_) {
    if (v.cls == VehicleClass::Manual) {
      const double v0 = v.state.v_x;
      const double v1 = std::max(0.0, v0 + v.state.a_x * dt);
      v.state.x += 0.5 * (v0 + v1) * dt;
      v.state.v_x = v1;
      v.cmd_j_x = 0.0;
      v.cmd_a_y = 0.0;
      continue;
    }
    ControlInput u{};
    if (v.plan && !v.plan->controls.steps.empty()) {
      const std::vector<ControlInput>& steps = v.plan->controls.steps;
      long long idx = std::llround((now - v.plan->created_at) / dt);
      idx = std::clamp<long long>(idx, 0,
                                  static_cast<long long>(steps.size()) - 1);
      u = steps[static_cast<std::size_t>(idx)];
    } else {
      v.tracking_failed = true;  // nothing to follow; coast this step
    }
    v.state = step_state(v.state, u, dt);
    v.cmd_j_x = u.j_x;
    v.cmd_a_y = u.a_y;
    if (v.state.v_x < 0.0) {
      // Braking plans may cross standstill mid-step; a real vehicle holds.
      v.state.v_x = 0.0;
      v.state.a_x = std::max(0.0, v.state.a_x);
      v.tracking_failed = true;
    }
  }
}

void World::exit_phase(double t_end) {
  std::vector<Vehicle> keep;
  keep.reserve(vehicles_.size());
  for (Vehicle& v : vehicles_) {
    if (v.state.x >= cfg_.section_length) {
      trips_.push_back(make_record(v, t_end, true));
    } else {
      keep.push_back(std::move(v));
    }
  }
  vehicles_ = std::move(keep);
}

void World::spawn_phase(double t_end) {
  const SpawnConfig& sc = cfg_.spawn;
  if (sc.inflow > 0.0) {
    const int arrivals = arrivals_(rng_);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int i = 0; i < arrivals; ++i) {
      PendingVehicle pv;
      const bool automated = ud(rng_) < sc.penetration;
      pv.cls = automated ? (sc.connected ? VehicleClass::AutomatedConnected
                                         : VehicleClass::AutomatedNonConnected)
                         : VehicleClass::Manual;
      pv.v_d =
          (sc.v_d_min_kmh + (sc.v_d_max_kmh - sc.v_d_min_kmh) * ud(rng_)) / 3.6;
      pv.time_gap =
          sc.time_gap_min + (sc.time_gap_max - sc.time_gap_min) * ud(rng_);
      pv.length = sc.length_min + (sc.length_max - sc.length_min) * ud(rng_);
      queue_.push_back(pv);
    }
  }

  const RoadGeometry& road = cfg_.planner.road;
  while (!queue_.empty()) {
    const PendingVehicle& pv = queue_.front();
    struct Candidate {
      int lane;
      double entry_speed;
    };
    std::vector<Candidate> admissible;
    for (int lane = 0; lane < road.n_lanes; ++lane) {
      const double lc = road.lane_center(lane);
      double min_x = kInf;
      double lead_len = 0.0;
      double lead_v = 0.0;
      for (const Vehicle& o : vehicles_) {
        // Any body intruding laterally into the entry lane gates it, not
        // just vehicles centred there — a straddler blocks both lanes.
        if (std::abs(o.state.y - lc) >=
            0.5 * (road.lane_width + kVehicleWidth)) {
          continue;
        }
        if (o.state.x < min_x) {
          min_x = o.state.x;
          lead_len = o.length;
          lead_v = o.state.v_x;
        }
      }
      double v_e = pv.v_d;
      if (min_x < kInf) {
        const double gap =
            min_x - 0.5 * (lead_len + pv.length) - cfg_.manual.s0_jam;
        // Two ceilings: the nominal time-gap spacing, and the speed from
        // which comfortable braking still clears the occupant's stopping
        // point if it brakes to rest (leader-safe insertion).
        const double b = cfg_.manual.b_comf;
        const double v_stop =
            std::sqrt(std::max(0.0, lead_v * lead_v + 2.0 * b * gap));
        v_e = std::min({pv.v_d, gap / pv.time_gap, v_stop});
      }
      if (v_e >= sc.min_entry_speed) admissible.push_back({lane, v_e});
    }
    if (admissible.empty()) break;  // arrivals stay queued, strictly FIFO

    std::size_t pick = 0;
    if (admissible.size() > 1) {
      std::uniform_int_distribution<std::size_t> li(0, admissible.size() - 1);
      pick = li(rng_);
    }
    Vehicle v;
    v.id = next_vehicle_id_++;
    v.cls = pv.cls;
    v.length = pv.length;
    v.v_d = pv.v_d;
    v.time_gap = pv.time_gap;
    v.state = VehicleState{0.0, road.lane_center(admissible[pick].lane),
                           admissible[pick].entry_speed, 0.0, 0.0};
    v.entered_at = t_end;
    v.last_lane_change = t_end;
    v.prev_lane = admissible[pick].lane;
    vehicles_.push_back(std::move(v));
    entered_ += 1;
    queue_.pop_front();
  }
}

void World::audit_phase(double t) {
  const RoadGeometry& road = cfg_.planner.road;

  // Hard-collision audit: bodies are length x kVehicleWidth rectangles, so a
  // pair collides iff it overlaps longitudinally and the centres are less
  // than a body width apart laterally. A sweep over the x-sorted order keeps
  // the pair scan local.
  std::vector<const Vehicle*> order;
  order.reserve(vehicles_.size());
  double max_len = 0.0;
  for (const Vehicle& v : vehicles_) {
    order.push_back(&v);
    max_len = std::max(max_len, v.length);
  }
  std::sort(order.begin(), order.end(), [](const Vehicle* a, const Vehicle* b) {
    if (a->state.x != b->state.x) return a->state.x < b->state.x;
    return a->id < b->id;
  });
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Vehicle* rear = order[i];
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const Vehicle* front = order[j];
      const double dx = front->state.x - rear->state.x;
      if (dx - 0.5 * (rear->length + max_len) >= 0.0) break;
      const double gap = dx - 0.5 * (front->length + rear->length);
      if (gap < 0.0 &&
          std::abs(front->state.y - rear->state.y) < kVehicleWidth) {
        audit_.push_back({t, AuditKind::Overlap, rear->id, front->id, gap});
      }
    }
  }

  for (const Vehicle& v : vehicles_) {
    if (v.state.y < 0.0 || v.state.y > road.width()) {
      audit_.push_back({t, AuditKind::RoadDeparture, v.id, -1, v.state.y});
    }
    if (v.state.v_x < -0.01) {
      audit_.push_back({t, AuditKind::NegativeSpeed, v.id, -1, v.state.v_x});
    }
  }

  const long long present = static_cast<long long>(vehicles_.size());
  const long long exited = static_cast<long long>(trips_.size());
  if (entered_ != present + exited) {
    audit_.push_back({t, AuditKind::Conservation, -1, -1,
                      static_cast<double>(entered_ - present - exited)});
  }
}

void World::record_phase(double t) {
  const RoadGeometry& road = cfg_.planner.road;
  last_rows_.clear();
  last_rows_.reserve(vehicles_.size());
  for (Vehicle& v : vehicles_) {
    const int lane = lane_of(v.state.y, road);
    TraceRow r;
    r.t = t;
    r.id = v.id;
    r.cls = v.cls;
    r.x = v.state.x;
    r.y = v.state.y;
    r.lane = lane;
    r.v_x = v.state.v_x;
    r.v_y = v.state.v_y;
    r.a_x = v.state.a_x;
    r.j_x = v.cmd_j_x;
    r.a_y = v.cmd_a_y;
    r.plan_id = (v.cls != VehicleClass::Manual && v.plan) ? v.plan->id : -1;
    last_rows_.push_back(r);

    if (lane != v.prev_lane) v.lane_changes += 1;
    v.prev_lane = lane;
    v.steps_recorded += 1;
    v.dev_sum += std::abs(v.state.v_x - v.v_d);
  }
}

std::vector<TripRecord> World::trip_records() const {
  std::vector<TripRecord> out = trips_;
  for (const Vehicle& v : vehicles_) {
    out.push_back(make_record(v, 0.0, false));
  }
  return out;
}

int World::add_vehicle(VehicleClass cls, const VehicleState& s, double v_d,
                       double time_gap, double length) {
  Vehicle v;
  v.id = next_vehicle_id_++;
  v.cls = cls;
  v.length = length;
  v.v_d = v_d;
  v.time_gap = time_gap;
  v.state = s;
  v.entered_at = clock_;
  // Scenario vehicles may change lanes immediately.
  v.last_lane_change = clock_ - cfg_.manual.lc_cooldown;
  v.prev_lane = lane_of(s.y, cfg_.planner.road);
  const int id = v.id;
  vehicles_.push_back(std::move(v));
  entered_ += 1;
  return id;
}

}  // namespace mplan
