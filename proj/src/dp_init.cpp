#include "mplan/dp_init.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <unordered_map>
#include <unordered_set>

namespace mplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Obstacle motion resampled at half-step resolution in ego-relative
// longitudinal coordinates, with the lane already discretized.
struct ObstacleSample {
  double x = 0.0;
  double v = 0.0;
  int lane = 0;
};

struct ActionOption {
  double accel = 0.0;
  int lane_move = 0;   // -1, 0, +1
  int dv_units = 0;    // speed grid units gained per step
  int dx_units = 0;    // position grid units from the accel term
  double cost_move = 0.0;  // w_accel * a^2 + w_lane * move^2
};

// Shared discretization of the coarse problem plus the obstacle tables.
struct Grid {
  const DPConfig* cfg = nullptr;
  int n_lanes = 3;
  int lc_states = 2;   // lane-change budget values: 0..max_lane_changes
  int v_span = 1;      // number of speed indices
  int root_v = 0;
  int root_lane = 0;
  double v_d = 0.0;
  double ego_time_gap = 1.2;
  std::vector<ActionOption> actions;  // in tie-break preference order
  // blocked[j] lists obstacles at half-step sample j (time j * coarse_dt/2).
  std::vector<std::vector<ObstacleSample>> samples;
  std::vector<double> lengths;    // per obstacle: bumper-contact centre distance
  std::vector<double> time_gaps;  // per obstacle (the ego's gap parameter)
  std::vector<int> enforce_from;  // per obstacle: first sample where its
                                  // envelope binds (later when inherited)

  double dv() const { return cfg->speed_increment; }
  double dx() const { return cfg->position_increment; }

  std::uint32_t key(int x_idx, int v_idx, int lane, int lc) const {
    return ((static_cast<std::uint32_t>(x_idx) * v_span + v_idx) * n_lanes +
            lane) * lc_states + lc;
  }
  void unpack(std::uint32_t k, int& x_idx, int& v_idx, int& lane,
              int& lc) const {
    lc = k % lc_states;
    k /= lc_states;
    lane = k % n_lanes;
    k /= n_lanes;
    v_idx = k % v_span;
    x_idx = k / v_span;
  }

  // Longitudinal envelope of obstacle i at sample j for an ego at speed v:
  // the time-gap rectangle, never narrower than bumper contact (the length
  // term equals the contact centre distance, so at crawl speeds the
  // rectangle alone would end inside the bodies).
  bool inside_envelope(std::size_t i, int j, double x, double v) const {
    const ObstacleSample& ob = samples[j][i];
    const double half_len = 0.5 * lengths[i];
    const double rear = std::max(time_gaps[i] * v + half_len, lengths[i]);
    const double front = std::max(time_gaps[i] * ob.v + half_len, lengths[i]);
    return x >= ob.x - rear && x <= ob.x + front;
  }

  // Collision screen for one step: the destination lane is taken for the
  // whole step and tested at the half-step probes, plus a sweep test that
  // catches bodies crossing between probes (a probe pair can straddle the
  // contact window at motorway closing speeds). The carve-outs that keep
  // the coarse problem solvable from ordinary traffic states:
  //  - A vehicle that stays behind the ego constrains only a move into its
  //    lane (gap acceptance); one predicted to sweep through from behind is
  //    the follower's collision, not a lane-keeping constraint. Driving
  //    through a vehicle ahead is always infeasible.
  //  - An envelope the ego already occupies at the root binds only from
  //    enforce_from (the escape schedule computed in build_grid); until
  //    then only body contact blocks. Without the waiver a vehicle at a
  //    sub-nominal gap could never plan at all.
  bool transition_blocked(int k, double x0, double v0, const ActionOption& act,
                          int nlane, bool entering) const {
    const double T = cfg->coarse_dt;
    const double xs[3] = {x0, x0 + v0 * 0.5 * T + 0.125 * act.accel * T * T,
                          x0 + v0 * T + 0.5 * act.accel * T * T};
    const double vs[3] = {v0, v0 + 0.5 * act.accel * T, v0 + act.accel * T};
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      for (int seg = 1; seg <= 2; ++seg) {
        const int ja = 2 * k + seg - 1;
        const int jb = ja + 1;
        const ObstacleSample& oa = samples[ja][i];
        const ObstacleSample& ob = samples[jb][i];
        if (ob.lane != nlane) continue;
        const double da = oa.x - xs[seg - 1];
        const double db = ob.x - xs[seg];
        if (oa.lane == nlane && (da > 0.0) != (db > 0.0) &&
            (da > 0.0 || entering)) {
          return true;
        }
        if (db > 0.0 || entering) {
          if (jb < enforce_from[i]) {
            if (std::abs(db) < lengths[i]) return true;
          } else if (inside_envelope(i, jb, xs[seg], vs[seg])) {
            return true;
          }
        }
      }
    }
    return false;
  }

  // Feasibility of one step from (x_idx, v_idx, lane) at coarse step k under
  // the given action; fills the successor grid state.
  bool step(int k, int x_idx, int v_idx, int lane, const ActionOption& act,
            int& nx, int& nv, int& nlane) const {
    nlane = lane + act.lane_move;
    if (nlane < 0 || nlane >= n_lanes) return false;
    nv = v_idx + act.dv_units;
    if (nv < 0) return false;
    const int vx_units = static_cast<int>(
        std::llround(dv() * cfg->coarse_dt / dx()));
    nx = x_idx + v_idx * vx_units + act.dx_units;

    // The lane move takes effect at the start of the step, so the whole
    // step is screened in the destination lane.
    const bool entering = act.lane_move != 0;
    return !transition_blocked(k, x_idx * dx(), v_idx * dv(), act, nlane,
                               entering);
  }

  double stage_cost(int v_idx, const ActionOption& act) const {
    const double dev = v_idx * dv() - v_d;
    return act.cost_move + cfg->w_speed * dev * dev;
  }
};

Grid build_grid(const VehicleState& s0, double v_d, const RoadGeometry& road,
                std::span<const ObstacleEllipse> obstacles, double fine_dt,
                const DPConfig& cfg) {
  Grid g;
  g.cfg = &cfg;
  g.n_lanes = road.n_lanes;
  g.lc_states = cfg.max_lane_changes + 1;
  g.v_d = v_d;
  g.root_v = std::max(0L, std::lround(s0.v_x / cfg.speed_increment));
  g.root_lane = lane_of(s0.y, road);

  // Largest speed rise per step over the horizon bounds the speed span.
  int max_dv = 0;
  for (double a : cfg.accel_set) {
    max_dv = std::max(max_dv, static_cast<int>(std::lround(
                                  std::abs(a) * cfg.coarse_dt /
                                  cfg.speed_increment)));
  }
  g.v_span = g.root_v + max_dv * cfg.coarse_steps + 1;

  // Tie-break preference: straight before lane moves, gentler accelerations
  // first, braking before accelerating among equal magnitudes.
  std::vector<double> accels(cfg.accel_set.begin(), cfg.accel_set.end());
  std::sort(accels.begin(), accels.end(), [](double a, double b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
    return a < b;
  });
  std::vector<int> moves{0};
  if (cfg.allow_lane_change && cfg.max_lane_changes > 0) {
    moves.push_back(-1);
    moves.push_back(1);
  }
  for (int m : moves) {
    for (double a : accels) {
      ActionOption act;
      act.accel = a;
      act.lane_move = m;
      act.dv_units = static_cast<int>(
          std::llround(a * cfg.coarse_dt / cfg.speed_increment));
      act.dx_units = static_cast<int>(std::llround(
          0.5 * a * cfg.coarse_dt * cfg.coarse_dt / cfg.position_increment));
      act.cost_move = cfg.w_accel * a * a + cfg.w_lane * m * m;
      g.actions.push_back(act);
    }
  }

  // Obstacle tables at half-step resolution, ego-relative.
  const int n_samples = 2 * cfg.coarse_steps + 1;
  g.samples.resize(n_samples);
  for (const ObstacleEllipse& ob : obstacles) {
    g.lengths.push_back(ob.length);
    g.time_gaps.push_back(ob.time_gap);
  }
  for (int j = 0; j < n_samples; ++j) {
    const double t = j * 0.5 * cfg.coarse_dt;
    for (const ObstacleEllipse& ob : obstacles) {
      const int last = static_cast<int>(ob.trajectory.size()) - 1;
      const int idx = std::min<int>(last, std::lround(t / fine_dt));
      ObstacleSample s;
      s.x = ob.trajectory[idx].x - s0.x;
      s.v = ob.trajectory[idx].v_x;
      s.lane = lane_of(ob.trajectory[idx].y, road);
      g.samples[j].push_back(s);
    }
  }

  // Escape schedule for envelopes the root already occupies: the envelope
  // binds from the first sample where an ego braking out at half the
  // strongest rate (full rate if half never clears) would be clear of the
  // obstacle. If even full braking never clears within the horizon the
  // envelope never binds; body contact still does.
  g.enforce_from.assign(obstacles.size(), 0);
  double brake = 0.0;
  for (double a : cfg.accel_set) brake = std::max(brake, -a);
  const double v0q = g.root_v * cfg.speed_increment;
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    if (g.samples[0][i].lane != g.root_lane ||
        !g.inside_envelope(i, 0, 0.0, v0q)) {
      continue;
    }
    g.enforce_from[i] = n_samples;
    for (double rate : {0.5 * brake, brake}) {
      int found = -1;
      for (int j = 1; j < n_samples && found < 0; ++j) {
        const double t = j * 0.5 * cfg.coarse_dt;
        double vb, xb;
        if (rate > 0.0 && v0q <= rate * t) {
          vb = 0.0;
          xb = 0.5 * v0q * v0q / rate;
        } else {
          vb = v0q - rate * t;
          xb = v0q * t - 0.5 * rate * t * t;
        }
        if (g.samples[j][i].lane != g.root_lane ||
            !g.inside_envelope(i, j, xb, vb)) {
          found = j;
        }
      }
      if (found >= 0) {
        g.enforce_from[i] = found;
        break;
      }
    }
  }
  return g;
}

// Forward-reachable state sets per step; backward value iteration only
// touches these.
std::vector<std::unordered_set<std::uint32_t>> reachable_layers(const Grid& g) {
  const int K = g.cfg->coarse_steps;
  std::vector<std::unordered_set<std::uint32_t>> layers(K + 1);
  layers[0].insert(g.key(0, g.root_v, g.root_lane, 0));
  for (int k = 0; k < K; ++k) {
    for (std::uint32_t key : layers[k]) {
      int x, v, lane, lc;
      g.unpack(key, x, v, lane, lc);
      for (const ActionOption& act : g.actions) {
        if (act.lane_move != 0 && lc >= g.cfg->max_lane_changes) continue;
        int nx, nv, nlane;
        if (!g.step(k, x, v, lane, act, nx, nv, nlane)) continue;
        layers[k + 1].insert(g.key(nx, nv, nlane, lc + (act.lane_move != 0)));
      }
    }
  }
  return layers;
}

}  // namespace

std::optional<DPPlan> solve_backward(const VehicleState& s0, double v_d,
                                     const RoadGeometry& road,
                                     std::span<const ObstacleEllipse> obstacles,
                                     double fine_dt, const DPConfig& cfg,
                                     DPStats* stats) {
  const Grid g = build_grid(s0, v_d, road, obstacles, fine_dt, cfg);
  const int K = cfg.coarse_steps;
  const auto layers = reachable_layers(g);

  // Cost-to-go per layer; the full horizon is free.
  std::vector<std::unordered_map<std::uint32_t, double>> value(K + 1);
  for (std::uint32_t key : layers[K]) value[K].emplace(key, 0.0);
  long long evaluated = 0;
  for (int k = K - 1; k >= 0; --k) {
    for (std::uint32_t key : layers[k]) {
      int x, v, lane, lc;
      g.unpack(key, x, v, lane, lc);
      double best = kInf;
      for (const ActionOption& act : g.actions) {
        if (act.lane_move != 0 && lc >= cfg.max_lane_changes) continue;
        int nx, nv, nlane;
        if (!g.step(k, x, v, lane, act, nx, nv, nlane)) continue;
        const auto it =
            value[k + 1].find(g.key(nx, nv, nlane, lc + (act.lane_move != 0)));
        if (it == value[k + 1].end() || !std::isfinite(it->second)) continue;
        const double c = g.stage_cost(v, act) + it->second;
        if (c < best) best = c;
      }
      value[k].emplace(key, best);
      ++evaluated;
    }
  }
  if (stats) stats->states_evaluated = evaluated;

  const std::uint32_t root = g.key(0, g.root_v, g.root_lane, 0);
  const auto root_it = value[0].find(root);
  if (root_it == value[0].end() || !std::isfinite(root_it->second)) {
    return std::nullopt;
  }

  // Greedy backtrack along the argmins, keeping the preference order for
  // exact ties.
  DPPlan plan;
  plan.cost = root_it->second;
  int x = 0, v = g.root_v, lane = g.root_lane, lc = 0;
  plan.lane_seq.push_back(lane);
  for (int k = 0; k < K; ++k) {
    const double target = value[k].at(g.key(x, v, lane, lc));
    bool found = false;
    for (const ActionOption& act : g.actions) {
      if (act.lane_move != 0 && lc >= cfg.max_lane_changes) continue;
      int nx, nv, nlane;
      if (!g.step(k, x, v, lane, act, nx, nv, nlane)) continue;
      const auto it =
          value[k + 1].find(g.key(nx, nv, nlane, lc + (act.lane_move != 0)));
      if (it == value[k + 1].end() || !std::isfinite(it->second)) continue;
      if (g.stage_cost(v, act) + it->second == target) {
        plan.accel_seq.push_back(act.accel);
        x = nx;
        v = nv;
        lane = nlane;
        lc += (act.lane_move != 0);
        plan.lane_seq.push_back(lane);
        found = true;
        break;
      }
    }
    if (!found) return std::nullopt;  // unreachable when the value is finite
  }
  return plan;
}

std::optional<DPPlan> solve_forward_bnb(const VehicleState& s0, double v_d,
                                        const RoadGeometry& road,
                                        std::span<const ObstacleEllipse> obstacles,
                                        double fine_dt, const DPConfig& cfg,
                                        DPStats* stats) {
  const Grid g = build_grid(s0, v_d, road, obstacles, fine_dt, cfg);
  const int K = cfg.coarse_steps;

  struct Node {
    std::uint32_t key;
    int k;
    int parent;      // arena index, -1 at the root
    int action;      // index into g.actions taken to reach this node
    double cost;     // accumulated cost from the root
  };
  std::vector<Node> arena;
  arena.push_back({g.key(0, g.root_v, g.root_lane, 0), 0, -1, -1, 0.0});

  // Open list ordered by accumulated cost; insertion order breaks ties so
  // the expansion sequence is deterministic.
  struct Entry {
    double cost;
    long long tick;
    int idx;
    bool operator>(const Entry& o) const {
      if (cost != o.cost) return cost > o.cost;
      return tick > o.tick;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
  open.push({0.0, 0, 0});
  long long tick = 1;

  // Best known cost and closed markers per (step, state).
  const auto id_of = [&](int k, std::uint32_t key) {
    return (static_cast<std::uint64_t>(k) << 32) | key;
  };
  std::unordered_map<std::uint64_t, double> best;
  std::unordered_set<std::uint64_t> closed;
  best.emplace(id_of(0, arena[0].key), 0.0);

  long long expanded = 0;
  int goal = -1;
  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    const Node n = arena[e.idx];
    const std::uint64_t id = id_of(n.k, n.key);
    if (closed.count(id)) continue;
    closed.insert(id);
    if (n.k == K) {
      goal = e.idx;
      break;
    }
    ++expanded;
    int x, v, lane, lc;
    g.unpack(n.key, x, v, lane, lc);
    for (int ai = 0; ai < static_cast<int>(g.actions.size()); ++ai) {
      const ActionOption& act = g.actions[ai];
      if (act.lane_move != 0 && lc >= cfg.max_lane_changes) continue;
      int nx, nv, nlane;
      if (!g.step(n.k, x, v, lane, act, nx, nv, nlane)) continue;
      const std::uint32_t nkey = g.key(nx, nv, nlane, lc + (act.lane_move != 0));
      const double ncost = n.cost + g.stage_cost(v, act);
      const std::uint64_t nid = id_of(n.k + 1, nkey);
      const auto it = best.find(nid);
      if (it != best.end() && it->second <= ncost) continue;
      best[nid] = ncost;
      arena.push_back({nkey, n.k + 1, e.idx, ai, ncost});
      open.push({ncost, tick++, static_cast<int>(arena.size()) - 1});
    }
  }
  if (stats) stats->nodes_expanded = expanded;
  if (goal < 0) return std::nullopt;

  std::vector<int> actions;
  for (int idx = goal; arena[idx].parent >= 0; idx = arena[idx].parent) {
    actions.push_back(arena[idx].action);
  }
  std::reverse(actions.begin(), actions.end());

  DPPlan plan;
  plan.cost = arena[goal].cost;
  int lane = g.root_lane;
  plan.lane_seq.push_back(lane);
  for (int ai : actions) {
    plan.accel_seq.push_back(g.actions[ai].accel);
    lane += g.actions[ai].lane_move;
    plan.lane_seq.push_back(lane);
  }
  return plan;
}

ControlTrajectory lift_to_continuous(const DPPlan& plan,
                                     const VehicleState& s0, double fine_dt,
                                     int fine_steps, const ControlBounds& bounds,
                                     double lane_width, const DPConfig& cfg) {
  ControlTrajectory u;
  u.dt = fine_dt;
  u.steps.assign(fine_steps, ControlInput{});
  if (plan.accel_seq.empty()) return u;

  const int ratio =
      std::max(1, static_cast<int>(std::llround(cfg.coarse_dt / fine_dt)));

  // Jerk chases the coarse acceleration profile as fast as the bounds allow.
  double a = s0.a_x;
  for (int k = 0; k < fine_steps; ++k) {
    const int c = std::min<int>(static_cast<int>(plan.accel_seq.size()) - 1,
                                k / ratio);
    const double j = std::clamp((plan.accel_seq[c] - a) / fine_dt,
                                bounds.j_x_min, bounds.j_x_max);
    u.steps[k].j_x = j;
    a += j * fine_dt;
  }

  // Each lane move becomes an antisymmetric pulse: accelerate laterally for
  // half the duration, decelerate for the other half. The amplitude
  // 4 * width / duration^2 displaces exactly one lane width and returns the
  // lateral speed to its initial value.
  int pulse = static_cast<int>(std::llround(cfg.lane_change_duration / fine_dt));
  pulse = std::min(pulse, fine_steps);
  const int half = pulse / 2;
  if (half > 0) {
    const double span = 2.0 * half * fine_dt;  // realized pulse duration
    for (std::size_t c = 0; c + 1 < plan.lane_seq.size(); ++c) {
      const int move = plan.lane_seq[c + 1] - plan.lane_seq[c];
      if (move == 0) continue;
      const double amp = std::clamp(
          move * 4.0 * lane_width / (span * span), bounds.a_y_min,
          bounds.a_y_max);
      int start = static_cast<int>(c) * ratio - half;
      start = std::clamp(start, 0, std::max(0, fine_steps - 2 * half));
      for (int i = 0; i < half && start + i < fine_steps; ++i) {
        u.steps[start + i].a_y = amp;
      }
      for (int i = half; i < 2 * half && start + i < fine_steps; ++i) {
        u.steps[start + i].a_y = -amp;
      }
    }
  }
  return u;
}

}  // namespace mplan
