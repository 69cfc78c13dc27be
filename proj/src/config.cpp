#include "mplan/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mplan {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("config: " + path + ": " + what);
}

// Reads the keys of one JSON object, tracking which were consumed so the
// leftovers can be reported by full path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  void read(const char* key, double& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_number()) fail(at(key), "expected a number");
    out = v->get<double>();
  }

  void read(const char* key, int& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_number_integer()) fail(at(key), "expected an integer");
    out = v->get<int>();
  }

  void read(const char* key, bool& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_boolean()) fail(at(key), "expected a boolean");
    out = v->get<bool>();
  }

  void read(const char* key, std::string& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_string()) fail(at(key), "expected a string");
    out = v->get<std::string>();
  }

  void read(const char* key, std::vector<double>& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_array()) fail(at(key), "expected an array of numbers");
    out.clear();
    for (const json& e : *v) {
      if (!e.is_number()) fail(at(key), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
  }

  void read(const char* key, std::vector<std::uint64_t>& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_array()) fail(at(key), "expected an array of integers");
    out.clear();
    for (const json& e : *v) {
      if (!e.is_number_unsigned() && !e.is_number_integer()) {
        fail(at(key), "expected an array of integers");
      }
      if (e.is_number_integer() && e.get<long long>() < 0) {
        fail(at(key), "seeds must be non-negative");
      }
      out.push_back(e.get<std::uint64_t>());
    }
  }

  void read(const char* key, std::uint64_t& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_number_integer() && !v->is_number_unsigned()) {
      fail(at(key), "expected an integer");
    }
    if (v->is_number_integer() && v->get<long long>() < 0) {
      fail(at(key), "expected a non-negative integer");
    }
    out = v->get<std::uint64_t>();
  }

  // Nested object, or null when absent.
  const json* child(const char* key) { return take(key); }

  std::string at(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  // Must be called after every expected key was read.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(at(key.c_str()), "unknown key");
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_spawn(const json& j, const std::string& path, SpawnConfig& s) {
  ObjectReader r(j, path);
  r.read("inflow", s.inflow);
  r.read("penetration", s.penetration);
  r.read("connected", s.connected);
  r.read("v_d_min_kmh", s.v_d_min_kmh);
  r.read("v_d_max_kmh", s.v_d_max_kmh);
  r.read("time_gap_min", s.time_gap_min);
  r.read("time_gap_max", s.time_gap_max);
  r.read("length_min", s.length_min);
  r.read("length_max", s.length_max);
  r.read("min_entry_speed", s.min_entry_speed);
  r.read("seed", s.seed);
  r.finish();
}

void read_manual(const json& j, const std::string& path,
                 ManualDriverParams& m) {
  ObjectReader r(j, path);
  r.read("v0", m.v0);
  r.read("T_hw", m.T_hw);
  r.read("a_max", m.a_max);
  r.read("b_comf", m.b_comf);
  r.read("s0_jam", m.s0_jam);
  r.read("delta_exp", m.delta_exp);
  r.read("lc_incentive", m.lc_incentive);
  r.read("lc_safe_decel", m.lc_safe_decel);
  r.read("lc_cooldown", m.lc_cooldown);
  r.finish();
}

void read_road(const json& j, const std::string& path, RoadGeometry& g) {
  ObjectReader r(j, path);
  r.read("n_lanes", g.n_lanes);
  r.read("lane_width", g.lane_width);
  r.read("boundary_margin", g.boundary_margin);
  r.finish();
}

void read_weights(const json& j, const std::string& path, Weights& w) {
  ObjectReader r(j, path);
  r.read("jerk", w.jerk);
  r.read("accel_x", w.accel_x);
  r.read("accel_y", w.accel_y);
  r.read("speed_x", w.speed_x);
  r.read("speed_y", w.speed_y);
  r.read("road", w.road);
  r.read("collision", w.collision);
  r.read("negative_speed", w.negative_speed);
  r.read("epsilon", w.epsilon);
  r.finish();
}

void read_bounds(const json& j, const std::string& path, ControlBounds& b) {
  ObjectReader r(j, path);
  r.read("j_x_min", b.j_x_min);
  r.read("j_x_max", b.j_x_max);
  r.read("a_y_min", b.a_y_min);
  r.read("a_y_max", b.a_y_max);
  r.finish();
}

void read_planner(const json& j, const std::string& path, PlannerParams& p) {
  ObjectReader r(j, path);
  r.read("horizon", p.horizon);
  r.read("step", p.step);
  r.read("zone_ahead", p.zone_ahead);
  r.read("zone_behind", p.zone_behind);
  r.read("override_speed_factor", p.override_speed_factor);
  r.read("override_horizon_factor", p.override_horizon_factor);
  r.read("replan_speed_dev", p.replan_speed_dev);
  r.read("unsafe_field_level", p.unsafe_field_level);
  r.finish();
}

void read_solver(const json& j, const std::string& path, SolverConfig& s) {
  ObjectReader r(j, path);
  r.read("max_iterations", s.max_iterations);
  r.read("grad_tol", s.grad_tol);
  r.read("ls_shrink", s.ls_shrink);
  r.read("ls_c1", s.ls_c1);
  r.read("cg_restart", s.cg_restart);
  r.read("min_step", s.min_step);
  r.finish();
}

void read_dp(const json& j, const std::string& path, DPConfig& d) {
  ObjectReader r(j, path);
  r.read("coarse_dt", d.coarse_dt);
  r.read("coarse_steps", d.coarse_steps);
  r.read("accel_set", d.accel_set);
  r.read("speed_increment", d.speed_increment);
  r.read("position_increment", d.position_increment);
  r.read("max_lane_changes", d.max_lane_changes);
  r.read("allow_lane_change", d.allow_lane_change);
  r.read("w_accel", d.w_accel);
  r.read("w_lane", d.w_lane);
  r.read("w_speed", d.w_speed);
  r.read("lane_change_duration", d.lane_change_duration);
  r.finish();
}

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) fail(path, what);
}

bool near_multiple(double value, double unit) {
  const double q = value / unit;
  return std::abs(q - std::round(q)) < 1e-9;
}

}  // namespace

ScenarioConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }

  ScenarioConfig cfg;
  ObjectReader r(j, "");
  r.read("duration", cfg.duration);
  r.read("seeds", cfg.seeds);
  r.read("output_dir", cfg.output_dir);
  r.read("write_trace", cfg.write_trace);
  r.read("section_length", cfg.world.section_length);
  r.read("dt", cfg.world.dt);
  r.read("threads", cfg.world.threads);
  if (const json* c = r.child("spawn")) read_spawn(*c, "spawn", cfg.world.spawn);
  if (const json* c = r.child("manual")) {
    read_manual(*c, "manual", cfg.world.manual);
  }
  if (const json* c = r.child("road")) {
    read_road(*c, "road", cfg.world.planner.road);
  }
  if (const json* c = r.child("weights")) {
    read_weights(*c, "weights", cfg.world.planner.weights);
  }
  if (const json* c = r.child("bounds")) {
    read_bounds(*c, "bounds", cfg.world.planner.bounds);
  }
  if (const json* c = r.child("planner")) {
    read_planner(*c, "planner", cfg.world.planner.params);
  }
  if (const json* c = r.child("solver")) {
    read_solver(*c, "solver", cfg.world.planner.solver);
  }
  if (const json* c = r.child("dp")) read_dp(*c, "dp", cfg.world.planner.dp);
  r.finish();

  validate(cfg);
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

void validate(const ScenarioConfig& cfg) {
  const WorldConfig& w = cfg.world;
  check(cfg.duration > 0.0, "duration", "must be positive");
  check(!cfg.seeds.empty(), "seeds", "must not be empty");
  check(w.section_length > 0.0, "section_length", "must be positive");
  check(w.dt > 0.0, "dt", "must be positive");
  check(w.threads >= 1, "threads", "must be at least 1");

  const SpawnConfig& s = w.spawn;
  check(s.inflow >= 0.0, "spawn.inflow", "must be non-negative");
  check(s.penetration >= 0.0 && s.penetration <= 1.0, "spawn.penetration",
        "must be in [0, 1]");
  check(s.v_d_min_kmh > 0.0 && s.v_d_min_kmh <= s.v_d_max_kmh,
        "spawn.v_d_min_kmh", "need 0 < min <= max");
  check(s.time_gap_min > 0.0 && s.time_gap_min <= s.time_gap_max,
        "spawn.time_gap_min", "need 0 < min <= max");
  check(s.length_min > 0.0 && s.length_min <= s.length_max,
        "spawn.length_min", "need 0 < min <= max");
  check(s.min_entry_speed >= 0.0, "spawn.min_entry_speed",
        "must be non-negative");

  const ManualDriverParams& m = w.manual;
  check(m.v0 > 0.0, "manual.v0", "must be positive");
  check(m.T_hw > 0.0, "manual.T_hw", "must be positive");
  check(m.a_max > 0.0, "manual.a_max", "must be positive");
  check(m.b_comf > 0.0, "manual.b_comf", "must be positive");
  check(m.s0_jam >= 0.0, "manual.s0_jam", "must be non-negative");
  check(m.delta_exp > 0.0, "manual.delta_exp", "must be positive");
  check(m.lc_safe_decel >= 0.0, "manual.lc_safe_decel",
        "must be non-negative");
  check(m.lc_cooldown >= 0.0, "manual.lc_cooldown", "must be non-negative");

  const RoadGeometry& g = w.planner.road;
  check(g.n_lanes >= 1, "road.n_lanes", "must be at least 1");
  check(g.lane_width > 0.0, "road.lane_width", "must be positive");
  check(g.boundary_margin >= 0.0 && g.boundary_margin < 0.5 * g.width(),
        "road.boundary_margin", "must be in [0, width/2)");

  const Weights& ww = w.planner.weights;
  check(ww.jerk >= 0.0 && ww.accel_x >= 0.0 && ww.accel_y >= 0.0 &&
            ww.speed_x >= 0.0 && ww.speed_y >= 0.0 && ww.road >= 0.0 &&
            ww.collision >= 0.0 && ww.negative_speed >= 0.0,
        "weights", "must be non-negative");
  check(ww.epsilon > 0.0, "weights.epsilon", "must be positive");

  const ControlBounds& b = w.planner.bounds;
  check(b.j_x_min < b.j_x_max, "bounds.j_x_min", "need min < max");
  check(b.a_y_min < b.a_y_max, "bounds.a_y_min", "need min < max");

  const PlannerParams& p = w.planner.params;
  check(p.horizon >= 2, "planner.horizon", "must be at least 2");
  check(p.step > 0.0, "planner.step", "must be positive");
  check(p.zone_ahead >= 0.0 && p.zone_behind >= 0.0, "planner.zone_ahead",
        "zone factors must be non-negative");
  check(p.override_speed_factor > 0.0 && p.override_speed_factor <= 1.0,
        "planner.override_speed_factor", "must be in (0, 1]");
  check(p.override_horizon_factor > 0.0 && p.override_horizon_factor <= 1.0,
        "planner.override_horizon_factor", "must be in (0, 1]");
  check(p.replan_speed_dev >= 0.0, "planner.replan_speed_dev",
        "must be non-negative");
  check(p.unsafe_field_level > 0.0 && p.unsafe_field_level < 1.0,
        "planner.unsafe_field_level", "must be in (0, 1)");

  const SolverConfig& sv = w.planner.solver;
  check(sv.max_iterations >= 1, "solver.max_iterations",
        "must be at least 1");
  check(sv.grad_tol > 0.0, "solver.grad_tol", "must be positive");
  check(sv.ls_shrink > 0.0 && sv.ls_shrink < 1.0, "solver.ls_shrink",
        "must be in (0, 1)");
  check(sv.ls_c1 > 0.0 && sv.ls_c1 < 1.0, "solver.ls_c1",
        "must be in (0, 1)");
  check(sv.cg_restart >= 1, "solver.cg_restart", "must be at least 1");
  check(sv.min_step > 0.0, "solver.min_step", "must be positive");

  const DPConfig& d = w.planner.dp;
  check(d.coarse_dt > 0.0, "dp.coarse_dt", "must be positive");
  check(d.coarse_steps >= 1, "dp.coarse_steps", "must be at least 1");
  check(!d.accel_set.empty(), "dp.accel_set", "must not be empty");
  check(d.speed_increment > 0.0, "dp.speed_increment", "must be positive");
  check(d.position_increment > 0.0, "dp.position_increment",
        "must be positive");
  check(d.max_lane_changes >= 0, "dp.max_lane_changes",
        "must be non-negative");
  check(d.w_accel >= 0.0 && d.w_lane >= 0.0 && d.w_speed >= 0.0, "dp.w_accel",
        "weights must be non-negative");
  check(d.lane_change_duration > 0.0, "dp.lane_change_duration",
        "must be positive");
  for (double a : d.accel_set) {
    check(near_multiple(a * d.coarse_dt, d.speed_increment), "dp.accel_set",
          "each a*coarse_dt must land on the speed grid");
    check(near_multiple(0.5 * a * d.coarse_dt * d.coarse_dt,
                        d.position_increment),
          "dp.accel_set", "each a*coarse_dt^2/2 must land on the position grid");
  }
  check(near_multiple(d.speed_increment * d.coarse_dt, d.position_increment),
        "dp.speed_increment",
        "speed_increment*coarse_dt must land on the position grid");

  // The closed loop indexes plans by simulation step, and the coarse seed is
  // lifted over whole planning steps.
  check(std::abs(w.dt - p.step) < 1e-12, "dt",
        "must equal the planning step");
  check(near_multiple(d.coarse_dt, p.step), "dp.coarse_dt",
        "must be a multiple of the planning step");
}

std::string to_json(const ScenarioConfig& cfg) {
  using nlohmann::json;
  const WorldConfig& w = cfg.world;
  json j;
  j["duration"] = cfg.duration;
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  j["write_trace"] = cfg.write_trace;
  j["section_length"] = w.section_length;
  j["dt"] = w.dt;
  j["threads"] = w.threads;
  j["spawn"] = {{"inflow", w.spawn.inflow},
                {"penetration", w.spawn.penetration},
                {"connected", w.spawn.connected},
                {"v_d_min_kmh", w.spawn.v_d_min_kmh},
                {"v_d_max_kmh", w.spawn.v_d_max_kmh},
                {"time_gap_min", w.spawn.time_gap_min},
                {"time_gap_max", w.spawn.time_gap_max},
                {"length_min", w.spawn.length_min},
                {"length_max", w.spawn.length_max},
                {"min_entry_speed", w.spawn.min_entry_speed},
                {"seed", w.spawn.seed}};
  j["manual"] = {{"v0", w.manual.v0},
                 {"T_hw", w.manual.T_hw},
                 {"a_max", w.manual.a_max},
                 {"b_comf", w.manual.b_comf},
                 {"s0_jam", w.manual.s0_jam},
                 {"delta_exp", w.manual.delta_exp},
                 {"lc_incentive", w.manual.lc_incentive},
                 {"lc_safe_decel", w.manual.lc_safe_decel},
                 {"lc_cooldown", w.manual.lc_cooldown}};
  j["road"] = {{"n_lanes", w.planner.road.n_lanes},
               {"lane_width", w.planner.road.lane_width},
               {"boundary_margin", w.planner.road.boundary_margin}};
  j["weights"] = {{"jerk", w.planner.weights.jerk},
                  {"accel_x", w.planner.weights.accel_x},
                  {"accel_y", w.planner.weights.accel_y},
                  {"speed_x", w.planner.weights.speed_x},
                  {"speed_y", w.planner.weights.speed_y},
                  {"road", w.planner.weights.road},
                  {"collision", w.planner.weights.collision},
                  {"negative_speed", w.planner.weights.negative_speed},
                  {"epsilon", w.planner.weights.epsilon}};
  j["bounds"] = {{"j_x_min", w.planner.bounds.j_x_min},
                 {"j_x_max", w.planner.bounds.j_x_max},
                 {"a_y_min", w.planner.bounds.a_y_min},
                 {"a_y_max", w.planner.bounds.a_y_max}};
  j["planner"] = {
      {"horizon", w.planner.params.horizon},
      {"step", w.planner.params.step},
      {"zone_ahead", w.planner.params.zone_ahead},
      {"zone_behind", w.planner.params.zone_behind},
      {"override_speed_factor", w.planner.params.override_speed_factor},
      {"override_horizon_factor", w.planner.params.override_horizon_factor},
      {"replan_speed_dev", w.planner.params.replan_speed_dev},
      {"unsafe_field_level", w.planner.params.unsafe_field_level}};
  j["solver"] = {{"max_iterations", w.planner.solver.max_iterations},
                 {"grad_tol", w.planner.solver.grad_tol},
                 {"ls_shrink", w.planner.solver.ls_shrink},
                 {"ls_c1", w.planner.solver.ls_c1},
                 {"cg_restart", w.planner.solver.cg_restart},
                 {"min_step", w.planner.solver.min_step}};
  j["dp"] = {{"coarse_dt", w.planner.dp.coarse_dt},
             {"coarse_steps", w.planner.dp.coarse_steps},
             {"accel_set", w.planner.dp.accel_set},
             {"speed_increment", w.planner.dp.speed_increment},
             {"position_increment", w.planner.dp.position_increment},
             {"max_lane_changes", w.planner.dp.max_lane_changes},
             {"allow_lane_change", w.planner.dp.allow_lane_change},
             {"w_accel", w.planner.dp.w_accel},
             {"w_lane", w.planner.dp.w_lane},
             {"w_speed", w.planner.dp.w_speed},
             {"lane_change_duration", w.planner.dp.lane_change_duration}};
  return j.dump(2) + "\n";
}

}  // namespace mplan
