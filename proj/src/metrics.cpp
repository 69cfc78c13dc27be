#include "mplan/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string_view>

#include <json.hpp>

namespace mplan {

namespace {

constexpr double kBoundSlack = 1e-9;  // absorbs formatting round-trip noise

double percentile99(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t idx = static_cast<std::size_t>(std::ceil(0.99 * n));
  if (idx == 0) idx = 1;
  if (idx > n) idx = n;
  return values[idx - 1];
}

struct ClassAccumulator {
  long long n = 0;
  double delay = 0.0;
  double speed = 0.0;
  double lane_changes = 0.0;
  double deviation = 0.0;

  void add(double d, double s, double lc, double dev) {
    n += 1;
    delay += d;
    speed += s;
    lane_changes += lc;
    deviation += dev;
  }
};

ClassKpis kpis_of(long long n, double delay, double speed, double lc,
                  double dev) {
  ClassKpis k;
  k.completed = n;
  if (n > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    k.delay_s_per_km = delay * inv;
    k.speed_kmh = speed * inv;
    k.lane_changes_per_vehicle = lc * inv;
    k.speed_deviation = dev * inv;
  }
  return k;
}

nlohmann::json to_json_obj(const ClassKpis& c) {
  return {{"completed", c.completed},
          {"delay_s_per_km", c.delay_s_per_km},
          {"speed_kmh", c.speed_kmh},
          {"lane_changes_per_vehicle", c.lane_changes_per_vehicle},
          {"speed_deviation_ms", c.speed_deviation}};
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const std::from_chars_result r = std::from_chars(s.begin(), s.end(), v);
  if (r.ec != std::errc{}) {
    throw std::runtime_error("bad number in CSV: " + std::string(s));
  }
  return v;
}

long long parse_ll(std::string_view s) {
  long long v = 0;
  const std::from_chars_result r = std::from_chars(s.begin(), s.end(), v);
  if (r.ec != std::errc{}) {
    throw std::runtime_error("bad integer in CSV: " + std::string(s));
  }
  return v;
}

VehicleClass parse_class(std::string_view s) {
  if (s == "M") return VehicleClass::Manual;
  if (s == "N") return VehicleClass::AutomatedNonConnected;
  if (s == "C") return VehicleClass::AutomatedConnected;
  throw std::runtime_error("bad vehicle class in CSV: " + std::string(s));
}

AuditKind parse_kind(std::string_view s) {
  for (AuditKind k : {AuditKind::Overlap, AuditKind::RoadDeparture,
                      AuditKind::NegativeSpeed, AuditKind::EmergencyGap,
                      AuditKind::Conservation}) {
    if (s == to_string(k)) return k;
  }
  throw std::runtime_error("bad audit kind in CSV: " + std::string(s));
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

// Calls fn(fields) for every non-header line.
template <typename Fn>
void for_each_row(const std::string& path, Fn&& fn) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    fn(split_csv(line));
  }
}

}  // namespace

void ControlSampler::add(const std::vector<TraceRow>& rows,
                         const ControlBounds& bounds) {
  for (const TraceRow& r : rows) {
    if (r.cls == VehicleClass::Manual) continue;
    abs_jx_.push_back(std::abs(r.j_x));
    abs_ay_.push_back(std::abs(r.a_y));
    abs_ax_sum_ += std::abs(r.a_x);
    rows_ += 1;
    if (r.j_x < bounds.j_x_min - kBoundSlack ||
        r.j_x > bounds.j_x_max + kBoundSlack ||
        r.a_y < bounds.a_y_min - kBoundSlack ||
        r.a_y > bounds.a_y_max + kBoundSlack) {
      violations_ += 1;
    }
  }
}

ControlKpis ControlSampler::finalize() const {
  ControlKpis k;
  k.rows = rows_;
  k.bound_violations = violations_;
  if (rows_ == 0) return k;
  k.jx_p99 = percentile99(abs_jx_);
  k.ay_p99 = percentile99(abs_ay_);
  k.jx_max = *std::max_element(abs_jx_.begin(), abs_jx_.end());
  k.ay_max = *std::max_element(abs_ay_.begin(), abs_ay_.end());
  k.ax_mean_abs = abs_ax_sum_ / static_cast<double>(rows_);
  return k;
}

MetricsReport compute_metrics(const std::vector<TripRecord>& trips,
                              const std::vector<AuditEvent>& audit,
                              const ControlKpis& control) {
  MetricsReport rep;
  rep.control = control;

  ClassAccumulator av;
  ClassAccumulator man;
  long long av_plans = 0;
  for (const TripRecord& r : trips) {
    rep.plans.total += r.plans;
    rep.plans.overrides += r.overrides;
    rep.plans.fallbacks += r.fallbacks;
    if (!r.completed) continue;
    const double tt = r.exited_at - r.entered_at;
    const double km = r.distance / 1000.0;
    const double delay =
        km > 0.0 ? std::max(0.0, tt - r.distance / r.v_d) / km : 0.0;
    const double speed = tt > 0.0 ? r.distance / tt * 3.6 : 0.0;
    const double dev =
        r.steps > 0 ? r.dev_sum / static_cast<double>(r.steps) : 0.0;
    if (r.cls == VehicleClass::Manual) {
      man.add(delay, speed, r.lane_changes, dev);
    } else {
      av.add(delay, speed, r.lane_changes, dev);
      av_plans += r.plans;
    }
  }

  rep.automated = kpis_of(av.n, av.delay, av.speed, av.lane_changes,
                          av.deviation);
  rep.manual = kpis_of(man.n, man.delay, man.speed, man.lane_changes,
                       man.deviation);
  // Combining the class sums keeps "all" the exact vehicle-weighted mean.
  rep.all = kpis_of(av.n + man.n, av.delay + man.delay, av.speed + man.speed,
                    av.lane_changes + man.lane_changes,
                    av.deviation + man.deviation);
  if (av.n > 0) {
    rep.plans.per_completed_av =
        static_cast<double>(av_plans) / static_cast<double>(av.n);
  }

  rep.entered = static_cast<long long>(trips.size());
  rep.exited = rep.all.completed;
  rep.active = rep.entered - rep.exited;
  rep.empty = rep.exited == 0;

  rep.audit.total = static_cast<long long>(audit.size());
  for (const AuditEvent& e : audit) {
    switch (e.kind) {
      case AuditKind::Overlap: rep.audit.overlap += 1; break;
      case AuditKind::RoadDeparture: rep.audit.road_departure += 1; break;
      case AuditKind::NegativeSpeed: rep.audit.negative_speed += 1; break;
      case AuditKind::EmergencyGap: rep.audit.emergency_gap += 1; break;
      case AuditKind::Conservation: rep.audit.conservation += 1; break;
    }
  }
  return rep;
}

std::string to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["empty"] = r.empty;
  j["counts"] = {{"entered", r.entered},
                 {"exited", r.exited},
                 {"active", r.active}};
  j["classes"] = {{"all", to_json_obj(r.all)},
                  {"automated", to_json_obj(r.automated)},
                  {"manual", to_json_obj(r.manual)}};
  j["plans"] = {{"total", r.plans.total},
                {"per_completed_av", r.plans.per_completed_av},
                {"overrides", r.plans.overrides},
                {"fallbacks", r.plans.fallbacks}};
  j["audit"] = {{"total", r.audit.total},
                {"overlap", r.audit.overlap},
                {"road_departure", r.audit.road_departure},
                {"negative_speed", r.audit.negative_speed},
                {"emergency_gap", r.audit.emergency_gap},
                {"conservation", r.audit.conservation}};
  j["control"] = {{"rows", r.control.rows},
                  {"jx_p99", r.control.jx_p99},
                  {"ay_p99", r.control.ay_p99},
                  {"jx_max", r.control.jx_max},
                  {"ay_max", r.control.ay_max},
                  {"ax_mean_abs", r.control.ax_mean_abs},
                  {"bound_violations", r.control.bound_violations}};
  return j.dump(2) + "\n";
}

TimingReport compute_timing(const std::vector<PlanEvent>& events) {
  TimingReport t;
  t.plans = static_cast<long long>(events.size());
  if (events.empty()) return t;
  long long dp_sum = 0;
  long long bnb_sum = 0;
  long long fda_sum = 0;
  long long dp_max = 0;
  long long bnb_max = 0;
  long long fda_max = 0;
  for (const PlanEvent& e : events) {
    dp_sum += e.dp_micros;
    bnb_sum += e.bnb_micros;
    fda_sum += e.fda_micros;
    dp_max = std::max(dp_max, e.dp_micros);
    bnb_max = std::max(bnb_max, e.bnb_micros);
    fda_max = std::max(fda_max, e.fda_micros);
  }
  const double n = static_cast<double>(t.plans);
  t.dp = {dp_sum / n / 1e6, dp_max / 1e6};
  t.bnb = {bnb_sum / n / 1e6, bnb_max / 1e6};
  t.fda = {fda_sum / n / 1e6, fda_max / 1e6};
  return t;
}

std::string to_json(const TimingReport& r) {
  nlohmann::json j;
  j["plans"] = r.plans;
  j["dp"] = {{"mean_s", r.dp.mean_s}, {"max_s", r.dp.max_s}};
  j["bnb"] = {{"mean_s", r.bnb.mean_s}, {"max_s", r.bnb.max_s}};
  j["fda"] = {{"mean_s", r.fda.mean_s}, {"max_s", r.fda.max_s}};
  return j.dump(2) + "\n";
}

MetricsReport report_from_files(const std::string& trace_csv_path,
                                const std::string& vehicles_csv_path,
                                const std::string& audit_csv_path,
                                const ControlBounds& bounds) {
  ControlSampler sampler;
  {
    std::vector<TraceRow> rows;
    for_each_row(trace_csv_path, [&](const std::vector<std::string_view>& f) {
      if (f.size() != 12) throw std::runtime_error("bad trace row width");
      TraceRow r;
      r.t = parse_double(f[0]);
      r.id = static_cast<int>(parse_ll(f[1]));
      r.cls = parse_class(f[2]);
      r.x = parse_double(f[3]);
      r.y = parse_double(f[4]);
      r.lane = static_cast<int>(parse_ll(f[5]));
      r.v_x = parse_double(f[6]);
      r.v_y = parse_double(f[7]);
      r.a_x = parse_double(f[8]);
      r.j_x = parse_double(f[9]);
      r.a_y = parse_double(f[10]);
      r.plan_id = static_cast<int>(parse_ll(f[11]));
      rows.push_back(r);
    });
    sampler.add(rows, bounds);
  }

  std::vector<TripRecord> trips;
  for_each_row(vehicles_csv_path, [&](const std::vector<std::string_view>& f) {
    if (f.size() != 15) throw std::runtime_error("bad vehicle row width");
    TripRecord r;
    r.id = static_cast<int>(parse_ll(f[0]));
    r.cls = parse_class(f[1]);
    r.v_d = parse_double(f[2]);
    r.time_gap = parse_double(f[3]);
    r.length = parse_double(f[4]);
    r.entered_at = parse_double(f[5]);
    r.exited_at = parse_double(f[6]);
    r.completed = parse_ll(f[7]) != 0;
    r.distance = parse_double(f[8]);
    r.steps = parse_ll(f[9]);
    r.dev_sum = parse_double(f[10]);
    r.lane_changes = static_cast<int>(parse_ll(f[11]));
    r.plans = static_cast<int>(parse_ll(f[12]));
    r.overrides = static_cast<int>(parse_ll(f[13]));
    r.fallbacks = static_cast<int>(parse_ll(f[14]));
    trips.push_back(r);
  });

  std::vector<AuditEvent> audit;
  for_each_row(audit_csv_path, [&](const std::vector<std::string_view>& f) {
    if (f.size() != 5) throw std::runtime_error("bad audit row width");
    AuditEvent e;
    e.t = parse_double(f[0]);
    e.kind = parse_kind(f[1]);
    e.id_a = static_cast<int>(parse_ll(f[2]));
    e.id_b = static_cast<int>(parse_ll(f[3]));
    e.value = parse_double(f[4]);
    audit.push_back(e);
  });

  return compute_metrics(trips, audit, sampler.finalize());
}

std::vector<std::pair<int, int>> lane_transitions_from_trace(
    const std::string& trace_csv_path) {
  std::map<int, std::pair<int, int>> state;  // id -> (last lane, count)
  for_each_row(trace_csv_path, [&](const std::vector<std::string_view>& f) {
    if (f.size() != 12) throw std::runtime_error("bad trace row width");
    const int id = static_cast<int>(parse_ll(f[1]));
    const int lane = static_cast<int>(parse_ll(f[5]));
    const auto it = state.find(id);
    if (it == state.end()) {
      state.emplace(id, std::make_pair(lane, 0));
    } else {
      if (it->second.first != lane) it->second.second += 1;
      it->second.first = lane;
    }
  });
  std::vector<std::pair<int, int>> out;
  out.reserve(state.size());
  for (const auto& [id, lc] : state) out.emplace_back(id, lc.second);
  return out;
}

}  // namespace mplan
