#include "mplan/trace.hpp"

#include <charconv>
#include <stdexcept>
#include <system_error>

namespace mplan {

namespace {

void append_double(std::string& s, double v) {
  if (v == 0.0) v = 0.0;  // fold -0 into 0
  char buf[32];
  const std::to_chars_result r = std::to_chars(buf, buf + sizeof(buf), v);
  s.append(buf, r.ptr);
}

void append_int(std::string& s, long long v) {
  char buf[24];
  const std::to_chars_result r = std::to_chars(buf, buf + sizeof(buf), v);
  s.append(buf, r.ptr);
}

std::ofstream open_or_throw(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace

char class_code(VehicleClass c) {
  switch (c) {
    case VehicleClass::Manual: return 'M';
    case VehicleClass::AutomatedNonConnected: return 'N';
    case VehicleClass::AutomatedConnected: return 'C';
  }
  return '?';
}

std::string format_double(double v) {
  std::string s;
  append_double(s, v);
  return s;
}

const char* TraceWriter::header() {
  return "t,id,class,x,y,lane,v_x,v_y,a_x,j_x,a_y,plan_id\n";
}

TraceWriter::TraceWriter(const std::string& path) : out_(open_or_throw(path)) {
  out_ << header();
}

void TraceWriter::append(const std::vector<TraceRow>& rows) {
  std::string buf;
  buf.reserve(rows.size() * 96);
  for (const TraceRow& r : rows) {
    append_double(buf, r.t);
    buf.push_back(',');
    append_int(buf, r.id);
    buf.push_back(',');
    buf.push_back(class_code(r.cls));
    buf.push_back(',');
    append_double(buf, r.x);
    buf.push_back(',');
    append_double(buf, r.y);
    buf.push_back(',');
    append_int(buf, r.lane);
    buf.push_back(',');
    append_double(buf, r.v_x);
    buf.push_back(',');
    append_double(buf, r.v_y);
    buf.push_back(',');
    append_double(buf, r.a_x);
    buf.push_back(',');
    append_double(buf, r.j_x);
    buf.push_back(',');
    append_double(buf, r.a_y);
    buf.push_back(',');
    append_int(buf, r.plan_id);
    buf.push_back('\n');
  }
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void TraceWriter::close() {
  if (out_.is_open()) out_.close();
}

void write_vehicles_csv(const std::string& path,
                        const std::vector<TripRecord>& trips) {
  std::ofstream out = open_or_throw(path);
  out << "id,class,v_d,time_gap,length,entered_at,exited_at,completed,"
         "distance,steps,dev_sum,lane_changes,plans,overrides,fallbacks\n";
  std::string buf;
  for (const TripRecord& r : trips) {
    buf.clear();
    append_int(buf, r.id);
    buf.push_back(',');
    buf.push_back(class_code(r.cls));
    buf.push_back(',');
    append_double(buf, r.v_d);
    buf.push_back(',');
    append_double(buf, r.time_gap);
    buf.push_back(',');
    append_double(buf, r.length);
    buf.push_back(',');
    append_double(buf, r.entered_at);
    buf.push_back(',');
    append_double(buf, r.completed ? r.exited_at : 0.0);
    buf.push_back(',');
    append_int(buf, r.completed ? 1 : 0);
    buf.push_back(',');
    append_double(buf, r.distance);
    buf.push_back(',');
    append_int(buf, r.steps);
    buf.push_back(',');
    append_double(buf, r.dev_sum);
    buf.push_back(',');
    append_int(buf, r.lane_changes);
    buf.push_back(',');
    append_int(buf, r.plans);
    buf.push_back(',');
    append_int(buf, r.overrides);
    buf.push_back(',');
    append_int(buf, r.fallbacks);
    buf.push_back('\n');
    out << buf;
  }
}

void write_audit_csv(const std::string& path,
                     const std::vector<AuditEvent>& events) {
  std::ofstream out = open_or_throw(path);
  out << "t,kind,id_a,id_b,value\n";
  std::string buf;
  for (const AuditEvent& e : events) {
    buf.clear();
    append_double(buf, e.t);
    buf.push_back(',');
    buf.append(to_string(e.kind));
    buf.push_back(',');
    append_int(buf, e.id_a);
    buf.push_back(',');
    append_int(buf, e.id_b);
    buf.push_back(',');
    append_double(buf, e.value);
    buf.push_back('\n');
    out << buf;
  }
}

void write_diagnostics_csv(const std::string& path,
                           const std::vector<PlanEvent>& events) {
  std::ofstream out = open_or_throw(path);
  out << "t,vehicle_id,plan_id,trigger,safety_mode,fallback,dp_cost,"
         "plan_cost,fda_iterations,dp_micros,bnb_micros,fda_micros\n";
  std::string buf;
  for (const PlanEvent& e : events) {
    buf.clear();
    append_double(buf, e.t);
    buf.push_back(',');
    append_int(buf, e.vehicle_id);
    buf.push_back(',');
    append_int(buf, e.plan_id);
    buf.push_back(',');
    buf.append(e.trigger);
    buf.push_back(',');
    append_int(buf, e.safety_mode ? 1 : 0);
    buf.push_back(',');
    append_int(buf, e.fallback ? 1 : 0);
    buf.push_back(',');
    append_double(buf, e.dp_cost);
    buf.push_back(',');
    append_double(buf, e.plan_cost);
    buf.push_back(',');
    append_int(buf, e.fda_iterations);
    buf.push_back(',');
    append_int(buf, e.dp_micros);
    buf.push_back(',');
    append_int(buf, e.bnb_micros);
    buf.push_back(',');
    append_int(buf, e.fda_micros);
    buf.push_back('\n');
    out << buf;
  }
}

}  // namespace mplan
