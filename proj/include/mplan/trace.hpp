#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "mplan/simworld.hpp"

namespace mplan {

// Single-letter class code used in CSV output: M(anual),
// N(on-connected automated), C(onnected automated).
char class_code(VehicleClass c);

// Shortest decimal string that round-trips to the same double. Negative
// zero is normalised to "0" so equal values always print identically.
std::string format_double(double v);

// Streaming writer for the per-step state table. One line per vehicle per
// step; the header is written on construction.
class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path);
  void append(const std::vector<TraceRow>& rows);
  void close();
  bool good() const { return out_.good(); }

  static const char* header();

 private:
  std::ofstream out_;
};

void write_vehicles_csv(const std::string& path,
                        const std::vector<TripRecord>& trips);
void write_audit_csv(const std::string& path,
                     const std::vector<AuditEvent>& events);
void write_diagnostics_csv(const std::string& path,
                           const std::vector<PlanEvent>& events);

}  // namespace mplan
