#include "umhmse/observation.hpp"

#include <array>
#include <algorithm>

namespace umhmse {

namespace {

constexpr std::array<std::string_view, 6> kReasons = {"first",           "spo2_change", "hr_change",
                                                      "mobility_change", "cell_change", "heartbeat"};

Json vital_to_json(const Vital& v) { return v ? Json(*v) : Json(nullptr); }

Vital vital_from(FieldReader& r, const std::string& key, int hi) {
  auto v = r.opt_integer(key);
  if (!r.has(key)) throw FieldError(r.path(key), "missing");
  if (!v) return std::nullopt;
  if (*v < 0 || *v > hi) throw FieldError(r.path(key), "out of range");
  return static_cast<int>(*v);
}

}  // namespace

Json flags_to_json(const codec::FrameFlags& f) {
  Json a = Json::array();
  if (f.sensor_ok) a.push_back("sensor_ok");
  if (f.low_perfusion) a.push_back("low_perfusion");
  if (f.finger_out) a.push_back("finger_out");
  return a;
}

codec::FrameFlags flags_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) throw FieldError(field, "expected an array");
  codec::FrameFlags f;
  for (const auto& v : j) {
    if (!v.is_string()) throw FieldError(field, "expected flag names");
    auto s = v.get<std::string>();
    if (s == "sensor_ok") f.sensor_ok = true;
    else if (s == "low_perfusion") f.low_perfusion = true;
    else if (s == "finger_out") f.finger_out = true;
    else throw FieldError(field, "unknown flag '" + s + "'");
  }
  return f;
}

Json to_json(const ObservationMsg& m) {
  return Json{{"patient_id", m.patient_id},
              {"uplink_seq", m.uplink_seq},
              {"timestamp_ms", m.timestamp_ms},
              {"hr", vital_to_json(m.hr)},
              {"spo2", vital_to_json(m.spo2)},
              {"flags", flags_to_json(m.flags)},
              {"mobility", to_string(m.mobility)},
              {"cell", cell_to_json(m.cell)},
              {"reason", m.reason}};
}

void validate(const ObservationMsg& m) {
  if (m.patient_id.empty()) throw FieldError("patient_id", "must be non-empty");
  if (m.hr && (*m.hr < 0 || *m.hr > kHrMax)) throw FieldError("hr", "out of range");
  if (m.spo2 && (*m.spo2 < 0 || *m.spo2 > kSpo2Max)) throw FieldError("spo2", "out of range");
  try {
    validate_cell(m.cell);
  } catch (const std::invalid_argument& e) {
    throw FieldError(std::string("cell.") + e.what(), "malformed code");
  }
  if (std::find(kReasons.begin(), kReasons.end(), m.reason) == kReasons.end())
    throw FieldError("reason", "unknown transmit reason");
}

ObservationMsg observation_from_json(const Json& j) {
  FieldReader r(j);
  ObservationMsg m;
  m.patient_id = r.str("patient_id");
  auto seq = r.integer("uplink_seq");
  if (seq < 0) throw FieldError("uplink_seq", "must be >= 0");
  m.uplink_seq = static_cast<std::uint64_t>(seq);
  m.timestamp_ms = r.integer("timestamp_ms");
  m.hr = vital_from(r, "hr", kHrMax);
  m.spo2 = vital_from(r, "spo2", kSpo2Max);
  m.flags = flags_from_json(r.raw("flags"));
  try {
    m.mobility = mobility_from_string(r.str("mobility"));
  } catch (const FieldError&) {
    throw;
  } catch (const std::invalid_argument&) {
    throw FieldError("mobility", "unknown mobility state");
  }
  m.cell = cell_from_json(r.raw("cell"));
  m.reason = r.str("reason");
  r.finish();
  validate(m);
  return m;
}

}  // namespace umhmse
