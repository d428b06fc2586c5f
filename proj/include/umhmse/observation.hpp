#pragma once

// The gateway-to-server uplink record and its JSON wire form.
//
//   {"patient_id": "p1", "uplink_seq": 7, "timestamp_ms": 60000,
//    "hr": 72, "spo2": null, "flags": ["sensor_ok"], "mobility": "resting",
//    "cell": {"mcc": "603", "mnc": "01", "lac": 1201, "ci": 33001},
//    "reason": "heartbeat"}
//
// null encodes a MISSING vital. Unknown fields are rejected.

#include <cstdint>
#include <string>

#include "umhmse/json_fields.hpp"
#include "umhmse/sensor_codec.hpp"
#include "umhmse/types.hpp"

namespace umhmse {

struct ObservationMsg {
  std::string patient_id;
  std::uint64_t uplink_seq = 0;
  TimestampMs timestamp_ms = 0;
  Vital hr;
  Vital spo2;
  codec::FrameFlags flags;
  MobilityState mobility = MobilityState::resting;
  CellObservation cell;
  std::string reason;

  friend bool operator==(const ObservationMsg&, const ObservationMsg&) = default;
};

Json flags_to_json(const codec::FrameFlags& f);
codec::FrameFlags flags_from_json(const Json& j, const std::string& field = "flags");

Json to_json(const ObservationMsg& m);

/// Throws FieldError naming the first malformed field.
ObservationMsg observation_from_json(const Json& j);

/// Range and vocabulary checks shared by the parser and in-process callers.
void validate(const ObservationMsg& m);

}  // namespace umhmse
