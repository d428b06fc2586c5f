#pragma once

// Deterministic stand-in for the body sensors and the phone's accelerometer
// and cell modem. Noise is Box-Muller over std::mt19937_64 (both fully
// specified), so a (scenario, seed) pair yields the same trace everywhere.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "umhmse/clock.hpp"
#include "umhmse/sensor_codec.hpp"
#include "umhmse/types.hpp"

namespace umhmse::sim {

enum class EventKind { desaturation, tachycardia, fall };

std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view s);

struct Event {
  EventKind kind = EventKind::desaturation;
  double start_s = 0;
  double duration_s = 0;
  /// percent (desaturation), bpm (tachycardia), peak g (fall)
  double magnitude = 0;
};

struct CellSegment {
  double start_s = 0;
  CellObservation cell;
};

struct Scenario {
  std::string patient_id;
  double duration_s = 0;
  double sample_hz = 1;
  double baseline_hr = 70;
  double baseline_spo2 = 98;
  double noise_sd_hr = 0;
  double noise_sd_spo2 = 0;
  std::vector<CellSegment> cell_path;
  std::vector<Event> events;
};

class InvalidScenario : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws InvalidScenario naming the violated constraint.
void validate(const Scenario& s);

struct TraceElement {
  TimestampMs timestamp_ms = 0;
  codec::SensorFrame frame;
  MotionWindow motion;
  CellObservation cell;
  friend bool operator==(const TraceElement&, const TraceElement&) = default;
};

struct ObservationTrace {
  std::string patient_id;
  double sample_hz = 1;
  std::vector<TraceElement> elements;
  friend bool operator==(const ObservationTrace&, const ObservationTrace&) = default;
};

/// Length of the trailing accelerometer history attached to every element.
inline constexpr double kMotionWindowS = 8.0;
/// Sensor noise on each accelerometer axis, in g.
inline constexpr double kMotionNoiseSdG = 0.01;
/// Quiet period after a fall spike.
inline constexpr double kFallStillS = 5.0;

/// floor(duration_s * sample_hz) elements at t_i = i / sample_hz.
ObservationTrace simulate(const Scenario& scenario, std::uint64_t seed);

/// Event overlay at time t (seconds), before noise and clamping.
/// Desaturation ramps linearly over the first and last 10% of its window.
struct EventEffect {
  double hr_delta = 0;
  double spo2_delta = 0;
};
EventEffect event_effect(const std::vector<Event>& events, double t);

struct PlayReport {
  std::size_t delivered = 0;
};

class SinkRejected : public std::runtime_error {
 public:
  explicit SinkRejected(std::size_t index)
      : std::runtime_error("sink rejected element " + std::to_string(index)), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Returns false to reject an element.
using FrameSink = std::function<bool(const TraceElement&)>;

/// Delivers each element at its timestamp per `clock`. Throws SinkRejected(k)
/// after element k was handed to the sink and refused.
PlayReport play(const ObservationTrace& trace, const FrameSink& sink, Clock& clock);

// Scenario files are JSON objects with the Scenario field names.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text);
std::string dump_scenario(const Scenario& s);

class TraceError : public std::runtime_error {
 public:
  TraceError(std::size_t line, const std::string& why)
      : std::runtime_error("trace line " + std::to_string(line) + ": " + why), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Trace files: a header line, then one element per line.
void write_trace(std::ostream& os, const ObservationTrace& trace);
ObservationTrace read_trace(std::istream& is);

}  // namespace umhmse::sim
