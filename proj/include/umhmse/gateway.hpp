#pragma once

// The patient-side gateway: turns raw sensor ticks into snapshots, decides per
// snapshot whether the server needs to hear about it, and delivers the
// resulting messages in order over an unreliable uplink.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "umhmse/clock.hpp"
#include "umhmse/observation.hpp"
#include "umhmse/sensor_codec.hpp"
#include "umhmse/simulator.hpp"
#include "umhmse/types.hpp"

namespace umhmse::gateway {

struct MobilityConfig {
  double fall_peak_g = 2.5;
  double still_sd_g = 0.05;
  double active_sd_g = 0.1;
  double still_window_s = 5.0;
};

/// Magnitude rule: a spike of at least fall_peak_g followed by a quiet tail
/// is a fall; otherwise the spread of magnitudes separates active from resting.
/// Standard deviations are population (divide by n).
MobilityState classify_mobility(const MotionWindow& window, const MobilityConfig& cfg = {});

struct GatewaySnapshot {
  TimestampMs timestamp_ms = 0;
  Vital hr;
  Vital spo2;
  codec::FrameFlags flags;
  MobilityState mobility = MobilityState::resting;
  CellObservation cell;
  friend bool operator==(const GatewaySnapshot&, const GatewaySnapshot&) = default;
};

GatewaySnapshot make_snapshot(const sim::TraceElement& el, const MobilityConfig& cfg = {});

struct DeadbandConfig {
  int spo2_delta = 2;
  int hr_delta = 5;
  TimestampMs heartbeat_ms = 60'000;
};

/// Which clause fired, checked in this order.
enum class TransmitReason { first, spo2_change, hr_change, mobility_change, cell_change, heartbeat };

std::string_view to_string(TransmitReason r);

struct TransmitDecision {
  bool send = false;
  std::optional<TransmitReason> reason;  // set iff send
  friend bool operator==(const TransmitDecision&, const TransmitDecision&) = default;
};

struct TransmitState {
  std::optional<GatewaySnapshot> last_sent;
  std::optional<TimestampMs> last_sent_at_ms;
  std::uint64_t uplink_seq = 0;
};

TransmitDecision should_transmit(const TransmitState& state, const GatewaySnapshot& snap,
                                 const DeadbandConfig& cfg = {});

// --- delivery -------------------------------------------------------------

enum class Delivery {
  accepted,
  duplicate,
  rejected,  // the server refused the message; retrying will not help
  failed,    // transport failure; retry later
};

class Uplink {
 public:
  virtual ~Uplink() = default;
  virtual Delivery deliver(const ObservationMsg& msg) = 0;
};

class ConfigInvalid : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct GatewayConfig {
  std::string patient_id;
  std::string server_url;
  std::string auth_token;
  DeadbandConfig deadband;
  MobilityConfig mobility;
  std::size_t buffer_cap = 100;
  TimestampMs retry_base_ms = 1'000;
  TimestampMs retry_cap_ms = 60'000;
  /// Retry rounds allowed after the source closes before giving up.
  std::size_t drain_max_attempts = 32;
};

/// Throws ConfigInvalid naming the bad setting.
void validate(const GatewayConfig& cfg);

/// JSON file with the GatewayConfig field names; thresholds are optional.
GatewayConfig load_gateway_config(const std::string& path);
GatewayConfig parse_gateway_config(const std::string& text);

struct SessionReport {
  std::size_t observed = 0;
  std::size_t sent = 0;
  std::size_t suppressed = 0;
  std::size_t buffered = 0;
  std::size_t dropped = 0;
  std::size_t delivered = 0;
  std::size_t rejected = 0;
  std::size_t pending = 0;  // still buffered when the session ended
};

/// One patient's gateway. Single-threaded: messages leave in uplink_seq order.
class Gateway {
 public:
  Gateway(GatewayConfig cfg, Uplink& uplink, Clock& clock);

  /// Decides, and on send delivers or buffers. Returns the decision.
  TransmitDecision observe(const GatewaySnapshot& snap);

  /// Retries the buffer until empty or drain_max_attempts rounds fail.
  void drain();

  const TransmitState& state() const noexcept { return state_; }
  const std::vector<TransmitDecision>& decisions() const noexcept { return decisions_; }
  std::size_t buffer_size() const noexcept { return buffer_.size(); }
  SessionReport report() const;

 private:
  void flush();
  void enqueue(ObservationMsg msg);
  void on_failure();
  /// false on transport failure
  bool try_deliver(const ObservationMsg& msg);

  GatewayConfig cfg_;
  Uplink& uplink_;
  Clock& clock_;
  TransmitState state_;
  std::deque<ObservationMsg> buffer_;
  std::size_t consecutive_failures_ = 0;
  TimestampMs next_retry_at_ = 0;
  std::vector<TransmitDecision> decisions_;
  SessionReport report_;
};

/// Pulls snapshots until the source returns nullopt, sleeping on `clock` until
/// each snapshot's timestamp, then drains the buffer.
using SnapshotSource = std::function<std::optional<GatewaySnapshot>()>;
SessionReport run_gateway(const SnapshotSource& source, Uplink& uplink, const GatewayConfig& cfg, Clock& clock);

/// Convenience source over a simulated or recorded trace.
SnapshotSource trace_source(const sim::ObservationTrace& trace, const MobilityConfig& cfg);

}  // namespace umhmse::gateway
