#pragma once

// Central server core: ingestion, per-patient timelines, place resolution with
// carry-forward, risk scoring, prescription-driven alerting, and durable state.
// Transport-agnostic; http.hpp puts it behind /v1.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "umhmse/cell_locator.hpp"
#include "umhmse/json_fields.hpp"
#include "umhmse/observation.hpp"
#include "umhmse/risk_model.hpp"

namespace umhmse::server {

enum class ErrorKind { Unauthorized, Malformed, NotFound, Invalid, Conflict, CorruptLog };

std::string_view to_string(ErrorKind k);

class ServerError : public std::runtime_error {
 public:
  ServerError(ErrorKind kind, std::string field, const std::string& message)
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}
  ErrorKind kind() const noexcept { return kind_; }
  /// Offending field name, or the byte offset for CorruptLog.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

struct PatientRecord {
  ObservationMsg obs;
  cell::Resolution resolved;   // this record's own cell lookup
  cell::Resolution effective;  // most recent known place at or before this record
  std::optional<double> risk_score;
  TimestampMs ingest_time = 0;
  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Prescription {
  std::string patient_id;
  int spo2_floor = 90;
  int hr_ceiling = 120;
  int hr_floor = 40;
  double risk_ceiling = 0.8;
  double clear_hold_s = 120;
  std::string updated_by = "default";
  TimestampMs updated_at = 0;
  friend bool operator==(const Prescription&, const Prescription&) = default;
};

/// Partial update; absent fields keep their current value.
struct PrescriptionUpdate {
  std::optional<int> spo2_floor;
  std::optional<int> hr_ceiling;
  std::optional<int> hr_floor;
  std::optional<double> risk_ceiling;
  std::optional<double> clear_hold_s;
  std::optional<std::string> updated_by;
};

/// Throws ServerError(Invalid, field).
void validate(const Prescription& rx);

enum class AlertKind { low_spo2, hr_out_of_range, fall, high_risk, sensor_off };
inline constexpr std::array<AlertKind, 5> kAlertKinds = {AlertKind::low_spo2, AlertKind::hr_out_of_range,
                                                         AlertKind::fall, AlertKind::high_risk,
                                                         AlertKind::sensor_off};
enum class AlertStatus { open, acknowledged, cleared };

std::string_view to_string(AlertKind k);
std::string_view to_string(AlertStatus s);
AlertKind alert_kind_from_string(std::string_view s);
AlertStatus alert_status_from_string(std::string_view s);

struct Alert {
  std::string alert_id;
  std::string patient_id;
  AlertKind kind = AlertKind::low_spo2;
  TimestampMs raised_at = 0;
  PatientRecord evidence;
  cell::Resolution place;
  AlertStatus status = AlertStatus::open;
  std::optional<std::string> acked_by;
  std::optional<TimestampMs> acked_at;
  std::optional<TimestampMs> cleared_at;
  /// Record time at which the condition was first seen false again.
  std::optional<TimestampMs> clear_pending_since;
  /// Global raise order, used to list newest first.
  std::uint64_t order = 0;
  friend bool operator==(const Alert&, const Alert&) = default;
};

/// Whether each alert condition holds for a record under a prescription.
bool condition_holds(AlertKind kind, const PatientRecord& rec, const Prescription& rx);

struct AlertTransition {
  enum class Type { raised, cleared } type;
  std::size_t index;  // into the alert list passed to evaluate_alerts
};

/// Applies hysteresis for one record against one patient's alert list.
/// Raises a kind only when no non-cleared alert of that kind exists; clears an
/// alert once its condition has been false for clear_hold_s of record time.
/// `make_alert` fills id/raised_at/order for new alerts.
std::vector<AlertTransition> evaluate_alerts(const PatientRecord& rec, const Prescription& rx,
                                             std::vector<Alert>& alerts,
                                             const std::function<void(Alert&)>& make_alert);

struct PatientSummary {
  std::string patient_id;
  PatientRecord latest;
  std::size_t open_alerts = 0;
};

enum class IngestStatus { accepted, duplicate };
std::string_view to_string(IngestStatus s);

struct AlertFilter {
  std::optional<std::string> patient_id;
  std::optional<AlertStatus> status;
};

// --- JSON forms -----------------------------------------------------------

Json place_to_json(const cell::Resolution& p);
cell::Resolution place_from_json(const Json& j, const std::string& field);
Json to_json(const PatientRecord& r);
PatientRecord record_from_json(const Json& j);
Json to_json(const Prescription& rx);
Prescription prescription_from_json(const Json& j);
PrescriptionUpdate prescription_update_from_json(const Json& j);
/// `internal` adds hysteresis bookkeeping used by the snapshot files.
Json to_json(const Alert& a, bool internal = false);
Alert alert_from_json(const Json& j);

// --- change feed ----------------------------------------------------------

struct Event {
  std::uint64_t id = 0;
  std::string type;  // "record" or "alert"
  std::string data;  // JSON
};

/// Bounded in-memory feed of recent record/alert events for push clients.
class EventFeed {
 public:
  explicit EventFeed(std::size_t capacity = 4096) : capacity_(capacity) {}

  void publish(std::string type, const Json& data);
  /// Events with id > after, waiting up to `timeout` for at least one.
  std::vector<Event> wait_after(std::uint64_t after, std::chrono::milliseconds timeout);
  std::uint64_t last_id() const;
  void close();
  bool closed() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Event> events_;
  std::size_t capacity_;
  std::uint64_t next_id_ = 1;
  bool closed_ = false;
};

// --- server ---------------------------------------------------------------

struct ServerOptions {
  /// Durable state location; in-memory only when empty.
  std::filesystem::path state_dir;
  /// Wall time in ms since epoch, injectable for tests.
  std::function<TimestampMs()> now;
};

class Server {
 public:
  Server(std::shared_ptr<const cell::CellDb> cells, std::optional<risk::RiskModel> model, ServerOptions opts = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Duplicate iff (patient_id, uplink_seq) is already stored.
  IngestStatus ingest(const ObservationMsg& msg);

  /// Records with from <= timestamp_ms <= to, in uplink_seq order.
  std::vector<PatientRecord> query_timeline(const std::string& patient_id, std::optional<TimestampMs> from,
                                            std::optional<TimestampMs> to) const;
  std::vector<PatientSummary> list_patients() const;
  Prescription get_prescription(const std::string& patient_id) const;
  /// Validated; applies from the next ingest on.
  Prescription put_prescription(const std::string& patient_id, const PrescriptionUpdate& update);
  /// Newest first.
  std::vector<Alert> list_alerts(const AlertFilter& filter = {}) const;
  /// Idempotent on acknowledged alerts; Conflict on cleared ones.
  Alert acknowledge_alert(const std::string& alert_id, const std::string& actor);

  /// Flushes logs and rewrites snapshots.
  void persist_state();

  EventFeed& events() { return events_; }
  bool has_model() const { return model_.has_value(); }

 private:
  struct Patient;

  std::shared_ptr<Patient> find(const std::string& id) const;
  std::shared_ptr<Patient> find_or_create(const std::string& id);
  void load_state();
  void load_patient_dir(const std::filesystem::path& dir);
  std::filesystem::path patient_dir(const std::string& id) const;
  void write_alerts(const Patient& p) const;
  void write_prescription(const Patient& p) const;
  void append_log(Patient& p, const PatientRecord& rec);
  Prescription& ensure_prescription(Patient& p);

  std::shared_ptr<const cell::CellDb> cells_;
  std::optional<risk::RiskModel> model_;
  ServerOptions opts_;

  mutable std::shared_mutex map_mu_;
  std::map<std::string, std::shared_ptr<Patient>> patients_;
  std::map<std::string, std::string> alert_owner_;  // alert_id -> patient_id, under map_mu_
  std::atomic<std::uint64_t> alert_order_{1};
  EventFeed events_;
};

/// Percent-style encoding keeping [A-Za-z0-9_-]; used for state directory names.
std::string encode_path_component(const std::string& s);

}  // namespace umhmse::server
