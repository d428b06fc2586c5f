#include "umhmse/server.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace umhmse::server {

namespace fs = std::filesystem;

std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Unauthorized: return "unauthorized";
    case ErrorKind::Malformed: return "malformed";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Invalid: return "invalid";
    case ErrorKind::Conflict: return "conflict";
    case ErrorKind::CorruptLog: return "corrupt_log";
  }
  return "invalid";
}

std::string_view to_string(AlertKind k) {
  switch (k) {
    case AlertKind::low_spo2: return "low_spo2";
    case AlertKind::hr_out_of_range: return "hr_out_of_range";
    case AlertKind::fall: return "fall";
    case AlertKind::high_risk: return "high_risk";
    case AlertKind::sensor_off: return "sensor_off";
  }
  return "low_spo2";
}

std::string_view to_string(AlertStatus s) {
  switch (s) {
    case AlertStatus::open: return "open";
    case AlertStatus::acknowledged: return "acknowledged";
    case AlertStatus::cleared: return "cleared";
  }
  return "open";
}

std::string_view to_string(IngestStatus s) { return s == IngestStatus::accepted ? "accepted" : "duplicate"; }

AlertKind alert_kind_from_string(std::string_view s) {
  for (auto k : kAlertKinds)
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown alert kind");
}

AlertStatus alert_status_from_string(std::string_view s) {
  for (auto st : {AlertStatus::open, AlertStatus::acknowledged, AlertStatus::cleared})
    if (to_string(st) == s) return st;
  throw std::invalid_argument("unknown alert status");
}

void validate(const Prescription& rx) {
  auto invalid = [](const char* field, const std::string& why) {
    return ServerError(ErrorKind::Invalid, field, std::string(field) + ": " + why);
  };
  if (rx.spo2_floor < 0 || rx.spo2_floor > kSpo2Max) throw invalid("spo2_floor", "must be in [0,100]");
  if (rx.hr_floor < 0 || rx.hr_floor > kHrMax) throw invalid("hr_floor", "must be in [0,250]");
  if (rx.hr_ceiling < 0 || rx.hr_ceiling > kHrMax) throw invalid("hr_ceiling", "must be in [0,250]");
  if (rx.hr_floor >= rx.hr_ceiling) throw invalid("hr_floor", "must be below hr_ceiling");
  if (!(rx.risk_ceiling > 0 && rx.risk_ceiling < 1)) throw invalid("risk_ceiling", "must be in (0,1)");
  if (!(rx.clear_hold_s >= 0) || !std::isfinite(rx.clear_hold_s)) throw invalid("clear_hold_s", "must be >= 0");
}

// --- alert engine ---------------------------------------------------------

bool condition_holds(AlertKind kind, const PatientRecord& rec, const Prescription& rx) {
  const auto& o = rec.obs;
  switch (kind) {
    case AlertKind::low_spo2: return o.spo2 && *o.spo2 < rx.spo2_floor;
    case AlertKind::hr_out_of_range: return o.hr && (*o.hr < rx.hr_floor || *o.hr > rx.hr_ceiling);
    case AlertKind::fall: return o.mobility == MobilityState::fall;
    case AlertKind::high_risk: return rec.risk_score && *rec.risk_score > rx.risk_ceiling;
    case AlertKind::sensor_off: return o.flags.finger_out || !o.hr || !o.spo2;
  }
  return false;
}

std::vector<AlertTransition> evaluate_alerts(const PatientRecord& rec, const Prescription& rx,
                                             std::vector<Alert>& alerts,
                                             const std::function<void(Alert&)>& make_alert) {
  std::vector<AlertTransition> out;
  const TimestampMs now = rec.obs.timestamp_ms;
  const auto hold_ms = static_cast<TimestampMs>(std::llround(rx.clear_hold_s * 1000.0));

  for (auto kind : kAlertKinds) {
    const bool holds = condition_holds(kind, rec, rx);
    auto live = std::find_if(alerts.begin(), alerts.end(),
                             [&](const Alert& a) { return a.kind == kind && a.status != AlertStatus::cleared; });
    if (live != alerts.end()) {
      if (holds) {
        live->clear_pending_since.reset();
        continue;
      }
      if (!live->clear_pending_since) live->clear_pending_since = now;
      if (now - *live->clear_pending_since >= hold_ms) {
        live->status = AlertStatus::cleared;
        live->cleared_at = now;
        live->clear_pending_since.reset();
        out.push_back({AlertTransition::Type::cleared, static_cast<std::size_t>(live - alerts.begin())});
      }
    } else if (holds) {
      Alert a;
      a.patient_id = rec.obs.patient_id;
      a.kind = kind;
      a.raised_at = now;
      a.evidence = rec;
      a.place = rec.effective;
      a.status = AlertStatus::open;
      if (make_alert) make_alert(a);
      alerts.push_back(std::move(a));
      out.push_back({AlertTransition::Type::raised, alerts.size() - 1});
    }
  }
  return out;
}

// --- JSON -----------------------------------------------------------------

Json place_to_json(const cell::Resolution& p) {
  if (!p) return nullptr;
  return Json{{"place_id", p->place_id}, {"lat", p->lat}, {"lon", p->lon}, {"category", cell::to_string(p->category)}};
}

cell::Resolution place_from_json(const Json& j, const std::string& field) {
  if (j.is_null()) return std::nullopt;
  FieldReader r(j, field + ".");
  cell::PlaceRecord p;
  p.place_id = r.str("place_id");
  p.lat = r.number("lat");
  p.lon = r.number("lon");
  try {
    p.category = cell::category_from_string(r.str("category"));
  } catch (const FieldError&) {
    throw;
  } catch (const std::invalid_argument&) {
    throw FieldError(r.path("category"), "unknown category");
  }
  r.finish();
  return p;
}

Json to_json(const PatientRecord& r) {
  Json j = to_json(r.obs);
  j["resolved_place"] = place_to_json(r.resolved);
  j["effective_place"] = place_to_json(r.effective);
  j["risk_score"] = r.risk_score ? Json(*r.risk_score) : Json(nullptr);
  j["ingest_time"] = r.ingest_time;
  return j;
}

PatientRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw FieldError("record", "expected an object");
  Json obs = j;
  PatientRecord r;
  auto take = [&](const char* key) {
    if (!obs.contains(key)) throw FieldError(key, "missing");
    Json v = obs[key];
    obs.erase(key);
    return v;
  };
  r.resolved = place_from_json(take("resolved_place"), "resolved_place");
  r.effective = place_from_json(take("effective_place"), "effective_place");
  auto risk = take("risk_score");
  if (!risk.is_null()) {
    if (!risk.is_number()) throw FieldError("risk_score", "expected a number");
    r.risk_score = risk.get<double>();
  }
  auto ingest = take("ingest_time");
  if (!ingest.is_number_integer()) throw FieldError("ingest_time", "expected an integer");
  r.ingest_time = ingest.get<TimestampMs>();
  r.obs = observation_from_json(obs);
  return r;
}

Json to_json(const Prescription& rx) {
  return Json{{"patient_id", rx.patient_id},     {"spo2_floor", rx.spo2_floor}, {"hr_ceiling", rx.hr_ceiling},
              {"hr_floor", rx.hr_floor},         {"risk_ceiling", rx.risk_ceiling},
              {"clear_hold_s", rx.clear_hold_s}, {"updated_by", rx.updated_by}, {"updated_at", rx.updated_at}};
}

Prescription prescription_from_json(const Json& j) {
  FieldReader r(j);
  Prescription rx;
  rx.patient_id = r.str("patient_id");
  rx.spo2_floor = static_cast<int>(r.integer("spo2_floor"));
  rx.hr_ceiling = static_cast<int>(r.integer("hr_ceiling"));
  rx.hr_floor = static_cast<int>(r.integer("hr_floor"));
  rx.risk_ceiling = r.number("risk_ceiling");
  rx.clear_hold_s = r.number("clear_hold_s");
  rx.updated_by = r.str("updated_by");
  rx.updated_at = r.integer("updated_at");
  r.finish();
  return rx;
}

PrescriptionUpdate prescription_update_from_json(const Json& j) {
  FieldReader r(j);
  PrescriptionUpdate u;
  auto small_int = [&](const char* key) -> std::optional<int> {
    auto v = r.opt_integer(key);
    if (v && (*v < -1'000'000 || *v > 1'000'000)) throw FieldError(key, "out of range");
    return v ? std::optional<int>(static_cast<int>(*v)) : std::nullopt;
  };
  u.spo2_floor = small_int("spo2_floor");
  u.hr_ceiling = small_int("hr_ceiling");
  u.hr_floor = small_int("hr_floor");
  u.risk_ceiling = r.opt_number("risk_ceiling");
  u.clear_hold_s = r.opt_number("clear_hold_s");
  u.updated_by = r.opt_str("updated_by");
  r.finish();
  return u;
}

Json to_json(const Alert& a, bool internal) {
  auto opt_ms = [](const std::optional<TimestampMs>& v) { return v ? Json(*v) : Json(nullptr); };
  Json j{{"alert_id", a.alert_id},
         {"patient_id", a.patient_id},
         {"kind", to_string(a.kind)},
         {"raised_at", a.raised_at},
         {"evidence", to_json(a.evidence)},
         {"place", place_to_json(a.place)},
         {"status", to_string(a.status)},
         {"acked_by", a.acked_by ? Json(*a.acked_by) : Json(nullptr)},
         {"acked_at", opt_ms(a.acked_at)},
         {"cleared_at", opt_ms(a.cleared_at)}};
  if (internal) {
    j["clear_pending_since"] = opt_ms(a.clear_pending_since);
    j["order"] = a.order;
  }
  return j;
}

Alert alert_from_json(const Json& j) {
  FieldReader r(j);
  Alert a;
  a.alert_id = r.str("alert_id");
  a.patient_id = r.str("patient_id");
  try {
    a.kind = alert_kind_from_string(r.str("kind"));
    a.status = alert_status_from_string(r.str("status"));
  } catch (const FieldError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw FieldError("alert", e.what());
  }
  a.raised_at = r.integer("raised_at");
  a.evidence = record_from_json(r.raw("evidence"));
  a.place = place_from_json(r.raw("place"), "place");
  a.acked_by = r.opt_str("acked_by");
  a.acked_at = r.opt_integer("acked_at");
  a.cleared_at = r.opt_integer("cleared_at");
  a.clear_pending_since = r.opt_integer("clear_pending_since");
  a.order = static_cast<std::uint64_t>(r.opt_integer("order").value_or(0));
  r.finish();
  return a;
}

// --- event feed -----------------------------------------------------------

void EventFeed::publish(std::string type, const Json& data) {
  {
    std::lock_guard lk(mu_);
    if (closed_) return;
    events_.push_back(Event{next_id_++, std::move(type), data.dump()});
    while (events_.size() > capacity_) events_.pop_front();
  }
  cv_.notify_all();
}

std::vector<Event> EventFeed::wait_after(std::uint64_t after, std::chrono::milliseconds timeout) {
  std::unique_lock lk(mu_);
  cv_.wait_for(lk, timeout, [&] { return closed_ || (next_id_ - 1) > after; });
  std::vector<Event> out;
  for (const auto& e : events_)
    if (e.id > after) out.push_back(e);
  return out;
}

std::uint64_t EventFeed::last_id() const {
  std::lock_guard lk(mu_);
  return next_id_ - 1;
}

void EventFeed::close() {
  {
    std::lock_guard lk(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventFeed::closed() const {
  std::lock_guard lk(mu_);
  return closed_;
}

// --- server ---------------------------------------------------------------

struct Server::Patient {
  std::string id;
  mutable std::shared_mutex mu;
  std::vector<PatientRecord> timeline;  // ordered by uplink_seq
  std::unordered_set<std::uint64_t> seqs;
  std::vector<Alert> alerts;
  std::optional<Prescription> rx;
  std::uint64_t next_alert_no = 1;
  std::ofstream log;
};

namespace {

constexpr const char* kLogFormat = "umhmse-log";
constexpr int kLogVersion = 1;

void write_atomic(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TimestampMs system_now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string encode_path_component(const std::string& s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '_' || c == '-') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

Server::Server(std::shared_ptr<const cell::CellDb> cells, std::optional<risk::RiskModel> model, ServerOptions opts)
    : cells_(std::move(cells)), model_(std::move(model)), opts_(std::move(opts)) {
  if (!opts_.now) opts_.now = system_now;
  if (model_ && model_->weights.size() != risk::kFeatureDim)
    throw risk::DimensionMismatch("risk model dimension does not match the feature encoding");
  if (!opts_.state_dir.empty()) load_state();
}

Server::~Server() {
  events_.close();
  try {
    if (!opts_.state_dir.empty()) persist_state();
  } catch (...) {
  }
}

fs::path Server::patient_dir(const std::string& id) const {
  return opts_.state_dir / "patients" / encode_path_component(id);
}

std::shared_ptr<Server::Patient> Server::find(const std::string& id) const {
  std::shared_lock lk(map_mu_);
  auto it = patients_.find(id);
  return it == patients_.end() ? nullptr : it->second;
}

std::shared_ptr<Server::Patient> Server::find_or_create(const std::string& id) {
  if (auto p = find(id)) return p;
  std::unique_lock lk(map_mu_);
  auto& slot = patients_[id];
  if (!slot) {
    slot = std::make_shared<Patient>();
    slot->id = id;
  }
  return slot;
}

void Server::append_log(Patient& p, const PatientRecord& rec) {
  if (opts_.state_dir.empty()) return;
  if (!p.log.is_open()) {
    auto dir = patient_dir(p.id);
    fs::create_directories(dir);
    auto path = dir / "timeline.log";
    bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    p.log.open(path, std::ios::binary | std::ios::app);
    if (!p.log) throw std::runtime_error("cannot open " + path.string());
    if (fresh) {
      Json header{{"format", kLogFormat}, {"version", kLogVersion}, {"patient_id", p.id}};
      p.log << header.dump() << '\n';
    }
  }
  p.log << to_json(rec).dump() << '\n';
  p.log.flush();
  if (!p.log) throw std::runtime_error("append to timeline log failed for " + p.id);
}

void Server::write_alerts(const Patient& p) const {
  if (opts_.state_dir.empty()) return;
  Json list = Json::array();
  for (const auto& a : p.alerts) list.push_back(to_json(a, true));
  Json j{{"version", kLogVersion}, {"patient_id", p.id}, {"next_alert_no", p.next_alert_no}, {"alerts", list}};
  auto dir = patient_dir(p.id);
  fs::create_directories(dir);
  write_atomic(dir / "alerts.json", j.dump());
}

void Server::write_prescription(const Patient& p) const {
  if (opts_.state_dir.empty() || !p.rx) return;
  auto dir = patient_dir(p.id);
  fs::create_directories(dir);
  write_atomic(dir / "prescription.json", to_json(*p.rx).dump(2));
}

Prescription& Server::ensure_prescription(Patient& p) {
  if (!p.rx) {
    Prescription rx;
    rx.patient_id = p.id;
    rx.updated_at = opts_.now();
    p.rx = rx;
    write_prescription(p);
  }
  return *p.rx;
}

IngestStatus Server::ingest(const ObservationMsg& msg) {
  try {
    validate(msg);
  } catch (const FieldError& e) {
    throw ServerError(ErrorKind::Malformed, e.field(), e.what());
  }

  auto p = find_or_create(msg.patient_id);
  std::unique_lock lk(p->mu);
  if (p->seqs.count(msg.uplink_seq)) return IngestStatus::duplicate;

  auto pos = std::upper_bound(p->timeline.begin(), p->timeline.end(), msg.uplink_seq,
                              [](std::uint64_t seq, const PatientRecord& r) { return seq < r.obs.uplink_seq; });

  PatientRecord rec;
  rec.obs = msg;
  rec.resolved = cells_ ? cells_->resolve(msg.cell) : std::nullopt;
  rec.effective = rec.resolved ? rec.resolved : (pos != p->timeline.begin() ? std::prev(pos)->effective : std::nullopt);
  if (model_) {
    auto x = risk::encode_features({msg.hr, msg.spo2, msg.mobility}, rec.effective);
    rec.risk_score = risk::predict(*model_, x);
  }
  rec.ingest_time = opts_.now();

  append_log(*p, rec);
  pos = p->timeline.insert(pos, rec);
  p->seqs.insert(msg.uplink_seq);
  // A late arrival can change the carried-forward place of later unresolved records.
  for (auto it = std::next(pos); it != p->timeline.end() && !it->resolved; ++it) it->effective = pos->effective;

  const auto& rx = ensure_prescription(*p);
  auto before = p->alerts;
  auto make_alert = [&](Alert& a) {
    a.alert_id = p->id + "-a" + std::to_string(p->next_alert_no++);
    a.order = alert_order_.fetch_add(1);
  };
  auto transitions = evaluate_alerts(rec, rx, p->alerts, make_alert);
  if (p->alerts != before) write_alerts(*p);

  std::vector<Alert> changed;
  for (const auto& t : transitions) changed.push_back(p->alerts[t.index]);
  lk.unlock();

  bool raised = std::any_of(transitions.begin(), transitions.end(),
                            [](const AlertTransition& t) { return t.type == AlertTransition::Type::raised; });
  if (raised) {
    std::unique_lock mlk(map_mu_);
    for (const auto& a : changed) alert_owner_[a.alert_id] = a.patient_id;
  }
  events_.publish("record", to_json(rec));
  for (const auto& a : changed) events_.publish("alert", to_json(a));
  return IngestStatus::accepted;
}

std::vector<PatientRecord> Server::query_timeline(const std::string& patient_id, std::optional<TimestampMs> from,
                                                  std::optional<TimestampMs> to) const {
  auto p = find(patient_id);
  if (!p) throw ServerError(ErrorKind::NotFound, "patient_id", "unknown patient " + patient_id);
  std::shared_lock lk(p->mu);
  std::vector<PatientRecord> out;
  for (const auto& r : p->timeline) {
    if (from && r.obs.timestamp_ms < *from) continue;
    if (to && r.obs.timestamp_ms > *to) continue;
    out.push_back(r);
  }
  return out;
}

std::vector<PatientSummary> Server::list_patients() const {
  std::vector<std::shared_ptr<Patient>> all;
  {
    std::shared_lock lk(map_mu_);
    for (const auto& [id, p] : patients_) all.push_back(p);
  }
  std::vector<PatientSummary> out;
  for (const auto& p : all) {
    std::shared_lock lk(p->mu);
    if (p->timeline.empty()) continue;
    PatientSummary s;
    s.patient_id = p->id;
    s.latest = p->timeline.back();
    s.open_alerts = static_cast<std::size_t>(std::count_if(
        p->alerts.begin(), p->alerts.end(), [](const Alert& a) { return a.status == AlertStatus::open; }));
    out.push_back(std::move(s));
  }
  return out;
}

Prescription Server::get_prescription(const std::string& patient_id) const {
  auto p = find(patient_id);
  if (!p) throw ServerError(ErrorKind::NotFound, "patient_id", "unknown patient " + patient_id);
  std::shared_lock lk(p->mu);
  if (p->rx) return *p->rx;
  Prescription rx;
  rx.patient_id = patient_id;
  return rx;
}

Prescription Server::put_prescription(const std::string& patient_id, const PrescriptionUpdate& u) {
  if (patient_id.empty()) throw ServerError(ErrorKind::Invalid, "patient_id", "patient_id must be non-empty");
  auto p = find_or_create(patient_id);
  std::unique_lock lk(p->mu);
  Prescription rx = p->rx.value_or(Prescription{});
  rx.patient_id = patient_id;
  if (u.spo2_floor) rx.spo2_floor = *u.spo2_floor;
  if (u.hr_ceiling) rx.hr_ceiling = *u.hr_ceiling;
  if (u.hr_floor) rx.hr_floor = *u.hr_floor;
  if (u.risk_ceiling) rx.risk_ceiling = *u.risk_ceiling;
  if (u.clear_hold_s) rx.clear_hold_s = *u.clear_hold_s;
  validate(rx);
  rx.updated_by = u.updated_by.value_or("unknown");
  rx.updated_at = opts_.now();
  p->rx = rx;
  write_prescription(*p);
  return rx;
}

std::vector<Alert> Server::list_alerts(const AlertFilter& filter) const {
  std::vector<std::shared_ptr<Patient>> targets;
  {
    std::shared_lock lk(map_mu_);
    if (filter.patient_id) {
      auto it = patients_.find(*filter.patient_id);
      if (it != patients_.end()) targets.push_back(it->second);
    } else {
      for (const auto& [id, p] : patients_) targets.push_back(p);
    }
  }
  std::vector<Alert> out;
  for (const auto& p : targets) {
    std::shared_lock lk(p->mu);
    for (const auto& a : p->alerts)
      if (!filter.status || a.status == *filter.status) out.push_back(a);
  }
  std::sort(out.begin(), out.end(), [](const Alert& a, const Alert& b) { return a.order > b.order; });
  return out;
}

Alert Server::acknowledge_alert(const std::string& alert_id, const std::string& actor) {
  if (actor.empty()) throw ServerError(ErrorKind::Invalid, "actor", "actor must be non-empty");
  std::string owner;
  {
    std::shared_lock lk(map_mu_);
    auto it = alert_owner_.find(alert_id);
    if (it == alert_owner_.end()) throw ServerError(ErrorKind::NotFound, "alert_id", "unknown alert " + alert_id);
    owner = it->second;
  }
  auto p = find(owner);
  if (!p) throw ServerError(ErrorKind::NotFound, "alert_id", "unknown alert " + alert_id);
  std::unique_lock lk(p->mu);
  auto it = std::find_if(p->alerts.begin(), p->alerts.end(), [&](const Alert& a) { return a.alert_id == alert_id; });
  if (it == p->alerts.end()) throw ServerError(ErrorKind::NotFound, "alert_id", "unknown alert " + alert_id);
  if (it->status == AlertStatus::cleared)
    throw ServerError(ErrorKind::Conflict, "status", "alert " + alert_id + " is already cleared");
  if (it->status == AlertStatus::acknowledged) return *it;
  it->status = AlertStatus::acknowledged;
  it->acked_by = actor;
  it->acked_at = opts_.now();
  write_alerts(*p);
  Alert copy = *it;
  lk.unlock();
  events_.publish("alert", to_json(copy));
  return copy;
}

void Server::persist_state() {
  if (opts_.state_dir.empty()) return;
  std::vector<std::shared_ptr<Patient>> all;
  {
    std::shared_lock lk(map_mu_);
    for (const auto& [id, p] : patients_) all.push_back(p);
  }
  for (const auto& p : all) {
    std::unique_lock lk(p->mu);
    if (p->log.is_open()) p->log.flush();
    write_alerts(*p);
    write_prescription(*p);
  }
}

// --- startup replay -------------------------------------------------------

void Server::load_state() {
  auto root = opts_.state_dir / "patients";
  fs::create_directories(root);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) load_patient_dir(d);

  std::uint64_t max_order = 0;
  for (const auto& [id, p] : patients_)
    for (const auto& a : p->alerts) {
      max_order = std::max(max_order, a.order);
      alert_owner_[a.alert_id] = id;
    }
  alert_order_ = max_order + 1;
}

void Server::load_patient_dir(const fs::path& dir) {
  auto corrupt = [](const fs::path& file, std::size_t offset, const std::string& why) {
    return ServerError(ErrorKind::CorruptLog, std::to_string(offset),
                       file.string() + " at byte " + std::to_string(offset) + ": " + why);
  };

  auto patient = std::make_shared<Patient>();
  std::optional<std::string> id;

  auto log_path = dir / "timeline.log";
  if (fs::exists(log_path)) {
    const std::string content = read_file(log_path);
    std::size_t pos = 0;
    std::size_t keep = content.size();  // bytes of the file that are well-formed
    bool header_seen = false;
    while (pos < content.size()) {
      auto nl = content.find('\n', pos);
      const bool last_unterminated = nl == std::string::npos;
      auto end = last_unterminated ? content.size() : nl;
      std::string_view line(content.data() + pos, end - pos);
      try {
        auto j = Json::parse(line);
        if (!header_seen) {
          FieldReader r(j);
          if (r.str("format") != kLogFormat) throw std::invalid_argument("not a timeline log");
          if (r.integer("version") != kLogVersion) throw std::invalid_argument("unsupported log version");
          id = r.str("patient_id");
          r.finish();
          patient->id = *id;
          header_seen = true;
        } else {
          auto rec = record_from_json(j);
          if (rec.obs.patient_id != *id) throw std::invalid_argument("record for another patient");
          if (patient->seqs.insert(rec.obs.uplink_seq).second) {
            auto at = std::upper_bound(
                patient->timeline.begin(), patient->timeline.end(), rec.obs.uplink_seq,
                [](std::uint64_t seq, const PatientRecord& r) { return seq < r.obs.uplink_seq; });
            patient->timeline.insert(at, std::move(rec));
          }
        }
      } catch (const std::exception& e) {
        if (last_unterminated) {
          keep = pos;
          break;
        }
        throw corrupt(log_path, pos, e.what());
      }
      pos = last_unterminated ? content.size() : nl + 1;
    }
    if (keep < content.size()) {
      fs::resize_file(log_path, keep);
    } else if (!content.empty() && content.back() != '\n') {
      std::ofstream(log_path, std::ios::binary | std::ios::app) << '\n';
    }
  }

  auto alerts_path = dir / "alerts.json";
  if (fs::exists(alerts_path)) {
    try {
      auto j = Json::parse(read_file(alerts_path));
      FieldReader r(j);
      r.integer("version");
      auto pid = r.str("patient_id");
      if (id && pid != *id) throw std::invalid_argument("patient_id differs from timeline log");
      id = pid;
      patient->next_alert_no = static_cast<std::uint64_t>(r.integer("next_alert_no"));
      for (const auto& a : r.raw("alerts")) patient->alerts.push_back(alert_from_json(a));
      r.finish();
    } catch (const std::exception& e) {
      throw corrupt(alerts_path, 0, e.what());
    }
  }

  auto rx_path = dir / "prescription.json";
  if (fs::exists(rx_path)) {
    try {
      auto rx = prescription_from_json(Json::parse(read_file(rx_path)));
      if (id && rx.patient_id != *id) throw std::invalid_argument("patient_id differs from timeline log");
      id = rx.patient_id;
      patient->rx = rx;
    } catch (const std::exception& e) {
      throw corrupt(rx_path, 0, e.what());
    }
  }

  if (!id) return;
  patient->id = *id;
  patients_[*id] = std::move(patient);
}

}  // namespace umhmse::server
