#include <random>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "support/support.hpp"
#include "umhmse/server.hpp"

using namespace umhmse;
using namespace umhmse::server;
using testsupport::TempDir;

namespace {

const CellObservation kHome{"603", "01", 1201, 33001};
const CellObservation kClinic{"603", "01", 1201, 33002};
const CellObservation kNowhere{"603", "01", 9999, 1};

std::shared_ptr<const cell::CellDb> cells() {
  std::istringstream in(
      "mcc,mnc,lac,ci,place_id,lat,lon,category\n"
      "603,01,1201,33001,home-oran,35.6971,-0.6308,home\n"
      "603,01,1201,33002,clinic-oran,35.7000,-0.6400,clinic\n");
  return std::make_shared<const cell::CellDb>(cell::CellDb::parse(in));
}

ObservationMsg msg(std::uint64_t seq, TimestampMs t, Vital spo2 = 97, Vital hr = 72,
                   MobilityState m = MobilityState::resting, CellObservation c = kHome, std::string pid = "p1") {
  ObservationMsg o;
  o.patient_id = std::move(pid);
  o.uplink_seq = seq;
  o.timestamp_ms = t;
  o.hr = hr;
  o.spo2 = spo2;
  o.flags.sensor_ok = true;
  o.mobility = m;
  o.cell = c;
  o.reason = seq == 1 ? "first" : "heartbeat";
  return o;
}

ServerOptions opts(const std::filesystem::path& dir = {}) {
  ServerOptions o;
  o.state_dir = dir;
  o.now = [] { return TimestampMs{1'700'000'000'000}; };
  return o;
}

ServerError error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServerError& e) {
    return e;
  }
  FAIL("expected ServerError");
  return ServerError(ErrorKind::Invalid, "", "");
}

std::vector<Alert> alerts_of_kind(const Server& s, AlertKind k) {
  std::vector<Alert> out;
  for (auto& a : s.list_alerts())
    if (a.kind == k) out.push_back(a);
  return out;
}

/// Mixed batch across three patients exercising every alert kind.
std::vector<ObservationMsg> batch(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ObservationMsg> out;
  std::map<std::string, std::uint64_t> seq;
  for (std::size_t i = 0; i < n; ++i) {
    std::string pid = "p" + std::to_string(rng() % 3);
    auto s = ++seq[pid];
    Vital spo2 = rng() % 25 == 0 ? Vital{} : Vital{80 + static_cast<int>(rng() % 21)};
    Vital hr = rng() % 25 == 0 ? Vital{} : Vital{35 + static_cast<int>(rng() % 100)};
    auto mob = static_cast<MobilityState>(rng() % 10 == 0 ? 2 : rng() % 2);
    CellObservation c = rng() % 3 == 0 ? kNowhere : (rng() % 2 ? kHome : kClinic);
    out.push_back(msg(s, static_cast<TimestampMs>(s) * 30'000, spo2, hr, mob, c, pid));
  }
  return out;
}

}  // namespace

TEST_CASE("ingest: accepted, duplicate, malformed") {
  Server s(cells(), std::nullopt, opts());
  CHECK(s.ingest(msg(1, 0)) == IngestStatus::accepted);
  CHECK(s.query_timeline("p1", {}, {}).size() == 1);
  CHECK(s.ingest(msg(1, 0)) == IngestStatus::duplicate);
  CHECK(s.query_timeline("p1", {}, {}).size() == 1);

  auto bad = msg(2, 1000, 150);
  auto e = error_of([&] { s.ingest(bad); });
  CHECK(e.kind() == ErrorKind::Malformed);
  CHECK(e.field() == "spo2");
  CHECK(s.query_timeline("p1", {}, {}).size() == 1);

  bad = msg(2, 1000);
  bad.hr = 251;
  CHECK(error_of([&] { s.ingest(bad); }).field() == "hr");
  bad = msg(2, 1000);
  bad.reason = "whim";
  CHECK(error_of([&] { s.ingest(bad); }).field() == "reason");
  bad = msg(2, 1000);
  bad.patient_id = "";
  CHECK(error_of([&] { s.ingest(bad); }).field() == "patient_id");
}

TEST_CASE("records carry the resolved and effective place, and no score without a model") {
  Server s(cells(), std::nullopt, opts());
  s.ingest(msg(1, 0));
  auto r = s.query_timeline("p1", {}, {}).at(0);
  REQUIRE(r.resolved);
  CHECK(r.resolved->place_id == "home-oran");
  CHECK(r.effective == r.resolved);
  CHECK_FALSE(r.risk_score);
  CHECK(r.ingest_time == 1'700'000'000'000);
}

TEST_CASE("risk score is present when a model is loaded") {
  risk::RiskModel m;
  m.weights.assign(risk::kFeatureDim, 0.0);
  m.weights[0] = std::log(3.0);
  Server s(cells(), m, opts());
  s.ingest(msg(1, 0));
  auto r = s.query_timeline("p1", {}, {}).at(0);
  REQUIRE(r.risk_score);
  CHECK(*r.risk_score == doctest::Approx(0.75));

  risk::RiskModel wrong;
  wrong.weights.assign(3, 0.0);
  CHECK_THROWS_AS(Server(cells(), wrong, opts()), risk::DimensionMismatch);
}

TEST_CASE("high_risk alert follows the model score") {
  risk::RiskModel m;
  m.weights.assign(risk::kFeatureDim, 0.0);
  m.weights[1] = -2.0;  // low spo2 pushes risk up
  Server s(cells(), m, opts());
  s.ingest(msg(1, 0, 97));  // x1 = 0.4, p = sigma(-0.8) < 0.8
  CHECK(alerts_of_kind(s, AlertKind::high_risk).empty());
  s.ingest(msg(2, 1000, 90));  // x1 = -1, p = sigma(2) = 0.88
  CHECK(alerts_of_kind(s, AlertKind::high_risk).size() == 1);
}

TEST_CASE("carry-forward: unknown cells keep the last known place") {
  Server s(cells(), std::nullopt, opts());
  s.ingest(msg(1, 0, 97, 72, MobilityState::resting, kNowhere));
  CHECK_FALSE(s.query_timeline("p1", {}, {}).back().effective);
  s.ingest(msg(2, 1000, 97, 72, MobilityState::resting, kClinic));
  for (std::uint64_t k = 3; k < 10; ++k) s.ingest(msg(k, static_cast<TimestampMs>(k) * 1000, 97, 72,
                                                       MobilityState::resting, kNowhere));
  auto tl = s.query_timeline("p1", {}, {});
  for (std::size_t i = 1; i < tl.size(); ++i) {
    REQUIRE(tl[i].effective);
    CHECK(tl[i].effective->place_id == "clinic-oran");
  }
  CHECK_FALSE(tl[5].resolved);
  s.ingest(msg(10, 10'000, 97, 72, MobilityState::resting, kHome));
  CHECK(s.query_timeline("p1", {}, {}).back().effective->place_id == "home-oran");
}

TEST_CASE("carry-forward holds for every record of a random batch") {
  Server s(cells(), std::nullopt, opts());
  for (const auto& m : batch(400, 4)) s.ingest(m);
  for (const auto& sum : s.list_patients()) {
    auto tl = s.query_timeline(sum.patient_id, {}, {});
    cell::Resolution last;
    for (const auto& r : tl) {
      if (r.resolved) last = r.resolved;
      CHECK(r.effective == last);
    }
  }
}

TEST_CASE("low_spo2: raise once, then clear after the hold") {
  Server s(cells(), std::nullopt, opts());
  s.ingest(msg(1, 0, 97));
  s.ingest(msg(2, 60'000, 85));
  auto a = alerts_of_kind(s, AlertKind::low_spo2);
  REQUIRE(a.size() == 1);
  CHECK(a[0].status == AlertStatus::open);
  CHECK(a[0].raised_at == 60'000);
  CHECK(a[0].evidence.obs.uplink_seq == 2);
  REQUIRE(a[0].place);
  CHECK(a[0].place->place_id == "home-oran");
  CHECK(a[0].alert_id == "p1-a1");

  s.ingest(msg(3, 61'000, 85));
  CHECK(alerts_of_kind(s, AlertKind::low_spo2).size() == 1);

  // Condition false from 62 s on; default hold is 120 s of record time.
  s.ingest(msg(4, 62'000, 97));
  s.ingest(msg(5, 150'000, 97));
  CHECK(alerts_of_kind(s, AlertKind::low_spo2)[0].status == AlertStatus::open);
  s.ingest(msg(6, 181'999, 97));
  CHECK(alerts_of_kind(s, AlertKind::low_spo2)[0].status == AlertStatus::open);
  s.ingest(msg(7, 182'000, 97));
  a = alerts_of_kind(s, AlertKind::low_spo2);
  REQUIRE(a.size() == 1);
  CHECK(a[0].status == AlertStatus::cleared);
  CHECK(a[0].cleared_at == 182'000);

  // A relapse raises a fresh alert.
  s.ingest(msg(8, 183'000, 80));
  a = alerts_of_kind(s, AlertKind::low_spo2);
  REQUIRE(a.size() == 2);
  CHECK(a[0].alert_id == "p1-a2");  // newest first
  CHECK(a[0].status == AlertStatus::open);
}

TEST_CASE("the clear hold restarts when the condition comes back") {
  Server s(cells(), std::nullopt, opts());
  s.ingest(msg(1, 0, 85));
  s.ingest(msg(2, 10'000, 97));
  s.ingest(msg(3, 100'000, 85));
  s.ingest(msg(4, 110'000, 97));
  s.ingest(msg(5, 200'000, 97));
  CHECK(alerts_of_kind(s, AlertKind::low_spo2)[0].status == AlertStatus::open);
  s.ingest(msg(6, 230'000, 97));
  CHECK(alerts_of_kind(s, AlertKind::low_spo2)[0].status == AlertStatus::cleared);
}

TEST_CASE("alert conditions") {
  Prescription rx;
  PatientRecord r;
  r.obs = msg(1, 0, 89, 72);
  CHECK(condition_holds(AlertKind::low_spo2, r, rx));
  r.obs.spo2 = 90;
  CHECK_FALSE(condition_holds(AlertKind::low_spo2, r, rx));
  r.obs.hr = 121;
  CHECK(condition_holds(AlertKind::hr_out_of_range, r, rx));
  r.obs.hr = 120;
  CHECK_FALSE(condition_holds(AlertKind::hr_out_of_range, r, rx));
  r.obs.hr = 39;
  CHECK(condition_holds(AlertKind::hr_out_of_range, r, rx));
  r.obs.hr = 40;
  CHECK_FALSE(condition_holds(AlertKind::hr_out_of_range, r, rx));
  CHECK_FALSE(condition_holds(AlertKind::sensor_off, r, rx));
  r.obs.hr = std::nullopt;
  CHECK(condition_holds(AlertKind::sensor_off, r, rx));
  CHECK_FALSE(condition_holds(AlertKind::hr_out_of_range, r, rx));
  r.obs.hr = 70;
  r.obs.flags.finger_out = true;
  CHECK(condition_holds(AlertKind::sensor_off, r, rx));
  r.obs.mobility = MobilityState::fall;
  CHECK(condition_holds(AlertKind::fall, r, rx));
  CHECK_FALSE(condition_holds(AlertKind::high_risk, r, rx));
  r.risk_score = 0.81;
  CHECK(condition_holds(AlertKind::high_risk, r, rx));
  r.risk_score = 0.8;
  CHECK_FALSE(condition_holds(AlertKind::high_risk, r, rx));
}

TEST_CASE("acknowledge: idempotent, conflict once cleared, not found otherwise") {
  Server s(cells(), std::nullopt, opts());
  s.ingest(msg(1, 0, 85));
  auto id = s.list_alerts().at(0).alert_id;
  auto a = s.acknowledge_alert(id, "dr-amel");
  CHECK(a.status == AlertStatus::acknowledged);
  CHECK(a.acked_by == "dr-amel");
  CHECK(s.acknowledge_alert(id, "someone-else") == a);
  // Acknowledged alerts still block a second raise and still clear.
  s.ingest(msg(2, 1000, 84));
  CHECK(s.list_alerts().size() == 1);
  s.ingest(msg(3, 2000, 97));
  s.ingest(msg(4, 200'000, 97));
  CHECK(s.list_alerts().at(0).status == AlertStatus::cleared);
  CHECK(error_of([&] { s.acknowledge_alert(id, "x"); }).kind() == ErrorKind::Conflict);
  CHECK(error_of([&] { s.acknowledge_alert("p1-a99", "x"); }).kind() == ErrorKind::NotFound);
  CHECK(error_of([&] { s.acknowledge_alert(id, ""); }).kind() == ErrorKind::Invalid);
}

TEST_CASE("prescriptions: defaults, partial update, validation, effect on the next ingest") {
  Server s(cells(), std::nullopt, opts());
  CHECK(error_of([&] { s.get_prescription("p1"); }).kind() == ErrorKind::NotFound);
  s.ingest(msg(1, 0, 94));
  auto rx = s.get_prescription("p1");
  CHECK(rx.spo2_floor == 90);
  CHECK(rx.hr_ceiling == 120);
  CHECK(rx.hr_floor == 40);
  CHECK(rx.risk_ceiling == 0.8);
  CHECK(rx.clear_hold_s == 120);
  CHECK(s.list_alerts().empty());

  PrescriptionUpdate bad;
  bad.hr_floor = 200;
  auto e = error_of([&] { s.put_prescription("p1", bad); });
  CHECK(e.kind() == ErrorKind::Invalid);
  CHECK(e.field() == "hr_floor");
  CHECK(s.get_prescription("p1").hr_floor == 40);
  PrescriptionUpdate risky;
  risky.risk_ceiling = 1.0;
  CHECK(error_of([&] { s.put_prescription("p1", risky); }).field() == "risk_ceiling");

  PrescriptionUpdate u;
  u.spo2_floor = 96;
  u.updated_by = "dr-amel";
  auto stored = s.put_prescription("p1", u);
  CHECK(stored.spo2_floor == 96);
  CHECK(stored.hr_ceiling == 120);
  CHECK(stored.updated_by == "dr-amel");
  CHECK(s.list_alerts().empty());  // not retroactive
  s.ingest(msg(2, 1000, 94));
  REQUIRE(s.list_alerts().size() == 1);
  CHECK(s.list_alerts()[0].kind == AlertKind::low_spo2);
}

TEST_CASE("timeline queries") {
  Server s(cells(), std::nullopt, opts());
  CHECK(error_of([&] { s.query_timeline("ghost", {}, {}); }).kind() == ErrorKind::NotFound);
  for (std::uint64_t k = 1; k <= 10; ++k) s.ingest(msg(k, static_cast<TimestampMs>(k) * 1000));
  CHECK(s.query_timeline("p1", 3000, 5000).size() == 3);
  CHECK(s.query_timeline("p1", 20'000, 30'000).empty());
  CHECK(s.query_timeline("p1", 5000, 3000).empty());
  CHECK(s.query_timeline("p1", {}, 1000).size() == 1);
}

TEST_CASE("timeline stays in uplink_seq order when messages arrive out of order") {
  Server s(cells(), std::nullopt, opts());
  for (std::uint64_t k : {3u, 1u, 5u, 2u, 4u}) s.ingest(msg(k, static_cast<TimestampMs>(k) * 1000));
  auto tl = s.query_timeline("p1", {}, {});
  for (std::size_t i = 0; i < tl.size(); ++i) CHECK(tl[i].obs.uplink_seq == i + 1);
}

TEST_CASE("patients never interleave and open counts are per patient") {
  Server s(cells(), std::nullopt, opts());
  auto b = batch(300, 8);
  for (const auto& m : b) s.ingest(m);
  auto pts = s.list_patients();
  CHECK(pts.size() == 3);
  for (const auto& p : pts) {
    auto tl = s.query_timeline(p.patient_id, {}, {});
    for (std::size_t i = 0; i < tl.size(); ++i) {
      CHECK(tl[i].obs.patient_id == p.patient_id);
      if (i) CHECK(tl[i].obs.uplink_seq > tl[i - 1].obs.uplink_seq);
    }
    CHECK(p.latest == tl.back());
    AlertFilter f;
    f.patient_id = p.patient_id;
    f.status = AlertStatus::open;
    CHECK(p.open_alerts == s.list_alerts(f).size());
  }
}

TEST_CASE("alert uniqueness and evidence invariants over a random batch") {
  Server s(cells(), std::nullopt, opts());
  for (const auto& m : batch(600, 21)) s.ingest(m);
  auto all = s.list_alerts();
  CHECK(all.size() > 5);
  std::map<std::pair<std::string, AlertKind>, int> live;
  for (const auto& a : all) {
    if (a.status != AlertStatus::cleared) ++live[{a.patient_id, a.kind}];
    auto tl = s.query_timeline(a.patient_id, {}, {});
    auto it = std::find_if(tl.begin(), tl.end(),
                           [&](const PatientRecord& r) { return r.obs.uplink_seq == a.evidence.obs.uplink_seq; });
    REQUIRE(it != tl.end());
    CHECK(*it == a.evidence);
    CHECK(a.place == it->effective);
  }
  for (const auto& [key, n] : live) CHECK(n == 1);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].order > all[i].order);
}

TEST_CASE("ingesting a batch twice equals ingesting it once") {
  auto b = batch(500, 13);
  Server once(cells(), std::nullopt, opts());
  Server twice(cells(), std::nullopt, opts());
  for (const auto& m : b) once.ingest(m);
  for (const auto& m : b) twice.ingest(m);
  for (const auto& m : b) CHECK(twice.ingest(m) == IngestStatus::duplicate);
  for (const auto& p : once.list_patients())
    CHECK(once.query_timeline(p.patient_id, {}, {}) == twice.query_timeline(p.patient_id, {}, {}));
  CHECK(once.list_alerts() == twice.list_alerts());
}

TEST_CASE("state survives a restart") {
  TempDir dir;
  auto b = batch(200, 3);
  std::vector<PatientSummary> before;
  std::vector<Alert> alerts_before;
  std::string acked;
  {
    Server s(cells(), std::nullopt, opts(dir.path()));
    for (const auto& m : b) s.ingest(m);
    PrescriptionUpdate u;
    u.hr_ceiling = 130;
    u.updated_by = "nurse";
    s.put_prescription("p1", u);
    acked = s.list_alerts().back().alert_id;
    if (s.list_alerts().back().status == AlertStatus::open) s.acknowledge_alert(acked, "nurse");
    s.persist_state();
    before = s.list_patients();
    alerts_before = s.list_alerts();
  }
  Server s(cells(), std::nullopt, opts(dir.path()));
  auto after = s.list_patients();
  REQUIRE(after.size() == before.size());
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK(after[i].patient_id == before[i].patient_id);
    CHECK(after[i].latest == before[i].latest);
    CHECK(after[i].open_alerts == before[i].open_alerts);
  }
  CHECK(s.list_alerts() == alerts_before);
  CHECK(s.get_prescription("p1").hr_ceiling == 130);
  CHECK(s.get_prescription("p1").updated_by == "nurse");
  // Duplicates are still recognized, and new alert ids do not collide.
  CHECK(s.ingest(b.front()) == IngestStatus::duplicate);
  auto seq = s.query_timeline("p2", {}, {}).back().obs.uplink_seq + 1;
  s.ingest(msg(seq, 99'000'000, 50, 200, MobilityState::fall, kHome, "p2"));
  std::set<std::string> ids;
  for (const auto& a : s.list_alerts()) CHECK(ids.insert(a.alert_id).second);
}

TEST_CASE("a half-written final line is dropped and truncated away") {
  TempDir dir;
  {
    Server s(cells(), std::nullopt, opts(dir.path()));
    for (std::uint64_t k = 1; k <= 5; ++k) s.ingest(msg(k, static_cast<TimestampMs>(k) * 1000));
  }
  auto log = (dir.path() / "patients" / "p1" / "timeline.log").string();
  auto content = testsupport::read_file(log);
  auto last_start = content.rfind('\n', content.size() - 2) + 1;
  testsupport::write_file(log, content.substr(0, last_start + (content.size() - last_start) / 2));
  {
    Server s(cells(), std::nullopt, opts(dir.path()));
    CHECK(s.query_timeline("p1", {}, {}).size() == 4);
    // The torn bytes are gone, so the next append lands on a clean line.
    CHECK(s.ingest(msg(5, 5000)) == IngestStatus::accepted);
  }
  Server s(cells(), std::nullopt, opts(dir.path()));
  CHECK(s.query_timeline("p1", {}, {}).size() == 5);
}

TEST_CASE("corruption before the final line is fatal and reports the offset") {
  TempDir dir;
  {
    Server s(cells(), std::nullopt, opts(dir.path()));
    for (std::uint64_t k = 1; k <= 5; ++k) s.ingest(msg(k, static_cast<TimestampMs>(k) * 1000));
  }
  auto log = (dir.path() / "patients" / "p1" / "timeline.log").string();
  auto content = testsupport::read_file(log);
  // Lines: header, rec1, rec2, ... Damage rec2.
  std::size_t off = 0;
  for (int i = 0; i < 2; ++i) off = content.find('\n', off) + 1;
  content[off + 1] = '#';
  testsupport::write_file(log, content);
  auto e = error_of([&] { Server s(cells(), std::nullopt, opts(dir.path())); });
  CHECK(e.kind() == ErrorKind::CorruptLog);
  CHECK(e.field() == std::to_string(off));
}

TEST_CASE("patient ids are encoded for directory names") {
  CHECK(encode_path_component("p1") == "p1");
  CHECK(encode_path_component("../x y") == "%2E%2E%2Fx%20y");
  TempDir dir;
  {
    Server s(cells(), std::nullopt, opts(dir.path()));
    s.ingest(msg(1, 0, 97, 72, MobilityState::resting, kHome, "../evil/id"));
  }
  CHECK(std::filesystem::exists(dir.path() / "patients" / "%2E%2E%2Fevil%2Fid" / "timeline.log"));
  Server s(cells(), std::nullopt, opts(dir.path()));
  CHECK(s.query_timeline("../evil/id", {}, {}).size() == 1);
}

TEST_CASE("concurrent ingestion from many gateways") {
  Server s(cells(), std::nullopt, opts());
  std::vector<std::thread> threads;
  for (int g = 0; g < 8; ++g) {
    threads.emplace_back([&, g] {
      auto pid = "g" + std::to_string(g);
      for (std::uint64_t k = 1; k <= 200; ++k) {
        s.ingest(msg(k, static_cast<TimestampMs>(k) * 1000, 97, 72, MobilityState::resting, kHome, pid));
        s.ingest(msg(k, static_cast<TimestampMs>(k) * 1000, 97, 72, MobilityState::resting, kHome, pid));
        if (k % 50 == 0) (void)s.list_patients();
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(s.list_patients().size() == 8);
  for (int g = 0; g < 8; ++g) CHECK(s.query_timeline("g" + std::to_string(g), {}, {}).size() == 200);
}

TEST_CASE("event feed delivers records and alerts in order") {
  Server s(cells(), std::nullopt, opts());
  s.ingest(msg(1, 0, 85));
  auto ev = s.events().wait_after(0, std::chrono::milliseconds(0));
  REQUIRE(ev.size() == 2);
  CHECK(ev[0].type == "record");
  CHECK(ev[1].type == "alert");
  CHECK(ev[1].id == ev[0].id + 1);
  CHECK(s.events().wait_after(ev[1].id, std::chrono::milliseconds(10)).empty());
}

TEST_CASE("JSON forms round trip") {
  Server s(cells(), std::nullopt, opts());
  s.ingest(msg(1, 0, std::nullopt, 130, MobilityState::fall));
  for (const auto& a : s.list_alerts()) {
    CHECK(alert_from_json(to_json(a, true)) == a);
    auto pub = to_json(a);
    CHECK_FALSE(pub.contains("clear_pending_since"));
  }
  auto r = s.query_timeline("p1", {}, {}).at(0);
  CHECK(record_from_json(to_json(r)) == r);
  auto rx = s.get_prescription("p1");
  CHECK(prescription_from_json(to_json(rx)) == rx);
  CHECK_THROWS_AS(prescription_update_from_json(Json{{"spo2_floor", 90}, {"colour", 1}}), FieldError);
  CHECK(prescription_update_from_json(Json{{"spo2_floor", 96}}).spo2_floor == 96);
}
