#include "umhmse/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "umhmse/json_fields.hpp"

namespace umhmse::sim {

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::desaturation: return "desaturation";
    case EventKind::tachycardia: return "tachycardia";
    case EventKind::fall: return "fall";
  }
  return "desaturation";
}

EventKind event_kind_from_string(std::string_view s) {
  if (s == "desaturation") return EventKind::desaturation;
  if (s == "tachycardia") return EventKind::tachycardia;
  if (s == "fall") return EventKind::fall;
  throw std::invalid_argument("unknown event kind '" + std::string(s) + "'");
}

void validate(const Scenario& s) {
  auto fail = [](const std::string& what) { throw InvalidScenario(what); };
  if (s.patient_id.empty()) fail("patient_id must be non-empty");
  if (!(s.sample_hz > 0) || s.sample_hz > 1000) fail("sample_hz must be in (0, 1000]");
  if (!(s.duration_s > 0)) fail("duration_s must be > 0");
  if (!(s.baseline_spo2 >= 0 && s.baseline_spo2 <= kSpo2Max)) fail("baseline_spo2 must be in [0,100]");
  if (!(s.baseline_hr >= 0 && s.baseline_hr <= kHrMax)) fail("baseline_hr must be in [0,250]");
  if (!(s.noise_sd_hr >= 0) || !(s.noise_sd_spo2 >= 0)) fail("noise_sd must be >= 0");
  if (s.cell_path.empty()) fail("cell_path must be non-empty");
  if (s.cell_path.front().start_s != 0) fail("cell_path must start at 0");
  for (std::size_t i = 0; i < s.cell_path.size(); ++i) {
    if (i > 0 && !(s.cell_path[i].start_s > s.cell_path[i - 1].start_s))
      fail("cell_path start times must be strictly increasing");
    try {
      validate_cell(s.cell_path[i].cell);
    } catch (const std::invalid_argument& e) {
      fail("cell_path[" + std::to_string(i) + "]." + e.what() + " is malformed");
    }
  }
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    auto tag = "events[" + std::to_string(i) + "]";
    if (!(e.magnitude > 0)) fail(tag + ".magnitude must be > 0");
    if (!(e.start_s >= 0) || !(e.duration_s > 0)) fail(tag + " must have start_s >= 0 and duration_s > 0");
    if (e.start_s + e.duration_s > s.duration_s) fail(tag + " ends after the scenario");
  }
}

namespace {

class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : eng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0;
};

int clamp_round(double v, int hi) {
  if (!std::isfinite(v)) return v > 0 ? hi : 0;
  return static_cast<int>(std::clamp<double>(std::llround(std::clamp(v, -1e9, 1e9)), 0, hi));
}

const CellObservation& cell_at(const Scenario& s, double t) {
  const CellSegment* cur = &s.cell_path.front();
  for (const auto& seg : s.cell_path) {
    if (seg.start_s <= t) cur = &seg;
    else break;
  }
  return cur->cell;
}

bool in_window(const Event& e, double t) { return t >= e.start_s && t < e.start_s + e.duration_s; }

}  // namespace

EventEffect event_effect(const std::vector<Event>& events, double t) {
  EventEffect eff;
  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::desaturation: {
        if (t < e.start_s || t > e.start_s + e.duration_s) break;
        double u = (t - e.start_s) / e.duration_s;
        double ramp = std::min({1.0, u / 0.1, (1.0 - u) / 0.1});
        eff.spo2_delta -= e.magnitude * std::max(0.0, ramp);
        break;
      }
      case EventKind::tachycardia:
        if (in_window(e, t)) eff.hr_delta += e.magnitude;
        break;
      case EventKind::fall:
        break;
    }
  }
  return eff;
}

ObservationTrace simulate(const Scenario& scenario, std::uint64_t seed) {
  validate(scenario);
  const double hz = scenario.sample_hz;
  const auto n = static_cast<std::size_t>(std::floor(scenario.duration_s * hz + 1e-9));
  const auto history = static_cast<std::size_t>(std::max(1.0, std::ceil(kMotionWindowS * hz - 1e-9)));

  // Tick index of each fall spike and the end of the quiet period after it.
  struct FallSpan {
    std::size_t spike;
    double peak_g;
    double still_until_s;
  };
  std::vector<FallSpan> falls;
  for (const auto& e : scenario.events) {
    if (e.kind != EventKind::fall) continue;
    auto spike = static_cast<std::size_t>(std::ceil(e.start_s * hz - 1e-9));
    double spike_t = static_cast<double>(spike) / hz;
    falls.push_back({spike, e.magnitude, std::max(spike_t + kFallStillS, e.start_s + e.duration_s)});
  }

  ObservationTrace trace;
  trace.patient_id = scenario.patient_id;
  trace.sample_hz = hz;
  trace.elements.reserve(n);

  Gaussian noise(seed);
  std::vector<Accel> accel;
  accel.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / hz;
    const double hr_noise = noise.next();
    const double spo2_noise = noise.next();
    const Accel jitter{noise.next() * kMotionNoiseSdG, noise.next() * kMotionNoiseSdG,
                       noise.next() * kMotionNoiseSdG};

    auto eff = event_effect(scenario.events, t);
    codec::SensorFrame frame;
    frame.flags.sensor_ok = true;
    frame.hr = clamp_round(scenario.baseline_hr + scenario.noise_sd_hr * hr_noise + eff.hr_delta, kHrMax);
    frame.spo2 =
        clamp_round(scenario.baseline_spo2 + scenario.noise_sd_spo2 * spo2_noise + eff.spo2_delta, kSpo2Max);
    frame.seq = static_cast<std::uint16_t>(i & 0xFFFF);

    // Upright: gravity on z. After a fall the patient lies with gravity on x.
    Accel a{jitter.x, jitter.y, 1.0 + jitter.z};
    for (const auto& f : falls) {
      if (i > f.spike && t <= f.still_until_s) a = Accel{1.0 + jitter.x, jitter.y, jitter.z};
    }
    for (const auto& f : falls) {
      if (i == f.spike) a = Accel{0, 0, f.peak_g};
    }
    accel.push_back(a);

    TraceElement el;
    el.timestamp_ms = std::llround(static_cast<double>(i) * 1000.0 / hz);
    el.frame = frame;
    auto first = i + 1 >= history ? i + 1 - history : 0;
    el.motion.samples.assign(accel.begin() + static_cast<std::ptrdiff_t>(first), accel.end());
    el.motion.window_s = static_cast<double>(el.motion.samples.size()) / hz;
    el.cell = cell_at(scenario, t);
    trace.elements.push_back(std::move(el));
  }
  return trace;
}

PlayReport play(const ObservationTrace& trace, const FrameSink& sink, Clock& clock) {
  PlayReport report;
  for (std::size_t k = 0; k < trace.elements.size(); ++k) {
    const auto& el = trace.elements[k];
    clock.sleep_until(el.timestamp_ms);
    ++report.delivered;
    if (!sink(el)) throw SinkRejected(k);
  }
  return report;
}

// --- scenario files -------------------------------------------------------

Scenario parse_scenario(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InvalidScenario(std::string("scenario is not valid JSON: ") + e.what());
  }
  try {
    FieldReader r(j);
    Scenario s;
    s.patient_id = r.str("patient_id");
    s.duration_s = r.number("duration_s");
    s.sample_hz = r.number("sample_hz");
    s.baseline_hr = r.number("baseline_hr");
    s.baseline_spo2 = r.number("baseline_spo2");
    s.noise_sd_hr = r.number("noise_sd_hr");
    s.noise_sd_spo2 = r.number("noise_sd_spo2");
    const auto& path = r.raw("cell_path");
    if (!path.is_array()) throw FieldError("cell_path", "expected an array");
    for (std::size_t i = 0; i < path.size(); ++i) {
      auto prefix = "cell_path[" + std::to_string(i) + "].";
      FieldReader seg(path[i], prefix);
      CellSegment cs;
      cs.start_s = seg.number("start_s");
      cs.cell = cell_from_json(seg.raw("cell"), prefix + "cell.");
      seg.finish();
      s.cell_path.push_back(std::move(cs));
    }
    if (r.has("events")) {
      const auto& events = r.raw("events");
      if (!events.is_array()) throw FieldError("events", "expected an array");
      for (std::size_t i = 0; i < events.size(); ++i) {
        FieldReader ev(events[i], "events[" + std::to_string(i) + "].");
        Event e;
        try {
          e.kind = event_kind_from_string(ev.str("kind"));
        } catch (const std::invalid_argument& ex) {
          throw FieldError(ev.path("kind"), ex.what());
        }
        e.start_s = ev.number("start_s");
        e.duration_s = ev.number("duration_s");
        e.magnitude = ev.number("magnitude");
        ev.finish();
        s.events.push_back(e);
      }
    }
    r.finish();
    validate(s);
    return s;
  } catch (const FieldError& e) {
    throw InvalidScenario(e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidScenario("cannot read scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::string dump_scenario(const Scenario& s) {
  Json path = Json::array();
  for (const auto& seg : s.cell_path) path.push_back({{"start_s", seg.start_s}, {"cell", cell_to_json(seg.cell)}});
  Json events = Json::array();
  for (const auto& e : s.events)
    events.push_back({{"kind", to_string(e.kind)},
                      {"start_s", e.start_s},
                      {"duration_s", e.duration_s},
                      {"magnitude", e.magnitude}});
  Json j{{"patient_id", s.patient_id},       {"duration_s", s.duration_s},
         {"sample_hz", s.sample_hz},         {"baseline_hr", s.baseline_hr},
         {"baseline_spo2", s.baseline_spo2}, {"noise_sd_hr", s.noise_sd_hr},
         {"noise_sd_spo2", s.noise_sd_spo2}, {"cell_path", path},
         {"events", events}};
  return j.dump(2);
}

// --- trace files ----------------------------------------------------------

void write_trace(std::ostream& os, const ObservationTrace& trace) {
  Json header{{"format", "umhmse-trace"}, {"version", 1}, {"patient_id", trace.patient_id}, {"sample_hz", trace.sample_hz}};
  os << header.dump() << '\n';
  for (const auto& el : trace.elements) {
    auto bytes = codec::encode_frame(el.frame);
    Json samples = Json::array();
    for (const auto& a : el.motion.samples) samples.push_back({a.x, a.y, a.z});
    Json line{{"t", el.timestamp_ms},
              {"frame", codec::to_hex(bytes)},
              {"motion", {{"window_s", el.motion.window_s}, {"samples", samples}}},
              {"cell", cell_to_json(el.cell)}};
    os << line.dump() << '\n';
  }
}

ObservationTrace read_trace(std::istream& is) {
  ObservationTrace trace;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) { throw TraceError(lineno, why); };
  if (!std::getline(is, line)) throw TraceError(0, "trace file is empty");
  ++lineno;
  try {
    auto h = Json::parse(line);
    FieldReader r(h);
    if (r.str("format") != "umhmse-trace") fail("not a trace file");
    if (r.integer("version") != 1) fail("unsupported trace version");
    trace.patient_id = r.str("patient_id");
    trace.sample_hz = r.number("sample_hz");
    r.finish();
  } catch (const TraceError&) {
    throw;
  } catch (const std::exception& e) {
    fail(e.what());
  }
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = Json::parse(line);
      FieldReader r(j);
      TraceElement el;
      el.timestamp_ms = r.integer("t");
      auto bytes = codec::from_hex(r.str("frame"));
      if (bytes.size() != codec::kFrameSize) fail("frame must be 8 bytes");
      el.frame = codec::decode_frame(std::span<const std::uint8_t, codec::kFrameSize>(bytes.data(), codec::kFrameSize));
      FieldReader m(r.raw("motion"), "motion.");
      el.motion.window_s = m.number("window_s");
      for (const auto& s : m.raw("samples")) {
        if (!s.is_array() || s.size() != 3) fail("motion sample must be [x,y,z]");
        el.motion.samples.push_back({s[0].get<double>(), s[1].get<double>(), s[2].get<double>()});
      }
      m.finish();
      el.cell = cell_from_json(r.raw("cell"));
      r.finish();
      if (!trace.elements.empty() && el.timestamp_ms <= trace.elements.back().timestamp_ms)
        fail("timestamps must be strictly increasing");
      trace.elements.push_back(std::move(el));
    } catch (const TraceError&) {
      throw;
    } catch (const std::exception& e) {
      fail(e.what());
    }
  }
  return trace;
}

}  // namespace umhmse::sim
