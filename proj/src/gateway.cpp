#include "umhmse/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>

#include "umhmse/json_fields.hpp"

namespace umhmse::gateway {

namespace {

double magnitude(const Accel& a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

double stddev(std::span<const double> v) {
  if (v.empty()) return 0;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

bool vital_changed(const Vital& a, const Vital& b, int delta) {
  if (!a && !b) return false;
  if (!a || !b) return true;
  return std::abs(*a - *b) >= delta;
}

}  // namespace

MobilityState classify_mobility(const MotionWindow& window, const MobilityConfig& cfg) {
  const auto& samples = window.samples;
  if (samples.empty() || !(window.window_s > 0)) return MobilityState::resting;

  std::vector<double> mags(samples.size());
  std::transform(samples.begin(), samples.end(), mags.begin(), magnitude);

  const double dt = window.window_s / static_cast<double>(mags.size());
  auto tail = static_cast<std::size_t>(std::llround(cfg.still_window_s / dt));
  tail = std::clamp<std::size_t>(tail, 1, mags.size());

  const double peak = *std::max_element(mags.begin(), mags.end());
  std::span<const double> all(mags);
  if (peak >= cfg.fall_peak_g && stddev(all.last(tail)) < cfg.still_sd_g) return MobilityState::fall;
  if (stddev(all) >= cfg.active_sd_g) return MobilityState::active;
  return MobilityState::resting;
}

GatewaySnapshot make_snapshot(const sim::TraceElement& el, const MobilityConfig& cfg) {
  GatewaySnapshot s;
  s.timestamp_ms = el.timestamp_ms;
  s.hr = el.frame.hr;
  s.spo2 = el.frame.spo2;
  s.flags = el.frame.flags;
  s.mobility = classify_mobility(el.motion, cfg);
  s.cell = el.cell;
  return s;
}

std::string_view to_string(TransmitReason r) {
  switch (r) {
    case TransmitReason::first: return "first";
    case TransmitReason::spo2_change: return "spo2_change";
    case TransmitReason::hr_change: return "hr_change";
    case TransmitReason::mobility_change: return "mobility_change";
    case TransmitReason::cell_change: return "cell_change";
    case TransmitReason::heartbeat: return "heartbeat";
  }
  return "first";
}

TransmitDecision should_transmit(const TransmitState& state, const GatewaySnapshot& snap, const DeadbandConfig& cfg) {
  auto send = [](TransmitReason r) { return TransmitDecision{true, r}; };
  if (!state.last_sent) return send(TransmitReason::first);
  const auto& last = *state.last_sent;
  if (vital_changed(snap.spo2, last.spo2, cfg.spo2_delta)) return send(TransmitReason::spo2_change);
  if (vital_changed(snap.hr, last.hr, cfg.hr_delta)) return send(TransmitReason::hr_change);
  if (snap.mobility != last.mobility) return send(TransmitReason::mobility_change);
  if (snap.cell != last.cell) return send(TransmitReason::cell_change);
  if (state.last_sent_at_ms && snap.timestamp_ms - *state.last_sent_at_ms >= cfg.heartbeat_ms)
    return send(TransmitReason::heartbeat);
  return TransmitDecision{};
}

// --- config ---------------------------------------------------------------

void validate(const GatewayConfig& c) {
  auto fail = [](const std::string& what) { throw ConfigInvalid(what); };
  if (c.patient_id.empty()) fail("patient_id must be non-empty");
  if (c.deadband.spo2_delta < 1) fail("spo2_delta must be >= 1");
  if (c.deadband.hr_delta < 1) fail("hr_delta must be >= 1");
  if (c.deadband.heartbeat_ms < 1) fail("heartbeat_ms must be >= 1");
  if (!(c.mobility.fall_peak_g > 0)) fail("fall_peak_g must be > 0");
  if (!(c.mobility.still_sd_g > 0)) fail("still_sd_g must be > 0");
  if (!(c.mobility.active_sd_g > 0)) fail("active_sd_g must be > 0");
  if (!(c.mobility.still_window_s > 0)) fail("still_window_s must be > 0");
  if (c.buffer_cap < 1) fail("buffer_cap must be >= 1");
  if (c.retry_base_ms < 1) fail("retry_base_ms must be >= 1");
  if (c.retry_cap_ms < c.retry_base_ms) fail("retry_cap_ms must be >= retry_base_ms");
}

GatewayConfig parse_gateway_config(const std::string& text) {
  GatewayConfig c;
  try {
    auto j = Json::parse(text);
    FieldReader r(j);
    c.patient_id = r.str("patient_id");
    c.server_url = r.opt_str("server_url").value_or("");
    c.auth_token = r.opt_str("auth_token").value_or("");
    auto& d = c.deadband;
    d.spo2_delta = static_cast<int>(r.opt_integer("spo2_delta").value_or(d.spo2_delta));
    d.hr_delta = static_cast<int>(r.opt_integer("hr_delta").value_or(d.hr_delta));
    d.heartbeat_ms = r.opt_integer("heartbeat_ms").value_or(d.heartbeat_ms);
    auto& m = c.mobility;
    m.fall_peak_g = r.opt_number("fall_peak_g").value_or(m.fall_peak_g);
    m.still_sd_g = r.opt_number("still_sd_g").value_or(m.still_sd_g);
    m.active_sd_g = r.opt_number("active_sd_g").value_or(m.active_sd_g);
    m.still_window_s = r.opt_number("still_window_s").value_or(m.still_window_s);
    auto cap = r.opt_integer("buffer_cap").value_or(static_cast<std::int64_t>(c.buffer_cap));
    if (cap < 0) throw ConfigInvalid("buffer_cap must be >= 1");
    c.buffer_cap = static_cast<std::size_t>(cap);
    c.retry_base_ms = r.opt_integer("retry_base_ms").value_or(c.retry_base_ms);
    c.retry_cap_ms = r.opt_integer("retry_cap_ms").value_or(c.retry_cap_ms);
    auto drain = r.opt_integer("drain_max_attempts").value_or(static_cast<std::int64_t>(c.drain_max_attempts));
    if (drain < 0) throw ConfigInvalid("drain_max_attempts must be >= 0");
    c.drain_max_attempts = static_cast<std::size_t>(drain);
    r.finish();
  } catch (const Json::exception& e) {
    throw ConfigInvalid(std::string("gateway config is not valid JSON: ") + e.what());
  } catch (const FieldError& e) {
    throw ConfigInvalid(e.what());
  }
  validate(c);
  return c;
}

GatewayConfig load_gateway_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot read gateway config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_gateway_config(ss.str());
}

// --- gateway --------------------------------------------------------------

Gateway::Gateway(GatewayConfig cfg, Uplink& uplink, Clock& clock)
    : cfg_(std::move(cfg)), uplink_(uplink), clock_(clock) {
  validate(cfg_);
}

TransmitDecision Gateway::observe(const GatewaySnapshot& snap) {
  ++report_.observed;
  if (!buffer_.empty() && clock_.now_ms() >= next_retry_at_) flush();

  auto decision = should_transmit(state_, snap, cfg_.deadband);
  decisions_.push_back(decision);
  if (!decision.send) {
    ++report_.suppressed;
    return decision;
  }
  ++report_.sent;

  ObservationMsg msg;
  msg.patient_id = cfg_.patient_id;
  msg.uplink_seq = ++state_.uplink_seq;
  msg.timestamp_ms = snap.timestamp_ms;
  msg.hr = snap.hr;
  msg.spo2 = snap.spo2;
  msg.flags = snap.flags;
  msg.mobility = snap.mobility;
  msg.cell = snap.cell;
  msg.reason = std::string(to_string(*decision.reason));
  state_.last_sent = snap;
  state_.last_sent_at_ms = snap.timestamp_ms;

  if (!buffer_.empty()) {
    enqueue(std::move(msg));
  } else if (!try_deliver(msg)) {
    enqueue(std::move(msg));
    on_failure();
  }
  return decision;
}

bool Gateway::try_deliver(const ObservationMsg& msg) {
  switch (uplink_.deliver(msg)) {
    case Delivery::accepted:
    case Delivery::duplicate:
      ++report_.delivered;
      consecutive_failures_ = 0;
      return true;
    case Delivery::rejected:
      ++report_.rejected;
      consecutive_failures_ = 0;
      return true;
    case Delivery::failed:
      return false;
  }
  return false;
}

void Gateway::flush() {
  while (!buffer_.empty()) {
    if (!try_deliver(buffer_.front())) {
      on_failure();
      return;
    }
    buffer_.pop_front();
  }
}

void Gateway::enqueue(ObservationMsg msg) {
  if (buffer_.size() >= cfg_.buffer_cap) {
    buffer_.pop_front();
    ++report_.dropped;
  }
  buffer_.push_back(std::move(msg));
  ++report_.buffered;
}

void Gateway::on_failure() {
  ++consecutive_failures_;
  TimestampMs backoff = cfg_.retry_base_ms;
  for (std::size_t i = 1; i < consecutive_failures_ && backoff < cfg_.retry_cap_ms; ++i) backoff *= 2;
  next_retry_at_ = clock_.now_ms() + std::min(backoff, cfg_.retry_cap_ms);
}

void Gateway::drain() {
  for (std::size_t round = 0; !buffer_.empty() && round < cfg_.drain_max_attempts; ++round) {
    clock_.sleep_until(next_retry_at_);
    flush();
  }
}

SessionReport Gateway::report() const {
  auto r = report_;
  r.pending = buffer_.size();
  return r;
}

SessionReport run_gateway(const SnapshotSource& source, Uplink& uplink, const GatewayConfig& cfg, Clock& clock) {
  Gateway gw(cfg, uplink, clock);
  while (auto snap = source()) {
    clock.sleep_until(snap->timestamp_ms);
    gw.observe(*snap);
  }
  gw.drain();
  return gw.report();
}

SnapshotSource trace_source(const sim::ObservationTrace& trace, const MobilityConfig& cfg) {
  return [&trace, cfg, i = std::size_t{0}]() mutable -> std::optional<GatewaySnapshot> {
    if (i >= trace.elements.size()) return std::nullopt;
    return make_snapshot(trace.elements[i++], cfg);
  };
}

}  // namespace umhmse::gateway
