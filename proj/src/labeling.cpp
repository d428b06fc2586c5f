#include "umhmse/labeling.hpp"

namespace umhmse::labeling {

bool in_event(const sim::Scenario& scenario, TimestampMs t_ms) {
  const double t = static_cast<double>(t_ms) / 1000.0;
  for (const auto& e : scenario.events)
    if (t >= e.start_s && t < e.start_s + e.duration_s) return true;
  return false;
}

risk::LabeledDataset label_trace(const sim::Scenario& scenario, const sim::ObservationTrace& trace,
                                 const cell::CellDb* cells, const gateway::MobilityConfig& mobility) {
  risk::LabeledDataset out;
  out.reserve(trace.elements.size());
  for (const auto& el : trace.elements) {
    auto snap = gateway::make_snapshot(el, mobility);
    cell::Resolution place = cells ? cells->resolve(el.cell) : std::nullopt;
    risk::Example ex;
    ex.x = risk::encode_features({snap.hr, snap.spo2, snap.mobility}, place);
    ex.y = in_event(scenario, el.timestamp_ms) ? 1 : 0;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace umhmse::labeling
