#pragma once

// Synthetic training labels: a tick is at risk (1) while any scripted event of
// the scenario is in progress, otherwise 0.

#include "umhmse/cell_locator.hpp"
#include "umhmse/gateway.hpp"
#include "umhmse/risk_model.hpp"
#include "umhmse/simulator.hpp"

namespace umhmse::labeling {

bool in_event(const sim::Scenario& scenario, TimestampMs t_ms);

/// One example per trace element. Places resolve through `cells` when given.
risk::LabeledDataset label_trace(const sim::Scenario& scenario, const sim::ObservationTrace& trace,
                                 const cell::CellDb* cells, const gateway::MobilityConfig& mobility = {});

}  // namespace umhmse::labeling
