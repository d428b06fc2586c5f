"""Telemetry pipeline core (frame codec, simulator, gateway, risk model, server)."""

import json

from . import _umhmse
from ._umhmse import (
    FEATURE_DIM,
    DecodeError,
    InvalidScenario,
    ServerError,
    decode_frame,
    encode_features,
    encode_frame,
    gradient,
    nll,
    predict,
    train,
)

__all__ = [
    "FEATURE_DIM", "DecodeError", "InvalidScenario", "ServerError", "Server", "decode_frame", "encode_features",
    "encode_frame", "gradient", "nll", "predict", "run_gateway", "simulate", "train",
]


def _scenario_text(scenario):
    return scenario if isinstance(scenario, str) else json.dumps(scenario)


def simulate(scenario, seed=0):
    """Trace as a list of dicts: a header line, then one element per tick."""
    text = _umhmse.simulate_trace(_scenario_text(scenario), seed)
    return [json.loads(line) for line in text.splitlines() if line]


def run_gateway(scenario, seed=0, spo2_delta=2, hr_delta=5, heartbeat_ms=60000):
    """Uplink messages the gateway would send for a scenario (test clock)."""
    return json.loads(_umhmse.run_gateway(_scenario_text(scenario), seed, spo2_delta, hr_delta, heartbeat_ms))


class Server:
    def __init__(self, cell_csv, weights=None, state_dir=""):
        self._core = _umhmse.Server(cell_csv, weights, str(state_dir))

    def ingest(self, msg):
        return self._core.ingest(msg if isinstance(msg, str) else json.dumps(msg))

    def timeline(self, patient_id):
        return json.loads(self._core.timeline(patient_id))

    def alerts(self):
        return json.loads(self._core.alerts())

    def persist(self):
        self._core.persist()
