// Python bindings. Structured results cross the boundary as JSON text; the
// umhmse package turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "umhmse/gateway.hpp"
#include "umhmse/labeling.hpp"
#include "umhmse/server.hpp"
#include "umhmse/simulator.hpp"

namespace py = pybind11;
using namespace umhmse;

namespace {

codec::SensorFrame frame_from(Vital hr, Vital spo2, std::uint8_t flags, std::uint16_t seq) {
  codec::SensorFrame f;
  f.hr = hr;
  f.spo2 = spo2;
  f.flags = codec::FrameFlags::from_bits(flags);
  f.seq = seq;
  return f;
}

py::bytes encode(Vital hr, Vital spo2, std::uint8_t flags, std::uint16_t seq) {
  auto b = codec::encode_frame(frame_from(hr, spo2, flags, seq));
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

py::dict decode(const py::bytes& data) {
  std::string s = data;
  if (s.size() != codec::kFrameSize) throw py::value_error("a frame is exactly 8 bytes");
  codec::FrameBytes b;
  std::copy(s.begin(), s.end(), b.begin());
  auto f = codec::decode_frame(b);
  py::dict d;
  d["hr"] = f.hr ? py::cast(*f.hr) : py::none();
  d["spo2"] = f.spo2 ? py::cast(*f.spo2) : py::none();
  d["flags"] = f.flags.bits();
  d["seq"] = f.seq;
  return d;
}

std::string simulate_trace(const std::string& scenario_json, std::uint64_t seed) {
  std::ostringstream os;
  sim::write_trace(os, sim::simulate(sim::parse_scenario(scenario_json), seed));
  return os.str();
}

class Collect final : public gateway::Uplink {
 public:
  gateway::Delivery deliver(const ObservationMsg& m) override {
    out.push_back(m);
    return gateway::Delivery::accepted;
  }
  std::vector<ObservationMsg> out;
};

std::string run_gateway(const std::string& scenario_json, std::uint64_t seed, int spo2_delta, int hr_delta,
                        TimestampMs heartbeat_ms) {
  auto s = sim::parse_scenario(scenario_json);
  auto trace = sim::simulate(s, seed);
  gateway::GatewayConfig cfg;
  cfg.patient_id = s.patient_id;
  cfg.deadband = {spo2_delta, hr_delta, heartbeat_ms};
  Collect up;
  TestClock clock;
  gateway::run_gateway(gateway::trace_source(trace, cfg.mobility), up, cfg, clock);
  Json list = Json::array();
  for (const auto& m : up.out) list.push_back(to_json(m));
  return list.dump();
}

risk::LabeledDataset dataset(const std::vector<std::vector<double>>& X, const std::vector<int>& y) {
  if (X.size() != y.size()) throw py::value_error("X and y differ in length");
  risk::LabeledDataset d(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) d[i] = {X[i], y[i]};
  return d;
}

risk::RiskModel model_of(const std::vector<double>& w, double l2) {
  risk::RiskModel m;
  m.weights = w;
  m.l2 = l2;
  return m;
}

py::dict train(const std::vector<std::vector<double>>& X, const std::vector<int>& y, double l2, double step0,
               std::size_t max_iters, double tol) {
  auto data = dataset(X, y);
  auto r = risk::train(data, {step0, max_iters, tol, l2});
  py::dict d;
  d["weights"] = r.model.weights;
  d["iterations"] = r.report.iterations;
  d["final_nll"] = r.report.final_nll;
  d["stop_reason"] = std::string(risk::to_string(r.report.stop_reason));
  d["nll_history"] = r.report.nll_history;
  d["accuracy"] = risk::accuracy(r.model, data);
  return d;
}

std::vector<double> features(Vital hr, Vital spo2, const std::string& mobility, std::optional<std::string> category) {
  cell::Resolution place;
  if (category) place = cell::PlaceRecord{"", 0, 0, cell::category_from_string(*category)};
  return risk::encode_features({hr, spo2, mobility_from_string(mobility)}, place);
}

/// In-memory server core for scripting.
class PyServer {
 public:
  PyServer(const std::string& cell_csv, std::optional<std::vector<double>> weights, const std::string& state_dir) {
    std::istringstream in(cell_csv);
    auto cells = std::make_shared<const cell::CellDb>(cell::CellDb::parse(in));
    std::optional<risk::RiskModel> model;
    if (weights) model = model_of(*weights, 0);
    server::ServerOptions o;
    o.state_dir = state_dir;
    core_ = std::make_unique<server::Server>(cells, model, o);
  }
  std::string ingest(const std::string& msg_json) {
    return std::string(server::to_string(core_->ingest(observation_from_json(Json::parse(msg_json)))));
  }
  std::string timeline(const std::string& patient) const {
    Json list = Json::array();
    for (const auto& r : core_->query_timeline(patient, std::nullopt, std::nullopt)) list.push_back(server::to_json(r));
    return list.dump();
  }
  std::string alerts() const {
    Json list = Json::array();
    for (const auto& a : core_->list_alerts()) list.push_back(server::to_json(a));
    return list.dump();
  }
  void persist() { core_->persist_state(); }

 private:
  std::unique_ptr<server::Server> core_;
};

}  // namespace

PYBIND11_MODULE(_umhmse, m) {
  m.doc() = "Telemetry pipeline core: frame codec, simulator, gateway, risk model, server";

  py::register_exception<codec::DecodeError>(m, "DecodeError", PyExc_ValueError);
  py::register_exception<sim::InvalidScenario>(m, "InvalidScenario", PyExc_ValueError);
  py::register_exception<server::ServerError>(m, "ServerError", PyExc_RuntimeError);

  m.def("encode_frame", &encode, py::arg("hr"), py::arg("spo2"), py::arg("flags") = 1, py::arg("seq") = 0);
  m.def("decode_frame", &decode, py::arg("data"));
  m.def("simulate_trace", &simulate_trace, py::arg("scenario_json"), py::arg("seed") = 0);
  m.def("run_gateway", &run_gateway, py::arg("scenario_json"), py::arg("seed") = 0, py::arg("spo2_delta") = 2,
        py::arg("hr_delta") = 5, py::arg("heartbeat_ms") = 60'000);
  m.def("encode_features", &features, py::arg("hr"), py::arg("spo2"), py::arg("mobility") = "resting",
        py::arg("category") = py::none());
  m.def(
      "predict", [](const std::vector<double>& w, const std::vector<double>& x) { return risk::predict(model_of(w, 0), x); },
      py::arg("weights"), py::arg("x"));
  m.def(
      "nll",
      [](const std::vector<double>& w, const std::vector<std::vector<double>>& X, const std::vector<int>& y,
         double l2) { return risk::nll(model_of(w, l2), dataset(X, y)); },
      py::arg("weights"), py::arg("X"), py::arg("y"), py::arg("l2") = 0.0);
  m.def(
      "gradient",
      [](const std::vector<double>& w, const std::vector<std::vector<double>>& X, const std::vector<int>& y,
         double l2) { return risk::gradient(model_of(w, l2), dataset(X, y)); },
      py::arg("weights"), py::arg("X"), py::arg("y"), py::arg("l2") = 0.0);
  m.def("train", &train, py::arg("X"), py::arg("y"), py::arg("l2") = 1e-4, py::arg("step0") = 1.0,
        py::arg("max_iters") = 5000, py::arg("tol") = 1e-6);
  m.attr("FEATURE_DIM") = risk::kFeatureDim;

  py::class_<PyServer>(m, "Server")
      .def(py::init<const std::string&, std::optional<std::vector<double>>, const std::string&>(),
           py::arg("cell_csv"), py::arg("weights") = py::none(), py::arg("state_dir") = "")
      .def("ingest", &PyServer::ingest, py::arg("msg_json"))
      .def("timeline", &PyServer::timeline, py::arg("patient_id"))
      .def("alerts", &PyServer::alerts)
      .def("persist", &PyServer::persist);
}
