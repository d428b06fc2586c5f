// umhmse: operator entry point for the monitoring pipeline.
//
//   umhmse simulate --scenario s.json --seed 1 --out trace.ndjson
//   umhmse serve    --cell-db cells.csv --state-dir state --token T
//   umhmse gateway  --config gw.json --scenario s.json
//   umhmse alerts   --server-url http://127.0.0.1:8080 --token T
//   umhmse label / train for the risk model

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "umhmse/gateway.hpp"
#include "umhmse/http.hpp"
#include "umhmse/labeling.hpp"
#include "umhmse/server.hpp"
#include "umhmse/simulator.hpp"

namespace fs = std::filesystem;
using namespace umhmse;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

/// Output paths must land in an existing directory.
const CLI::Validator kWritablePath(
    [](const std::string& p) -> std::string {
      auto parent = fs::path(p).parent_path();
      if (parent.empty() || fs::is_directory(parent)) return {};
      return "directory does not exist: " + parent.string();
    },
    "PATH");

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, out;
  std::uint64_t seed = 0;
};

int run_simulate(const SimulateArgs& a) {
  auto trace = sim::simulate(sim::load_scenario(a.scenario), a.seed);
  auto out = open_out(a.out);
  sim::write_trace(out, trace);
  if (!out.flush()) throw std::runtime_error("write failed: " + a.out);
  std::cout << "wrote " << trace.elements.size() << " elements to " << a.out << '\n';
  return 0;
}

// --- label ------------------------------------------------------------------

struct LabelArgs {
  std::string scenario, out, cell_db;
  std::uint64_t seed = 0;
};

int run_label(const LabelArgs& a) {
  auto scenario = sim::load_scenario(a.scenario);
  std::optional<cell::CellDb> cells;
  if (!a.cell_db.empty()) cells = cell::CellDb::load(a.cell_db);
  auto trace = sim::simulate(scenario, a.seed);
  auto data = labeling::label_trace(scenario, trace, cells ? &*cells : nullptr);
  auto out = open_out(a.out);
  risk::write_dataset(out, data);
  if (!out.flush()) throw std::runtime_error("write failed: " + a.out);
  auto positives = std::count_if(data.begin(), data.end(), [](const risk::Example& e) { return e.y == 1; });
  std::cout << "wrote " << data.size() << " examples (" << positives << " at risk) to " << a.out << '\n';
  return 0;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data, out;
  risk::TrainConfig cfg;
};

int run_train(const TrainArgs& a) {
  std::ifstream in(a.data);
  if (!in) throw std::runtime_error("cannot read " + a.data);
  auto data = risk::read_dataset(in);
  if (data.empty()) throw std::runtime_error(a.data + " has no examples");
  if (data.front().x.size() != risk::kFeatureDim)
    throw std::runtime_error("examples have " + std::to_string(data.front().x.size()) + " features, expected " +
                             std::to_string(risk::kFeatureDim));
  auto result = risk::train(data, a.cfg);
  risk::save_model(result.model, a.out);
  const auto& r = result.report;
  std::cout << "examples     " << data.size() << '\n'
            << "iterations   " << r.iterations << '\n'
            << "stop_reason  " << risk::to_string(r.stop_reason) << '\n'
            << "final_nll    " << std::setprecision(10) << r.final_nll << '\n'
            << "accuracy     " << std::setprecision(6) << risk::accuracy(result.model, data) << '\n'
            << "model        " << a.out << '\n';
  return 0;
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string cell_db, model, state_dir, token;
};

int run_serve(const ServeArgs& a) {
  auto cells = std::make_shared<const cell::CellDb>(cell::CellDb::load(a.cell_db));
  std::optional<risk::RiskModel> model;
  if (!a.model.empty()) model = risk::load_model(a.model);
  fs::create_directories(a.state_dir);

  server::ServerOptions opts;
  opts.state_dir = a.state_dir;
  server::Server core(cells, model, opts);
  http::HttpService svc(core, a.token);
  int port = svc.bind(a.host, a.port);
  if (port < 0) throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(a.port));

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread listener([&] { svc.listen(); });
  std::cout << "listening on http://" << a.host << ':' << port << " (" << cells->size() << " cells, "
            << (model ? "model loaded" : "no model") << ")" << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  svc.stop();
  listener.join();
  core.persist_state();
  std::cout << "stopped; state saved to " << a.state_dir << std::endl;
  return 0;
}

// --- gateway ----------------------------------------------------------------

struct GatewayArgs {
  std::string config, scenario, trace, server_url, token;
  std::uint64_t seed = 0;
  bool wall_clock = false;
  bool test_clock = false;  // the default; accepted for explicitness
};

int run_gateway_cmd(const GatewayArgs& a) {
  auto cfg = gateway::load_gateway_config(a.config);
  if (!a.server_url.empty()) cfg.server_url = a.server_url;
  if (!a.token.empty()) cfg.auth_token = a.token;
  if (cfg.server_url.empty()) throw std::runtime_error("no server URL: set server_url in the config or --server-url");

  sim::ObservationTrace trace;
  if (!a.scenario.empty()) {
    trace = sim::simulate(sim::load_scenario(a.scenario), a.seed);
  } else {
    std::ifstream in(a.trace);
    if (!in) throw std::runtime_error("cannot read " + a.trace);
    trace = sim::read_trace(in);
  }
  if (trace.patient_id != cfg.patient_id)
    std::cerr << "note: trace patient '" << trace.patient_id << "' is sent as configured patient '" << cfg.patient_id
              << "'\n";

  http::HttpUplink uplink(cfg.server_url, cfg.auth_token);
  std::unique_ptr<Clock> clock;
  if (a.wall_clock) clock = std::make_unique<WallClock>();
  else clock = std::make_unique<TestClock>();

  auto report = gateway::run_gateway(gateway::trace_source(trace, cfg.mobility), uplink, cfg, *clock);
  Json j{{"observed", report.observed}, {"sent", report.sent},           {"suppressed", report.suppressed},
         {"buffered", report.buffered}, {"dropped", report.dropped},     {"delivered", report.delivered},
         {"rejected", report.rejected}, {"pending", report.pending}};
  std::cout << j.dump() << '\n';
  if (report.pending > 0) throw std::runtime_error(std::to_string(report.pending) + " messages never delivered to " +
                                                    cfg.server_url);
  return 0;
}

// --- alerts -----------------------------------------------------------------

struct AlertsArgs {
  std::string server_url, token, patient, status;
  bool lines = false;
};

std::string place_name(const Json& place) {
  return place.is_null() ? "unknown" : place["place_id"].get<std::string>();
}

int run_alerts(const AlertsArgs& a) {
  http::ApiClient api(a.server_url, a.token);
  std::string path = "/v1/alerts";
  std::string sep = "?";
  if (!a.patient.empty()) {
    path += sep + "patient=" + http::url_encode(a.patient);
    sep = "&";
  }
  if (!a.status.empty()) path += sep + "status=" + http::url_encode(a.status);
  auto r = api.get(path);
  if (r.status == 0) throw std::runtime_error("cannot reach " + a.server_url + ": " + r.error);
  if (r.status != 200) {
    std::string msg = r.body;
    try {
      msg = Json::parse(r.body).value("message", r.body);
    } catch (const Json::exception&) {
    }
    throw std::runtime_error("server answered " + std::to_string(r.status) + ": " + msg);
  }
  auto alerts = Json::parse(r.body);
  if (a.lines) {
    for (const auto& al : alerts) std::cout << al.dump() << '\n';
    return 0;
  }
  std::cout << std::left << std::setw(20) << "ALERT" << std::setw(12) << "PATIENT" << std::setw(17) << "KIND"
            << std::setw(14) << "STATUS" << std::setw(14) << "RAISED_AT" << "PLACE" << '\n';
  for (const auto& al : alerts) {
    std::cout << std::setw(20) << al["alert_id"].get<std::string>() << std::setw(12)
              << al["patient_id"].get<std::string>() << std::setw(17) << al["kind"].get<std::string>()
              << std::setw(14) << al["status"].get<std::string>() << std::setw(14) << al["raised_at"].get<TimestampMs>()
              << place_name(al["place"]) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Elderly telemetry pipeline: simulator, gateway, server and risk model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "umhmse 0.1.0");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Write the observation trace of a scenario");
  simulate->add_option("--scenario", sim_args.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim_args.seed, "Noise seed");
  simulate->add_option("--out", sim_args.out, "Trace file to write")->required()->check(kWritablePath);

  LabelArgs label_args;
  auto* label = app.add_subcommand("label", "Write a labelled training file from a scenario");
  label->add_option("--scenario", label_args.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  label->add_option("--seed", label_args.seed, "Noise seed");
  label->add_option("--cell-db", label_args.cell_db, "Cell CSV used for the place features")
      ->check(CLI::ExistingFile);
  label->add_option("--out", label_args.out, "Dataset file to write")->required()->check(kWritablePath);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Fit the logistic-regression risk model");
  train->add_option("--data", train_args.data, "Dataset file (label,x0..x9 per line)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out", train_args.out, "Model file to write")->required()->check(kWritablePath);
  train->add_option("--l2", train_args.cfg.l2, "L2 penalty on non-bias weights")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train->add_option("--step0", train_args.cfg.step0, "Initial step size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--max-iters", train_args.cfg.max_iters, "Iteration limit")->capture_default_str();
  train->add_option("--tol", train_args.cfg.tol, "Stop when the gradient max-norm drops below this")
      ->capture_default_str();

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the central server");
  serve->add_option("--host", serve_args.host, "Address to bind")->capture_default_str();
  serve->add_option("--port", serve_args.port, "Port to bind (0 picks one)")
      ->capture_default_str()
      ->check(CLI::Range(0, 65535));
  serve->add_option("--cell-db", serve_args.cell_db, "Cell CSV")->required()->check(CLI::ExistingFile);
  serve->add_option("--model", serve_args.model, "Risk model file")->check(CLI::ExistingFile);
  serve->add_option("--state-dir", serve_args.state_dir, "Durable state directory")
      ->required()
      ->check(kWritablePath);
  serve->add_option("--token", serve_args.token, "Bearer token clients must present")
      ->required()
      ->envname("UMHMSE_TOKEN");

  GatewayArgs gw_args;
  auto* gw = app.add_subcommand("gateway", "Run one patient's gateway against a server");
  gw->add_option("--config", gw_args.config, "Gateway config JSON")->required()->check(CLI::ExistingFile);
  auto* scen = gw->add_option("--scenario", gw_args.scenario, "Scenario to simulate")->check(CLI::ExistingFile);
  auto* tr = gw->add_option("--trace", gw_args.trace, "Recorded trace to replay")->check(CLI::ExistingFile);
  scen->excludes(tr);
  gw->add_option("--seed", gw_args.seed, "Noise seed for --scenario");
  gw->add_option("--server-url", gw_args.server_url, "Overrides server_url from the config");
  gw->add_option("--token", gw_args.token, "Overrides auth_token from the config")->envname("UMHMSE_TOKEN");
  auto* wall = gw->add_flag("--wall-clock", gw_args.wall_clock, "Pace samples in real time");
  gw->add_flag("--test-clock", gw_args.test_clock, "Run instantly (the default)")->excludes(wall);

  AlertsArgs alerts_args;
  auto* alerts = app.add_subcommand("alerts", "Print the server's alerts, newest first");
  alerts->add_option("--server-url", alerts_args.server_url, "Server base URL")->required();
  alerts->add_option("--token", alerts_args.token, "Bearer token")->required()->envname("UMHMSE_TOKEN");
  alerts->add_option("--patient", alerts_args.patient, "Only this patient");
  alerts->add_option("--status", alerts_args.status, "open, acknowledged or cleared")
      ->check(CLI::IsMember({"open", "acknowledged", "cleared"}));
  alerts->add_flag("--lines", alerts_args.lines, "One JSON alert per line instead of a table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "umhmse: " << e.what() << '\n';
    return 2;
  }
  if (gw->parsed() && gw_args.scenario.empty() && gw_args.trace.empty()) {
    std::cerr << "umhmse: gateway needs --scenario or --trace\n";
    return 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim_args);
    if (label->parsed()) return run_label(label_args);
    if (train->parsed()) return run_train(train_args);
    if (serve->parsed()) return run_serve(serve_args);
    if (gw->parsed()) return run_gateway_cmd(gw_args);
    if (alerts->parsed()) return run_alerts(alerts_args);
  } catch (const std::exception& e) {
    std::string what = e.what();
    std::replace(what.begin(), what.end(), '\n', ' ');
    std::cerr << "umhmse: " << what << '\n';
    return 1;
  }
  return 1;
}
