#include "umhmse/risk_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "umhmse/json_fields.hpp"

namespace umhmse::risk {

namespace {

double normalize(const Vital& v, double center, double scale) {
  if (!v) return -kClamp;
  return std::clamp((static_cast<double>(*v) - center) / scale, -kClamp, kClamp);
}

double dot(std::span<const double> w, std::span<const double> x) {
  double s = 0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * x[j];
  return s;
}

void check_dims(const RiskModel& model, const LabeledDataset& data) {
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].x.size() != model.weights.size())
      throw DimensionMismatch("example " + std::to_string(i) + " has dimension " + std::to_string(data[i].x.size()) +
                              ", model has " + std::to_string(model.weights.size()));
}

}  // namespace

FeatureVector encode_features(const VitalsRecord& rec, const cell::Resolution& place) {
  FeatureVector x(kFeatureDim, 0.0);
  x[0] = 1.0;
  x[1] = normalize(rec.spo2, 95.0, 5.0);
  x[2] = normalize(rec.hr, 75.0, 20.0);
  x[3 + static_cast<std::size_t>(rec.mobility)] = 1.0;
  auto cat = place ? place->category : cell::PlaceCategory::other;
  x[6 + static_cast<std::size_t>(cat)] = 1.0;
  return x;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double predict(const RiskModel& model, std::span<const double> x) {
  if (x.size() != model.weights.size())
    throw DimensionMismatch("feature dimension " + std::to_string(x.size()) + " != model dimension " +
                            std::to_string(model.weights.size()));
  constexpr double kLo = std::numeric_limits<double>::denorm_min();
  const double kHi = std::nextafter(1.0, 0.0);
  return std::clamp(sigmoid(dot(model.weights, x)), kLo, kHi);
}

double nll(const RiskModel& model, const LabeledDataset& data) {
  check_dims(model, data);
  // -[y ln p + (1-y) ln(1-p)] = softplus(-z) if y = 1, softplus(z) if y = 0
  double total = 0;
  for (const auto& ex : data) {
    double z = dot(model.weights, ex.x);
    total += ex.y ? softplus(-z) : softplus(z);
  }
  double penalty = 0;
  for (std::size_t j = 1; j < model.weights.size(); ++j) penalty += model.weights[j] * model.weights[j];
  return total + 0.5 * model.l2 * penalty;
}

std::vector<double> gradient(const RiskModel& model, const LabeledDataset& data) {
  check_dims(model, data);
  std::vector<double> g(model.weights.size(), 0.0);
  for (const auto& ex : data) {
    double r = sigmoid(dot(model.weights, ex.x)) - ex.y;
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += r * ex.x[j];
  }
  for (std::size_t j = 1; j < g.size(); ++j) g[j] += model.l2 * model.weights[j];
  return g;
}

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::max_iters: return "max_iters";
    case StopReason::step_underflow: return "step_underflow";
  }
  return "max_iters";
}

TrainResult train(const LabeledDataset& data, const TrainConfig& cfg) {
  if (data.empty()) throw DegenerateData("training set is empty");
  const auto dim = data.front().x.size();
  if (dim == 0) throw DimensionMismatch("examples have dimension 0");
  for (const auto& ex : data) {
    if (ex.x.size() != dim) throw DimensionMismatch("examples have mixed dimensions");
    if (ex.y != 0 && ex.y != 1) throw std::invalid_argument("labels must be 0 or 1");
  }
  if (!(cfg.l2 >= 0)) throw std::invalid_argument("l2 must be >= 0");
  if (!(cfg.step0 > 0)) throw std::invalid_argument("step0 must be > 0");
  const bool all_same = std::all_of(data.begin(), data.end(), [&](const Example& e) { return e.y == data.front().y; });
  if (all_same && cfg.l2 == 0)
    throw DegenerateData("all labels are identical and l2 = 0: the optimum is unbounded; set l2 > 0");

  constexpr int kMaxHalvings = 50;
  TrainResult out;
  out.model.weights.assign(dim, 0.0);
  out.model.l2 = cfg.l2;
  out.model.feature_spec_version = kFeatureSpecVersion;
  auto& rep = out.report;

  double current = nll(out.model, data);
  rep.nll_history.push_back(current);
  RiskModel candidate = out.model;

  rep.stop_reason = StopReason::max_iters;
  while (rep.iterations < cfg.max_iters) {
    auto g = gradient(out.model, data);
    double gmax = 0;
    for (double v : g) gmax = std::max(gmax, std::abs(v));
    if (gmax < cfg.tol) {
      rep.stop_reason = StopReason::converged;
      break;
    }
    double step = cfg.step0;
    bool accepted = false;
    for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
      for (std::size_t j = 0; j < dim; ++j) candidate.weights[j] = out.model.weights[j] - step * g[j];
      double next = nll(candidate, data);
      if (next < current) {
        out.model.weights = candidate.weights;
        current = next;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rep.stop_reason = StopReason::step_underflow;
      break;
    }
    ++rep.iterations;
    rep.nll_history.push_back(current);
  }
  rep.final_nll = current;
  return out;
}

double accuracy(const RiskModel& model, const LabeledDataset& data) {
  if (data.empty()) return 0;
  std::size_t hits = 0;
  for (const auto& ex : data) hits += ((predict(model, ex.x) >= 0.5) == (ex.y == 1));
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// --- files ----------------------------------------------------------------

std::string dump_model(const RiskModel& model) {
  Json j{{"feature_spec_version", model.feature_spec_version}, {"l2", model.l2}, {"weights", model.weights}};
  return j.dump(2);
}

RiskModel parse_model(const std::string& text) {
  try {
    auto j = Json::parse(text);
    FieldReader r(j);
    RiskModel m;
    m.feature_spec_version = static_cast<int>(r.integer("feature_spec_version"));
    if (m.feature_spec_version != kFeatureSpecVersion)
      throw std::invalid_argument("unsupported feature_spec_version " + std::to_string(m.feature_spec_version));
    m.l2 = r.number("l2");
    if (m.l2 < 0) throw FieldError("l2", "must be >= 0");
    const auto& w = r.raw("weights");
    if (!w.is_array()) throw FieldError("weights", "expected an array");
    for (const auto& v : w) {
      if (!v.is_number() || !std::isfinite(v.get<double>())) throw FieldError("weights", "must be finite numbers");
      m.weights.push_back(v.get<double>());
    }
    if (m.weights.size() != kFeatureDim)
      throw DimensionMismatch("model has " + std::to_string(m.weights.size()) + " weights, expected " +
                              std::to_string(kFeatureDim));
    r.finish();
    return m;
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("model file is not valid JSON: ") + e.what());
  }
}

void save_model(const RiskModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << dump_model(model) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

RiskModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

void write_dataset(std::ostream& os, const LabeledDataset& data) {
  char buf[64];
  for (const auto& ex : data) {
    os << ex.y;
    for (double v : ex.x) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      os << ',' << std::string_view(buf, static_cast<std::size_t>(p - buf));
    }
    os << '\n';
  }
}

LabeledDataset read_dataset(std::istream& is) {
  LabeledDataset data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument("dataset line " + std::to_string(lineno) + ": " + why);
    };
    Example ex;
    std::size_t start = 0;
    bool first = true;
    while (start <= line.size()) {
      auto comma = line.find(',', start);
      auto end = comma == std::string::npos ? line.size() : comma;
      std::string_view field(line.data() + start, end - start);
      double v = 0;
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc{} || p != field.data() + field.size() || !std::isfinite(v))
        fail("bad number '" + std::string(field) + "'");
      if (first) {
        if (v != 0 && v != 1) fail("label must be 0 or 1");
        ex.y = static_cast<int>(v);
        first = false;
      } else {
        ex.x.push_back(v);
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (ex.x.empty()) fail("no features");
    if (!data.empty() && ex.x.size() != data.front().x.size()) fail("dimension differs from first example");
    data.push_back(std::move(ex));
  }
  return data;
}

}  // namespace umhmse::risk
