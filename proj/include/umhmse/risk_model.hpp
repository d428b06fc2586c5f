#pragma once

// Logistic-regression risk scoring.
//
// Feature layout (feature_spec_version 1), D = 10:
//   [0]    bias, always 1
//   [1]    (spo2 - 95) / 5, clamped to [-5, 5]; MISSING -> -5
//   [2]    (hr - 75) / 20,  clamped to [-5, 5]; MISSING -> -5
//   [3..5] mobility one-hot: resting, active, fall
//   [6..9] place one-hot: home, clinic, outdoor, other (unknown -> other)
//
// The math routines (predict, nll, gradient, train) work on any dimension so
// they can be checked on small hand-built problems.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "umhmse/cell_locator.hpp"
#include "umhmse/types.hpp"

namespace umhmse::risk {

inline constexpr int kFeatureSpecVersion = 1;
inline constexpr std::size_t kFeatureDim = 10;
inline constexpr double kClamp = 5.0;

using FeatureVector = std::vector<double>;

struct Example {
  FeatureVector x;
  int y = 0;  // 0 or 1
};

using LabeledDataset = std::vector<Example>;

struct RiskModel {
  std::vector<double> weights;
  int feature_spec_version = kFeatureSpecVersion;
  double l2 = 0;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateData : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct VitalsRecord {
  Vital hr;
  Vital spo2;
  MobilityState mobility = MobilityState::resting;
};

FeatureVector encode_features(const VitalsRecord& rec, const cell::Resolution& place);

/// 1 / (1 + e^-z) evaluated without overflow for any finite z.
double sigmoid(double z);
/// log(1 + e^z) evaluated without overflow.
double softplus(double z);

/// sigmoid(w.x), kept strictly inside (0, 1).
double predict(const RiskModel& model, std::span<const double> x);

/// Bernoulli negative log-likelihood plus (l2/2)*sum_{j>=1} w_j^2.
double nll(const RiskModel& model, const LabeledDataset& data);

/// d nll / d w. The bias (j = 0) is not penalized.
std::vector<double> gradient(const RiskModel& model, const LabeledDataset& data);

struct TrainConfig {
  double step0 = 1.0;
  std::size_t max_iters = 5000;
  double tol = 1e-6;
  double l2 = 1e-4;
};

enum class StopReason { converged, max_iters, step_underflow };
std::string_view to_string(StopReason r);

struct TrainReport {
  std::size_t iterations = 0;  // accepted steps
  double final_nll = 0;
  StopReason stop_reason = StopReason::max_iters;
  std::vector<double> nll_history;  // nll at start, then after each accepted step
};

struct TrainResult {
  RiskModel model;
  TrainReport report;
};

/// Gradient descent from zero weights with step halving: every iteration starts
/// from step0 and halves (at most 50 times) until the NLL strictly drops.
TrainResult train(const LabeledDataset& data, const TrainConfig& cfg);

/// Fraction of examples where (predict >= 0.5) matches the label.
double accuracy(const RiskModel& model, const LabeledDataset& data);

// Model files: JSON {"feature_spec_version", "l2", "weights"}.
void save_model(const RiskModel& model, const std::string& path);
RiskModel load_model(const std::string& path);
std::string dump_model(const RiskModel& model);
RiskModel parse_model(const std::string& text);

// Training data: one example per line, "label,x0,...,x{D-1}".
void write_dataset(std::ostream& os, const LabeledDataset& data);
LabeledDataset read_dataset(std::istream& is);

}  // namespace umhmse::risk
