#pragma once

// Test-only helpers and independent oracles. Nothing here calls into the code
// path it is used to check.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "umhmse/gateway.hpp"
#include "umhmse/risk_model.hpp"

namespace testsupport {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("umhmse-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Sync + checksum computed the long way, byte by byte.
inline std::uint8_t hand_checksum(const std::vector<std::uint8_t>& prefix) {
  unsigned s = 0;
  for (auto b : prefix) s += b;
  return static_cast<std::uint8_t>(s % 256);
}

/// Brute-force replay of the transmit clauses over plain integer tuples:
/// returns for every tick whether it is transmitted. Written independently of
/// gateway::should_transmit.
struct Tick {
  std::int64_t t_ms;
  std::optional<int> hr, spo2;
  int mobility;  // any id
  int cell;      // any id
};

inline std::vector<bool> replay_clauses(const std::vector<Tick>& ticks, int spo2_delta, int hr_delta,
                                        std::int64_t heartbeat_ms) {
  std::vector<bool> sent(ticks.size(), false);
  std::optional<Tick> last;
  for (std::size_t i = 0; i < ticks.size(); ++i) {
    const auto& k = ticks[i];
    bool fire = false;
    if (!last) {
      fire = true;
    } else {
      auto differs = [](std::optional<int> a, std::optional<int> b, int d) {
        if (a.has_value() != b.has_value()) return true;
        return a && std::abs(*a - *b) >= d;
      };
      fire = differs(k.spo2, last->spo2, spo2_delta) || differs(k.hr, last->hr, hr_delta) ||
             k.mobility != last->mobility || k.cell != last->cell || k.t_ms - last->t_ms >= heartbeat_ms;
    }
    if (fire) {
      sent[i] = true;
      last = k;
    }
  }
  return sent;
}

/// Central finite differences of nll; independent of risk::gradient.
inline std::vector<double> finite_difference_gradient(const umhmse::risk::RiskModel& model,
                                                      const umhmse::risk::LabeledDataset& data, double h) {
  std::vector<double> g(model.weights.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    auto plus = model, minus = model;
    plus.weights[j] += h;
    minus.weights[j] -= h;
    g[j] = (umhmse::risk::nll(plus, data) - umhmse::risk::nll(minus, data)) / (2 * h);
  }
  return g;
}

/// Max over j of |a_j - b_j| / max(|a_j|, |b_j|); components that are both
/// exactly zero count as agreeing.
inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double scale = std::max(std::abs(a[j]), std::abs(b[j]));
    if (scale == 0) continue;
    worst = std::max(worst, std::abs(a[j] - b[j]) / scale);
  }
  return worst;
}

/// n examples in `dim` dimensions (x0 = 1), labelled by a random hyperplane
/// and kept only if at least `margin` away from it.
inline umhmse::risk::LabeledDataset separable_dataset(std::size_t n, std::size_t dim, std::uint64_t seed,
                                                      double margin = 0.25) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> w(dim);
  for (auto& v : w) v = gauss(rng);
  w[0] *= 0.2;
  umhmse::risk::LabeledDataset out;
  while (out.size() < n) {
    umhmse::risk::Example ex;
    ex.x.resize(dim);
    ex.x[0] = 1.0;
    for (std::size_t j = 1; j < dim; ++j) ex.x[j] = gauss(rng);
    double s = 0;
    for (std::size_t j = 0; j < dim; ++j) s += w[j] * ex.x[j];
    if (std::abs(s) < margin) continue;
    ex.y = s > 0 ? 1 : 0;
    out.push_back(std::move(ex));
  }
  return out;
}

/// Records every message; fails while `down` is set.
class RecordingUplink final : public umhmse::gateway::Uplink {
 public:
  umhmse::gateway::Delivery deliver(const umhmse::ObservationMsg& msg) override {
    ++attempts;
    if (down) return umhmse::gateway::Delivery::failed;
    received.push_back(msg);
    return umhmse::gateway::Delivery::accepted;
  }
  bool down = false;
  std::size_t attempts = 0;
  std::vector<umhmse::ObservationMsg> received;
};

}  // namespace testsupport
