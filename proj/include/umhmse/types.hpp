#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace umhmse {

/// Simulated or wall time in milliseconds.
using TimestampMs = std::int64_t;

/// A vital sign reading; std::nullopt is the MISSING value.
using Vital = std::optional<int>;

inline constexpr int kHrMax = 250;
inline constexpr int kSpo2Max = 100;

/// GSM serving-cell identity as reported by the phone.
/// MCC and MNC are kept as digit strings: "01" and "001" are different networks.
struct CellObservation {
  std::string mcc;
  std::string mnc;
  std::uint16_t lac = 0;
  std::uint32_t ci = 0;

  friend auto operator<=>(const CellObservation&, const CellObservation&) = default;
};

/// Throws std::invalid_argument naming the offending field.
void validate_cell(const CellObservation& cell);

struct Accel {
  double x = 0, y = 0, z = 0;
  friend bool operator==(const Accel&, const Accel&) = default;
};

struct MotionWindow {
  std::vector<Accel> samples;
  double window_s = 0;
  friend bool operator==(const MotionWindow&, const MotionWindow&) = default;
};

enum class MobilityState { resting, active, fall };

std::string_view to_string(MobilityState m);
MobilityState mobility_from_string(std::string_view s);

}  // namespace umhmse
