#pragma once

// 8-byte pulse-oximeter frame:
//
//   byte 0    0xA5 sync
//   byte 1    flags (bit0 sensor_ok, bit1 low_perfusion, bit2 finger_out)
//   byte 2    hr in bpm, 255 = MISSING
//   byte 3    spo2 in percent, 127 = MISSING
//   byte 4-5  seq, big-endian
//   byte 6    reserved, 0
//   byte 7    sum of bytes 0..6 mod 256

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "umhmse/types.hpp"

namespace umhmse::codec {

inline constexpr std::uint8_t kSync = 0xA5;
inline constexpr std::uint8_t kHrMissing = 255;
inline constexpr std::uint8_t kSpo2Missing = 127;
inline constexpr std::size_t kFrameSize = 8;

using FrameBytes = std::array<std::uint8_t, kFrameSize>;

struct FrameFlags {
  bool sensor_ok = false;
  bool low_perfusion = false;
  bool finger_out = false;

  std::uint8_t bits() const;
  static FrameFlags from_bits(std::uint8_t b);
  friend bool operator==(const FrameFlags&, const FrameFlags&) = default;
};

struct SensorFrame {
  Vital hr;
  Vital spo2;
  FrameFlags flags;
  std::uint16_t seq = 0;

  friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

/// True when hr/spo2 are in range and finger_out implies both MISSING.
bool is_valid(const SensorFrame& f);

enum class DecodeErrorKind { BadSync, BadChecksum, BadRange };

class DecodeError : public std::runtime_error {
 public:
  DecodeError(DecodeErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  DecodeErrorKind kind() const noexcept { return kind_; }

 private:
  DecodeErrorKind kind_;
};

std::uint8_t checksum(std::span<const std::uint8_t, kFrameSize - 1> prefix);

/// Throws std::invalid_argument if the frame violates its invariants.
FrameBytes encode_frame(const SensorFrame& frame);

/// Throws DecodeError. Checks run in order sync, checksum, range.
SensorFrame decode_frame(std::span<const std::uint8_t, kFrameSize> bytes);

/// Incremental stream reader. Feeds arbitrary byte chunks; on any decode error
/// it discards one byte and rescans for the next sync byte.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> chunk);

  /// Decoded frames in arrival order; cleared by take().
  std::vector<SensorFrame> take();

  std::size_t rejected() const noexcept { return rejected_; }
  std::size_t skipped_bytes() const noexcept { return skipped_; }

 private:
  std::vector<std::uint8_t> pending_;
  std::vector<SensorFrame> out_;
  std::size_t rejected_ = 0;
  std::size_t skipped_ = 0;
};

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on odd length or non-hex characters.
std::vector<std::uint8_t> from_hex(std::string_view hex);

}  // namespace umhmse::codec
