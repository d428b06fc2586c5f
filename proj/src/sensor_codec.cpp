#include "umhmse/sensor_codec.hpp"

#include <algorithm>
#include <numeric>

namespace umhmse::codec {

std::uint8_t FrameFlags::bits() const {
  return static_cast<std::uint8_t>((sensor_ok ? 0x01 : 0) | (low_perfusion ? 0x02 : 0) |
                                   (finger_out ? 0x04 : 0));
}

FrameFlags FrameFlags::from_bits(std::uint8_t b) {
  return FrameFlags{(b & 0x01) != 0, (b & 0x02) != 0, (b & 0x04) != 0};
}

bool is_valid(const SensorFrame& f) {
  if (f.hr && (*f.hr < 0 || *f.hr > kHrMax)) return false;
  if (f.spo2 && (*f.spo2 < 0 || *f.spo2 > kSpo2Max)) return false;
  if (f.flags.finger_out && (f.hr || f.spo2)) return false;
  return true;
}

std::uint8_t checksum(std::span<const std::uint8_t, kFrameSize - 1> prefix) {
  unsigned sum = std::accumulate(prefix.begin(), prefix.end(), 0u);
  return static_cast<std::uint8_t>(sum & 0xFF);
}

FrameBytes encode_frame(const SensorFrame& frame) {
  if (!is_valid(frame)) throw std::invalid_argument("sensor frame violates its invariants");
  FrameBytes b{};
  b[0] = kSync;
  b[1] = frame.flags.bits();
  b[2] = frame.hr ? static_cast<std::uint8_t>(*frame.hr) : kHrMissing;
  b[3] = frame.spo2 ? static_cast<std::uint8_t>(*frame.spo2) : kSpo2Missing;
  b[4] = static_cast<std::uint8_t>(frame.seq >> 8);
  b[5] = static_cast<std::uint8_t>(frame.seq & 0xFF);
  b[6] = 0;
  b[7] = checksum(std::span<const std::uint8_t, kFrameSize - 1>(b.data(), kFrameSize - 1));
  return b;
}

SensorFrame decode_frame(std::span<const std::uint8_t, kFrameSize> b) {
  if (b[0] != kSync) throw DecodeError(DecodeErrorKind::BadSync, "bad sync byte");
  if (b[7] != checksum(b.first<kFrameSize - 1>()))
    throw DecodeError(DecodeErrorKind::BadChecksum, "checksum mismatch");
  if ((b[1] & ~0x07) != 0) throw DecodeError(DecodeErrorKind::BadRange, "unknown flag bits");
  if (b[6] != 0) throw DecodeError(DecodeErrorKind::BadRange, "reserved byte not zero");
  if (b[2] > kHrMax && b[2] != kHrMissing) throw DecodeError(DecodeErrorKind::BadRange, "hr out of range");
  if (b[3] > kSpo2Max && b[3] != kSpo2Missing)
    throw DecodeError(DecodeErrorKind::BadRange, "spo2 out of range");

  SensorFrame f;
  f.flags = FrameFlags::from_bits(b[1]);
  if (b[2] != kHrMissing) f.hr = b[2];
  if (b[3] != kSpo2Missing) f.spo2 = b[3];
  f.seq = static_cast<std::uint16_t>((b[4] << 8) | b[5]);
  if (f.flags.finger_out && (f.hr || f.spo2))
    throw DecodeError(DecodeErrorKind::BadRange, "finger_out with vitals present");
  return f;
}

void FrameReader::feed(std::span<const std::uint8_t> chunk) {
  pending_.insert(pending_.end(), chunk.begin(), chunk.end());
  std::size_t pos = 0;
  while (true) {
    auto sync = std::find(pending_.begin() + static_cast<std::ptrdiff_t>(pos), pending_.end(), kSync);
    skipped_ += static_cast<std::size_t>(sync - pending_.begin()) - pos;
    pos = static_cast<std::size_t>(sync - pending_.begin());
    if (pending_.size() - pos < kFrameSize) break;
    try {
      out_.push_back(decode_frame(std::span<const std::uint8_t, kFrameSize>(pending_.data() + pos, kFrameSize)));
      pos += kFrameSize;
    } catch (const DecodeError&) {
      ++rejected_;
      ++skipped_;
      ++pos;
    }
  }
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(pos));
}

std::vector<SensorFrame> FrameReader::take() {
  std::vector<SensorFrame> out;
  out.swap(out_);
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto v : bytes) {
    s.push_back(kDigits[v >> 4]);
    s.push_back(kDigits[v & 0x0F]);
  }
  return s;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("non-hex character");
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
  return out;
}

}  // namespace umhmse::codec
