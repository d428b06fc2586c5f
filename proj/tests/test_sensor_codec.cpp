#include <random>

#include "doctest.h"
#include "support/support.hpp"
#include "umhmse/sensor_codec.hpp"

using namespace umhmse::codec;

namespace {

SensorFrame frame(std::optional<int> hr, std::optional<int> spo2, FrameFlags flags, std::uint16_t seq) {
  SensorFrame f;
  f.hr = hr;
  f.spo2 = spo2;
  f.flags = flags;
  f.seq = seq;
  return f;
}

DecodeErrorKind decode_error(const FrameBytes& b) {
  try {
    decode_frame(b);
  } catch (const DecodeError& e) {
    return e.kind();
  }
  FAIL("expected a decode error");
  return DecodeErrorKind::BadRange;
}

}  // namespace

TEST_CASE("checksum is the byte sum mod 256") {
  std::array<std::uint8_t, 7> zeros{};
  CHECK(checksum(zeros) == 0x00);
  std::array<std::uint8_t, 7> sync{0xA5, 0, 0, 0, 0, 0, 0};
  CHECK(checksum(sync) == 0xA5);
  // 165 + 1 + 72 + 97 + 0 + 1 + 0 = 336 = 256 + 80
  std::array<std::uint8_t, 7> first{0xA5, 0x01, 0x48, 0x61, 0x00, 0x01, 0x00};
  CHECK(testsupport::hand_checksum({first.begin(), first.end()}) == 0x50);
  CHECK(checksum(first) == 0x50);
}

TEST_CASE("encode matches the documented layout") {
  auto b = encode_frame(frame(72, 97, {.sensor_ok = true}, 1));
  CHECK(b == FrameBytes{0xA5, 0x01, 0x48, 0x61, 0x00, 0x01, 0x00, 0x50});

  auto m = encode_frame(frame(std::nullopt, std::nullopt, {.finger_out = true}, 0));
  CHECK(m[0] == 0xA5);
  CHECK(m[1] == 0x04);
  CHECK(m[2] == 0xFF);
  CHECK(m[3] == 0x7F);
  CHECK(m[4] == 0x00);
  CHECK(m[5] == 0x00);
  CHECK(m[6] == 0x00);
  CHECK(m[7] == testsupport::hand_checksum({0xA5, 0x04, 0xFF, 0x7F, 0, 0, 0}));

  auto big_seq = encode_frame(frame(60, 90, {}, 0xBEEF));
  CHECK(big_seq[4] == 0xBE);
  CHECK(big_seq[5] == 0xEF);
}

TEST_CASE("encode rejects frames violating invariants") {
  CHECK_THROWS_AS(encode_frame(frame(251, 97, {}, 0)), std::invalid_argument);
  CHECK_THROWS_AS(encode_frame(frame(70, 101, {}, 0)), std::invalid_argument);
  CHECK_THROWS_AS(encode_frame(frame(-1, 97, {}, 0)), std::invalid_argument);
  CHECK_THROWS_AS(encode_frame(frame(70, std::nullopt, {.finger_out = true}, 0)), std::invalid_argument);
}

TEST_CASE("decode examples") {
  auto f = decode_frame(FrameBytes{0xA5, 0x01, 0x48, 0x61, 0x00, 0x01, 0x00, 0x50});
  CHECK(f == frame(72, 97, {.sensor_ok = true}, 1));

  CHECK(decode_error({0x00, 0x01, 0x48, 0x61, 0x00, 0x01, 0x00, 0x50}) == DecodeErrorKind::BadSync);
  CHECK(decode_error({0xA5, 0x01, 0x48, 0x61, 0x00, 0x01, 0x00, 0x51}) == DecodeErrorKind::BadChecksum);
}

TEST_CASE("decode range checks fire with a correct checksum") {
  auto with_sum = [](FrameBytes b) {
    b[7] = checksum(std::span<const std::uint8_t, 7>(b.data(), 7));
    return b;
  };
  CHECK(decode_error(with_sum({0xA5, 0x01, 251, 97, 0, 1, 0, 0})) == DecodeErrorKind::BadRange);
  CHECK(decode_error(with_sum({0xA5, 0x01, 72, 101, 0, 1, 0, 0})) == DecodeErrorKind::BadRange);
  CHECK(decode_error(with_sum({0xA5, 0x01, 72, 128, 0, 1, 0, 0})) == DecodeErrorKind::BadRange);
  CHECK(decode_error(with_sum({0xA5, 0x08, 72, 97, 0, 1, 0, 0})) == DecodeErrorKind::BadRange);
  CHECK(decode_error(with_sum({0xA5, 0x01, 72, 97, 0, 1, 1, 0})) == DecodeErrorKind::BadRange);
  CHECK(decode_error(with_sum({0xA5, 0x04, 72, 0x7F, 0, 1, 0, 0})) == DecodeErrorKind::BadRange);
  // The MISSING codes themselves are legal.
  CHECK_NOTHROW(decode_frame(with_sum({0xA5, 0x00, 0xFF, 0x7F, 0, 1, 0, 0})));
}

TEST_CASE("round trip: every flag combination at boundary vitals") {
  const std::vector<std::optional<int>> hrs{std::nullopt, 0, 1, 249, 250};
  const std::vector<std::optional<int>> spo2s{std::nullopt, 0, 1, 99, 100};
  const std::vector<std::uint16_t> seqs{0, 1, 0x00FF, 0xFF00, 0xFFFF};
  int checked = 0;
  for (int bits = 0; bits < 8; ++bits) {
    auto flags = FrameFlags::from_bits(static_cast<std::uint8_t>(bits));
    for (auto hr : hrs)
      for (auto spo2 : spo2s)
        for (auto seq : seqs) {
          auto f = frame(hr, spo2, flags, seq);
          if (!is_valid(f)) continue;
          CHECK(decode_frame(encode_frame(f)) == f);
          ++checked;
        }
  }
  CHECK(checked > 500);
}

TEST_CASE("round trip: randomized frames") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 2000; ++i) {
    SensorFrame f;
    f.flags = FrameFlags::from_bits(static_cast<std::uint8_t>(rng() % 8));
    if (!f.flags.finger_out) {
      if (rng() % 10) f.hr = static_cast<int>(rng() % 251);
      if (rng() % 10) f.spo2 = static_cast<int>(rng() % 101);
    }
    f.seq = static_cast<std::uint16_t>(rng());
    REQUIRE(decode_frame(encode_frame(f)) == f);
  }
}

TEST_CASE("every single-byte corruption is rejected") {
  const auto good = encode_frame(frame(72, 97, {.sensor_ok = true}, 1));
  for (std::size_t pos = 0; pos < kFrameSize; ++pos) {
    for (int v = 0; v < 256; ++v) {
      if (v == good[pos]) continue;
      auto bad = good;
      bad[pos] = static_cast<std::uint8_t>(v);
      CHECK_THROWS_AS(decode_frame(bad), DecodeError);
    }
  }
}

TEST_CASE("stream reader resynchronizes on the next sync byte") {
  auto a = encode_frame(frame(70, 98, {.sensor_ok = true}, 10));
  auto b = encode_frame(frame(71, 97, {.sensor_ok = true}, 11));
  auto c = encode_frame(frame(std::nullopt, std::nullopt, {.finger_out = true}, 12));

  std::vector<std::uint8_t> stream{0x13, 0x37};  // leading noise
  stream.insert(stream.end(), a.begin(), a.end());
  auto broken = b;
  broken[3] ^= 0x10;  // corrupted in flight
  stream.insert(stream.end(), broken.begin(), broken.end());
  stream.push_back(0xA5);  // stray sync byte
  stream.insert(stream.end(), c.begin(), c.end());

  FrameReader reader;
  // Feed in awkward chunk sizes.
  for (std::size_t i = 0; i < stream.size(); i += 3)
    reader.feed(std::span<const std::uint8_t>(stream.data() + i, std::min<std::size_t>(3, stream.size() - i)));
  auto frames = reader.take();
  REQUIRE(frames.size() == 2);
  CHECK(frames[0].seq == 10);
  CHECK(frames[1].seq == 12);
  CHECK(reader.rejected() >= 1);
}

TEST_CASE("hex helpers") {
  std::vector<std::uint8_t> bytes{0xA5, 0x01, 0xFF};
  CHECK(to_hex(bytes) == "A501FF");
  CHECK(from_hex("a501ff") == bytes);
  CHECK_THROWS_AS(from_hex("A5F"), std::invalid_argument);
  CHECK_THROWS_AS(from_hex("ZZ"), std::invalid_argument);
}
