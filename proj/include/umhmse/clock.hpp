#pragma once

#include <chrono>
#include <thread>

#include "umhmse/types.hpp"

namespace umhmse {

/// Scenario-relative time source. Trace timestamps are interpreted against it.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now_ms() = 0;
  virtual void sleep_until(TimestampMs t) = 0;
};

/// Jumps straight to the requested time, so whole scenarios run instantly.
class TestClock final : public Clock {
 public:
  explicit TestClock(TimestampMs start = 0) : now_(start) {}
  TimestampMs now_ms() override { return now_; }
  void sleep_until(TimestampMs t) override {
    if (t > now_) now_ = t;
  }

 private:
  TimestampMs now_;
};

/// Real time, with t=0 at construction.
class WallClock final : public Clock {
 public:
  WallClock() : origin_(std::chrono::steady_clock::now()) {}
  TimestampMs now_ms() override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - origin_)
        .count();
  }
  void sleep_until(TimestampMs t) override {
    std::this_thread::sleep_until(origin_ + std::chrono::milliseconds(t));
  }

 private:
  std::chrono::steady_clock::time_point origin_;
};

}  // namespace umhmse
