#include "umhmse/types.hpp"

#include <algorithm>
#include <cctype>

namespace umhmse {

namespace {
bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}
}  // namespace

void validate_cell(const CellObservation& cell) {
  if (cell.mcc.size() != 3 || !all_digits(cell.mcc)) throw std::invalid_argument("mcc");
  if (cell.mnc.size() < 2 || cell.mnc.size() > 3 || !all_digits(cell.mnc))
    throw std::invalid_argument("mnc");
}

std::string_view to_string(MobilityState m) {
  switch (m) {
    case MobilityState::resting: return "resting";
    case MobilityState::active: return "active";
    case MobilityState::fall: return "fall";
  }
  return "resting";
}

MobilityState mobility_from_string(std::string_view s) {
  if (s == "resting") return MobilityState::resting;
  if (s == "active") return MobilityState::active;
  if (s == "fall") return MobilityState::fall;
  throw std::invalid_argument("mobility");
}

}  // namespace umhmse
