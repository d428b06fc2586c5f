#pragma once

// Cell-ID positioning: an exact (mcc, mnc, lac, ci) -> place table loaded from
// CSV with the header
//
//   mcc,mnc,lac,ci,place_id,lat,lon,category
//
// category is one of home, clinic, outdoor, other.

#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "umhmse/types.hpp"

namespace umhmse::cell {

enum class PlaceCategory { home, clinic, outdoor, other };

std::string_view to_string(PlaceCategory c);
/// Throws std::invalid_argument outside the closed set.
PlaceCategory category_from_string(std::string_view s);

struct PlaceRecord {
  std::string place_id;
  double lat = 0;
  double lon = 0;
  PlaceCategory category = PlaceCategory::other;
  friend bool operator==(const PlaceRecord&, const PlaceRecord&) = default;
};

/// nullopt is "unknown".
using Resolution = std::optional<PlaceRecord>;

enum class CellDbErrorKind { DuplicateKey, ParseError, BadCategory };

class CellDbError : public std::runtime_error {
 public:
  CellDbError(CellDbErrorKind kind, std::size_t line, const std::string& why)
      : std::runtime_error("cell db line " + std::to_string(line) + ": " + why), kind_(kind), line_(line) {}
  CellDbErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  CellDbErrorKind kind_;
  std::size_t line_;
};

/// Immutable after load.
class CellDb {
 public:
  static CellDb load(const std::string& path);
  static CellDb parse(std::istream& in);

  Resolution resolve(const CellObservation& cell) const;
  std::size_t size() const noexcept { return places_.size(); }

 private:
  std::map<CellObservation, PlaceRecord> places_;
};

inline constexpr std::string_view kCellDbHeader = "mcc,mnc,lac,ci,place_id,lat,lon,category";

}  // namespace umhmse::cell
