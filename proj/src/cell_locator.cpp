#include "umhmse/cell_locator.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <vector>

namespace umhmse::cell {

std::string_view to_string(PlaceCategory c) {
  switch (c) {
    case PlaceCategory::home: return "home";
    case PlaceCategory::clinic: return "clinic";
    case PlaceCategory::outdoor: return "outdoor";
    case PlaceCategory::other: return "other";
  }
  return "other";
}

PlaceCategory category_from_string(std::string_view s) {
  if (s == "home") return PlaceCategory::home;
  if (s == "clinic") return PlaceCategory::clinic;
  if (s == "outdoor") return PlaceCategory::outdoor;
  if (s == "other") return PlaceCategory::other;
  throw std::invalid_argument("unknown place category '" + std::string(s) + "'");
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_uint(std::string_view s, T& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

CellDb CellDb::parse(std::istream& in) {
  auto parse_error = [](std::size_t line, const std::string& why) {
    return CellDbError(CellDbErrorKind::ParseError, line, why);
  };

  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw parse_error(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (line != kCellDbHeader) throw parse_error(1, "header must be exactly '" + std::string(kCellDbHeader) + "'");

  CellDb db;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != 8) throw parse_error(lineno, "expected 8 fields, got " + std::to_string(f.size()));

    CellObservation key{std::string(f[0]), std::string(f[1]), 0, 0};
    try {
      validate_cell(key);
    } catch (const std::invalid_argument& e) {
      throw parse_error(lineno, std::string("malformed ") + e.what());
    }
    if (!parse_uint(f[2], key.lac)) throw parse_error(lineno, "lac must be an unsigned 16-bit integer");
    if (!parse_uint(f[3], key.ci)) throw parse_error(lineno, "ci must be an unsigned 32-bit integer");

    PlaceRecord rec;
    rec.place_id = std::string(f[4]);
    if (rec.place_id.empty()) throw parse_error(lineno, "place_id must be non-empty");
    if (!parse_double(f[5], rec.lat) || rec.lat < -90 || rec.lat > 90) throw parse_error(lineno, "lat must be in [-90,90]");
    if (!parse_double(f[6], rec.lon) || rec.lon < -180 || rec.lon > 180)
      throw parse_error(lineno, "lon must be in [-180,180]");
    try {
      rec.category = category_from_string(f[7]);
    } catch (const std::invalid_argument& e) {
      throw CellDbError(CellDbErrorKind::BadCategory, lineno, e.what());
    }

    if (!db.places_.emplace(std::move(key), std::move(rec)).second)
      throw CellDbError(CellDbErrorKind::DuplicateKey, lineno, "duplicate (mcc,mnc,lac,ci)");
  }
  if (db.places_.empty()) throw parse_error(lineno, "no cell rows");
  return db;
}

CellDb CellDb::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CellDbError(CellDbErrorKind::ParseError, 0, "cannot read " + path);
  return parse(in);
}

Resolution CellDb::resolve(const CellObservation& cell) const {
  auto it = places_.find(cell);
  if (it == places_.end()) return std::nullopt;
  return it->second;
}

}  // namespace umhmse::cell
