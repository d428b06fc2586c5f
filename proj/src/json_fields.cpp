#include "umhmse/json_fields.hpp"

#include <cmath>
#include <limits>

namespace umhmse {

FieldReader::FieldReader(const Json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
  if (!j_.is_object()) {
    auto name = prefix_.empty() ? std::string("body") : prefix_.substr(0, prefix_.size() - 1);
    throw FieldError(name, "expected an object");
  }
}

bool FieldReader::has(const std::string& key) const { return j_.contains(key); }

const Json& FieldReader::require(const std::string& key) {
  seen_.insert(key);
  auto it = j_.find(key);
  if (it == j_.end()) throw FieldError(path(key), "missing");
  return *it;
}

const Json& FieldReader::raw(const std::string& key) { return require(key); }

std::string FieldReader::str(const std::string& key) {
  const auto& v = require(key);
  if (!v.is_string()) throw FieldError(path(key), "expected a string");
  return v.get<std::string>();
}

std::int64_t FieldReader::integer(const std::string& key) {
  const auto& v = require(key);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 9.0e15) return static_cast<std::int64_t>(d);
  }
  throw FieldError(path(key), "expected an integer");
}

double FieldReader::number(const std::string& key) {
  const auto& v = require(key);
  if (!v.is_number()) throw FieldError(path(key), "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) throw FieldError(path(key), "not finite");
  return d;
}

bool FieldReader::boolean(const std::string& key) {
  const auto& v = require(key);
  if (!v.is_boolean()) throw FieldError(path(key), "expected a boolean");
  return v.get<bool>();
}

std::optional<std::int64_t> FieldReader::opt_integer(const std::string& key) {
  seen_.insert(key);
  if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
  return integer(key);
}

std::optional<double> FieldReader::opt_number(const std::string& key) {
  seen_.insert(key);
  if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
  return number(key);
}

std::optional<std::string> FieldReader::opt_str(const std::string& key) {
  seen_.insert(key);
  if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
  return str(key);
}

void FieldReader::finish() const {
  for (auto it = j_.begin(); it != j_.end(); ++it)
    if (!seen_.count(it.key())) throw FieldError(path(it.key()), "unknown field");
}

Json cell_to_json(const CellObservation& c) {
  return Json{{"mcc", c.mcc}, {"mnc", c.mnc}, {"lac", c.lac}, {"ci", c.ci}};
}

CellObservation cell_from_json(const Json& j, const std::string& prefix) {
  FieldReader r(j, prefix);
  CellObservation c;
  c.mcc = r.str("mcc");
  c.mnc = r.str("mnc");
  auto lac = r.integer("lac");
  if (lac < 0 || lac > std::numeric_limits<std::uint16_t>::max()) throw FieldError(r.path("lac"), "out of range");
  auto ci = r.integer("ci");
  if (ci < 0 || ci > std::numeric_limits<std::uint32_t>::max()) throw FieldError(r.path("ci"), "out of range");
  c.lac = static_cast<std::uint16_t>(lac);
  c.ci = static_cast<std::uint32_t>(ci);
  r.finish();
  try {
    validate_cell(c);
  } catch (const std::invalid_argument& e) {
    throw FieldError(prefix + e.what(), "malformed code");
  }
  return c;
}

}  // namespace umhmse
