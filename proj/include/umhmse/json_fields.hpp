#pragma once

// Strict JSON object reading: every field is checked for type, and fields the
// reader never asked for are rejected. Failures name the offending field.

#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "umhmse/types.hpp"

namespace umhmse {

using Json = nlohmann::json;

class FieldError : public std::invalid_argument {
 public:
  FieldError(std::string field, const std::string& why)
      : std::invalid_argument(field + ": " + why), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class FieldReader {
 public:
  FieldReader(const Json& j, std::string prefix = {});

  bool has(const std::string& key) const;
  const Json& raw(const std::string& key);

  std::string str(const std::string& key);
  std::int64_t integer(const std::string& key);
  double number(const std::string& key);
  bool boolean(const std::string& key);

  /// Absent or null both read as nullopt.
  std::optional<std::int64_t> opt_integer(const std::string& key);
  std::optional<double> opt_number(const std::string& key);
  std::optional<std::string> opt_str(const std::string& key);

  std::string path(const std::string& key) const { return prefix_ + key; }

  /// Throws FieldError for the first field that was never read.
  void finish() const;

 private:
  const Json& require(const std::string& key);

  const Json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

Json cell_to_json(const CellObservation& c);
CellObservation cell_from_json(const Json& j, const std::string& prefix = "cell.");

}  // namespace umhmse
