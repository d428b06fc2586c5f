#include <random>
#include <sstream>

#include "doctest.h"
#include "support/support.hpp"
#include "umhmse/cell_locator.hpp"

using namespace umhmse;
using namespace umhmse::cell;

namespace {

CellDb parse(const std::string& text) {
  std::istringstream in(text);
  return CellDb::parse(in);
}

CellDbError parse_error(const std::string& text) {
  try {
    parse(text);
  } catch (const CellDbError& e) {
    return e;
  }
  FAIL("expected CellDbError");
  return CellDbError(CellDbErrorKind::ParseError, 0, "");
}

const std::string kHeader = "mcc,mnc,lac,ci,place_id,lat,lon,category\n";

}  // namespace

TEST_CASE("single row") {
  auto db = parse(kHeader + "603,01,1201,33001,home-oran,35.6971,-0.6308,home\n");
  CHECK(db.size() == 1);
  auto r = db.resolve({"603", "01", 1201, 33001});
  REQUIRE(r);
  CHECK(r->place_id == "home-oran");
  CHECK(r->lat == 35.6971);
  CHECK(r->lon == -0.6308);
  CHECK(r->category == PlaceCategory::home);
  CHECK(db.resolve({"603", "01", 1201, 33002}) == std::nullopt);
  CHECK(db.resolve({"603", "001", 1201, 33001}) == std::nullopt);
  CHECK(db.resolve({"603", "01", 1201, 33001}) == db.resolve({"603", "01", 1201, 33001}));
}

TEST_CASE("duplicate key") {
  auto e = parse_error(kHeader + "603,01,1,2,a,0,0,home\n603,01,1,3,b,0,0,home\n603,01,1,2,c,0,0,clinic\n");
  CHECK(e.kind() == CellDbErrorKind::DuplicateKey);
  CHECK(e.line() == 4);
}

TEST_CASE("category outside the closed set") {
  auto e = parse_error(kHeader + "603,01,1,2,a,0,0,hospital\n");
  CHECK(e.kind() == CellDbErrorKind::BadCategory);
  CHECK(e.line() == 2);
}

TEST_CASE("parse errors carry the line number") {
  struct Case {
    std::string body;
    std::size_t line;
  };
  for (const auto& c : std::vector<Case>{
           {"603,01,1,2,a,0,0\n", 2},
           {"603,01,1,2,a,0,0,home\n6O3,01,1,2,a,0,0,home\n", 3},
           {"603,1,1,2,a,0,0,home\n", 2},
           {"603,01,70000,2,a,0,0,home\n", 2},
           {"603,01,1,-2,a,0,0,home\n", 2},
           {"603,01,1,2,,0,0,home\n", 2},
           {"603,01,1,2,a,91,0,home\n", 2},
           {"603,01,1,2,a,0,-180.5,home\n", 2},
           {"603,01,1,2,a,north,0,home\n", 2},
       }) {
    auto e = parse_error(kHeader + c.body);
    CAPTURE(c.body);
    CHECK(e.kind() == CellDbErrorKind::ParseError);
    CHECK(e.line() == c.line);
  }
  CHECK(parse_error("mcc,mnc,lac,ci,place,lat,lon,category\n").line() == 1);
  CHECK(parse_error("").kind() == CellDbErrorKind::ParseError);
  CHECK(parse_error(kHeader).kind() == CellDbErrorKind::ParseError);
}

TEST_CASE("CRLF, BOM and blank lines are tolerated") {
  auto db = parse("\xEF\xBB\xBF" + std::string("mcc,mnc,lac,ci,place_id,lat,lon,category\r\n") +
                  "603,01,1,2,a,1.5,2.5,clinic\r\n\r\n603,01,1,3,b,0,0,outdoor\r\n");
  CHECK(db.size() == 2);
  CHECK(db.resolve({"603", "01", 1, 2})->category == PlaceCategory::clinic);
  CHECK(db.resolve({"603", "01", 1, 3})->place_id == "b");
}

TEST_CASE("randomized file: resolve finds exactly the rows written") {
  std::mt19937_64 rng(99);
  const char* cats[] = {"home", "clinic", "outdoor", "other"};
  for (int round = 0; round < 10; ++round) {
    std::map<CellObservation, PlaceRecord> truth;
    std::ostringstream file;
    file << kHeader;
    while (truth.size() < 300) {
      CellObservation c{std::to_string(200 + rng() % 800), rng() % 2 ? std::to_string(10 + rng() % 90)
                                                                      : "0" + std::to_string(10 + rng() % 90),
                        static_cast<std::uint16_t>(rng() % 4), static_cast<std::uint32_t>(rng() % 8)};
      if (truth.count(c)) continue;
      PlaceRecord r{"place-" + std::to_string(truth.size()),
                    static_cast<double>(static_cast<int>(rng() % 18000) - 9000) / 100,
                    static_cast<double>(static_cast<int>(rng() % 36000) - 18000) / 100, PlaceCategory::other};
      int cat = static_cast<int>(rng() % 4);
      r.category = category_from_string(cats[cat]);
      file << c.mcc << ',' << c.mnc << ',' << c.lac << ',' << c.ci << ',' << r.place_id << ',' << r.lat << ','
           << r.lon << ',' << cats[cat] << '\n';
      truth.emplace(c, r);
    }
    auto db = parse(file.str());
    CHECK(db.size() == truth.size());
    for (const auto& [c, r] : truth) CHECK(db.resolve(c) == r);
    // Probes that were not written stay unknown.
    for (int k = 0; k < 300; ++k) {
      CellObservation c{std::to_string(200 + rng() % 800), std::to_string(10 + rng() % 90),
                        static_cast<std::uint16_t>(rng() % 4), static_cast<std::uint32_t>(rng() % 8)};
      CHECK(db.resolve(c).has_value() == (truth.count(c) == 1));
    }
  }
}

TEST_CASE("load from a file") {
  testsupport::TempDir dir;
  testsupport::write_file(dir.file("cells.csv"), kHeader + "603,01,1,2,a,0,0,home\n");
  CHECK(CellDb::load(dir.file("cells.csv")).size() == 1);
  CHECK_THROWS_AS(CellDb::load(dir.file("missing.csv")), CellDbError);
}
