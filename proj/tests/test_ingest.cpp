#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "spatialspill/error.hpp"
#include "spatialspill/ingest.hpp"

using namespace spatialspill;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("load_table parses a minimal csv") {
  const auto path = write_temp("ss_min.csv", "id,y\nA,0\n");
  const auto table = load_table(path, "id");
  CHECK(table.n_rows() == 1);
  CHECK(table.columns == std::vector<std::string>{"y"});
  CHECK(table.column("y")[0] == 0.0);
}

TEST_CASE("load_table preserves row order and parses numbers") {
  const auto path = write_temp("ss_rows.csv", "id,a,b\nr2,1.5,-3\nr1,2.5,4\nr3,0,0.25\n");
  const auto table = load_table(path, "id");
  CHECK(table.region_ids == std::vector<std::string>{"r2", "r1", "r3"});
  CHECK(table.column("a")[1] == doctest::Approx(2.5));
  CHECK(table.column("b")[2] == doctest::Approx(0.25));
}

TEST_CASE("load_table rejects duplicate ids naming the offender") {
  const auto path = write_temp("ss_dup.csv", "id,y\nA,1\nB,2\nA,3\n");
  try {
    load_table(path, "id");
    FAIL("expected DuplicateId");
  } catch (const Error& e) {
    CHECK(e.code() == Err::DuplicateId);
    CHECK(std::string(e.what()).find("A") != std::string::npos);
  }
}

TEST_CASE("load_table error cases") {
  CHECK_THROWS_AS(load_table(write_temp("ss_noid.csv", "x,y\n1,2\n"), "id"), Error);
  try {
    load_table(write_temp("ss_nan.csv", "id,y\nA,1\nB,oops\n"), "id");
    FAIL("expected NonNumericCell");
  } catch (const Error& e) {
    CHECK(e.code() == Err::NonNumericCell);
    CHECK(std::string(e.what()).find("y") != std::string::npos);
  }
  try {
    load_table(write_temp("ss_empty.csv", "id,y\n"), "id");
    FAIL("expected EmptyTable");
  } catch (const Error& e) {
    CHECK(e.code() == Err::EmptyTable);
  }
}

TEST_CASE("load_table is deterministic over identical bytes") {
  const auto path = write_temp("ss_det.csv", "id,a\nA,1\nB,2\n");
  const auto t1 = load_table(path, "id");
  const auto t2 = load_table(path, "id");
  CHECK(t1.region_ids == t2.region_ids);
  CHECK(t1.columns == t2.columns);
  CHECK(t1.values == t2.values);
}

TEST_CASE("load_geometry computes unit-square centroids") {
  const std::string geojson = R"({
    "type": "FeatureCollection",
    "features": [
      {"type": "Feature", "properties": {"region_id": "L"},
       "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
      {"type": "Feature", "properties": {"region_id": "R"},
       "geometry": {"type": "Polygon", "coordinates": [[[1,0],[2,0],[2,1],[1,1],[1,0]]]}}
    ]})";
  const auto geo = load_geometry(write_temp("ss_sq.json", geojson));
  REQUIRE(geo.size() == 2);
  CHECK(geo.centroids[0][0] == doctest::Approx(0.5));
  CHECK(geo.centroids[0][1] == doctest::Approx(0.5));
  CHECK(geo.centroids[1][0] == doctest::Approx(1.5));
  CHECK(geo.centroids[1][1] == doctest::Approx(0.5));
  CHECK(geo.warnings.empty());
}

TEST_CASE("load_geometry closes an open triangle ring with a warning") {
  const std::string geojson = R"({
    "type": "FeatureCollection",
    "features": [
      {"type": "Feature", "properties": {"region_id": "T"},
       "geometry": {"type": "Polygon", "coordinates": [[[0,0],[4,0],[0,3]]]}}
    ]})";
  const auto geo = load_geometry(write_temp("ss_tri.json", geojson));
  REQUIRE(geo.size() == 1);
  // Oracle: direct vertex append.
  const Ring expected = {{0, 0}, {4, 0}, {0, 3}, {0, 0}};
  CHECK(geo.polygons[0][0] == expected);
  CHECK(geo.warnings.size() == 1);
}

TEST_CASE("load_geometry rejects unsupported kinds and missing ids") {
  const std::string point = R"({
    "type": "FeatureCollection",
    "features": [
      {"type": "Feature", "properties": {"region_id": "P"},
       "geometry": {"type": "Point", "coordinates": [0, 0]}}
    ]})";
  CHECK_THROWS_AS(load_geometry(write_temp("ss_pt.json", point)), Error);

  const std::string noid = R"({
    "type": "FeatureCollection",
    "features": [
      {"type": "Feature", "properties": {"name": "X"},
       "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}}
    ]})";
  try {
    load_geometry(write_temp("ss_noid.json", noid));
    FAIL("expected MissingIdProperty");
  } catch (const Error& e) {
    CHECK(e.code() == Err::MissingIdProperty);
  }
}

TEST_CASE("align_geometry reorders and reports mismatches") {
  AttributeTable table;
  table.region_ids = {"B", "A"};
  table.columns = {"y"};
  table.values.resize(2, 1);
  table.values << 1.0, 2.0;

  GeometrySet geo;
  geo.region_ids = {"A", "B"};
  geo.polygons.resize(2, {{{{0, 0}}, {{1, 0}}, {{1, 1}}, {{0, 0}}}});
  geo.centroids = {{0.0, 0.0}, {1.0, 1.0}};

  align_geometry(table, geo);
  CHECK(geo.region_ids == std::vector<std::string>{"B", "A"});
  CHECK(geo.centroids[0][0] == doctest::Approx(1.0));

  geo.region_ids = {"B", "C"};
  try {
    align_geometry(table, geo);
    FAIL("expected IdMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Err::IdMismatch);
    CHECK(std::string(e.what()).find("A") != std::string::npos);
    CHECK(std::string(e.what()).find("C") != std::string::npos);
  }
}

TEST_CASE("gal parse builds the documented path graph") {
  std::istringstream in("3\nA 1\nB\nB 2\nA C\nC 1\nB\n");
  const auto g = parse_gal(in);
  REQUIRE(g.size() == 3);
  CHECK(g.region_ids == std::vector<std::string>{"A", "B", "C"});
  CHECK(g.adjacency[0] == std::vector<int>{1});
  CHECK(g.adjacency[1] == std::vector<int>{0, 2});
  CHECK(g.adjacency[2] == std::vector<int>{1});
}

TEST_CASE("gal write(read(f)) reproduces the canonical form") {
  const std::string canonical = "3\nA 1\nB\nB 2\nA C\nC 1\nB\n";
  std::istringstream in(canonical);
  const auto g = parse_gal(in);
  std::ostringstream out;
  serialize_gal(g, out);
  CHECK(out.str() == canonical);
}

TEST_CASE("gal round-trip over random graphs") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 12);
    NeighborGraph g;
    for (int i = 0; i < n; ++i) g.region_ids.push_back("n" + std::to_string(i));
    g.adjacency.resize(n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (rng() % 3 == 0) {
          g.adjacency[i].push_back(j);
          g.adjacency[j].push_back(i);
        }
      }
    }
    std::ostringstream out;
    serialize_gal(g, out);
    std::istringstream in(out.str());
    CHECK(parse_gal(in) == g);
  }
}

TEST_CASE("gal errors: count mismatch, unknown id, bad header") {
  {
    std::istringstream in("2\nA 2\nB\nB 1\nA\n");
    try {
      parse_gal(in);
      FAIL("expected NeighborCountMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Err::NeighborCountMismatch);
    }
  }
  {
    std::istringstream in("2\nA 1\nZ\nB 1\nA\n");
    try {
      parse_gal(in);
      FAIL("expected UnknownNeighborId");
    } catch (const Error& e) {
      CHECK(e.code() == Err::UnknownNeighborId);
      CHECK(std::string(e.what()).find("Z") != std::string::npos);
    }
  }
  {
    std::istringstream in("not_a_number\n");
    CHECK_THROWS_AS(parse_gal(in), Error);
  }
}

TEST_CASE("gal comments are ignored") {
  std::istringstream in("# neighbor file\n2\nA 1\nB\n# comment\nB 1\nA\n");
  const auto g = parse_gal(in);
  CHECK(g.edge_count() == 1);
}
