#include "spatialspill/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "spatialspill/error.hpp"

namespace spatialspill {

namespace {

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

// Splits one delimited line; double quotes protect embedded delimiters.
std::vector<std::string> split_fields(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

bool AttributeTable::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

int AttributeTable::column_index(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) {
    throw Error(Err::MissingColumn, "column '" + name + "' not present");
  }
  return static_cast<int>(it - columns.begin());
}

Eigen::VectorXd AttributeTable::column(const std::string& name) const {
  return values.col(column_index(name));
}

AttributeTable load_table(const std::string& path, const std::string& id_column,
                          char delimiter) {
  std::ifstream in(path);
  if (!in) throw Error(Err::IoError, "cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw Error(Err::EmptyTable, "'" + path + "' is empty");
  const auto header = split_fields(strip_cr(line), delimiter);

  int id_idx = -1;
  for (size_t j = 0; j < header.size(); ++j) {
    if (trim(header[j]) == id_column) {
      id_idx = static_cast<int>(j);
      break;
    }
  }
  if (id_idx < 0) {
    throw Error(Err::MissingColumn,
                "id column '" + id_column + "' not in header of '" + path + "'");
  }

  AttributeTable table;
  for (size_t j = 0; j < header.size(); ++j) {
    if (static_cast<int>(j) != id_idx) table.columns.push_back(trim(header[j]));
  }

  std::vector<std::vector<double>> rows;
  std::unordered_set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, delimiter);
    if (fields.size() != header.size()) {
      throw Error(Err::FormatError, "line " + std::to_string(line_no) + " has " +
                                        std::to_string(fields.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    }
    const std::string id = trim(fields[id_idx]);
    if (id.empty()) {
      throw Error(Err::FormatError, "empty region id on line " + std::to_string(line_no));
    }
    if (!seen.insert(id).second) {
      throw Error(Err::DuplicateId, "region id '" + id + "' appears more than once");
    }
    table.region_ids.push_back(id);
    std::vector<double> row;
    row.reserve(header.size() - 1);
    for (size_t j = 0; j < fields.size(); ++j) {
      if (static_cast<int>(j) == id_idx) continue;
      const std::string cell = trim(fields[j]);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw Error(Err::NonNumericCell, "row " + std::to_string(line_no) + ", column '" +
                                             trim(header[j]) + "': '" + cell + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(Err::EmptyTable, "'" + path + "' has a header but no rows");

  table.values.resize(static_cast<int>(rows.size()), static_cast<int>(table.columns.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) {
      table.values(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    }
  }
  return table;
}

double polygon_area(const std::vector<Ring>& rings) {
  double area2 = 0.0;
  for (const auto& ring : rings) {
    for (size_t i = 0; i + 1 < ring.size(); ++i) {
      area2 += ring[i][0] * ring[i + 1][1] - ring[i + 1][0] * ring[i][1];
    }
  }
  return area2 / 2.0;
}

std::array<double, 2> polygon_centroid(const std::vector<Ring>& rings) {
  double area2 = 0.0, cx = 0.0, cy = 0.0;
  for (const auto& ring : rings) {
    for (size_t i = 0; i + 1 < ring.size(); ++i) {
      const double cross = ring[i][0] * ring[i + 1][1] - ring[i + 1][0] * ring[i][1];
      area2 += cross;
      cx += (ring[i][0] + ring[i + 1][0]) * cross;
      cy += (ring[i][1] + ring[i + 1][1]) * cross;
    }
  }
  if (area2 == 0.0) {
    // Zero signed area: fall back to the vertex mean.
    double sx = 0.0, sy = 0.0;
    long count = 0;
    for (const auto& ring : rings) {
      for (size_t i = 0; i + 1 < ring.size(); ++i) {
        sx += ring[i][0];
        sy += ring[i][1];
        ++count;
      }
    }
    if (count == 0) return {0.0, 0.0};
    return {sx / count, sy / count};
  }
  return {cx / (3.0 * area2), cy / (3.0 * area2)};
}

GeometrySet load_geometry(const std::string& path, const std::string& id_property) {
  std::ifstream in(path);
  if (!in) throw Error(Err::IoError, "cannot open '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Err::FormatError, "'" + path + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features")) {
    throw Error(Err::FormatError, "'" + path + "' is not a feature collection");
  }

  GeometrySet geo;
  std::unordered_set<std::string> seen;
  for (const auto& feature : doc["features"]) {
    if (!feature.contains("properties") || !feature["properties"].contains(id_property)) {
      throw Error(Err::MissingIdProperty,
                  "feature without '" + id_property + "' property");
    }
    const auto& idval = feature["properties"][id_property];
    const std::string id = idval.is_string() ? idval.get<std::string>() : idval.dump();
    if (!seen.insert(id).second) {
      throw Error(Err::DuplicateId, "region id '" + id + "' appears more than once");
    }

    const auto& geom = feature["geometry"];
    const std::string kind = geom.value("type", "");
    std::vector<std::vector<std::vector<std::vector<double>>>> polys;
    if (kind == "Polygon") {
      polys.push_back(geom["coordinates"].get<std::vector<std::vector<std::vector<double>>>>());
    } else if (kind == "MultiPolygon") {
      polys = geom["coordinates"].get<std::vector<std::vector<std::vector<std::vector<double>>>>>();
    } else {
      throw Error(Err::UnsupportedGeometryKind,
                  "feature '" + id + "' has geometry '" + kind + "'; expected Polygon/MultiPolygon");
    }

    std::vector<Ring> rings;
    for (const auto& poly : polys) {
      for (const auto& raw : poly) {
        Ring ring;
        for (const auto& pt : raw) {
          if (pt.size() < 2) {
            throw Error(Err::MalformedRing, "vertex with fewer than 2 coordinates in '" + id + "'");
          }
          ring.push_back({pt[0], pt[1]});
        }
        if (!ring.empty() && ring.front() != ring.back()) {
          ring.push_back(ring.front());
          geo.warnings.push_back("region '" + id + "': ring closed by appending first vertex");
        }
        if (ring.size() < 4) {
          throw Error(Err::MalformedRing, "region '" + id + "' has a ring with fewer than 4 vertices after closure");
        }
        rings.push_back(std::move(ring));
      }
    }

    std::array<double, 2> centroid;
    const auto& props = feature["properties"];
    if (props.contains("centroid") && props["centroid"].is_array() &&
        props["centroid"].size() == 2) {
      centroid = {props["centroid"][0].get<double>(), props["centroid"][1].get<double>()};
    } else {
      centroid = polygon_centroid(rings);
    }

    geo.region_ids.push_back(id);
    geo.polygons.push_back(std::move(rings));
    geo.centroids.push_back(centroid);
  }
  if (geo.region_ids.empty()) {
    throw Error(Err::EmptyTable, "'" + path + "' contains no features");
  }
  return geo;
}

void align_geometry(const AttributeTable& table, GeometrySet& geometry) {
  std::unordered_map<std::string, int> pos;
  for (int i = 0; i < geometry.size(); ++i) pos[geometry.region_ids[i]] = i;

  std::vector<std::string> missing_geometry, missing_table;
  std::unordered_set<std::string> table_ids(table.region_ids.begin(), table.region_ids.end());
  for (const auto& id : table.region_ids) {
    if (!pos.count(id)) missing_geometry.push_back(id);
  }
  for (const auto& id : geometry.region_ids) {
    if (!table_ids.count(id)) missing_table.push_back(id);
  }
  if (!missing_geometry.empty() || !missing_table.empty()) {
    std::string msg = "region ids do not align;";
    if (!missing_geometry.empty()) {
      msg += " missing from geometry:";
      for (const auto& id : missing_geometry) msg += " " + id;
      msg += ";";
    }
    if (!missing_table.empty()) {
      msg += " missing from table:";
      for (const auto& id : missing_table) msg += " " + id;
    }
    throw Error(Err::IdMismatch, msg);
  }

  GeometrySet ordered;
  ordered.warnings = geometry.warnings;
  for (const auto& id : table.region_ids) {
    const int i = pos[id];
    ordered.region_ids.push_back(geometry.region_ids[i]);
    ordered.polygons.push_back(std::move(geometry.polygons[i]));
    ordered.centroids.push_back(geometry.centroids[i]);
  }
  geometry = std::move(ordered);
}

void validate_graph(const NeighborGraph& g) {
  const int n = g.size();
  if (static_cast<int>(g.adjacency.size()) != n) {
    throw Error(Err::DimensionMismatch, "adjacency size differs from region count");
  }
  for (int i = 0; i < n; ++i) {
    for (int j : g.adjacency[i]) {
      if (j == i) {
        throw Error(Err::AsymmetricNeighbors,
                    "region '" + g.region_ids[i] + "' lists itself as a neighbor");
      }
      if (j < 0 || j >= n ||
          !std::binary_search(g.adjacency[j].begin(), g.adjacency[j].end(), i)) {
        throw Error(Err::AsymmetricNeighbors,
                    "edge " + g.region_ids[i] + " -> " + g.region_ids[j < 0 || j >= n ? i : j] +
                        " has no reverse entry");
      }
    }
  }
}

NeighborGraph parse_gal(std::istream& in) {
  std::vector<std::string> lines;
  std::string raw;
  while (std::getline(in, raw)) {
    raw = strip_cr(raw);
    if (!trim(raw).empty() && trim(raw)[0] == '#') continue;
    lines.push_back(raw);
  }
  size_t pos = 0;
  auto next_line = [&]() -> const std::string& {
    static const std::string empty;
    return pos < lines.size() ? lines[pos++] : empty;
  };

  if (lines.empty()) throw Error(Err::BadHeader, "empty GAL file");
  const auto head = split_ws(next_line());
  long n = -1;
  if (head.size() == 1) {
    char* end = nullptr;
    n = std::strtol(head[0].c_str(), &end, 10);
    if (end != head[0].c_str() + head[0].size()) n = -1;
  }
  if (n < 0) throw Error(Err::BadHeader, "first GAL line must be the region count");

  NeighborGraph g;
  std::vector<std::vector<std::string>> neighbor_names(n);
  std::unordered_map<std::string, int> index;
  for (long i = 0; i < n; ++i) {
    if (pos >= lines.size()) {
      throw Error(Err::BadHeader, "GAL file ends after " + std::to_string(i) + " of " +
                                      std::to_string(n) + " regions");
    }
    const auto header = split_ws(next_line());
    if (header.size() != 2) {
      throw Error(Err::BadHeader, "expected '<id> <count>' for region " + std::to_string(i + 1));
    }
    char* end = nullptr;
    const long k = std::strtol(header[1].c_str(), &end, 10);
    if (end != header[1].c_str() + header[1].size() || k < 0) {
      throw Error(Err::BadHeader, "bad neighbor count for region '" + header[0] + "'");
    }
    if (!index.emplace(header[0], static_cast<int>(i)).second) {
      throw Error(Err::DuplicateId, "region id '" + header[0] + "' appears more than once");
    }
    g.region_ids.push_back(header[0]);
    const auto nbrs = split_ws(next_line());
    if (static_cast<long>(nbrs.size()) != k) {
      throw Error(Err::NeighborCountMismatch,
                  "region '" + header[0] + "' declares " + std::to_string(k) + " neighbors but lists " +
                      std::to_string(nbrs.size()));
    }
    neighbor_names[i] = nbrs;
  }

  g.adjacency.resize(n);
  for (long i = 0; i < n; ++i) {
    std::vector<int> adj;
    for (const auto& name : neighbor_names[i]) {
      const auto it = index.find(name);
      if (it == index.end()) {
        throw Error(Err::UnknownNeighborId, "region '" + g.region_ids[i] +
                                                "' lists unknown neighbor '" + name + "'");
      }
      adj.push_back(it->second);
    }
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    g.adjacency[i] = std::move(adj);
  }
  validate_graph(g);
  return g;
}

void serialize_gal(const NeighborGraph& g, std::ostream& out) {
  for (const auto& id : g.region_ids) {
    if (id.find_first_of(" \t") != std::string::npos) {
      throw Error(Err::FormatError, "region id '" + id + "' contains whitespace");
    }
  }
  out << g.size() << "\n";
  for (int i = 0; i < g.size(); ++i) {
    out << g.region_ids[i] << " " << g.adjacency[i].size() << "\n";
    std::vector<std::string> names;
    names.reserve(g.adjacency[i].size());
    for (int j : g.adjacency[i]) names.push_back(g.region_ids[j]);
    std::sort(names.begin(), names.end());
    for (size_t k = 0; k < names.size(); ++k) {
      if (k) out << " ";
      out << names[k];
    }
    out << "\n";
  }
}

NeighborGraph read_gal(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Err::IoError, "cannot open '" + path + "'");
  return parse_gal(in);
}

void write_gal(const NeighborGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Err::IoError, "cannot write '" + path + "'");
  serialize_gal(g, out);
}

}  // namespace spatialspill
