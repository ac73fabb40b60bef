#pragma once

#include <Eigen/Dense>
#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "spatialspill/graph.hpp"

namespace spatialspill {

/// Region-indexed table of numeric community variables. All columns are
/// fully populated; missing values are a load-time error.
struct AttributeTable {
  std::vector<std::string> region_ids;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // n_rows x columns.size()

  int n_rows() const { return static_cast<int>(region_ids.size()); }
  bool has_column(const std::string& name) const;
  int column_index(const std::string& name) const;  // throws MissingColumn
  Eigen::VectorXd column(const std::string& name) const;
};

using Ring = std::vector<std::array<double, 2>>;  // (lon, lat) pairs, closed

struct GeometrySet {
  std::vector<std::string> region_ids;
  std::vector<std::vector<Ring>> polygons;  // per region: one or more rings
  std::vector<std::array<double, 2>> centroids;
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(region_ids.size()); }
};

AttributeTable load_table(const std::string& path, const std::string& id_column,
                          char delimiter = ',');

/// JSON feature collection of Polygon/MultiPolygon features. Unclosed rings
/// are closed by appending the first vertex (with a warning); a feature may
/// carry an explicit "centroid": [lon, lat] property.
GeometrySet load_geometry(const std::string& path,
                          const std::string& id_property = "region_id");

/// Planar shoelace centroid over all rings, signed areas summed.
std::array<double, 2> polygon_centroid(const std::vector<Ring>& rings);
double polygon_area(const std::vector<Ring>& rings);

/// Reorders `geometry` rows to match the table's region order. Any id present
/// on one side only aborts with a report listing every unmatched id.
void align_geometry(const AttributeTable& table, GeometrySet& geometry);

// GAL neighbor-list files: line 1 is the region count, then per region a
// header line "<id> <k>" followed by one line of k neighbor ids (empty when
// k = 0). '#' lines are comments.
NeighborGraph parse_gal(std::istream& in);
void serialize_gal(const NeighborGraph& g, std::ostream& out);
NeighborGraph read_gal(const std::string& path);
void write_gal(const NeighborGraph& g, const std::string& path);

}  // namespace spatialspill
