#pragma once

#include <string>
#include <vector>

namespace spatialspill {

/// Symmetric irreflexive adjacency over named regions. Neighbor lists hold
/// sorted indices into region_ids.
struct NeighborGraph {
  std::vector<std::string> region_ids;
  std::vector<std::vector<int>> adjacency;

  int size() const { return static_cast<int>(region_ids.size()); }
  long edge_count() const {
    long degree_sum = 0;
    for (const auto& nbrs : adjacency) degree_sum += static_cast<long>(nbrs.size());
    return degree_sum / 2;
  }
  bool operator==(const NeighborGraph&) const = default;
};

/// Throws if adjacency is reflexive or not symmetric.
void validate_graph(const NeighborGraph& g);

}  // namespace spatialspill
