#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "spatialspill/weights.hpp"

namespace spatialspill {

/// Ground-truth parameters for the general nesting process
/// y = (I - rho W)^{-1} (alpha + X beta + WX_d theta + (I - lambda W)^{-1} u).
struct DgpParams {
  double rho = 0.0;
  double lambda = 0.0;
  Eigen::VectorXd beta;
  Eigen::VectorXd theta;          // aligned to durbin_columns
  std::vector<int> durbin_columns;  // indices into X; empty theta means none
  double alpha = 0.0;
  double sigma = 1.0;
  uint64_t seed = 0;
};

struct DgpResult {
  Eigen::VectorXd y;
  Eigen::VectorXd innovations;  // the realized u
};

/// Exact dense solves of both spatial systems; deterministic in params.seed.
DgpResult simulate_dgp(const DgpParams& params, const Eigen::MatrixXd& x,
                       const WeightsMatrix& w);

/// Independent standard-normal design columns, seed-controlled.
Eigen::MatrixXd random_design(int n, int k, uint64_t seed);

struct Lattice {
  GeometrySet geometry;
  NeighborGraph graph;
};

/// rows x cols grid of unit squares with the implied contiguity graph.
/// Region ids are "r<i>c<j>"; row-major order.
Lattice make_lattice(int rows, int cols, ContiguityRule rule);

}  // namespace spatialspill
