#include "spatialspill/dgp.hpp"

#include <Eigen/LU>

#include "spatialspill/error.hpp"
#include "spatialspill/numeric.hpp"

namespace spatialspill {

namespace {

void check_stationary(double value, const char* name, const WeightsMatrix& w) {
  const auto [lo, hi] = w.stationary_interval();
  if (!(value > lo && value < hi)) {
    throw Error(Err::OutOfStationaryRegion,
                std::string(name) + "=" + std::to_string(value) + " outside (" +
                    std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }
}

}  // namespace

DgpResult simulate_dgp(const DgpParams& params, const Eigen::MatrixXd& x,
                       const WeightsMatrix& w) {
  const int n = w.n();
  if (x.rows() != n) {
    throw Error(Err::DimensionMismatch, "design has " + std::to_string(x.rows()) +
                                            " rows, weights dimension is " + std::to_string(n));
  }
  if (params.beta.size() != x.cols()) {
    throw Error(Err::DimensionMismatch, "beta length differs from design column count");
  }
  if (params.theta.size() != static_cast<Eigen::Index>(params.durbin_columns.size())) {
    throw Error(Err::DimensionMismatch, "theta length differs from durbin set size");
  }
  for (int c : params.durbin_columns) {
    if (c < 0 || c >= x.cols()) {
      throw Error(Err::DimensionMismatch, "durbin column index out of range");
    }
  }
  if (params.rho != 0.0) check_stationary(params.rho, "rho", w);
  if (params.lambda != 0.0) check_stationary(params.lambda, "lambda", w);

  auto rng = substream(params.seed, 0);
  Eigen::VectorXd u(n);
  for (int i = 0; i < n; ++i) u[i] = params.sigma * standard_normal(rng);

  Eigen::VectorXd e = u;
  if (params.lambda != 0.0) {
    const Eigen::MatrixXd b =
        Eigen::MatrixXd::Identity(n, n) - params.lambda * w.dense();
    e = b.partialPivLu().solve(u);
  }

  Eigen::VectorXd signal = Eigen::VectorXd::Constant(n, params.alpha) + x * params.beta;
  for (size_t j = 0; j < params.durbin_columns.size(); ++j) {
    signal += params.theta[static_cast<Eigen::Index>(j)] *
              (w.matrix() * x.col(params.durbin_columns[j]));
  }
  Eigen::VectorXd y = signal + e;
  if (params.rho != 0.0) {
    const Eigen::MatrixXd a =
        Eigen::MatrixXd::Identity(n, n) - params.rho * w.dense();
    y = a.partialPivLu().solve(y);
  }
  return {std::move(y), std::move(u)};
}

Eigen::MatrixXd random_design(int n, int k, uint64_t seed) {
  Eigen::MatrixXd x(n, k);
  for (int j = 0; j < k; ++j) {
    auto rng = substream(seed, static_cast<uint64_t>(j) + 1);
    for (int i = 0; i < n; ++i) x(i, j) = standard_normal(rng);
  }
  return x;
}

Lattice make_lattice(int rows, int cols, ContiguityRule rule) {
  if (rows < 1 || cols < 1) throw Error(Err::DimensionMismatch, "lattice needs rows, cols >= 1");
  Lattice lattice;
  auto& geo = lattice.geometry;
  auto& g = lattice.graph;
  const int n = rows * cols;
  geo.region_ids.reserve(n);
  g.adjacency.resize(n);

  auto index = [cols](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      geo.region_ids.push_back("r" + std::to_string(r) + "c" + std::to_string(c));
      const double x0 = c, y0 = r;
      Ring ring = {{x0, y0}, {x0 + 1, y0}, {x0 + 1, y0 + 1}, {x0, y0 + 1}, {x0, y0}};
      geo.polygons.push_back({ring});
      geo.centroids.push_back({x0 + 0.5, y0 + 0.5});

      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (rule == ContiguityRule::Rook && dr != 0 && dc != 0) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
          g.adjacency[index(r, c)].push_back(index(rr, cc));
        }
      }
    }
  }
  g.region_ids = geo.region_ids;
  for (auto& adj : g.adjacency) std::sort(adj.begin(), adj.end());
  return lattice;
}

}  // namespace spatialspill
