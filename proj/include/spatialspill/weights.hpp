#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

#include "spatialspill/graph.hpp"
#include "spatialspill/ingest.hpp"

namespace spatialspill {

enum class ContiguityRule { Queen, Rook };
enum class Normalization { None, Row, Spectral };

const char* normalization_name(Normalization n) noexcept;
Normalization normalization_from_name(const std::string& s);

struct Provenance {
  enum class Kind { Contiguity, InverseDistance, Custom };
  Kind kind = Kind::Custom;
  ContiguityRule rule = ContiguityRule::Rook;
  int order = 1;

  std::string describe() const;
  static Provenance parse(const std::string& s);
};

/// Sparse nonnegative spatial weights with a zero diagonal. The eigenvalue
/// set (hence the stationarity interval and spectral radius) is computed at
/// most once per matrix and shared by copies.
class WeightsMatrix {
 public:
  WeightsMatrix();
  WeightsMatrix(int n, const std::vector<Eigen::Triplet<double>>& entries,
                Normalization normalization, Provenance provenance,
                std::vector<std::string> region_ids = {});

  /// Binary 0/1 weights from a neighbor graph (normalization = none).
  static WeightsMatrix binary(const NeighborGraph& graph);

  int n() const { return static_cast<int>(w_.rows()); }
  long nonzeros() const { return w_.nonZeros(); }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& matrix() const { return w_; }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(w_); }
  Normalization normalization() const { return normalization_; }
  const Provenance& provenance() const { return provenance_; }
  const std::vector<std::string>& region_ids() const { return region_ids_; }

  Eigen::VectorXd row_sums() const;
  std::vector<int> islands() const;  // rows with no entries

  /// All eigenvalues (dense solve), cached on first use; concurrent callers
  /// observe a single computation.
  const Eigen::VectorXcd& eigenvalues() const;
  /// (min, max) over the real eigenvalues.
  std::pair<double, double> spectral_bounds() const;
  double spectral_radius() const;
  /// Open interval of admissible rho/lambda for (I - aW) inversion.
  std::pair<double, double> stationary_interval() const;

  Eigen::VectorXd lag(const Eigen::VectorXd& x) const { return w_ * x; }

  uint64_t fingerprint() const;

  std::vector<std::string> warnings;

 private:
  struct EigenCache;
  Eigen::SparseMatrix<double, Eigen::RowMajor> w_;
  Normalization normalization_ = Normalization::None;
  Provenance provenance_;
  std::vector<std::string> region_ids_;
  std::shared_ptr<EigenCache> cache_;
};

/// Shared-border contiguity after snapping vertices to a grid of
/// `snap_tolerance` degrees. Rook requires a shared segment of positive
/// length, queen a shared point. Order p > 1 takes graph distance <= p
/// (or == p when exact_order), excluding self.
NeighborGraph build_contiguity(const GeometrySet& geometry, ContiguityRule rule,
                               int order = 1, double snap_tolerance = 1e-9,
                               bool exact_order = false);

/// Dense 1/d weights from great-circle centroid distances in kilometers.
WeightsMatrix build_inverse_distance(const GeometrySet& geometry);

WeightsMatrix normalize(const WeightsMatrix& w, Normalization scheme);
WeightsMatrix normalize(const NeighborGraph& graph, Normalization scheme);

struct ConnectivitySummary {
  int n = 0;
  long nonzeros = 0;
  int min_neighbors = 0;
  double mean_neighbors = 0.0;
  int max_neighbors = 0;
  int island_count = 0;
  std::vector<std::string> island_ids;
  bool symmetric = false;  // of the binary structure
};

ConnectivitySummary connectivity_summary(const WeightsMatrix& w);

double haversine_km(double lon1, double lat1, double lon2, double lat2);

// .wm triple-list files: header "n normalization provenance", then one
// "row col weight" line per entry with 17-significant-digit weights.
void write_wm(const WeightsMatrix& w, const std::string& path);
WeightsMatrix read_wm(const std::string& path);

}  // namespace spatialspill
