#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "spatialspill/ingest.hpp"
#include "spatialspill/weights.hpp"

namespace spatialspill {

struct FitResult;

/// "***" below 1%, "**" below 5%, "*" below 10%, else empty.
std::string significance_stars(double p);

struct VariableStats {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;        // sample (n-1)
  double skewness = 0.0;  // m3 / m2^1.5
  // Group contrast (group_by == 1 vs == 0), set when a split was requested.
  bool has_groups = false;
  double mean_group1 = 0.0;
  double mean_group0 = 0.0;
  double welch_t = 0.0;
  double welch_df = 0.0;
  double welch_p = 1.0;
};

struct DescriptiveReport {
  int n = 0;
  std::vector<VariableStats> variables;
  std::vector<std::string> corr_names;
  Eigen::MatrixXd correlation;  // symmetric, unit diagonal
  Eigen::MatrixXd corr_p;       // two-sided t-test p-values
};

DescriptiveReport describe(const AttributeTable& table,
                           const std::vector<std::string>& variables,
                           const std::string& group_by = "");

struct MoranResult {
  double statistic = 0.0;
  double expectation = 0.0;  // -1/(n-1)
  double variance = 0.0;     // under normality
  double z_score = 0.0;
  double p_value = 1.0;              // two-sided analytic
  double pseudo_p = 1.0;             // set when permutations > 0
  int permutations = 0;
  int n_used = 0;
  std::vector<double> permuted;  // permuted statistics, one per permutation
};

MoranResult global_moran(const Eigen::VectorXd& x, const WeightsMatrix& w,
                         int permutations = 0, uint64_t seed = 0, int threads = 1);

struct DiagnosticsReport {
  double moran_i = 0.0;  // residual Moran's I (raw)
  double moran_z = 0.0;
  double moran_p = 1.0;
  double lm_error = 0.0;
  double lm_error_p = 1.0;
  double robust_lm_error = 0.0;
  double robust_lm_error_p = 1.0;
  double lm_lag = 0.0;
  double lm_lag_p = 1.0;
  double robust_lm_lag = 0.0;
  double robust_lm_lag_p = 1.0;
};

/// Score tests for spatial dependence in least-squares residuals:
/// LM-error = [e'We/(e'e/n)]^2 / T with T = tr(W'W + WW);
/// LM-lag   = [e'Wy/(e'e/n)]^2 / (T + (WXb)'M(WXb)/s2);
/// robust variants subtract the cross-term. Residual Moran uses the
/// Cliff-Ord regression moments.
DiagnosticsReport lm_diagnostics(const FitResult& ols, const WeightsMatrix& w);

enum class Quadrant { HH, LL, HL, LH, Undefined };
const char* quadrant_name(Quadrant q) noexcept;

struct LisaRow {
  double local_i = 0.0;
  double pseudo_p = 1.0;
  Quadrant quadrant = Quadrant::Undefined;
  bool significant = false;
};

struct LisaResult {
  std::vector<LisaRow> rows;
  double global_i = 0.0;
  double s0 = 0.0;  // sum of all weights
  double alpha = 0.05;
  int permutations = 0;
};

/// Local Moran with conditional permutations (region i held fixed). Islands
/// get pseudo_p = 1 and an undefined quadrant.
LisaResult local_moran(const Eigen::VectorXd& x, const WeightsMatrix& w,
                       int permutations, double alpha, uint64_t seed,
                       int threads = 1);

}  // namespace spatialspill
