#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "spatialspill/ingest.hpp"
#include "spatialspill/weights.hpp"

namespace spatialspill {

enum class ModelKind { OLS, SLX, SEM, SAR, SDEM, SDM, SAC, GNS };

const char* kind_name(ModelKind k) noexcept;
ModelKind kind_from_name(const std::string& s);
bool kind_has_rho(ModelKind k) noexcept;     // WY term: SAR, SDM, SAC, GNS
bool kind_has_lambda(ModelKind k) noexcept;  // We term: SEM, SDEM, SAC, GNS
bool kind_has_durbin(ModelKind k) noexcept;  // WX term: SLX, SDEM, SDM, GNS

enum class SeMode { Robust, Classical };

struct ModelSpec {
  ModelKind kind = ModelKind::OLS;
  std::string response;
  std::vector<std::string> regressors;
  std::vector<std::string> durbin;  // subset of regressors, lagged by W
  bool intercept = true;
  SeMode se_mode = SeMode::Robust;
};

struct FitResult {
  ModelSpec spec;

  // Design-column coefficients: [const?] + regressors + W-lagged durbin set.
  std::vector<std::string> coef_names;
  Eigen::VectorXd coefficients;
  double rho = 0.0;
  double lambda = 0.0;
  bool has_rho = false;
  bool has_lambda = false;
  double sigma2 = 0.0;  // ML residual variance u'u/n
  double loglik = 0.0;
  double r2 = 0.0;
  std::string r2_kind;  // "adjusted" (least squares) or "pseudo" (ML)
  int n = 0;
  int k = 0;  // design column count

  // Covariance over param_names = coef_names (+ "rho")(+ "lambda")(+ "sigma2"
  // for ML fits); std_errors/t/p cover coefficients and spatial parameters.
  std::vector<std::string> param_names;
  Eigen::MatrixXd vcov;
  Eigen::VectorXd std_errors;
  Eigen::VectorXd t_stats;
  Eigen::VectorXd p_values;

  Eigen::VectorXd residuals;  // innovation residuals
  Eigen::VectorXd fitted;     // reduced-form predictor
  Eigen::MatrixXd design;
  Eigen::VectorXd response_values;

  uint64_t weights_fingerprint = 0;
  bool converged = true;
  int iterations = 0;
  std::vector<std::string> warnings;

  int coef_index(const std::string& name) const;  // -1 when absent
  double coef(const std::string& name) const;
  /// Coefficient on regressor `name` (0 when absent); `theta_for` the same
  /// for its W-lagged copy.
  double beta_for(const std::string& name) const;
  double theta_for(const std::string& name) const;
};

struct DesignMatrix {
  Eigen::MatrixXd Z;
  Eigen::VectorXd y;
  std::vector<std::string> names;
};

DesignMatrix build_design(const ModelSpec& spec, const AttributeTable& table,
                          const WeightsMatrix* w);

/// Least squares for OLS and SLX; robust covariance is HC1.
FitResult fit_ols(const ModelSpec& spec, const AttributeTable& table,
                  const WeightsMatrix* w = nullptr);

/// ln|det(I - a W)| from the cached eigenvalues of W; complex pairs
/// contribute their modulus product.
double log_det_term(double a, const WeightsMatrix& w);

/// Admissible open interval for rho/lambda, shrunk by a 1e-6 margin.
std::pair<double, double> parameter_interval(const WeightsMatrix& w);

/// Maximum likelihood for SEM/SAR/SDEM/SDM by scalar concentration and for
/// SAC/GNS by alternating concentration over (rho, lambda).
FitResult fit_spatial(const ModelSpec& spec, const AttributeTable& table,
                      const WeightsMatrix& w);

/// Full Gaussian log-likelihood of the nesting family at arbitrary
/// parameters: u = (I - lambda W)((I - rho W)y - Z delta).
double full_loglik(ModelKind kind, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                   const WeightsMatrix& w, const Eigen::VectorXd& delta, double rho,
                   double lambda, double sigma2);

/// The same likelihood split into per-observation contributions (log-det
/// terms spread evenly); sums to full_loglik.
Eigen::VectorXd per_observation_loglik(ModelKind kind, const Eigen::VectorXd& y,
                                       const Eigen::MatrixXd& z, const WeightsMatrix& w,
                                       const Eigen::VectorXd& delta, double rho,
                                       double lambda, double sigma2);

}  // namespace spatialspill
