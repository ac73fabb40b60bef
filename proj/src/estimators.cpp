#include "spatialspill/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/LU>
#include <Eigen/QR>

#include "spatialspill/error.hpp"
#include "spatialspill/numeric.hpp"

namespace spatialspill {

namespace {
constexpr double kLn2Pi = 1.8378770664093454836;
constexpr double kStationaryMargin = 1e-6;
constexpr int kGridPoints = 100;
constexpr double kScalarTol = 1e-10;
constexpr int kMaxOuterIterations = 200;
constexpr double kOuterTol = 1e-7;
}  // namespace

const char* kind_name(ModelKind k) noexcept {
  switch (k) {
    case ModelKind::OLS: return "ols";
    case ModelKind::SLX: return "slx";
    case ModelKind::SEM: return "sem";
    case ModelKind::SAR: return "sar";
    case ModelKind::SDEM: return "sdem";
    case ModelKind::SDM: return "sdm";
    case ModelKind::SAC: return "sac";
    case ModelKind::GNS: return "gns";
  }
  return "ols";
}

ModelKind kind_from_name(const std::string& s) {
  for (ModelKind k : {ModelKind::OLS, ModelKind::SLX, ModelKind::SEM, ModelKind::SAR,
                      ModelKind::SDEM, ModelKind::SDM, ModelKind::SAC, ModelKind::GNS}) {
    if (s == kind_name(k)) return k;
  }
  throw Error(Err::FormatError, "unknown model kind '" + s + "'");
}

bool kind_has_rho(ModelKind k) noexcept {
  return k == ModelKind::SAR || k == ModelKind::SDM || k == ModelKind::SAC ||
         k == ModelKind::GNS;
}

bool kind_has_lambda(ModelKind k) noexcept {
  return k == ModelKind::SEM || k == ModelKind::SDEM || k == ModelKind::SAC ||
         k == ModelKind::GNS;
}

bool kind_has_durbin(ModelKind k) noexcept {
  return k == ModelKind::SLX || k == ModelKind::SDEM || k == ModelKind::SDM ||
         k == ModelKind::GNS;
}

int FitResult::coef_index(const std::string& name) const {
  const auto it = std::find(coef_names.begin(), coef_names.end(), name);
  return it == coef_names.end() ? -1 : static_cast<int>(it - coef_names.begin());
}

double FitResult::coef(const std::string& name) const {
  const int i = coef_index(name);
  if (i < 0) throw Error(Err::MissingColumn, "no coefficient named '" + name + "'");
  return coefficients[i];
}

double FitResult::beta_for(const std::string& name) const {
  const int i = coef_index(name);
  return i < 0 ? 0.0 : coefficients[i];
}

double FitResult::theta_for(const std::string& name) const {
  const int i = coef_index("W_" + name);
  return i < 0 ? 0.0 : coefficients[i];
}

DesignMatrix build_design(const ModelSpec& spec, const AttributeTable& table,
                          const WeightsMatrix* w) {
  if (spec.regressors.empty()) {
    throw Error(Err::MissingColumn, "model has no regressors");
  }
  const bool wants_durbin = kind_has_durbin(spec.kind);
  if (wants_durbin && spec.durbin.empty()) {
    throw Error(Err::FormatError,
                std::string(kind_name(spec.kind)) + " requires a non-empty durbin set");
  }
  if (!wants_durbin && !spec.durbin.empty()) {
    throw Error(Err::FormatError,
                std::string(kind_name(spec.kind)) + " does not admit a durbin set");
  }
  for (const auto& name : spec.durbin) {
    if (std::find(spec.regressors.begin(), spec.regressors.end(), name) ==
        spec.regressors.end()) {
      throw Error(Err::MissingColumn, "durbin column '" + name + "' is not a regressor");
    }
  }
  if (wants_durbin && (w == nullptr)) {
    throw Error(Err::DimensionMismatch,
                std::string(kind_name(spec.kind)) + " requires a weights matrix");
  }
  if (w != nullptr && w->n() != table.n_rows()) {
    throw Error(Err::DimensionMismatch, "weights dimension " + std::to_string(w->n()) +
                                            " differs from table rows " +
                                            std::to_string(table.n_rows()));
  }

  const int n = table.n_rows();
  const int k = (spec.intercept ? 1 : 0) + static_cast<int>(spec.regressors.size()) +
                static_cast<int>(spec.durbin.size());
  DesignMatrix d;
  d.y = table.column(spec.response);
  d.Z.resize(n, k);
  int col = 0;
  if (spec.intercept) {
    d.Z.col(col).setOnes();
    d.names.push_back("const");
    ++col;
  }
  for (const auto& name : spec.regressors) {
    d.Z.col(col) = table.column(name);
    d.names.push_back(name);
    ++col;
  }
  for (const auto& name : spec.durbin) {
    d.Z.col(col) = w->matrix() * table.column(name);
    d.names.push_back("W_" + name);
    ++col;
  }
  return d;
}

namespace {

// Names of columns beyond the numerical rank, per QR pivoting.
std::vector<std::string> dependent_columns(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                                           const std::vector<std::string>& names) {
  std::vector<std::string> out;
  const auto perm = qr.colsPermutation().indices();
  for (int i = qr.rank(); i < perm.size(); ++i) out.push_back(names[perm[i]]);
  return out;
}

void check_full_rank(const Eigen::MatrixXd& z, const std::vector<std::string>& names,
                     size_t durbin_count) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
  if (qr.rank() == z.cols()) return;
  const auto bad = dependent_columns(qr, names);
  std::string list;
  for (const auto& name : bad) list += (list.empty() ? "" : ", ") + name;
  const bool lag_involved =
      durbin_count > 0 && std::any_of(bad.begin(), bad.end(), [](const std::string& s) {
        return s.rfind("W_", 0) == 0;
      });
  if (lag_involved) {
    throw Error(Err::RankDeficientAfterLag, "lagged columns collinear with design: " + list);
  }
  throw Error(Err::SingularDesign, "design is rank deficient; dependent columns: " + list);
}

double pseudo_r2(const Eigen::VectorXd& fitted, const Eigen::VectorXd& y) {
  const Eigen::VectorXd fz = fitted.array() - fitted.mean();
  const Eigen::VectorXd yz = y.array() - y.mean();
  const double denom = std::sqrt(fz.squaredNorm() * yz.squaredNorm());
  if (denom <= 0.0) return 0.0;
  const double r = fz.dot(yz) / denom;
  return r * r;
}

struct ScalarMax {
  double x = 0.0;
  double value = 0.0;
};

// 100-point grid scan, golden-section refinement between the bracketing
// grid neighbors, then one parabolic polish step.
ScalarMax maximize_scalar(const std::function<double(double)>& f, double lo, double hi) {
  std::vector<double> xs(kGridPoints), vs(kGridPoints);
  int best = 0;
  for (int i = 0; i < kGridPoints; ++i) {
    xs[i] = lo + (hi - lo) * i / (kGridPoints - 1);
    vs[i] = f(xs[i]);
    if (vs[i] > vs[best]) best = i;
  }
  double a = xs[std::max(0, best - 1)];
  double b = xs[std::min(kGridPoints - 1, best + 1)];
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > kScalarTol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  double x = (a + b) / 2.0;
  // Parabolic vertex through (x-h, x, x+h) reduces the leftover linear term.
  const double h = 1e-6 * std::max(1.0, std::fabs(x));
  if (x - h > lo && x + h < hi) {
    const double fm = f(x - h), f0 = f(x), fp = f(x + h);
    const double denom = fp + fm - 2.0 * f0;
    if (denom < 0.0) {
      const double step = 0.5 * h * (fm - fp) / denom;
      if (std::fabs(step) < h) {
        const double cand = x + step;
        if (f(cand) >= f0) x = cand;
      }
    }
  }
  return {x, f(x)};
}

}  // namespace

FitResult fit_ols(const ModelSpec& spec, const AttributeTable& table,
                  const WeightsMatrix* w) {
  if (spec.kind != ModelKind::OLS && spec.kind != ModelKind::SLX) {
    throw Error(Err::FormatError, "fit_ols handles ols and slx only");
  }
  if (spec.kind == ModelKind::SLX && w == nullptr) {
    throw Error(Err::DimensionMismatch, "slx requires a weights matrix");
  }
  DesignMatrix d = build_design(spec, table, w);
  const int n = static_cast<int>(d.Z.rows());
  const int k = static_cast<int>(d.Z.cols());
  if (n <= k) throw Error(Err::SingularDesign, "n <= k");
  check_full_rank(d.Z, d.names, spec.durbin.size());

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(d.Z);
  FitResult fit;
  fit.spec = spec;
  fit.coef_names = d.names;
  fit.coefficients = qr.solve(d.y);
  fit.n = n;
  fit.k = k;
  fit.fitted = d.Z * fit.coefficients;
  fit.residuals = d.y - fit.fitted;
  const double sse = fit.residuals.squaredNorm();
  fit.sigma2 = sse / n;
  fit.loglik = -0.5 * n * (kLn2Pi + std::log(sse / n) + 1.0);

  const double sst = spec.intercept ? (d.y.array() - d.y.mean()).square().sum()
                                    : d.y.squaredNorm();
  const double r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  fit.r2 = 1.0 - (1.0 - r2) * (n - (spec.intercept ? 1.0 : 0.0)) / (n - k);
  fit.r2_kind = "adjusted";

  const Eigen::MatrixXd xtx_inv =
      (d.Z.transpose() * d.Z).ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  if (spec.se_mode == SeMode::Robust) {
    // HC1: sandwich with squared residuals and an n/(n-k) scale.
    const Eigen::MatrixXd meat =
        d.Z.transpose() * fit.residuals.array().square().matrix().asDiagonal() * d.Z;
    fit.vcov = xtx_inv * meat * xtx_inv * (static_cast<double>(n) / (n - k));
  } else {
    fit.vcov = (sse / (n - k)) * xtx_inv;
  }
  fit.vcov = ((fit.vcov + fit.vcov.transpose()) / 2.0).eval();
  fit.param_names = d.names;

  fit.std_errors = fit.vcov.diagonal().array().sqrt();
  fit.t_stats = fit.coefficients.array() / fit.std_errors.array();
  fit.p_values.resize(k);
  for (int i = 0; i < k; ++i) fit.p_values[i] = two_sided_t_p(fit.t_stats[i], n - k);

  fit.design = std::move(d.Z);
  fit.response_values = std::move(d.y);
  fit.weights_fingerprint = w != nullptr ? w->fingerprint() : 0;
  return fit;
}

std::pair<double, double> parameter_interval(const WeightsMatrix& w) {
  if (w.normalization() == Normalization::Spectral) {
    return {-1.0 + kStationaryMargin, 1.0 - kStationaryMargin};
  }
  const auto [lo, hi] = w.stationary_interval();
  const double a = std::isfinite(lo) ? lo + kStationaryMargin : -0.999999;
  const double b = std::isfinite(hi) ? hi - kStationaryMargin : 0.999999;
  return {a, b};
}

double log_det_term(double a, const WeightsMatrix& w) {
  if (a == 0.0) return 0.0;
  const auto [lo, hi] =
      w.normalization() == Normalization::Spectral ? std::make_pair(-1.0, 1.0)
                                                   : w.stationary_interval();
  if (!(a > lo && a < hi)) {
    throw Error(Err::OutOfStationaryRegion, "a=" + std::to_string(a) + " outside (" +
                                                std::to_string(lo) + ", " + std::to_string(hi) +
                                                ")");
  }
  const Eigen::VectorXcd& eigs = w.eigenvalues();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    sum += std::log(std::abs(1.0 - a * eigs[i]));
  }
  return sum;
}

double full_loglik(ModelKind kind, const Eigen::VectorXd& y, const Eigen::MatrixXd& z,
                   const WeightsMatrix& w, const Eigen::VectorXd& delta, double rho,
                   double lambda, double sigma2) {
  const int n = static_cast<int>(y.size());
  if (!kind_has_rho(kind)) rho = 0.0;
  if (!kind_has_lambda(kind)) lambda = 0.0;
  Eigen::VectorXd r = y - z * delta;
  if (rho != 0.0) r -= rho * (w.matrix() * y);
  Eigen::VectorXd u = r;
  if (lambda != 0.0) u -= lambda * (w.matrix() * r);
  double ll = -0.5 * n * (kLn2Pi + std::log(sigma2)) - u.squaredNorm() / (2.0 * sigma2);
  if (rho != 0.0) ll += log_det_term(rho, w);
  if (lambda != 0.0) ll += log_det_term(lambda, w);
  return ll;
}

Eigen::VectorXd per_observation_loglik(ModelKind kind, const Eigen::VectorXd& y,
                                       const Eigen::MatrixXd& z, const WeightsMatrix& w,
                                       const Eigen::VectorXd& delta, double rho,
                                       double lambda, double sigma2) {
  const int n = static_cast<int>(y.size());
  if (!kind_has_rho(kind)) rho = 0.0;
  if (!kind_has_lambda(kind)) lambda = 0.0;
  Eigen::VectorXd r = y - z * delta;
  if (rho != 0.0) r -= rho * (w.matrix() * y);
  Eigen::VectorXd u = r;
  if (lambda != 0.0) u -= lambda * (w.matrix() * r);
  double ld = 0.0;
  if (rho != 0.0) ld += log_det_term(rho, w);
  if (lambda != 0.0) ld += log_det_term(lambda, w);
  return (-0.5 * (kLn2Pi + std::log(sigma2)) + ld / n) -
         u.array().square() / (2.0 * sigma2);
}

namespace {

// Shared state for the concentrated-likelihood searches. All profile
// evaluations reduce to least squares on lambda-filtered data; the rho
// direction is quadratic in the filtered residuals.
class Concentration {
 public:
  Concentration(const Eigen::VectorXd& y, const Eigen::MatrixXd& z, const WeightsMatrix& w,
                bool needs_lambda)
      : y_(y), z_(z), w_(w), n_(static_cast<int>(y.size())) {
    wy_ = w.matrix() * y_;
    if (needs_lambda) {
      wz_ = w.matrix() * z_;
      wwy_ = w.matrix() * wy_;
    }
  }

  // Quadratic coefficients of S(rho) = ||e_O - rho e_L||^2 given lambda.
  struct RhoProfile {
    double a0, a1, a2;
    double lambda_logdet;
    int n;
    double operator()(double rho_logdet, double rho) const {
      const double s = a0 - 2.0 * rho * a1 + rho * rho * a2;
      return -0.5 * n * (kLn2Pi + 1.0) - 0.5 * n * std::log(s / n) + rho_logdet +
             lambda_logdet;
    }
  };

  RhoProfile rho_profile(double lambda) const {
    Eigen::MatrixXd bz = z_;
    Eigen::VectorXd by = y_, bwy = wy_;
    if (lambda != 0.0) {
      bz -= lambda * wz_;
      by -= lambda * (w_.matrix() * y_);
      bwy -= lambda * wwy_;
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(bz);
    const Eigen::VectorXd e_o = by - bz * qr.solve(by);
    const Eigen::VectorXd e_l = bwy - bz * qr.solve(bwy);
    return {e_o.squaredNorm(), e_o.dot(e_l), e_l.squaredNorm(),
            lambda != 0.0 ? log_det_term(lambda, w_) : 0.0, n_};
  }

  // Concentrated log-likelihood over lambda at fixed rho.
  double lambda_value(double lambda, double rho) const {
    Eigen::VectorXd ay = y_;
    if (rho != 0.0) ay -= rho * wy_;
    Eigen::VectorXd target = ay, wtarget = w_.matrix() * ay;
    Eigen::MatrixXd bz = z_;
    if (lambda != 0.0) {
      target -= lambda * wtarget;
      bz -= lambda * wz_;
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(bz);
    const Eigen::VectorXd resid = target - bz * qr.solve(target);
    double ll = -0.5 * n_ * (kLn2Pi + 1.0) - 0.5 * n_ * std::log(resid.squaredNorm() / n_);
    if (rho != 0.0) ll += log_det_term(rho, w_);
    if (lambda != 0.0) ll += log_det_term(lambda, w_);
    return ll;
  }

  // Final assembly at (rho, lambda): GLS coefficients and innovations.
  void assemble(double rho, double lambda, Eigen::VectorXd* delta,
                Eigen::VectorXd* innovations) const {
    Eigen::MatrixXd bz = z_;
    Eigen::VectorXd by = y_, bwy = wy_;
    if (lambda != 0.0) {
      bz -= lambda * wz_;
      by -= lambda * (w_.matrix() * y_);
      bwy -= lambda * (w_.matrix() * wy_);
    }
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(bz);
    const Eigen::VectorXd target = by - rho * bwy;
    *delta = qr.solve(target);
    *innovations = target - bz * (*delta);
  }

 private:
  const Eigen::VectorXd& y_;
  const Eigen::MatrixXd& z_;
  const WeightsMatrix& w_;
  int n_;
  Eigen::VectorXd wy_, wwy_;
  Eigen::MatrixXd wz_;
};

Eigen::MatrixXd numerical_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                  const Eigen::VectorXd& p, const Eigen::VectorXd& steps) {
  const int q = static_cast<int>(p.size());
  Eigen::MatrixXd h(q, q);
  const double f0 = f(p);
  for (int i = 0; i < q; ++i) {
    Eigen::VectorXd pp = p, pm = p;
    pp[i] += steps[i];
    pm[i] -= steps[i];
    h(i, i) = (f(pp) - 2.0 * f0 + f(pm)) / (steps[i] * steps[i]);
  }
  for (int i = 0; i < q; ++i) {
    for (int j = i + 1; j < q; ++j) {
      Eigen::VectorXd a = p, b = p, c = p, d = p;
      a[i] += steps[i];
      a[j] += steps[j];
      b[i] += steps[i];
      b[j] -= steps[j];
      c[i] -= steps[i];
      c[j] += steps[j];
      d[i] -= steps[i];
      d[j] -= steps[j];
      h(i, j) = h(j, i) = (f(a) - f(b) - f(c) + f(d)) / (4.0 * steps[i] * steps[j]);
    }
  }
  return h;
}

}  // namespace

FitResult fit_spatial(const ModelSpec& spec, const AttributeTable& table,
                      const WeightsMatrix& w) {
  if (!kind_has_rho(spec.kind) && !kind_has_lambda(spec.kind)) {
    throw Error(Err::FormatError, "fit_spatial handles sem/sar/sdem/sdm/sac/gns");
  }
  if (w.normalization() == Normalization::None) {
    throw Error(Err::FormatError, "fit_spatial requires a row- or spectral-normalized W");
  }
  DesignMatrix d = build_design(spec, table, &w);
  const int n = static_cast<int>(d.Z.rows());
  const int k = static_cast<int>(d.Z.cols());
  if (n <= k) throw Error(Err::SingularDesign, "n <= k");
  check_full_rank(d.Z, d.names, spec.durbin.size());

  const auto [lo, hi] = parameter_interval(w);
  const bool has_rho = kind_has_rho(spec.kind);
  const bool has_lambda = kind_has_lambda(spec.kind);
  Concentration conc(d.y, d.Z, w, has_lambda);

  double rho = 0.0, lambda = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;

  auto maximize_rho = [&](double at_lambda) {
    const auto profile = conc.rho_profile(at_lambda);
    return maximize_scalar(
        [&](double r) { return profile(log_det_term(r, w), r); }, lo, hi);
  };
  auto maximize_lambda = [&](double at_rho) {
    return maximize_scalar([&](double l) { return conc.lambda_value(l, at_rho); }, lo, hi);
  };

  if (has_rho && !has_lambda) {
    rho = maximize_rho(0.0).x;
    iterations = 1;
  } else if (has_lambda && !has_rho) {
    lambda = maximize_lambda(0.0).x;
    iterations = 1;
  } else {
    warnings.push_back(
        "sac/gns split the spatial signal across rho and lambda; the pair is "
        "weakly identified and estimates can be unstable");
    // Alternate exact line maximizations. Both starting orders are run (the
    // rho-first path passes through the SDM/SAR optimum, the lambda-first
    // path through the SDEM/SEM optimum) and the better endpoint wins.
    auto alternate = [&](bool rho_first, double* rho_out, double* lambda_out) {
      double r = 0.0, l = 0.0;
      if (!rho_first) l = maximize_lambda(0.0).x;
      for (int it = 0; it < kMaxOuterIterations; ++it) {
        ++iterations;
        const double r_new = maximize_rho(l).x;
        const double l_new = maximize_lambda(r_new).x;
        const double shift = std::fabs(r_new - r) + std::fabs(l_new - l);
        r = r_new;
        l = l_new;
        if (shift < kOuterTol) {
          *rho_out = r;
          *lambda_out = l;
          return true;
        }
      }
      *rho_out = r;
      *lambda_out = l;
      return false;
    };
    double rho_a, lambda_a, rho_b, lambda_b;
    const bool conv_a = alternate(true, &rho_a, &lambda_a);
    const bool conv_b = alternate(false, &rho_b, &lambda_b);
    const double ll_a = conc.lambda_value(lambda_a, rho_a);
    const double ll_b = conc.lambda_value(lambda_b, rho_b);
    const bool use_a = ll_a >= ll_b;
    rho = use_a ? rho_a : rho_b;
    lambda = use_a ? lambda_a : lambda_b;
    if (!(use_a ? conv_a : conv_b)) {
      throw Error(Err::NonConvergence,
                  "alternating concentration exhausted " +
                      std::to_string(kMaxOuterIterations) + " iterations; last iterate rho=" +
                      std::to_string(rho) + ", lambda=" + std::to_string(lambda));
    }
  }

  FitResult fit;
  fit.spec = spec;
  fit.coef_names = d.names;
  fit.n = n;
  fit.k = k;
  fit.has_rho = has_rho;
  fit.has_lambda = has_lambda;
  fit.rho = has_rho ? rho : 0.0;
  fit.lambda = has_lambda ? lambda : 0.0;
  fit.iterations = iterations;
  fit.warnings = warnings;

  Eigen::VectorXd delta, innovations;
  conc.assemble(fit.rho, fit.lambda, &delta, &innovations);
  fit.coefficients = delta;
  fit.residuals = innovations;
  fit.sigma2 = innovations.squaredNorm() / n;
  fit.loglik = full_loglik(spec.kind, d.y, d.Z, w, delta, fit.rho, fit.lambda, fit.sigma2);

  // Reduced-form predictor.
  if (fit.rho != 0.0) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - fit.rho * w.dense();
    fit.fitted = a.partialPivLu().solve((d.Z * delta).eval());
  } else {
    fit.fitted = d.Z * delta;
  }
  fit.r2 = pseudo_r2(fit.fitted, d.y);
  fit.r2_kind = "pseudo";

  // Parameter vector for the covariance: delta, (rho), (lambda), sigma2.
  fit.param_names = d.names;
  if (has_rho) fit.param_names.push_back("rho");
  if (has_lambda) fit.param_names.push_back("lambda");
  fit.param_names.push_back("sigma2");
  const int q = static_cast<int>(fit.param_names.size());
  Eigen::VectorXd params(q);
  params.head(k) = delta;
  int idx = k;
  if (has_rho) params[idx++] = fit.rho;
  if (has_lambda) params[idx++] = fit.lambda;
  params[idx] = fit.sigma2;

  auto unpack = [&](const Eigen::VectorXd& p, Eigen::VectorXd* dd, double* r, double* l,
                    double* s2) {
    *dd = p.head(k);
    int at = k;
    *r = has_rho ? p[at++] : 0.0;
    *l = has_lambda ? p[at++] : 0.0;
    *s2 = p[at];
  };
  auto loglik_at = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd dd;
    double r, l, s2;
    unpack(p, &dd, &r, &l, &s2);
    return full_loglik(spec.kind, d.y, d.Z, w, dd, r, l, s2);
  };

  Eigen::VectorXd steps(q);
  for (int i = 0; i < q; ++i) {
    steps[i] = 1e-5 * std::max(1.0, std::fabs(params[i]));
    const std::string& name = fit.param_names[i];
    if (name == "rho" || name == "lambda") {
      steps[i] = std::min(steps[i], 0.45 * std::min(params[i] - lo, hi - params[i]));
    } else if (name == "sigma2") {
      steps[i] = std::min(steps[i], 0.45 * params[i]);
    }
    steps[i] = std::max(steps[i], 1e-12);
  }

  const Eigen::MatrixXd hessian = numerical_hessian(loglik_at, params, steps);
  Eigen::MatrixXd bread = (-hessian).fullPivLu().solve(Eigen::MatrixXd::Identity(q, q));
  bread = ((bread + bread.transpose()) / 2.0).eval();

  if (spec.se_mode == SeMode::Robust) {
    // Outer-product meat from per-observation numerical scores.
    Eigen::MatrixXd scores(n, q);
    for (int i = 0; i < q; ++i) {
      Eigen::VectorXd pp = params, pm = params;
      pp[i] += steps[i];
      pm[i] -= steps[i];
      Eigen::VectorXd dd;
      double r, l, s2;
      unpack(pp, &dd, &r, &l, &s2);
      const Eigen::VectorXd up = per_observation_loglik(spec.kind, d.y, d.Z, w, dd, r, l, s2);
      unpack(pm, &dd, &r, &l, &s2);
      const Eigen::VectorXd um = per_observation_loglik(spec.kind, d.y, d.Z, w, dd, r, l, s2);
      scores.col(i) = (up - um) / (2.0 * steps[i]);
    }
    const Eigen::MatrixXd meat = scores.transpose() * scores;
    fit.vcov = bread * meat * bread;
  } else {
    fit.vcov = bread;
  }
  fit.vcov = ((fit.vcov + fit.vcov.transpose()) / 2.0).eval();

  const int reported = k + (has_rho ? 1 : 0) + (has_lambda ? 1 : 0);
  fit.std_errors.resize(reported);
  fit.t_stats.resize(reported);
  fit.p_values.resize(reported);
  for (int i = 0; i < reported; ++i) {
    const double v = fit.vcov(i, i);
    fit.std_errors[i] = v > 0.0 ? std::sqrt(v) : std::numeric_limits<double>::quiet_NaN();
    fit.t_stats[i] = params[i] / fit.std_errors[i];
    fit.p_values[i] = two_sided_z_p(fit.t_stats[i]);
  }

  fit.design = std::move(d.Z);
  fit.response_values = std::move(d.y);
  fit.weights_fingerprint = w.fingerprint();
  return fit;
}

}  // namespace spatialspill
