#include "spatialspill/effects.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "spatialspill/error.hpp"
#include "spatialspill/numeric.hpp"

namespace spatialspill {

const EffectsRow& EffectsTable::row(const std::string& regressor) const {
  for (const auto& r : rows) {
    if (r.regressor == regressor) return r;
  }
  throw Error(Err::MissingColumn, "no effects row for '" + regressor + "'");
}

namespace {

struct EffectTriple {
  double direct, indirect, total;
};

// Averaged diagonal and row-sum functionals of (I - rho W)^{-1} and
// (I - rho W)^{-1} W, shared by every regressor at one parameter draw.
struct InverseStats {
  double mean_diag_v = 1.0;    // mean diag (I - rho W)^{-1}
  double mean_diag_vw = 0.0;   // mean diag (I - rho W)^{-1} W
  double mean_rowsum_v = 1.0;  // mean row sum of the inverse
  double mean_rowsum_vw = 0.0;
};

InverseStats inverse_stats(double rho, const WeightsMatrix& w) {
  const int n = w.n();
  InverseStats s;
  const Eigen::VectorXd w_rowsums = w.row_sums();
  if (rho == 0.0) {
    s.mean_rowsum_vw = w_rowsums.mean();
    return s;
  }
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - rho * w.dense();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::MatrixXd v = lu.inverse();
  s.mean_diag_v = v.trace() / n;
  // diag(V W)_i = sum_j V_ij W_ji
  double diag_vw = 0.0;
  const auto& m = w.matrix();
  for (int r = 0; r < m.outerSize(); ++r) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it) {
      diag_vw += v(it.col(), it.row()) * it.value();
    }
  }
  s.mean_diag_vw = diag_vw / n;
  s.mean_rowsum_v = v.sum() / n;
  s.mean_rowsum_vw = (v * w_rowsums).sum() / n;
  return s;
}

EffectTriple effect_of(const InverseStats& s, double beta_k, double theta_k) {
  EffectTriple e;
  e.direct = beta_k * s.mean_diag_v + theta_k * s.mean_diag_vw;
  e.total = beta_k * s.mean_rowsum_v + theta_k * s.mean_rowsum_vw;
  e.indirect = e.total - e.direct;
  return e;
}

}  // namespace

EffectsTable decompose_effects(const FitResult& fit, const WeightsMatrix& w, int draws,
                               uint64_t seed, int threads) {
  if (fit.n != w.n()) {
    throw Error(Err::DimensionMismatch, "fit has n=" + std::to_string(fit.n) +
                                            ", weights dimension is " + std::to_string(w.n()));
  }
  const auto& regressors = fit.spec.regressors;
  const int nreg = static_cast<int>(regressors.size());

  // Positions of beta_k / theta_k / rho inside the parameter vector.
  std::vector<int> beta_pos(nreg), theta_pos(nreg, -1);
  auto param_index = [&](const std::string& name) {
    const auto it = std::find(fit.param_names.begin(), fit.param_names.end(), name);
    return it == fit.param_names.end() ? -1 : static_cast<int>(it - fit.param_names.begin());
  };
  for (int k = 0; k < nreg; ++k) {
    beta_pos[k] = param_index(regressors[k]);
    if (beta_pos[k] < 0) {
      throw Error(Err::MissingColumn, "regressor '" + regressors[k] + "' not in fit");
    }
    theta_pos[k] = param_index("W_" + regressors[k]);
  }
  const int rho_pos = fit.has_rho ? param_index("rho") : -1;

  Eigen::VectorXd estimates(fit.param_names.size());
  for (size_t i = 0; i < fit.param_names.size(); ++i) {
    const std::string& name = fit.param_names[i];
    if (name == "rho") {
      estimates[static_cast<Eigen::Index>(i)] = fit.rho;
    } else if (name == "lambda") {
      estimates[static_cast<Eigen::Index>(i)] = fit.lambda;
    } else if (name == "sigma2") {
      estimates[static_cast<Eigen::Index>(i)] = fit.sigma2;
    } else {
      estimates[static_cast<Eigen::Index>(i)] = fit.coefficients[fit.coef_index(name)];
    }
  }

  EffectsTable table;
  table.draws = draws;
  table.seed = seed;
  table.rows.resize(nreg);

  const InverseStats point_stats = inverse_stats(fit.rho, w);
  for (int k = 0; k < nreg; ++k) {
    table.rows[k].regressor = regressors[k];
    const double beta_k = estimates[beta_pos[k]];
    const double theta_k = theta_pos[k] >= 0 ? estimates[theta_pos[k]] : 0.0;
    const auto e = effect_of(point_stats, beta_k, theta_k);
    table.rows[k].direct.point = table.rows[k].direct.mean = e.direct;
    table.rows[k].indirect.point = table.rows[k].indirect.mean = e.indirect;
    table.rows[k].total.point = table.rows[k].total.mean = e.total;
  }
  if (draws <= 0) return table;

  // Gaussian draws from N(estimates, vcov); a draw with rho outside the
  // stationary region is rejected and redrawn.
  const int q = static_cast<int>(estimates.size());
  if (fit.vcov.rows() != q || fit.vcov.cols() != q) {
    throw Error(Err::DimensionMismatch, "vcov does not match the parameter vector");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.vcov);
  const Eigen::MatrixXd sqrt_cov =
      eig.eigenvectors() *
      eig.eigenvalues().array().max(0.0).sqrt().matrix().asDiagonal();
  const auto [lo, hi] = parameter_interval(w);

  Eigen::MatrixXd direct_draws(draws, nreg), indirect_draws(draws, nreg),
      total_draws(draws, nreg);
  std::vector<int> rejections(draws, 0);

  parallel_for(draws, threads, [&](int dr) {
    auto rng = substream(seed, static_cast<uint64_t>(dr));
    Eigen::VectorXd z(q), params(q);
    constexpr int kMaxRejections = 10000;
    for (int attempt = 0;; ++attempt) {
      if (attempt > kMaxRejections) {
        throw Error(Err::NonConvergence,
                    "draw " + std::to_string(dr) + " rejected " +
                        std::to_string(kMaxRejections) + " times; rho draws leave (" +
                        std::to_string(lo) + ", " + std::to_string(hi) + ")");
      }
      for (int i = 0; i < q; ++i) z[i] = standard_normal(rng);
      params = estimates + sqrt_cov * z;
      if (rho_pos < 0 || (params[rho_pos] > lo && params[rho_pos] < hi)) break;
      ++rejections[dr];
    }
    const double rho = rho_pos >= 0 ? params[rho_pos] : 0.0;
    const InverseStats stats = inverse_stats(rho, w);
    for (int k = 0; k < nreg; ++k) {
      const double beta_k = params[beta_pos[k]];
      const double theta_k = theta_pos[k] >= 0 ? params[theta_pos[k]] : 0.0;
      const auto e = effect_of(stats, beta_k, theta_k);
      direct_draws(dr, k) = e.direct;
      indirect_draws(dr, k) = e.indirect;
      total_draws(dr, k) = e.total;
    }
  });
  table.rejected_draws = std::accumulate(rejections.begin(), rejections.end(), 0);

  auto summarize = [&](const Eigen::MatrixXd& sample, int k, EffectEstimate* est) {
    const Eigen::VectorXd col = sample.col(k);
    est->mean = col.mean();
    est->sd = draws > 1
                  ? std::sqrt((col.array() - est->mean).square().sum() / (draws - 1))
                  : 0.0;
    est->t = est->sd > 0.0 ? est->mean / est->sd : 0.0;
    est->p = est->sd > 0.0 ? two_sided_z_p(est->t) : 1.0;
  };
  for (int k = 0; k < nreg; ++k) {
    summarize(direct_draws, k, &table.rows[k].direct);
    summarize(indirect_draws, k, &table.rows[k].indirect);
    summarize(total_draws, k, &table.rows[k].total);
  }
  return table;
}

}  // namespace spatialspill
