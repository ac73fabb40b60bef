#include "spatialspill/esda.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "spatialspill/error.hpp"
#include "spatialspill/estimators.hpp"
#include "spatialspill/numeric.hpp"

namespace spatialspill {

std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

const char* quadrant_name(Quadrant q) noexcept {
  switch (q) {
    case Quadrant::HH: return "HH";
    case Quadrant::LL: return "LL";
    case Quadrant::HL: return "HL";
    case Quadrant::LH: return "LH";
    case Quadrant::Undefined: return "undefined";
  }
  return "undefined";
}

namespace {

double vector_mean(const Eigen::VectorXd& v) { return v.mean(); }

double sample_sd(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  if (n < 2) return 0.0;
  const Eigen::VectorXd z = v.array() - v.mean();
  return std::sqrt(z.squaredNorm() / (n - 1));
}

double moment_skewness(const Eigen::VectorXd& v, const std::string& name) {
  const Eigen::ArrayXd z = v.array() - v.mean();
  const double m2 = z.square().mean();
  if (m2 <= 0.0) throw Error(Err::ConstantColumn, "column '" + name + "' has zero variance");
  const double m3 = z.cube().mean();
  return m3 / std::pow(m2, 1.5);
}

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd za = a.array() - a.mean();
  const Eigen::VectorXd zb = b.array() - b.mean();
  const double denom = std::sqrt(za.squaredNorm() * zb.squaredNorm());
  return za.dot(zb) / denom;
}

}  // namespace

DescriptiveReport describe(const AttributeTable& table,
                           const std::vector<std::string>& variables,
                           const std::string& group_by) {
  if (variables.empty()) throw Error(Err::MissingColumn, "no variables requested");
  const int n = table.n_rows();

  Eigen::VectorXd group;
  std::vector<int> g1, g0;
  if (!group_by.empty()) {
    group = table.column(group_by);
    for (int i = 0; i < n; ++i) {
      if (group[i] == 1.0) {
        g1.push_back(i);
      } else if (group[i] == 0.0) {
        g0.push_back(i);
      } else {
        throw Error(Err::FormatError, "group column '" + group_by + "' is not 0/1 at row " +
                                          std::to_string(i + 1));
      }
    }
  }

  DescriptiveReport report;
  report.n = n;
  for (const auto& name : variables) {
    const Eigen::VectorXd v = table.column(name);
    VariableStats s;
    s.name = name;
    s.mean = vector_mean(v);
    s.sd = sample_sd(v);
    s.skewness = moment_skewness(v, name);

    if (!group_by.empty()) {
      s.has_groups = true;
      Eigen::VectorXd v1(g1.size()), v0(g0.size());
      for (size_t i = 0; i < g1.size(); ++i) v1[static_cast<Eigen::Index>(i)] = v[g1[i]];
      for (size_t i = 0; i < g0.size(); ++i) v0[static_cast<Eigen::Index>(i)] = v[g0[i]];
      s.mean_group1 = v1.size() ? vector_mean(v1) : 0.0;
      s.mean_group0 = v0.size() ? vector_mean(v0) : 0.0;
      const double n1 = static_cast<double>(v1.size()), n0 = static_cast<double>(v0.size());
      const double var1 = n1 > 1 ? sample_sd(v1) * sample_sd(v1) : 0.0;
      const double var0 = n0 > 1 ? sample_sd(v0) * sample_sd(v0) : 0.0;
      const double se2 = var1 / n1 + var0 / n0;
      if (se2 > 0.0) {
        s.welch_t = (s.mean_group1 - s.mean_group0) / std::sqrt(se2);
        const double num = se2 * se2;
        const double den = (var1 / n1) * (var1 / n1) / (n1 - 1) +
                           (var0 / n0) * (var0 / n0) / (n0 - 1);
        s.welch_df = den > 0.0 ? num / den : n1 + n0 - 2;
        s.welch_p = two_sided_t_p(s.welch_t, s.welch_df);
      } else {
        s.welch_t = 0.0;
        s.welch_df = n1 + n0 - 2;
        s.welch_p = 1.0;
      }
    }
    report.variables.push_back(std::move(s));
  }

  const int k = static_cast<int>(variables.size());
  report.corr_names = variables;
  report.correlation = Eigen::MatrixXd::Identity(k, k);
  report.corr_p = Eigen::MatrixXd::Zero(k, k);
  for (int a = 0; a < k; ++a) {
    const Eigen::VectorXd va = table.column(variables[a]);
    for (int b = a + 1; b < k; ++b) {
      const Eigen::VectorXd vb = table.column(variables[b]);
      const double r = pearson(va, vb);
      double p = 0.0;
      if (std::fabs(r) < 1.0) {
        const double t = r * std::sqrt((n - 2) / (1.0 - r * r));
        p = two_sided_t_p(t, n - 2);
      }
      report.correlation(a, b) = report.correlation(b, a) = r;
      report.corr_p(a, b) = report.corr_p(b, a) = p;
    }
  }
  return report;
}

namespace {

struct MoranTerms {
  Eigen::VectorXd z;
  double s0 = 0.0;
  double zz = 0.0;  // z'z
};

MoranTerms moran_terms(const Eigen::VectorXd& x, const WeightsMatrix& w) {
  if (x.size() != w.n()) {
    throw Error(Err::LengthMismatch, "vector length " + std::to_string(x.size()) +
                                         " differs from weights dimension " +
                                         std::to_string(w.n()));
  }
  MoranTerms t;
  t.z = x.array() - x.mean();
  t.zz = t.z.squaredNorm();
  if (t.zz <= 0.0) throw Error(Err::ConstantVector, "input vector is constant");
  t.s0 = w.matrix().sum();
  if (t.s0 <= 0.0) throw Error(Err::ZeroMatrix, "weights matrix has no entries");
  return t;
}

}  // namespace

MoranResult global_moran(const Eigen::VectorXd& x, const WeightsMatrix& w,
                         int permutations, uint64_t seed, int threads) {
  const auto t = moran_terms(x, w);
  const int n = w.n();
  const double scale = n / (t.s0 * t.zz);

  MoranResult result;
  result.n_used = n;
  result.statistic = scale * t.z.dot(w.matrix() * t.z);
  result.expectation = -1.0 / (n - 1);

  // Normality moments (Cliff-Ord): S1 = 1/2 sum (w_ij + w_ji)^2,
  // S2 = sum_i (row_i + col_i)^2.
  const auto& m = w.matrix();
  double s1 = 0.0;
  Eigen::SparseMatrix<double> cm(m), cmt;
  cmt = Eigen::SparseMatrix<double>(cm.transpose());
  const Eigen::SparseMatrix<double> sym = cm + cmt;
  for (int j = 0; j < sym.outerSize(); ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(sym, j); it; ++it) {
      s1 += it.value() * it.value();
    }
  }
  s1 /= 2.0;
  const Eigen::VectorXd rows = w.row_sums();
  const Eigen::VectorXd cols = Eigen::RowVectorXd::Ones(n) * m;
  const double s2 = (rows + cols).array().square().sum();
  const double nn = static_cast<double>(n);
  const double var = (nn * nn * s1 - nn * s2 + 3.0 * t.s0 * t.s0) /
                         ((nn * nn - 1.0) * t.s0 * t.s0) -
                     result.expectation * result.expectation;
  result.variance = var;
  result.z_score = (result.statistic - result.expectation) / std::sqrt(var);
  result.p_value = two_sided_z_p(result.z_score);

  if (permutations > 0) {
    result.permutations = permutations;
    result.permuted.resize(permutations);
    const Eigen::VectorXd& z = t.z;
    parallel_for(permutations, threads, [&](int p) {
      auto rng = substream(seed, static_cast<uint64_t>(p));
      std::vector<int> idx(n);
      for (int i = 0; i < n; ++i) idx[i] = i;
      fisher_yates(idx, rng);
      Eigen::VectorXd zp(n);
      for (int i = 0; i < n; ++i) zp[i] = z[idx[i]];
      result.permuted[p] = scale * zp.dot(m * zp);
    });
    long ge = 0, le = 0;
    for (double v : result.permuted) {
      if (v >= result.statistic) ++ge;
      if (v <= result.statistic) ++le;
    }
    result.pseudo_p =
        std::min(1.0, 2.0 * (std::min(ge, le) + 1.0) / (permutations + 1.0));
  }
  return result;
}

DiagnosticsReport lm_diagnostics(const FitResult& ols, const WeightsMatrix& w) {
  if (ols.design.rows() == 0) {
    throw Error(Err::FormatError, "fit result carries no design matrix");
  }
  const int n = static_cast<int>(ols.design.rows());
  const int k = static_cast<int>(ols.design.cols());
  if (n != w.n()) {
    throw Error(Err::LengthMismatch, "fit has n=" + std::to_string(n) +
                                         ", weights dimension is " + std::to_string(w.n()));
  }
  const Eigen::MatrixXd& x = ols.design;
  const Eigen::VectorXd& e = ols.residuals;
  const Eigen::VectorXd& y = ols.response_values;
  const double ee = e.squaredNorm();
  const double sigma2 = ee / n;
  const auto& m = w.matrix();
  const double s0 = m.sum();

  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::LDLT<Eigen::MatrixXd> xtx_solver(xtx);
  if (xtx_solver.info() != Eigen::Success) {
    throw Error(Err::SingularDesign, "X'X is singular");
  }
  auto annihilate = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return v - x * xtx_solver.solve(x.transpose() * v);
  };

  DiagnosticsReport report;

  // Residual Moran with Cliff-Ord regression moments.
  const Eigen::VectorXd we = m * e;
  report.moran_i = (n / s0) * e.dot(we) / ee;
  const Eigen::MatrixXd wd = w.dense();
  const Eigen::MatrixXd mw = wd - x * xtx_solver.solve(x.transpose() * wd);
  const double tr_mw = mw.trace();
  const double e_i = (n / s0) * tr_mw / (n - k);
  const double tr_mwmwt = (mw.array() * mw.array()).sum();
  const double tr_mwmw = (mw.array() * mw.transpose().array()).sum();
  const double d = static_cast<double>(n - k) * (n - k + 2);
  const double var_i =
      (n / s0) * (n / s0) * (tr_mwmwt + tr_mwmw + tr_mw * tr_mw) / d - e_i * e_i;
  report.moran_z = (report.moran_i - e_i) / std::sqrt(var_i);
  report.moran_p = two_sided_z_p(report.moran_z);

  // Score statistics.
  double trace_wtw = 0.0, trace_ww = 0.0;
  const Eigen::SparseMatrix<double> cm(m);
  const Eigen::SparseMatrix<double> cmt = Eigen::SparseMatrix<double>(cm.transpose());
  for (int j = 0; j < cm.outerSize(); ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(cm, j); it; ++it) {
      trace_wtw += it.value() * it.value();
    }
  }
  {
    // tr(WW) = sum_ij w_ij w_ji
    for (int j = 0; j < cm.outerSize(); ++j) {
      Eigen::SparseMatrix<double>::InnerIterator a(cm, j), b(cmt, j);
      while (a && b) {
        if (a.row() == b.row()) {
          trace_ww += a.value() * b.value();
          ++a;
          ++b;
        } else if (a.row() < b.row()) {
          ++a;
        } else {
          ++b;
        }
      }
    }
  }
  const double big_t = trace_wtw + trace_ww;

  const double d_err = e.dot(we) / sigma2;
  const double d_lag = e.dot(m * y) / sigma2;
  const Eigen::VectorXd wxb = m * ols.fitted;
  const Eigen::VectorXd mwxb = annihilate(wxb);
  const double big_d = wxb.dot(mwxb) / sigma2;

  report.lm_error = d_err * d_err / big_t;
  report.lm_error_p = chi2_sf1(report.lm_error);
  report.lm_lag = d_lag * d_lag / (big_d + big_t);
  report.lm_lag_p = chi2_sf1(report.lm_lag);

  const double shrink = big_t / (big_d + big_t);
  report.robust_lm_error =
      std::pow(d_err - shrink * d_lag, 2) / (big_t * (1.0 - shrink));
  report.robust_lm_error_p = chi2_sf1(report.robust_lm_error);
  report.robust_lm_lag = std::pow(d_lag - d_err, 2) / big_d;
  report.robust_lm_lag_p = chi2_sf1(report.robust_lm_lag);
  return report;
}

LisaResult local_moran(const Eigen::VectorXd& x, const WeightsMatrix& w,
                       int permutations, double alpha, uint64_t seed, int threads) {
  if (permutations < 99) {
    throw Error(Err::FormatError, "local Moran needs at least 99 permutations");
  }
  const auto t = moran_terms(x, w);
  const int n = w.n();
  const double m2 = t.zz / n;
  const Eigen::VectorXd lag = w.matrix() * t.z;

  LisaResult result;
  result.alpha = alpha;
  result.permutations = permutations;
  result.s0 = t.s0;
  result.global_i = (n / (t.s0 * t.zz)) * t.z.dot(lag);
  result.rows.resize(n);

  const auto& m = w.matrix();
  parallel_for(n, threads, [&](int i) {
    LisaRow& row = result.rows[i];
    row.local_i = t.z[i] * lag[i] / m2;

    const int begin = m.outerIndexPtr()[i], end = m.outerIndexPtr()[i + 1];
    const int degree = end - begin;
    if (degree == 0) {
      row.quadrant = Quadrant::Undefined;
      row.pseudo_p = 1.0;
      row.significant = false;
      return;
    }
    row.quadrant = t.z[i] > 0.0 ? (lag[i] > 0.0 ? Quadrant::HH : Quadrant::HL)
                                : (lag[i] > 0.0 ? Quadrant::LH : Quadrant::LL);

    // Conditional permutations: draw `degree` distinct values from the other
    // n-1 observations and recompute the lag with this region's weights.
    std::vector<double> others;
    others.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j != i) others.push_back(t.z[j]);
    }
    std::vector<double> wgt(degree);
    for (int s = begin; s < end; ++s) wgt[s - begin] = m.valuePtr()[s];

    auto rng = substream(seed, static_cast<uint64_t>(i));
    std::vector<int> pool(others.size());
    for (size_t j = 0; j < pool.size(); ++j) pool[j] = static_cast<int>(j);
    long ge = 0, le = 0;
    for (int p = 0; p < permutations; ++p) {
      // Partial Fisher-Yates: after `degree` swaps the prefix is a uniform
      // sample without replacement.
      for (int s = 0; s < degree; ++s) {
        const uint64_t j = s + bounded_rand(rng, pool.size() - s);
        std::swap(pool[s], pool[j]);
      }
      double perm_lag = 0.0;
      for (int s = 0; s < degree; ++s) perm_lag += wgt[s] * others[pool[s]];
      const double perm_i = t.z[i] * perm_lag / m2;
      if (perm_i >= row.local_i) ++ge;
      if (perm_i <= row.local_i) ++le;
    }
    row.pseudo_p = std::min(1.0, 2.0 * (std::min(ge, le) + 1.0) / (permutations + 1.0));
    row.significant = row.pseudo_p <= alpha;
  });
  return result;
}

}  // namespace spatialspill
