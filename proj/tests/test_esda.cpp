#include <doctest.h>

#include <cmath>

#include "spatialspill/dgp.hpp"
#include "spatialspill/error.hpp"
#include "spatialspill/esda.hpp"
#include "spatialspill/estimators.hpp"
#include "spatialspill/numeric.hpp"

using namespace spatialspill;

namespace {

WeightsMatrix row_path3() {
  NeighborGraph g;
  g.region_ids = {"A", "B", "C"};
  g.adjacency = {{1}, {0, 2}, {1}};
  return normalize(g, Normalization::Row);
}

AttributeTable table_from(const std::vector<std::string>& names, const Eigen::MatrixXd& values) {
  AttributeTable t;
  t.columns = names;
  t.values = values;
  for (int i = 0; i < values.rows(); ++i) t.region_ids.push_back("r" + std::to_string(i));
  return t;
}

}  // namespace

TEST_CASE("describe: perfect linearity and symmetric data") {
  Eigen::MatrixXd values(3, 2);
  values << 1, 2, 2, 4, 3, 6;
  const auto t = table_from({"x", "y"}, values);
  const auto report = describe(t, {"x", "y"});
  CHECK(report.correlation(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(report.corr_p(0, 1) == doctest::Approx(0.0));
  CHECK(std::fabs(report.variables[0].skewness) <= 1e-12);
  CHECK(report.variables[0].mean == doctest::Approx(2.0));
  CHECK(report.variables[0].sd == doctest::Approx(1.0));
}

TEST_CASE("describe: skewness of any symmetric sample is ~0") {
  Eigen::MatrixXd values(6, 1);
  values << -3, -1, -0.5, 0.5, 1, 3;
  const auto t = table_from({"v"}, values);
  CHECK(std::fabs(describe(t, {"v"}).variables[0].skewness) <= 1e-12);
}

TEST_CASE("describe: Welch t on identical groups is 0") {
  Eigen::MatrixXd values(6, 2);
  values << 1, 0, 2, 0, 3, 0, 1, 1, 2, 1, 3, 1;
  const auto t = table_from({"v", "g"}, values);
  const auto report = describe(t, {"v"}, "g");
  CHECK(report.variables[0].welch_t == doctest::Approx(0.0));
  CHECK(report.variables[0].mean_group1 == report.variables[0].mean_group0);
}

TEST_CASE("describe: Welch contrast against a hand-computed example") {
  // group0 = {1,2,3}, group1 = {2,3,4}: t = 1/sqrt(2/3), df = 4.
  Eigen::MatrixXd values(6, 2);
  values << 1, 0, 2, 0, 3, 0, 2, 1, 3, 1, 4, 1;
  const auto t = table_from({"v", "g"}, values);
  const auto report = describe(t, {"v"}, "g");
  CHECK(report.variables[0].welch_t == doctest::Approx(1.0 / std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(report.variables[0].welch_df == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(report.variables[0].welch_p ==
        doctest::Approx(two_sided_t_p(1.0 / std::sqrt(2.0 / 3.0), 4.0)));
}

TEST_CASE("describe: constant column is rejected") {
  Eigen::MatrixXd values(3, 1);
  values << 5, 5, 5;
  const auto t = table_from({"c"}, values);
  try {
    describe(t, {"c"});
    FAIL("expected ConstantColumn");
  } catch (const Error& e) {
    CHECK(e.code() == Err::ConstantColumn);
  }
}

TEST_CASE("describe: correlation matrix is symmetric with unit diagonal") {
  const Eigen::MatrixXd values = random_design(40, 4, 17);
  const auto t = table_from({"a", "b", "c", "d"}, values);
  const auto report = describe(t, {"a", "b", "c", "d"});
  CHECK(report.correlation.diagonal().isApprox(Eigen::VectorXd::Ones(4)));
  CHECK(report.correlation.isApprox(report.correlation.transpose()));
  CHECK(report.correlation.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
  CHECK(significance_stars(0.005) == "***");
  CHECK(significance_stars(0.02) == "**");
  CHECK(significance_stars(0.07) == "*");
  CHECK(significance_stars(0.5) == "");
}

TEST_CASE("global Moran on the 3-path: I = -0.75") {
  const auto w = row_path3();
  Eigen::VectorXd x(3);
  x << 1, 2, 0;
  const auto result = global_moran(x, w);
  CHECK(result.statistic == doctest::Approx(-0.75).epsilon(1e-14));
  CHECK(result.expectation == doctest::Approx(-0.5).epsilon(1e-15));
  // Variance oracle: brute-force S1/S2 sums over the dense matrix.
  const Eigen::MatrixXd d = w.dense();
  const int n = 3;
  double s0 = d.sum(), s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) s1 += 0.5 * std::pow(d(i, j) + d(j, i), 2);
    s2 += std::pow(d.row(i).sum() + d.col(i).sum(), 2);
  }
  const double e = -1.0 / (n - 1);
  const double var = (n * n * s1 - n * s2 + 3 * s0 * s0) / ((n * n - 1.0) * s0 * s0) - e * e;
  CHECK(result.variance == doctest::Approx(var).epsilon(1e-12));
  CHECK(result.z_score == doctest::Approx((-0.75 - e) / std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("global Moran expectation is -1/(n-1) on any W") {
  const auto lattice = make_lattice(5, 5, ContiguityRule::Queen);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const Eigen::VectorXd x = random_design(25, 1, 5).col(0);
  const auto result = global_moran(x, w);
  CHECK(result.expectation == -1.0 / 24.0);
}

TEST_CASE("global Moran rejects constant vectors and length mismatches") {
  const auto w = row_path3();
  CHECK_THROWS_AS(global_moran(Eigen::VectorXd::Constant(3, 2.0), w), Error);
  CHECK_THROWS_AS(global_moran(Eigen::VectorXd::Ones(4), w), Error);
}

TEST_CASE("Moran permutation null mean and pseudo-p bounds") {
  const auto lattice = make_lattice(6, 6, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const Eigen::VectorXd x = random_design(36, 1, 12).col(0);
  const int perms = 999;
  const auto result = global_moran(x, w, perms, 2024);
  REQUIRE(static_cast<int>(result.permuted.size()) == perms);
  double mean = 0.0;
  for (double v : result.permuted) mean += v;
  mean /= perms;
  double sd = 0.0;
  for (double v : result.permuted) sd += (v - mean) * (v - mean);
  sd = std::sqrt(sd / (perms - 1));
  CHECK(std::fabs(mean - result.expectation) <= 3.0 * sd / std::sqrt(static_cast<double>(perms)));
  CHECK(result.pseudo_p >= 1.0 / (perms + 1.0));
  CHECK(result.pseudo_p <= 1.0);
}

TEST_CASE("Moran permutations are deterministic in the seed and thread count") {
  const auto lattice = make_lattice(4, 4, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const Eigen::VectorXd x = random_design(16, 1, 3).col(0);
  const auto a = global_moran(x, w, 199, 7, 1);
  const auto b = global_moran(x, w, 199, 7, 4);
  CHECK(a.permuted == b.permuted);
  CHECK(a.pseudo_p == b.pseudo_p);
}

namespace {

struct LmOracle {
  double lm_error, lm_lag, rlm_error, rlm_lag;
};

// Second implementation of the score formulas, dense and by the book.
LmOracle lm_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                   const Eigen::MatrixXd& w) {
  const int n = static_cast<int>(y.size());
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  const Eigen::VectorXd b = xtx_inv * x.transpose() * y;
  const Eigen::VectorXd e = y - x * b;
  const double s2 = e.squaredNorm() / n;
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - x * xtx_inv * x.transpose();
  const double t = (w.transpose() * w + w * w).trace();
  const double d_err = e.dot(w * e) / s2;
  const double d_lag = e.dot(w * y) / s2;
  const Eigen::VectorXd wxb = w * (x * b);
  const double dd = wxb.dot(m * wxb) / s2;
  LmOracle o;
  o.lm_error = d_err * d_err / t;
  o.lm_lag = d_lag * d_lag / (dd + t);
  o.rlm_lag = std::pow(d_lag - d_err, 2) / dd;
  const double shrink = t / (dd + t);
  o.rlm_error = std::pow(d_err - shrink * d_lag, 2) / (t * (1.0 - shrink));
  return o;
}

}  // namespace

TEST_CASE("LM diagnostics match an independent textbook oracle on n=50 fixtures") {
  const auto lattice = make_lattice(5, 10, ContiguityRule::Queen);
  const auto w = normalize(lattice.graph, Normalization::Row);
  for (uint64_t seed : {1u, 2u, 3u}) {
    const Eigen::MatrixXd x = random_design(50, 3, seed);
    auto rng = substream(seed, 77);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) y[i] = 1.0 + x(i, 0) - 0.5 * x(i, 1) + standard_normal(rng);

    AttributeTable t = table_from({"x1", "x2", "x3"}, x);
    t.columns.push_back("y");
    t.values.conservativeResize(50, 4);
    t.values.col(3) = y;

    ModelSpec spec;
    spec.kind = ModelKind::OLS;
    spec.response = "y";
    spec.regressors = {"x1", "x2", "x3"};
    const auto fit = fit_ols(spec, t);
    const auto report = lm_diagnostics(fit, w);

    const auto oracle = lm_oracle(fit.design, y, w.dense());
    CHECK(report.lm_error == doctest::Approx(oracle.lm_error).epsilon(1e-8));
    CHECK(report.lm_lag == doctest::Approx(oracle.lm_lag).epsilon(1e-8));
    CHECK(report.robust_lm_error == doctest::Approx(oracle.rlm_error).epsilon(1e-8));
    CHECK(report.robust_lm_lag == doctest::Approx(oracle.rlm_lag).epsilon(1e-8));
    CHECK(report.lm_error >= 0.0);
    CHECK(report.lm_lag >= 0.0);
    CHECK(report.robust_lm_error >= 0.0);
    CHECK(report.robust_lm_lag >= 0.0);
    CHECK(report.lm_error_p == doctest::Approx(chi2_sf1(report.lm_error)));
  }
}

TEST_CASE("LM diagnostics are invariant to affine rescaling of y") {
  const auto lattice = make_lattice(6, 8, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const int n = 48;
  const Eigen::MatrixXd x = random_design(n, 2, 21);
  auto rng = substream(21, 5);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = 2.0 + x(i, 0) + 0.3 * x(i, 1) + standard_normal(rng);

  auto fit_for = [&](const Eigen::VectorXd& resp) {
    AttributeTable t = table_from({"x1", "x2"}, x);
    t.columns.push_back("y");
    t.values.conservativeResize(n, 3);
    t.values.col(2) = resp;
    ModelSpec spec;
    spec.kind = ModelKind::OLS;
    spec.response = "y";
    spec.regressors = {"x1", "x2"};
    return fit_ols(spec, t);
  };

  const auto base = lm_diagnostics(fit_for(y), w);
  const auto scaled = lm_diagnostics(fit_for((-2.5 * y).array() + 7.0), w);
  CHECK(scaled.lm_error == doctest::Approx(base.lm_error).epsilon(1e-8));
  CHECK(scaled.lm_lag == doctest::Approx(base.lm_lag).epsilon(1e-8));
  CHECK(scaled.robust_lm_error == doctest::Approx(base.robust_lm_error).epsilon(1e-8));
  CHECK(scaled.robust_lm_lag == doctest::Approx(base.robust_lm_lag).epsilon(1e-8));
}

TEST_CASE("LISA: 4x4 checkerboard is all-negative with HL/LH quadrants") {
  const auto lattice = make_lattice(4, 4, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  Eigen::VectorXd x(16);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) x[r * 4 + c] = ((r + c) % 2 == 0) ? 1.0 : -1.0;
  }
  const auto result = local_moran(x, w, 199, 0.05, 31);
  // Brute-force oracle on the 16-cell lattice.
  const Eigen::VectorXd z = x.array() - x.mean();
  const double m2 = z.squaredNorm() / 16;
  const Eigen::VectorXd lag = w.matrix() * z;
  for (int i = 0; i < 16; ++i) {
    CHECK(result.rows[i].local_i == doctest::Approx(z[i] * lag[i] / m2).epsilon(1e-12));
    CHECK(result.rows[i].local_i < 0.0);
    const bool mixed = result.rows[i].quadrant == Quadrant::HL ||
                       result.rows[i].quadrant == Quadrant::LH;
    CHECK(mixed);
  }
}

TEST_CASE("LISA: two homogeneous blocks label interiors HH and LL") {
  const auto lattice = make_lattice(4, 4, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  Eigen::VectorXd x(16);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) x[r * 4 + c] = c < 2 ? 10.0 : 0.0;
  }
  const auto result = local_moran(x, w, 199, 0.05, 5);
  for (int r = 1; r <= 2; ++r) {
    CHECK(result.rows[r * 4 + 1].quadrant == Quadrant::HH);
    CHECK(result.rows[r * 4 + 2].quadrant == Quadrant::LL);
  }
}

TEST_CASE("LISA sums to the global statistic through S0") {
  const auto lattice = make_lattice(5, 5, ContiguityRule::Queen);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const Eigen::VectorXd x = random_design(25, 1, 8).col(0);
  const auto lisa = local_moran(x, w, 99, 0.05, 1);
  const auto global = global_moran(x, w);
  double sum = 0.0;
  for (const auto& row : lisa.rows) sum += row.local_i;
  CHECK(sum / lisa.s0 == doctest::Approx(global.statistic).epsilon(1e-9));
}

TEST_CASE("LISA islands: undefined quadrant, pseudo_p = 1") {
  NeighborGraph g;
  g.region_ids = {"A", "B", "C", "D"};
  g.adjacency = {{1}, {0}, {}, {}};
  const auto w = normalize(g, Normalization::Row);
  Eigen::VectorXd x(4);
  x << 1, 2, 3, 4;
  const auto result = local_moran(x, w, 99, 0.05, 9);
  CHECK(result.rows[2].quadrant == Quadrant::Undefined);
  CHECK(result.rows[2].pseudo_p == 1.0);
  CHECK_FALSE(result.rows[2].significant);
  CHECK(result.rows[2].local_i == 0.0);
}

TEST_CASE("LISA pseudo-p values are deterministic and within bounds") {
  const auto lattice = make_lattice(4, 4, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const Eigen::VectorXd x = random_design(16, 1, 77).col(0);
  const auto a = local_moran(x, w, 99, 0.05, 13, 1);
  const auto b = local_moran(x, w, 99, 0.05, 13, 3);
  for (int i = 0; i < 16; ++i) {
    CHECK(a.rows[i].pseudo_p == b.rows[i].pseudo_p);
    CHECK(a.rows[i].pseudo_p >= 2.0 / 100.0);
    CHECK(a.rows[i].pseudo_p <= 1.0);
  }
  CHECK_THROWS_AS(local_moran(x, w, 50, 0.05, 1), Error);
}
