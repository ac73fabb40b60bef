#include <doctest.h>

#include <Eigen/LU>
#include <cmath>

#include "spatialspill/dgp.hpp"
#include "spatialspill/effects.hpp"
#include "spatialspill/error.hpp"
#include "spatialspill/estimators.hpp"
#include "spatialspill/numeric.hpp"

using namespace spatialspill;

namespace {

// Hand-built fit with pinned parameters; vcov defaults to (tiny) identity.
FitResult synthetic_fit(ModelKind kind, int n, const std::vector<std::string>& regressors,
                        const std::vector<std::string>& durbin, const Eigen::VectorXd& beta,
                        const Eigen::VectorXd& theta, double rho, double lambda = 0.0) {
  FitResult fit;
  fit.spec.kind = kind;
  fit.spec.response = "y";
  fit.spec.regressors = regressors;
  fit.spec.durbin = durbin;
  fit.n = n;
  fit.has_rho = kind_has_rho(kind);
  fit.has_lambda = kind_has_lambda(kind);
  fit.rho = rho;
  fit.lambda = lambda;
  fit.sigma2 = 1.0;
  fit.coef_names.push_back("const");
  for (const auto& r : regressors) fit.coef_names.push_back(r);
  for (const auto& d : durbin) fit.coef_names.push_back("W_" + d);
  fit.k = static_cast<int>(fit.coef_names.size());
  fit.coefficients.resize(fit.k);
  fit.coefficients[0] = 0.0;
  for (int j = 0; j < beta.size(); ++j) fit.coefficients[1 + j] = beta[j];
  for (int j = 0; j < theta.size(); ++j) fit.coefficients[1 + beta.size() + j] = theta[j];
  fit.param_names = fit.coef_names;
  if (fit.has_rho) fit.param_names.push_back("rho");
  if (fit.has_lambda) fit.param_names.push_back("lambda");
  fit.param_names.push_back("sigma2");
  const int q = static_cast<int>(fit.param_names.size());
  fit.vcov = 1e-6 * Eigen::MatrixXd::Identity(q, q);
  return fit;
}

AttributeTable table_of(const std::vector<std::string>& names, const Eigen::MatrixXd& values) {
  AttributeTable t;
  t.columns = names;
  t.values = values;
  for (int i = 0; i < values.rows(); ++i) t.region_ids.push_back("r" + std::to_string(i));
  return t;
}

}  // namespace

TEST_CASE("SLX effects: direct = beta and indirect = theta exactly") {
  const auto lattice = make_lattice(4, 4, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const Eigen::MatrixXd x = random_design(16, 2, 40);
  auto rng = substream(40, 2);
  Eigen::MatrixXd values(16, 3);
  values.leftCols(2) = x;
  for (int i = 0; i < 16; ++i) values(i, 2) = x(i, 0) + standard_normal(rng);
  auto tbl = table_of({"x1", "x2", "y"}, values);

  ModelSpec spec;
  spec.kind = ModelKind::SLX;
  spec.response = "y";
  spec.regressors = {"x1", "x2"};
  spec.durbin = {"x1"};
  const auto fit = fit_ols(spec, tbl, &w);
  const auto effects = decompose_effects(fit, w);

  CHECK(effects.row("x1").direct.point == fit.coef("x1"));
  CHECK(std::fabs(effects.row("x1").indirect.point - fit.coef("W_x1")) <= 1e-12);
  CHECK(effects.row("x2").direct.point == fit.coef("x2"));
  CHECK(effects.row("x2").indirect.point == 0.0);
}

TEST_CASE("SDM 2-cycle closed form: total 1/0.7, direct 1/0.91") {
  NeighborGraph cycle;
  cycle.region_ids = {"A", "B"};
  cycle.adjacency = {{1}, {0}};
  const auto w = normalize(cycle, Normalization::Row);
  const auto fit = synthetic_fit(ModelKind::SDM, 2, {"x1"}, {"x1"},
                                 Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), 0.3);
  const auto effects = decompose_effects(fit, w);
  CHECK(effects.row("x1").total.point == doctest::Approx(1.0 / 0.7).epsilon(1e-10));
  CHECK(effects.row("x1").direct.point == doctest::Approx(1.0 / 0.91).epsilon(1e-10));
  CHECK(effects.row("x1").indirect.point ==
        doctest::Approx(1.0 / 0.7 - 1.0 / 0.91).epsilon(1e-10));
}

TEST_CASE("OLS and SEM effects have zero indirect by construction") {
  const auto lattice = make_lattice(3, 3, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const auto fit = synthetic_fit(ModelKind::SEM, 9, {"x1", "x2"}, {},
                                 Eigen::Vector2d(2.0, -1.0), Eigen::VectorXd(0), 0.0, 0.3);
  const auto effects = decompose_effects(fit, w, 50, 4);
  for (const auto& name : {"x1", "x2"}) {
    CHECK(effects.row(name).indirect.point == 0.0);
    CHECK(effects.row(name).indirect.mean == 0.0);
    CHECK(effects.row(name).indirect.sd == 0.0);
    CHECK(effects.row(name).total.point == effects.row(name).direct.point);
  }
}

TEST_CASE("Neumann series cross-check at |rho| <= 0.5") {
  const auto lattice = make_lattice(4, 5, ContiguityRule::Queen);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const int n = 20;
  const double beta = 1.3, theta = -0.4;
  for (double rho : {0.5, -0.35}) {
    const auto fit =
        synthetic_fit(ModelKind::SDM, n, {"x1"}, {"x1"},
                      Eigen::VectorXd::Constant(1, beta),
                      Eigen::VectorXd::Constant(1, theta), rho);
    const auto effects = decompose_effects(fit, w);

    // Truncated series sum_{m=0..50} rho^m W^m (beta I + theta W).
    const Eigen::MatrixXd wd = w.dense();
    Eigen::MatrixXd series = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
    for (int m = 0; m <= 50; ++m) {
      series += power;
      power = rho * (power * wd);
    }
    const Eigen::MatrixXd s_k = series * (beta * Eigen::MatrixXd::Identity(n, n) + theta * wd);
    const double direct = s_k.trace() / n;
    const double total = s_k.sum() / n;
    CHECK(effects.row("x1").direct.point == doctest::Approx(direct).epsilon(1e-8));
    CHECK(effects.row("x1").total.point == doctest::Approx(total).epsilon(1e-8));
    CHECK(effects.row("x1").indirect.point == doctest::Approx(total - direct).epsilon(1e-8));
  }
}

TEST_CASE("SAR spillovers keep a constant indirect/direct ratio across regressors") {
  const auto lattice = make_lattice(5, 5, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const auto fit = synthetic_fit(ModelKind::SAR, 25, {"x1", "x2", "x3"}, {},
                                 Eigen::Vector3d(1.0, -2.0, 0.25), Eigen::VectorXd(0), 0.45);
  const auto effects = decompose_effects(fit, w);
  const double r1 = effects.row("x1").indirect.point / effects.row("x1").direct.point;
  const double r2 = effects.row("x2").indirect.point / effects.row("x2").direct.point;
  const double r3 = effects.row("x3").indirect.point / effects.row("x3").direct.point;
  CHECK(std::fabs(r1 - r2) <= 1e-9);
  CHECK(std::fabs(r1 - r3) <= 1e-9);
}

TEST_CASE("total = direct + indirect for point estimates and for draw summaries") {
  const auto lattice = make_lattice(4, 4, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  auto fit = synthetic_fit(ModelKind::SDM, 16, {"x1", "x2"}, {"x2"},
                           Eigen::Vector2d(0.8, -1.1), Eigen::VectorXd::Constant(1, 0.3), 0.35);
  fit.vcov *= 100.0;  // make draws spread out
  const auto effects = decompose_effects(fit, w, 200, 11);
  for (const auto& row : effects.rows) {
    CHECK(std::fabs(row.total.point - row.direct.point - row.indirect.point) <= 1e-10);
    CHECK(std::fabs(row.total.mean - row.direct.mean - row.indirect.mean) <= 1e-10);
    CHECK(row.direct.sd > 0.0);
  }
}

TEST_CASE("draws are deterministic and independent of thread count") {
  const auto lattice = make_lattice(4, 4, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  const auto fit = synthetic_fit(ModelKind::SDM, 16, {"x1"}, {"x1"},
                                 Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 0.2),
                                 0.3);
  const auto a = decompose_effects(fit, w, 100, 21, 1);
  const auto b = decompose_effects(fit, w, 100, 21, 4);
  const auto c = decompose_effects(fit, w, 100, 22, 1);
  CHECK(a.row("x1").direct.mean == b.row("x1").direct.mean);
  CHECK(a.row("x1").indirect.sd == b.row("x1").indirect.sd);
  CHECK(a.row("x1").direct.mean != c.row("x1").direct.mean);
}

TEST_CASE("out-of-region rho draws are rejected and counted") {
  NeighborGraph cycle;
  cycle.region_ids = {"A", "B"};
  cycle.adjacency = {{1}, {0}};
  const auto w = normalize(cycle, Normalization::Row);
  auto fit = synthetic_fit(ModelKind::SAR, 2, {"x1"}, {}, Eigen::VectorXd::Ones(1),
                           Eigen::VectorXd(0), 0.9);
  const int rho_pos = 2;  // const, x1, rho, sigma2
  fit.vcov(rho_pos, rho_pos) = 0.25;  // sd 0.5 around 0.9: frequent excursions
  const auto effects = decompose_effects(fit, w, 200, 3);
  CHECK(effects.rejected_draws > 0);
  CHECK(effects.draws == 200);
}

TEST_CASE("effects from a real SDM fit carry usable inference") {
  const auto lattice = make_lattice(8, 8, ContiguityRule::Rook);
  const auto w = normalize(lattice.graph, Normalization::Row);
  DgpParams params;
  params.rho = 0.4;
  params.beta = Eigen::Vector2d(1.0, 2.0);
  params.theta = Eigen::VectorXd::Constant(1, 0.5);
  params.durbin_columns = {0};
  params.seed = 88;
  const Eigen::MatrixXd x = random_design(64, 2, 88);
  const auto sim = simulate_dgp(params, x, w);
  Eigen::MatrixXd values(64, 3);
  values.leftCols(2) = x;
  values.col(2) = sim.y;
  auto tbl = table_of({"x1", "x2", "y"}, values);
  ModelSpec spec;
  spec.kind = ModelKind::SDM;
  spec.response = "y";
  spec.regressors = {"x1", "x2"};
  spec.durbin = {"x1"};
  const auto fit = fit_spatial(spec, tbl, w);
  const auto effects = decompose_effects(fit, w, 300, 5);
  CHECK(effects.row("x2").direct.sd > 0.0);
  CHECK(std::isfinite(effects.row("x2").direct.t));
  // Strong beta on x2 should be clearly significant.
  CHECK(effects.row("x2").direct.p < 0.01);
}
