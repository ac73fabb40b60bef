#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spatialspill/dgp.hpp"
#include "spatialspill/effects.hpp"
#include "spatialspill/error.hpp"
#include "spatialspill/esda.hpp"
#include "spatialspill/estimators.hpp"
#include "spatialspill/ingest.hpp"
#include "spatialspill/numeric.hpp"
#include "spatialspill/serialize.hpp"
#include "spatialspill/weights.hpp"

namespace py = pybind11;
using namespace spatialspill;

namespace {

ContiguityRule rule_from(const std::string& s) {
  if (s == "queen") return ContiguityRule::Queen;
  if (s == "rook") return ContiguityRule::Rook;
  throw Error(Err::FormatError, "unknown rule '" + s + "'");
}

AttributeTable table_from_arrays(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                 std::vector<std::string> x_names) {
  if (y.size() != x.rows()) {
    throw Error(Err::DimensionMismatch, "y length differs from design rows");
  }
  if (x_names.empty()) {
    for (int j = 0; j < x.cols(); ++j) x_names.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<int>(x_names.size()) != x.cols()) {
    throw Error(Err::DimensionMismatch, "x_names length differs from design columns");
  }
  AttributeTable t;
  t.columns = x_names;
  t.columns.push_back("y");
  t.values.resize(x.rows(), x.cols() + 1);
  t.values.leftCols(x.cols()) = x;
  t.values.col(x.cols()) = y;
  for (int i = 0; i < x.rows(); ++i) t.region_ids.push_back(std::to_string(i));
  return t;
}

ModelSpec spec_from(const std::string& model, const std::vector<std::string>& x_names,
                    const std::vector<std::string>& durbin, bool intercept,
                    const std::string& se) {
  ModelSpec spec;
  spec.kind = kind_from_name(model);
  spec.response = "y";
  spec.regressors = x_names;
  spec.durbin = durbin;
  spec.intercept = intercept;
  if (se == "robust") {
    spec.se_mode = SeMode::Robust;
  } else if (se == "classical") {
    spec.se_mode = SeMode::Classical;
  } else {
    throw Error(Err::FormatError, "unknown se mode '" + se + "'");
  }
  return spec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spatial weights, dependence diagnostics, spatial regression and "
            "spillover effect decomposition";
  m.attr("__version__") = SPATIALSPILL_VERSION;

  static py::exception<Error> spatial_error(m, "SpatialError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string msg = std::string(e.name()) + ": " + e.what();
      PyErr_SetString(spatial_error.ptr(), msg.c_str());
    }
  });

  py::class_<AttributeTable>(m, "AttributeTable")
      .def_readonly("region_ids", &AttributeTable::region_ids)
      .def_readonly("columns", &AttributeTable::columns)
      .def_readonly("values", &AttributeTable::values)
      .def_property_readonly("n_rows", &AttributeTable::n_rows)
      .def("column", &AttributeTable::column, py::arg("name"));

  py::class_<GeometrySet>(m, "GeometrySet")
      .def_readonly("region_ids", &GeometrySet::region_ids)
      .def_readonly("centroids", &GeometrySet::centroids)
      .def_readonly("warnings", &GeometrySet::warnings)
      .def_property_readonly("size", &GeometrySet::size);

  py::class_<NeighborGraph>(m, "NeighborGraph")
      .def_readonly("region_ids", &NeighborGraph::region_ids)
      .def_readonly("adjacency", &NeighborGraph::adjacency)
      .def_property_readonly("size", &NeighborGraph::size)
      .def_property_readonly("edge_count", &NeighborGraph::edge_count)
      .def("__eq__", [](const NeighborGraph& a, const NeighborGraph& b) { return a == b; });

  py::class_<WeightsMatrix>(m, "WeightsMatrix")
      .def_property_readonly("n", &WeightsMatrix::n)
      .def_property_readonly("nonzeros", &WeightsMatrix::nonzeros)
      .def_property_readonly("normalization",
                             [](const WeightsMatrix& w) {
                               return std::string(normalization_name(w.normalization()));
                             })
      .def_readonly("warnings", &WeightsMatrix::warnings)
      .def("dense", &WeightsMatrix::dense)
      .def("row_sums", &WeightsMatrix::row_sums)
      .def("islands", &WeightsMatrix::islands)
      .def("spectral_radius", &WeightsMatrix::spectral_radius)
      .def("spectral_bounds", &WeightsMatrix::spectral_bounds)
      .def("stationary_interval", &WeightsMatrix::stationary_interval)
      .def("lag", &WeightsMatrix::lag, py::arg("x"))
      .def("fingerprint",
           [](const WeightsMatrix& w) { return fingerprint_hex(w.fingerprint()); });

  py::class_<Lattice>(m, "Lattice")
      .def_readonly("geometry", &Lattice::geometry)
      .def_readonly("graph", &Lattice::graph);

  py::class_<ConnectivitySummary>(m, "ConnectivitySummary")
      .def_readonly("n", &ConnectivitySummary::n)
      .def_readonly("nonzeros", &ConnectivitySummary::nonzeros)
      .def_readonly("min_neighbors", &ConnectivitySummary::min_neighbors)
      .def_readonly("mean_neighbors", &ConnectivitySummary::mean_neighbors)
      .def_readonly("max_neighbors", &ConnectivitySummary::max_neighbors)
      .def_readonly("island_count", &ConnectivitySummary::island_count)
      .def_readonly("island_ids", &ConnectivitySummary::island_ids)
      .def_readonly("symmetric", &ConnectivitySummary::symmetric);

  // ingest
  m.def("load_table", &load_table, py::arg("path"), py::arg("id_column") = "region_id",
        py::arg("delimiter") = ',');
  m.def("load_geometry", &load_geometry, py::arg("path"),
        py::arg("id_property") = "region_id");
  m.def("read_gal", &read_gal, py::arg("path"));
  m.def("write_gal", &write_gal, py::arg("graph"), py::arg("path"));
  m.def("read_wm", &read_wm, py::arg("path"));
  m.def("write_wm", &write_wm, py::arg("w"), py::arg("path"));

  // weights
  m.def(
      "build_contiguity",
      [](const GeometrySet& geometry, const std::string& rule, int order,
         double snap_tolerance, bool exact_order) {
        return build_contiguity(geometry, rule_from(rule), order, snap_tolerance, exact_order);
      },
      py::arg("geometry"), py::arg("rule") = "rook", py::arg("order") = 1,
      py::arg("snap_tolerance") = 1e-9, py::arg("exact_order") = false);
  m.def("build_inverse_distance", &build_inverse_distance, py::arg("geometry"));
  m.def(
      "normalize",
      [](const NeighborGraph& graph, const std::string& scheme) {
        return normalize(graph, normalization_from_name(scheme));
      },
      py::arg("graph"), py::arg("scheme") = "row");
  m.def(
      "normalize_weights",
      [](const WeightsMatrix& w, const std::string& scheme) {
        return normalize(w, normalization_from_name(scheme));
      },
      py::arg("w"), py::arg("scheme") = "row");
  m.def("binary_weights", &WeightsMatrix::binary, py::arg("graph"));
  m.def("connectivity_summary", &connectivity_summary, py::arg("w"));
  m.def("haversine_km", &haversine_km, py::arg("lon1"), py::arg("lat1"), py::arg("lon2"),
        py::arg("lat2"));

  // dgp
  m.def(
      "make_lattice",
      [](int rows, int cols, const std::string& rule) {
        return make_lattice(rows, cols, rule_from(rule));
      },
      py::arg("rows"), py::arg("cols"), py::arg("rule") = "rook");
  m.def(
      "simulate",
      [](const WeightsMatrix& w, const Eigen::MatrixXd& x, double rho, double lambda,
         const Eigen::VectorXd& beta, const Eigen::VectorXd& theta,
         const std::vector<int>& durbin_columns, double alpha, double sigma, uint64_t seed) {
        DgpParams params;
        params.rho = rho;
        params.lambda = lambda;
        params.beta = beta;
        params.theta = theta;
        params.durbin_columns = durbin_columns;
        params.alpha = alpha;
        params.sigma = sigma;
        params.seed = seed;
        auto result = simulate_dgp(params, x, w);
        return py::make_tuple(result.y, result.innovations);
      },
      py::arg("w"), py::arg("x"), py::arg("rho") = 0.0, py::arg("lambda") = 0.0,
      py::arg("beta") = Eigen::VectorXd(), py::arg("theta") = Eigen::VectorXd(),
      py::arg("durbin_columns") = std::vector<int>(), py::arg("alpha") = 0.0,
      py::arg("sigma") = 1.0, py::arg("seed") = 0);
  m.def("random_design", &random_design, py::arg("n"), py::arg("k"), py::arg("seed") = 0);

  // esda
  py::class_<MoranResult>(m, "MoranResult")
      .def_readonly("statistic", &MoranResult::statistic)
      .def_readonly("expectation", &MoranResult::expectation)
      .def_readonly("variance", &MoranResult::variance)
      .def_readonly("z_score", &MoranResult::z_score)
      .def_readonly("p_value", &MoranResult::p_value)
      .def_readonly("pseudo_p", &MoranResult::pseudo_p)
      .def_readonly("permutations", &MoranResult::permutations)
      .def_readonly("n_used", &MoranResult::n_used)
      .def_readonly("permuted", &MoranResult::permuted);
  m.def("global_moran", &global_moran, py::arg("x"), py::arg("w"),
        py::arg("permutations") = 0, py::arg("seed") = 0, py::arg("threads") = 1);

  py::class_<DiagnosticsReport>(m, "DiagnosticsReport")
      .def_readonly("moran_i", &DiagnosticsReport::moran_i)
      .def_readonly("moran_z", &DiagnosticsReport::moran_z)
      .def_readonly("moran_p", &DiagnosticsReport::moran_p)
      .def_readonly("lm_error", &DiagnosticsReport::lm_error)
      .def_readonly("lm_error_p", &DiagnosticsReport::lm_error_p)
      .def_readonly("robust_lm_error", &DiagnosticsReport::robust_lm_error)
      .def_readonly("robust_lm_error_p", &DiagnosticsReport::robust_lm_error_p)
      .def_readonly("lm_lag", &DiagnosticsReport::lm_lag)
      .def_readonly("lm_lag_p", &DiagnosticsReport::lm_lag_p)
      .def_readonly("robust_lm_lag", &DiagnosticsReport::robust_lm_lag)
      .def_readonly("robust_lm_lag_p", &DiagnosticsReport::robust_lm_lag_p);
  m.def("lm_diagnostics", &lm_diagnostics, py::arg("ols_fit"), py::arg("w"));

  py::class_<LisaRow>(m, "LisaRow")
      .def_readonly("local_i", &LisaRow::local_i)
      .def_readonly("pseudo_p", &LisaRow::pseudo_p)
      .def_property_readonly(
          "quadrant", [](const LisaRow& r) { return std::string(quadrant_name(r.quadrant)); })
      .def_readonly("significant", &LisaRow::significant);
  py::class_<LisaResult>(m, "LisaResult")
      .def_readonly("rows", &LisaResult::rows)
      .def_readonly("global_i", &LisaResult::global_i)
      .def_readonly("s0", &LisaResult::s0)
      .def_readonly("alpha", &LisaResult::alpha)
      .def_readonly("permutations", &LisaResult::permutations);
  m.def("local_moran", &local_moran, py::arg("x"), py::arg("w"), py::arg("permutations") = 999,
        py::arg("alpha") = 0.05, py::arg("seed") = 0, py::arg("threads") = 1);

  // estimators
  py::class_<FitResult>(m, "FitResult")
      .def_property_readonly(
          "kind", [](const FitResult& f) { return std::string(kind_name(f.spec.kind)); })
      .def_readonly("coef_names", &FitResult::coef_names)
      .def_readonly("coefficients", &FitResult::coefficients)
      .def_readonly("rho", &FitResult::rho)
      .def_readonly("lambda_", &FitResult::lambda)
      .def_readonly("has_rho", &FitResult::has_rho)
      .def_readonly("has_lambda", &FitResult::has_lambda)
      .def_readonly("sigma2", &FitResult::sigma2)
      .def_readonly("loglik", &FitResult::loglik)
      .def_readonly("r2", &FitResult::r2)
      .def_readonly("r2_kind", &FitResult::r2_kind)
      .def_readonly("n", &FitResult::n)
      .def_readonly("k", &FitResult::k)
      .def_readonly("param_names", &FitResult::param_names)
      .def_readonly("vcov", &FitResult::vcov)
      .def_readonly("std_errors", &FitResult::std_errors)
      .def_readonly("t_stats", &FitResult::t_stats)
      .def_readonly("p_values", &FitResult::p_values)
      .def_readonly("residuals", &FitResult::residuals)
      .def_readonly("fitted", &FitResult::fitted)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("warnings", &FitResult::warnings)
      .def("coef", &FitResult::coef, py::arg("name"))
      .def("to_json", [](const FitResult& f) { return fit_to_json(f).dump(2); });

  m.def(
      "fit",
      [](const std::string& model, const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
         const WeightsMatrix* w, std::vector<std::string> x_names,
         const std::vector<std::string>& durbin, bool intercept, const std::string& se) {
        const AttributeTable table = table_from_arrays(y, x, std::move(x_names));
        std::vector<std::string> regressors = table.columns;
        regressors.pop_back();
        const ModelSpec spec = spec_from(model, regressors, durbin, intercept, se);
        if (spec.kind == ModelKind::OLS || spec.kind == ModelKind::SLX) {
          return fit_ols(spec, table, w);
        }
        if (w == nullptr) {
          throw Error(Err::DimensionMismatch,
                      std::string(kind_name(spec.kind)) + " requires a weights matrix");
        }
        return fit_spatial(spec, table, *w);
      },
      py::arg("model"), py::arg("y"), py::arg("x"), py::arg("w") = nullptr,
      py::arg("x_names") = std::vector<std::string>(),
      py::arg("durbin") = std::vector<std::string>(), py::arg("intercept") = true,
      py::arg("se") = "robust");
  m.def("log_det_term", &log_det_term, py::arg("a"), py::arg("w"));

  // effects
  py::class_<EffectEstimate>(m, "EffectEstimate")
      .def_readonly("point", &EffectEstimate::point)
      .def_readonly("mean", &EffectEstimate::mean)
      .def_readonly("sd", &EffectEstimate::sd)
      .def_readonly("t", &EffectEstimate::t)
      .def_readonly("p", &EffectEstimate::p);
  py::class_<EffectsRow>(m, "EffectsRow")
      .def_readonly("regressor", &EffectsRow::regressor)
      .def_readonly("direct", &EffectsRow::direct)
      .def_readonly("indirect", &EffectsRow::indirect)
      .def_readonly("total", &EffectsRow::total);
  py::class_<EffectsTable>(m, "EffectsTable")
      .def_readonly("rows", &EffectsTable::rows)
      .def_readonly("draws", &EffectsTable::draws)
      .def_readonly("seed", &EffectsTable::seed)
      .def_readonly("rejected_draws", &EffectsTable::rejected_draws)
      .def("row", &EffectsTable::row, py::arg("regressor"),
           py::return_value_policy::reference_internal);
  m.def("decompose_effects", &decompose_effects, py::arg("fit"), py::arg("w"),
        py::arg("draws") = 0, py::arg("seed") = 0, py::arg("threads") = 1);
}
