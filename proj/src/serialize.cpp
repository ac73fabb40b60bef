#include "spatialspill/serialize.hpp"

#include <cstdio>
#include <fstream>

#include "spatialspill/error.hpp"
#include "spatialspill/numeric.hpp"

namespace spatialspill {

namespace {

nlohmann::ordered_json vector_json(const Eigen::VectorXd& v) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

std::string fingerprint_hex(uint64_t fingerprint) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
  return buf;
}

nlohmann::ordered_json fit_to_json(const FitResult& fit) {
  nlohmann::ordered_json j;
  j["tool"] = "spatialspill";
  j["version"] = SPATIALSPILL_VERSION;
  j["kind"] = kind_name(fit.spec.kind);
  j["response"] = fit.spec.response;
  j["regressors"] = fit.spec.regressors;
  j["durbin"] = fit.spec.durbin;
  j["intercept"] = fit.spec.intercept;
  j["se_mode"] = fit.spec.se_mode == SeMode::Robust ? "robust" : "classical";
  j["n"] = fit.n;
  j["k"] = fit.k;
  j["coef_names"] = fit.coef_names;
  j["coefficients"] = vector_json(fit.coefficients);
  j["rho"] = fit.rho;
  j["lambda"] = fit.lambda;
  j["has_rho"] = fit.has_rho;
  j["has_lambda"] = fit.has_lambda;
  j["sigma2"] = fit.sigma2;
  j["loglik"] = fit.loglik;
  j["r2"] = fit.r2;
  j["r2_kind"] = fit.r2_kind;
  j["param_names"] = fit.param_names;
  nlohmann::ordered_json vcov = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < fit.vcov.rows(); ++r) vcov.push_back(vector_json(fit.vcov.row(r)));
  j["vcov"] = vcov;
  j["std_errors"] = vector_json(fit.std_errors);
  j["t_stats"] = vector_json(fit.t_stats);
  j["p_values"] = vector_json(fit.p_values);
  j["residuals"] = vector_json(fit.residuals);
  j["fitted"] = vector_json(fit.fitted);
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["weights_fingerprint"] = fingerprint_hex(fit.weights_fingerprint);
  j["warnings"] = fit.warnings;
  return j;
}

FitResult fit_from_json(const nlohmann::json& j) {
  FitResult fit;
  fit.spec.kind = kind_from_name(j.at("kind").get<std::string>());
  fit.spec.response = j.at("response").get<std::string>();
  fit.spec.regressors = j.at("regressors").get<std::vector<std::string>>();
  fit.spec.durbin = j.at("durbin").get<std::vector<std::string>>();
  fit.spec.intercept = j.at("intercept").get<bool>();
  fit.spec.se_mode =
      j.at("se_mode").get<std::string>() == "classical" ? SeMode::Classical : SeMode::Robust;
  fit.n = j.at("n").get<int>();
  fit.k = j.at("k").get<int>();
  fit.coef_names = j.at("coef_names").get<std::vector<std::string>>();
  fit.coefficients = vector_from(j.at("coefficients"));
  fit.rho = j.at("rho").get<double>();
  fit.lambda = j.at("lambda").get<double>();
  fit.has_rho = j.at("has_rho").get<bool>();
  fit.has_lambda = j.at("has_lambda").get<bool>();
  fit.sigma2 = j.at("sigma2").get<double>();
  fit.loglik = j.at("loglik").get<double>();
  fit.r2 = j.at("r2").get<double>();
  fit.r2_kind = j.at("r2_kind").get<std::string>();
  fit.param_names = j.at("param_names").get<std::vector<std::string>>();
  const auto& vc = j.at("vcov");
  fit.vcov.resize(vc.size(), vc.size());
  for (size_t r = 0; r < vc.size(); ++r) {
    for (size_t c = 0; c < vc[r].size(); ++c) {
      fit.vcov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          vc[r][c].get<double>();
    }
  }
  fit.std_errors = vector_from(j.at("std_errors"));
  fit.t_stats = vector_from(j.at("t_stats"));
  fit.p_values = vector_from(j.at("p_values"));
  fit.residuals = vector_from(j.at("residuals"));
  fit.fitted = vector_from(j.at("fitted"));
  fit.converged = j.at("converged").get<bool>();
  fit.iterations = j.at("iterations").get<int>();
  fit.weights_fingerprint =
      std::stoull(j.at("weights_fingerprint").get<std::string>(), nullptr, 16);
  fit.warnings = j.at("warnings").get<std::vector<std::string>>();
  return fit;
}

void write_fit_json(const FitResult& fit, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Err::IoError, "cannot write '" + path + "'");
  out << fit_to_json(fit).dump(2) << "\n";
}

FitResult read_fit_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Err::IoError, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Err::FormatError, "'" + path + "' is not valid JSON: " + e.what());
  }
  try {
    return fit_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Err::FormatError, "'" + path + "' is not a fit file: " + e.what());
  }
}

nlohmann::ordered_json lisa_to_feature_collection(const LisaResult& lisa,
                                                  const std::vector<std::string>& region_ids,
                                                  const GeometrySet* geometry) {
  nlohmann::ordered_json fc;
  fc["type"] = "FeatureCollection";
  fc["properties"] = {{"global_i", lisa.global_i},
                      {"alpha", lisa.alpha},
                      {"permutations", lisa.permutations}};
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (size_t i = 0; i < lisa.rows.size(); ++i) {
    nlohmann::ordered_json f;
    f["type"] = "Feature";
    f["properties"] = {
        {"region_id", i < region_ids.size() ? region_ids[i] : std::to_string(i)},
        {"local_i", lisa.rows[i].local_i},
        {"pseudo_p", lisa.rows[i].pseudo_p},
        {"quadrant", quadrant_name(lisa.rows[i].quadrant)},
        {"significant", lisa.rows[i].significant},
    };
    if (geometry != nullptr && i < geometry->polygons.size()) {
      nlohmann::ordered_json rings = nlohmann::ordered_json::array();
      for (const auto& ring : geometry->polygons[i]) {
        nlohmann::ordered_json pts = nlohmann::ordered_json::array();
        for (const auto& p : ring) pts.push_back({p[0], p[1]});
        rings.push_back(pts);
      }
      f["geometry"] = {{"type", "Polygon"}, {"coordinates", rings}};
    } else {
      f["geometry"] = nullptr;
    }
    features.push_back(std::move(f));
  }
  fc["features"] = std::move(features);
  return fc;
}

}  // namespace spatialspill
