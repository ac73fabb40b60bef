#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "spatialspill/cli.hpp"
#include "spatialspill/ingest.hpp"
#include "spatialspill/serialize.hpp"
#include "spatialspill/weights.hpp"

namespace fs = std::filesystem;
using namespace spatialspill;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::execute(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  const auto dir = fs::temp_directory_path() / "spatialspill_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string make_fixture_data() {
  const auto dir = workdir();
  const auto data = (dir / "data.csv").string();
  const auto gal = (dir / "w.gal").string();
  const auto r = run({"--seed", "5", "simulate", "--lattice", "5x5", "--rule", "rook",
                      "--model", "sar", "--rho", "0.3", "--beta", "1,2", "--out",
                      data + "," + gal});
  REQUIRE(r.code == 0);
  return dir.string();
}

}  // namespace

TEST_CASE("simulate writes data, weights and a manifest") {
  const auto dir = fs::path(make_fixture_data());
  CHECK(fs::exists(dir / "data.csv"));
  CHECK(fs::exists(dir / "w.gal"));
  CHECK(fs::exists(dir / "data.csv.manifest.json"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "data.csv.manifest.json"));
  CHECK(manifest.at("tool") == "spatialspill");
  CHECK(manifest.at("subcommand") == "simulate");
  CHECK(manifest.contains("options"));
  CHECK(manifest.contains("outputs"));
  CHECK(manifest.contains("timestamp_unix_ms"));

  const auto table = load_table((dir / "data.csv").string(), "region_id");
  CHECK(table.n_rows() == 25);
  const auto graph = read_gal((dir / "w.gal").string());
  CHECK(graph.size() == 25);
}

TEST_CASE("fit succeeds, writes a schema-complete fit.json, and is reproducible") {
  const auto dir = fs::path(make_fixture_data());
  const auto fit_path = (dir / "fit.json").string();
  const std::vector<std::string> args = {
      "fit",       "--model",   "sdm",
      "--data",    (dir / "data.csv").string(),
      "--y",       "y",
      "--x",       "x1,x2",
      "--durbin",  "x1",
      "--weights", (dir / "w.gal").string(),
      "--normalize", "row",
      "--out",     fit_path,
      "--quiet"};
  REQUIRE(run(args).code == 0);
  REQUIRE(fs::exists(fit_path));

  const auto j = nlohmann::json::parse(slurp(fit_path));
  for (const char* key :
       {"kind", "response", "regressors", "durbin", "n", "k", "coef_names", "coefficients",
        "rho", "lambda", "sigma2", "loglik", "r2", "param_names", "vcov", "std_errors",
        "t_stats", "p_values", "residuals", "fitted", "weights_fingerprint"}) {
    CHECK(j.contains(key));
  }
  CHECK(j.at("kind") == "sdm");
  CHECK(j.at("n") == 25);

  // Round-trip through the reader.
  const auto fit = read_fit_json(fit_path);
  CHECK(fit.spec.regressors == std::vector<std::string>{"x1", "x2"});
  CHECK(fit.has_rho);

  // Byte-identical on a second run with the same inputs.
  const auto first = slurp(fit_path);
  REQUIRE(run(args).code == 0);
  CHECK(slurp(fit_path) == first);
}

TEST_CASE("usage errors exit 2 naming the offender") {
  const auto dir = fs::path(make_fixture_data());
  const auto bad_flag = run({"fit", "--data", (dir / "data.csv").string(), "--y", "y",
                             "--x", "x1", "--out", (dir / "f.json").string(),
                             "--bogus-flag", "x"});
  CHECK(bad_flag.code == 2);
  CHECK(bad_flag.err.find("--bogus-flag") != std::string::npos);

  const auto bad_cmd = run({"frobnicate"});
  CHECK(bad_cmd.code == 2);

  const auto no_cmd = run({});
  CHECK(no_cmd.code == 2);

  const auto missing_required = run({"moran", "--var", "y"});
  CHECK(missing_required.code == 2);
}

TEST_CASE("data errors exit 1 with the library error name and context") {
  const auto dir = fs::path(make_fixture_data());
  const auto bad_gal = (dir / "bad.gal").string();
  {
    std::ofstream out(bad_gal);
    out << "2\nA 1\nZZTOP\nB 1\nA\n";
  }
  const auto r = run({"moran", "--data", (dir / "data.csv").string(), "--var", "y",
                      "--weights", bad_gal, "-o", (dir / "m.csv").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("UnknownNeighborId") != std::string::npos);
  CHECK(r.err.find("ZZTOP") != std::string::npos);
}

TEST_CASE("weights build emits .gal and row-normalized .wm") {
  const auto dir = workdir();
  const auto geo = dir / "squares.json";
  {
    std::ofstream out(geo);
    out << R"({"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{"region_id":"a"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
      {"type":"Feature","properties":{"region_id":"b"},"geometry":{"type":"Polygon","coordinates":[[[1,0],[2,0],[2,1],[1,1],[1,0]]]}},
      {"type":"Feature","properties":{"region_id":"c"},"geometry":{"type":"Polygon","coordinates":[[[2,0],[3,0],[3,1],[2,1],[2,0]]]}}
    ]})";
  }
  const auto gal_path = (dir / "built.gal").string();
  REQUIRE(run({"weights", "build", "--geometry", geo.string(), "--rule", "rook", "-o",
               gal_path, "--quiet"})
              .code == 0);
  const auto g = read_gal(gal_path);
  CHECK(g.edge_count() == 2);  // path a-b-c

  const auto wm_path = (dir / "built.wm").string();
  REQUIRE(run({"weights", "build", "--geometry", geo.string(), "--rule", "rook",
               "--normalize", "row", "-o", wm_path, "--quiet"})
              .code == 0);
  const auto w = read_wm(wm_path);
  CHECK(w.normalization() == Normalization::Row);
  CHECK(w.n() == 3);
  CHECK(w.row_sums().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));

  // Inverse distance has no .gal form.
  CHECK(run({"weights", "build", "--geometry", geo.string(), "--rule", "invdist", "-o",
             (dir / "i.gal").string()})
            .code == 1);
  REQUIRE(run({"weights", "build", "--geometry", geo.string(), "--rule", "invdist",
               "--normalize", "spectral", "-o", (dir / "i.wm").string(), "--quiet"})
              .code == 0);
  CHECK(read_wm((dir / "i.wm").string()).normalization() == Normalization::Spectral);
}

TEST_CASE("describe, moran, diagnose, lisa and effects run end to end") {
  const auto dir = fs::path(make_fixture_data());
  const auto data = (dir / "data.csv").string();
  const auto gal = (dir / "w.gal").string();

  REQUIRE(run({"describe", "--data", data, "--vars", "x1,x2,y", "-o",
               (dir / "report.csv").string(), "--quiet"})
              .code == 0);
  CHECK(slurp(dir / "report.csv").find("variable,mean,sd,skewness") == 0);
  CHECK(fs::exists(dir / "report.csv.correlation.csv"));

  REQUIRE(run({"--seed", "3", "moran", "--data", data, "--var", "y", "--weights", gal,
               "--permutations", "199", "--scatter", (dir / "scatter.csv").string(), "-o",
               (dir / "moran.csv").string(), "--quiet"})
              .code == 0);
  CHECK(slurp(dir / "moran.csv").find("statistic,") == 0);
  CHECK(slurp(dir / "scatter.csv").find("region_id,z,lag_z") == 0);

  REQUIRE(run({"diagnose", "--data", data, "--y", "y", "--x", "x1,x2", "--weights", gal,
               "-o", (dir / "diag.csv").string(), "--quiet"})
              .code == 0);
  const auto diag = slurp(dir / "diag.csv");
  CHECK(diag.find("moran_residual_z") != std::string::npos);
  CHECK(diag.find("robust_lm_lag") != std::string::npos);

  REQUIRE(run({"--seed", "9", "lisa", "--data", data, "--var", "y", "--weights", gal,
               "--permutations", "99", "-o", (dir / "lisa.json").string(), "--quiet"})
              .code == 0);
  const auto layer = nlohmann::json::parse(slurp(dir / "lisa.json"));
  CHECK(layer.at("type") == "FeatureCollection");
  REQUIRE(layer.at("features").size() == 25);
  const auto& props = layer.at("features")[0].at("properties");
  for (const char* key : {"region_id", "local_i", "pseudo_p", "quadrant", "significant"}) {
    CHECK(props.contains(key));
  }

  const auto fit_path = (dir / "fit.json").string();
  REQUIRE(run({"fit", "--model", "sar", "--data", data, "--y", "y", "--x", "x1,x2",
               "--weights", gal, "--out", fit_path, "--quiet"})
              .code == 0);
  REQUIRE(run({"--seed", "4", "effects", "--fit", fit_path, "--weights", gal, "--draws",
               "100", "--out", (dir / "effects.csv").string(), "--quiet"})
              .code == 0);
  const auto effects = slurp(dir / "effects.csv");
  CHECK(effects.find("panel,name,estimate") == 0);
  CHECK(effects.find("direct,x1") != std::string::npos);
  CHECK(effects.find("indirect,x2") != std::string::npos);
  CHECK(effects.find("spatial,rho") != std::string::npos);
}

TEST_CASE("reproduce without external data exits 1 with a pointer") {
  const auto r = run({"reproduce", "--out-dir", (workdir() / "rep").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("MissingExternalData") != std::string::npos);
  CHECK(r.err.find("--data") != std::string::npos);
}

TEST_CASE("ols fit runs without weights; spatial models demand them") {
  const auto dir = fs::path(make_fixture_data());
  const auto data = (dir / "data.csv").string();
  REQUIRE(run({"fit", "--model", "ols", "--data", data, "--y", "y", "--x", "x1,x2",
               "--out", (dir / "ols.json").string(), "--quiet"})
              .code == 0);
  const auto r = run({"fit", "--model", "sar", "--data", data, "--y", "y", "--x", "x1,x2",
                      "--out", (dir / "sar.json").string(), "--quiet"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--weights") != std::string::npos);
}
