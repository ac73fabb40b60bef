#include "spatialspill/cli.hpp"

#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli_internal.hpp"
#include "spatialspill/dgp.hpp"
#include "spatialspill/effects.hpp"
#include "spatialspill/error.hpp"
#include "spatialspill/esda.hpp"
#include "spatialspill/numeric.hpp"
#include "spatialspill/serialize.hpp"

namespace spatialspill::cli {

namespace fs = std::filesystem;

void write_atomic(const std::string& path, const std::function<void(std::ostream&)>& writer) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp);
    if (!out) throw Error(Err::IoError, "cannot write '" + tmp.string() + "'");
    writer(out);
    out.flush();
    if (!out) throw Error(Err::IoError, "write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, target);
}

uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Err::IoError, "cannot open '" + path + "'");
  uint64_t h = 1469598103934665603ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  }
  return h;
}

RunRecorder::RunRecorder(std::string subcommand, uint64_t seed, int threads)
    : subcommand_(std::move(subcommand)) {
  option("seed", std::to_string(seed));
  option("threads", std::to_string(threads));
}

void RunRecorder::option(const std::string& name, const std::string& value) {
  options_.emplace_back(name, value);
}

void RunRecorder::input(const std::string& path) {
  inputs_.emplace_back(path, fingerprint_hex(hash_file(path)));
}

void RunRecorder::output(const std::string& path) { outputs_.push_back(path); }

void RunRecorder::finish() {
  if (outputs_.empty()) return;
  nlohmann::ordered_json m;
  m["tool"] = "spatialspill";
  m["version"] = SPATIALSPILL_VERSION;
  m["subcommand"] = subcommand_;
  nlohmann::ordered_json opts;
  for (const auto& [k, v] : options_) opts[k] = v;
  m["options"] = opts;
  nlohmann::ordered_json ins;
  for (const auto& [k, v] : inputs_) ins[k] = v;
  m["inputs"] = ins;
  m["outputs"] = outputs_;
  const auto now = std::chrono::system_clock::now();
  m["timestamp_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  write_atomic(outputs_.front() + ".manifest.json",
               [&](std::ostream& os) { os << m.dump(2) << "\n"; });
}

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Eigen::VectorXd parse_numbers(const std::string& csv) {
  const auto parts = split_list(csv);
  Eigen::VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (size_t i = 0; i < parts.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = std::stod(parts[i]);
  }
  return v;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

NeighborGraph align_graph(const NeighborGraph& g, const AttributeTable& table) {
  std::map<std::string, int> pos;
  for (int i = 0; i < g.size(); ++i) pos[g.region_ids[i]] = i;
  std::vector<std::string> missing;
  for (const auto& id : table.region_ids) {
    if (!pos.count(id)) missing.push_back(id);
  }
  if (!missing.empty() || g.size() != table.n_rows()) {
    std::string msg = "weights ids do not match the table";
    if (!missing.empty()) {
      msg += "; missing from weights:";
      for (const auto& id : missing) msg += " " + id;
    }
    if (g.size() != table.n_rows()) {
      msg += " (weights n=" + std::to_string(g.size()) +
             ", table n=" + std::to_string(table.n_rows()) + ")";
    }
    throw Error(Err::IdMismatch, msg);
  }
  std::vector<int> to_new(g.size());
  for (int i = 0; i < table.n_rows(); ++i) to_new[pos[table.region_ids[i]]] = i;
  NeighborGraph out;
  out.region_ids = table.region_ids;
  out.adjacency.resize(g.size());
  for (int i = 0; i < g.size(); ++i) {
    for (int j : g.adjacency[i]) out.adjacency[to_new[i]].push_back(to_new[j]);
  }
  for (auto& adj : out.adjacency) std::sort(adj.begin(), adj.end());
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + "\"";
}

void write_wm_atomic(const WeightsMatrix& w, const std::string& path) {
  write_atomic(path, [&](std::ostream& os) {
    os << w.n() << " " << normalization_name(w.normalization()) << " "
       << w.provenance().describe() << "\n";
    const auto& m = w.matrix();
    for (int i = 0; i < m.outerSize(); ++i) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, i); it; ++it) {
        os << it.row() << " " << it.col() << " " << format_sig17(it.value()) << "\n";
      }
    }
  });
}

void print_warnings(const std::vector<std::string>& warnings, bool quiet, std::ostream& err) {
  if (quiet) return;
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

}  // namespace

WeightsMatrix load_weights(const std::string& path, const std::string& normalization,
                           const AttributeTable* table, RunRecorder& recorder) {
  recorder.input(path);
  if (ends_with(path, ".wm")) {
    WeightsMatrix w = read_wm(path);
    if (table != nullptr && w.n() != table->n_rows()) {
      throw Error(Err::IdMismatch, ".wm weights n=" + std::to_string(w.n()) +
                                       " differs from table n=" +
                                       std::to_string(table->n_rows()));
    }
    if (normalization.empty() || normalization == normalization_name(w.normalization())) {
      return w;
    }
    if (w.normalization() == Normalization::None) {
      return normalize(w, normalization_from_name(normalization));
    }
    throw Error(Err::FormatError,
                "'" + path + "' is already " + normalization_name(w.normalization()) +
                    "-normalized; cannot renormalize to " + normalization);
  }
  NeighborGraph g = read_gal(path);
  if (table != nullptr) g = align_graph(g, *table);
  const auto scheme =
      normalization.empty() ? Normalization::Row : normalization_from_name(normalization);
  if (scheme == Normalization::None) return WeightsMatrix::binary(g);
  return normalize(g, scheme);
}

namespace {

struct CommonData {
  std::string data_path;
  std::string id_column = "region_id";
  std::string delimiter = ",";

  AttributeTable load(RunRecorder& recorder) const {
    recorder.input(data_path);
    if (delimiter.size() != 1) {
      throw Error(Err::FormatError, "--delimiter must be a single character");
    }
    return load_table(data_path, id_column, delimiter[0]);
  }
  void attach(CLI::App* cmd) {
    cmd->add_option("--data", data_path, "attribute table (delimited text)")->required();
    cmd->add_option("--id", id_column, "region id column")->capture_default_str();
    cmd->add_option("--delimiter", delimiter, "field delimiter")->capture_default_str();
  }
};

void write_fit_outputs(const FitResult& fit, const std::string& out_path,
                       RunRecorder& recorder, bool quiet, std::ostream& out) {
  write_atomic(out_path, [&](std::ostream& os) { os << fit_to_json(fit).dump(2) << "\n"; });
  recorder.output(out_path);
  if (quiet) return;
  out << kind_name(fit.spec.kind) << " fit: n=" << fit.n << " loglik=" << fit.loglik << " "
      << fit.r2_kind << "-r2=" << fit.r2 << "\n";
  for (Eigen::Index i = 0; i < fit.t_stats.size(); ++i) {
    const std::string& name = fit.param_names[static_cast<size_t>(i)];
    double est;
    if (name == "rho") {
      est = fit.rho;
    } else if (name == "lambda") {
      est = fit.lambda;
    } else {
      est = fit.coefficients[i];
    }
    out << "  " << name << " = " << est << " (t " << fit.t_stats[i] << ")"
        << significance_stars(fit.p_values[i]) << "\n";
  }
}

}  // namespace

int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{
      "spatialspill: spatial weights, dependence diagnostics, spatial regression "
      "fits and spillover effects"};
  app.set_version_flag("--version", std::string(SPATIALSPILL_VERSION));
  app.require_subcommand(1);

  uint64_t seed = 0;
  int threads = 0;
  bool quiet = false;
  app.add_option("--seed", seed, "seed for permutation and draw substreams")
      ->capture_default_str();
  app.add_option("--threads", threads, "worker threads (0 = all cores)")
      ->envname("SPATIALSPILL_THREADS")
      ->capture_default_str();
  app.add_flag("--quiet", quiet, "suppress progress notes and warnings");

  int exit_code = 0;

  // ---- weights build ----
  auto* weights_cmd = app.add_subcommand("weights", "build spatial weights matrices");
  weights_cmd->fallthrough();
  weights_cmd->require_subcommand(1);
  auto* build_cmd = weights_cmd->add_subcommand("build", "construct W from geometry");
  build_cmd->fallthrough();
  struct {
    std::string geometry, id_property = "region_id", rule = "rook";
    int order = 1;
    bool exact_order = false;
    std::string normalize_scheme = "none";
    double snap_tolerance = 1e-9;
    std::string out;
  } wopt;
  build_cmd->add_option("--geometry", wopt.geometry, "JSON feature collection")->required();
  build_cmd->add_option("--id-property", wopt.id_property)->capture_default_str();
  build_cmd->add_option("--rule", wopt.rule, "queen|rook|invdist")->capture_default_str();
  build_cmd->add_option("--order", wopt.order, "contiguity order p")->capture_default_str();
  build_cmd->add_flag("--exact-order", wopt.exact_order, "graph distance == p, not <= p");
  build_cmd->add_option("--normalize", wopt.normalize_scheme, "row|spectral|none")
      ->capture_default_str();
  build_cmd->add_option("--snap-tolerance", wopt.snap_tolerance, "vertex snap grid, degrees")
      ->capture_default_str();
  build_cmd->add_option("-o,--out", wopt.out, "output .gal or .wm path")->required();
  build_cmd->callback([&]() {
    RunRecorder recorder("weights build", seed, resolve_threads(threads));
    recorder.option("rule", wopt.rule);
    recorder.option("order", std::to_string(wopt.order));
    recorder.option("exact_order", wopt.exact_order ? "true" : "false");
    recorder.option("normalize", wopt.normalize_scheme);
    recorder.option("snap_tolerance", format_sig17(wopt.snap_tolerance));
    recorder.input(wopt.geometry);
    const auto geometry = load_geometry(wopt.geometry, wopt.id_property);
    print_warnings(geometry.warnings, quiet, err);

    if (wopt.rule == "invdist") {
      if (ends_with(wopt.out, ".gal")) {
        throw Error(Err::FormatError, "inverse-distance weights have no .gal form");
      }
      WeightsMatrix w = build_inverse_distance(geometry);
      if (wopt.normalize_scheme != "none") {
        w = normalize(w, normalization_from_name(wopt.normalize_scheme));
      }
      print_warnings(w.warnings, quiet, err);
      write_wm_atomic(w, wopt.out);
      recorder.output(wopt.out);
      if (!quiet) out << "wrote " << wopt.out << " (n=" << w.n() << ", dense)\n";
    } else {
      if (wopt.rule != "queen" && wopt.rule != "rook") {
        throw Error(Err::FormatError, "unknown rule '" + wopt.rule + "'");
      }
      const auto rule = wopt.rule == "queen" ? ContiguityRule::Queen : ContiguityRule::Rook;
      const auto graph = build_contiguity(geometry, rule, wopt.order, wopt.snap_tolerance,
                                          wopt.exact_order);
      if (ends_with(wopt.out, ".gal")) {
        write_atomic(wopt.out, [&](std::ostream& os) { serialize_gal(graph, os); });
      } else {
        std::vector<Eigen::Triplet<double>> trips;
        for (int i = 0; i < graph.size(); ++i) {
          for (int j : graph.adjacency[i]) trips.emplace_back(i, j, 1.0);
        }
        WeightsMatrix w(graph.size(), trips, Normalization::None,
                        Provenance{Provenance::Kind::Contiguity, rule, wopt.order},
                        graph.region_ids);
        if (wopt.normalize_scheme != "none") {
          w = normalize(w, normalization_from_name(wopt.normalize_scheme));
        }
        print_warnings(w.warnings, quiet, err);
        write_wm_atomic(w, wopt.out);
      }
      recorder.output(wopt.out);
      if (!quiet) {
        const auto s = connectivity_summary(WeightsMatrix::binary(graph));
        out << "wrote " << wopt.out << " (n=" << s.n << ", edges=" << graph.edge_count()
            << ", islands=" << s.island_count << ")\n";
      }
    }
    recorder.finish();
  });

  // ---- describe ----
  auto* describe_cmd = app.add_subcommand("describe", "descriptive statistics");
  describe_cmd->fallthrough();
  struct {
    CommonData data;
    std::string vars, group_by, out;
  } dopt;
  dopt.data.attach(describe_cmd);
  describe_cmd->add_option("--vars", dopt.vars, "comma-separated variables")->required();
  describe_cmd->add_option("--group-by", dopt.group_by, "binary 0/1 split column");
  describe_cmd->add_option("-o,--out", dopt.out, "report CSV path")->required();
  describe_cmd->callback([&]() {
    RunRecorder recorder("describe", seed, resolve_threads(threads));
    recorder.option("vars", dopt.vars);
    recorder.option("group_by", dopt.group_by);
    const auto table = dopt.data.load(recorder);
    const auto report = describe(table, split_list(dopt.vars), dopt.group_by);

    const bool grouped = !dopt.group_by.empty();
    write_atomic(dopt.out, [&](std::ostream& os) {
      os << "variable,mean,sd,skewness";
      if (grouped) os << ",mean_group1,mean_group0,welch_t,welch_df,welch_p,stars";
      os << "\n";
      for (const auto& v : report.variables) {
        os << csv_escape(v.name) << "," << format_sig17(v.mean) << "," << format_sig17(v.sd)
           << "," << format_sig17(v.skewness);
        if (grouped) {
          os << "," << format_sig17(v.mean_group1) << "," << format_sig17(v.mean_group0)
             << "," << format_sig17(v.welch_t) << "," << format_sig17(v.welch_df) << ","
             << format_sig17(v.welch_p) << "," << significance_stars(v.welch_p);
        }
        os << "\n";
      }
    });
    recorder.output(dopt.out);

    const std::string corr_path = dopt.out + ".correlation.csv";
    write_atomic(corr_path, [&](std::ostream& os) {
      os << "variable_a,variable_b,correlation,p_value,stars\n";
      for (size_t a = 0; a < report.corr_names.size(); ++a) {
        for (size_t b = a + 1; b < report.corr_names.size(); ++b) {
          const double r = report.correlation(static_cast<Eigen::Index>(a),
                                              static_cast<Eigen::Index>(b));
          const double p =
              report.corr_p(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
          os << csv_escape(report.corr_names[a]) << "," << csv_escape(report.corr_names[b])
             << "," << format_sig17(r) << "," << format_sig17(p) << ","
             << significance_stars(p) << "\n";
        }
      }
    });
    recorder.output(corr_path);
    recorder.finish();
    if (!quiet) out << "wrote " << dopt.out << " and " << corr_path << "\n";
  });

  // ---- moran ----
  auto* moran_cmd = app.add_subcommand("moran", "global Moran's I");
  moran_cmd->fallthrough();
  struct {
    CommonData data;
    std::string var, weights, normalize_scheme = "row", out, scatter;
    int permutations = 0;
  } mopt;
  mopt.data.attach(moran_cmd);
  moran_cmd->add_option("--var", mopt.var, "variable")->required();
  moran_cmd->add_option("--weights", mopt.weights, ".gal or .wm weights")->required();
  moran_cmd->add_option("--normalize", mopt.normalize_scheme)->capture_default_str();
  moran_cmd->add_option("--permutations", mopt.permutations)->capture_default_str();
  moran_cmd->add_option("--scatter", mopt.scatter, "scatter data CSV (z vs lag z)");
  moran_cmd->add_option("-o,--out", mopt.out, "result CSV path")->required();
  moran_cmd->callback([&]() {
    RunRecorder recorder("moran", seed, resolve_threads(threads));
    recorder.option("var", mopt.var);
    recorder.option("normalize", mopt.normalize_scheme);
    recorder.option("permutations", std::to_string(mopt.permutations));
    const auto table = mopt.data.load(recorder);
    const auto w = load_weights(mopt.weights, mopt.normalize_scheme, &table, recorder);
    print_warnings(w.warnings, quiet, err);
    const auto result = global_moran(table.column(mopt.var), w, mopt.permutations, seed,
                                     resolve_threads(threads));

    write_atomic(mopt.out, [&](std::ostream& os) {
      os << "statistic,expectation,variance,z_score,p_value,pseudo_p,permutations,n\n";
      os << format_sig17(result.statistic) << "," << format_sig17(result.expectation) << ","
         << format_sig17(result.variance) << "," << format_sig17(result.z_score) << ","
         << format_sig17(result.p_value) << ","
         << (result.permutations > 0 ? format_sig17(result.pseudo_p) : "") << ","
         << result.permutations << "," << result.n_used << "\n";
    });
    recorder.output(mopt.out);

    if (!mopt.scatter.empty()) {
      const Eigen::VectorXd x = table.column(mopt.var);
      const Eigen::VectorXd z = x.array() - x.mean();
      const Eigen::VectorXd lag = w.matrix() * z;
      write_atomic(mopt.scatter, [&](std::ostream& os) {
        os << "region_id,z,lag_z\n";
        for (int i = 0; i < table.n_rows(); ++i) {
          os << csv_escape(table.region_ids[i]) << "," << format_sig17(z[i]) << ","
             << format_sig17(lag[i]) << "\n";
        }
      });
      recorder.output(mopt.scatter);
    }
    recorder.finish();
    if (!quiet) {
      out << "moran I=" << result.statistic << " z=" << result.z_score
          << " p=" << result.p_value;
      if (result.permutations > 0) out << " pseudo_p=" << result.pseudo_p;
      out << "\n";
    }
  });

  // ---- diagnose ----
  auto* diag_cmd = app.add_subcommand("diagnose", "LM tests for spatial dependence in OLS");
  diag_cmd->fallthrough();
  struct {
    CommonData data;
    std::string y, x, weights, normalize_scheme = "row", out;
    bool no_intercept = false;
  } gopt;
  gopt.data.attach(diag_cmd);
  diag_cmd->add_option("--y", gopt.y, "response column")->required();
  diag_cmd->add_option("--x", gopt.x, "comma-separated regressors")->required();
  diag_cmd->add_flag("--no-intercept", gopt.no_intercept);
  diag_cmd->add_option("--weights", gopt.weights)->required();
  diag_cmd->add_option("--normalize", gopt.normalize_scheme)->capture_default_str();
  diag_cmd->add_option("-o,--out", gopt.out, "diagnostics CSV path")->required();
  diag_cmd->callback([&]() {
    RunRecorder recorder("diagnose", seed, resolve_threads(threads));
    recorder.option("y", gopt.y);
    recorder.option("x", gopt.x);
    recorder.option("normalize", gopt.normalize_scheme);
    const auto table = gopt.data.load(recorder);
    const auto w = load_weights(gopt.weights, gopt.normalize_scheme, &table, recorder);
    print_warnings(w.warnings, quiet, err);

    ModelSpec spec;
    spec.kind = ModelKind::OLS;
    spec.response = gopt.y;
    spec.regressors = split_list(gopt.x);
    spec.intercept = !gopt.no_intercept;
    const auto fit = fit_ols(spec, table);
    const auto report = lm_diagnostics(fit, w);

    write_atomic(gopt.out, [&](std::ostream& os) {
      os << "test,statistic,p_value\n";
      // The Moran row reports the standardized z statistic.
      os << "moran_residual_z," << format_sig17(report.moran_z) << ","
         << format_sig17(report.moran_p) << "\n";
      os << "lm_error," << format_sig17(report.lm_error) << ","
         << format_sig17(report.lm_error_p) << "\n";
      os << "robust_lm_error," << format_sig17(report.robust_lm_error) << ","
         << format_sig17(report.robust_lm_error_p) << "\n";
      os << "lm_lag," << format_sig17(report.lm_lag) << "," << format_sig17(report.lm_lag_p)
         << "\n";
      os << "robust_lm_lag," << format_sig17(report.robust_lm_lag) << ","
         << format_sig17(report.robust_lm_lag_p) << "\n";
    });
    recorder.output(gopt.out);
    recorder.finish();
    if (!quiet) {
      out << "moran z=" << report.moran_z << " lm_error=" << report.lm_error
          << " lm_lag=" << report.lm_lag << "\n";
    }
  });

  // ---- fit ----
  auto* fit_cmd = app.add_subcommand("fit", "estimate a spatial regression");
  fit_cmd->fallthrough();
  struct {
    CommonData data;
    std::string model = "ols", y, x, durbin, weights, normalize_scheme = "row",
                se = "robust", out;
    bool no_intercept = false;
  } fopt;
  fopt.data.attach(fit_cmd);
  fit_cmd->add_option("--model", fopt.model, "ols|slx|sem|sar|sdem|sdm|sac|gns")
      ->capture_default_str();
  fit_cmd->add_option("--y", fopt.y)->required();
  fit_cmd->add_option("--x", fopt.x)->required();
  fit_cmd->add_option("--durbin", fopt.durbin, "regressors to lag (WX)");
  fit_cmd->add_option("--weights", fopt.weights, "required except for ols");
  fit_cmd->add_option("--normalize", fopt.normalize_scheme)->capture_default_str();
  fit_cmd->add_option("--se", fopt.se, "robust|classical")->capture_default_str();
  fit_cmd->add_flag("--no-intercept", fopt.no_intercept);
  fit_cmd->add_option("--out", fopt.out, "fit JSON path")->required();
  fit_cmd->callback([&]() {
    RunRecorder recorder("fit", seed, resolve_threads(threads));
    recorder.option("model", fopt.model);
    recorder.option("y", fopt.y);
    recorder.option("x", fopt.x);
    recorder.option("durbin", fopt.durbin);
    recorder.option("normalize", fopt.normalize_scheme);
    recorder.option("se", fopt.se);
    const auto table = fopt.data.load(recorder);

    ModelSpec spec;
    spec.kind = kind_from_name(fopt.model);
    spec.response = fopt.y;
    spec.regressors = split_list(fopt.x);
    spec.durbin = split_list(fopt.durbin);
    spec.intercept = !fopt.no_intercept;
    if (fopt.se == "classical") {
      spec.se_mode = SeMode::Classical;
    } else if (fopt.se == "robust") {
      spec.se_mode = SeMode::Robust;
    } else {
      throw Error(Err::FormatError, "unknown --se '" + fopt.se + "'");
    }

    FitResult fit;
    if (spec.kind == ModelKind::OLS) {
      fit = fit_ols(spec, table);
    } else {
      if (fopt.weights.empty()) {
        throw Error(Err::DimensionMismatch,
                    std::string(kind_name(spec.kind)) + " requires --weights");
      }
      const auto w = load_weights(fopt.weights, fopt.normalize_scheme, &table, recorder);
      print_warnings(w.warnings, quiet, err);
      fit = spec.kind == ModelKind::SLX ? fit_ols(spec, table, &w)
                                        : fit_spatial(spec, table, w);
    }
    print_warnings(fit.warnings, quiet, err);
    write_fit_outputs(fit, fopt.out, recorder, quiet, out);
    recorder.finish();
  });

  // ---- effects ----
  auto* eff_cmd = app.add_subcommand("effects", "direct/indirect/total marginal effects");
  eff_cmd->fallthrough();
  struct {
    std::string fit, weights, normalize_scheme, out;
    int draws = 1000;
  } eopt;
  eff_cmd->add_option("--fit", eopt.fit, "fit JSON from `fit`")->required();
  eff_cmd->add_option("--weights", eopt.weights)->required();
  eff_cmd->add_option("--normalize", eopt.normalize_scheme,
                      "defaults to row for .gal, as stored for .wm");
  eff_cmd->add_option("--draws", eopt.draws)->capture_default_str();
  eff_cmd->add_option("--out", eopt.out, "effects CSV path")->required();
  eff_cmd->callback([&]() {
    RunRecorder recorder("effects", seed, resolve_threads(threads));
    recorder.option("draws", std::to_string(eopt.draws));
    recorder.input(eopt.fit);
    const auto fit = read_fit_json(eopt.fit);
    const auto w = load_weights(eopt.weights, eopt.normalize_scheme, nullptr, recorder);
    print_warnings(w.warnings, quiet, err);
    if (fit.weights_fingerprint != 0 && w.fingerprint() != fit.weights_fingerprint && !quiet) {
      err << "warning: weights fingerprint differs from the fit's\n";
    }
    const auto effects = decompose_effects(fit, w, eopt.draws, seed, resolve_threads(threads));

    write_atomic(eopt.out, [&](std::ostream& os) {
      os << "panel,name,estimate,mc_mean,mc_sd,t_stat,p_value,stars\n";
      const char* panels[2] = {"direct", "indirect"};
      for (int p = 0; p < 2; ++p) {
        for (const auto& row : effects.rows) {
          const EffectEstimate& e = p == 0 ? row.direct : row.indirect;
          os << panels[p] << "," << csv_escape(row.regressor) << ","
             << format_sig17(e.point);
          if (effects.draws > 0) {
            os << "," << format_sig17(e.mean) << "," << format_sig17(e.sd) << ","
               << format_sig17(e.t) << "," << format_sig17(e.p) << ","
               << significance_stars(e.p);
          } else {
            os << ",,,,,";
          }
          os << "\n";
        }
      }
      auto spatial_row = [&](const char* name, double value, Eigen::Index param_idx) {
        os << "spatial," << name << "," << format_sig17(value);
        if (param_idx >= 0 && param_idx < fit.t_stats.size()) {
          os << ",," << format_sig17(fit.std_errors[param_idx]) << ","
             << format_sig17(fit.t_stats[param_idx]) << ","
             << format_sig17(fit.p_values[param_idx]) << ","
             << significance_stars(fit.p_values[param_idx]);
        } else {
          os << ",,,,,";
        }
        os << "\n";
      };
      if (fit.has_rho) spatial_row("rho", fit.rho, fit.k);
      if (fit.has_lambda) spatial_row("lambda", fit.lambda, fit.k + (fit.has_rho ? 1 : 0));
    });
    recorder.output(eopt.out);
    recorder.finish();
    if (!quiet) {
      out << "wrote " << eopt.out << " (draws=" << effects.draws
          << ", rejected=" << effects.rejected_draws << ")\n";
    }
  });

  // ---- lisa ----
  auto* lisa_cmd = app.add_subcommand("lisa", "local Moran cluster layer");
  lisa_cmd->fallthrough();
  struct {
    CommonData data;
    std::string var, weights, normalize_scheme = "row", geometry,
                id_property = "region_id", out;
    int permutations = 999;
    double alpha = 0.05;
  } lopt;
  lopt.data.attach(lisa_cmd);
  lisa_cmd->add_option("--var", lopt.var)->required();
  lisa_cmd->add_option("--weights", lopt.weights)->required();
  lisa_cmd->add_option("--normalize", lopt.normalize_scheme)->capture_default_str();
  lisa_cmd->add_option("--permutations", lopt.permutations)->capture_default_str();
  lisa_cmd->add_option("--alpha", lopt.alpha)->capture_default_str();
  lisa_cmd->add_option("--geometry", lopt.geometry, "embed polygons in the layer");
  lisa_cmd->add_option("--id-property", lopt.id_property)->capture_default_str();
  lisa_cmd->add_option("-o,--out", lopt.out, "feature-collection JSON path")->required();
  lisa_cmd->callback([&]() {
    RunRecorder recorder("lisa", seed, resolve_threads(threads));
    recorder.option("var", lopt.var);
    recorder.option("normalize", lopt.normalize_scheme);
    recorder.option("permutations", std::to_string(lopt.permutations));
    recorder.option("alpha", format_sig17(lopt.alpha));
    const auto table = lopt.data.load(recorder);
    const auto w = load_weights(lopt.weights, lopt.normalize_scheme, &table, recorder);
    print_warnings(w.warnings, quiet, err);
    const auto lisa = local_moran(table.column(lopt.var), w, lopt.permutations, lopt.alpha,
                                  seed, resolve_threads(threads));

    GeometrySet geometry;
    const GeometrySet* geo_ptr = nullptr;
    if (!lopt.geometry.empty()) {
      recorder.input(lopt.geometry);
      geometry = load_geometry(lopt.geometry, lopt.id_property);
      align_geometry(table, geometry);
      geo_ptr = &geometry;
    }
    const auto layer = lisa_to_feature_collection(lisa, table.region_ids, geo_ptr);
    write_atomic(lopt.out, [&](std::ostream& os) { os << layer.dump(2) << "\n"; });
    recorder.output(lopt.out);
    recorder.finish();
    if (!quiet) {
      int significant = 0;
      for (const auto& row : lisa.rows) significant += row.significant ? 1 : 0;
      out << "lisa: " << significant << "/" << lisa.rows.size()
          << " significant at alpha=" << lopt.alpha << "\n";
    }
  });

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "draw data from the nesting process");
  sim_cmd->fallthrough();
  struct {
    std::string lattice = "10x10", rule = "rook", model = "sar";
    double rho = 0.0, lambda = 0.0, alpha = 0.0, sigma = 1.0;
    std::string beta = "1", theta, normalize_scheme = "row", out;
  } sopt;
  sim_cmd->add_option("--lattice", sopt.lattice, "RxC grid")->capture_default_str();
  sim_cmd->add_option("--rule", sopt.rule, "rook|queen")->capture_default_str();
  sim_cmd->add_option("--model", sopt.model, "echoed into the manifest")
      ->capture_default_str();
  sim_cmd->add_option("--rho", sopt.rho)->capture_default_str();
  sim_cmd->add_option("--lambda", sopt.lambda)->capture_default_str();
  sim_cmd->add_option("--beta", sopt.beta, "comma-separated coefficients")
      ->capture_default_str();
  sim_cmd->add_option("--theta", sopt.theta,
                      "durbin coefficients, aligned to the leading columns of X");
  sim_cmd->add_option("--alpha", sopt.alpha)->capture_default_str();
  sim_cmd->add_option("--sigma", sopt.sigma)->capture_default_str();
  sim_cmd->add_option("--normalize", sopt.normalize_scheme)->capture_default_str();
  sim_cmd->add_option("--out", sopt.out, "'data.csv' or 'data.csv,w.gal'")->required();
  sim_cmd->callback([&]() {
    RunRecorder recorder("simulate", seed, resolve_threads(threads));
    recorder.option("lattice", sopt.lattice);
    recorder.option("rule", sopt.rule);
    recorder.option("model", sopt.model);
    recorder.option("rho", format_sig17(sopt.rho));
    recorder.option("lambda", format_sig17(sopt.lambda));
    recorder.option("beta", sopt.beta);
    recorder.option("theta", sopt.theta);
    recorder.option("alpha", format_sig17(sopt.alpha));
    recorder.option("sigma", format_sig17(sopt.sigma));

    const auto sep = sopt.lattice.find('x');
    if (sep == std::string::npos) {
      throw Error(Err::FormatError, "--lattice expects RxC, got '" + sopt.lattice + "'");
    }
    const int rows = std::stoi(sopt.lattice.substr(0, sep));
    const int cols = std::stoi(sopt.lattice.substr(sep + 1));
    const auto rule = sopt.rule == "queen" ? ContiguityRule::Queen : ContiguityRule::Rook;
    const auto lattice = make_lattice(rows, cols, rule);
    const auto w = normalize(lattice.graph, normalization_from_name(sopt.normalize_scheme));

    DgpParams params;
    params.rho = sopt.rho;
    params.lambda = sopt.lambda;
    params.beta = parse_numbers(sopt.beta);
    params.alpha = sopt.alpha;
    params.sigma = sopt.sigma;
    params.seed = seed;
    if (!sopt.theta.empty()) {
      params.theta = parse_numbers(sopt.theta);
      for (int j = 0; j < params.theta.size(); ++j) params.durbin_columns.push_back(j);
    }
    const int n = rows * cols;
    const int k = static_cast<int>(params.beta.size());
    const Eigen::MatrixXd x = random_design(n, k, seed);
    const auto sim = simulate_dgp(params, x, w);

    const auto outputs = split_list(sopt.out);
    const std::string data_path = outputs.at(0);
    write_atomic(data_path, [&](std::ostream& os) {
      os << "region_id";
      for (int j = 0; j < k; ++j) os << ",x" << (j + 1);
      os << ",y\n";
      for (int i = 0; i < n; ++i) {
        os << lattice.graph.region_ids[i];
        for (int j = 0; j < k; ++j) os << "," << format_sig17(x(i, j));
        os << "," << format_sig17(sim.y[i]) << "\n";
      }
    });
    recorder.output(data_path);
    if (outputs.size() > 1) {
      write_atomic(outputs[1], [&](std::ostream& os) { serialize_gal(lattice.graph, os); });
      recorder.output(outputs[1]);
    }
    recorder.finish();
    if (!quiet) out << "wrote " << sopt.out << " (n=" << n << ")\n";
  });

  // ---- reproduce ----
  auto* rep_cmd =
      app.add_subcommand("reproduce", "full-sample pipeline on the public community dataset");
  rep_cmd->fallthrough();
  ReproduceOptions ropt;
  rep_cmd->add_option("--data", ropt.data_path, "community attribute table");
  rep_cmd->add_option("--geometry", ropt.geometry_path, "community boundary file");
  rep_cmd->add_option("--id", ropt.id_column)->capture_default_str();
  rep_cmd->add_option("--id-property", ropt.id_property)->capture_default_str();
  rep_cmd->add_option("--ontario-ids", ropt.ontario_ids_path, "id list, one per line");
  rep_cmd->add_option("--toronto-ids", ropt.toronto_ids_path, "id list, one per line");
  rep_cmd->add_option("--draws", ropt.draws)->capture_default_str();
  rep_cmd->add_option("--out-dir", ropt.out_dir)->required();
  rep_cmd->callback([&]() {
    ropt.seed = seed;
    ropt.threads = resolve_threads(threads);
    ropt.quiet = quiet;
    RunRecorder recorder("reproduce", seed, ropt.threads);
    exit_code = run_reproduce(ropt, recorder, out);
  });

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("spatialspill");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << SPATIALSPILL_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << e.name() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}

int execute(const std::vector<std::string>& args) {
  return execute(args, std::cout, std::cerr);
}

}  // namespace spatialspill::cli
