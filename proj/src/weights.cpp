#include "spatialspill/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "spatialspill/error.hpp"
#include "spatialspill/numeric.hpp"

namespace spatialspill {

namespace {
constexpr double kEarthRadiusKm = 6371.0088;
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
}  // namespace

const char* normalization_name(Normalization n) noexcept {
  switch (n) {
    case Normalization::None: return "none";
    case Normalization::Row: return "row";
    case Normalization::Spectral: return "spectral";
  }
  return "none";
}

Normalization normalization_from_name(const std::string& s) {
  if (s == "none") return Normalization::None;
  if (s == "row") return Normalization::Row;
  if (s == "spectral") return Normalization::Spectral;
  throw Error(Err::FormatError, "unknown normalization '" + s + "'");
}

std::string Provenance::describe() const {
  switch (kind) {
    case Kind::Contiguity: {
      std::string r = rule == ContiguityRule::Queen ? "queen" : "rook";
      return "contiguity(" + r + "," + std::to_string(order) + ")";
    }
    case Kind::InverseDistance:
      return "inverse_distance";
    case Kind::Custom:
      return "custom";
  }
  return "custom";
}

Provenance Provenance::parse(const std::string& s) {
  Provenance p;
  if (s == "inverse_distance") {
    p.kind = Kind::InverseDistance;
    return p;
  }
  if (s.rfind("contiguity(", 0) == 0 && s.back() == ')') {
    const std::string body = s.substr(11, s.size() - 12);
    const auto comma = body.find(',');
    if (comma != std::string::npos) {
      const std::string rule = body.substr(0, comma);
      p.kind = Kind::Contiguity;
      p.rule = rule == "queen" ? ContiguityRule::Queen : ContiguityRule::Rook;
      p.order = std::max(1, std::atoi(body.substr(comma + 1).c_str()));
      return p;
    }
  }
  p.kind = Kind::Custom;
  return p;
}

struct WeightsMatrix::EigenCache {
  std::once_flag once;
  Eigen::VectorXcd eigenvalues;
  double omega_min = 0.0;
  double omega_max = 0.0;
  double radius = 0.0;
};

WeightsMatrix::WeightsMatrix() : cache_(std::make_shared<EigenCache>()) {}

WeightsMatrix::WeightsMatrix(int n, const std::vector<Eigen::Triplet<double>>& entries,
                             Normalization normalization, Provenance provenance,
                             std::vector<std::string> region_ids)
    : normalization_(normalization),
      provenance_(provenance),
      region_ids_(std::move(region_ids)),
      cache_(std::make_shared<EigenCache>()) {
  if (!region_ids_.empty() && static_cast<int>(region_ids_.size()) != n) {
    throw Error(Err::DimensionMismatch, "region id count differs from matrix dimension");
  }
  for (const auto& t : entries) {
    if (t.row() == t.col()) {
      throw Error(Err::FormatError, "diagonal weight at index " + std::to_string(t.row()));
    }
    if (!(t.value() > 0.0) || !std::isfinite(t.value())) {
      throw Error(Err::FormatError, "weight at (" + std::to_string(t.row()) + "," +
                                        std::to_string(t.col()) + ") must be positive and finite");
    }
  }
  w_.resize(n, n);
  w_.setFromTriplets(entries.begin(), entries.end());
  w_.makeCompressed();
}

WeightsMatrix WeightsMatrix::binary(const NeighborGraph& graph) {
  std::vector<Eigen::Triplet<double>> entries;
  for (int i = 0; i < graph.size(); ++i) {
    for (int j : graph.adjacency[i]) entries.emplace_back(i, j, 1.0);
  }
  return WeightsMatrix(graph.size(), entries, Normalization::None,
                       Provenance{Provenance::Kind::Contiguity, ContiguityRule::Rook, 1},
                       graph.region_ids);
}

Eigen::VectorXd WeightsMatrix::row_sums() const {
  return w_ * Eigen::VectorXd::Ones(n());
}

std::vector<int> WeightsMatrix::islands() const {
  std::vector<int> out;
  for (int i = 0; i < n(); ++i) {
    if (w_.outerIndexPtr()[i + 1] == w_.outerIndexPtr()[i]) out.push_back(i);
  }
  return out;
}

const Eigen::VectorXcd& WeightsMatrix::eigenvalues() const {
  std::call_once(cache_->once, [this]() {
    const Eigen::MatrixXd d = dense();
    Eigen::EigenSolver<Eigen::MatrixXd> solver(d, /*computeEigenvectors=*/false);
    cache_->eigenvalues = solver.eigenvalues();
    double lo = 0.0, hi = 0.0, radius = 0.0;
    bool have_real = false;
    for (int i = 0; i < cache_->eigenvalues.size(); ++i) {
      const std::complex<double> ev = cache_->eigenvalues[i];
      radius = std::max(radius, std::abs(ev));
      if (std::fabs(ev.imag()) <= 1e-9 * std::max(1.0, std::fabs(ev.real()))) {
        if (!have_real) {
          lo = hi = ev.real();
          have_real = true;
        } else {
          lo = std::min(lo, ev.real());
          hi = std::max(hi, ev.real());
        }
      }
    }
    cache_->omega_min = lo;
    cache_->omega_max = hi;
    cache_->radius = radius;
  });
  return cache_->eigenvalues;
}

std::pair<double, double> WeightsMatrix::spectral_bounds() const {
  eigenvalues();
  return {cache_->omega_min, cache_->omega_max};
}

double WeightsMatrix::spectral_radius() const {
  eigenvalues();
  return cache_->radius;
}

std::pair<double, double> WeightsMatrix::stationary_interval() const {
  if (normalization_ == Normalization::Spectral) return {-1.0, 1.0};
  const auto [omega_min, omega_max] = spectral_bounds();
  const double lo = omega_min < 0.0 ? 1.0 / omega_min : -std::numeric_limits<double>::infinity();
  const double hi = omega_max > 0.0 ? 1.0 / omega_max : std::numeric_limits<double>::infinity();
  return {lo, hi};
}

uint64_t WeightsMatrix::fingerprint() const {
  uint64_t h = fnv1a64(std::string(normalization_name(normalization_)));
  h = fnv1a64(provenance_.describe(), h);
  const int size = n();
  h = fnv1a64(&size, sizeof(size), h);
  for (int i = 0; i < w_.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(w_, i); it; ++it) {
      const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
      const double v = it.value();
      h = fnv1a64(&r, sizeof(r), h);
      h = fnv1a64(&c, sizeof(c), h);
      h = fnv1a64(&v, sizeof(v), h);
    }
  }
  return h;
}

namespace {

// Vertices snapped to an integer grid so shared borders match exactly even
// under float noise in the source file.
struct SnapKey {
  int64_t x, y;
  bool operator==(const SnapKey&) const = default;
};
struct SnapKeyHash {
  size_t operator()(const SnapKey& k) const {
    return static_cast<size_t>(splitmix64(static_cast<uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL ^
                                          static_cast<uint64_t>(k.y)));
  }
};
struct SnapEdge {
  SnapKey a, b;
  bool operator==(const SnapEdge&) const = default;
};
struct SnapEdgeHash {
  size_t operator()(const SnapEdge& e) const {
    return SnapKeyHash{}(e.a) * 1099511628211ULL ^ SnapKeyHash{}(e.b);
  }
};

SnapKey snap(const std::array<double, 2>& pt, double tol) {
  return {static_cast<int64_t>(std::llround(pt[0] / tol)),
          static_cast<int64_t>(std::llround(pt[1] / tol))};
}

bool key_less(const SnapKey& a, const SnapKey& b) {
  return a.x != b.x ? a.x < b.x : a.y < b.y;
}

NeighborGraph expand_order(const NeighborGraph& base, int order, bool exact) {
  NeighborGraph out;
  out.region_ids = base.region_ids;
  out.adjacency.resize(base.size());
  for (int s = 0; s < base.size(); ++s) {
    // BFS distances from s in the order-1 graph.
    std::vector<int> dist(base.size(), -1);
    std::deque<int> queue{s};
    dist[s] = 0;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      if (dist[u] >= order) continue;
      for (int v : base.adjacency[u]) {
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
    for (int v = 0; v < base.size(); ++v) {
      if (v == s || dist[v] < 0) continue;
      if (exact ? dist[v] == order : dist[v] <= order) out.adjacency[s].push_back(v);
    }
  }
  return out;
}

}  // namespace

NeighborGraph build_contiguity(const GeometrySet& geometry, ContiguityRule rule,
                               int order, double snap_tolerance, bool exact_order) {
  if (geometry.size() == 0) throw Error(Err::EmptyTable, "geometry set is empty");
  if (order < 1) throw Error(Err::FormatError, "contiguity order must be >= 1");

  const int n = geometry.size();
  for (int i = 0; i < n; ++i) {
    if (std::fabs(polygon_area(geometry.polygons[i])) == 0.0) {
      throw Error(Err::DegenerateGeometry,
                  "region '" + geometry.region_ids[i] + "' has zero area");
    }
  }

  std::vector<std::set<int>> adj(n);
  auto link = [&](int a, int b) {
    if (a != b) {
      adj[a].insert(b);
      adj[b].insert(a);
    }
  };

  if (rule == ContiguityRule::Queen) {
    std::unordered_map<SnapKey, std::vector<int>, SnapKeyHash> by_vertex;
    for (int i = 0; i < n; ++i) {
      std::set<SnapKey, decltype(&key_less)> own(&key_less);
      for (const auto& ring : geometry.polygons[i]) {
        for (size_t v = 0; v + 1 < ring.size(); ++v) own.insert(snap(ring[v], snap_tolerance));
      }
      for (const auto& key : own) {
        for (int other : by_vertex[key]) link(i, other);
        by_vertex[key].push_back(i);
      }
    }
  } else {
    std::unordered_map<SnapEdge, std::vector<int>, SnapEdgeHash> by_edge;
    for (int i = 0; i < n; ++i) {
      std::set<std::pair<SnapKey, SnapKey>, bool (*)(const std::pair<SnapKey, SnapKey>&,
                                                     const std::pair<SnapKey, SnapKey>&)>
          own(+[](const std::pair<SnapKey, SnapKey>& a, const std::pair<SnapKey, SnapKey>& b) {
            return key_less(a.first, b.first) ||
                   (a.first == b.first && key_less(a.second, b.second));
          });
      for (const auto& ring : geometry.polygons[i]) {
        for (size_t v = 0; v + 1 < ring.size(); ++v) {
          SnapKey a = snap(ring[v], snap_tolerance);
          SnapKey b = snap(ring[v + 1], snap_tolerance);
          if (a == b) continue;  // zero-length after snapping
          if (key_less(b, a)) std::swap(a, b);
          own.insert({a, b});
        }
      }
      for (const auto& [a, b] : own) {
        auto& regions = by_edge[SnapEdge{a, b}];
        for (int other : regions) link(i, other);
        regions.push_back(i);
      }
    }
  }

  NeighborGraph g;
  g.region_ids = geometry.region_ids;
  g.adjacency.resize(n);
  for (int i = 0; i < n; ++i) g.adjacency[i].assign(adj[i].begin(), adj[i].end());
  if (order > 1 || exact_order) g = expand_order(g, order, exact_order);
  return g;
}

WeightsMatrix build_inverse_distance(const GeometrySet& geometry) {
  const int n = geometry.size();
  if (n < 2) throw Error(Err::DimensionMismatch, "inverse distance needs at least 2 regions");
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<size_t>(n) * (n - 1));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto& a = geometry.centroids[i];
      const auto& b = geometry.centroids[j];
      const double d = haversine_km(a[0], a[1], b[0], b[1]);
      if (d <= 0.0) {
        throw Error(Err::CoincidentCentroids, "regions '" + geometry.region_ids[i] + "' and '" +
                                                  geometry.region_ids[j] + "' share a centroid");
      }
      entries.emplace_back(i, j, 1.0 / d);
      entries.emplace_back(j, i, 1.0 / d);
    }
  }
  return WeightsMatrix(n, entries, Normalization::None,
                       Provenance{Provenance::Kind::InverseDistance, ContiguityRule::Rook, 1},
                       geometry.region_ids);
}

WeightsMatrix normalize(const WeightsMatrix& w, Normalization scheme) {
  if (w.nonzeros() == 0) throw Error(Err::ZeroMatrix, "weights matrix has no entries");
  if (scheme == Normalization::None) return w;

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(w.nonzeros());
  std::vector<std::string> island_ids;

  if (scheme == Normalization::Row) {
    const Eigen::VectorXd sums = w.row_sums();
    const auto& m = w.matrix();
    for (int i = 0; i < m.outerSize(); ++i) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, i); it; ++it) {
        entries.emplace_back(it.row(), it.col(), it.value() / sums[it.row()]);
      }
    }
    for (int i : w.islands()) {
      island_ids.push_back(w.region_ids().empty() ? std::to_string(i) : w.region_ids()[i]);
    }
  } else {
    const double radius = w.spectral_radius();
    if (!(radius > 0.0)) throw Error(Err::ZeroMatrix, "spectral radius is zero");
    const auto& m = w.matrix();
    for (int i = 0; i < m.outerSize(); ++i) {
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, i); it; ++it) {
        entries.emplace_back(it.row(), it.col(), it.value() / radius);
      }
    }
  }

  WeightsMatrix out(w.n(), entries, scheme, w.provenance(), w.region_ids());
  out.warnings = w.warnings;
  if (!island_ids.empty()) {
    std::string msg = "row normalization left " + std::to_string(island_ids.size()) +
                      " island row(s) all-zero:";
    for (const auto& id : island_ids) msg += " " + id;
    out.warnings.push_back(msg);
  }
  return out;
}

WeightsMatrix normalize(const NeighborGraph& graph, Normalization scheme) {
  return normalize(WeightsMatrix::binary(graph), scheme);
}

ConnectivitySummary connectivity_summary(const WeightsMatrix& w) {
  ConnectivitySummary s;
  s.n = w.n();
  s.nonzeros = w.nonzeros();
  const auto& m = w.matrix();
  long total = 0;
  s.min_neighbors = s.n > 0 ? std::numeric_limits<int>::max() : 0;
  for (int i = 0; i < s.n; ++i) {
    const int deg = m.outerIndexPtr()[i + 1] - m.outerIndexPtr()[i];
    total += deg;
    s.min_neighbors = std::min(s.min_neighbors, deg);
    s.max_neighbors = std::max(s.max_neighbors, deg);
    if (deg == 0) {
      s.island_ids.push_back(w.region_ids().empty() ? std::to_string(i) : w.region_ids()[i]);
    }
  }
  s.island_count = static_cast<int>(s.island_ids.size());
  s.mean_neighbors = s.n > 0 ? static_cast<double>(total) / s.n : 0.0;

  // Structural symmetry: (i,j) nonzero iff (j,i) nonzero.
  Eigen::SparseMatrix<double> col_major(m);
  Eigen::SparseMatrix<double> transposed = col_major.transpose();
  s.symmetric = true;
  for (int k = 0; k < col_major.outerSize() && s.symmetric; ++k) {
    Eigen::SparseMatrix<double>::InnerIterator a(col_major, k), b(transposed, k);
    for (; a && b; ++a, ++b) {
      if (a.row() != b.row()) {
        s.symmetric = false;
        break;
      }
    }
    if (static_cast<bool>(a) != static_cast<bool>(b)) s.symmetric = false;
  }
  return s;
}

double haversine_km(double lon1, double lat1, double lon2, double lat2) {
  const double phi1 = lat1 * kDegToRad, phi2 = lat2 * kDegToRad;
  const double dphi = (lat2 - lat1) * kDegToRad;
  const double dlambda = (lon2 - lon1) * kDegToRad;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

void write_wm(const WeightsMatrix& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Err::IoError, "cannot write '" + path + "'");
  out << w.n() << " " << normalization_name(w.normalization()) << " "
      << w.provenance().describe() << "\n";
  const auto& m = w.matrix();
  for (int i = 0; i < m.outerSize(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, i); it; ++it) {
      out << it.row() << " " << it.col() << " " << format_sig17(it.value()) << "\n";
    }
  }
}

WeightsMatrix read_wm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Err::IoError, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(Err::BadHeader, "empty .wm file");
  std::istringstream head(line);
  long n = -1;
  std::string norm, prov;
  head >> n >> norm >> prov;
  if (n < 0 || norm.empty() || prov.empty()) {
    throw Error(Err::BadHeader, "expected 'n normalization provenance' header");
  }
  std::vector<Eigen::Triplet<double>> entries;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    long r = -1, c = -1;
    double v = 0.0;
    row >> r >> c >> v;
    if (row.fail() || r < 0 || c < 0 || r >= n || c >= n) {
      throw Error(Err::FormatError, "bad .wm entry on line " + std::to_string(line_no));
    }
    entries.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
  }
  return WeightsMatrix(static_cast<int>(n), entries, normalization_from_name(norm),
                       Provenance::parse(prov));
}

}  // namespace spatialspill
