#include "spatialspill/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "spatialspill/error.hpp"

namespace spatialspill {

const char* err_name(Err code) noexcept {
  switch (code) {
    case Err::MissingColumn: return "MissingColumn";
    case Err::NonNumericCell: return "NonNumericCell";
    case Err::DuplicateId: return "DuplicateId";
    case Err::EmptyTable: return "EmptyTable";
    case Err::UnsupportedGeometryKind: return "UnsupportedGeometryKind";
    case Err::MissingIdProperty: return "MissingIdProperty";
    case Err::MalformedRing: return "MalformedRing";
    case Err::BadHeader: return "BadHeader";
    case Err::UnknownNeighborId: return "UnknownNeighborId";
    case Err::NeighborCountMismatch: return "NeighborCountMismatch";
    case Err::AsymmetricNeighbors: return "AsymmetricNeighbors";
    case Err::IdMismatch: return "IdMismatch";
    case Err::DegenerateGeometry: return "DegenerateGeometry";
    case Err::CoincidentCentroids: return "CoincidentCentroids";
    case Err::ZeroMatrix: return "ZeroMatrix";
    case Err::ConstantVector: return "ConstantVector";
    case Err::ConstantColumn: return "ConstantColumn";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::SingularDesign: return "SingularDesign";
    case Err::RankDeficientAfterLag: return "RankDeficientAfterLag";
    case Err::OutOfStationaryRegion: return "OutOfStationaryRegion";
    case Err::NonConvergence: return "NonConvergence";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::MissingExternalData: return "MissingExternalData";
    case Err::IoError: return "IoError";
    case Err::FormatError: return "FormatError";
  }
  return "UnknownError";
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double two_sided_z_p(double z) {
  return std::min(1.0, 2.0 * normal_sf(std::fabs(z)));
}

double chi2_sf1(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

namespace {

// Continued fraction for the incomplete beta (Lentz's algorithm).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) return std::nan("");
  const double x = df / (df + t * t);
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
  return t >= 0.0 ? tail : 1.0 - tail;
}

double two_sided_t_p(double t, double df) {
  return std::min(1.0, 2.0 * student_t_sf(std::fabs(t), df));
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::mt19937_64 substream(uint64_t seed, uint64_t index) {
  const uint64_t s = splitmix64(splitmix64(seed) ^ splitmix64(index + 1));
  return std::mt19937_64(s);
}

uint64_t bounded_rand(std::mt19937_64& rng, uint64_t bound) {
  // Lemire's multiply-then-reject.
  if (bound == 0) return 0;
  while (true) {
    const uint64_t r = rng();
    const __uint128_t m = static_cast<__uint128_t>(r) * bound;
    const uint64_t lo = static_cast<uint64_t>(m);
    if (lo >= bound || lo >= (0ULL - bound) % bound) {
      return static_cast<uint64_t>(m >> 64);
    }
  }
}

double standard_normal(std::mt19937_64& rng) {
  // Polar Box-Muller without caching the spare, for a stateless call.
  while (true) {
    const double u = 2.0 * (rng() >> 11) * 0x1.0p-53 - 1.0;
    const double v = 2.0 * (rng() >> 11) * 0x1.0p-53 - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }
}

void fisher_yates(std::vector<int>& idx, std::mt19937_64& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    const uint64_t j = bounded_rand(rng, i);
    std::swap(idx[i - 1], idx[j]);
  }
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t fnv1a64(const std::string& s, uint64_t h) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string format_sig17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = t; i < n; i += threads) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace spatialspill
