#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace spatialspill {

// ---- tail probabilities ----

double normal_cdf(double z);
double normal_sf(double z);
/// Two-sided p-value for a standard-normal statistic.
double two_sided_z_p(double z);
/// Upper tail of the chi-square distribution with 1 degree of freedom.
double chi2_sf1(double x);
/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Upper tail P(T > t) for Student t with df degrees of freedom.
double student_t_sf(double t, double df);
double two_sided_t_p(double t, double df);

// ---- deterministic randomness ----

uint64_t splitmix64(uint64_t x);
/// Independent generator for (seed, index); permutation/draw loops use one
/// substream per index so results do not depend on scheduling.
std::mt19937_64 substream(uint64_t seed, uint64_t index);
/// Uniform integer in [0, bound) without std::uniform_int_distribution,
/// so sequences are identical across standard libraries.
uint64_t bounded_rand(std::mt19937_64& rng, uint64_t bound);
double standard_normal(std::mt19937_64& rng);
void fisher_yates(std::vector<int>& idx, std::mt19937_64& rng);

// ---- misc ----

uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ULL);
uint64_t fnv1a64(const std::string& s, uint64_t h = 1469598103934665603ULL);
/// Decimal rendering with 17 significant digits (lossless double round-trip).
std::string format_sig17(double v);

int resolve_threads(int requested);
/// Runs fn(0..n-1) on up to `threads` workers; any exception is rethrown on
/// the calling thread.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace spatialspill
