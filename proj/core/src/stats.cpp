#include "coactivity/stats.hpp"

#include "coactivity/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coact::stats {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double LogNormal::log_pdf(double x) const {
  if (!(x > 0.0)) return -kInf;
  const double z = (std::log(x) - std::log(median)) / log_std;
  return -0.5 * z * z - std::log(x * log_std) - 0.5 * kLog2Pi;
}

double LogNormal::cdf(double x) const {
  if (!(x > 0.0)) return 0.0;
  const double z = (std::log(x) - std::log(median)) / log_std;
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double LogNormal::log_cdf(double x) const { return std::log(cdf(x)); }

double normal_log_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + d * d / variance);
}

double poisson_log_pmf(std::int64_t k, double rate) {
  if (k < 0) return -kInf;
  if (rate == 0.0) return k == 0 ? 0.0 : -kInf;
  return static_cast<double>(k) * std::log(rate) - rate -
         std::lgamma(static_cast<double>(k) + 1.0);
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw ContractError("log_sum_exp of empty range");
  const double m = *std::max_element(v.begin(), v.end());
  if (m == -kInf) return -kInf;
  if (m == kInf) return kInf;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

double log_mean_exp(std::span<const double> v) {
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

double log_choose(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return -kInf;
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

DiscretizedLogNormal::DiscretizedLogNormal(LogNormal base, int min_count,
                                           int max_count, Tail tail)
    : base_(base), min_count_(min_count), max_count_(max_count) {
  if (min_count < 0 || max_count < min_count) {
    throw ConfigError("discretized log-normal: empty count range");
  }
  if (!(base.median > 0.0) || !(base.log_std > 0.0)) {
    throw ConfigError("discretized log-normal: median and log_std must be > 0");
  }
  pmf_.resize(static_cast<std::size_t>(max_count - min_count + 1));
  for (int n = min_count; n <= max_count; ++n) {
    double lo = base.cdf(n - 0.5);
    double hi = base.cdf(n + 0.5);
    if (tail == Tail::kClamp) {
      if (n == min_count) lo = 0.0;
      if (n == max_count) hi = 1.0;
    }
    pmf_[static_cast<std::size_t>(n - min_count)] = hi - lo;
  }
  double total = 0.0;
  for (double p : pmf_) total += p;
  if (!(total > 0.0)) {
    throw NumericalError("discretized log-normal has no mass in count range");
  }
  for (double& p : pmf_) p /= total;
}

double DiscretizedLogNormal::log_pmf(int n) const {
  if (n < min_count_ || n > max_count_) return -kInf;
  return std::log(pmf_[static_cast<std::size_t>(n - min_count_)]);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace coact::stats
