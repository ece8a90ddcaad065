#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace coact::stats {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Log-normal parameterized by its median and the standard deviation of log x.
struct LogNormal {
  double median = 1.0;
  double log_std = 1.0;

  double log_pdf(double x) const;
  double log_cdf(double x) const;
  double cdf(double x) const;
};

double normal_log_pdf(double x, double mean, double variance);
double poisson_log_pmf(std::int64_t k, double rate);

// log(mean(exp(v))) computed stably. Empty input is an error.
double log_mean_exp(std::span<const double> v);
double log_sum_exp(std::span<const double> v);

// Independent child seed for stream `salt` of `seed` (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt);

// log C(n, k).
double log_choose(std::int64_t n, std::int64_t k);

// Distribution of round(X), X ~ LogNormal, on [min_count, max_count].
// Mass of count n is P(n - 1/2 <= X < n + 1/2). kRenormalize drops the
// out-of-range mass and rescales; kClamp folds it into the end counts, which
// is the law of clamp(round(X), min, max).
class DiscretizedLogNormal {
 public:
  enum class Tail { kRenormalize, kClamp };

  DiscretizedLogNormal(LogNormal base, int min_count, int max_count,
                       Tail tail = Tail::kRenormalize);

  double log_pmf(int n) const;
  int min_count() const { return min_count_; }
  int max_count() const { return max_count_; }
  std::span<const double> pmf() const { return pmf_; }

 private:
  LogNormal base_;
  int min_count_;
  int max_count_;
  std::vector<double> pmf_;  // index n - min_count
};

}  // namespace coact::stats
