#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace pamlab {

struct MeanSe {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

MeanSe mean_se(const std::vector<double>& v);

/// Linear-interpolation quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> v, double q);
double median(const std::vector<double>& v);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Wilson score interval for k successes in n trials.
Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054);

/// Least-squares polynomial coefficients c[0] + c[1] x + ... of the given degree.
std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree);

/// Percentile bootstrap: resamples the index set {0..n-1} with replacement,
/// applies `statistic` to each resample and returns the central `level`
/// interval. Resamples for which the statistic is not finite are skipped.
Interval bootstrap_ci(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& statistic,
                      int reps, std::uint64_t seed, double level = 0.95);

}  // namespace pamlab
