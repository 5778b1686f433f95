#include "pamlab/stats.hpp"

#include <algorithm>
#include <cmath>

#include "pamlab/errors.hpp"
#include "pamlab/random.hpp"

namespace pamlab {

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  r.n = v.size();
  if (v.empty()) return r;
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(const std::vector<double>& v) { return quantile(v, 0.5); }

Interval wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) throw InvalidArgument("Wilson interval needs at least one trial");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  const auto m = static_cast<std::size_t>(degree + 1);
  if (degree < 0 || x.size() != y.size() || x.size() < m) {
    throw InvalidArgument("polyfit needs at least degree + 1 points");
  }
  // Normal equations on centred abscissae, solved by Gaussian elimination.
  double cx = 0.0;
  for (double v : x) cx += v / static_cast<double>(x.size());
  std::vector<double> a(m * (m + 1), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> pw(m, 1.0);
    for (std::size_t k = 1; k < m; ++k) pw[k] = pw[k - 1] * (x[i] - cx);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < m; ++c) a[r * (m + 1) + c] += pw[r] * pw[c];
      a[r * (m + 1) + m] += pw[r] * y[i];
    }
  }
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::fabs(a[r * (m + 1) + col]) > std::fabs(a[piv * (m + 1) + col])) piv = r;
    }
    if (std::fabs(a[piv * (m + 1) + col]) < 1e-300) throw InvalidArgument("polyfit system is singular");
    for (std::size_t c = 0; c <= m; ++c) std::swap(a[col * (m + 1) + c], a[piv * (m + 1) + c]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = a[r * (m + 1) + col] / a[col * (m + 1) + col];
      for (std::size_t c = col; c <= m; ++c) a[r * (m + 1) + c] -= f * a[col * (m + 1) + c];
    }
  }
  std::vector<double> centred(m);
  for (std::size_t r = 0; r < m; ++r) centred[r] = a[r * (m + 1) + m] / a[r * (m + 1) + r];
  // Expand sum_k b_k (x - cx)^k into powers of x.
  std::vector<double> out(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    double binom = 1.0;
    for (std::size_t j = 0; j <= k; ++j) {
      out[j] += centred[k] * binom * std::pow(-cx, static_cast<double>(k - j));
      binom = binom * static_cast<double>(k - j) / static_cast<double>(j + 1);
    }
  }
  return out;
}

Interval bootstrap_ci(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& statistic,
                      int reps, std::uint64_t seed, double level) {
  if (n == 0 || reps < 2) throw InvalidArgument("bootstrap needs data and at least two resamples");
  CounterRng rng(seed, 0xB007, 0);
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(reps));
  std::vector<std::size_t> idx(n);
  for (int r = 0; r < reps; ++r) {
    for (auto& i : idx) i = rng.below(static_cast<std::uint32_t>(n));
    const double v = statistic(idx);
    if (std::isfinite(v)) values.push_back(v);
  }
  if (values.size() < 2) throw InvalidArgument("bootstrap statistic was never finite");
  const double a = 0.5 * (1.0 - level);
  return {quantile(values, a), quantile(values, 1.0 - a)};
}

}  // namespace pamlab
