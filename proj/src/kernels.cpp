#include "pamlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pamlab/errors.hpp"

namespace pamlab {
namespace {

void check_budget(int dim, int radius, std::size_t budget, const char* what) {
  double entries = std::pow(2.0 * radius + 1.0, dim);
  if (entries > static_cast<double>(budget)) {
    throw ResourceError(std::string(what) + ": table with " + std::to_string(entries) +
                        " entries exceeds the memory budget of " + std::to_string(budget));
  }
}

double log_poisson(double mean, int n) {
  return -mean + n * std::log(mean) - std::lgamma(n + 1.0);
}

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      c_ += (sum_ - t) + x;
    } else {
      c_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + c_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

// Smallest M with P(Poisson(mean) > M) < tol.
int series_cutoff(double mean, double tol) {
  int m = static_cast<int>(std::floor(mean));
  while (poisson_tail(mean, m) >= tol) ++m;
  return m;
}

}  // namespace

double poisson_tail(double mean, int n) {
  if (mean < 0.0) throw InvalidArgument("Poisson mean must be nonnegative");
  if (n < 0) return 1.0;
  if (mean == 0.0) return 0.0;
  if (n + 2 > mean) {
    // Terms beyond n+1 decay at least geometrically with ratio mean/(n+2).
    double first = std::exp(log_poisson(mean, n + 1));
    return first / (1.0 - mean / (n + 2.0));
  }
  CompensatedSum cdf;
  for (int m = 0; m <= n; ++m) cdf.add(std::exp(log_poisson(mean, m)));
  return std::clamp(1.0 - cdf.value(), 0.0, 1.0);
}

DiscreteKernel::DiscreteKernel(int dim, int steps, std::vector<double> values)
    : box_(dim, steps), steps_(steps), values_(std::move(values)) {
  if (values_.size() != box_.size()) throw InvalidArgument("kernel values do not match box");
}

double DiscreteKernel::value(const Site& y) const {
  if (!box_.contains(y)) return 0.0;
  return values_[box_.index(y)];
}

double DiscreteKernel::sum() const {
  CompensatedSum s;
  for (double v : values_) s.add(v);
  return s.value();
}

DiscreteKernel discrete_kernel(int dim, int steps, std::size_t budget) {
  if (dim < 1) throw InvalidArgument("dimension must be at least 1");
  if (steps < 0) throw InvalidArgument("step count must be nonnegative");
  check_budget(dim, steps, budget, "discrete_kernel");
  Box box(dim, steps);
  std::vector<double> cur(box.size(), 0.0);
  std::vector<double> next(box.size(), 0.0);
  cur[box.index(origin(dim))] = 1.0;

  std::vector<std::size_t> stride(static_cast<std::size_t>(dim));
  std::size_t s = 1;
  for (int a = dim; a-- > 0;) {
    stride[static_cast<std::size_t>(a)] = s;
    s *= static_cast<std::size_t>(box.side());
  }
  const double w = 1.0 / (2.0 * dim);
  for (int n = 0; n < steps; ++n) {
    std::fill(next.begin(), next.end(), 0.0);
    for (BoxCursor c(box); c.valid(); c.next()) {
      double v = cur[c.index()];
      if (v == 0.0) continue;
      const Site& x = c.site();
      for (int a = 0; a < dim; ++a) {
        const auto sa = stride[static_cast<std::size_t>(a)];
        if (x[static_cast<std::size_t>(a)] < steps) next[c.index() + sa] += w * v;
        if (x[static_cast<std::size_t>(a)] > -steps) next[c.index() - sa] += w * v;
      }
    }
    std::swap(cur, next);
  }
  return DiscreteKernel(dim, steps, std::move(cur));
}

ExactDiscreteKernel::ExactDiscreteKernel(int dim, int steps, std::size_t budget)
    : box_(dim, std::max(steps, 0)), steps_(steps) {
  if (steps < 0) throw InvalidArgument("step count must be nonnegative");
  if (steps * std::log2(2.0 * dim) >= 127.0) {
    throw ResourceError("exact kernel counts overflow 128 bits");
  }
  check_budget(dim, steps, budget, "exact_discrete_kernel");
  total_ = 1;
  for (int n = 0; n < steps; ++n) total_ *= static_cast<unsigned __int128>(2 * dim);

  std::vector<unsigned __int128> cur(box_.size(), 0);
  std::vector<unsigned __int128> next(box_.size(), 0);
  cur[box_.index(origin(dim))] = 1;
  std::vector<std::size_t> stride(static_cast<std::size_t>(dim));
  std::size_t s = 1;
  for (int a = dim; a-- > 0;) {
    stride[static_cast<std::size_t>(a)] = s;
    s *= static_cast<std::size_t>(box_.side());
  }
  for (int n = 0; n < steps; ++n) {
    std::fill(next.begin(), next.end(), 0);
    for (BoxCursor c(box_); c.valid(); c.next()) {
      auto v = cur[c.index()];
      if (v == 0) continue;
      const Site& x = c.site();
      for (int a = 0; a < dim; ++a) {
        const auto sa = stride[static_cast<std::size_t>(a)];
        if (x[static_cast<std::size_t>(a)] < steps) next[c.index() + sa] += v;
        if (x[static_cast<std::size_t>(a)] > -steps) next[c.index() - sa] += v;
      }
    }
    std::swap(cur, next);
  }
  counts_ = std::move(cur);
}

unsigned __int128 ExactDiscreteKernel::count(const Site& y) const {
  if (!box_.contains(y)) return 0;
  return counts_[box_.index(y)];
}

long double ExactDiscreteKernel::probability(const Site& y) const {
  return static_cast<long double>(count(y)) / static_cast<long double>(total_);
}

KernelTable::KernelTable(int dim, double t, int radius, double series_tol,
                         std::vector<double> axis, double series_remainder,
                         double box_remainder, int series_terms)
    : dim_(dim),
      t_(t),
      radius_(radius),
      series_tol_(series_tol),
      axis_(std::move(axis)),
      series_remainder_(series_remainder),
      box_remainder_(box_remainder),
      series_terms_(series_terms) {
  if (axis_.size() != static_cast<std::size_t>(2 * radius + 1)) {
    throw InvalidArgument("axis profile does not match radius");
  }
}

double KernelTable::axis_value(int k) const {
  if (k < -radius_ || k > radius_) return 0.0;
  return axis_[static_cast<std::size_t>(k + radius_)];
}

double KernelTable::value(const Site& y) const {
  if (static_cast<int>(y.size()) != dim_) throw InvalidArgument("site dimension mismatch");
  // Canonical factor order: ascending |y_i|.
  int buf[16];
  std::vector<int> heap;
  int* mags = buf;
  if (y.size() > 16) {
    heap.resize(y.size());
    mags = heap.data();
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    mags[i] = std::abs(y[i]);
    if (mags[i] > radius_) return 0.0;
  }
  std::sort(mags, mags + y.size());
  double v = 1.0;
  for (std::size_t i = 0; i < y.size(); ++i) v *= axis_[static_cast<std::size_t>(mags[i] + radius_)];
  return v;
}

double KernelTable::sum() const {
  CompensatedSum s;
  // Smallest terms first: outermost entries inward.
  for (int k = radius_; k >= 1; --k) {
    s.add(axis_value(-k));
    s.add(axis_value(k));
  }
  s.add(axis_value(0));
  double one_d = s.value();
  double total = 1.0;
  for (int i = 0; i < dim_; ++i) total *= one_d;
  return total;
}

std::vector<double> KernelTable::dense() const {
  Box b = box();
  std::vector<double> out(b.size());
  for (BoxCursor c(b); c.valid(); c.next()) out[c.index()] = value(c.site());
  return out;
}

double out_of_box_bound(int dim, double t, int radius) {
  if (t <= 0.0) return 0.0;
  const double s = t / dim;
  const double r1 = radius + 1.0;
  // Sum over one-dimensional jump counts m > radius, then bound the rest by
  // the Poisson tail.
  int m_max = std::max(radius + 1, series_cutoff(s, 1e-30));
  m_max = std::max(m_max, radius + 1);
  CompensatedSum acc;
  for (int m = radius + 1; m <= m_max; ++m) {
    double h = std::min(1.0, 2.0 * std::exp(-r1 * r1 / (2.0 * m)));
    acc.add(std::exp(log_poisson(s, m)) * h);
  }
  acc.add(poisson_tail(s, m_max));
  return std::min(1.0, dim * acc.value());
}

double chernoff_tail(int dim, double t, int radius) {
  if (t <= 0.0) return 0.0;
  const double s = t / dim;
  const double r1 = radius + 1.0;
  const double a = r1 / s;
  // min over lambda of s (cosh(lambda) - 1) - lambda r1, at lambda = asinh(a).
  const double exponent = s * (std::sqrt(1.0 + a * a) - 1.0) - r1 * std::asinh(a);
  return std::min(1.0, 2.0 * dim * std::exp(exponent));
}

int chernoff_radius(int dim, double t, double tol) {
  if (tol <= 0.0) throw InvalidArgument("tolerance must be positive");
  int r = 0;
  while (chernoff_tail(dim, t, r) > tol) ++r;
  return r;
}

KernelTable kernel_table(int dim, double t, int radius, double series_tol, std::size_t budget) {
  if (dim < 1) throw InvalidArgument("dimension must be at least 1");
  if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidArgument("kernel time must be nonnegative");
  if (radius < 1) throw InvalidArgument("kernel radius must be at least 1");
  if (!(series_tol > 0.0)) throw InvalidArgument("series tolerance must be positive");
  check_budget(dim, radius, budget, "kernel_table");

  std::vector<double> axis(static_cast<std::size_t>(2 * radius + 1), 0.0);
  if (t == 0.0) {
    axis[static_cast<std::size_t>(radius)] = 1.0;
    return KernelTable(dim, t, radius, series_tol, std::move(axis), 0.0, 0.0, 0);
  }

  const double s = t / dim;
  const int m_cut = series_cutoff(s, series_tol / dim);
  const double half = 0.5 * s;
  const double half_sq = half * half;
  for (int k = 0; k <= radius && k <= m_cut; ++k) {
    // e^{-s} sum_j (s/2)^{k+2j} / (j! (j+k)!), j <= (m_cut - k) / 2.
    double term = std::exp(-s + k * std::log(half) - std::lgamma(k + 1.0));
    CompensatedSum g;
    const int j_max = (m_cut - k) / 2;
    for (int j = 0; j <= j_max; ++j) {
      g.add(term);
      term *= half_sq / ((j + 1.0) * (j + 1.0 + k));
    }
    axis[static_cast<std::size_t>(radius + k)] = g.value();
    axis[static_cast<std::size_t>(radius - k)] = g.value();
  }
  const double series_rem = std::min(1.0, dim * poisson_tail(s, m_cut));
  const double box_rem = out_of_box_bound(dim, t, radius);
  return KernelTable(dim, t, radius, series_tol, std::move(axis), series_rem, box_rem, m_cut);
}

RatioExtremes ratio_extremes(const KernelTable& table, double sigma, const Site& y1,
                             const Site& y2) {
  if (!(sigma > 0.0 && sigma < 1.0)) throw InvalidArgument("sigma must lie in (0,1)");
  if (!(table.time() > 0.0)) throw InvalidArgument("ratio_extremes needs t > 0");
  const int dim = table.dim();
  if (static_cast<int>(y1.size()) != dim || static_cast<int>(y2.size()) != dim) {
    throw InvalidArgument("site dimension mismatch");
  }
  const double ball = std::pow(table.time(), sigma);
  const double reach = ball + std::max(euclidean_norm(y1), euclidean_norm(y2));
  if (reach > table.radius()) {
    throw CoverageError("kernel table radius " + std::to_string(table.radius()) +
                        " does not cover t^sigma + max(|y1|,|y2|) = " + std::to_string(reach));
  }
  RatioExtremes out;
  bool first = true;
  const Box scan(dim, static_cast<int>(std::floor(ball)));
  for (BoxCursor c(scan); c.valid(); c.next()) {
    const Site& x = c.site();
    if (euclidean_norm(x) > ball) continue;
    const double num = table.value(y1 - x);
    const double den = table.value(y2 - x);
    if (!(den > 0.0) || !(num > 0.0)) {
      throw CoverageError("kernel underflow at site " + format_site(x));
    }
    const double r = num / den;
    ++out.sites_scanned;
    if (first || r < out.inf_ratio) {
      out.inf_ratio = r;
      out.argmin = x;
    }
    if (first || r > out.sup_ratio) {
      out.sup_ratio = r;
      out.argmax = x;
    }
    first = false;
  }
  return out;
}

RatioExtremes ratio_extremes(int dim, double t, double sigma, const Site& y1, const Site& y2,
                             int radius, double series_tol) {
  return ratio_extremes(kernel_table(dim, t, radius, series_tol), sigma, y1, y2);
}

}  // namespace pamlab
