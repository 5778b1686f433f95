#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pamlab/lattice.hpp"

namespace pamlab {

/// Default cap on the number of table entries a kernel routine may allocate.
inline constexpr std::size_t kDefaultKernelBudget = std::size_t{1} << 27;

/// n-step transition probabilities q_n^y of the discrete-time simple random
/// walk, tabulated on the cube of radius n (which contains the support).
class DiscreteKernel {
 public:
  DiscreteKernel(int dim, int steps, std::vector<double> values);

  int dim() const { return box_.dim(); }
  int steps() const { return steps_; }
  const Box& box() const { return box_; }
  const std::vector<double>& values() const { return values_; }
  double value(const Site& y) const;
  double sum() const;

 private:
  Box box_;
  int steps_;
  std::vector<double> values_;
};

/// Dynamic programming over nearest-neighbour convolutions.
DiscreteKernel discrete_kernel(int dim, int steps, std::size_t budget = kDefaultKernelBudget);

/// Exact walk counts: q_n^y = count(y) / (2d)^n. Counts fit in 128 bits for
/// every (d, n) with (2d)^n < 2^127; the constructor rejects larger requests.
class ExactDiscreteKernel {
 public:
  ExactDiscreteKernel(int dim, int steps, std::size_t budget = kDefaultKernelBudget);

  int dim() const { return box_.dim(); }
  int steps() const { return steps_; }
  const Box& box() const { return box_; }
  unsigned __int128 count(const Site& y) const;
  unsigned __int128 total() const { return total_; }
  long double probability(const Site& y) const;

 private:
  Box box_;
  int steps_;
  unsigned __int128 total_;
  std::vector<unsigned __int128> counts_;
};

/// Continuous-time kernel p_t^y on the cube |y|_inf <= R.
///
/// Coordinates of the rate-1 walk are independent rate-1/d one-dimensional
/// walks, so the table stores one axis profile g(k) = P(X_{t/d} = k) and
/// p_t^y = prod_i g(y_i). Each axis profile is itself the Poisson mixture
/// sum_m e^{-s} s^m/m! b_m(k) of discrete one-dimensional kernels.
class KernelTable {
 public:
  KernelTable(int dim, double t, int radius, double series_tol, std::vector<double> axis,
              double series_remainder, double box_remainder, int series_terms);

  int dim() const { return dim_; }
  double time() const { return t_; }
  int radius() const { return radius_; }
  double series_tol() const { return series_tol_; }
  int series_terms() const { return series_terms_; }

  /// One-dimensional profile g(-R..R).
  const std::vector<double>& axis() const { return axis_; }
  double axis_value(int k) const;

  /// p_t^y, zero outside the table. Factors are multiplied in a canonical
  /// order so the value is bit-identical under permutations and sign flips.
  double value(const Site& y) const;

  /// Sum of all tabulated entries, (sum_k g(k))^d with compensated summation.
  double sum() const;

  /// Certified upper bound on 1 - sum(): series remainder, out-of-box mass and
  /// a floating-point rounding allowance.
  double tail_bound() const { return series_remainder_ + box_remainder_ + rounding_slack(); }
  double rounding_slack() const { return t_ > 0.0 ? 16.0 * dim_ * 2.220446049250313e-16 : 0.0; }
  double series_remainder() const { return series_remainder_; }
  double box_remainder() const { return box_remainder_; }

  Box box() const { return Box(dim_, radius_); }
  std::vector<double> dense() const;

 private:
  int dim_;
  double t_;
  int radius_;
  double series_tol_;
  std::vector<double> axis_;
  double series_remainder_;
  double box_remainder_;
  int series_terms_;
};

KernelTable kernel_table(int dim, double t, int radius, double series_tol,
                         std::size_t budget = kDefaultKernelBudget);

/// Upper bound on P(Poisson(mean) > n).
double poisson_tail(double mean, int n);

/// Upper bound on P(|X_t|_inf > radius) for the rate-1 walk on Z^d, from the
/// per-coordinate Hoeffding bound P(|b_m| > R) <= 2 exp(-(R+1)^2 / (2m)).
double out_of_box_bound(int dim, double t, int radius);

/// Upper bound on P(|X_t|_inf > radius) from the exponential-moment (Chernoff)
/// bound of each coordinate; much tighter than out_of_box_bound for large t.
double chernoff_tail(int dim, double t, int radius);

/// Smallest radius whose chernoff_tail is at most tol.
int chernoff_radius(int dim, double t, double tol);

struct RatioExtremes {
  double inf_ratio = 1.0;
  double sup_ratio = 1.0;
  Site argmin;
  Site argmax;
  std::size_t sites_scanned = 0;
};

/// inf and sup over |x| <= t^sigma (Euclidean) of p_t^{y1-x} / p_t^{y2-x}.
/// Ties resolve to the lexicographically smallest site.
RatioExtremes ratio_extremes(const KernelTable& table, double sigma, const Site& y1,
                             const Site& y2);
RatioExtremes ratio_extremes(int dim, double t, double sigma, const Site& y1, const Site& y2,
                             int radius, double series_tol = 1e-15);

}  // namespace pamlab
