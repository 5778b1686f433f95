#pragma once

#include <cstdint>
#include <vector>

#include "pamlab/lattice.hpp"

namespace pamlab {

/// Site-indexed two-sided Brownian environment on a time grid.
///
/// Step j covers [j dt, (j+1) dt). Every increment is a pure function of
/// (seed, realization, site, j + shift), so enlarging the box or the window
/// never changes values already drawn, and Wiener shifts compose exactly.
class NoiseField {
 public:
  NoiseField(int dim, int radius, double s_min, double t_max, double dt, std::uint64_t seed,
             std::uint64_t realization);

  /// Environment with every increment equal to zero.
  static NoiseField zero(int dim, int radius, double s_min, double t_max, double dt);

  int dim() const { return dim_; }
  int radius() const { return radius_; }
  double dt() const { return dt_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t realization() const { return realization_; }
  bool is_zero() const { return zero_; }
  std::int64_t shift_steps() const { return shift_; }

  /// Valid step indices are [first_step, end_step).
  std::int64_t first_step() const { return first_; }
  std::int64_t end_step() const { return end_; }
  double s_min() const { return static_cast<double>(first_) * dt_; }
  double t_max() const { return static_cast<double>(end_) * dt_; }

  /// Grid index of time t; throws for off-grid times.
  std::int64_t step_of(double t) const;
  bool covers(const Box& box) const;

  double increment(const Site& x, std::int64_t j) const;
  /// Standardized increment increment(x, j) / sqrt(dt), without range checks.
  double standard_normal(const Site& x, std::int64_t j) const;

  /// omega(x, t) for a grid time t; omega(x, 0) = 0.
  double path_value(const Site& x, double t) const;
  double path_value_at_step(const Site& x, std::int64_t k) const;

  /// theta_s: path'(x, t) = path(x, t + s) - path(x, s); the window moves by -s.
  NoiseField wiener_shift(double s) const;

  /// Standardized increments of step j for every site of the box, in storage
  /// order. The box must lie inside the noise radius.
  void fill_standard_normals(const Box& box, std::int64_t j, double* out) const;

 private:
  NoiseField() = default;
  void check_site(const Site& x) const;
  void check_step(std::int64_t j) const;

  int dim_ = 0;
  int radius_ = 0;
  double dt_ = 0.0;
  std::int64_t first_ = 0;
  std::int64_t end_ = 0;
  std::int64_t shift_ = 0;
  std::uint64_t seed_ = 0;
  std::uint64_t realization_ = 0;
  std::uint64_t key_ = 0;
  bool zero_ = false;
};

struct NoiseSelftest {
  std::size_t samples = 0;
  double mean = 0.0;
  double variance = 0.0;
  double dt = 0.0;
  double mean_z = 0.0;        ///< mean / (sqrt(dt) / sqrt(n)), approximately standard normal
  double variance_rel_error = 0.0;
  double ks_statistic = 0.0;  ///< sup distance of standardized increments to Phi
  double ks_critical = 0.0;   ///< asymptotic 0.1% critical value 1.9495 / sqrt(n)
  bool passed = false;
};

/// Moment and Kolmogorov-Smirnov checks on n increments drawn from distinct
/// (site, step) pairs in a fixed enumeration order.
NoiseSelftest noise_selftest(const NoiseField& field, std::size_t n);

}  // namespace pamlab
