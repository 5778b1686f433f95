#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pamlab/lattice.hpp"
#include "pamlab/noise.hpp"
#include "pamlab/random.hpp"

namespace pamlab {

/// Continuous-time simple random walk path on [s, t].
struct PolymerPath {
  Site start;
  double s = 0.0;
  double t = 0.0;
  std::vector<double> jump_times;  ///< strictly increasing, inside (s, t)
  std::vector<Site> sites;         ///< sites[0] = start, sites[k] after the k-th jump

  std::size_t jumps() const { return jump_times.size(); }
  const Site& end() const { return sites.back(); }
  /// Right-continuous position at time r.
  const Site& at(double r) const;
  /// Throws InvariantError unless times are ordered and steps are nearest-neighbour.
  void validate() const;
};

PolymerPath sample_path(CounterRng& rng, const Site& x, double s, double t);

/// Path with the time direction reversed: positions at r become positions at s + t - r.
PolymerPath reverse_path(const PolymerPath& path, double s, double t);

/// Action sum over steps j of the increment at the site occupied at time
/// j dt (right-continuous), i.e. occupation intervals snapped to the grid.
/// Endpoints must be grid times.
double action(const PolymerPath& path, const NoiseField& noise);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
  std::size_t hits = 0;       ///< samples with a nonzero weight
  bool degenerate = false;    ///< no sample contributed
  std::string estimand;       ///< "point_to_point", "point_to_line", "line_to_point"
  Site x;
  Site y;
  double s = 0.0;
  double t = 0.0;
};

/// Sampling options: sample i draws from CounterRng(seed, noise realization,
/// stream_base + i), so results do not depend on the worker count.
struct McOptions {
  double beta = 0.2;
  std::uint64_t seed = 0;
  std::uint64_t stream_base = 0;
  int workers = 1;
};

/// Z_{x,s}^{y,t}: average of 1{path ends at y} exp(beta A - beta^2 (t - s) / 2) over free paths.
McEstimate mc_point_to_point(const NoiseField& noise, const Site& x, double s, const Site& y, double t,
                             std::size_t n_samples, const McOptions& opt);

/// Z_{x,s}^t with a free endpoint.
McEstimate mc_point_to_line(const NoiseField& noise, const Site& x, double s, double t,
                            std::size_t n_samples, const McOptions& opt);

/// Z_s^{y,t}: paths sampled backwards from (y, t) to time s.
McEstimate mc_line_to_point(const NoiseField& noise, double s, const Site& y, double t,
                            std::size_t n_samples, const McOptions& opt);

}  // namespace pamlab
