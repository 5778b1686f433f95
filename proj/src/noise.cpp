#include "pamlab/noise.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>
#include <string>

#include "pamlab/errors.hpp"
#include "pamlab/random.hpp"

namespace pamlab {
namespace {

std::int64_t grid_index(double t, double dt, const char* what) {
  const double q = t / dt;
  const double r = std::nearbyint(q);
  if (std::fabs(q - r) > 1e-9 * std::max(1.0, std::fabs(q))) {
    throw InvalidArgument(std::string(what) + " " + std::to_string(t) +
                          " is not a multiple of the time step " + std::to_string(dt));
  }
  return static_cast<std::int64_t>(r);
}

// Sites along the last axis are paired: both words of one Philox block
// feed the two sites sharing floor(x_last / 2).
inline Philox4x32::Counter counter_for(const int* x, int dim, std::int64_t j) {
  Philox4x32::Counter c = {0, 0, 0, static_cast<std::uint32_t>(j)};
  const int last = x[dim - 1] >> 1;
  if (dim == 1) {
    c[0] = static_cast<std::uint32_t>(last);
  } else if (dim == 2) {
    c[0] = static_cast<std::uint32_t>(x[0]);
    c[1] = static_cast<std::uint32_t>(last);
  } else {
    c[0] = static_cast<std::uint32_t>(x[0]);
    c[1] = static_cast<std::uint32_t>(x[1]);
    if (dim == 3) {
      c[2] = static_cast<std::uint32_t>(last);
    } else {
      std::uint64_t h = 0x243F6A8885A308D3ULL;
      for (int i = 2; i < dim - 1; ++i) h = splitmix64(h ^ static_cast<std::uint32_t>(x[i]));
      c[2] = static_cast<std::uint32_t>(splitmix64(h ^ static_cast<std::uint32_t>(last)));
    }
  }
  return c;
}

inline std::uint64_t word_for(const int* x, int dim, std::int64_t j, std::uint64_t key) {
  const auto out = Philox4x32::apply(counter_for(x, dim, j), key);
  return (x[dim - 1] & 1) ? (std::uint64_t{out[2]} << 32) | out[3]
                          : (std::uint64_t{out[0]} << 32) | out[1];
}

// Philox blocks for counters that differ only in slot `Slot`, which runs
// over first, first + 1, ...; two words per block.
template <int Slot>
void philox_run(Philox4x32::Counter base, std::uint32_t first, std::size_t count,
                std::uint64_t key, std::uint64_t* w) {
  const std::uint32_t k0 = static_cast<std::uint32_t>(key);
  const std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
#pragma omp simd
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t c[4] = {base[0], base[1], base[2], base[3]};
    c[Slot] = first + static_cast<std::uint32_t>(i);
    std::uint32_t c0 = c[0], c1 = c[1], c2 = c[2], c3 = c[3];
    std::uint32_t r0 = k0, r1 = k1;
    for (int r = 0; r < 10; ++r) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c0;
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c2;
      const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ r0;
      const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ r1;
      c0 = n0;
      c1 = static_cast<std::uint32_t>(p1);
      c2 = n2;
      c3 = static_cast<std::uint32_t>(p0);
      r0 += 0x9E3779B9u;
      r1 += 0xBB67AE85u;
    }
    w[2 * i] = (std::uint64_t{c0} << 32) | c1;
    w[2 * i + 1] = (std::uint64_t{c2} << 32) | c3;
  }
}

void bits_to_normals(std::size_t n, const std::uint64_t* a, double* z) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) z[i] = apply_sign_bit(normal_quantile_central(half_uniform(a[i])), a[i]);
  thread_local std::vector<std::uint32_t> idx;
  thread_local std::vector<double> p;
  if (idx.size() < n) {
    idx.resize(n);
    p.resize(n);
  }
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[k] = static_cast<std::uint32_t>(i);
    k += normal_quantile_is_central(half_uniform(a[i])) ? 0 : 1;
  }
  for (std::size_t j = 0; j < k; ++j) p[j] = half_uniform(a[idx[j]]);
  double* pd = p.data();
#pragma omp simd
  for (std::size_t j = 0; j < k; ++j) pd[j] = normal_quantile_tail(pd[j]);
  for (std::size_t j = 0; j < k; ++j) z[idx[j]] = apply_sign_bit(pd[j], a[idx[j]]);
}

}  // namespace

NoiseField::NoiseField(int dim, int radius, double s_min, double t_max, double dt,
                       std::uint64_t seed, std::uint64_t realization)
    : dim_(dim), radius_(radius), dt_(dt), seed_(seed), realization_(realization) {
  if (dim < 1) throw InvalidArgument("dimension must be at least 1");
  if (radius < 0) throw InvalidArgument("noise radius must be nonnegative");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("time step must be positive");
  if (s_min > 0.0 || t_max < 0.0) throw InvalidArgument("noise window must contain time 0");
  first_ = grid_index(s_min, dt, "window start");
  end_ = grid_index(t_max, dt, "window end");
  if (first_ < INT32_MIN || end_ > INT32_MAX) throw InvalidArgument("noise window too long");
  key_ = mix_key(seed, realization, static_cast<std::uint64_t>(dim));
}

NoiseField NoiseField::zero(int dim, int radius, double s_min, double t_max, double dt) {
  NoiseField f(dim, radius, s_min, t_max, dt, 0, 0);
  f.zero_ = true;
  return f;
}

std::int64_t NoiseField::step_of(double t) const { return grid_index(t, dt_, "time"); }

bool NoiseField::covers(const Box& box) const {
  if (box.dim() != dim_) return false;
  return sup_norm(box.center()) + box.radius() <= radius_;
}

void NoiseField::check_site(const Site& x) const {
  if (static_cast<int>(x.size()) != dim_) throw InvalidArgument("site dimension mismatch");
  if (sup_norm(x) > radius_) {
    throw CoverageError("site " + format_site(x) + " lies outside the noise radius " +
                        std::to_string(radius_));
  }
}

void NoiseField::check_step(std::int64_t j) const {
  if (j < first_ || j >= end_) {
    throw CoverageError("step " + std::to_string(j) + " outside the noise window [" +
                        std::to_string(first_) + ", " + std::to_string(end_) + ")");
  }
}

double NoiseField::standard_normal(const Site& x, std::int64_t j) const {
  if (zero_) return 0.0;
  return normal_from_bits(word_for(x.data(), dim_, j + shift_, key_));
}

double NoiseField::increment(const Site& x, std::int64_t j) const {
  check_site(x);
  check_step(j);
  return std::sqrt(dt_) * standard_normal(x, j);
}

double NoiseField::path_value_at_step(const Site& x, std::int64_t k) const {
  check_site(x);
  if (k < first_ || k > end_) {
    throw CoverageError("time step " + std::to_string(k) + " outside the noise window");
  }
  double s = 0.0;
  if (k > 0) {
    for (std::int64_t j = 0; j < k; ++j) s += standard_normal(x, j);
  } else {
    for (std::int64_t j = -1; j >= k; --j) s -= standard_normal(x, j);
  }
  return std::sqrt(dt_) * s;
}

double NoiseField::path_value(const Site& x, double t) const {
  return path_value_at_step(x, step_of(t));
}

NoiseField NoiseField::wiener_shift(double s) const {
  const std::int64_t k = step_of(s);
  if (k < first_ || k > end_) throw CoverageError("shift moves time 0 outside the noise window");
  NoiseField out = *this;
  out.first_ = first_ - k;
  out.end_ = end_ - k;
  out.shift_ = shift_ + k;
  return out;
}

void NoiseField::fill_standard_normals(const Box& box, std::int64_t j, double* out) const {
  if (box.dim() != dim_) throw InvalidArgument("box dimension mismatch");
  if (!covers(box)) {
    throw CoverageError("box of radius " + std::to_string(box.radius()) +
                        " exceeds the noise radius " + std::to_string(radius_));
  }
  check_step(j);
  if (zero_) {
    std::fill(out, out + box.size(), 0.0);
    return;
  }
  const std::int64_t step = j + shift_;
  const int side = box.side();
  thread_local std::vector<std::uint64_t> wbuf;
  wbuf.resize(static_cast<std::size_t>(side) + 2);
  const auto d = static_cast<std::size_t>(dim_);
  // Row start sites: odometer over every coordinate but the last.
  Site x = box.center();
  for (std::size_t i = 0; i < d; ++i) x[i] -= box.radius();
  const int lo = x[d - 1];
  const int hi = lo + side - 1;
  const int pair_lo = lo >> 1;
  const int pair_hi = hi >> 1;
  const int skip = lo & 1;
  const std::size_t rows = box.size() / static_cast<std::size_t>(side);
  std::uint64_t* w = wbuf.data();
  for (std::size_t row = 0; row < rows; ++row) {
    const auto ctr = counter_for(x.data(), dim_, step);
    const auto first = static_cast<std::uint32_t>(pair_lo);
    const auto count = static_cast<std::size_t>(pair_hi - pair_lo + 1);
    if (dim_ == 1) {
      philox_run<0>(ctr, first, count, key_, w);
    } else if (dim_ == 2) {
      philox_run<1>(ctr, first, count, key_, w);
    } else if (dim_ == 3) {
      philox_run<2>(ctr, first, count, key_, w);
    } else {
      for (std::size_t k = 0; k < count; ++k) {
        x[d - 1] = 2 * (pair_lo + static_cast<int>(k));
        const auto out = Philox4x32::apply(counter_for(x.data(), dim_, step), key_);
        w[2 * k] = (std::uint64_t{out[0]} << 32) | out[1];
        w[2 * k + 1] = (std::uint64_t{out[2]} << 32) | out[3];
      }
      x[d - 1] = lo;
    }
    bits_to_normals(static_cast<std::size_t>(side), w + skip, out + row * static_cast<std::size_t>(side));
    for (std::size_t a = d - 1; a-- > 0;) {
      if (x[a] < box.center()[a] + box.radius()) {
        ++x[a];
        break;
      }
      x[a] = box.center()[a] - box.radius();
    }
  }
}

NoiseSelftest noise_selftest(const NoiseField& field, std::size_t n) {
  if (n < 2) throw InvalidArgument("selftest needs at least two samples");
  const Box box(field.dim(), std::min(field.radius(), 10));
  const auto steps = static_cast<std::size_t>(field.end_step() - field.first_step());
  if (steps * box.size() < n) throw CoverageError("noise window too small for the selftest");
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = field.first_step() + static_cast<std::int64_t>(i / box.size());
    z[i] = field.standard_normal(box.site(i % box.size()), j);
  }
  NoiseSelftest r;
  r.samples = n;
  r.dt = field.dt();
  double sum = 0.0;
  for (double v : z) sum += v;
  const double mz = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : z) ss += (v - mz) * (v - mz);
  const double vz = ss / static_cast<double>(n - 1);
  r.mean = mz * std::sqrt(field.dt());
  r.variance = vz * field.dt();
  r.mean_z = mz * std::sqrt(static_cast<double>(n));
  r.variance_rel_error = vz - 1.0;
  std::sort(z.begin(), z.end());
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = normal_cdf(z[i]);
    d = std::max(d, static_cast<double>(i + 1) / static_cast<double>(n) - f);
    d = std::max(d, f - static_cast<double>(i) / static_cast<double>(n));
  }
  r.ks_statistic = d;
  r.ks_critical = 1.9495 / std::sqrt(static_cast<double>(n));
  const double var_tol = std::max(0.01, 4.0 * std::sqrt(2.0 / static_cast<double>(n)));
  r.passed = std::fabs(r.mean_z) < 4.0 && std::fabs(r.variance_rel_error) < var_tol &&
             r.ks_statistic < r.ks_critical;
  if (field.is_zero()) r.passed = false;
  return r;
}

}  // namespace pamlab
