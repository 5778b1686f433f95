#include "pamlab/polymer.hpp"

#include <algorithm>
#include <cmath>

#include "pamlab/errors.hpp"
#include "pamlab/parallel.hpp"

namespace pamlab {
namespace {

struct Moments {
  std::size_t n = 0;
  std::size_t hits = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    if (v != 0.0) ++hits;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  void merge(const Moments& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double d = o.mean - mean;
    mean += d * nb / (na + nb);
    m2 += o.m2 + d * d * na * nb / (na + nb);
    n += o.n;
    hits += o.hits;
  }
};

constexpr std::size_t kChunk = 1024;

// Reduction over fixed-size chunks merged in chunk order.
template <class Weight>
Moments sample_moments(std::size_t n_samples, const McOptions& opt, std::uint64_t realization,
                       const Weight& weight) {
  const std::size_t chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<Moments> parts(chunks);
  parallel_for(chunks, opt.workers, [&](std::size_t c) {
    Moments m;
    const std::size_t lo = c * kChunk, hi = std::min(n_samples, lo + kChunk);
    for (std::size_t i = lo; i < hi; ++i) {
      CounterRng rng(opt.seed, realization, opt.stream_base + i);
      m.add(weight(rng));
    }
    parts[c] = m;
  });
  Moments all;
  for (const auto& p : parts) all.merge(p);
  return all;
}

McEstimate finish(const Moments& m, const char* estimand) {
  McEstimate e;
  e.estimand = estimand;
  e.n_samples = m.n;
  e.hits = m.hits;
  e.mean = m.mean;
  e.std_error = m.n > 1 ? std::sqrt(m.m2 / static_cast<double>(m.n - 1) / static_cast<double>(m.n)) : 0.0;
  e.degenerate = m.hits == 0;
  if (e.degenerate) {
    e.mean = 0.0;
    e.std_error = 0.0;
  }
  return e;
}

void check_times(const NoiseField& noise, double s, double t, std::size_t n_samples) {
  if (!(s <= t)) throw InvalidArgument("Monte Carlo estimate needs s <= t");
  if (n_samples < 1) throw InvalidArgument("Monte Carlo estimate needs at least one sample");
  noise.step_of(s);
  noise.step_of(t);
}

}  // namespace

const Site& PolymerPath::at(double r) const {
  const auto k = std::upper_bound(jump_times.begin(), jump_times.end(), r) - jump_times.begin();
  return sites[static_cast<std::size_t>(k)];
}

void PolymerPath::validate() const {
  if (sites.size() != jump_times.size() + 1) throw InvariantError("path has mismatched sites and jumps");
  if (sites.front() != start) throw InvariantError("path does not begin at its start site");
  double prev = s;
  for (std::size_t k = 0; k < jump_times.size(); ++k) {
    if (!(jump_times[k] > prev) || !(jump_times[k] < t)) throw InvariantError("jump times not increasing in (s, t)");
    prev = jump_times[k];
    if (l1_norm(sites[k + 1] - sites[k]) != 1) throw InvariantError("path step is not nearest-neighbour");
  }
}

PolymerPath sample_path(CounterRng& rng, const Site& x, double s, double t) {
  if (!(s < t)) throw InvalidArgument("sample_path needs s < t");
  PolymerPath p;
  p.start = x;
  p.s = s;
  p.t = t;
  p.sites.push_back(x);
  const auto dim = static_cast<std::uint32_t>(x.size());
  double r = s;
  for (;;) {
    r += rng.exponential();
    if (r >= t) break;
    const std::uint32_t k = rng.below(2 * dim);
    Site next = p.sites.back();
    next[k >> 1] += (k & 1) ? -1 : 1;
    p.jump_times.push_back(r);
    p.sites.push_back(std::move(next));
  }
  return p;
}

PolymerPath reverse_path(const PolymerPath& path, double s, double t) {
  PolymerPath out;
  out.s = s;
  out.t = t;
  out.start = path.end();
  out.sites.assign(path.sites.rbegin(), path.sites.rend());
  out.jump_times.reserve(path.jump_times.size());
  for (auto it = path.jump_times.rbegin(); it != path.jump_times.rend(); ++it) {
    out.jump_times.push_back(s + t - *it);
  }
  return out;
}

double action(const PolymerPath& path, const NoiseField& noise) {
  if (static_cast<int>(path.start.size()) != noise.dim()) throw InvalidArgument("path dimension mismatch");
  const std::int64_t js = noise.step_of(path.s);
  const std::int64_t jt = noise.step_of(path.t);
  if (js < noise.first_step() || jt > noise.end_step()) {
    throw CoverageError("path time range outside the noise window");
  }
  for (const Site& x : path.sites) {
    if (sup_norm(x) > noise.radius()) {
      throw CoverageError("path visits " + format_site(x) + " outside the noise radius");
    }
  }
  const double dt = noise.dt();
  std::size_t k = 0;
  const std::size_t n = path.jump_times.size();
  double sum = 0.0;
  for (std::int64_t j = js; j < jt; ++j) {
    while (k < n && static_cast<std::int64_t>(std::ceil(path.jump_times[k] / dt - 1e-9)) <= j) ++k;
    sum += noise.standard_normal(path.sites[k], j);
  }
  return std::sqrt(dt) * sum;
}

McEstimate mc_point_to_point(const NoiseField& noise, const Site& x, double s, const Site& y, double t,
                             std::size_t n_samples, const McOptions& opt) {
  check_times(noise, s, t, n_samples);
  McEstimate e;
  if (t == s) {
    Moments m;
    for (std::size_t i = 0; i < n_samples; ++i) m.add(x == y ? 1.0 : 0.0);
    e = finish(m, "point_to_point");
  } else {
    const double comp = 0.5 * opt.beta * opt.beta * (t - s);
    e = finish(sample_moments(n_samples, opt, noise.realization(),
                              [&](CounterRng& rng) {
                                const PolymerPath p = sample_path(rng, x, s, t);
                                if (p.end() != y) return 0.0;
                                return std::exp(opt.beta * action(p, noise) - comp);
                              }),
               "point_to_point");
  }
  e.x = x;
  e.y = y;
  e.s = s;
  e.t = t;
  return e;
}

McEstimate mc_point_to_line(const NoiseField& noise, const Site& x, double s, double t,
                            std::size_t n_samples, const McOptions& opt) {
  check_times(noise, s, t, n_samples);
  McEstimate e;
  if (t == s) {
    Moments m;
    for (std::size_t i = 0; i < n_samples; ++i) m.add(1.0);
    e = finish(m, "point_to_line");
  } else {
    const double comp = 0.5 * opt.beta * opt.beta * (t - s);
    e = finish(sample_moments(n_samples, opt, noise.realization(),
                              [&](CounterRng& rng) {
                                return std::exp(opt.beta * action(sample_path(rng, x, s, t), noise) - comp);
                              }),
               "point_to_line");
  }
  e.x = x;
  e.s = s;
  e.t = t;
  return e;
}

McEstimate mc_line_to_point(const NoiseField& noise, double s, const Site& y, double t,
                            std::size_t n_samples, const McOptions& opt) {
  check_times(noise, s, t, n_samples);
  McEstimate e;
  if (t == s) {
    Moments m;
    for (std::size_t i = 0; i < n_samples; ++i) m.add(1.0);
    e = finish(m, "line_to_point");
  } else {
    const double comp = 0.5 * opt.beta * opt.beta * (t - s);
    e = finish(sample_moments(n_samples, opt, noise.realization(),
                              [&](CounterRng& rng) {
                                const PolymerPath p = reverse_path(sample_path(rng, y, s, t), s, t);
                                return std::exp(opt.beta * action(p, noise) - comp);
                              }),
               "line_to_point");
  }
  e.y = y;
  e.s = s;
  e.t = t;
  return e;
}

}  // namespace pamlab
