#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "pamlab/errors.hpp"
#include "pamlab/evolution.hpp"
#include "pamlab/kernels.hpp"
#include "pamlab/polymer.hpp"

using namespace pamlab;

namespace {

PolymerPath manual_path(Site x, double s, double t, std::vector<double> times, std::vector<Site> steps) {
  PolymerPath p;
  p.start = x;
  p.s = s;
  p.t = t;
  p.sites.push_back(x);
  for (std::size_t k = 0; k < times.size(); ++k) {
    p.jump_times.push_back(times[k]);
    p.sites.push_back(p.sites.back() + steps[k]);
  }
  return p;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("sampled paths: jump counts, structure, zero-jump paths") {
  CounterRng rng(1, 0, 0);
  const int n = 100000;
  double sum = 0.0;
  bool saw_constant = false;
  for (int i = 0; i < n; ++i) {
    auto p = sample_path(rng, origin(3), 1.0, 3.0);
    if (i < 1000) p.validate();
    sum += static_cast<double>(p.jumps());
    if (p.jumps() == 0 && !saw_constant) {
      saw_constant = true;
      CHECK(p.end() == origin(3));
      CHECK(p.at(2.5) == origin(3));
    }
  }
  CHECK(saw_constant);
  CHECK(std::fabs(sum / n - 2.0) < 3.0 * std::sqrt(2.0 / n));
  CHECK_THROWS_AS(sample_path(rng, origin(3), 1.0, 1.0), InvalidArgument);
}

TEST_CASE("endpoint law matches the heat kernel") {
  CounterRng rng(2, 0, 0);
  const int n = 100000;
  const double t = 1.5;
  std::vector<Site> ends;
  ends.reserve(n);
  for (int i = 0; i < n; ++i) ends.push_back(sample_path(rng, origin(3), 0.0, t).end());
  auto table = kernel_table(3, t, 12, 1e-15);
  auto tv = [&](const std::vector<std::size_t>& idx) {
    std::map<Site, double> freq;
    for (std::size_t i : idx) freq[ends[i]] += 1.0 / static_cast<double>(idx.size());
    double d = 0.0, covered = 0.0;
    for (auto& [x, f] : freq) {
      const double p = table.value(x);
      d += std::fabs(f - p);
      covered += p;
    }
    return 0.5 * (d + (1.0 - covered));
  };
  std::vector<std::size_t> all(n);
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
  const double observed = tv(all);
  // Bootstrap scale: distance of resamples to the empirical law.
  double boot = 0.0;
  const int reps = 30;
  std::map<Site, double> emp;
  for (const auto& e : ends) emp[e] += 1.0 / n;
  for (int r = 0; r < reps; ++r) {
    std::map<Site, double> freq;
    for (int i = 0; i < n; ++i) freq[ends[rng.below(n)]] += 1.0 / n;
    double d = 0.0;
    for (auto& [x, f] : emp) d += std::fabs(freq[x] - f);
    boot += 0.5 * d / reps;
  }
  CHECK(observed < 3.0 * boot);
}

TEST_CASE("action bookkeeping") {
  NoiseField noise(3, 20, -2.0, 4.0, 0.05, 9, 1);
  const Site x = {1, -1, 0};
  auto still = manual_path(x, 0.5, 2.0, {}, {});
  CHECK(action(still, noise) == doctest::Approx(noise.path_value(x, 2.0) - noise.path_value(x, 0.5)).epsilon(1e-12));

  const Site e = unit_vector(3, 2);
  auto one = manual_path(x, 0.5, 2.0, {1.25}, {e});
  const double expect = (noise.path_value(x, 1.25) - noise.path_value(x, 0.5)) +
                        (noise.path_value(x + e, 2.0) - noise.path_value(x + e, 1.25));
  CHECK(action(one, noise) == doctest::Approx(expect).epsilon(1e-12));

  // Off-grid jumps take effect from the next grid time.
  auto late = manual_path(x, 0.5, 2.0, {1.2301}, {e});
  const double snapped = (noise.path_value(x, 1.25) - noise.path_value(x, 0.5)) +
                         (noise.path_value(x + e, 2.0) - noise.path_value(x + e, 1.25));
  CHECK(action(late, noise) == doctest::Approx(snapped).epsilon(1e-12));

  auto zero = NoiseField::zero(3, 20, -2.0, 4.0, 0.05);
  CounterRng rng(3, 0, 0);
  for (int i = 0; i < 20; ++i) CHECK(action(sample_path(rng, x, -1.0, 3.0), zero) == 0.0);

  auto far = manual_path({20, 0, 0}, 0.0, 1.0, {0.5}, {unit_vector(3, 0)});
  CHECK_THROWS_AS(action(far, noise), CoverageError);
  CHECK_THROWS_AS(action(manual_path(x, 0.0, 5.0, {}, {}), noise), CoverageError);
  CHECK_THROWS_AS(action(manual_path(x, 0.0, 1.01, {}, {}), noise), InvalidArgument);

  auto rev = reverse_path(one, 0.5, 2.0);
  CHECK(rev.start == x + e);
  CHECK(rev.end() == x);
  CHECK(rev.jump_times[0] == doctest::Approx(1.25));
  rev.validate();
}

TEST_CASE("beta = 0 estimators") {
  auto noise = NoiseField::zero(3, 50, 0.0, 4.0, 0.05);
  McOptions opt;
  opt.beta = 0.0;
  opt.seed = 5;
  auto z = mc_point_to_point(noise, origin(3), 0.0, unit_vector(3, 0), 2.0, 50000, opt);
  const double p = kernel_table(3, 2.0, 10, 1e-15).value(unit_vector(3, 0));
  CHECK(std::fabs(z.mean - p) < 3.0 * z.std_error);
  // Conditioning identity: the estimate is the endpoint frequency.
  CHECK(z.mean == doctest::Approx(static_cast<double>(z.hits) / z.n_samples).epsilon(1e-13));
  auto line = mc_point_to_line(noise, origin(3), 0.0, 2.0, 1000, opt);
  CHECK(line.mean == 1.0);
  CHECK(line.std_error == 0.0);
  auto kron = mc_point_to_point(noise, origin(3), 1.0, origin(3), 1.0, 10, opt);
  CHECK(kron.mean == 1.0);
  auto miss = mc_point_to_point(noise, origin(3), 0.0, {30, 0, 0}, 0.5, 100, opt);
  CHECK(miss.degenerate);
  CHECK(miss.mean == 0.0);
}

TEST_CASE("weights are positive and results do not depend on workers") {
  NoiseField noise(3, 60, 0.0, 4.0, 0.05, 6, 2);
  McOptions opt;
  opt.beta = 0.6;
  opt.seed = 8;
  auto a = mc_point_to_line(noise, origin(3), 0.0, 3.0, 5000, opt);
  opt.workers = 4;
  auto b = mc_point_to_line(noise, origin(3), 0.0, 3.0, 5000, opt);
  CHECK(a.mean == b.mean);
  CHECK(a.std_error == b.std_error);
  CHECK(a.hits == a.n_samples);
  CHECK(a.mean > 0.0);
}

TEST_CASE("standard error scales as n^-1/2") {
  NoiseField noise(3, 60, 0.0, 4.0, 0.05, 6, 3);
  McOptions opt;
  opt.beta = 0.5;
  opt.seed = 12;
  opt.workers = 4;
  std::vector<double> lx, ly;
  for (std::size_t n : {2000u, 4000u, 8000u, 16000u, 32000u}) {
    auto e = mc_point_to_line(noise, origin(3), 0.0, 2.0, n, opt);
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(e.std_error));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / lx.size();
    my += ly[i] / ly.size();
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  CHECK(std::fabs(sxy / sxx + 0.5) < 0.05);
}

TEST_CASE("Monte Carlo agrees with the splitting scheme on a fixed environment") {
  const double beta = 0.5;
  NoiseField noise(3, 40, -3.0, 3.0, 0.05, 31, 5);
  auto plan = EvolutionPlan::make(3, 0.05, beta);
  plan.radius = 40;
  McOptions opt;
  opt.beta = beta;
  opt.seed = 4;
  opt.workers = 4;
  const Site y = unit_vector(3, 1);
  auto field = point_to_point_field(origin(3), 0.0, 2.0, noise, plan);
  auto mc = mc_point_to_point(noise, origin(3), 0.0, y, 2.0, 100000, opt);
  CHECK(std::fabs(mc.mean - field.value(y)) < 3.0 * mc.std_error);

  auto adj = adjoint_sweep(0.0, 2.0, noise, plan, 1);
  auto line = mc_point_to_line(noise, origin(3), 0.0, 2.0, 20000, opt);
  CHECK(std::fabs(line.mean - adj.value(origin(3))) < 3.0 * line.std_error);

  auto bp = backward_partition(-2.0, 1.0, noise, plan, 1);
  auto l2p = mc_line_to_point(noise, -2.0, y, 1.0, 20000, opt);
  CHECK(std::fabs(l2p.mean - bp.value(y)) < 3.0 * l2p.std_error);
}

TEST_CASE("averaging over environments recovers the kernel and normalization") {
  McOptions opt;
  opt.beta = 0.4;
  opt.seed = 17;
  opt.workers = 4;
  const int reps = 200;
  double s = 0, ss = 0, sl = 0, ssl = 0;
  for (int r = 0; r < reps; ++r) {
    NoiseField noise(3, 40, 0.0, 1.0, 0.05, 50, static_cast<std::uint64_t>(r));
    const double v = mc_point_to_point(noise, origin(3), 0.0, origin(3), 1.0, 2000, opt).mean;
    const double l = mc_point_to_line(noise, origin(3), 0.0, 1.0, 500, opt).mean;
    s += v;
    ss += v * v;
    sl += l;
    ssl += l * l;
  }
  const double mean = s / reps, se = std::sqrt((ss / reps - mean * mean) / (reps - 1));
  const double p = kernel_table(3, 1.0, 10, 1e-15).value(origin(3));
  CHECK(std::fabs(mean - p) < 3.0 * se);
  const double ml = sl / reps, sel = std::sqrt((ssl / reps - ml * ml) / (reps - 1));
  CHECK(std::fabs(ml - 1.0) < 3.0 * sel);
}

TEST_CASE("time reversal in law") {
  McOptions opt;
  opt.beta = 0.6;
  opt.seed = 23;
  opt.workers = 4;
  std::vector<double> fwd, bwd;
  for (int r = 0; r < 300; ++r) {
    NoiseField noise(3, 40, -2.0, 2.0, 0.05, 60, static_cast<std::uint64_t>(r));
    fwd.push_back(mc_point_to_line(noise, origin(3), 0.0, 1.5, 400, opt).mean);
    bwd.push_back(mc_line_to_point(noise, -1.5, origin(3), 0.0, 400, opt).mean);
  }
  // Two-sample KS at the 0.1% level.
  CHECK(ks_two_sample(fwd, bwd) < 1.95 * std::sqrt(2.0 / 300.0));
}
