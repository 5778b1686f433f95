#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "pamlab/errors.hpp"
#include "pamlab/experiments.hpp"
#include "pamlab/kernels.hpp"
#include "pamlab/random.hpp"

using namespace pamlab;

namespace {

EvolutionPlan fixed_plan(double beta, int radius) {
  auto plan = EvolutionPlan::make(3, 0.05, beta);
  plan.policy = RadiusPolicy::Fixed;
  plan.radius = radius;
  return plan;
}

EvolutionPlan auto_plan(double beta) {
  auto plan = EvolutionPlan::make(3, 0.05, beta);
  plan.radius = 80;
  return plan;
}

}  // namespace

TEST_CASE("class membership") {
  const FunctionClassSpec spec{1.0, 0.5};
  const Box box(3, 6);
  CHECK(class_check(make_field(box, 0, [](const Site&) { return 1.0; }), spec));
  for (Family fam : {Family::Constant, Family::Growing, Family::Decaying, Family::Random}) {
    auto f = make_field(box, 0, builtin_family(fam, spec, 3));
    CHECK(class_check(f, spec));
    CHECK(f.value(origin(3)) == 1.0);
    // Looser classes contain tighter ones.
    CHECK(class_check(f, FunctionClassSpec{2.0, 0.5}));
    CHECK(class_check(f, FunctionClassSpec{1.0, 0.25}));
  }
  auto expo = make_field(box, 0, [](const Site& x) { return std::exp(euclidean_norm(x)); });
  CHECK_FALSE(class_check(expo, spec));
  CHECK_FALSE(class_check(expo, FunctionClassSpec{1.0, 0.1}));
  auto shifted = make_field(box, 0, [](const Site&) { return 1.5; });
  CHECK_FALSE(class_check(shifted, spec));
  CHECK_THROWS_AS(FunctionClassSpec({0.0, 0.5}).validate(), InvalidArgument);
  CHECK_THROWS_AS(parse_family("cubic"), InvalidArgument);
  CHECK(parse_family(family_name(Family::Random)) == Family::Random);
}

TEST_CASE("sigma must exceed 1/(1+eps)") {
  const FunctionClassSpec spec{1.0, 0.5};
  CHECK_NOTHROW(check_sigma(0.7, spec));
  try {
    check_sigma(0.5, spec);
    FAIL("expected rejection");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("0.666667") != std::string::npos);
  }
  CHECK_THROWS_AS(check_sigma(1.0, spec), InvalidArgument);
}

TEST_CASE("metric on tabulated fields") {
  const Box box(3, 4);
  CounterRng rng(4, 0, 0);
  auto random_field = [&]() {
    return make_field(box, 0, [&](const Site&) { return std::exp(rng.normal()); });
  };
  const double total = lattice_exp_sum(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto f = random_field(), g = random_field(), h = random_field();
    CHECK(metric_d(f, f).value == 0.0);
    CHECK(metric_d(f, g).value == metric_d(g, f).value);
    CHECK(metric_d(f, h).value <= metric_d(f, g).value + metric_d(g, h).value + 1e-15);
    CHECK(metric_d(f, g).value < total);
  }
  auto f = random_field();
  auto m = metric_d(f, f);
  double inside = 0.0;
  for (BoxCursor c(box); c.valid(); c.next()) inside += std::exp(-euclidean_norm(c.site()));
  CHECK(m.remainder >= total - inside);
  CHECK_THROWS_AS(metric_d(f, make_field(Box(3, 3), 0, [](const Site&) { return 1.0; })), InvalidArgument);
}

TEST_CASE("lattice exponential sum by radial counting") {
  // r3(n) by direct counting, then sum_n r3(n) e^{-sqrt n}.
  const int rmax = 60;
  std::vector<double> count(static_cast<std::size_t>(rmax * rmax + 1), 0.0);
  for (int a = -rmax; a <= rmax; ++a) {
    for (int b = -rmax; b <= rmax; ++b) {
      for (int c = -rmax; c <= rmax; ++c) {
        const int n = a * a + b * b + c * c;
        if (n <= rmax * rmax) count[static_cast<std::size_t>(n)] += 1.0;
      }
    }
  }
  double s = 0.0;
  for (std::size_t n = 0; n < count.size(); ++n) s += count[n] * std::exp(-std::sqrt(static_cast<double>(n)));
  CHECK(std::fabs(lattice_exp_sum(3) - s) < 1e-10);
  CHECK(lattice_exp_sum(1) == doctest::Approx(1.0 + 2.0 / (std::exp(1.0) - 1.0)).epsilon(1e-12));
}

TEST_CASE("limiting partition functions: zero disorder and duality") {
  auto flat = auto_plan(0.0);
  auto zero = NoiseField::zero(3, 200, -8.0, 8.0, 0.05);
  auto r = estimate_limit_Z(origin(3), 0.0, zero, flat, {1.0, 2.0, 4.0});
  for (double T : {1.0, 2.0, 4.0}) CHECK(std::fabs(r.get(tagged("Z", T)) - 1.0) < 1e-7);
  CHECK(r.get(tagged("dZ", 1.0)) < 1e-7);
  CHECK_THROWS_AS(estimate_limit_Z(origin(3), 0.0, zero, flat, {2.0, 1.0}), InvalidArgument);

  auto plan = fixed_plan(0.3, 16);
  NoiseField noise(3, 200, -8.0, 8.0, 0.05, 2, 2);
  auto fwd = estimate_limit_Z(unit_vector(3, 0), 0.0, noise, plan, {1.0, 3.0});
  auto adj = adjoint_sweep(0.0, 3.0, noise, plan);
  CHECK(fwd.get(tagged("Z", 3.0)) == doctest::Approx(adj.value(unit_vector(3, 0))).epsilon(1e-12));
  auto bwd = estimate_limit_Z_backward(origin(3), 1.0, noise, plan, {0.0, -2.0});
  auto bp = backward_partition(-2.0, 1.0, noise, plan);
  CHECK(bwd.get(tagged("Zb", -2.0)) == doctest::Approx(bp.value(origin(3))).epsilon(1e-12));
}

TEST_CASE("decay fit recovers a planted exponent") {
  std::vector<double> scales = {4, 8, 16, 32};
  std::vector<std::vector<double>> samples;
  CounterRng rng(9, 0, 0);
  for (int r = 0; r < 2000; ++r) {
    std::vector<double> row;
    for (double s : scales) row.push_back(std::pow(s, -0.25) * std::exp(0.3 * rng.normal()));
    samples.push_back(row);
  }
  auto fit = fit_decay(scales, samples, 2.0, 200, 1);
  CHECK(fit.theta == doctest::Approx(0.5).epsilon(0.1));
  CHECK(fit.ci.lo > 0.0);
  // The planted value lies within three bootstrap standard errors.
  CHECK(std::fabs(fit.theta - 0.5) < 3.0 * (fit.ci.hi - fit.ci.lo) / 3.92);
}

TEST_CASE("factorization residual") {
  const FunctionClassSpec spec{1.0, 0.5};
  auto zero = NoiseField::zero(3, 200, -10.0, 10.0, 0.05);
  auto recs = factorization_residuals({origin(3), unit_vector(3, 0)}, 0.0, origin(3), 2.0, zero, auto_plan(0.0),
                                      2.0, 2.0, 0.7, spec);
  for (const auto& r : recs) {
    CHECK(std::fabs(r.get("delta")) < 1e-7);
    CHECK(r.get("bookkeeping") == 0.0);
  }

  // Assembly from independent building blocks on a common fixed box.
  auto plan = fixed_plan(0.4, 12);
  NoiseField noise(3, 200, -10.0, 10.0, 0.05, 6, 1);
  const Site x = unit_vector(3, 1), y = origin(3);
  auto rec = factorization_residual(x, 0.5, y, 2.5, noise, plan, 1.5, 1.0, 0.7, spec);
  const double z = point_to_point_field(x, 0.5, 2.5, noise, plan).value(y);
  const double zinf = point_to_point_field(x, 0.5, 3.5, noise, plan).sum();
  const double zneg = backward_partition(-1.0, 2.5, noise, plan).value(y);
  const double p = kernel_table(3, 2.0, 3, 1e-15).value(y - x);
  CHECK(std::fabs(rec.get("delta") - (z / p - zinf * zneg)) < 1e-10);
  CHECK(std::fabs(rec.get("bookkeeping")) < 1e-12);

  CHECK_THROWS_AS(factorization_residual(x, 0.0, y, 2.0, noise, plan, 1.0, 1.0, 0.6, spec), InvalidArgument);
  CHECK_THROWS_AS(factorization_residual({3, 0, 0}, 0.0, y, 2.0, noise, plan, 1.0, 1.0, 0.7, spec),
                  InvalidArgument);
}

TEST_CASE("sigma decomposition") {
  const FunctionClassSpec spec{0.5, 0.5};
  auto zero = NoiseField::zero(3, 200, -10.0, 10.0, 0.05);
  const double t = 3.0, sigma = 0.7;
  auto r = sigma_decomposition(builtin_family(Family::Constant, spec), spec, origin(3), t, zero, auto_plan(0.0),
                               sigma, 2.0, 2.0);
  const double ball = std::pow(t, sigma);
  auto table = kernel_table(3, t, 30, 1e-15);
  double inside = 0.0;
  for (BoxCursor c(Box(3, 3)); c.valid(); c.next()) {
    if (euclidean_norm(c.site()) <= ball) inside += table.value(c.site());
  }
  CHECK(std::fabs(r.get("B")) < 1e-6);
  CHECK(r.get("D") == doctest::Approx(inside).epsilon(1e-7));
  CHECK(r.get("C") == doctest::Approx((1.0 - inside) / inside).epsilon(1e-6));

  NoiseField noise(3, 200, -10.0, 10.0, 0.05, 14, 3);
  auto plan = auto_plan(0.3);
  auto g = sigma_decomposition(builtin_family(Family::Growing, spec), spec, unit_vector(3, 0), t, noise, plan,
                               sigma, 2.0, 2.0, true);
  CHECK(g.get("identity_defect") < 1e-10);
  CHECK(g.get("direct_rel_defect") < 1e-6);
  CHECK(g.get("S1") > 0.0);
  CHECK_THROWS_AS(sigma_decomposition([](const Site& x) { return std::exp(euclidean_norm(x)); }, spec, origin(3),
                                      t, noise, plan, sigma, 1.0, 1.0),
                  InvalidArgument);
}

TEST_CASE("attraction: zero disorder reduces to kernel ratios") {
  const FunctionClassSpec spec{0.5, 0.5};
  auto zero = NoiseField::zero(3, 200, -10.0, 10.0, 0.05);
  auto f = builtin_family(Family::Growing, spec);
  auto r = attraction_experiment(f, spec, unit_vector(3, 0), {1.0, 4.0}, zero, auto_plan(0.0), 2.0);
  for (double t : {1.0, 4.0}) {
    auto table = kernel_table(3, t, 40, 1e-15);
    double a = 0.0, b = 0.0;
    for (BoxCursor c(Box(3, 40)); c.valid(); c.next()) {
      a += f(c.site()) * table.value(unit_vector(3, 0) - c.site());
      b += f(c.site()) * table.value(c.site());
    }
    CHECK(std::fabs(r.get(tagged("z_ratio", t)) - 1.0) < 1e-7);
    CHECK(r.get(tagged("disc", t)) == doctest::Approx(std::fabs(a / b - 1.0)).epsilon(1e-6));
  }
}

TEST_CASE("attraction: the stationary profile is invariant") {
  const FunctionClassSpec spec{1.0, 0.5};
  auto plan = auto_plan(0.2);
  plan.leak_tol = 1e-12;
  NoiseField noise(3, 200, -12.0, 12.0, 0.05, 3, 5);
  auto y = backward_partition(-3.0, 0.0, noise, plan, 30);
  const double anchor = y.value(origin(3));
  for (double& v : y.values) v /= anchor;
  SiteFunction f = [&](const Site& x) {
    if (!y.box.contains(x)) throw CoverageError("profile queried outside its box");
    return y.value(x);
  };
  auto r = attraction_experiment(f, spec, unit_vector(3, 0), {1.0, 2.0}, noise, plan, 3.0);
  CHECK(r.get(tagged("disc", 1.0)) <= 1e-8);
  CHECK(r.get(tagged("disc", 2.0)) <= 1e-8);
}

TEST_CASE("tail probabilities") {
  CounterRng rng(21, 0, 0);
  std::vector<double> z;
  for (int i = 0; i < 4000; ++i) z.push_back(std::exp(-0.02 + 0.2 * rng.normal()));
  std::vector<double> grid;
  for (int k = 0; k <= 60; ++k) grid.push_back(0.01 * k);
  auto fit = tail_probability(z, grid, 200, 5);
  CHECK(fit.monotone);
  CHECK(fit.fitted);
  CHECK(fit.curvature < 0.0);
  CHECK(fit.ci.hi < 0.0);
  for (const auto& p : fit.points) CHECK(p.ci.contains(p.q));

  auto zero = NoiseField::zero(3, 200, 0.0, 4.0, 0.05);
  auto plan = auto_plan(0.0);
  auto rec = tail_sample(origin(3), 2.0, zero, plan);
  CHECK(std::fabs(rec.get("Z") - 1.0) < 1e-7);
  auto flat = tail_probability({rec.get("Z")}, {1e-6, 0.1}, 10, 1);
  CHECK(flat.points[0].count == 0);
  CHECK_THROWS_AS(tail_probability({}, {0.1}, 10, 1), InvalidArgument);
}

TEST_CASE("cocycle") {
  auto plan = fixed_plan(0.3, 8);
  NoiseField noise(3, 200, -5.0, 5.0, 0.05, 7, 7);
  const FunctionClassSpec spec{0.5, 0.5};
  auto f = make_field(Box(3, 8), 0.0, builtin_family(Family::Random, spec, 2));
  auto same = cocycle_apply(f, 1.0, 1.0, noise, plan);
  CHECK(same.values == f.values);
  auto direct = cocycle_apply(f, 0.0, 2.5, noise, plan);
  CHECK(direct.value(origin(3)) == 1.0);
  CHECK(direct.normalized);
  // phi^{s+t}_omega = phi^t_{theta_s omega} o phi^s_omega
  auto first = cocycle_apply(f, 0.0, 1.0, noise, plan);
  auto shifted = noise.wiener_shift(1.0);
  auto second = cocycle_apply(first, 0.0, 1.5, shifted, plan);
  double worst = 0.0;
  for (std::size_t i = 0; i < direct.values.size(); ++i) {
    worst = std::max(worst, std::fabs(direct.values[i] - second.values[i]));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("stationarity sample") {
  auto plan = fixed_plan(0.3, 10);
  NoiseField noise(3, 200, -10.0, 10.0, 0.05, 8, 1);
  const auto probes = default_probes(3);
  CHECK(probes.size() == 4u);
  auto rec = stationarity_sample(noise, plan, 1.0, {1.0, 2.0}, probes);
  for (double S : {1.0, 2.0}) {
    auto y = backward_partition(-S, 0.0, noise, plan);
    const double a = y.value(origin(3));
    for (double& v : y.values) v /= a;
    auto pushed = cocycle_apply(y, 0.0, 1.0, noise, plan);
    // Y_{S+t}(theta_t omega) computed from the shifted environment.
    auto later = backward_partition(-(S + 1.0), 0.0, noise.wiener_shift(1.0), plan);
    const double b = later.value(origin(3));
    for (const Site& p : probes) {
      CHECK(rec.get(tagged("Y", S) + "@" + format_site(p)) == doctest::Approx(y.value(p)).epsilon(1e-12));
      CHECK(std::fabs(rec.get(tagged("P", S) + "@" + format_site(p)) - pushed.value(p)) < 1e-12);
      CHECK(std::fabs(pushed.value(p) - later.value(p) / b) < 1e-10);
    }
  }

  auto zero = NoiseField::zero(3, 200, -10.0, 10.0, 0.05);
  std::vector<ExperimentRecord> recs;
  for (int i = 0; i < 3; ++i) recs.push_back(stationarity_sample(zero, auto_plan(0.0), 1.0, {1.0, 2.0}, probes));
  for (const auto& d : stationarity_distances(recs, {1.0, 2.0}, probes)) CHECK(d.distance < 1e-7);
}
