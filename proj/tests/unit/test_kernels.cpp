#include <doctest.h>

#include <cmath>

#include "pamlab/errors.hpp"
#include "pamlab/kernels.hpp"

using namespace pamlab;

TEST_CASE("discrete kernel small cases") {
  auto q0 = discrete_kernel(3, 0);
  CHECK(q0.value({0, 0, 0}) == 1.0);
  auto q1 = discrete_kernel(3, 1);
  CHECK(q1.value({1, 0, 0}) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(q1.value({0, 0, 0}) == 0.0);
  auto q2 = discrete_kernel(3, 2);
  CHECK(q2.value({0, 0, 0}) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("discrete kernel invariants") {
  for (int n : {3, 7, 10}) {
    auto q = discrete_kernel(3, n);
    CHECK(std::fabs(q.sum() - 1.0) <= 1e-12 * std::max(n, 1));
    ExactDiscreteKernel exact(3, n);
    for (BoxCursor c(q.box()); c.valid(); c.next()) {
      const Site& y = c.site();
      double v = q.value(y);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      int l1 = l1_norm(y);
      if (l1 > n || (l1 - n) % 2 != 0) CHECK(v == 0.0);
      Site flipped = {-y[0], y[1], y[2]};
      Site permuted = {y[2], y[0], y[1]};
      CHECK(q.value(flipped) == doctest::Approx(v).epsilon(1e-14));
      CHECK(q.value(permuted) == doctest::Approx(v).epsilon(1e-14));
      CHECK(static_cast<double>(exact.probability(y)) == doctest::Approx(v).epsilon(1e-12));
    }
  }
}

TEST_CASE("exact kernel counts sum to the number of walks") {
  ExactDiscreteKernel exact(3, 6);
  unsigned __int128 total = 0;
  for (BoxCursor c(exact.box()); c.valid(); c.next()) total += exact.count(c.site());
  CHECK(total == exact.total());
  // Number of closed 2-step walks in Z^3 is 2d = 6.
  CHECK(static_cast<unsigned long long>(ExactDiscreteKernel(3, 2).count({0, 0, 0})) == 6ULL);
}

TEST_CASE("discrete kernel budget") {
  CHECK_THROWS_AS(discrete_kernel(3, 200, 1000), ResourceError);
  CHECK_THROWS_AS(discrete_kernel(3, -1), InvalidArgument);
}

TEST_CASE("kernel table at t = 0 is a point mass") {
  auto k = kernel_table(3, 0.0, 3, 1e-14);
  CHECK(k.value({0, 0, 0}) == 1.0);
  CHECK(k.value({1, 0, 0}) == 0.0);
  CHECK(k.tail_bound() == 0.0);
  CHECK_THROWS_AS(kernel_table(3, -1.0, 3, 1e-14), InvalidArgument);
}

TEST_CASE("p_1^0 matches the exact-rational Poisson mixture") {
  // e^{-1} sum_n q_n^0 / n! with exact walk counts; the omitted tail is < 1e-25.
  long double oracle = 0.0L;
  long double fact = 1.0L;
  for (int n = 0; n <= 24; ++n) {
    if (n > 0) fact *= n;
    if (n % 2) continue;
    ExactDiscreteKernel q(3, n);
    oracle += q.probability({0, 0, 0}) / fact;
  }
  oracle *= std::exp(-1.0L);
  auto k = kernel_table(3, 1.0, 8, 1e-14);
  CHECK(k.value({0, 0, 0}) == doctest::Approx(static_cast<double>(oracle)).epsilon(1e-12));

  long double oracle_e1 = 0.0L;
  fact = 1.0L;
  for (int n = 0; n <= 24; ++n) {
    if (n > 0) fact *= n;
    if (n % 2 == 0) continue;
    ExactDiscreteKernel q(3, n);
    oracle_e1 += q.probability({1, 0, 0}) / fact;
  }
  oracle_e1 *= std::exp(-1.0L);
  CHECK(k.value({1, 0, 0}) == doctest::Approx(static_cast<double>(oracle_e1)).epsilon(1e-12));
}

TEST_CASE("axis profile is a scaled modified Bessel function") {
  for (double t : {0.3, 3.0, 12.0}) {
    auto k = kernel_table(3, t, 20, 1e-15);
    const double s = t / 3.0;
    for (int j = 0; j <= 8; ++j) {
      double expect = std::exp(-s) * std::cyl_bessel_i(static_cast<double>(j), s);
      CHECK(k.axis_value(j) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(k.axis_value(-j) == k.axis_value(j));
    }
  }
}

TEST_CASE("kernel table mass accounting and refinement") {
  for (double t : {0.05, 1.0, 8.0, 30.0}) {
    double prev = 0.0;
    for (int r : {2, 5, 10, 20}) {
      for (double tol : {1e-6, 1e-10, 1e-15}) {
        auto k = kernel_table(3, t, r, tol);
        CHECK(k.sum() + k.tail_bound() >= 1.0);
        CHECK(k.sum() <= 1.0 + 1e-12);
        if (tol == 1e-6) {
          CHECK(k.sum() >= prev);
        }
        auto finer = kernel_table(3, t, r + 1, tol * 1e-3);
        CHECK(finer.sum() >= k.sum());
      }
      prev = kernel_table(3, t, r, 1e-6).sum();
    }
  }
}

TEST_CASE("kernel table symmetries are exact") {
  auto k = kernel_table(3, 5.0, 6, 1e-15);
  for (BoxCursor c(k.box()); c.valid(); c.next()) {
    const Site& y = c.site();
    double v = k.value(y);
    CHECK(v >= 0.0);
    CHECK(k.value({-y[0], y[1], y[2]}) == v);
    CHECK(k.value({y[1], y[2], y[0]}) == v);
    CHECK(k.value({y[0], -y[2], y[1]}) == v);
  }
}

TEST_CASE("kernel Chapman-Kolmogorov on a small box") {
  const double s = 0.7, t = 1.1;
  auto ks = kernel_table(3, s, 12, 1e-16);
  auto kt = kernel_table(3, t, 12, 1e-16);
  auto kst = kernel_table(3, s + t, 12, 1e-16);
  for (const Site& y : {Site{0, 0, 0}, Site{1, 0, 0}, Site{1, 1, 0}, Site{2, 1, 1}}) {
    double conv = 0.0;
    for (BoxCursor c(ks.box()); c.valid(); c.next()) conv += ks.value(c.site()) * kt.value(y - c.site());
    CHECK(std::fabs(conv - kst.value(y)) <= ks.tail_bound() + kt.tail_bound() + 1e-15);
  }
}

TEST_CASE("tail bounds") {
  CHECK(poisson_tail(2.0, 30) < 1e-20);
  CHECK(poisson_tail(2.0, -1) == 1.0);
  CHECK(poisson_tail(40.0, 10) == doctest::Approx(1.0).epsilon(1e-6));
  // Poisson(0.05) beyond 5 jumps.
  CHECK(poisson_tail(0.05, 5) < 1e-10);
  for (double t : {1.0, 16.0, 64.0}) {
    int r = chernoff_radius(3, t, 1e-8);
    CHECK(chernoff_tail(3, t, r) <= 1e-8);
    CHECK(chernoff_tail(3, t, r - 1) > 1e-8);
    auto k = kernel_table(3, t, r, 1e-16);
    CHECK(1.0 - k.sum() <= 1e-8 + 1e-14);
  }
}

TEST_CASE("ratio extremes") {
  SUBCASE("identical endpoints give exactly one") {
    auto r = ratio_extremes(3, 16.0, 0.6, {1, 0, 0}, {1, 0, 0}, 12);
    CHECK(r.inf_ratio == 1.0);
    CHECK(r.sup_ratio == 1.0);
  }
  SUBCASE("swap symmetry") {
    auto table = kernel_table(3, 16.0, 12, 1e-15);
    auto a = ratio_extremes(table, 0.6, {1, 0, 0}, {0, 0, 0});
    auto b = ratio_extremes(table, 0.6, {0, 0, 0}, {1, 0, 0});
    CHECK(a.sup_ratio == doctest::Approx(1.0 / b.inf_ratio).epsilon(1e-15));
    CHECK(a.inf_ratio == doctest::Approx(1.0 / b.sup_ratio).epsilon(1e-15));
    CHECK(a.argmax == b.argmin);
  }
  SUBCASE("brute force with an independent kernel at t = 16") {
    const double t = 16.0, sigma = 0.6, s = t / 3.0;
    auto g = [&](int k) { return std::exp(-s) * std::cyl_bessel_i(static_cast<double>(std::abs(k)), s); };
    auto p = [&](int a, int b, int c) { return g(a) * g(b) * g(c); };
    const double ball = std::pow(t, sigma);
    const int rb = static_cast<int>(ball);
    double lo = 1e300, hi = 0.0;
    for (int a = -rb; a <= rb; ++a)
      for (int b = -rb; b <= rb; ++b)
        for (int c = -rb; c <= rb; ++c) {
          if (std::sqrt(double(a * a + b * b + c * c)) > ball) continue;
          double r = p(1 - a, -b, -c) / p(-a, -b, -c);
          lo = std::min(lo, r);
          hi = std::max(hi, r);
        }
    auto r = ratio_extremes(3, t, sigma, {1, 0, 0}, {0, 0, 0}, 12);
    CHECK(r.inf_ratio == doctest::Approx(lo).epsilon(1e-11));
    CHECK(r.sup_ratio == doctest::Approx(hi).epsilon(1e-11));
    CHECK(r.argmin[0] == -rb);
    CHECK(r.argmax[0] > 0);
  }
  SUBCASE("extremes approach one as t grows") {
    double prev_spread = 1e300;
    for (double t : {64.0, 256.0, 1024.0}) {
      int radius = static_cast<int>(std::ceil(std::pow(t, 0.7))) + 2;
      auto r = ratio_extremes(3, t, 0.7, {1, 0, 0}, {0, 0, 0}, radius);
      CHECK(r.inf_ratio < 1.0);
      CHECK(r.sup_ratio > 1.0);
      double spread = std::max(r.sup_ratio - 1.0, 1.0 - r.inf_ratio);
      CHECK(spread < prev_spread);
      prev_spread = spread;
      // Gaussian heuristic: log sup ratio ~ d (2 t^sigma - 1) / (2 t).
      double heuristic = 3.0 * (2.0 * std::floor(std::pow(t, 0.7)) - 1.0) / (2.0 * t);
      CHECK(std::log(r.sup_ratio) == doctest::Approx(heuristic).epsilon(0.15));
    }
  }
  SUBCASE("coverage") {
    CHECK_THROWS_AS(ratio_extremes(3, 64.0, 0.7, {1, 0, 0}, {0, 0, 0}, 10), CoverageError);
    CHECK_THROWS_AS(ratio_extremes(3, 64.0, 1.2, {1, 0, 0}, {0, 0, 0}, 40), InvalidArgument);
  }
}
