#include "pamlab/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>

#include "pamlab/errors.hpp"
#include "pamlab/kernels.hpp"
#include "pamlab/random.hpp"

namespace pamlab {
namespace {

void check_increasing(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw InvalidArgument(std::string(what) + " list is empty");
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) throw InvalidArgument(std::string(what) + " list must be strictly increasing");
  }
}

// Tolerance factor for data growing like e^{c |x|^(1-eps)} over the box
// that a walk of duration t typically explores.
double growth_factor(const EvolutionPlan& plan, const FunctionClassSpec& spec, double t, int extent) {
  const int r = extent + chernoff_radius(plan.dim(), t, plan.leak_tol) + plan.margin;
  const double reach = std::sqrt(static_cast<double>(plan.dim())) * (r + 8);
  return std::exp(-spec.c * std::pow(reach, 1.0 - spec.eps));
}

LatticeField tabulate(const SiteFunction& f, const Box& box) { return make_field(box, 0.0, f); }

double weighted_sum(const std::vector<double>& a, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * f[i];
  return s;
}

}  // namespace

void FunctionClassSpec::validate() const {
  if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("class constant c must be positive");
  if (!(eps > 0.0 && eps <= 1.0)) throw InvalidArgument("class exponent eps must lie in (0, 1]");
}

double FunctionClassSpec::bound(const Site& x) const {
  return c * std::pow(euclidean_norm(x), 1.0 - eps);
}

bool class_check(const LatticeField& f, const FunctionClassSpec& spec) {
  spec.validate();
  for (BoxCursor cur(f.box); cur.valid(); cur.next()) {
    const double v = f.values[cur.index()];
    if (!(v > 0.0) || !std::isfinite(v)) return false;
    const double b = spec.bound(cur.site());
    if (std::fabs(std::log(v)) > b * (1.0 + 1e-12) + 1e-14) return false;
  }
  return true;
}

void check_sigma(double sigma, const FunctionClassSpec& spec) {
  spec.validate();
  const double lo = 1.0 / (1.0 + spec.eps);
  if (!(sigma > lo && sigma < 1.0)) {
    throw InvalidArgument("sigma must satisfy 1/(1+eps) < sigma < 1; with eps = " + std::to_string(spec.eps) +
                          " the lower limit is " + std::to_string(lo) + ", got sigma = " +
                          std::to_string(sigma));
  }
}

namespace {

double shell_tail(int dim, int radius) {
  // Sites with sup norm k number (2k+1)^d - (2k-1)^d and have |x| >= k.
  double s = 0.0;
  for (int k = radius + 1;; ++k) {
    const double term = (std::pow(2.0 * k + 1, dim) - std::pow(2.0 * k - 1, dim)) * std::exp(-k);
    s += term;
    if (term < 1e-18 * s && k > radius + 10) break;
  }
  return s;
}

}  // namespace

MetricValue metric_d(const LatticeField& f, const LatticeField& g) {
  if (f.box.center() != g.box.center() || f.box.radius() != g.box.radius()) {
    throw InvalidArgument("metric_d needs fields on a common box");
  }
  MetricValue m;
  for (BoxCursor c(f.box); c.valid(); c.next()) {
    const double r = std::fabs(f.values[c.index()] - g.values[c.index()]);
    m.value += std::exp(-euclidean_norm(c.site())) * r / (1.0 + r);
  }
  const int reach = f.box.radius() - sup_norm(f.box.center());
  m.remainder = reach >= 0 ? shell_tail(f.box.dim(), reach) : lattice_exp_sum(f.box.dim());
  return m;
}

double lattice_exp_sum(int dim, double tol) {
  if (dim < 1) throw InvalidArgument("dimension must be at least 1");
  int radius = 4;
  while (shell_tail(dim, radius) > tol) radius += 2;
  double s = 0.0, comp = 0.0;
  for (BoxCursor c(Box(dim, radius)); c.valid(); c.next()) {
    const double y = std::exp(-euclidean_norm(c.site())) - comp;
    const double t = s + y;
    comp = (t - s) - y;
    s = t;
  }
  return s;
}

Family parse_family(const std::string& name) {
  if (name == "constant") return Family::Constant;
  if (name == "growing") return Family::Growing;
  if (name == "decaying") return Family::Decaying;
  if (name == "random") return Family::Random;
  throw InvalidArgument("unknown initial-data family '" + name + "' (constant, growing, decaying, random)");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::Constant: return "constant";
    case Family::Growing: return "growing";
    case Family::Decaying: return "decaying";
    case Family::Random: return "random";
  }
  return "constant";
}

SiteFunction builtin_family(Family family, const FunctionClassSpec& spec, std::uint64_t seed) {
  spec.validate();
  switch (family) {
    case Family::Constant:
      return [](const Site&) { return 1.0; };
    case Family::Growing:
      return [spec](const Site& x) { return std::exp(spec.bound(x)); };
    case Family::Decaying:
      return [spec](const Site& x) { return std::exp(-spec.bound(x)); };
    case Family::Random: {
      CounterRng rng(seed, 0xF00D, 0);
      std::vector<double> k(8);
      for (auto& v : k) v = rng.uniform() - 0.5;
      const double phase = 2.0 * std::numbers::pi * rng.uniform();
      const double amp = 2.0 * rng.uniform() - 1.0;
      return [spec, k, phase, amp](const Site& x) {
        double arg = phase;
        for (std::size_t i = 0; i < x.size(); ++i) arg += k[i % k.size()] * x[i];
        return std::exp(amp * spec.bound(x) * std::sin(arg));
      };
    }
  }
  throw InvalidArgument("unknown family");
}

void ExperimentRecord::set(const std::string& key, double v) {
  for (auto& kv : values) {
    if (kv.first == key) {
      kv.second = v;
      return;
    }
  }
  values.emplace_back(key, v);
}

bool ExperimentRecord::has(const std::string& key) const {
  for (const auto& kv : values) {
    if (kv.first == key) return true;
  }
  return false;
}

double ExperimentRecord::get(const std::string& key) const {
  for (const auto& kv : values) {
    if (kv.first == key) return kv.second;
  }
  throw InvalidArgument("record has no value '" + key + "'");
}

std::string tagged(const std::string& name, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return name + "@" + std::string(buf, res.ptr);
}

ExperimentRecord estimate_limit_Z(const Site& x, double s, const NoiseField& noise,
                                  const EvolutionPlan& plan, const std::vector<double>& horizons) {
  check_increasing(horizons, "horizon");
  if (!(horizons.front() > s)) throw InvalidArgument("horizons must exceed the start time");
  const std::int64_t js = noise.step_of(s);
  std::vector<std::int64_t> jh;
  for (double T : horizons) jh.push_back(noise.step_of(T));
  RadiusSchedule sched(plan, Direction::Forward);
  sched.add_source(js, 0, jh.back());
  Sweep sw = open_sweep(noise, plan, Direction::Forward, js, x, sched);
  const int id = sw.add_delta(x);
  std::vector<double> z(horizons.size());
  std::size_t k = 0;
  run_sweep(sw, plan, sched, jh.back(), [&](const Sweep& w) {
    if (k < jh.size() && w.step() == jh[k]) z[k++] = w.total(id);
  });
  ExperimentRecord r;
  r.kind = "limit_forward";
  r.realization = noise.realization();
  r.seed = noise.seed();
  for (std::size_t i = 0; i < z.size(); ++i) r.set(tagged("Z", horizons[i]), z[i]);
  for (std::size_t i = 0; i + 1 < z.size(); ++i) r.set(tagged("dZ", horizons[i]), std::fabs(z[i + 1] - z[i]));
  r.set("edge_fraction", sw.edge_fraction(id));
  return r;
}

ExperimentRecord estimate_limit_Z_backward(const Site& y, double t, const NoiseField& noise,
                                           const EvolutionPlan& plan, const std::vector<double>& starts) {
  std::vector<double> neg;
  for (double S : starts) neg.push_back(-S);
  check_increasing(neg, "start (decreasing)");
  if (!(starts.front() < t)) throw InvalidArgument("starts must precede the end time");
  const std::int64_t jt = noise.step_of(t);
  std::vector<std::int64_t> js;
  for (double S : starts) js.push_back(noise.step_of(S));
  RadiusSchedule sched(plan, Direction::Adjoint);
  sched.add_source(jt, 0, js.back());
  Sweep sw = open_sweep(noise, plan, Direction::Adjoint, jt, y, sched);
  const int id = sw.add_delta(y);
  std::vector<double> z(starts.size());
  std::size_t k = 0;
  run_sweep(sw, plan, sched, js.back(), [&](const Sweep& w) {
    if (k < js.size() && w.step() == js[k]) z[k++] = w.total(id);
  });
  ExperimentRecord r;
  r.kind = "limit_backward";
  r.realization = noise.realization();
  r.seed = noise.seed();
  for (std::size_t i = 0; i < z.size(); ++i) r.set(tagged("Zb", starts[i]), z[i]);
  for (std::size_t i = 0; i + 1 < z.size(); ++i) r.set(tagged("dZb", starts[i]), std::fabs(z[i + 1] - z[i]));
  r.set("edge_fraction", sw.edge_fraction(id));
  return r;
}

DecayFit fit_decay(const std::vector<double>& scales, const std::vector<std::vector<double>>& samples,
                   double power, int reps, std::uint64_t seed) {
  if (scales.size() < 2) throw InvalidArgument("decay fit needs at least two scales");
  if (samples.empty()) throw InvalidArgument("decay fit needs samples");
  for (const auto& row : samples) {
    if (row.size() != scales.size()) throw InvalidArgument("decay fit sample has the wrong length");
  }
  std::vector<double> lx;
  for (double s : scales) lx.push_back(std::log(s));
  auto slope_of = [&](const std::vector<std::size_t>& idx, std::vector<double>* means) {
    std::vector<double> ly;
    for (std::size_t k = 0; k < scales.size(); ++k) {
      double m = 0.0;
      for (std::size_t i : idx) m += std::pow(std::fabs(samples[i][k]), power);
      m /= static_cast<double>(idx.size());
      if (means) means->push_back(m);
      ly.push_back(std::log(m));
    }
    return -polyfit(lx, ly, 1)[1];
  };
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  DecayFit out;
  out.theta = slope_of(all, &out.means);
  out.ci = bootstrap_ci(samples.size(), [&](const std::vector<std::size_t>& idx) { return slope_of(idx, nullptr); },
                        reps, seed);
  return out;
}

std::vector<ExperimentRecord> factorization_residuals(const std::vector<Site>& xs, double s, const Site& y,
                                                      double t, const NoiseField& noise,
                                                      const EvolutionPlan& plan, double S_burn,
                                                      double T_burn, double sigma,
                                                      const FunctionClassSpec& spec) {
  check_sigma(sigma, spec);
  if (!(t > s)) throw InvalidArgument("factorization needs s < t");
  if (!(S_burn >= 0.0) || !(T_burn >= 0.0)) throw InvalidArgument("burn-in lengths must be nonnegative");
  if (xs.empty()) throw InvalidArgument("factorization needs at least one source");
  const double ball = std::pow(t - s, sigma);
  int spread = 0;
  for (const Site& x : xs) {
    if (!(euclidean_norm(x - y) < ball)) {
      throw InvalidArgument("source " + format_site(x) + " lies outside the sub-ballistic ball |x - y| < " +
                            std::to_string(ball));
    }
    spread = std::max(spread, sup_norm(x - y));
  }
  const std::int64_t js = noise.step_of(s);
  const std::int64_t jt = noise.step_of(t);
  const std::int64_t jneg = noise.step_of(s - S_burn);
  const std::int64_t jinf = noise.step_of(t + T_burn);

  // Adjoint delta at (y, t): Z_{x,s}^{y,t} at step js, Z_{s-S}^{y,t} at the end.
  RadiusSchedule back(plan, Direction::Adjoint);
  back.add_source(jt, 0, jneg);
  Sweep adj = open_sweep(noise, plan, Direction::Adjoint, jt, y, back);
  const int aid = adj.add_delta(y);
  std::vector<double> zxy(xs.size());
  auto read = [&](const Sweep& w) {
    if (w.step() != js) return;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!w.box().contains(xs[i])) throw CoverageError("adjoint box does not reach source " + format_site(xs[i]));
      zxy[i] = w.value(aid, xs[i]);
    }
  };
  if (jt == js) read(adj);
  run_sweep(adj, plan, back, jneg, read);
  const double zneg = adj.total(aid);

  // Forward deltas from the sources, grouped when close together.
  std::vector<double> zinf(xs.size());
  std::vector<bool> done(xs.size(), false);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (done[i]) continue;
    std::vector<std::size_t> group;
    for (std::size_t k = i; k < xs.size(); ++k) {
      if (!done[k] && sup_norm(xs[k] - xs[i]) <= 2) group.push_back(k);
    }
    int extent = 0;
    for (std::size_t k : group) extent = std::max(extent, sup_norm(xs[k] - xs[i]));
    RadiusSchedule fwd(plan, Direction::Forward);
    fwd.add_source(js, extent, jinf);
    Sweep sw = open_sweep(noise, plan, Direction::Forward, js, xs[i], fwd);
    std::vector<int> ids;
    for (std::size_t k : group) ids.push_back(sw.add_delta(xs[k]));
    run_sweep(sw, plan, fwd, jinf);
    for (std::size_t g = 0; g < group.size(); ++g) {
      zinf[group[g]] = sw.total(ids[g]);
      done[group[g]] = true;
    }
  }

  const auto table = kernel_table(plan.dim(), t - s, spread + 1, 1e-15);
  std::vector<ExperimentRecord> out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ExperimentRecord r;
    r.kind = "factorize";
    r.realization = noise.realization();
    r.seed = noise.seed();
    const double p = table.value(y - xs[i]);
    const double ratio = zxy[i] / p;
    const double delta = ratio - zinf[i] * zneg;
    r.set("s", s);
    r.set("t", t);
    r.set("distance", euclidean_norm(xs[i] - y));
    r.set("Z", zxy[i]);
    r.set("p", p);
    r.set("ratio", ratio);
    r.set("Zinf", zinf[i]);
    r.set("Zneg", zneg);
    r.set("delta", delta);
    r.set("abs_delta", std::fabs(delta));
    r.set("bookkeeping", ratio - zinf[i] * zneg - delta);
    out.push_back(std::move(r));
  }
  return out;
}

ExperimentRecord factorization_residual(const Site& x, double s, const Site& y, double t,
                                        const NoiseField& noise, const EvolutionPlan& plan,
                                        double S_burn, double T_burn, double sigma,
                                        const FunctionClassSpec& spec) {
  return factorization_residuals({x}, s, y, t, noise, plan, S_burn, T_burn, sigma, spec).front();
}

ExperimentRecord sigma_decomposition(const SiteFunction& f, const FunctionClassSpec& spec, const Site& y,
                                     double t, const NoiseField& noise, const EvolutionPlan& plan,
                                     double sigma, double S_burn, double T_burn, bool check_direct) {
  check_sigma(sigma, spec);
  if (!(t > 0.0)) throw InvalidArgument("decomposition needs t > 0");
  const double ball = std::pow(t, sigma);
  const int ext = static_cast<int>(std::floor(ball));
  const std::int64_t jt = noise.step_of(t);
  const std::int64_t jneg = noise.step_of(-S_burn);
  if (jneg > 0) throw InvalidArgument("S_burn must be nonnegative");

  RadiusSchedule back(plan, Direction::Adjoint);
  back.add_source(jt, 0, jneg, growth_factor(plan, spec, t, sup_norm(y)));
  Sweep adj = open_sweep(noise, plan, Direction::Adjoint, jt, y, back);
  const int id = adj.add_delta(y);
  double inner = 0.0, outer = 0.0;
  Box at_zero = adj.box();
  auto read = [&](const Sweep& w) {
    if (w.step() != 0) return;
    at_zero = w.box();
    const LatticeField fv = tabulate(f, w.box());
    if (!class_check(fv, spec)) throw InvalidArgument("initial data violates the class bound");
    const auto& a = w.raw(id);
    for (BoxCursor c(w.box()); c.valid(); c.next()) {
      const double v = fv.values[c.index()] * a[c.index()];
      if (euclidean_norm(c.site()) <= ball) {
        inner += v;
      } else {
        outer += v;
      }
    }
    for (BoxCursor c(Box(plan.dim(), ext)); c.valid(); c.next()) {
      if (euclidean_norm(c.site()) <= ball && !w.box().contains(c.site())) {
        throw CoverageError("adjoint box does not cover the sigma ball");
      }
    }
  };
  run_sweep(adj, plan, back, jneg, read);
  const double zneg = adj.total(id);

  const LatticeField zinf = adjoint_sweep(0.0, t + T_burn, noise, plan, ext);
  const auto table = kernel_table(plan.dim(), t, ext + sup_norm(y) + 1, 1e-15);
  double s1 = 0.0;
  for (BoxCursor c(Box(plan.dim(), ext)); c.valid(); c.next()) {
    if (euclidean_norm(c.site()) > ball) continue;
    s1 += f(c.site()) * table.value(y - c.site()) * zinf.value(c.site()) * zneg;
  }
  const double s2 = inner - s1;
  const double s3 = outer;
  const double u = inner + outer;

  ExperimentRecord r;
  r.kind = "decompose";
  r.realization = noise.realization();
  r.seed = noise.seed();
  r.set("t", t);
  r.set("S1", s1);
  r.set("S2", s2);
  r.set("S3", s3);
  r.set("u", u);
  r.set("B", s2 / s1);
  r.set("C", s3 / (s1 + s2));
  r.set("D", s1 / zneg);
  r.set("Zneg", zneg);
  r.set("identity_defect", std::fabs(s1 + s2 + s3 - u) / u);
  if (check_direct) {
    auto fixed = plan;
    fixed.policy = RadiusPolicy::Fixed;
    const int radius = at_zero.radius() + sup_norm(at_zero.center());
    const LatticeField f0 = tabulate(f, Box(plan.dim(), radius));
    const LatticeField direct = solve_cauchy(f0, 0.0, t, noise, fixed);
    r.set("direct_rel_defect", std::fabs(direct.value(y) - u) / u);
  }
  return r;
}

ExperimentRecord attraction_experiment(const SiteFunction& f, const FunctionClassSpec& spec, const Site& y,
                                       const std::vector<double>& ts, const NoiseField& noise,
                                       const EvolutionPlan& plan, double S_burn) {
  spec.validate();
  if (!(spec.eps < 1.0)) throw InvalidArgument("attraction needs eps < 1");
  check_increasing(ts, "time");
  if (!(ts.front() > 0.0)) throw InvalidArgument("attraction times must be positive");
  const std::int64_t jneg = noise.step_of(-S_burn);
  if (jneg > 0) throw InvalidArgument("S_burn must be nonnegative");
  const Site o = origin(plan.dim());
  ExperimentRecord r;
  r.kind = "attract";
  r.realization = noise.realization();
  r.seed = noise.seed();
  bool checked = false;
  for (double t : ts) {
    const std::int64_t jt = noise.step_of(t);
    RadiusSchedule back(plan, Direction::Adjoint);
    back.add_source(jt, sup_norm(y), jneg, growth_factor(plan, spec, t, sup_norm(y)));
    Sweep adj = open_sweep(noise, plan, Direction::Adjoint, jt, o, back);
    const int i0 = adj.add_delta(o);
    const int iy = y == o ? i0 : adj.add_delta(y);
    double u0 = 0.0, uy = 0.0;
    run_sweep(adj, plan, back, jneg, [&](const Sweep& w) {
      if (w.step() != 0) return;
      const LatticeField fv = tabulate(f, w.box());
      if (!checked && !class_check(fv, spec)) throw InvalidArgument("initial data violates the class bound");
      checked = true;
      u0 = weighted_sum(w.raw(i0), fv.values);
      uy = weighted_sum(w.raw(iy), fv.values);
    });
    const double ur = uy / u0;
    const double zr = adj.total(iy) / adj.total(i0);
    r.set(tagged("u_ratio", t), ur);
    r.set(tagged("z_ratio", t), zr);
    r.set(tagged("disc", t), std::fabs(ur - zr));
  }
  return r;
}

ExperimentRecord tail_sample(const Site& y, double t, const NoiseField& noise, const EvolutionPlan& plan) {
  if (!(t > 0.0)) throw InvalidArgument("tail sample needs t > 0");
  const std::int64_t jt = noise.step_of(t);
  RadiusSchedule back(plan, Direction::Adjoint);
  back.add_source(jt, 0, 0);
  Sweep adj = open_sweep(noise, plan, Direction::Adjoint, jt, y, back);
  const int id = adj.add_delta(y);
  run_sweep(adj, plan, back, 0);
  ExperimentRecord r;
  r.kind = "tails";
  r.realization = noise.realization();
  r.seed = noise.seed();
  const double z = adj.total(id);
  r.set("t", t);
  r.set("Z", z);
  r.set("logZ", std::log(z));
  return r;
}

TailFit tail_probability(const std::vector<double>& z, const std::vector<double>& u_grid, int reps,
                         std::uint64_t seed, double q_max, std::size_t min_count) {
  if (z.empty()) throw InvalidArgument("tail probability needs a nonempty ensemble");
  check_increasing(u_grid, "u grid");
  const std::size_t n = z.size();
  TailFit out;
  auto count_below = [&](double u, const std::vector<std::size_t>* idx) {
    const double thr = std::exp(-u);
    std::size_t k = 0;
    if (idx) {
      for (std::size_t i : *idx) k += z[i] < thr;
    } else {
      for (double v : z) k += v < thr;
    }
    return k;
  };
  std::vector<double> fu, fl;
  for (double u : u_grid) {
    TailPoint p;
    p.u = u;
    p.count = count_below(u, nullptr);
    p.q = static_cast<double>(p.count) / static_cast<double>(n);
    p.ci = wilson_interval(p.count, n);
    p.used = p.count >= min_count && p.q <= q_max;
    if (!out.points.empty() && p.count > out.points.back().count) out.monotone = false;
    if (p.used) {
      fu.push_back(u);
      fl.push_back(std::log(p.q));
    }
    out.points.push_back(p);
  }
  out.used = fu.size();
  if (fu.size() >= 4) {
    out.fitted = true;
    out.curvature = polyfit(fu, fl, 2)[2];
    out.ci = bootstrap_ci(
        n,
        [&](const std::vector<std::size_t>& idx) {
          std::vector<double> ly;
          for (double u : fu) {
            const std::size_t k = count_below(u, &idx);
            if (k == 0) return std::nan("");
            ly.push_back(std::log(static_cast<double>(k) / static_cast<double>(n)));
          }
          return polyfit(fu, ly, 2)[2];
        },
        reps, seed);
  }
  return out;
}

LatticeField cocycle_apply(const LatticeField& f, double s, double t, const NoiseField& noise,
                           const EvolutionPlan& plan) {
  const Site o = origin(f.box.dim());
  if (!f.box.contains(o)) throw InvalidArgument("cocycle needs the origin inside the box");
  LatticeField u = solve_cauchy(f, s, t, noise, plan);
  const double anchor = u.value(o);
  for (double& v : u.values) v /= anchor;
  u.values[u.box.index(o)] = 1.0;
  u.normalized = true;
  return u;
}

ExperimentRecord stationarity_sample(const NoiseField& noise, const EvolutionPlan& plan, double t,
                                     const std::vector<double>& S_list, const std::vector<Site>& probes) {
  check_increasing(S_list, "burn-in");
  if (!(S_list.front() > 0.0) || !(t > 0.0)) throw InvalidArgument("burn-in lengths and t must be positive");
  if (probes.empty()) throw InvalidArgument("stationarity needs probe sites");
  const Site o = origin(plan.dim());
  int extent = 0;
  for (const Site& p : probes) extent = std::max(extent, sup_norm(p));
  const std::int64_t jt = noise.step_of(t);
  std::vector<std::int64_t> starts;
  for (double S : S_list) starts.push_back(noise.step_of(-S));
  RadiusSchedule sched(plan, Direction::Forward);
  sched.add_target(0, extent);
  sched.add_target(jt, extent);
  Sweep sw = open_sweep(noise, plan, Direction::Forward, starts.back(), o, sched);
  std::vector<int> ids(S_list.size(), -1);
  ExperimentRecord r;
  r.kind = "stationary";
  r.realization = noise.realization();
  r.seed = noise.seed();
  auto on_step = [&](const Sweep& w) {
    if (w.step() != 0 && w.step() != jt) return;
    const char* tag = w.step() == 0 ? "Y" : "P";
    for (std::size_t k = 0; k < S_list.size(); ++k) {
      const double anchor = w.value(ids[k], o);
      for (const Site& p : probes) {
        r.set(tagged(tag, S_list[k]) + "@" + format_site(p), w.value(ids[k], p) / anchor);
      }
    }
  };
  std::size_t next = S_list.size();
  while (next > 0 && starts[next - 1] == sw.step()) ids[--next] = sw.add_constant(1.0);
  while (sw.step() < jt) {
    std::int64_t stop = jt;
    if (next > 0) stop = starts[next - 1];
    run_sweep(sw, plan, sched, stop, [&](const Sweep& w) {
      if (w.step() == 0 || w.step() == jt) on_step(w);
    });
    while (next > 0 && starts[next - 1] == sw.step()) ids[--next] = sw.add_constant(1.0);
  }
  return r;
}

std::vector<QuantileDistance> stationarity_distances(const std::vector<ExperimentRecord>& records,
                                                     const std::vector<double>& S_list,
                                                     const std::vector<Site>& probes) {
  if (records.empty()) throw InvalidArgument("stationarity distances need records");
  std::vector<QuantileDistance> out;
  for (double S : S_list) {
    for (const Site& p : probes) {
      std::vector<double> y, q;
      for (const auto& rec : records) {
        y.push_back(rec.get(tagged("Y", S) + "@" + format_site(p)));
        q.push_back(rec.get(tagged("P", S) + "@" + format_site(p)));
      }
      QuantileDistance d;
      d.S = S;
      d.probe = p;
      for (double level : {0.25, 0.5, 0.75}) {
        d.distance = std::max(d.distance, std::fabs(quantile(y, level) - quantile(q, level)));
      }
      out.push_back(d);
    }
  }
  return out;
}

std::vector<Site> default_probes(int dim) {
  std::vector<Site> p = {origin(dim), unit_vector(dim, 0)};
  if (dim >= 2) p.push_back(unit_vector(dim, 0) + unit_vector(dim, 1));
  p.push_back(unit_vector(dim, 0) + unit_vector(dim, 0));
  return p;
}

}  // namespace pamlab
