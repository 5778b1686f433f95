#include "pamlab/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "pamlab/errors.hpp"
#include "pamlab/kernels.hpp"

// Vector variants from libmvec for the weight pass.
extern "C" {
#pragma omp declare simd notinbranch
double exp(double);
}

namespace pamlab {
namespace {

double neumaier_sum(const std::vector<double>& v) {
  double s = 0.0, c = 0.0;
  for (double x : v) {
    const double t = s + x;
    if (std::fabs(s) >= std::fabs(x)) {
      c += (s - t) + x;
    } else {
      c += (x - t) + s;
    }
    s = t;
  }
  return s + c;
}

// Copies the overlap of two boxes with a common centre row by row.
std::vector<double> recentre(const Box& from, const std::vector<double>& values, const Box& to) {
  std::vector<double> out(to.size(), 0.0);
  const Box common(from.center(), std::min(from.radius(), to.radius()));
  const auto len = static_cast<std::size_t>(common.side());
  for (BoxCursor c(common); c.valid();) {
    const Site& x = c.site();
    std::memcpy(&out[to.index(x)], &values[from.index(x)], len * sizeof(double));
    for (std::size_t i = 0; i < len; ++i) c.next();
  }
  return out;
}

std::int64_t checked_step(const NoiseField& noise, double t, const char* what) {
  try {
    return noise.step_of(t);
  } catch (const InvalidArgument&) {
    throw InvalidArgument(std::string(what) + " " + std::to_string(t) + " is not a grid time");
  }
}

}  // namespace

double LatticeField::value(const Site& x) const {
  if (!box.contains(x)) return 0.0;
  return values[box.index(x)];
}

double LatticeField::sum() const { return neumaier_sum(values); }

double LatticeField::min() const {
  return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
}

LatticeField make_field(const Box& box, double time, const SiteFunction& f) {
  LatticeField out;
  out.box = box;
  out.time = time;
  out.values.resize(box.size());
  for (BoxCursor c(box); c.valid(); c.next()) out.values[c.index()] = f(c.site());
  return out;
}

StepKernel StepKernel::make(int dim, double dt, double tol) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(tol > 0.0)) throw InvalidArgument("kernel tolerance must be positive");
  for (int taps = 1; taps <= 64; ++taps) {
    auto table = kernel_table(dim, dt, taps, tol * 1e-3);
    if (table.tail_bound() < tol) {
      StepKernel k;
      k.dim = dim;
      k.dt = dt;
      k.taps = taps;
      k.g.assign(table.axis().begin() + taps, table.axis().end());
      k.dropped_mass = table.tail_bound();
      return k;
    }
  }
  throw ResourceError("step kernel needs more than 64 taps; reduce the time step");
}

EvolutionPlan EvolutionPlan::make(int dim, double dt, double beta, double kernel_tol) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be nonnegative");
  EvolutionPlan p;
  p.dt = dt;
  p.beta = beta;
  p.kernel = StepKernel::make(dim, dt, kernel_tol);
  return p;
}

int suggest_radius(const EvolutionPlan& plan, double elapsed, int center_extent) {
  return center_extent + chernoff_radius(plan.dim(), elapsed, plan.leak_tol) + plan.margin;
}

Sweep::Sweep(const NoiseField& noise, const EvolutionPlan& plan, Direction direction,
             std::int64_t step, Site center, int radius)
    : noise_(noise), plan_(plan), direction_(direction), step_(step), box_(std::move(center), radius) {
  if (noise.dim() != plan.dim()) throw InvalidArgument("noise and plan dimensions differ");
  if (std::fabs(noise.dt() - plan.dt) > 1e-15 * plan.dt) {
    throw InvalidArgument("noise and plan time steps differ");
  }
  if (static_cast<int>(box_.center().size()) != plan.dim()) {
    throw InvalidArgument("sweep centre has the wrong dimension");
  }
}

int Sweep::add_field(const SiteFunction& initial) {
  std::vector<double> v(box_.size());
  for (BoxCursor c(box_); c.valid(); c.next()) v[c.index()] = initial(c.site());
  fields_.push_back(std::move(v));
  active_.push_back(true);
  return static_cast<int>(fields_.size()) - 1;
}

int Sweep::add_delta(const Site& x, double mass) {
  if (!box_.contains(x)) throw CoverageError("delta source " + format_site(x) + " outside the box");
  std::vector<double> v(box_.size(), 0.0);
  v[box_.index(x)] = mass;
  fields_.push_back(std::move(v));
  active_.push_back(true);
  return static_cast<int>(fields_.size()) - 1;
}

int Sweep::add_constant(double c) {
  fields_.emplace_back(box_.size(), c);
  active_.push_back(true);
  return static_cast<int>(fields_.size()) - 1;
}

int Sweep::add_field_values(const LatticeField& initial) {
  if (initial.box.dim() != box_.dim()) throw InvalidArgument("field dimension mismatch");
  if (initial.box.center() == box_.center()) {
    fields_.push_back(recentre(initial.box, initial.values, box_));
  } else {
    fields_.push_back(reembed(initial.box, initial.values, box_));
  }
  active_.push_back(true);
  return static_cast<int>(fields_.size()) - 1;
}

void Sweep::deactivate(int id) {
  active_[static_cast<std::size_t>(id)] = false;
  std::vector<double>().swap(fields_[static_cast<std::size_t>(id)]);
}

void Sweep::resize(int radius) {
  if (radius == box_.radius()) return;
  if (radius < 0) throw InvalidArgument("box radius must be nonnegative");
  Box next(box_.center(), radius);
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (!active_[i]) continue;
    fields_[i] = recentre(box_, fields_[i], next);
  }
  box_ = next;
}

void Sweep::make_weights(std::int64_t j) {
  const std::size_t n = box_.size();
  weights_.resize(n);
  const double b = -0.5 * plan_.beta * plan_.beta * plan_.dt;
  if (noise_.is_zero()) {
    std::fill(weights_.begin(), weights_.end(), std::exp(b));
    return;
  }
  noise_.fill_standard_normals(box_, j, weights_.data());
  const double a = plan_.beta * std::sqrt(plan_.dt);
  double* w = weights_.data();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) w[i] = exp(a * w[i] + b);
}

void Sweep::convolve(std::vector<double>& u) {
  const int d = box_.dim();
  const int n = box_.side();
  const int taps = std::min(plan_.kernel.taps, n - 1);
  const double* g = plan_.kernel.g.data();
  const std::size_t size = box_.size();
  scratch_.resize(size);

  // Contiguous axis with a zero-padded line buffer.
  line_.assign(static_cast<std::size_t>(n + 2 * taps), 0.0);
  double* line = line_.data() + taps;
  for (std::size_t l = 0; l < size; l += static_cast<std::size_t>(n)) {
    double* row = &u[l];
    std::memcpy(line, row, static_cast<std::size_t>(n) * sizeof(double));
    for (int i = 0; i < n; ++i) {
      const double* s = line + i;
      double v = g[0] * s[0];
      for (int k = 1; k <= taps; ++k) v += g[k] * (s[-k] + s[k]);
      row[i] = v;
    }
  }

  // Remaining axes: whole rows of the inner block move together.
  std::size_t inner = static_cast<std::size_t>(n);
  for (int axis = d - 2; axis >= 0; --axis) {
    const std::size_t block = inner * static_cast<std::size_t>(n);
    for (std::size_t o = 0; o < size; o += block) {
      const double* in = &u[o];
      double* out = &scratch_[o];
      for (int i = 0; i < n; ++i) {
        double* oi = out + static_cast<std::size_t>(i) * inner;
        const double* s0 = in + static_cast<std::size_t>(i) * inner;
        for (std::size_t q = 0; q < inner; ++q) oi[q] = g[0] * s0[q];
        for (int k = 1; k <= taps; ++k) {
          const double gk = g[k];
          const double* sm = i - k >= 0 ? in + static_cast<std::size_t>(i - k) * inner : nullptr;
          const double* sp = i + k < n ? in + static_cast<std::size_t>(i + k) * inner : nullptr;
          if (sm && sp) {
            for (std::size_t q = 0; q < inner; ++q) oi[q] += gk * (sm[q] + sp[q]);
          } else if (sm) {
            for (std::size_t q = 0; q < inner; ++q) oi[q] += gk * sm[q];
          } else if (sp) {
            for (std::size_t q = 0; q < inner; ++q) oi[q] += gk * sp[q];
          }
        }
      }
    }
    u.swap(scratch_);
    inner = block;
  }
}

void Sweep::advance() {
  const std::int64_t j = direction_ == Direction::Forward ? step_ : step_ - 1;
  const bool trivial = plan_.beta == 0.0;
  if (!trivial) make_weights(j);
  const std::size_t n = box_.size();
  for (std::size_t f = 0; f < fields_.size(); ++f) {
    if (!active_[f]) continue;
    std::vector<double>& u = fields_[f];
    if (direction_ == Direction::Forward) {
      if (!trivial) {
        double* p = u.data();
        const double* w = weights_.data();
        for (std::size_t i = 0; i < n; ++i) p[i] *= w[i];
      }
      convolve(u);
    } else {
      convolve(u);
      if (!trivial) {
        double* p = u.data();
        const double* w = weights_.data();
        for (std::size_t i = 0; i < n; ++i) p[i] *= w[i];
      }
    }
  }
  kernel_dropped_ += plan_.kernel.dropped_mass;
  step_ += direction_ == Direction::Forward ? 1 : -1;
}

double Sweep::total(int id) const { return neumaier_sum(fields_[static_cast<std::size_t>(id)]); }

double Sweep::value(int id, const Site& x) const {
  if (!box_.contains(x)) return 0.0;
  return fields_[static_cast<std::size_t>(id)][box_.index(x)];
}

double Sweep::edge_fraction(int id, int band) const {
  const auto& u = fields_[static_cast<std::size_t>(id)];
  double edge = 0.0, all = 0.0;
  for (BoxCursor c(box_); c.valid(); c.next()) {
    const double v = u[c.index()];
    all += v;
    if (box_.depth(c.site()) < band) edge += v;
  }
  return all > 0.0 ? edge / all : 0.0;
}

LatticeField Sweep::snapshot(int id) const {
  LatticeField f;
  f.box = box_;
  f.time = time();
  f.values = fields_[static_cast<std::size_t>(id)];
  return f;
}

void RadiusSchedule::add_source(std::int64_t step, int extent, std::int64_t until, double tol_factor) {
  reqs_.push_back({true, step, until, extent, plan_.leak_tol * tol_factor});
  influence_ += plan_.leak_tol * tol_factor;
}

void RadiusSchedule::add_target(std::int64_t step, int extent, double tol_factor) {
  reqs_.push_back({false, step, step, extent, plan_.leak_tol * tol_factor});
  influence_ += plan_.leak_tol * tol_factor;
}

int RadiusSchedule::radius_at(std::int64_t step) const {
  const bool fwd = direction_ == Direction::Forward;
  int r = 0;
  for (const Req& q : reqs_) {
    std::int64_t elapsed = -1;
    if (q.source) {
      if (fwd && step >= q.step && step <= q.until) elapsed = step - q.step;
      if (!fwd && step <= q.step && step >= q.until) elapsed = q.step - step;
    } else {
      if (fwd && step <= q.step) elapsed = q.step - step;
      if (!fwd && step >= q.step) elapsed = step - q.step;
    }
    if (elapsed < 0) continue;
    const double t = static_cast<double>(elapsed) * plan_.dt;
    r = std::max(r, q.extent + chernoff_radius(plan_.dim(), t, q.tol) + plan_.margin);
  }
  if (plan_.radius > 0 && r > plan_.radius) {
    throw ResourceError("automatic box radius " + std::to_string(r) + " exceeds the cap " +
                        std::to_string(plan_.radius));
  }
  return r;
}

Sweep open_sweep(const NoiseField& noise, const EvolutionPlan& plan, Direction direction,
                 std::int64_t step, const Site& center, const RadiusSchedule& schedule) {
  if (plan.policy == RadiusPolicy::Fixed) {
    return Sweep(noise, plan, direction, step, origin(plan.dim()), plan.radius);
  }
  return Sweep(noise, plan, direction, step, center, schedule.radius_at(step));
}

void run_sweep(Sweep& sweep, const EvolutionPlan& plan, const RadiusSchedule& schedule, std::int64_t end,
               const std::function<void(const Sweep&)>& on_step) {
  const bool fwd = sweep.direction() == Direction::Forward;
  if (fwd ? end < sweep.step() : end > sweep.step()) throw InvalidArgument("sweep cannot move backwards in time");
  while (sweep.step() != end) {
    if (plan.policy == RadiusPolicy::Auto) {
      const std::int64_t next = sweep.step() + (fwd ? 1 : -1);
      sweep.resize(std::max(schedule.radius_at(sweep.step()), schedule.radius_at(next)));
    }
    sweep.advance();
    if (on_step) on_step(sweep);
  }
}

namespace {

void fill_health(Health* h, const Sweep& sw, int id, double influence, bool compact) {
  if (!h) return;
  const auto& v = sw.raw(id);
  h->min_value = v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
  h->positive = h->min_value > 0.0;
  if (compact) h->edge_fraction = std::max(h->edge_fraction, sw.edge_fraction(id));
  h->boundary_influence = influence;
  h->kernel_dropped = sw.kernel_dropped();
}

void check_edge(const EvolutionPlan& plan, const Sweep& sw, int id) {
  const double frac = sw.edge_fraction(id);
  if (frac > plan.edge_tol) {
    throw BoundaryError("mass fraction " + std::to_string(frac) +
                        " within two sites of the box edge exceeds " + std::to_string(plan.edge_tol));
  }
}

}  // namespace

LatticeField evolve_step(const LatticeField& field, const NoiseField& noise,
                         const EvolutionPlan& plan, std::int64_t j) {
  if (checked_step(noise, field.time, "field time") != j) {
    throw InvalidArgument("field time does not match the step index");
  }
  Sweep sw(noise, plan, Direction::Forward, j, field.box.center(), field.box.radius());
  int id = sw.add_field_values(field);
  sw.advance();
  LatticeField out = sw.snapshot(id);
  out.normalized = false;
  return out;
}

LatticeField solve_cauchy(const LatticeField& f, double s, double t, const NoiseField& noise,
                          const EvolutionPlan& plan, Health* health) {
  const std::int64_t js = checked_step(noise, s, "start time");
  const std::int64_t jt = checked_step(noise, t, "end time");
  if (jt < js) throw InvalidArgument("solve_cauchy needs s <= t");
  for (double v : f.values) {
    if (!(v > 0.0)) throw InvalidArgument("initial data must be positive on the box");
  }
  Sweep sw(noise, plan, Direction::Forward, js, f.box.center(), f.box.radius());
  int id = sw.add_field_values(f);
  while (sw.step() < jt) sw.advance();
  fill_health(health, sw, id, 0.0, false);
  LatticeField out = sw.snapshot(id);
  out.time = t;
  return out;
}

LatticeField point_to_point_field(const Site& x, double s, double t, const NoiseField& noise,
                                  const EvolutionPlan& plan, Health* health) {
  const std::int64_t js = checked_step(noise, s, "start time");
  const std::int64_t jt = checked_step(noise, t, "end time");
  if (jt < js) throw InvalidArgument("point_to_point_field needs s <= t");
  if (plan.policy == RadiusPolicy::Fixed) {
    Sweep sw(noise, plan, Direction::Forward, js, origin(plan.dim()), plan.radius);
    int id = sw.add_delta(x);
    while (sw.step() < jt) sw.advance();
    fill_health(health, sw, id, 0.0, true);
    return sw.snapshot(id);
  }
  RadiusSchedule sched(plan, Direction::Forward);
  sched.add_source(js, 0, jt);
  Sweep sw(noise, plan, Direction::Forward, js, x, sched.radius_at(js));
  int id = sw.add_delta(x);
  while (sw.step() < jt) {
    sw.resize(std::max(sched.radius_at(sw.step()), sched.radius_at(sw.step() + 1)));
    sw.advance();
  }
  fill_health(health, sw, id, sched.influence_bound(), true);
  if (health) check_edge(plan, sw, id);
  return sw.snapshot(id);
}

LatticeField adjoint_sweep(double s, double T, const NoiseField& noise, const EvolutionPlan& plan,
                           int extent, Health* health) {
  const std::int64_t js = checked_step(noise, s, "start time");
  const std::int64_t jT = checked_step(noise, T, "horizon");
  if (jT < js) throw InvalidArgument("adjoint_sweep needs s <= T");
  if (plan.policy == RadiusPolicy::Fixed) {
    Sweep sw(noise, plan, Direction::Adjoint, jT, origin(plan.dim()), plan.radius);
    int id = sw.add_constant(1.0);
    while (sw.step() > js) sw.advance();
    fill_health(health, sw, id, 0.0, false);
    return sw.snapshot(id);
  }
  RadiusSchedule sched(plan, Direction::Adjoint);
  sched.add_target(js, extent);
  Sweep sw(noise, plan, Direction::Adjoint, jT, origin(plan.dim()), sched.radius_at(jT));
  int id = sw.add_constant(1.0);
  while (sw.step() > js) {
    sw.resize(std::max(sched.radius_at(sw.step()), sched.radius_at(sw.step() - 1)));
    sw.advance();
  }
  sw.resize(extent);
  fill_health(health, sw, id, sched.influence_bound(), false);
  return sw.snapshot(id);
}

LatticeField backward_partition(double S, double t, const NoiseField& noise,
                                const EvolutionPlan& plan, int extent, Health* health) {
  const std::int64_t jS = checked_step(noise, S, "start time");
  const std::int64_t jt = checked_step(noise, t, "end time");
  if (jt < jS) throw InvalidArgument("backward_partition needs S <= t");
  if (plan.policy == RadiusPolicy::Fixed) {
    Sweep sw(noise, plan, Direction::Forward, jS, origin(plan.dim()), plan.radius);
    int id = sw.add_constant(1.0);
    while (sw.step() < jt) sw.advance();
    fill_health(health, sw, id, 0.0, false);
    return sw.snapshot(id);
  }
  RadiusSchedule sched(plan, Direction::Forward);
  sched.add_target(jt, extent);
  Sweep sw(noise, plan, Direction::Forward, jS, origin(plan.dim()), sched.radius_at(jS));
  int id = sw.add_constant(1.0);
  while (sw.step() < jt) {
    sw.resize(std::max(sched.radius_at(sw.step()), sched.radius_at(sw.step() + 1)));
    sw.advance();
  }
  sw.resize(extent);
  fill_health(health, sw, id, sched.influence_bound(), false);
  return sw.snapshot(id);
}

ChapmanKolmogorov chapman_kolmogorov_check(const Site& x, double s, double r, double t,
                                           const NoiseField& noise, const EvolutionPlan& plan,
                                           int interior) {
  const std::int64_t js = checked_step(noise, s, "s");
  const std::int64_t jr = checked_step(noise, r, "r");
  const std::int64_t jt = checked_step(noise, t, "t");
  if (!(js < jr && jr < jt)) throw InvalidArgument("chapman_kolmogorov_check needs s < r < t");
  if (plan.radius < 1) throw InvalidArgument("chapman_kolmogorov_check needs a fixed box radius");
  const Site o = origin(plan.dim());

  Sweep fwd(noise, plan, Direction::Forward, js, o, plan.radius);
  int id = fwd.add_delta(x);
  while (fwd.step() < jr) fwd.advance();
  const std::vector<double> mid = fwd.raw(id);
  while (fwd.step() < jt) fwd.advance();

  ChapmanKolmogorov out;
  const Box inner(o, std::max(0, plan.radius - interior));
  std::vector<Site> targets;
  for (BoxCursor c(inner); c.valid(); c.next()) targets.push_back(c.site());
  const std::size_t batch = 64;
  for (std::size_t b0 = 0; b0 < targets.size(); b0 += batch) {
    const std::size_t b1 = std::min(targets.size(), b0 + batch);
    Sweep adj(noise, plan, Direction::Adjoint, jt, o, plan.radius);
    for (std::size_t k = b0; k < b1; ++k) adj.add_delta(targets[k]);
    while (adj.step() > jr) adj.advance();
    for (std::size_t k = b0; k < b1; ++k) {
      const auto& col = adj.raw(static_cast<int>(k - b0));
      double assembled = 0.0;
      for (std::size_t z = 0; z < col.size(); ++z) assembled += mid[z] * col[z];
      const double direct = fwd.value(id, targets[k]);
      const double defect = std::fabs(direct - assembled);
      out.max_defect = std::max(out.max_defect, defect);
      if (direct > 0.0) out.max_relative = std::max(out.max_relative, defect / direct);
      ++out.sites_checked;
    }
  }
  return out;
}

std::vector<double> step_matrix(const Box& box, const NoiseField& noise, const EvolutionPlan& plan,
                                std::int64_t j) {
  const std::size_t n = box.size();
  std::vector<double> w(n, 1.0);
  if (plan.beta != 0.0) {
    const double b = -0.5 * plan.beta * plan.beta * plan.dt;
    const double a = plan.beta * std::sqrt(plan.dt);
    for (BoxCursor c(box); c.valid(); c.next()) {
      w[c.index()] = std::exp(a * noise.standard_normal(c.site(), j) + b);
    }
  }
  std::vector<double> m(n * n, 0.0);
  const int taps = plan.kernel.taps;
  for (BoxCursor ci(box); ci.valid(); ci.next()) {
    for (BoxCursor cj(box); cj.valid(); cj.next()) {
      double k = 1.0;
      for (int a = 0; a < box.dim(); ++a) {
        const int dz = std::abs(ci.site()[static_cast<std::size_t>(a)] - cj.site()[static_cast<std::size_t>(a)]);
        if (dz > taps) {
          k = 0.0;
          break;
        }
        k *= plan.kernel.g[static_cast<std::size_t>(dz)];
      }
      m[ci.index() * n + cj.index()] = k * w[cj.index()];
    }
  }
  return m;
}

}  // namespace pamlab
