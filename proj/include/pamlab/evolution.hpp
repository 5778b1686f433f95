#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pamlab/lattice.hpp"
#include "pamlab/noise.hpp"

namespace pamlab {

/// Positive function on a box at a grid time.
struct LatticeField {
  Box box;
  double time = 0.0;
  std::vector<double> values;
  bool normalized = false;

  double value(const Site& x) const;  ///< zero outside the box
  double sum() const;
  double min() const;
};

using SiteFunction = std::function<double(const Site&)>;

LatticeField make_field(const Box& box, double time, const SiteFunction& f);

/// Separable per-step kernel p_dt truncated to |z_i| <= taps per coordinate.
struct StepKernel {
  int dim = 3;
  double dt = 0.05;
  int taps = 0;
  std::vector<double> g;  ///< one-dimensional profile g[0..taps]
  double dropped_mass = 0.0;  ///< certified bound on 1 - total tabulated mass

  static StepKernel make(int dim, double dt, double tol);
};

enum class RadiusPolicy { Fixed, Auto };

struct EvolutionPlan {
  double dt = 0.05;
  double beta = 0.2;
  StepKernel kernel;
  RadiusPolicy policy = RadiusPolicy::Auto;
  int radius = 0;          ///< box radius for the fixed policy, cap for the automatic one
  double leak_tol = 1e-8;  ///< Chernoff tolerance used by automatic box schedules
  int margin = 2;
  double edge_tol = 1e-8;  ///< allowed mass fraction within two sites of the edge

  static EvolutionPlan make(int dim, double dt, double beta, double kernel_tol = 1e-13);
  int dim() const { return kernel.dim; }
};

/// Smallest radius around `center_extent` such that a walk started inside
/// stays within the box over `elapsed` time up to the plan's tolerance.
int suggest_radius(const EvolutionPlan& plan, double elapsed, int center_extent);

struct Health {
  double edge_fraction = 0.0;        ///< max over recorded fields of edge-band mass / total
  double boundary_influence = 0.0;   ///< certified Chernoff bound on the boundary effect
  double kernel_dropped = 0.0;       ///< accumulated per-step kernel truncation
  double min_value = 0.0;
  bool positive = true;
};

enum class Direction { Forward, Adjoint };

/// Several fields evolved through the same noise on a common box.
///
/// Forward steps act as u <- K * (w_j . u); adjoint steps as v <- w_j . (K * v)
/// with w_j(x) = exp(beta xi(x, j) - beta^2 dt / 2). The box is centred at a
/// fixed site and may be resized between steps; values leaving the box are
/// absorbed.
class Sweep {
 public:
  Sweep(const NoiseField& noise, const EvolutionPlan& plan, Direction direction,
        std::int64_t step, Site center, int radius);

  Direction direction() const { return direction_; }
  std::int64_t step() const { return step_; }
  double time() const { return static_cast<double>(step_) * plan_.dt; }
  const Box& box() const { return box_; }
  std::size_t field_count() const { return fields_.size(); }

  int add_field(const SiteFunction& initial);
  int add_delta(const Site& x, double mass = 1.0);
  int add_constant(double c);
  int add_field_values(const LatticeField& initial);
  void deactivate(int id);
  bool active(int id) const { return active_[static_cast<std::size_t>(id)]; }

  void resize(int radius);
  /// One step forward (step -> step + 1) or backward (step -> step - 1).
  void advance();

  double total(int id) const;
  double value(int id, const Site& x) const;
  double edge_fraction(int id, int band = 2) const;
  LatticeField snapshot(int id) const;
  const std::vector<double>& raw(int id) const { return fields_[static_cast<std::size_t>(id)]; }
  double kernel_dropped() const { return kernel_dropped_; }

 private:
  void make_weights(std::int64_t j);
  void convolve(std::vector<double>& u);

  const NoiseField& noise_;
  EvolutionPlan plan_;
  Direction direction_;
  std::int64_t step_;
  Box box_;
  std::vector<std::vector<double>> fields_;
  std::vector<bool> active_;
  std::vector<double> weights_;
  std::vector<double> scratch_;
  std::vector<double> line_;
  double kernel_dropped_ = 0.0;
};

/// Box radius schedule from growing (compact source) and target (accuracy
/// at a region) requirements, evaluated per step.
class RadiusSchedule {
 public:
  RadiusSchedule(const EvolutionPlan& plan, Direction direction) : plan_(plan), direction_(direction) {}

  /// A compact source of sup-norm extent `extent` (around the sweep centre)
  /// injected at `step`, needed until `until`; tol_factor < 1 tightens the
  /// tolerance when the field is later weighted by growing data.
  void add_source(std::int64_t step, int extent, std::int64_t until, double tol_factor = 1.0);
  /// Values within `extent` are needed at `step`; tol_factor < 1 tightens
  /// the tolerance for growing initial data.
  void add_target(std::int64_t step, int extent, double tol_factor = 1.0);

  int radius_at(std::int64_t step) const;
  double influence_bound() const { return influence_; }

 private:
  struct Req {
    bool source;
    std::int64_t step;
    std::int64_t until;
    int extent;
    double tol;
  };
  EvolutionPlan plan_;
  Direction direction_;
  std::vector<Req> reqs_;
  double influence_ = 0.0;
};

/// Sweep on the plan's box: centred at `center` with the scheduled radius
/// for the automatic policy, or at the origin with the fixed radius.
Sweep open_sweep(const NoiseField& noise, const EvolutionPlan& plan, Direction direction,
                 std::int64_t step, const Site& center, const RadiusSchedule& schedule);

/// Advances to `end`, resizing from the schedule (automatic policy only)
/// before each step; on_step runs after every step.
void run_sweep(Sweep& sweep, const EvolutionPlan& plan, const RadiusSchedule& schedule, std::int64_t end,
               const std::function<void(const Sweep&)>& on_step = {});

LatticeField evolve_step(const LatticeField& field, const NoiseField& noise,
                         const EvolutionPlan& plan, std::int64_t j);

/// u_f^s(., t) on the box of f (fixed policy) or on a box sized for the
/// target extent (automatic policy, f evaluated on the initial box).
LatticeField solve_cauchy(const LatticeField& f, double s, double t, const NoiseField& noise,
                          const EvolutionPlan& plan, Health* health = nullptr);

/// Z_{x,s}^{., t}.
LatticeField point_to_point_field(const Site& x, double s, double t, const NoiseField& noise,
                                  const EvolutionPlan& plan, Health* health = nullptr);

/// x -> Z_{x,s}^T, values needed within `extent` of the origin.
LatticeField adjoint_sweep(double s, double T, const NoiseField& noise, const EvolutionPlan& plan,
                           int extent = 0, Health* health = nullptr);

/// y -> Z_S^{y,t}, values needed within `extent` of the origin.
LatticeField backward_partition(double S, double t, const NoiseField& noise,
                                const EvolutionPlan& plan, int extent = 0,
                                Health* health = nullptr);

struct ChapmanKolmogorov {
  double max_defect = 0.0;      ///< max_y |Z_{x,s}^{y,t} - sum_z Z_{x,s}^{z,r} Z_{z,r}^{y,t}|
  double max_relative = 0.0;
  std::size_t sites_checked = 0;
};

/// Assembles sum_z Z_{x,s}^{z,r} Z_{z,r}^{y,t} from a forward field and one
/// adjoint sweep per y on the plan's fixed box.
ChapmanKolmogorov chapman_kolmogorov_check(const Site& x, double s, double r, double t,
                                           const NoiseField& noise, const EvolutionPlan& plan,
                                           int interior = 2);

/// Dense per-step transfer matrix M_j (row = target site, column = source)
/// on a box; for brute-force checks on tiny boxes.
std::vector<double> step_matrix(const Box& box, const NoiseField& noise, const EvolutionPlan& plan,
                                std::int64_t j);

}  // namespace pamlab
