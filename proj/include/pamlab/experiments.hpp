#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pamlab/evolution.hpp"
#include "pamlab/lattice.hpp"
#include "pamlab/noise.hpp"
#include "pamlab/stats.hpp"

namespace pamlab {

/// Parameters of the class L_{c,eps}: |ln f(x)| <= c |x|^(1 - eps).
struct FunctionClassSpec {
  double c = 1.0;
  double eps = 0.5;

  void validate() const;
  double bound(const Site& x) const;
};

bool class_check(const LatticeField& f, const FunctionClassSpec& spec);

/// Throws unless 1 / (1 + eps) < sigma < 1.
void check_sigma(double sigma, const FunctionClassSpec& spec);

struct MetricValue {
  double value = 0.0;
  double remainder = 0.0;  ///< sum of e^{-|x|} over sites outside the box
};

/// sum_x e^{-|x|} |f - g| / (1 + |f - g|) over the common box.
MetricValue metric_d(const LatticeField& f, const LatticeField& g);

/// sum over Z^d of e^{-|x|} to absolute accuracy `tol`.
double lattice_exp_sum(int dim, double tol = 1e-12);

enum class Family { Constant, Growing, Decaying, Random };

Family parse_family(const std::string& name);
std::string family_name(Family f);

/// Members of L_{c,eps}: 1, e^{c|x|^(1-eps)}, e^{-c|x|^(1-eps)}, and a seeded
/// smooth random log-profile bounded by c|x|^(1-eps).
SiteFunction builtin_family(Family family, const FunctionClassSpec& spec, std::uint64_t seed = 0);

/// Named scalar results of one realization.
struct ExperimentRecord {
  std::string kind;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t realization = 0;
  std::vector<std::pair<std::string, double>> values;

  void set(const std::string& key, double v);
  bool has(const std::string& key) const;
  double get(const std::string& key) const;
};

/// "name@v" with v printed in shortest round-trip form.
std::string tagged(const std::string& name, double v);

/// Z_{x,s}^T for each horizon T from one forward delta sweep; keys Z@T and
/// dZ@T = |Z^{T_next} - Z^T|.
ExperimentRecord estimate_limit_Z(const Site& x, double s, const NoiseField& noise,
                                  const EvolutionPlan& plan, const std::vector<double>& horizons);

/// Z_S^{y,t} for each start S (decreasing) from one adjoint delta sweep; keys Zb@S and dZb@S.
ExperimentRecord estimate_limit_Z_backward(const Site& y, double t, const NoiseField& noise,
                                           const EvolutionPlan& plan, const std::vector<double>& starts);

struct DecayFit {
  double theta = 0.0;  ///< minus the log-log slope
  Interval ci;
  std::vector<double> means;  ///< per-scale mean of |v|^power
};

/// Fits mean_r |samples[r][k]|^power ~ scales[k]^(-theta) with a bootstrap
/// interval over realizations.
DecayFit fit_decay(const std::vector<double>& scales, const std::vector<std::vector<double>>& samples,
                   double power, int reps, std::uint64_t seed);

/// delta_{x,s}^{y,t} = Z_{x,s}^{y,t} / p - Z_{x,s}^{t+T_burn} Z_{s-S_burn}^{y,t}
/// for every source x; one record per x with keys Z, p, ratio, Zinf, Zneg, delta.
std::vector<ExperimentRecord> factorization_residuals(const std::vector<Site>& xs, double s, const Site& y,
                                                      double t, const NoiseField& noise,
                                                      const EvolutionPlan& plan, double S_burn,
                                                      double T_burn, double sigma,
                                                      const FunctionClassSpec& spec);

ExperimentRecord factorization_residual(const Site& x, double s, const Site& y, double t,
                                        const NoiseField& noise, const EvolutionPlan& plan,
                                        double S_burn, double T_burn, double sigma,
                                        const FunctionClassSpec& spec);

/// The three-way split of u_f(y, t) (start time 0) around the ball |x| <= t^sigma,
/// with B, C, D and the identity defect; check_direct adds the relative
/// deviation from an independent forward solve.
ExperimentRecord sigma_decomposition(const SiteFunction& f, const FunctionClassSpec& spec, const Site& y,
                                     double t, const NoiseField& noise, const EvolutionPlan& plan,
                                     double sigma, double S_burn, double T_burn, bool check_direct = false);

/// |u_f(y,t)/u_f(0,t) - Z_{-S}^{y,t}/Z_{-S}^{0,t}| per t (start time 0); keys
/// u_ratio@t, z_ratio@t, disc@t.
ExperimentRecord attraction_experiment(const SiteFunction& f, const FunctionClassSpec& spec, const Site& y,
                                       const std::vector<double>& ts, const NoiseField& noise,
                                       const EvolutionPlan& plan, double S_burn);

/// Z_0^{y,t} for one realization; key Z.
ExperimentRecord tail_sample(const Site& y, double t, const NoiseField& noise, const EvolutionPlan& plan);

struct TailPoint {
  double u = 0.0;
  std::size_t count = 0;
  double q = 0.0;
  Interval ci;
  bool used = false;
};

struct TailFit {
  std::vector<TailPoint> points;
  bool monotone = true;
  std::size_t used = 0;
  double curvature = 0.0;  ///< quadratic coefficient of ln Q against u
  Interval ci;
  bool fitted = false;
};

/// Empirical Q(Z < e^{-u}) with Wilson intervals and a quadratic fit of ln Q
/// on the grid points whose estimate lies in [min_count / N, q_max].
TailFit tail_probability(const std::vector<double>& z, const std::vector<double>& u_grid, int reps,
                         std::uint64_t seed, double q_max = 0.5, std::size_t min_count = 10);

/// phi: evolve f from s to t and normalize by the value at the origin.
LatticeField cocycle_apply(const LatticeField& f, double s, double t, const NoiseField& noise,
                           const EvolutionPlan& plan);

/// Y_S(omega) = normalized Z_{-S}^{.,0} and its push phi^t_omega Y_S at the
/// probes, for every S, from one forward sweep; keys Y[S]@site and P[S]@site.
ExperimentRecord stationarity_sample(const NoiseField& noise, const EvolutionPlan& plan, double t,
                                     const std::vector<double>& S_list, const std::vector<Site>& probes);

struct QuantileDistance {
  double S = 0.0;
  Site probe;
  double distance = 0.0;  ///< max over quartiles of |Q_Y - Q_P|
};

std::vector<QuantileDistance> stationarity_distances(const std::vector<ExperimentRecord>& records,
                                                     const std::vector<double>& S_list,
                                                     const std::vector<Site>& probes);

std::vector<Site> default_probes(int dim);

}  // namespace pamlab
