#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pamlab/errors.hpp"
#include "pamlab/evolution.hpp"
#include "pamlab/experiments.hpp"
#include "pamlab/harness.hpp"
#include "pamlab/kernels.hpp"
#include "pamlab/noise.hpp"
#include "pamlab/polymer.hpp"

namespace py = pybind11;
using namespace pamlab;

namespace {

py::dict record_dict(const ExperimentRecord& r) {
  py::dict d;
  for (const auto& [k, v] : r.values) d[py::str(k)] = v;
  return d;
}

py::array_t<double> field_array(const LatticeField& f) {
  std::vector<py::ssize_t> shape(static_cast<std::size_t>(f.box.dim()), f.box.side());
  py::array_t<double> a(shape);
  std::copy(f.values.begin(), f.values.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lattice parabolic Anderson model: kernels, environments, solvers and experiments";

  py::register_local_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_local_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_local_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<KernelTable>(m, "KernelTable")
      .def_property_readonly("dim", &KernelTable::dim)
      .def_property_readonly("time", &KernelTable::time)
      .def_property_readonly("radius", &KernelTable::radius)
      .def("value", &KernelTable::value)
      .def("sum", &KernelTable::sum)
      .def("tail_bound", &KernelTable::tail_bound)
      .def_property_readonly("axis", &KernelTable::axis);
  m.def("kernel_table", [](int dim, double t, int radius, double tol) { return kernel_table(dim, t, radius, tol); },
        py::arg("dim"), py::arg("t"), py::arg("radius"), py::arg("series_tol") = 1e-15);
  m.def("chernoff_radius", &chernoff_radius, py::arg("dim"), py::arg("t"), py::arg("tol"));

  py::class_<RatioExtremes>(m, "RatioExtremes")
      .def_readonly("inf_ratio", &RatioExtremes::inf_ratio)
      .def_readonly("sup_ratio", &RatioExtremes::sup_ratio)
      .def_readonly("argmin", &RatioExtremes::argmin)
      .def_readonly("argmax", &RatioExtremes::argmax);
  m.def("ratio_extremes",
        [](int dim, double t, double sigma, const Site& y1, const Site& y2, int radius) {
          return ratio_extremes(dim, t, sigma, y1, y2, radius);
        },
        py::arg("dim"), py::arg("t"), py::arg("sigma"), py::arg("y1"), py::arg("y2"), py::arg("radius"));

  py::class_<NoiseField>(m, "NoiseField")
      .def(py::init<int, int, double, double, double, std::uint64_t, std::uint64_t>(), py::arg("dim"),
           py::arg("radius"), py::arg("s_min"), py::arg("t_max"), py::arg("dt"), py::arg("seed"),
           py::arg("realization") = 0)
      .def_static("zero", &NoiseField::zero)
      .def_property_readonly("dim", &NoiseField::dim)
      .def_property_readonly("radius", &NoiseField::radius)
      .def_property_readonly("dt", &NoiseField::dt)
      .def("increment", &NoiseField::increment)
      .def("path_value", &NoiseField::path_value)
      .def("wiener_shift", &NoiseField::wiener_shift);
  m.def("noise_selftest", [](const NoiseField& f, std::size_t n) {
    const auto r = noise_selftest(f, n);
    py::dict d;
    d["samples"] = r.samples;
    d["mean"] = r.mean;
    d["variance"] = r.variance;
    d["ks_statistic"] = r.ks_statistic;
    d["ks_critical"] = r.ks_critical;
    d["passed"] = r.passed;
    return d;
  });

  py::class_<EvolutionPlan>(m, "EvolutionPlan")
      .def_static("make", &EvolutionPlan::make, py::arg("dim"), py::arg("dt") = 0.05, py::arg("beta") = 0.2,
                  py::arg("kernel_tol") = 1e-13)
      .def_readwrite("beta", &EvolutionPlan::beta)
      .def_readwrite("radius", &EvolutionPlan::radius)
      .def_readwrite("leak_tol", &EvolutionPlan::leak_tol)
      .def_property(
          "policy", [](const EvolutionPlan& p) { return p.policy == RadiusPolicy::Fixed ? "fixed" : "auto"; },
          [](EvolutionPlan& p, const std::string& v) {
            if (v != "fixed" && v != "auto") throw InvalidArgument("policy must be 'auto' or 'fixed'");
            p.policy = v == "fixed" ? RadiusPolicy::Fixed : RadiusPolicy::Auto;
          });

  py::class_<LatticeField>(m, "LatticeField")
      .def_property_readonly("center", [](const LatticeField& f) { return f.box.center(); })
      .def_property_readonly("radius", [](const LatticeField& f) { return f.box.radius(); })
      .def_readonly("time", &LatticeField::time)
      .def("value", &LatticeField::value)
      .def("sum", &LatticeField::sum)
      .def("min", &LatticeField::min)
      .def("to_numpy", &field_array);
  m.def("make_field",
        [](const Site& center, int radius, double time, const SiteFunction& f) {
          return make_field(Box(center, radius), time, f);
        },
        py::arg("center"), py::arg("radius"), py::arg("time"), py::arg("f"));
  m.def("solve_cauchy",
        [](const LatticeField& f, double s, double t, const NoiseField& n, const EvolutionPlan& p) {
          return solve_cauchy(f, s, t, n, p);
        });
  m.def("point_to_point_field",
        [](const Site& x, double s, double t, const NoiseField& n, const EvolutionPlan& p) {
          return point_to_point_field(x, s, t, n, p);
        });
  m.def("adjoint_sweep",
        [](double s, double T, const NoiseField& n, const EvolutionPlan& p, int extent) {
          return adjoint_sweep(s, T, n, p, extent);
        },
        py::arg("s"), py::arg("T"), py::arg("noise"), py::arg("plan"), py::arg("extent") = 0);
  m.def("backward_partition",
        [](double S, double t, const NoiseField& n, const EvolutionPlan& p, int extent) {
          return backward_partition(S, t, n, p, extent);
        },
        py::arg("S"), py::arg("t"), py::arg("noise"), py::arg("plan"), py::arg("extent") = 0);

  py::class_<McEstimate>(m, "McEstimate")
      .def_readonly("mean", &McEstimate::mean)
      .def_readonly("std_error", &McEstimate::std_error)
      .def_readonly("n_samples", &McEstimate::n_samples)
      .def_readonly("hits", &McEstimate::hits)
      .def_readonly("degenerate", &McEstimate::degenerate)
      .def_readonly("estimand", &McEstimate::estimand);
  auto opts = [](double beta, std::uint64_t seed, int workers) {
    McOptions o;
    o.beta = beta;
    o.seed = seed;
    o.workers = workers;
    return o;
  };
  m.def("mc_point_to_point",
        [opts](const NoiseField& n, const Site& x, double s, const Site& y, double t, std::size_t samples,
               double beta, std::uint64_t seed, int workers) {
          return mc_point_to_point(n, x, s, y, t, samples, opts(beta, seed, workers));
        },
        py::arg("noise"), py::arg("x"), py::arg("s"), py::arg("y"), py::arg("t"), py::arg("samples"),
        py::arg("beta") = 0.2, py::arg("seed") = 0, py::arg("workers") = 1);
  m.def("mc_point_to_line",
        [opts](const NoiseField& n, const Site& x, double s, double t, std::size_t samples, double beta,
               std::uint64_t seed, int workers) {
          return mc_point_to_line(n, x, s, t, samples, opts(beta, seed, workers));
        },
        py::arg("noise"), py::arg("x"), py::arg("s"), py::arg("t"), py::arg("samples"), py::arg("beta") = 0.2,
        py::arg("seed") = 0, py::arg("workers") = 1);

  py::class_<FunctionClassSpec>(m, "FunctionClassSpec")
      .def(py::init([](double c, double eps) { return FunctionClassSpec{c, eps}; }), py::arg("c") = 1.0,
           py::arg("eps") = 0.5)
      .def_readwrite("c", &FunctionClassSpec::c)
      .def_readwrite("eps", &FunctionClassSpec::eps);
  m.def("builtin_family",
        [](const std::string& name, const FunctionClassSpec& spec, std::uint64_t seed) {
          return builtin_family(parse_family(name), spec, seed);
        },
        py::arg("name"), py::arg("spec"), py::arg("seed") = 0);
  m.def("tail_sample", [](const Site& y, double t, const NoiseField& n, const EvolutionPlan& p) {
    return record_dict(tail_sample(y, t, n, p));
  });
  m.def("sigma_decomposition",
        [](const SiteFunction& f, const FunctionClassSpec& spec, const Site& y, double t, const NoiseField& n,
           const EvolutionPlan& p, double sigma, double S_burn, double T_burn) {
          return record_dict(sigma_decomposition(f, spec, y, t, n, p, sigma, S_burn, T_burn));
        });
  m.def("factorization_residual",
        [](const Site& x, double s, const Site& y, double t, const NoiseField& n, const EvolutionPlan& p,
           double S_burn, double T_burn, double sigma, const FunctionClassSpec& spec) {
          return record_dict(factorization_residual(x, s, y, t, n, p, S_burn, T_burn, sigma, spec));
        });
  m.def("attraction_experiment",
        [](const SiteFunction& f, const FunctionClassSpec& spec, const Site& y, const std::vector<double>& ts,
           const NoiseField& n, const EvolutionPlan& p, double S_burn) {
          return record_dict(attraction_experiment(f, spec, y, ts, n, p, S_burn));
        });
  m.def("stationarity_sample",
        [](const NoiseField& n, const EvolutionPlan& p, double t, const std::vector<double>& S_list) {
          return record_dict(stationarity_sample(n, p, t, S_list, default_probes(n.dim())));
        });

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def("set", &RunConfig::set)
      .def("text", &RunConfig::text)
      .def("canonical", &RunConfig::canonical)
      .def("hash", &RunConfig::hash)
      .def("validate", [](const RunConfig& c, const std::string& sub) { c.validate(parse_subcommand(sub)); });
  m.def("parse_config", &parse_config);
  m.def("run",
        [](const RunConfig& c, const std::string& sub, const std::string& out, int workers) {
          const auto r = run(c, parse_subcommand(sub), out, workers);
          return py::make_tuple(r.exit_code, r.message, r.records);
        },
        py::arg("config"), py::arg("subcommand"), py::arg("out"), py::arg("workers") = 1);
  m.attr("__version__") = code_version();
}
