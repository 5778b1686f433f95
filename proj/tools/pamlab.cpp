#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pamlab/harness.hpp"

namespace {

struct KeyFlag {
  const char* flag;
  const char* key;
  const char* help;
};

const std::vector<KeyFlag> kCommon = {
    {"--seed", "seed", "noise seed (required except for kernels)"},
    {"--realizations", "realizations", "number of noise realizations"},
    {"--dim", "dim", "lattice dimension"},
    {"--beta", "beta", "inverse temperature"},
    {"--dt", "dt", "time step"},
    {"--radius", "radius", "box radius or 'auto'"},
    {"--policy", "policy", "box policy: auto or fixed"},
};

const std::map<std::string, std::vector<KeyFlag>> kPerCommand = {
    {"kernels", {{"--t", "t", "time"}, {"--tol", "series-tol", "Poisson series tolerance"}}},
    {"noise", {{"--samples", "samples", "increments to test"}}},
    {"mc",
     {{"--x", "x", "start site, e.g. 0:0:0"},
      {"--y", "y", "end site"},
      {"--s", "s", "start time"},
      {"--t", "t", "end time"},
      {"--samples", "samples", "paths per estimate"},
      {"--estimand", "estimand", "point_to_point, point_to_line or line_to_point"}}},
    {"evolve", {{"--s", "s", "start time"}, {"--t", "t", "end time"}}},
    {"decompose",
     {{"--y", "y", "target site"},
      {"--t", "t", "time"},
      {"--family", "family", "initial data family"},
      {"--sigma", "sigma", "ball exponent"},
      {"--c", "c", "class constant c"},
      {"--eps", "eps", "class exponent eps"},
      {"--s-burn", "s-burn", "backward burn-in"},
      {"--t-burn", "t-burn", "forward burn-in"}}},
    {"factorize",
     {{"--y", "y", "target site"},
      {"--t-grid", "t-grid", "comma-separated horizons t - s"},
      {"--sigma", "sigma", "ball exponent"},
      {"--s-burn", "s-burn", "backward burn-in"},
      {"--t-burn", "t-burn", "forward burn-in"},
      {"--burn-factor", "burn-factor", "burn-in as a multiple of t when not set"}}},
    {"attract",
     {{"--y", "y", "comparison site"},
      {"--t-grid", "t-grid", "comma-separated times"},
      {"--family", "family", "initial data family"},
      {"--c", "c", "class constant c"},
      {"--eps", "eps", "class exponent eps"},
      {"--sigma", "sigma", "ball exponent"},
      {"--s-burn", "s-burn", "backward burn-in"}}},
    {"tails",
     {{"--y", "y", "end site"}, {"--t", "t", "time"}, {"--u-max", "u-max", "largest u"}, {"--u-step", "u-step", "u spacing"}}},
    {"stationary", {{"--t", "t", "push-forward time"}, {"--s-list", "s-list", "comma-separated burn-ins"}}},
};

const std::map<std::string, std::string> kHelp = {
    {"kernels", "tabulate the continuous-time kernel p_t"},
    {"noise", "moment and Kolmogorov-Smirnov self-test of the environment"},
    {"mc", "Monte Carlo polymer partition function"},
    {"evolve", "solve the Cauchy problem from builtin or file initial data"},
    {"decompose", "three-way split of u_f around the ball |x| <= t^sigma"},
    {"factorize", "factorization residuals of the point-to-point partition function"},
    {"attract", "attraction of normalized solutions to the limiting ratio"},
    {"tails", "lower-tail probabilities of the partition function"},
    {"stationary", "stationarity of the normalized pullback field"},
};

bool is_family(const std::string& v) {
  return v == "constant" || v == "growing" || v == "decaying" || v == "random";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lattice parabolic Anderson model experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::string out_dir;
  int workers = 1;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "worker threads (affects wall time only)")->check(CLI::PositiveNumber);

  std::map<std::string, std::string> overrides;
  std::vector<std::string> sets;
  std::string ratio;
  std::string family_or_file;
  std::string noise_mode = "selftest";
  bool compare = false;
  bool check_direct = false;
  std::vector<std::unique_ptr<std::string>> storage;

  for (const auto& name : pamlab::subcommand_names()) {
    CLI::App* sub = app.add_subcommand(name, kHelp.at(name));
    auto bind = [&](const KeyFlag& f) {
      storage.push_back(std::make_unique<std::string>());
      std::string* slot = storage.back().get();
      const std::string key = f.key;
      sub->add_option(f.flag, *slot, f.help)->each([&overrides, key](const std::string& v) { overrides[key] = v; });
    };
    for (const auto& f : kCommon) bind(f);
    for (const auto& f : kPerCommand.at(name)) bind(f);
    sub->add_option("--set", sets, "extra key=value settings");
    if (name == "kernels") sub->add_option("--ratio", ratio, "y1,y2,sigma: report inf and sup of p_t^{y1-x}/p_t^{y2-x}");
    if (name == "noise") sub->add_option("mode", noise_mode, "selftest")->check(CLI::IsMember({"selftest"}));
    if (name == "mc") sub->add_flag("--compare", compare, "also evaluate the lattice solver value");
    if (name == "evolve") sub->add_option("--f", family_or_file, "builtin family or initial-data file");
    if (name == "decompose") sub->add_flag("--check-direct", check_direct, "compare with a direct forward solve");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const auto sub = pamlab::parse_subcommand(name);
    pamlab::RunConfig cfg = config_path.empty() ? pamlab::RunConfig() : pamlab::load_config(config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw pamlab::InvalidArgument("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!ratio.empty()) {
      const auto first = ratio.find(',');
      const auto second = ratio.find(',', first == std::string::npos ? first : first + 1);
      if (first == std::string::npos || second == std::string::npos) {
        throw pamlab::InvalidArgument("--ratio expects y1,y2,sigma");
      }
      cfg.set("ratio", "true");
      cfg.set("y1", ratio.substr(0, first));
      cfg.set("y2", ratio.substr(first + 1, second - first - 1));
      cfg.set("sigma", ratio.substr(second + 1));
    }
    if (!family_or_file.empty()) cfg.set(is_family(family_or_file) ? "family" : "f-file", family_or_file);
    if (compare) cfg.set("compare", "true");
    if (check_direct) cfg.set("check-direct", "true");
    if (out_dir.empty()) out_dir = cfg.text("out").empty() ? "pamlab-out/" + name : cfg.text("out");

    const auto result = pamlab::run(cfg, sub, out_dir, workers);
    if (sub == pamlab::Subcommand::Kernels || sub == pamlab::Subcommand::Noise || sub == pamlab::Subcommand::Mc) {
      std::ifstream rec(out_dir + "/records.jsonl");
      std::string line;
      while (std::getline(rec, line)) std::cout << line << '\n';
    }
    if (result.exit_code != 0) {
      std::cerr << "error: " << result.message << '\n';
    } else {
      std::cerr << name << ": " << result.records << " record(s) written to " << out_dir << '\n';
    }
    return result.exit_code;
  } catch (const pamlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pamlab::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
