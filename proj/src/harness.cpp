#include "pamlab/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "pamlab/kernels.hpp"
#include "pamlab/noise.hpp"
#include "pamlab/parallel.hpp"
#include "pamlab/polymer.hpp"
#include "pamlab/stats.hpp"

#ifndef PAMLAB_VERSION
#define PAMLAB_VERSION "0.0.0"
#endif

namespace pamlab {

namespace {

using json = nlohmann::ordered_json;

enum class Kind { Uint, Int, IntOrAuto, Real, RealOrAuto, Bool, Site1, Sites, Reals, Choice, Text };

struct KeyDef {
  const char* name;
  Kind kind;
  const char* def;
  const char* choices;
};

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> keys = {
      {"beta", Kind::Real, "0.2", nullptr},
      {"bootstrap", Kind::Uint, "1000", nullptr},
      {"burn-factor", Kind::Real, "3", nullptr},
      {"c", Kind::Real, "1", nullptr},
      {"check-direct", Kind::Bool, "false", nullptr},
      {"compare", Kind::Bool, "false", nullptr},
      {"dim", Kind::Int, "3", nullptr},
      {"dt", Kind::Real, "0.05", nullptr},
      {"eps", Kind::Real, "0.5", nullptr},
      {"estimand", Kind::Choice, "point_to_point", "point_to_point,point_to_line,line_to_point"},
      {"f-file", Kind::Text, "", nullptr},
      {"family", Kind::Choice, "growing", "constant,growing,decaying,random"},
      {"family-seed", Kind::Uint, "0", nullptr},
      {"first-realization", Kind::Uint, "0", nullptr},
      {"leak-tol", Kind::Real, "1e-08", nullptr},
      {"noise-radius", Kind::IntOrAuto, "auto", nullptr},
      {"offsets", Kind::Sites, "auto", nullptr},
      {"out", Kind::Text, "", nullptr},
      {"policy", Kind::Choice, "auto", "auto,fixed"},
      {"probes", Kind::Sites, "auto", nullptr},
      {"radius", Kind::IntOrAuto, "auto", nullptr},
      {"ratio", Kind::Bool, "false", nullptr},
      {"realizations", Kind::Uint, "1", nullptr},
      {"s", Kind::Real, "0", nullptr},
      {"s-burn", Kind::RealOrAuto, "auto", nullptr},
      {"s-list", Kind::Reals, "8,16,32", nullptr},
      {"s-min", Kind::RealOrAuto, "auto", nullptr},
      {"samples", Kind::Uint, "100000", nullptr},
      {"seed", Kind::Uint, "", nullptr},
      {"series-tol", Kind::Real, "1e-15", nullptr},
      {"sigma", Kind::Real, "0.7", nullptr},
      {"t", Kind::Real, "16", nullptr},
      {"t-burn", Kind::RealOrAuto, "auto", nullptr},
      {"t-grid", Kind::Reals, "4,8,16,32", nullptr},
      {"t-max", Kind::RealOrAuto, "auto", nullptr},
      {"u-max", Kind::Real, "1", nullptr},
      {"u-step", Kind::Real, "0.01", nullptr},
      {"x", Kind::Site1, "origin", nullptr},
      {"y", Kind::Site1, "origin", nullptr},
      {"y1", Kind::Site1, "e1", nullptr},
      {"y2", Kind::Site1, "origin", nullptr},
  };
  return keys;
}

const KeyDef* find_key(const std::string& name) {
  for (const auto& k : key_table()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  if (*b == '+') ++b;
  auto res = std::from_chars(b, s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v);
}

template <class T>
bool parse_int(const std::string& s, T& v) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::string canonical_site(const std::string& s, const std::string& key) {
  if (s == "origin") return s;
  if (s.size() >= 2 && s[0] == 'e') {
    int axis = 0;
    if (parse_int(s.substr(1), axis) && axis >= 1) return "e" + std::to_string(axis);
  }
  std::string out;
  for (const auto& part : split(s, ':')) {
    int v = 0;
    if (!parse_int(part, v)) throw InvalidArgument("key '" + key + "': bad site '" + s + "'");
    out += (out.empty() ? "" : ":") + std::to_string(v);
  }
  return out;
}

std::string canonicalize(const KeyDef& k, const std::string& raw) {
  const std::string v = trim(raw);
  const std::string key = k.name;
  auto bad = [&](const std::string& what) {
    return InvalidArgument("key '" + key + "': expected " + what + ", got '" + v + "'");
  };
  if ((k.kind == Kind::IntOrAuto || k.kind == Kind::RealOrAuto || k.kind == Kind::Sites) && v == "auto") return v;
  switch (k.kind) {
    case Kind::Uint: {
      std::uint64_t x = 0;
      if (!parse_int(v, x)) throw bad("a nonnegative integer");
      return std::to_string(x);
    }
    case Kind::Int:
    case Kind::IntOrAuto: {
      std::int64_t x = 0;
      if (!parse_int(v, x)) throw bad(k.kind == Kind::Int ? "an integer" : "an integer or 'auto'");
      return std::to_string(x);
    }
    case Kind::Real:
    case Kind::RealOrAuto: {
      double x = 0.0;
      if (!parse_double(v, x)) throw bad(k.kind == Kind::Real ? "a number" : "a number or 'auto'");
      return fmt(x);
    }
    case Kind::Bool:
      if (v == "true" || v == "1" || v == "yes") return "true";
      if (v == "false" || v == "0" || v == "no") return "false";
      throw bad("true or false");
    case Kind::Site1:
      return canonical_site(v, key);
    case Kind::Sites: {
      std::string out;
      for (const auto& part : split(v, ',')) out += (out.empty() ? "" : ",") + canonical_site(part, key);
      return out;
    }
    case Kind::Reals: {
      std::string out;
      for (const auto& part : split(v, ',')) {
        double x = 0.0;
        if (!parse_double(part, x)) throw bad("a comma-separated list of numbers");
        out += (out.empty() ? "" : ",") + fmt(x);
      }
      return out;
    }
    case Kind::Choice: {
      for (const auto& c : split(k.choices, ',')) {
        if (c == v) return v;
      }
      throw bad(std::string("one of ") + k.choices);
    }
    case Kind::Text:
      return v;
  }
  return v;
}

Site resolve_site(const std::string& s, int dim) {
  if (s == "origin") return origin(dim);
  if (s[0] == 'e') {
    const int axis = std::stoi(s.substr(1));
    if (axis > dim) throw InvalidArgument("unit vector " + s + " does not exist in dimension " + std::to_string(dim));
    return unit_vector(dim, axis - 1);
  }
  return parse_site(s, dim);
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

int max_norm(const std::vector<Site>& v) {
  int m = 0;
  for (const auto& x : v) m = std::max(m, sup_norm(x));
  return m;
}

double s_burn_for(const RunConfig& c, double t) { return c.is_auto("s-burn") ? c.number("burn-factor") * t : c.number("s-burn"); }
double t_burn_for(const RunConfig& c, double t) { return c.is_auto("t-burn") ? c.number("burn-factor") * t : c.number("t-burn"); }

std::vector<Site> offsets_for(const RunConfig& c, double h) {
  if (!c.is_auto("offsets")) return c.sites("offsets");
  const int k = static_cast<int>(std::floor(std::pow(h, 0.7) + 1e-12));
  return {origin(c.dim()), unit_vector(c.dim(), 0), unit_vector(c.dim(), 0, k)};
}

std::vector<Site> probes_for(const RunConfig& c) {
  return c.is_auto("probes") ? default_probes(c.dim()) : c.sites("probes");
}

double attract_burn(const RunConfig& c) { return s_burn_for(c, max_of(c.list("t-grid"))); }

struct Window {
  double lo = 0.0;
  double hi = 0.0;
  double span = 0.0;  ///< longest single evolution
  int extent = 0;     ///< sup norm of the sites sweeps are centred on
};

Window window_for(const RunConfig& c, Subcommand sub) {
  Window w;
  const int d = c.dim();
  switch (sub) {
    case Subcommand::Kernels:
      w.hi = c.number("t");
      break;
    case Subcommand::Noise: {
      const int r = c.is_auto("radius") ? 10 : std::min<int>(10, static_cast<int>(c.integer("radius")));
      const double sites = std::pow(2.0 * r + 1.0, d);
      const double steps = std::ceil(static_cast<double>(c.integer("samples")) / sites);
      w.hi = steps * c.number("dt");
      break;
    }
    case Subcommand::Mc:
    case Subcommand::Evolve:
      w.lo = c.number("s");
      w.hi = c.number("t");
      w.span = w.hi - w.lo;
      w.extent = std::max(sup_norm(c.site("x")), sup_norm(c.site("y")));
      if (sub == Subcommand::Evolve) w.extent = 0;
      break;
    case Subcommand::Decompose: {
      const double t = c.number("t");
      w.lo = -s_burn_for(c, t);
      w.hi = t + t_burn_for(c, t);
      w.span = std::max(t + s_burn_for(c, t), t + t_burn_for(c, t));
      w.extent = sup_norm(c.site("y"));
      break;
    }
    case Subcommand::Factorize: {
      const double s = c.number("s");
      for (double h : c.list("t-grid")) {
        w.lo = std::min(w.lo, s - s_burn_for(c, h));
        w.hi = std::max(w.hi, s + h + t_burn_for(c, h));
        w.span = std::max(w.span, h + std::max(s_burn_for(c, h), t_burn_for(c, h)));
        const Site y = c.site("y");
        std::vector<Site> xs;
        for (const auto& o : offsets_for(c, h)) xs.push_back(y + o);
        w.extent = std::max({w.extent, sup_norm(y), max_norm(xs)});
      }
      break;
    }
    case Subcommand::Attract: {
      const double S = attract_burn(c);
      w.lo = -S;
      w.hi = max_of(c.list("t-grid"));
      w.span = w.hi + S;
      w.extent = sup_norm(c.site("y"));
      break;
    }
    case Subcommand::Tails:
      w.hi = c.number("t");
      w.span = w.hi;
      w.extent = sup_norm(c.site("y"));
      break;
    case Subcommand::Stationary: {
      const double S = max_of(c.list("s-list"));
      w.lo = -S;
      w.hi = c.number("t");
      w.span = S + w.hi;
      w.extent = max_norm(probes_for(c));
      break;
    }
  }
  w.lo = std::min(w.lo, 0.0);
  w.hi = std::max(w.hi, 0.0);
  return w;
}

bool uses_sigma(Subcommand sub) {
  return sub == Subcommand::Factorize || sub == Subcommand::Attract || sub == Subcommand::Decompose;
}

bool uses_family(Subcommand sub) {
  return sub == Subcommand::Evolve || sub == Subcommand::Attract || sub == Subcommand::Decompose;
}

void check_grid(const std::vector<double>& v, const std::string& key) {
  if (v.empty()) throw InvalidArgument("key '" + key + "' must not be empty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0)) throw InvalidArgument("key '" + key + "' entries must be positive");
    if (i > 0 && !(v[i] > v[i - 1])) throw InvalidArgument("key '" + key + "' must be strictly increasing");
  }
}

}  // namespace

Subcommand parse_subcommand(const std::string& name) {
  static const std::map<std::string, Subcommand> m = {
      {"kernels", Subcommand::Kernels},     {"noise", Subcommand::Noise},   {"mc", Subcommand::Mc},
      {"evolve", Subcommand::Evolve},       {"decompose", Subcommand::Decompose},
      {"factorize", Subcommand::Factorize}, {"attract", Subcommand::Attract},
      {"tails", Subcommand::Tails},         {"stationary", Subcommand::Stationary}};
  auto it = m.find(name);
  if (it == m.end()) throw InvalidArgument("unknown subcommand '" + name + "'");
  return it->second;
}

std::string subcommand_name(Subcommand sub) {
  switch (sub) {
    case Subcommand::Kernels: return "kernels";
    case Subcommand::Noise: return "noise";
    case Subcommand::Mc: return "mc";
    case Subcommand::Evolve: return "evolve";
    case Subcommand::Decompose: return "decompose";
    case Subcommand::Factorize: return "factorize";
    case Subcommand::Attract: return "attract";
    case Subcommand::Tails: return "tails";
    case Subcommand::Stationary: return "stationary";
  }
  return "";
}

std::vector<std::string> subcommand_names() {
  return {"kernels", "noise", "mc", "evolve", "decompose", "factorize", "attract", "tails", "stationary"};
}

RunConfig::RunConfig() {
  for (const auto& k : key_table()) values_[k.name] = k.def;
}

bool RunConfig::known(const std::string& key) const { return find_key(key) != nullptr; }

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeyDef* k = find_key(key);
  if (!k) throw InvalidArgument("unknown key '" + key + "'");
  values_[key] = canonicalize(*k, value);
}

const std::string& RunConfig::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InvalidArgument("unknown key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const {
  double v = 0.0;
  if (!parse_double(text(key), v)) throw InvalidArgument("key '" + key + "' is not set to a number");
  return v;
}

std::int64_t RunConfig::integer(const std::string& key) const {
  std::int64_t v = 0;
  if (!parse_int(text(key), v)) throw InvalidArgument("key '" + key + "' is not set to an integer");
  return v;
}

bool RunConfig::flag(const std::string& key) const { return text(key) == "true"; }

std::vector<double> RunConfig::list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& part : split(text(key), ',')) {
    double v = 0.0;
    if (!parse_double(part, v)) throw InvalidArgument("key '" + key + "' is not a list of numbers");
    out.push_back(v);
  }
  return out;
}

Site RunConfig::site(const std::string& key) const { return resolve_site(text(key), dim()); }

std::vector<Site> RunConfig::sites(const std::string& key) const {
  std::vector<Site> out;
  for (const auto& part : split(text(key), ',')) out.push_back(resolve_site(part, dim()));
  return out;
}

std::uint64_t RunConfig::seed() const {
  if (!has_seed()) throw InvalidArgument("key 'seed' is required");
  std::uint64_t v = 0;
  parse_int(text("seed"), v);
  return v;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    if (k == "out") continue;
    out += k + "=" + v + "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

FunctionClassSpec RunConfig::class_spec() const {
  FunctionClassSpec spec{number("c"), number("eps")};
  return spec;
}

int RunConfig::required_radius(Subcommand sub) const {
  if (sub == Subcommand::Kernels || sub == Subcommand::Noise) return 1;
  const Window w = window_for(*this, sub);
  const int margin = EvolutionPlan{}.margin;
  return chernoff_radius(dim(), w.span, number("leak-tol")) + w.extent + margin;
}

int RunConfig::radius(Subcommand sub) const {
  if (sub == Subcommand::Kernels && is_auto("radius")) {
    return chernoff_radius(dim(), number("t"), number("series-tol")) + 1;
  }
  if (sub == Subcommand::Noise && is_auto("radius")) return 10;
  const int need = required_radius(sub);
  if (is_auto("radius")) return need;
  const auto r = integer("radius");
  if (r < need) {
    throw InvalidArgument("radius " + std::to_string(r) + " is below the suggested minimum " +
                          std::to_string(need) + " for this run");
  }
  return static_cast<int>(r);
}

EvolutionPlan RunConfig::plan(Subcommand sub) const {
  EvolutionPlan plan = EvolutionPlan::make(dim(), number("dt"), number("beta"));
  plan.policy = text("policy") == "fixed" ? RadiusPolicy::Fixed : RadiusPolicy::Auto;
  plan.radius = radius(sub);
  plan.leak_tol = number("leak-tol");
  return plan;
}

void RunConfig::validate(Subcommand sub) const {
  if (sub != Subcommand::Kernels && !has_seed()) throw InvalidArgument("key 'seed' is required");
  const auto d = integer("dim");
  if (d < 1 || d > 6) throw InvalidArgument("dim must lie in 1..6");
  if (!(number("dt") > 0.0) || number("dt") > 1.0) throw InvalidArgument("dt must lie in (0, 1]");
  if (number("beta") < 0.0) throw InvalidArgument("beta must be nonnegative");
  if (!(number("leak-tol") > 0.0 && number("leak-tol") < 1.0)) throw InvalidArgument("leak-tol must lie in (0, 1)");
  if (integer("realizations") < 1) throw InvalidArgument("realizations must be at least 1");
  if (!(number("burn-factor") > 0.0)) throw InvalidArgument("burn-factor must be positive");
  if (!is_auto("s-burn") && number("s-burn") < 0.0) throw InvalidArgument("s-burn must be nonnegative");
  if (!is_auto("t-burn") && number("t-burn") < 0.0) throw InvalidArgument("t-burn must be nonnegative");
  // Resolve every site key so that malformed or out-of-dimension sites fail early.
  for (const char* k : {"x", "y", "y1", "y2"}) site(k);
  if (!is_auto("offsets")) sites("offsets");
  if (!is_auto("probes")) sites("probes");
  check_grid(list("t-grid"), "t-grid");
  check_grid(list("s-list"), "s-list");
  if (uses_sigma(sub)) check_sigma(number("sigma"), class_spec());
  if (uses_family(sub)) class_spec().validate();
  if (sub == Subcommand::Kernels && !(number("t") >= 0.0)) throw InvalidArgument("t must be nonnegative");
  if ((sub == Subcommand::Mc || sub == Subcommand::Evolve) && number("t") < number("s")) {
    throw InvalidArgument("t must not precede s");
  }
  if ((sub == Subcommand::Tails || sub == Subcommand::Decompose || sub == Subcommand::Stationary) &&
      !(number("t") > 0.0)) {
    throw InvalidArgument("t must be positive");
  }
  if (sub == Subcommand::Mc || sub == Subcommand::Noise) {
    if (integer("samples") < 2) throw InvalidArgument("samples must be at least 2");
  }
  if (sub == Subcommand::Tails) {
    if (!(number("u-step") > 0.0) || !(number("u-max") > 0.0)) throw InvalidArgument("u-step and u-max must be positive");
    if (integer("bootstrap") < 2) throw InvalidArgument("bootstrap must be at least 2");
  }
  radius(sub);
  if (sub == Subcommand::Kernels) return;
  const Window w = window_for(*this, sub);
  if (!is_auto("s-min") && number("s-min") > w.lo) {
    throw InvalidArgument("s-min " + text("s-min") + " does not cover the required window start " + fmt(w.lo));
  }
  if (!is_auto("t-max") && number("t-max") < w.hi) {
    throw InvalidArgument("t-max " + text("t-max") + " does not cover the required window end " + fmt(w.hi));
  }
  if (!is_auto("noise-radius") && integer("noise-radius") < radius(sub) + w.extent) {
    throw InvalidArgument("noise-radius must be at least " + std::to_string(radius(sub) + w.extent));
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = hash == std::string::npos ? line : line.substr(0, hash);
    if (trim(body).empty()) continue;
    const auto eq = body.find('=');
    const int key_col = static_cast<int>(body.find_first_not_of(" \t")) + 1;
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno, key_col);
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ParseError("missing key before '='", lineno, static_cast<int>(eq) + 1);
    if (!cfg.known(key)) throw ParseError("unknown key '" + key + "'", lineno, key_col);
    if (seen.count(key)) {
      throw ParseError("duplicate key '" + key + "' (first set on line " + std::to_string(seen[key]) + ")",
                       lineno, key_col);
    }
    seen[key] = lineno;
    const std::string rest = body.substr(eq + 1);
    const auto vpos = rest.find_first_not_of(" \t");
    const int value_col = static_cast<int>(eq) + 2 + static_cast<int>(vpos == std::string::npos ? 0 : vpos);
    try {
      cfg.set(key, rest);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), lineno, value_col);
    }
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  auto res = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

std::string code_version() { return PAMLAB_VERSION; }

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::Parse:
      return 2;
    case ErrorKind::Resource:
      return 4;
    case ErrorKind::Coverage:
    case ErrorKind::Boundary:
    case ErrorKind::Invariant:
      return 3;
  }
  return 3;
}

namespace {

json number_json(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

struct Outcome {
  ExperimentRecord record;
  std::string extra_name;
  std::string extra_csv;
};

std::string field_csv(const LatticeField& f) {
  std::string out = "site,value\n";
  for (BoxCursor c(f.box); c.valid(); c.next()) {
    out += format_site(c.site()) + "," + fmt(f.values[c.index()]) + "\n";
  }
  return out;
}

SiteFunction initial_data(const RunConfig& c) {
  const FunctionClassSpec spec = c.class_spec();
  SiteFunction base = builtin_family(parse_family(c.text("family")), spec, static_cast<std::uint64_t>(c.integer("family-seed")));
  const std::string path = c.text("f-file");
  if (path.empty()) return base;
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read initial-data file '" + path + "'");
  auto table = std::make_shared<std::map<Site, double>>();
  std::string line;
  int lineno = 0;
  const int d = c.dim();
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    std::istringstream ls(line);
    Site x(static_cast<std::size_t>(d));
    double v = 0.0;
    for (auto& xi : x) {
      if (!(ls >> xi)) throw ParseError("expected " + std::to_string(d) + " coordinates and a value", lineno, 1);
    }
    if (!(ls >> v)) throw ParseError("missing value", lineno, 1);
    std::string extra;
    if (ls >> extra) throw ParseError("trailing text '" + extra + "'", lineno, 1);
    if (!(v > 0.0) || !std::isfinite(v)) throw ParseError("initial data must be positive and finite", lineno, 1);
    (*table)[x] = v;
  }
  return [table, base](const Site& x) {
    auto it = table->find(x);
    return it == table->end() ? base(x) : it->second;
  };
}

struct Context {
  const RunConfig& cfg;
  Subcommand sub;
  EvolutionPlan plan;
  Window window;
  int noise_radius = 0;
  double s_min = 0.0;
  double t_max = 0.0;
  std::uint64_t hash = 0;
  int workers = 1;

  Context(const RunConfig& c, Subcommand s, int w) : cfg(c), sub(s), plan(c.plan(s)), window(window_for(c, s)), workers(w) {
    noise_radius = c.is_auto("noise-radius") ? plan.radius + window.extent : static_cast<int>(c.integer("noise-radius"));
    s_min = c.is_auto("s-min") ? window.lo : c.number("s-min");
    t_max = c.is_auto("t-max") ? window.hi : c.number("t-max");
    hash = c.hash();
  }

  NoiseField noise(std::uint64_t realization) const {
    return NoiseField(cfg.dim(), noise_radius, s_min, t_max, cfg.number("dt"), cfg.seed(), realization);
  }
};

Outcome run_kernels(const Context& ctx) {
  const RunConfig& c = ctx.cfg;
  Outcome o;
  const KernelTable table = kernel_table(c.dim(), c.number("t"), ctx.plan.radius, c.number("series-tol"));
  auto& r = o.record;
  r.set("t", c.number("t"));
  r.set("radius", ctx.plan.radius);
  r.set("sum", table.sum());
  r.set("tail_bound", table.tail_bound());
  r.set("series_remainder", table.series_remainder());
  r.set("box_remainder", table.box_remainder());
  const auto dense = table.dense();
  r.set("max", *std::max_element(dense.begin(), dense.end()));
  r.set("min", *std::min_element(dense.begin(), dense.end()));
  if (c.flag("ratio")) {
    const auto ex = ratio_extremes(table, c.number("sigma"), c.site("y1"), c.site("y2"));
    r.set("inf_ratio", ex.inf_ratio);
    r.set("sup_ratio", ex.sup_ratio);
    r.set("sites_scanned", static_cast<double>(ex.sites_scanned));
  }
  o.extra_name = "kernel.csv";
  o.extra_csv = "site,value\n";
  const Box box = table.box();
  for (BoxCursor cur(box); cur.valid(); cur.next()) {
    o.extra_csv += format_site(cur.site()) + "," + fmt(dense[cur.index()]) + "\n";
  }
  return o;
}

Outcome run_one(const Context& ctx, std::uint64_t realization) {
  if (ctx.sub == Subcommand::Kernels) return run_kernels(ctx);
  const RunConfig& c = ctx.cfg;
  const NoiseField noise = ctx.noise(realization);
  const EvolutionPlan& plan = ctx.plan;
  Outcome o;
  auto& r = o.record;
  switch (ctx.sub) {
    case Subcommand::Kernels:
      break;
    case Subcommand::Noise: {
      const auto st = noise_selftest(noise, static_cast<std::size_t>(c.integer("samples")));
      r.set("samples", static_cast<double>(st.samples));
      r.set("mean", st.mean);
      r.set("variance", st.variance);
      r.set("mean_z", st.mean_z);
      r.set("variance_rel_error", st.variance_rel_error);
      r.set("ks_statistic", st.ks_statistic);
      r.set("ks_critical", st.ks_critical);
      r.set("passed", st.passed ? 1.0 : 0.0);
      break;
    }
    case Subcommand::Mc: {
      McOptions opt;
      opt.beta = c.number("beta");
      opt.seed = c.seed();
      opt.workers = ctx.workers;
      const auto n = static_cast<std::size_t>(c.integer("samples"));
      const Site x = c.site("x"), y = c.site("y");
      const double s = c.number("s"), t = c.number("t");
      const std::string est = c.text("estimand");
      McEstimate e;
      if (est == "point_to_point") e = mc_point_to_point(noise, x, s, y, t, n, opt);
      else if (est == "point_to_line") e = mc_point_to_line(noise, x, s, t, n, opt);
      else e = mc_line_to_point(noise, s, y, t, n, opt);
      r.set("mean", e.mean);
      r.set("std_error", e.std_error);
      r.set("n_samples", static_cast<double>(e.n_samples));
      r.set("hits", static_cast<double>(e.hits));
      r.set("degenerate", e.degenerate ? 1.0 : 0.0);
      if (c.flag("compare")) {
        double field = 0.0;
        if (est == "point_to_point") field = point_to_point_field(x, s, t, noise, plan).value(y);
        else if (est == "point_to_line") field = adjoint_sweep(s, t, noise, plan, sup_norm(x)).value(x);
        else field = backward_partition(s, t, noise, plan, sup_norm(y)).value(y);
        r.set("field", field);
        r.set("z_score", e.std_error > 0.0 ? (e.mean - field) / e.std_error : 0.0);
      }
      break;
    }
    case Subcommand::Evolve: {
      EvolutionPlan fixed = plan;
      fixed.policy = RadiusPolicy::Fixed;
      const double s = c.number("s"), t = c.number("t");
      const LatticeField f = make_field(Box(c.dim(), fixed.radius), s, initial_data(c));
      Health h;
      const LatticeField u = solve_cauchy(f, s, t, noise, fixed, &h);
      if (!h.positive || !(u.min() > 0.0)) throw InvariantError("solution lost positivity");
      const double leak = chernoff_tail(c.dim(), t - s, fixed.radius);
      r.set("u_origin", u.value(origin(c.dim())));
      r.set("sum", u.sum());
      r.set("min_value", u.min());
      r.set("edge_fraction", h.edge_fraction);
      r.set("kernel_dropped", h.kernel_dropped);
      r.set("leakage_bound", leak);
      r.set("leakage_ok", leak <= c.number("leak-tol") ? 1.0 : 0.0);
      o.extra_name = "field-" + std::to_string(realization) + ".csv";
      o.extra_csv = field_csv(u);
      break;
    }
    case Subcommand::Decompose: {
      const double t = c.number("t");
      r = sigma_decomposition(initial_data(c), c.class_spec(), c.site("y"), t, noise, plan, c.number("sigma"),
                              s_burn_for(c, t), t_burn_for(c, t), c.flag("check-direct"));
      if (!(r.get("identity_defect") <= 1e-10)) {
        throw InvariantError("decomposition identity defect " + fmt(r.get("identity_defect")) + " exceeds 1e-10");
      }
      break;
    }
    case Subcommand::Factorize: {
      const Site y = c.site("y");
      const double s = c.number("s");
      for (double h : c.list("t-grid")) {
        std::vector<Site> xs;
        for (const auto& off : offsets_for(c, h)) xs.push_back(y + off);
        const auto recs = factorization_residuals(xs, s, y, s + h, noise, plan, s_burn_for(c, h), t_burn_for(c, h),
                                                  c.number("sigma"), c.class_spec());
        r.set(tagged("Zneg", h), recs.front().get("Zneg"));
        for (std::size_t i = 0; i < xs.size(); ++i) {
          const auto& q = recs[i];
          const double scale = std::max(1.0, std::fabs(q.get("ratio")));
          if (!(std::fabs(q.get("bookkeeping")) <= 1e-12 * scale)) {
            throw InvariantError("factorization bookkeeping identity failed at " + format_site(xs[i]));
          }
          const std::string tag = tagged("", h) + "@" + format_site(xs[i] - y);
          for (const char* k : {"Z", "p", "ratio", "Zinf", "delta", "abs_delta"}) r.set(k + tag, q.get(k));
        }
      }
      break;
    }
    case Subcommand::Attract:
      r = attraction_experiment(initial_data(c), c.class_spec(), c.site("y"), c.list("t-grid"), noise, plan,
                                attract_burn(c));
      break;
    case Subcommand::Tails:
      r = tail_sample(c.site("y"), c.number("t"), noise, plan);
      break;
    case Subcommand::Stationary:
      r = stationarity_sample(noise, plan, c.number("t"), c.list("s-list"), probes_for(c));
      break;
  }
  return o;
}

json interval_json(const Interval& ci) { return json::array({number_json(ci.lo), number_json(ci.hi)}); }

std::vector<double> column(const std::vector<ExperimentRecord>& recs, const std::string& key) {
  std::vector<double> v;
  for (const auto& r : recs) {
    if (r.has(key)) v.push_back(r.get(key));
  }
  return v;
}

std::vector<std::string> record_keys(const std::vector<ExperimentRecord>& recs) {
  std::vector<std::string> keys;
  for (const auto& r : recs) {
    for (const auto& [k, v] : r.values) {
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
  }
  return keys;
}

std::string summary_csv(const std::vector<ExperimentRecord>& recs) {
  std::string out = "key,n,mean,std_error,median,p10,p90\n";
  for (const auto& key : record_keys(recs)) {
    std::vector<double> v;
    for (double x : column(recs, key)) {
      if (std::isfinite(x)) v.push_back(x);
    }
    if (v.empty()) {
      out += key + ",0,nan,nan,nan,nan,nan\n";
      continue;
    }
    const MeanSe m = mean_se(v);
    out += key + "," + std::to_string(v.size()) + "," + fmt(m.mean) + "," + fmt(m.std_error) + "," +
           fmt(median(v)) + "," + fmt(quantile(v, 0.1)) + "," + fmt(quantile(v, 0.9)) + "\n";
  }
  return out;
}

Interval quantile_ci(const std::vector<double>& v, double q, int reps, std::uint64_t seed) {
  return bootstrap_ci(
      v.size(),
      [&](const std::vector<std::size_t>& idx) {
        std::vector<double> w;
        w.reserve(idx.size());
        for (auto i : idx) w.push_back(v[i]);
        return quantile(w, q);
      },
      reps, seed);
}

json analysis(const RunConfig& c, Subcommand sub, const std::vector<ExperimentRecord>& recs) {
  json a = json::object();
  if (recs.empty()) return a;
  const int reps = static_cast<int>(c.integer("bootstrap"));
  const std::uint64_t bseed = c.has_seed() ? c.seed() ^ 0x5A17ULL : 0x5A17ULL;
  const bool enough = recs.size() >= 2;
  switch (sub) {
    case Subcommand::Factorize: {
      json rows = json::array();
      std::vector<double> scales;
      std::vector<std::vector<double>> samples(recs.size());
      for (double h : c.list("t-grid")) {
        std::vector<double> per;
        for (std::size_t i = 0; i < recs.size(); ++i) {
          double sum = 0.0;
          int n = 0;
          for (const auto& [k, v] : recs[i].values) {
            if (k.rfind("abs_delta" + tagged("", h) + "@", 0) == 0) {
              sum += v;
              ++n;
            }
          }
          per.push_back(sum / n);
          samples[i].push_back(sum / n);
        }
        scales.push_back(h);
        json row = {{"t_minus_s", h}, {"mean_abs_delta", number_json(mean_se(per).mean)}, {"n", per.size()}};
        if (enough) {
          row["ci95"] = interval_json(bootstrap_ci(
              per.size(),
              [&](const std::vector<std::size_t>& idx) {
                double s = 0.0;
                for (auto i : idx) s += per[i];
                return s / static_cast<double>(idx.size());
              },
              reps, bseed));
        }
        rows.push_back(row);
      }
      a["mean_abs_delta"] = rows;
      if (enough && scales.size() >= 2) {
        const DecayFit fit = fit_decay(scales, samples, 1.0, reps, bseed);
        a["decay_exponent"] = {{"theta", number_json(fit.theta)}, {"ci95", interval_json(fit.ci)}};
      }
      break;
    }
    case Subcommand::Attract: {
      json rows = json::array();
      for (double t : c.list("t-grid")) {
        const auto v = column(recs, tagged("disc", t));
        json row = {{"t", t}, {"median", number_json(median(v))}, {"p90", number_json(quantile(v, 0.9))}};
        if (enough) {
          row["median_ci95"] = interval_json(quantile_ci(v, 0.5, reps, bseed));
          row["p90_ci95"] = interval_json(quantile_ci(v, 0.9, reps, bseed));
        }
        rows.push_back(row);
      }
      a["discrepancy"] = rows;
      break;
    }
    case Subcommand::Tails: {
      std::vector<double> grid;
      const double step = c.number("u-step");
      for (int k = 0;; ++k) {
        const double u = k * step;
        if (u > c.number("u-max") + 1e-12) break;
        grid.push_back(u);
      }
      const TailFit fit = tail_probability(column(recs, "Z"), grid, reps, bseed);
      json pts = json::array();
      for (const auto& p : fit.points) {
        pts.push_back({{"u", p.u}, {"count", p.count}, {"q", p.q}, {"ci95", interval_json(p.ci)}, {"used", p.used}});
      }
      a["points"] = pts;
      a["monotone"] = fit.monotone;
      a["used"] = fit.used;
      a["fitted"] = fit.fitted;
      if (fit.fitted) {
        a["curvature"] = number_json(fit.curvature);
        a["curvature_ci95"] = interval_json(fit.ci);
      }
      break;
    }
    case Subcommand::Stationary: {
      json rows = json::array();
      for (const auto& d : stationarity_distances(recs, c.list("s-list"), probes_for(c))) {
        rows.push_back({{"S", d.S}, {"probe", format_site(d.probe)}, {"distance", number_json(d.distance)}});
      }
      a["quantile_distances"] = rows;
      break;
    }
    default:
      break;
  }
  return a;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ResourceError("cannot write '" + p.string() + "'");
  out << text;
  if (!out) throw ResourceError("write failed for '" + p.string() + "'");
}

ExperimentRecord& stamp(ExperimentRecord& r, const Context& ctx, std::uint64_t realization) {
  r.kind = subcommand_name(ctx.sub);
  r.config_hash = ctx.hash;
  r.seed = ctx.cfg.has_seed() ? ctx.cfg.seed() : 0;
  r.realization = realization;
  return r;
}

std::size_t realization_count(const RunConfig& c, Subcommand sub) {
  return sub == Subcommand::Kernels ? 1 : static_cast<std::size_t>(c.integer("realizations"));
}

}  // namespace

std::string record_json(const ExperimentRecord& record) {
  json j;
  j["kind"] = record.kind;
  j["config_hash"] = hex64(record.config_hash);
  j["seed"] = record.seed;
  j["realization"] = record.realization;
  json v = json::object();
  for (const auto& [k, x] : record.values) v[k] = number_json(x);
  j["values"] = v;
  return j.dump();
}

std::vector<ExperimentRecord> run_records(const RunConfig& config, Subcommand sub, int workers) {
  config.validate(sub);
  const Context ctx(config, sub, workers);
  const std::size_t n = realization_count(config, sub);
  const auto first = static_cast<std::uint64_t>(config.integer("first-realization"));
  std::vector<ExperimentRecord> out(n);
  const int inner = sub == Subcommand::Mc ? 1 : workers;
  parallel_for(n, inner, [&](std::size_t i) {
    Outcome o = run_one(ctx, first + i);
    out[i] = std::move(stamp(o.record, ctx, first + i));
  });
  return out;
}

RunResult run(const RunConfig& config, Subcommand sub, const std::string& out_dir, int workers) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return {4, "cannot create output directory '" + out_dir + "': " + ec.message(), 0};
  for (const char* stale : {"FAILED", "records.jsonl", "summary.csv", "analysis.json", "manifest.json"}) {
    fs::remove(dir / stale, ec);
  }

  std::vector<ExperimentRecord> done;
  std::string error;
  try {
    config.validate(sub);
    const Context ctx(config, sub, workers);
    const std::size_t n = realization_count(config, sub);
    const auto first = static_cast<std::uint64_t>(config.integer("first-realization"));
    std::ofstream records(dir / "records.jsonl", std::ios::binary | std::ios::trunc);
    if (!records) throw ResourceError("cannot write records.jsonl");
    const int inner = sub == Subcommand::Mc ? 1 : std::max(1, workers);
    const std::size_t chunk = static_cast<std::size_t>(inner) * 4;
    for (std::size_t lo = 0; lo < n && error.empty(); lo += chunk) {
      const std::size_t hi = std::min(n, lo + chunk);
      std::vector<Outcome> outs(hi - lo);
      std::vector<std::exception_ptr> errs(hi - lo);
      parallel_for(hi - lo, inner, [&](std::size_t k) {
        try {
          outs[k] = run_one(ctx, first + lo + k);
        } catch (...) {
          errs[k] = std::current_exception();
        }
      });
      for (std::size_t k = 0; k < outs.size(); ++k) {
        if (errs[k]) {
          try {
            std::rethrow_exception(errs[k]);
          } catch (const Error& e) {
            result.exit_code = exit_code_for(e.kind());
            error = "realization " + std::to_string(first + lo + k) + ": " + e.what();
          } catch (const std::bad_alloc&) {
            result.exit_code = 4;
            error = "realization " + std::to_string(first + lo + k) + ": out of memory";
          } catch (const std::exception& e) {
            result.exit_code = 3;
            error = "realization " + std::to_string(first + lo + k) + ": " + e.what();
          }
          break;
        }
        auto& r = stamp(outs[k].record, ctx, first + lo + k);
        records << record_json(r) << '\n';
        if (!outs[k].extra_name.empty()) write_file(dir / outs[k].extra_name, outs[k].extra_csv);
        done.push_back(std::move(r));
      }
      records.flush();
    }
    write_file(dir / "summary.csv", summary_csv(done));
    if (error.empty()) write_file(dir / "analysis.json", analysis(config, sub, done).dump(2) + "\n");
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.kind());
    error = e.what();
  } catch (const std::bad_alloc&) {
    result.exit_code = 4;
    error = "out of memory";
  } catch (const std::exception& e) {
    result.exit_code = 3;
    error = e.what();
  }
  result.records = done.size();
  result.message = error;

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json manifest;
  manifest["subcommand"] = subcommand_name(sub);
  manifest["config_hash"] = hex64(config.hash());
  manifest["code_version"] = code_version();
  manifest["status"] = error.empty() ? "ok" : "failed";
  manifest["exit_code"] = result.exit_code;
  manifest["records"] = done.size();
  manifest["workers"] = workers;
  manifest["wall_time_s"] = wall;
  manifest["config"] = config.canonical();
  try {
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    if (!error.empty()) write_file(dir / "FAILED", "exit " + std::to_string(result.exit_code) + ": " + error + "\n");
  } catch (const Error& e) {
    if (result.exit_code == 0) result.exit_code = 4;
    if (result.message.empty()) result.message = e.what();
  }
  return result;
}

}  // namespace pamlab
