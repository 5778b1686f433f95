#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pamlab/errors.hpp"
#include "pamlab/evolution.hpp"
#include "pamlab/experiments.hpp"
#include "pamlab/lattice.hpp"

namespace pamlab {

enum class Subcommand { Kernels, Noise, Mc, Evolve, Decompose, Factorize, Attract, Tails, Stationary };

Subcommand parse_subcommand(const std::string& name);
std::string subcommand_name(Subcommand sub);
std::vector<std::string> subcommand_names();

/// Flat key-value run configuration. Values are stored in canonical text
/// form with defaults filled in; the hash covers every key except `out`.
class RunConfig {
 public:
  RunConfig();

  /// Sets a known key, canonicalizing the value; throws InvalidArgument for
  /// unknown keys and malformed values.
  void set(const std::string& key, const std::string& value);
  bool known(const std::string& key) const;

  const std::string& text(const std::string& key) const;
  bool is_auto(const std::string& key) const { return text(key) == "auto"; }
  double number(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> list(const std::string& key) const;
  Site site(const std::string& key) const;
  std::vector<Site> sites(const std::string& key) const;

  int dim() const { return static_cast<int>(integer("dim")); }
  std::uint64_t seed() const;
  bool has_seed() const { return !text("seed").empty(); }

  /// "key=value" lines in key order, excluding `out`.
  std::string canonical() const;
  std::uint64_t hash() const;

  /// Constraint checks for one subcommand; throws InvalidArgument.
  void validate(Subcommand sub) const;

  EvolutionPlan plan(Subcommand sub) const;
  FunctionClassSpec class_spec() const;
  /// Box radius after resolving "auto"; explicit radii below the requirement are rejected.
  int radius(Subcommand sub) const;
  /// Smallest admissible box radius for the subcommand.
  int required_radius(Subcommand sub) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Lines of `key = value`; '#' starts a comment. Unknown and duplicate keys
/// are ParseErrors carrying the line and column.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);
std::string code_version();

/// 0 success, 2 usage or configuration, 3 invariant failure, 4 resource.
int exit_code_for(ErrorKind kind);

struct RunResult {
  int exit_code = 0;
  std::string message;
  std::size_t records = 0;
};

/// Runs every realization of the subcommand and writes records.jsonl,
/// summary.csv, analysis.json and manifest.json to `out_dir`. On failure the
/// records completed before the failing realization are kept and a FAILED
/// marker is written.
RunResult run(const RunConfig& config, Subcommand sub, const std::string& out_dir, int workers);

/// The per-realization records of a subcommand, without touching the disk.
std::vector<ExperimentRecord> run_records(const RunConfig& config, Subcommand sub, int workers);

std::string record_json(const ExperimentRecord& record);

}  // namespace pamlab
