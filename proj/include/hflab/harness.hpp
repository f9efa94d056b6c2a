#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hflab/dynamics.hpp"
#include "hflab/inequality.hpp"
#include "hflab/observables.hpp"
#include "hflab/state.hpp"

namespace hflab {

/// Exit codes of the batch commands.
enum ExitCode : int {
  kExitOk = 0,
  kExitDrift = 2,
  kExitConfig = 3,
  kExitCorrectness = 4,
  kExitOracle = 5,
};

/// A configuration file failed validation.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  int points = 32;
  double length = 6.283185307179586;
};

struct PhysicsConfig {
  double a = 0.3;
  int sign = -1;
  std::vector<double> hbar{1.0};
  Mode mode = Mode::hartree_fock;
  bool dealias = false;
  std::optional<double> exchange_coefficient;
};

struct StateConfig {
  /// "coherent", "random" or "plane_wave".
  std::string constructor = "random";
  int rank = 1;
  std::uint64_t seed = 1;
  double decay = 0.1;
  std::vector<PhaseSpaceCenter> centers;
  /// Coherent width; default_coherent_width when absent.
  std::optional<double> width;
  std::vector<std::array<int, 3>> modes;
  std::vector<double> weights;
};

struct TimeConfig {
  double final_time = 0.0;
  double dt = 1e-3;
  int cadence = 1;
  int corrector_iterations = 1;
};

struct ChecksConfig {
  std::vector<std::string> inequalities;
  int ensemble_size = 1;
  /// (n, k) pairs for the interpolation checks.
  std::vector<std::pair<int, int>> interpolation{{2, 0}, {4, 0}, {4, 2}};
  /// Lebesgue exponent of the merged interpolation check; p_{n,k} when absent.
  std::optional<double> merged_p;
  /// (n, p) pairs for the weighted Schatten-moment check.
  std::vector<std::pair<int, double>> schatten_moment{{2, 2.0}};
  std::vector<int> commutator_n{2, 4};
  std::vector<int> axes{1, 2, 3};
  std::vector<int> weighted_commutator_n{1, 2};
  double leibniz_tolerance = 1e-8;
  /// Dense-oracle checks and their sample count.
  std::vector<std::string> oracle;
  int oracle_samples = 10;
  /// Assert free-flow conservation of every moment column (requires sign = 0).
  bool self_check = false;
};

struct RunConfig {
  GridConfig grid;
  PhysicsConfig physics;
  StateConfig state;
  TimeConfig time;
  ObservableConfig observables;
  ChecksConfig checks;
  /// Canonical echo of the parsed input and its FNV-1a hash (16 hex digits).
  nlohmann::json echo;
  std::string hash;
};

/// Parses and validates every field before any computation. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& document);
RunConfig load_config(const std::filesystem::path& path);
/// 64-bit FNV-1a of the text as 16 lower-case hex digits.
std::string fnv1a_hex(const std::string& text);

/// Builds the configured initial state for one hbar (and optional seed override).
MixedState build_state(const RunConfig& config, const GridPtr& grid, double hbar,
                       std::optional<std::uint64_t> seed = std::nullopt);

struct CommandOptions {
  std::filesystem::path out;
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

int cmd_evolve(const RunConfig& config, const CommandOptions& options);
int cmd_sweep(const RunConfig& config, const CommandOptions& options);
int cmd_ensemble(const RunConfig& config, const CommandOptions& options);
int cmd_oracle(const RunConfig& config, const CommandOptions& options);

/// Loads the config, dispatches the named command and maps exceptions to exit codes.
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const CommandOptions& options);

/// Library version string written to manifests.
std::string version_string();

}  // namespace hflab
