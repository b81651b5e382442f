#pragma once

#include "reachmm/interval.hpp"
#include "reachmm/mixed_monotone.hpp"
#include "reachmm/models.hpp"
#include "reachmm/network.hpp"
#include "reachmm/partition.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace reachmm {

struct SystemConfig {
  /// "vehicle", "double-integrator" or "linear".
  std::string name;
  VehicleParams vehicle;
  /// For "linear": x' = A x + B u (or x+ = A x + B u when discrete).
  Mat a, b;
  bool discrete = false;
};

struct NetworkConfig {
  /// Exactly one of path, inline_json, constant is set.
  std::filesystem::path path;
  std::optional<nlohmann::json> inline_json;
  std::optional<Vec> constant;
  /// Marks weights that were not produced by the original authors.
  bool standin = false;
};

struct ExperimentConfig {
  SystemConfig system;
  NetworkConfig network;
  IntervalVector initial_set;
  IntervalVector disturbance;
  double t0 = 0.0;
  std::optional<double> control_period;
  std::vector<double> control_instants;
  double dt = 0.01;
  double T = 0.0;
  Vec eps;
  double gamma = 0.1;
  int D_p = 0;
  int D_N = 0;
  PartitionMode mode = PartitionMode::Adaptive;
  ControlBounds control_bounds = ControlBounds::Faces;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  std::size_t repetitions = 20;
  std::size_t mc_count = 200;
  unsigned threads = 1;
  /// Coordinates whose hull widths multiply into the reported volume (all when empty).
  std::vector<std::size_t> volume_coords;

  /// Canonical JSON; parse(to_json()) reproduces this config.
  nlohmann::json to_json() const;
  AlgorithmParams algorithm_params() const;
};

/// Parses a config document. base_dir resolves a relative network path;
/// source_text (if given) lets errors point at a line. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                              const std::string& source_text = {}, const std::string& source_name = "config");

/// Reads and parses path after applying "a.b.c=value" overrides (value parsed as JSON, else as a string).
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

void apply_override(nlohmann::json& j, const std::string& assignment);

/// Everything needed to run one experiment.
struct Experiment {
  ExperimentConfig config;
  std::shared_ptr<const MLPNetwork> network;
  /// Continuous-style open-loop system (for contraction diagnostics and continuous runs).
  std::shared_ptr<const OpenLoopSystem> system;
  std::shared_ptr<const ClosedLoopModel> model;
  AlgorithmParams params;
};

Experiment build_experiment(const ExperimentConfig& cfg);

}  // namespace reachmm
