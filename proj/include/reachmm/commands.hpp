#pragma once

#include "reachmm/config.hpp"
#include "reachmm/contraction.hpp"
#include "reachmm/models.hpp"
#include "reachmm/partition.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>

namespace reachmm {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitViolation = 2, kExitNumeric = 3 };

/// Command-line overrides of config fields.
struct CommandOptions {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::optional<unsigned> threads;
  std::optional<std::size_t> count;
  /// Progress and result lines go here (may be null).
  std::ostream* log = nullptr;
};

ExperimentConfig apply_options(ExperimentConfig cfg, const CommandOptions& opts);

/// Header: time,partition_id,lo_0..lo_{n-1},hi_0..hi_{n-1}; partition_id is the depth-first leaf index.
void write_tube_csv(const ReachTube& tube, std::ostream& out);
void write_trajectories_csv(std::span<const Trajectory> trajectories, std::ostream& out);

struct ReachResult {
  ReachTube tube;
  TreeStats tree;
  double wall_time_s = 0.0;
};
ReachResult run_reach(const Experiment& ex);

/// Summary document (schema 1). Everything except "wall_time_s" is deterministic.
nlohmann::json reach_summary(const Experiment& ex, const ReachResult& r);

/// Contraction diagnostics over the tube: one estimate per control interval
/// on the hull of the tube over that interval, cumulative suprema, and the
/// accuracy bound against the observed distance to the centre trajectory.
nlohmann::json bounds_report(const Experiment& ex, const ReachTube& tube, const SampleOptions& opts = {});

int cmd_reach(const ExperimentConfig& cfg, const CommandOptions& opts);
int cmd_bench(const ExperimentConfig& cfg, const CommandOptions& opts);
int cmd_mc(const ExperimentConfig& cfg, const CommandOptions& opts);
int cmd_bounds(const ExperimentConfig& cfg, const CommandOptions& opts);

}  // namespace reachmm
