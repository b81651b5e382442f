#include "reachmm/commands.hpp"
#include "reachmm/errors.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <iostream>

int main(int argc, char** argv) {
  using namespace reachmm;
  CLI::App app{"Reachable-set over-approximation for neural-network controlled systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  CommandOptions opts;
  opts.log = &std::cout;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t reps = 0;
  unsigned threads = 0;
  std::size_t count = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--threads", threads, "worker cap (1 = sequential)");
    sub->add_option("--set", overrides, "override a config entry: dotted.key=json-value");
  };
  auto* reach = app.add_subcommand("reach", "compute a reach tube");
  auto* bench = app.add_subcommand("bench", "time repeated runs");
  auto* mc = app.add_subcommand("mc", "check Monte-Carlo trajectories against the tube");
  auto* bounds = app.add_subcommand("bounds", "contraction diagnostics over the tube");
  for (auto* sub : {reach, bench, mc, bounds}) add_common(sub);
  bench->add_option("--reps", reps, "repetitions");
  mc->add_option("--count", count, "number of trajectories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  CLI::App* active = app.get_subcommands().front();
  if (active->count("--out")) opts.out_dir = out_dir;
  if (active->count("--seed")) opts.seed = seed;
  if (active->count("--threads")) opts.threads = threads;
  if (bench->parsed() && bench->count("--reps")) opts.reps = reps;
  if (mc->parsed() && mc->count("--count")) opts.count = count;

  try {
    const auto cfg = load_config(config_path, overrides);
    if (cfg.D_N > cfg.D_p) {
      std::cerr << fmt::format("warning: D_N = {} exceeds D_p = {}\n", cfg.D_N, cfg.D_p);
    }
    if (reach->parsed()) return cmd_reach(cfg, opts);
    if (bench->parsed()) return cmd_bench(cfg, opts);
    if (mc->parsed()) return cmd_mc(cfg, opts);
    return cmd_bounds(cfg, opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DomainError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
