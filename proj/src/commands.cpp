#include "reachmm/commands.hpp"

#include "reachmm/errors.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace reachmm {

namespace {

using nlohmann::json;

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", (dir / name).string()));
  return out;
}

void log_line(const CommandOptions& opts, const std::string& line) {
  if (opts.log) *opts.log << line << '\n';
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

double volume_of(const IntervalVector& hull, const std::vector<std::size_t>& coords) {
  const Vec w = hull.width();
  if (coords.empty()) return w.prod();
  double v = 1.0;
  for (auto c : coords) v *= w(static_cast<Eigen::Index>(c));
  return v;
}

}  // namespace

ExperimentConfig apply_options(ExperimentConfig cfg, const CommandOptions& opts) {
  if (opts.out_dir) cfg.output_dir = *opts.out_dir;
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.reps) cfg.repetitions = *opts.reps;
  if (opts.threads) cfg.threads = *opts.threads;
  if (opts.count) cfg.mc_count = *opts.count;
  return cfg;
}

void write_tube_csv(const ReachTube& tube, std::ostream& out) {
  if (tube.boxes.empty() || tube.boxes.front().empty()) return;
  const std::size_t n = tube.boxes.front().front().dim();
  out << "time,partition_id";
  for (std::size_t i = 0; i < n; ++i) out << ",lo_" << i;
  for (std::size_t i = 0; i < n; ++i) out << ",hi_" << i;
  out << '\n';
  for (std::size_t k = 0; k < tube.size(); ++k) {
    const std::string t = num(tube.times[k]);
    for (std::size_t p = 0; p < tube.boxes[k].size(); ++p) {
      const auto& b = tube.boxes[k][p];
      out << t << ',' << p;
      for (std::size_t i = 0; i < n; ++i) out << ',' << num(b.lo(i));
      for (std::size_t i = 0; i < n; ++i) out << ',' << num(b.hi(i));
      out << '\n';
    }
  }
}

void write_trajectories_csv(std::span<const Trajectory> trajectories, std::ostream& out) {
  if (trajectories.empty()) return;
  const auto n = trajectories.front().states.front().size();
  out << "trajectory,time";
  for (Eigen::Index i = 0; i < n; ++i) out << ",x_" << i;
  out << '\n';
  for (std::size_t r = 0; r < trajectories.size(); ++r) {
    const auto& tr = trajectories[r];
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      out << r << ',' << num(tr.times[k]);
      for (Eigen::Index i = 0; i < n; ++i) out << ',' << num(tr.states[k](i));
      out << '\n';
    }
  }
}

ReachResult run_reach(const Experiment& ex) {
  ReachEngine engine(ex.model, ex.params);
  const auto start = std::chrono::steady_clock::now();
  ReachResult r;
  r.tube = engine.run(ex.config.initial_set);
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.tree = tree_stats(engine.root());
  return r;
}

nlohmann::json reach_summary(const Experiment& ex, const ReachResult& r) {
  const auto& cfg = ex.config;
  const auto& tube = r.tube;
  const auto final_hull = tube.hull(tube.size() - 1);
  json j;
  j["schema"] = 1;
  j["command"] = "reach";
  j["system"] = cfg.system.name;
  j["network_standin"] = cfg.network.standin;
  j["config"] = cfg.to_json();
  j["wall_time_s"] = r.wall_time_s;
  j["final_time"] = tube.times.back();
  j["leaves"] = r.tree.leaves;
  j["max_depth"] = r.tree.max_depth;
  j["nn_nodes"] = r.tree.nn_nodes;
  j["nn_calls"] = tube.total_nn_calls();
  j["final_hull"] = {{"lo", vec_json(final_hull.lo())}, {"hi", vec_json(final_hull.hi())}};
  j["volume_coords"] = cfg.volume_coords;
  j["final_hull_volume"] = volume_of(final_hull, cfg.volume_coords);
  if (cfg.volume_coords.size() == 2 || (cfg.volume_coords.empty() && final_hull.dim() == 2)) {
    const std::size_t c0 = cfg.volume_coords.empty() ? 0 : cfg.volume_coords[0];
    const std::size_t c1 = cfg.volume_coords.empty() ? 1 : cfg.volume_coords[1];
    j["final_union_area"] = union_area_raster(tube.boxes.back(), c0, c1, 1000);
    j["union_area_resolution"] = 1000;
  }
  json steps = json::array();
  for (std::size_t k = 0; k < tube.size(); ++k) {
    steps.push_back({{"t", tube.times[k]}, {"boxes", tube.boxes[k].size()}, {"hull_width", vec_json(tube.hull(k).width())}});
  }
  j["steps"] = steps;
  json intervals = json::array();
  for (const auto& s : tube.stats) {
    intervals.push_back({{"j", s.control_index},
                         {"leaves", s.leaves},
                         {"nn_calls", s.nn_calls},
                         {"subdivisions", s.subdivisions},
                         {"max_depth", s.max_depth},
                         {"max_verify_depth", s.max_verify_depth}});
  }
  j["intervals"] = intervals;
  return j;
}

nlohmann::json bounds_report(const Experiment& ex, const ReachTube& tube, const SampleOptions& opts) {
  const auto& ts = ex.params.control_instants;
  const std::size_t m = final_control_index(ex.params);
  const IntervalVector w = ex.model->disturbance_box();
  const auto& x0 = ex.config.initial_set;
  const double init_err = 0.5 * x0.width().maxCoeff();
  const Trajectory centre = simulate(*ex.model, x0.center(), ex.params);

  json intervals = json::array();
  std::vector<ContractionEstimate> cumulative;
  ContractionEstimate acc;
  acc.c_x = acc.c_x_o = -std::numeric_limits<double>::infinity();
  double nn_err = 0.0;
  std::vector<double> interval_end;
  std::vector<double> nn_err_at;
  bool dominance = true;
  for (std::size_t j = 1; j <= m; ++j) {
    std::vector<IntervalVector> boxes;
    for (std::size_t k = 0; k < tube.size(); ++k) {
      if (tube.times[k] >= ts[j - 1] - 1e-9 && tube.times[k] <= ts[j] + 1e-9) {
        boxes.insert(boxes.end(), tube.boxes[k].begin(), tube.boxes[k].end());
      }
    }
    if (boxes.empty()) break;
    const IntervalVector hull = interval_hull(boxes);
    const auto incl = make_inclusion(crown_bounds(*ex.network, hull));
    const std::vector<IntervalVector> region{hull};
    const auto est = estimate_contraction(*ex.system, incl, w, region, opts);
    const double composite = theorem2_bound(est.c_x_o, est.l_u_o, est.lip_inf);
    const bool holds = est.c_x <= composite + 1e-6;
    dominance = dominance && holds;
    const double err = network_error_sup(*ex.network, incl, region, opts);
    nn_err = std::max(nn_err, err);
    acc.c_x = std::max(acc.c_x, est.c_x);
    acc.c_x_o = std::max(acc.c_x_o, est.c_x_o);
    acc.l_u_o = std::max(acc.l_u_o, est.l_u_o);
    acc.l_w_o = std::max(acc.l_w_o, est.l_w_o);
    acc.lip_inf = std::max(acc.lip_inf, est.lip_inf);
    cumulative.push_back(acc);
    interval_end.push_back(ts[j]);
    nn_err_at.push_back(nn_err);
    intervals.push_back({{"j", j},
                         {"region", {{"lo", vec_json(hull.lo())}, {"hi", vec_json(hull.hi())}}},
                         {"c_x", est.c_x},
                         {"c_x_o", est.c_x_o},
                         {"l_u_o", est.l_u_o},
                         {"l_w_o", est.l_w_o},
                         {"lip_inf", est.lip_inf},
                         {"theorem2_bound", composite},
                         {"dominance_holds", holds},
                         {"nn_error_sup", err},
                         {"samples", est.sample_count}});
  }

  json steps = json::array();
  for (std::size_t k = 0; k < tube.size() && k < centre.times.size(); ++k) {
    const double t = tube.times[k];
    std::size_t idx = 0;
    while (idx + 1 < interval_end.size() && interval_end[idx] < t - 1e-9) ++idx;
    if (cumulative.empty()) break;
    const auto& est = cumulative[idx];
    const auto hull = tube.hull(k);
    const Vec& x = centre.states[k];
    const double observed = std::max((hull.lo() - x).cwiseAbs().maxCoeff(), (hull.hi() - x).cwiseAbs().maxCoeff());
    const double rhs = theorem1_bound(est, t - ts.front(), init_err, nn_err_at[idx], 0.0);
    steps.push_back({{"t", t}, {"observed", observed}, {"theorem1_rhs", rhs}, {"within", observed <= rhs + 1e-9}});
  }

  json j;
  j["schema"] = 1;
  j["command"] = "bounds";
  j["system"] = ex.config.system.name;
  j["estimates_are_sampled"] = true;
  j["grid_density"] = opts.grid_density;
  j["halton_samples"] = opts.halton_samples;
  j["intervals"] = intervals;
  if (!cumulative.empty()) {
    const auto& last = cumulative.back();
    j["c_x"] = last.c_x;
    j["c_x_o"] = last.c_x_o;
    j["l_u_o"] = last.l_u_o;
    j["l_w_o"] = last.l_w_o;
    j["lip_inf"] = last.lip_inf;
    j["theorem2_bound"] = theorem2_bound(last.c_x_o, last.l_u_o, last.lip_inf);
  }
  j["dominance_holds"] = dominance;
  j["init_err"] = init_err;
  j["steps"] = steps;
  return j;
}

int cmd_reach(const ExperimentConfig& cfg_in, const CommandOptions& opts) {
  const auto ex = build_experiment(apply_options(cfg_in, opts));
  const auto r = run_reach(ex);
  const auto& dir = ex.config.output_dir;
  {
    auto out = open_output(dir, "tube.csv");
    write_tube_csv(r.tube, out);
  }
  const auto summary = reach_summary(ex, r);
  {
    auto out = open_output(dir, "summary.json");
    out << summary.dump(2) << '\n';
  }
  {
    auto out = open_output(dir, "timing.csv");
    out << "rep,wall_time_s\n0," << num(r.wall_time_s) << '\n';
  }
  log_line(opts, fmt::format("reach: {} leaves, {} NN calls, final hull volume {:.6g}, {:.3f} s", r.tree.leaves,
                             r.tube.total_nn_calls(), summary["final_hull_volume"].get<double>(), r.wall_time_s));
  return kExitOk;
}

int cmd_bench(const ExperimentConfig& cfg_in, const CommandOptions& opts) {
  const auto ex = build_experiment(apply_options(cfg_in, opts));
  const std::size_t reps = ex.config.repetitions;
  if (reps < 2) throw ConfigError("bench needs at least 2 repetitions");
  std::vector<double> times;
  std::vector<double> volumes;
  std::string reference_csv;
  bool identical = true;
  for (std::size_t r = 0; r < reps; ++r) {
    const auto res = run_reach(ex);
    times.push_back(res.wall_time_s);
    volumes.push_back(volume_of(res.tube.hull(res.tube.size() - 1), ex.config.volume_coords));
    std::ostringstream csv;
    write_tube_csv(res.tube, csv);
    if (r == 0) {
      reference_csv = csv.str();
    } else if (csv.str() != reference_csv) {
      identical = false;
    }
  }
  const double mean = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(reps);
  double var = 0.0;
  for (double t : times) var += (t - mean) * (t - mean);
  const double stddev = std::sqrt(var / static_cast<double>(reps - 1));
  const auto& dir = ex.config.output_dir;
  {
    auto out = open_output(dir, "timing.csv");
    out << "rep,wall_time_s,final_hull_volume\n";
    for (std::size_t r = 0; r < reps; ++r) out << r << ',' << num(times[r]) << ',' << num(volumes[r]) << '\n';
  }
  json j;
  j["schema"] = 1;
  j["command"] = "bench";
  j["system"] = ex.config.system.name;
  j["config"] = ex.config.to_json();
  j["repetitions"] = reps;
  j["runtime_mean_s"] = mean;
  j["runtime_std_s"] = stddev;
  j["final_hull_volume"] = volumes.front();
  j["identical_results"] = identical;
  {
    auto out = open_output(dir, "bench.json");
    out << j.dump(2) << '\n';
  }
  log_line(opts, fmt::format("bench: {} reps, runtime {:.4f} +- {:.4f} s, volume {:.6g}{}", reps, mean, stddev,
                             volumes.front(), identical ? "" : " (results differ between reps)"));
  if (!identical) throw NumericFailure("bench repetitions produced different tubes");
  return kExitOk;
}

int cmd_mc(const ExperimentConfig& cfg_in, const CommandOptions& opts) {
  const auto ex = build_experiment(apply_options(cfg_in, opts));
  const auto r = run_reach(ex);
  const auto trajectories =
      sample_trajectories(*ex.model, ex.config.initial_set, ex.config.mc_count, ex.config.seed, ex.params);
  const auto rep = containment_check(r.tube, trajectories);
  const auto& dir = ex.config.output_dir;
  {
    auto out = open_output(dir, "tube.csv");
    write_tube_csv(r.tube, out);
  }
  {
    auto out = open_output(dir, "trajectories.csv");
    write_trajectories_csv(trajectories, out);
  }
  json j;
  j["schema"] = 1;
  j["command"] = "mc";
  j["system"] = ex.config.system.name;
  j["config"] = ex.config.to_json();
  j["trajectories"] = trajectories.size();
  j["seed"] = ex.config.seed;
  j["checked"] = rep.checked;
  j["violations"] = rep.violations;
  j["worst_excess"] = rep.worst_excess;
  j["worst_trajectory"] = rep.worst_trajectory;
  j["worst_time"] = r.tube.times[rep.worst_step];
  {
    auto out = open_output(dir, "mc.json");
    out << j.dump(2) << '\n';
  }
  log_line(opts, fmt::format("mc: {} trajectories, {} states checked, {} violations, worst excess {:.3g}",
                             trajectories.size(), rep.checked, rep.violations, rep.worst_excess));
  return rep.violations == 0 ? kExitOk : kExitViolation;
}

int cmd_bounds(const ExperimentConfig& cfg_in, const CommandOptions& opts) {
  const auto ex = build_experiment(apply_options(cfg_in, opts));
  const auto r = run_reach(ex);
  const auto report = bounds_report(ex, r.tube);
  {
    auto out = open_output(ex.config.output_dir, "bounds.json");
    out << report.dump(2) << '\n';
  }
  if (report.contains("c_x")) {
    log_line(opts, fmt::format("bounds: estimated c_x {:.6g}, composite bound {:.6g}, dominance {}",
                               report["c_x"].get<double>(), report["theorem2_bound"].get<double>(),
                               report["dominance_holds"].get<bool>() ? "holds" : "FAILS"));
  }
  return kExitOk;
}

}  // namespace reachmm
