// One PASS/FAIL/SKIP line per acceptance criterion; exits non-zero when any criterion fails.
#include "reachmm/commands.hpp"
#include "reachmm/config.hpp"
#include "reachmm/contraction.hpp"
#include "reachmm/errors.hpp"
#include "reachmm/models.hpp"
#include "../test_support.hpp"

#include <fmt/format.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

using namespace reachmm;
using namespace reachmm::testing;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = REACHMM_SOURCE_DIR;
const double kInf = std::numeric_limits<double>::infinity();
const Vec kNone = Vec(0);
const IntervalVector kNoW(kNone, kNone);

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome fail(std::string d) { return {Verdict::Fail, std::move(d)}; }
Outcome check(bool ok, std::string d) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(d)}; }

Experiment experiment(const char* name, const std::vector<std::string>& overrides = {}) {
  return build_experiment(load_config(kSource / "configs" / name, overrides));
}

std::string tube_csv(const ReachTube& tube) {
  std::ostringstream out;
  write_tube_csv(tube, out);
  return out.str();
}

std::shared_ptr<const OpenLoopSystem> linear_system(const Mat& a, const Mat& b) {
  return std::make_shared<const OpenLoopSystem>("linear", static_cast<std::size_t>(a.rows()),
                                                static_cast<std::size_t>(b.cols()), 0, linear_field(a, b),
                                                linear_decomposition(a, b));
}

// 1. Monte-Carlo containment on every shipped configuration.
Outcome soundness() {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(kSource / "configs"))
    if (e.path().extension() == ".json") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::size_t bad = 0, checked = 0;
  double worst = -kInf;
  bool vehicle = false, di = false;
  for (const auto& n : names) {
    const auto ex = experiment(n.c_str(), {"mc_count=200"});
    const auto r = run_reach(ex);
    const auto trajs = sample_trajectories(*ex.model, ex.config.initial_set, 200, ex.config.seed, ex.params);
    const auto rep = containment_check(r.tube, trajs, 1e-9);
    bad += rep.violations;
    checked += rep.checked;
    worst = std::max(worst, rep.worst_excess);
    vehicle |= ex.config.system.name == "vehicle";
    di |= ex.config.system.name == "double-integrator";
  }
  const bool ok = bad == 0 && names.size() >= 6 && vehicle && di;
  return check(ok, fmt::format("{} configs x 200 trajectories, {} states, {} violations, worst excess {:.3g}",
                               names.size(), checked, bad, worst));
}

double final_volume(const Experiment& ex, const ReachResult& r) {
  return hull_volume(r.tube, r.tube.times.back(), ex.config.volume_coords);
}

// 2. Deeper verification tightens the non-adaptive vehicle tube.
Outcome refinement() {
  const auto a = experiment("vehicle_nonadaptive_2_1.json");
  const auto b = experiment("vehicle_nonadaptive_2_2.json");
  const double va = final_volume(a, run_reach(a));
  const double vb = final_volume(b, run_reach(b));
  return check(vb < va, fmt::format("non-adaptive volume (2,2) {:.6g} vs (2,1) {:.6g}", vb, va));
}

struct Timed {
  double mean_s = 0.0;
  double volume = 0.0;
};

Timed bench(const Experiment& ex, int reps) {
  Timed t;
  for (int r = 0; r < reps; ++r) {
    const auto res = run_reach(ex);
    t.mean_s += res.wall_time_s / reps;
    t.volume = final_volume(ex, res);
  }
  return t;
}

// 3. Adaptive runs faster than non-adaptive with comparable volume.
Outcome speedup() {
  constexpr int kReps = 20;
  bool ok = true;
  std::string detail;
  for (const auto& [adaptive, uniform] : std::array<std::pair<const char*, const char*>, 2>{
           {{"vehicle_adaptive_2_1.json", "vehicle_nonadaptive_2_1.json"},
            {"vehicle_adaptive_2_2.json", "vehicle_nonadaptive_2_2.json"}}}) {
    const auto ta = bench(experiment(adaptive), kReps);
    const auto tu = bench(experiment(uniform), kReps);
    const bool faster = ta.mean_s < tu.mean_s;
    const bool close = ta.volume <= 1.15 * tu.volume;
    ok &= faster && close;
    detail += fmt::format("{}{}: {:.4f} s vs {:.4f} s ({}), volume ratio {:.3f} ({})", detail.empty() ? "" : "; ",
                          adaptive, ta.mean_s, tu.mean_s, faster ? "faster" : "slower", ta.volume / tu.volume,
                          close ? "within 15%" : "exceeds 15%");
  }
  return check(ok, fmt::format("mean of {} reps, {}", kReps, detail));
}

// 4. Published double-integrator area, only with the original weights.
Outcome reproduction() {
  const char* weights = std::getenv("REACHMM_ORIGINAL_DI_WEIGHTS");
  if (weights == nullptr || *weights == '\0') return {Verdict::Skip, "skipped: weights unavailable"};
  auto cfg = load_config(kSource / "configs/di_01_3_1.json");
  cfg.network.path = weights;
  cfg.network.standin = false;
  const auto ex = build_experiment(cfg);
  const double area = final_volume(ex, run_reach(ex));
  return check(std::abs(area - 0.1) <= 0.25 * 0.1, fmt::format("final hull area {:.4g} against 0.1 (25%)", area));
}

// 5. IBP and CROWN enclose sampled outputs; affine networks are exact.
Outcome inclusion() {
  std::mt19937_64 rng(5);
  std::size_t violations = 0;
  double affine_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = random_size(rng, 1, 6), out = random_size(rng, 1, 4);
    std::vector<std::size_t> hidden(random_size(rng, 0, 2));
    for (auto& w : hidden) w = random_size(rng, 1, 16);
    const Activation act = trial % 2 == 0 ? Activation::Relu : Activation::Tanh;
    const MLPNetwork net = random_mlp(rng, in, out, hidden, act);
    const IntervalVector box = random_box(rng, in);
    const auto ibp = ibp_bounds(net, box);
    const auto lb = crown_bounds(net, box);
    for (int k = 0; k < 10000; ++k) {
      const Vec x = sample_in(rng, box);
      const Vec y = net(x);
      const Vec lo = lb.C_lo * x + lb.d_lo;
      const Vec hi = lb.C_hi * x + lb.d_hi;
      if (!ibp.contains(y, 1e-9) || ((lo - y).array() > 1e-9).any() || ((y - hi).array() > 1e-9).any()) ++violations;
    }

    const Mat w = random_mat(rng, out, in, -2, 2);
    const Vec b = random_vec(rng, out, -1, 1);
    const MLPNetwork affine({DenseLayer{w, b, Activation::Identity}});
    const Mat wp = w.cwiseMax(0.0), wn = w.cwiseMin(0.0);
    const Vec exact_lo = wp * box.lo() + wn * box.hi() + b;
    const Vec exact_hi = wp * box.hi() + wn * box.lo() + b;
    const auto ai = ibp_bounds(affine, box);
    const auto al = crown_bounds(affine, box);
    const auto ao = InclusionFunction(al)(box.lo(), box.hi());
    affine_err = std::max({affine_err, (ai.lo() - exact_lo).cwiseAbs().maxCoeff(),
                           (ai.hi() - exact_hi).cwiseAbs().maxCoeff(), (ao.lo - exact_lo).cwiseAbs().maxCoeff(),
                           (ao.hi - exact_hi).cwiseAbs().maxCoeff(), (al.C_lo - w).cwiseAbs().maxCoeff(),
                           (al.C_hi - w).cwiseAbs().maxCoeff()});
  }
  return check(violations == 0 && affine_err <= 1e-12,
               fmt::format("100 networks x 10^4 samples, {} violations, affine error {:.2g}", violations, affine_err));
}

// Pairs (x, xh) <=_SE (y, yh) sharing one orientation pattern, with coordinate
// pin equal in both (x_pin = y_pin, xh_pin = yh_pin).
struct PairTuple {
  Vec x, xh, y, yh;
};

PairTuple se_pairs(std::mt19937_64& rng, const Vec& lo, const Vec& hi, int pattern, long pin) {
  const auto n = lo.size();
  PairTuple t{Vec(n), Vec(n), Vec(n), Vec(n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    std::array<double, 4> s{};
    for (auto& v : s) v = uniform(rng, lo(k), hi(k));
    std::sort(s.begin(), s.end());
    double x, xh, y, yh;
    if (pattern == 0) {
      if (k == pin) s[1] = s[0], s[3] = s[2];
      x = s[0], y = s[1], yh = s[2], xh = s[3];
    } else {
      if (k == pin) s[3] = s[2], s[1] = s[0];
      yh = s[0], xh = s[1], x = s[2], y = s[3];
    }
    t.x(k) = x, t.xh(k) = xh, t.y(k) = y, t.yh(k) = yh;
  }
  return t;
}

// 6. Diagonal agreement and southeast monotonicity of each decomposition.
Outcome decompositions() {
  const double pi = std::numbers::pi;
  struct Case {
    std::shared_ptr<const OpenLoopSystem> sys;
    Vec xlo, xhi, ulo, uhi;
  };
  std::mt19937_64 rng(6);
  const Vec v2a = (Vec(2) << -5, -5).finished(), v2b = (Vec(2) << 5, 5).finished();
  const std::vector<Case> cases{
      {make_vehicle_system(), (Vec(4) << -10, -10, -pi, 0).finished(), (Vec(4) << 10, 10, pi, 3).finished(),
       (Vec(2) << -2, -1.2).finished(), (Vec(2) << 2, 1.2).finished()},
      {make_double_integrator_system(), v2a, v2b, Vec::Constant(1, -2), Vec::Constant(1, 2)},
      {make_scalar_toy_system(), Vec::Constant(1, -3), Vec::Constant(1, 3), Vec::Constant(1, -1), Vec::Constant(1, 1)},
      {linear_system(random_mat(rng, 3, 3, -2, 2), random_mat(rng, 3, 2, -2, 2)), Vec::Constant(3, -4),
       Vec::Constant(3, 4), Vec::Constant(2, -1), Vec::Constant(2, 1)},
  };
  std::size_t failures = 0;
  std::string names;
  for (const auto& c : cases) {
    const auto n = static_cast<long>(c.sys->state_dim());
    names += (names.empty() ? "" : ", ") + c.sys->name();
    for (int k = 0; k < 1000; ++k) {
      const Vec x = sample_in(rng, IntervalVector(c.xlo, c.xhi));
      const Vec u = sample_in(rng, IntervalVector(c.ulo, c.uhi));
      if ((c.sys->d(x, x, u, u, kNone, kNone) - c.sys->f(x, u, kNone)).cwiseAbs().maxCoeff() > 1e-9) ++failures;

      const int pattern = k % 2;
      const long i = k % n;
      const auto xs = se_pairs(rng, c.xlo, c.xhi, pattern, i);
      const auto us = se_pairs(rng, c.ulo, c.uhi, pattern, -1);
      const auto ii = static_cast<std::size_t>(i);
      const double lhs = c.sys->d(ii, xs.x, xs.xh, us.x, us.xh, kNone, kNone);
      const double rhs = c.sys->d(ii, xs.y, xs.yh, us.y, us.yh, kNone, kNone);
      if (lhs > rhs + 1e-9) ++failures;
    }
  }
  return check(failures == 0, fmt::format("{} x 10^3 tuples ({}), {} failures", cases.size(), names, failures));
}

// 7. Dominance of the closed-loop rate and the accuracy bound on the scalar toy.
Outcome contraction() {
  std::string detail;
  bool ok = true;
  for (const char* name : {"vehicle_adaptive_2_1.json", "di_01_3_1.json"}) {
    const auto ex = experiment(name);
    const auto rep = bounds_report(ex, run_reach(ex).tube);
    double margin = kInf;
    for (const auto& iv : rep["intervals"])
      margin = std::min(margin, iv["theorem2_bound"].get<double>() + 1e-6 - iv["c_x"].get<double>());
    ok &= margin >= 0.0 && rep["dominance_holds"].get<bool>();
    detail += fmt::format("{}: min slack {:.3g} over {} intervals; ", ex.config.system.name, margin,
                          rep["intervals"].size());
  }

  const auto toy = make_scalar_toy_system();
  const Vec one = Vec::Constant(1, 1.0);
  auto incl = std::make_shared<const InclusionFunction>(
      LinearBounds{Mat::Zero(1, 1), -0.1 * one, Mat::Zero(1, 1), 0.1 * one, IntervalVector(-2 * one, 2 * one)});
  ClosedLoopEmbedding emb(toy, std::make_shared<const MLPNetwork>(MLPNetwork::constant(1, 0.0 * one)), kNoW);
  emb.inherit(incl);
  emb.refresh_control(IntervalVector(-one, one), 1, false);
  EmbeddingState s(IntervalVector(-one, one));
  const double dt = 0.001;
  long k = 0;
  double worst = kInf;
  for (double t : {0.5, 1.0, 2.0, 5.0}) {
    for (; k < std::lround(t / dt); ++k) s = emb.euler_step(s, dt, 1);
    const double err = std::max(std::abs(s.lo(0)), std::abs(s.hi(0)));
    worst = std::min(worst, theorem1_bound(-1.0, 1.0, 0.0, t, 1.0, 0.1, 0.0) + 1e-9 - err);
  }
  ok &= worst >= 0.0;
  return check(ok, detail + fmt::format("scalar toy: min slack {:.3g} at t = 0.5, 1, 2, 5", worst));
}

AlgorithmParams params_for(std::size_t n, double eps, double period, double T, double dt, int D_p, int D_N,
                           double gamma) {
  AlgorithmParams p;
  p.eps = ToleranceVector::uniform(n, eps);
  p.gamma = gamma;
  p.D_p = D_p;
  p.D_N = D_N;
  p.control_instants = uniform_instants(0.0, period, T);
  p.T = T;
  p.dt = dt;
  return p;
}

int deepest_verify(const PartitionNode& node) {
  int d = node.verified ? node.depth : -1;
  for (const auto& c : node.children) d = std::max(d, deepest_verify(c));
  return d;
}

bool within_budget(const ReachEngine& engine, const ReachTube& tube) {
  const auto& p = engine.params();
  if (tree_stats(engine.root()).max_depth > p.D_p || deepest_verify(engine.root()) > p.D_N) return false;
  for (const auto& s : tube.stats)
    if (s.max_depth > p.D_p || s.max_verify_depth > p.D_N) return false;
  return true;
}

// 8. Probe semantics, tolerance extremes and budgets.
Outcome semantics() {
  std::mt19937_64 rng(8);
  std::size_t mismatches = 0, budget = 0, runs = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 2);
    const Mat a = random_mat(rng, n, n, -1.5, 1.5);
    auto net = std::make_shared<const MLPNetwork>(random_mlp(rng, n, 1, {4}));
    auto model = std::make_shared<const ContinuousClosedLoop>(linear_system(a, random_mat(rng, n, 1, -1, 1)), net, kNoW);
    const IntervalVector x0 = random_box(rng, n, 1.0, 0.3);
    const double eps = uniform(rng, 0.2, 1.0);
    const auto exact = compute_reachable_set(model, x0, params_for(n, eps, 0.5, 0.5, 0.05, 0, 0, 1.0));
    const auto probe_params = params_for(n, eps, 0.5, 0.5, 0.05, 1, 0, 1.0);
    const bool wide = weighted_inf_norm(exact.boxes.back().front().width(), probe_params.eps) > 1.0;
    ReachEngine engine(model, probe_params);
    const auto tube = engine.run(x0);
    if ((tube.stats.front().subdivisions > 0) != wide) ++mismatches;
    if (!within_budget(engine, tube)) ++budget;
    ++runs;
  }

  const auto ex = experiment("vehicle_adaptive_2_2.json");
  auto p = ex.params;
  p.eps = ToleranceVector::uniform(4, kInf);
  ReachEngine inf_engine(ex.model, p);
  const auto inf_tube = inf_engine.run(ex.config.initial_set);
  std::size_t max_leaves = 0;
  for (const auto& b : inf_tube.boxes) max_leaves = std::max(max_leaves, b.size());
  budget += !within_budget(inf_engine, inf_tube);

  p.eps = ToleranceVector::uniform(4, 0.0);
  ReachEngine zero_engine(ex.model, p);
  const auto zero_tube = zero_engine.run(ex.config.initial_set);
  const auto& first = zero_tube.stats.front();
  const std::size_t full = std::size_t{1} << (4 * p.D_p);
  const bool uniform_full = first.max_depth == p.D_p && first.leaves == full && zero_tube.boxes[1].size() == full;
  budget += !within_budget(zero_engine, zero_tube);
  runs += 2;

  for (const char* name : {"di_01_3_1.json", "di_005_6_2.json", "vehicle_nonadaptive_2_2.json",
                           "vehicle_adaptive025_2_1.json"}) {
    const auto e = experiment(name);
    ReachEngine engine(e.model, e.params);
    budget += !within_budget(engine, engine.run(e.config.initial_set));
    ++runs;
  }
  const bool ok = mismatches == 0 && max_leaves == 1 && uniform_full && budget == 0;
  return check(ok, fmt::format("gamma = 1 mismatches {}/50; eps = inf max leaves {}; eps = 0 gives {} leaves at "
                               "depth {} (expected {} at {}); budget breaches {}/{} runs",
                               mismatches, max_leaves, first.leaves, first.max_depth, full, p.D_p, budget, runs));
}

// 9. Byte-identical tubes across repeated runs and worker counts.
Outcome determinism() {
  bool ok = true;
  std::size_t compared = 0;
  for (const char* name : {"vehicle_adaptive_2_2.json", "di_005_6_2.json"}) {
    const auto seq = experiment(name, {"threads=1"});
    const auto par = experiment(name, {"threads=8"});
    const auto ref = tube_csv(run_reach(seq).tube);
    ok &= ref == tube_csv(run_reach(seq).tube);
    ok &= ref == tube_csv(run_reach(par).tube);
    ok &= ref == tube_csv(run_reach(par).tube);
    compared += 3;
  }
  return check(ok, fmt::format("{} tube comparisons across runs and 1 vs 8 workers", compared));
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"soundness", soundness},       {"refinement", refinement},       {"adaptive speed-up", speedup},
      {"reproduction", reproduction}, {"inclusion", inclusion},         {"decomposition", decompositions},
      {"contraction", contraction},   {"algorithm semantics", semantics}, {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = fail(fmt::format("exception: {}", e.what()));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::Fail;
    std::cout << fmt::format("criterion {} {} ({}): {} [{:.1f} s]", i + 1, tag, criteria[i].first, o.detail, secs)
              << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria failed", failures, criteria.size()) << std::endl;
  return failures == 0 ? 0 : 1;
}
