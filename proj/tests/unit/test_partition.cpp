#include "reachmm/errors.hpp"
#include "reachmm/models.hpp"
#include "reachmm/partition.hpp"
#include "../test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace reachmm;
using namespace reachmm::testing;

namespace {

const double kInf = std::numeric_limits<double>::infinity();
const Vec kNone = Vec(0);
Vec v1(double a) { return Vec::Constant(1, a); }

std::shared_ptr<const OpenLoopSystem> linear_system(const Mat& a, const Mat& b) {
  return std::make_shared<const OpenLoopSystem>("linear", static_cast<std::size_t>(a.rows()),
                                                static_cast<std::size_t>(b.cols()), 0, linear_field(a, b),
                                                linear_decomposition(a, b));
}

std::shared_ptr<const ClosedLoopModel> constant_loop(const Mat& a, double u = 0.0) {
  const auto n = static_cast<std::size_t>(a.rows());
  auto net = std::make_shared<const MLPNetwork>(MLPNetwork::constant(n, v1(u)));
  return std::make_shared<const ContinuousClosedLoop>(linear_system(a, Mat::Ones(a.rows(), 1)), net,
                                                      IntervalVector(kNone, kNone));
}

AlgorithmParams params_for(std::size_t n, double eps, double period, double T, double dt, int D_p, int D_N,
                           double gamma = 1.0) {
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

std::shared_ptr<const MLPNetwork> load_net(const char* name) {
  return std::make_shared<const MLPNetwork>(
      MLPNetwork::load(std::filesystem::path(REACHMM_SOURCE_DIR) / "data/networks" / name));
}

std::shared_ptr<const ClosedLoopModel> di_model() {
  return std::make_shared<const DiscreteLTIClosedLoop>(double_integrator_a(), double_integrator_b(),
                                                       load_net("double_integrator_standin.json"));
}

AlgorithmParams di_params(double eps, int D_p, int D_N, PartitionMode mode = PartitionMode::Adaptive) {
  auto p = params_for(2, eps, 1.0, 5.0, 1.0, D_p, D_N, 1.0);
  p.mode = mode;
  return p;
}

void check_hull_invariant(const PartitionNode& node) {
  if (node.leaf()) return;
  CHECK(node.children.size() == (std::size_t{1} << node.box.dim()));
  std::vector<IntervalVector> boxes;
  for (const auto& c : node.children) {
    CHECK(c.depth == node.depth + 1);
    boxes.push_back(c.box);
    check_hull_invariant(c);
  }
  CHECK(node.box.contains(interval_hull(boxes)));
}

int max_verified_depth(const PartitionNode& node) {
  int d = node.verified ? node.depth : -1;
  for (const auto& c : node.children) d = std::max(d, max_verified_depth(c));
  return d;
}

}  // namespace

TEST_CASE("time grid helpers") {
  const auto ts = uniform_instants(0.0, 0.25, 1.25);
  REQUIRE(ts.size() == 6);
  CHECK(ts.back() == doctest::Approx(1.25));
  CHECK(uniform_instants(0.0, 0.4, 1.0).back() == doctest::Approx(1.2));
  CHECK_THROWS(uniform_instants(1.0, 0.1, 0.5));
  CHECK_THROWS(uniform_instants(0.0, 0.0, 1.0));
  CHECK(steps_in_interval(0.0, 0.25, 0.01) == 25);
  CHECK_THROWS(steps_in_interval(0.0, 0.25, 0.03));
  CHECK(step_time(0.0, 0.25, 25, 25) == 0.25);

  AlgorithmParams p = params_for(1, 1.0, 0.4, 1.0, 0.1, 0, 0);
  CHECK(final_control_index(p) == 3);
  const auto grid = tube_time_grid(p, false);
  CHECK(grid.size() == 11);
  CHECK(grid.back() == doctest::Approx(1.0));
}

TEST_CASE("parameter validation") {
  auto p = params_for(1, 1.0, 0.25, 1.0, 0.01, 1, 1);
  CHECK_NOTHROW(p.validate(1, false));
  CHECK_THROWS(p.validate(2, false));
  auto bad = p;
  bad.gamma = 0.0;
  CHECK_THROWS(bad.validate(1, false));
  bad = p;
  bad.gamma = 1.5;
  CHECK_THROWS(bad.validate(1, false));
  bad = p;
  bad.dt = 0.03;
  CHECK_THROWS(bad.validate(1, false));
  CHECK_NOTHROW(bad.validate(1, true));
  bad = p;
  bad.D_p = -1;
  CHECK_THROWS(bad.validate(1, false));
  bad = p;
  bad.control_instants = {0.0, 0.5, 0.4};
  CHECK_THROWS(bad.validate(1, false));
  CHECK(parse_partition_mode("non-adaptive") == PartitionMode::NonAdaptiveUniform);
  CHECK(to_string(PartitionMode::Adaptive) == "adaptive");
  CHECK_THROWS(parse_partition_mode("greedy"));
}

TEST_CASE("subdivision predicate") {
  CHECK_FALSE(subdivision_predicate(0.0, 0.0, 0.1));
  CHECK(subdivision_predicate(kInf, kInf, 0.1));
  CHECK(subdivision_predicate(1.0, 2.0, 1.0));
  CHECK_FALSE(subdivision_predicate(1.0, 0.5, 1.0));
  // width 0.5 growing 10% over a tenth of the interval extrapolates to 0.5 * 1.1^10 ~ 1.30
  CHECK(subdivision_predicate(0.5, 0.55, 0.1));
  CHECK_FALSE(subdivision_predicate(0.5, 0.52, 0.1));
}

TEST_CASE("tree stats") {
  PartitionNode root;
  root.box = IntervalVector(Vec::Zero(2), Vec::Ones(2));
  const auto fresh = tree_stats(root);
  CHECK(fresh.leaves == 1);
  CHECK(fresh.max_depth == 0);
  CHECK(fresh.nn_nodes == 1);

  for (int D_N : {0, 1}) {
    auto p = params_for(2, 0.0, 0.1, 0.1, 0.01, 1, D_N);
    ReachEngine engine(constant_loop(-Mat::Identity(2, 2)), p);
    engine.run(root.box);
    const auto s = tree_stats(engine.root());
    CHECK(s.leaves == 4);
    CHECK(s.max_depth == 1);
    CHECK(s.nn_nodes == (D_N == 0 ? 1u : 5u));
  }
}

TEST_CASE("expanding scalar system splits once the width doubles") {
  const double len = std::log(2.0);
  auto p = params_for(1, 1.0, len, len, len / 1000.0, 1, 0);
  ReachEngine engine(constant_loop(Mat::Ones(1, 1)), p);
  const auto tube = engine.run(IntervalVector(v1(0.0), v1(1.0)));
  const auto& root = engine.root();
  REQUIRE(root.children.size() == 2);
  CHECK(tube.stats.front().subdivisions == 1);
  CHECK(tube.boxes.back().size() == 2);
  const double growth = std::pow(1.0 + len / 1000.0, 1000.0);
  for (const auto& c : root.children) CHECK(c.box.width()(0) == doctest::Approx(0.5 * growth).epsilon(1e-12));
  CHECK(tube.stats.front().nn_calls == 1);
}

TEST_CASE("contracting scalar system never splits") {
  auto p = params_for(1, 1.0, 0.5, 2.0, 0.01, 4, 2, 0.1);
  ReachEngine engine(constant_loop(-Mat::Ones(1, 1)), p);
  const auto tube = engine.run(IntervalVector(v1(0.0), v1(1.0)));
  CHECK(tree_stats(engine.root()).leaves == 1);
  for (const auto& s : tube.stats) CHECK(s.subdivisions == 0);
}

TEST_CASE("infinite tolerance reproduces a single embedding run") {
  const auto model = std::make_shared<const ContinuousClosedLoop>(make_vehicle_system(), load_net("vehicle_standin.json"),
                                                                  IntervalVector(kNone, kNone));
  auto p = params_for(4, kInf, 0.25, 0.5, 0.01, 3, 1, 0.1);
  const auto x0 = vehicle_initial_set();
  const auto tube = compute_reachable_set(model, x0, p);
  for (const auto& boxes : tube.boxes) CHECK(boxes.size() == 1);

  EmbeddingState s(x0);
  std::size_t k = 1;
  for (std::size_t j = 1; j <= 2; ++j) {
    auto prop = model->begin_interval(model->verify(s.box()), s.box(), j, 0.01);
    for (int step = 0; step < 25; ++step, ++k) {
      s = prop->advance(s);
      CHECK(tube.boxes[k].front() == s.box());
    }
  }
  CHECK(tube.total_nn_calls() == 2);
}

TEST_CASE("zero tolerance partitions uniformly at the first instant") {
  auto p = params_for(2, 0.0, 0.1, 0.3, 0.01, 2, 1, 0.1);
  ReachEngine engine(constant_loop(-Mat::Identity(2, 2)), p);
  const auto tube = engine.run(IntervalVector(Vec::Zero(2), Vec::Ones(2)));
  CHECK(tube.stats.front().max_depth == 2);
  CHECK(tube.stats.front().leaves == 16);
  CHECK(tube.boxes[1].size() == 16);
  CHECK(tube.stats.front().max_verify_depth == 1);
}

TEST_CASE("non-adaptive mode pre-partitions and never probes") {
  auto p = di_params(kInf, 2, 1, PartitionMode::NonAdaptiveUniform);
  ReachEngine engine(di_model(), p);
  const auto tube = engine.run(double_integrator_initial_set());
  CHECK(tube.boxes.front().size() == 16);
  for (const auto& s : tube.stats) {
    CHECK(s.subdivisions == 0);
    CHECK(s.leaves == 16);
    // the root hands verification to its four children
    CHECK(s.nn_calls == 4);
  }
}

TEST_CASE("budgets, hull invariant and tree growth on the double integrator") {
  for (const auto& [eps, D_p, D_N] : std::vector<std::tuple<double, int, int>>{{0.1, 3, 1}, {0.05, 6, 2}, {0.1, 10, 2}}) {
    auto p = di_params(eps, D_p, D_N);
    ReachEngine engine(di_model(), p);
    const auto tube = engine.run(double_integrator_initial_set());
    const auto s = tree_stats(engine.root());
    CHECK(s.max_depth <= D_p);
    CHECK(max_verified_depth(engine.root()) <= D_N);
    int prev = 0;
    for (const auto& st : tube.stats) {
      CHECK(st.max_depth <= D_p);
      CHECK(st.max_verify_depth <= D_N);
      CHECK(st.max_depth >= prev);
      prev = st.max_depth;
    }
    check_hull_invariant(engine.root());
  }
}

TEST_CASE("unit-gamma probe decides on the exact final width") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 2);
    const Mat a = random_mat(rng, n, n, -1.5, 1.5);
    auto net = std::make_shared<const MLPNetwork>(random_mlp(rng, n, 1, {4}));
    auto model = std::make_shared<const ContinuousClosedLoop>(linear_system(a, random_mat(rng, n, 1, -1, 1)), net,
                                                              IntervalVector(kNone, kNone));
    const IntervalVector x0 = random_box(rng, n, 1.0, 0.3);
    const double eps = uniform(rng, 0.2, 1.0);
    auto single = params_for(n, eps, 0.5, 0.5, 0.05, 0, 0);
    const auto exact = compute_reachable_set(model, x0, single);
    const bool wide = weighted_inf_norm(exact.boxes.back().front().width(), single.eps) > 1.0;
    auto probe = params_for(n, eps, 0.5, 0.5, 0.05, 1, 0);
    const auto tube = compute_reachable_set(model, x0, probe);
    CHECK((tube.stats.front().subdivisions > 0) == wide);
  }
}

TEST_CASE("engine output does not depend on the worker count") {
  const auto model = std::make_shared<const ContinuousClosedLoop>(make_vehicle_system(), load_net("vehicle_standin.json"),
                                                                  IntervalVector(kNone, kNone));
  auto p = params_for(4, kInf, 0.25, 0.5, 0.01, 2, 1, 0.1);
  p.eps = ToleranceVector((Vec(4) << 0.2, 0.2, kInf, kInf).finished());
  p.threads = 1;
  const auto a = compute_reachable_set(model, vehicle_initial_set(), p);
  p.threads = 4;
  const auto b = compute_reachable_set(model, vehicle_initial_set(), p);
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    REQUIRE(a.boxes[k].size() == b.boxes[k].size());
    for (std::size_t r = 0; r < a.boxes[k].size(); ++r) CHECK(a.boxes[k][r] == b.boxes[k][r]);
  }
}

TEST_CASE("deeper partitions never loosen the double integrator hull") {
  for (int D_N : {0, 1}) {
    double prev = kInf;
    for (int D_p = D_N; D_p <= 4; ++D_p) {
      const auto tube = compute_reachable_set(di_model(), double_integrator_initial_set(),
                                              di_params(kInf, D_p, D_N, PartitionMode::NonAdaptiveUniform));
      const double vol = hull_volume(tube, 5.0);
      CHECK(vol <= prev + 1e-9);
      prev = vol;
    }
  }
  double prev = kInf;
  for (int D_N = 0; D_N <= 3; ++D_N) {
    const auto tube = compute_reachable_set(di_model(), double_integrator_initial_set(),
                                            di_params(kInf, 3, D_N, PartitionMode::NonAdaptiveUniform));
    const double vol = hull_volume(tube, 5.0);
    CHECK(vol <= prev + 1e-9);
    prev = vol;
  }
}

TEST_CASE("engine surfaces an unordered embedding as a numeric failure") {
  // x' = u with a strong held feedback: the face bounds cross within the interval
  auto net = std::make_shared<const MLPNetwork>(
      MLPNetwork({DenseLayer{Mat::Constant(1, 1, -2.0), v1(0.0), Activation::Identity}}));
  auto model = std::make_shared<const ContinuousClosedLoop>(linear_system(Mat::Zero(1, 1), Mat::Ones(1, 1)), net,
                                                            IntervalVector(kNone, kNone));
  auto p = params_for(1, kInf, 1.0, 1.0, 0.01, 0, 0);
  CHECK_THROWS_AS(compute_reachable_set(model, IntervalVector(v1(0.0), v1(1.0)), p), NumericFailure);
}

TEST_CASE("tube lookups") {
  auto p = params_for(1, kInf, 0.5, 1.0, 0.1, 0, 0);
  const auto tube = compute_reachable_set(constant_loop(-Mat::Ones(1, 1)), IntervalVector(v1(0.0), v1(1.0)), p);
  CHECK(tube.size() == 11);
  CHECK(tube.index_of(0.5) == 5);
  CHECK_THROWS_AS(tube.index_of(0.55), std::out_of_range);
  CHECK_THROWS(compute_reachable_set(constant_loop(-Mat::Ones(1, 1)), IntervalVector(Vec::Zero(2), Vec::Ones(2)), p));
}
