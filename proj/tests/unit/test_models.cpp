#include "reachmm/models.hpp"
#include "../test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>

using namespace reachmm;
using namespace reachmm::testing;

namespace {

const double kInf = std::numeric_limits<double>::infinity();
const Vec kNone = Vec(0);
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }
IntervalVector box2(double a, double b, double c, double d) { return {v2(a, c), v2(b, d)}; }

std::shared_ptr<const MLPNetwork> load_net(const char* name) {
  return std::make_shared<const MLPNetwork>(
      MLPNetwork::load(std::filesystem::path(REACHMM_SOURCE_DIR) / "data/networks" / name));
}

AlgorithmParams make_params(std::size_t n, double period, double T, double dt, int D_p = 0, int D_N = 0,
                            double eps = kInf) {
  AlgorithmParams p;
  p.eps = ToleranceVector::uniform(n, eps);
  p.gamma = 0.1;
  p.D_p = D_p;
  p.D_N = D_N;
  p.control_instants = uniform_instants(0.0, period, T);
  p.T = T;
  p.dt = dt;
  return p;
}

}  // namespace

TEST_CASE("benchmark constants") {
  const Mat a = double_integrator_a();
  CHECK(a(0, 0) == 1.0);
  CHECK(a(0, 1) == 1.0);
  CHECK(a(1, 0) == 0.0);
  CHECK(double_integrator_b()(0, 0) == 0.5);
  const auto x0 = vehicle_initial_set();
  CHECK(x0.lo(0) == 7.9);
  CHECK(x0.center()(2) == doctest::Approx(-2.0 * std::numbers::pi / 3.0));
  CHECK(x0.width()(3) == doctest::Approx(0.02));
  CHECK_THROWS(make_vehicle_system(VehicleParams{0.0, 1.0}));
}

TEST_CASE("vehicle field with zero input") {
  const Vec x = (Vec(4) << 8, 8, -2.0 * std::numbers::pi / 3.0, 2).finished();
  const Vec dx = vehicle_field(x, v2(0, 0), VehicleParams{});
  CHECK(dx(0) == doctest::Approx(-1.0));
  CHECK(dx(1) == doctest::Approx(-1.7320508075688772));
  CHECK(dx(2) == 0.0);
  CHECK(dx(3) == 0.0);
}

TEST_CASE("vehicle extension encloses the field") {
  std::mt19937_64 rng(61);
  const VehicleParams p;
  for (int k = 0; k < 2000; ++k) {
    const IntervalVector xb((Vec(4) << -1, -1, -3, 0).finished(), (Vec(4) << 1, 1, 3, 3).finished());
    const IntervalVector bx = [&] {
      const Vec a = sample_in(rng, xb), b = sample_in(rng, xb);
      return IntervalVector(a.cwiseMin(b), a.cwiseMax(b));
    }();
    const IntervalVector ub = [&] {
      const Vec a = random_vec(rng, 2, -1.4, 1.4), b = random_vec(rng, 2, -1.4, 1.4);
      return IntervalVector(a.cwiseMin(b), a.cwiseMax(b));
    }();
    std::vector<Interval> xi, ui;
    for (std::size_t i = 0; i < 4; ++i) xi.emplace_back(bx.lo(i), bx.hi(i));
    for (std::size_t i = 0; i < 2; ++i) ui.emplace_back(ub.lo(i), ub.hi(i));
    const Vec x = sample_in(rng, bx), u = sample_in(rng, ub);
    const Vec f = vehicle_field(x, u, p);
    for (std::size_t i = 0; i < 4; ++i) {
      const Interval e = vehicle_extension(i, xi, ui, p);
      CHECK(e.lo <= f(static_cast<Eigen::Index>(i)) + 1e-12);
      CHECK(f(static_cast<Eigen::Index>(i)) <= e.hi + 1e-12);
    }
  }
}

TEST_CASE("double integrator under a zero controller") {
  const auto model = DiscreteLTIClosedLoop(double_integrator_a(), double_integrator_b(),
                                           std::make_shared<const MLPNetwork>(MLPNetwork::constant(2, Vec::Zero(1))));
  const auto p = make_params(2, 1.0, 2.0, 1.0);
  const auto tr = simulate(model, v2(3, 0.25), p);
  REQUIRE(tr.states.size() == 3);
  CHECK(tr.states[1] == v2(3.25, 0.25));
  CHECK(tr.states[2] == v2(3.5, 0.25));

  const auto p5 = make_params(2, 1.0, 5.0, 1.0);
  const auto tr5 = simulate(model, v2(-1.0, 0.5), p5);
  Mat ak = Mat::Identity(2, 2);
  for (std::size_t k = 0; k < tr5.states.size(); ++k) {
    CHECK((tr5.states[k] - ak * v2(-1.0, 0.5)).cwiseAbs().maxCoeff() == 0.0);
    ak = double_integrator_a() * ak;
  }
}

TEST_CASE("trajectory sampling is seeded per trajectory") {
  const auto model = DiscreteLTIClosedLoop(double_integrator_a(), double_integrator_b(),
                                           load_net("double_integrator_standin.json"));
  const auto p = make_params(2, 1.0, 5.0, 1.0);
  const auto x0 = double_integrator_initial_set();
  const auto a = sample_trajectories(model, x0, 20, 7, p);
  const auto b = sample_trajectories(model, x0, 5, 7, p);
  const auto c = sample_trajectories(model, x0, 5, 8, p);
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(a[r].states.back() == b[r].states.back());
    CHECK(x0.contains(a[r].states.front()));
  }
  CHECK(a[0].states.front() != c[0].states.front());
  CHECK_THROWS(sample_trajectories(model, x0, 0, 7, p));

  const auto point = IntervalVector::point(v2(2.7, 0.1));
  const auto one = sample_trajectories(model, point, 1, 99, p);
  CHECK(one.front().states == simulate(model, v2(2.7, 0.1), p).states);
}

TEST_CASE("containment of centre and shifted trajectories") {
  const auto model = std::make_shared<const DiscreteLTIClosedLoop>(double_integrator_a(), double_integrator_b(),
                                                                   load_net("double_integrator_standin.json"));
  const auto p = make_params(2, 1.0, 5.0, 1.0, 2, 1, 0.1);
  const auto x0 = double_integrator_initial_set();
  const auto tube = compute_reachable_set(model, x0, p);
  auto centre = simulate(*model, x0.center(), p);
  std::vector<Trajectory> one{centre};
  const auto ok = containment_check(tube, one);
  CHECK(ok.violations == 0);
  CHECK(ok.checked == tube.size());
  CHECK(ok.worst_excess <= 0.0);

  for (auto& x : one.front().states) x(0) += 10.0;
  const auto bad = containment_check(tube, one);
  CHECK(bad.violations == tube.size());
  CHECK(bad.worst_excess > 9.0);

  one.front().times.pop_back();
  one.front().states.pop_back();
  CHECK_THROWS(containment_check(tube, one));
}

TEST_CASE("sampled trajectories stay in benchmark tubes") {
  const auto veh = std::make_shared<const ContinuousClosedLoop>(make_vehicle_system(), load_net("vehicle_standin.json"),
                                                                IntervalVector(kNone, kNone));
  auto pv = make_params(4, 0.25, 1.25, 0.01, 2, 1);
  pv.eps = ToleranceVector((Vec(4) << 0.2, 0.2, kInf, kInf).finished());
  const auto tube = compute_reachable_set(veh, vehicle_initial_set(), pv);
  const auto trs = sample_trajectories(*veh, vehicle_initial_set(), 50, 3, pv);
  CHECK(containment_check(tube, trs).violations == 0);

  const auto di = std::make_shared<const DiscreteLTIClosedLoop>(double_integrator_a(), double_integrator_b(),
                                                                load_net("double_integrator_standin.json"));
  const auto pd = make_params(2, 1.0, 5.0, 1.0, 6, 2, 0.05);
  const auto dtube = compute_reachable_set(di, double_integrator_initial_set(), pd);
  const auto dtrs = sample_trajectories(*di, double_integrator_initial_set(), 50, 3, pd);
  CHECK(containment_check(dtube, dtrs).violations == 0);
}

TEST_CASE("hull volume") {
  ReachTube tube;
  tube.times = {0.0, 1.0};
  tube.boxes = {{box2(0, 1, 0, 1)}, {box2(0, 1, 0, 1), box2(1, 2, 0, 1)}};
  CHECK(hull_volume(tube, 0.0) == 1.0);
  CHECK(hull_volume(tube, 1.0) == 2.0);
  const std::vector<std::size_t> first{0};
  CHECK(hull_volume(tube, 1.0, first) == 2.0);
  CHECK_THROWS(hull_volume(tube, 0.5));
  const std::vector<std::size_t> bad{5};
  CHECK_THROWS(hull_volume(tube, 1.0, bad));
}

TEST_CASE("raster union area") {
  const std::vector<IntervalVector> unit{box2(0, 1, 0, 1)};
  CHECK(union_area_raster(unit, 0, 1, 1000) == doctest::Approx(1.0).epsilon(0.003));
  const std::vector<IntervalVector> adjacent{box2(0, 1, 0, 1), box2(1, 2, 0, 1)};
  CHECK(union_area_raster(adjacent, 0, 1, 1000) == doctest::Approx(2.0).epsilon(0.003));
  const std::vector<IntervalVector> disjoint{box2(0, 1, 0, 1), box2(2, 3, 0, 1)};
  CHECK(std::abs(union_area_raster(disjoint, 0, 1, 1000) - 2.0) <= 0.006);
  const std::vector<IntervalVector> nested{box2(0, 1, 0, 1), box2(0.2, 0.8, 0.2, 0.8)};
  CHECK(std::abs(union_area_raster(nested, 0, 1, 1000) - 1.0) <= 0.003);
  CHECK_THROWS(union_area_raster(unit, 0, 1, 0));
  CHECK(union_area_raster(std::vector<IntervalVector>{}, 0, 1, 10) == 0.0);
}

TEST_CASE("raster union never exceeds the hull") {
  std::mt19937_64 rng(62);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<IntervalVector> boxes;
    const std::size_t count = random_size(rng, 1, 8);
    for (std::size_t k = 0; k < count; ++k) boxes.push_back(random_box(rng, 2, 3.0, 1.0));
    const auto h = interval_hull(boxes);
    const double area = union_area_raster(boxes, 0, 1, 200);
    CHECK(area <= h.volume() * (1.0 + 1e-12));
    double sum = 0.0;
    for (const auto& b : boxes) sum += b.volume();
    CHECK(area <= sum + 4.0 * (h.width()(0) + h.width()(1)) * h.width().maxCoeff() / 200.0 * count);
  }
}

TEST_CASE("tube time grid matches the engine") {
  const auto veh = std::make_shared<const ContinuousClosedLoop>(make_vehicle_system(), load_net("vehicle_standin.json"),
                                                                IntervalVector(kNone, kNone));
  const auto p = make_params(4, 0.25, 1.2, 0.01);
  const auto tube = compute_reachable_set(veh, vehicle_initial_set(), p);
  const auto grid = tube_time_grid(p, false);
  REQUIRE(grid.size() == tube.times.size());
  CHECK(grid.back() == doctest::Approx(1.2));
  for (std::size_t k = 0; k < grid.size(); ++k) CHECK(grid[k] == tube.times[k]);
}
