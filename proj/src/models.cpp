#include "reachmm/models.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace reachmm {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

double slip_ratio(const VehicleParams& p) { return p.l_f / (p.l_f + p.l_r); }

}  // namespace

double vehicle_beta(double u2, const VehicleParams& p) { return std::atan(slip_ratio(p) * std::tan(u2)); }

Interval vehicle_beta(const Interval& u2, const VehicleParams& p) {
  if (u2.lo > -kHalfPi && u2.hi < kHalfPi) return {vehicle_beta(u2.lo, p), vehicle_beta(u2.hi, p)};
  return {-kHalfPi, kHalfPi};
}

Vec vehicle_field(const Vec& x, const Vec& u, const VehicleParams& p) {
  const double beta = vehicle_beta(u(1), p);
  Vec dx(4);
  dx << x(3) * std::cos(x(2) + beta), x(3) * std::sin(x(2) + beta), x(3) / p.l_r * std::sin(beta), u(0);
  return dx;
}

Interval vehicle_extension(std::size_t i, std::span<const Interval> x, std::span<const Interval> u,
                           const VehicleParams& p) {
  const Interval beta = vehicle_beta(u[1], p);
  switch (i) {
    case 0: return x[3] * icos(x[2] + beta);
    case 1: return x[3] * isin(x[2] + beta);
    case 2: return (1.0 / p.l_r) * (x[3] * isin(beta));
    case 3: return u[0];
    default: throw std::out_of_range(fmt::format("vehicle has 4 states, asked for component {}", i));
  }
}

std::shared_ptr<const OpenLoopSystem> make_vehicle_system(const VehicleParams& p) {
  if (!(p.l_f > 0.0) || !(p.l_r > 0.0)) throw std::invalid_argument("vehicle lengths l_f and l_r must be positive");
  VectorField f = [p](const Vec& x, const Vec& u, const Vec&) { return vehicle_field(x, u, p); };
  IntervalExtension ext = [p](std::size_t i, std::span<const Interval> x, std::span<const Interval> u,
                              std::span<const Interval>) { return vehicle_extension(i, x, u, p); };
  auto d = build_tight_decomposition(f, ext, 4, 2, 0);
  return std::make_shared<const OpenLoopSystem>("vehicle", 4, 2, 0, std::move(f), std::move(d));
}

IntervalVector vehicle_initial_set() {
  const double phi = -2.0 * std::numbers::pi / 3.0;
  Vec lo(4), hi(4);
  lo << 7.9, 7.9, phi - 0.01, 1.99;
  hi << 8.1, 8.1, phi + 0.01, 2.01;
  return {lo, hi};
}

Mat double_integrator_a() {
  Mat a(2, 2);
  a << 1.0, 1.0, 0.0, 1.0;
  return a;
}

Mat double_integrator_b() {
  Mat b(2, 1);
  b << 0.5, 1.0;
  return b;
}

IntervalVector double_integrator_initial_set() {
  Vec lo(2), hi(2);
  lo << 2.5, -0.25;
  hi << 3.0, 0.25;
  return {lo, hi};
}

std::shared_ptr<const OpenLoopSystem> make_double_integrator_system() {
  const Mat a = double_integrator_a() - Mat::Identity(2, 2);
  const Mat b = double_integrator_b();
  return std::make_shared<const OpenLoopSystem>("double-integrator", 2, 1, 0, linear_field(a, b),
                                                linear_decomposition(a, b));
}

std::shared_ptr<const OpenLoopSystem> make_scalar_toy_system() {
  const Mat a = Mat::Constant(1, 1, -1.0);
  const Mat b = Mat::Constant(1, 1, 1.0);
  return std::make_shared<const OpenLoopSystem>("scalar-toy", 1, 1, 0, linear_field(a, b),
                                                linear_decomposition(a, b));
}

std::vector<double> tube_time_grid(const AlgorithmParams& params, bool discrete_time) {
  const auto& ts = params.control_instants;
  const std::size_t m = final_control_index(params);
  std::vector<double> out{ts.front()};
  for (std::size_t j = 1; j <= m; ++j) {
    const std::size_t K = discrete_time ? 1 : steps_in_interval(ts[j - 1], ts[j], params.dt);
    for (std::size_t k = 1; k <= K; ++k) {
      const double t = step_time(ts[j - 1], ts[j], k, K);
      if (t > params.T + 1e-9) return out;
      out.push_back(t);
    }
  }
  return out;
}

Trajectory simulate(const ClosedLoopModel& model, const Vec& x0, const AlgorithmParams& params,
                    std::span<const Vec> disturbances) {
  const auto& ts = params.control_instants;
  const std::size_t m = final_control_index(params);
  const bool discrete = model.discrete_time();
  const IntervalVector wbox = model.disturbance_box();
  Trajectory traj;
  traj.times.push_back(ts.front());
  traj.states.push_back(x0);
  Vec x = x0;
  for (std::size_t j = 1; j <= m; ++j) {
    const Vec u = model.control(x);
    const Vec w = disturbances.size() >= j ? disturbances[j - 1] : wbox.center();
    const std::size_t K = discrete ? 1 : steps_in_interval(ts[j - 1], ts[j], params.dt);
    for (std::size_t k = 1; k <= K; ++k) {
      x = model.simulate_step(x, u, w, params.dt);
      const double t = step_time(ts[j - 1], ts[j], k, K);
      if (t > params.T + 1e-9) return traj;
      traj.times.push_back(t);
      traj.states.push_back(x);
    }
  }
  return traj;
}

std::vector<Trajectory> sample_trajectories(const ClosedLoopModel& model, const IntervalVector& x0,
                                            std::size_t count, std::uint64_t seed, const AlgorithmParams& params) {
  if (count == 0) throw std::invalid_argument("need at least one trajectory");
  const IntervalVector wbox = model.disturbance_box();
  const std::size_t m = final_control_index(params);
  std::vector<Trajectory> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&](const IntervalVector& box) {
      Vec v(static_cast<Eigen::Index>(box.dim()));
      for (std::size_t i = 0; i < box.dim(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        v(k) = box.lo(i) + unit(rng) * (box.hi(i) - box.lo(i));
      }
      return v;
    };
    const Vec start = draw(x0);
    std::vector<Vec> ws;
    ws.reserve(m);
    for (std::size_t j = 0; j < m; ++j) ws.push_back(draw(wbox));
    out.push_back(simulate(model, start, params, ws));
  }
  return out;
}

ContainmentReport containment_check(const ReachTube& tube, std::span<const Trajectory> trajectories,
                                    double slack) {
  ContainmentReport rep;
  for (std::size_t r = 0; r < trajectories.size(); ++r) {
    const auto& tr = trajectories[r];
    if (tr.times.size() != tube.times.size()) {
      throw std::invalid_argument(fmt::format("trajectory {} has {} samples, tube has {}", r, tr.times.size(),
                                              tube.times.size()));
    }
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      if (std::abs(tr.times[k] - tube.times[k]) > 1e-9) {
        throw std::invalid_argument(fmt::format("time grid mismatch at step {}: {} vs {}", k, tr.times[k],
                                                tube.times[k]));
      }
      const Vec& x = tr.states[k];
      double best = std::numeric_limits<double>::infinity();
      for (const auto& box : tube.boxes[k]) {
        const double excess = std::max((box.lo() - x).maxCoeff(), (x - box.hi()).maxCoeff());
        best = std::min(best, excess);
      }
      ++rep.checked;
      if (best > slack) ++rep.violations;
      if (best > rep.worst_excess) {
        rep.worst_excess = best;
        rep.worst_trajectory = r;
        rep.worst_step = k;
      }
    }
  }
  return rep;
}

double hull_volume(const ReachTube& tube, double t, std::span<const std::size_t> coords) {
  const auto hull = tube.hull(tube.index_of(t));
  const Vec w = hull.width();
  if (coords.empty()) return w.prod();
  double v = 1.0;
  for (auto c : coords) {
    if (c >= hull.dim()) throw std::out_of_range(fmt::format("coordinate {} out of range", c));
    v *= w(static_cast<Eigen::Index>(c));
  }
  return v;
}

double union_area_raster(std::span<const IntervalVector> boxes, std::size_t c0, std::size_t c1,
                         std::size_t resolution) {
  if (resolution == 0) throw std::invalid_argument("raster resolution must be positive");
  if (boxes.empty()) return 0.0;
  const auto hull = interval_hull(boxes);
  if (c0 >= hull.dim() || c1 >= hull.dim()) throw std::out_of_range("raster coordinates out of range");
  const double x0 = hull.lo(c0), y0 = hull.lo(c1);
  const double wx = hull.hi(c0) - x0, wy = hull.hi(c1) - y0;
  if (wx <= 0.0 || wy <= 0.0) return 0.0;
  const double cx = wx / static_cast<double>(resolution);
  const double cy = wy / static_cast<double>(resolution);
  // Each box marks the column ranges whose centres it covers, row by row.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> rows(resolution);
  auto first_centre = [](double lo, double origin, double cell, std::size_t res) {
    const double k = std::ceil((lo - origin) / cell - 0.5);
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(res)));
  };
  auto past_last_centre = [](double hi, double origin, double cell, std::size_t res) {
    const double k = std::floor((hi - origin) / cell - 0.5) + 1.0;
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(res)));
  };
  for (const auto& b : boxes) {
    const std::size_t i0 = first_centre(b.lo(c0), x0, cx, resolution);
    const std::size_t i1 = past_last_centre(b.hi(c0), x0, cx, resolution);
    const std::size_t j0 = first_centre(b.lo(c1), y0, cy, resolution);
    const std::size_t j1 = past_last_centre(b.hi(c1), y0, cy, resolution);
    if (i0 >= i1) continue;
    for (std::size_t j = j0; j < j1; ++j) rows[j].emplace_back(i0, i1);
  }
  std::size_t cells = 0;
  for (auto& row : rows) {
    if (row.empty()) continue;
    std::sort(row.begin(), row.end());
    std::size_t covered_to = 0;
    for (const auto& [a, b] : row) {
      const std::size_t start = std::max(a, covered_to);
      if (b > start) cells += b - start;
      covered_to = std::max(covered_to, b);
    }
  }
  return static_cast<double>(cells) * cx * cy;
}

}  // namespace reachmm
