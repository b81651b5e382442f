#pragma once

#include "reachmm/interval.hpp"
#include "reachmm/mixed_monotone.hpp"
#include "reachmm/partition.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace reachmm {

struct VehicleParams {
  double l_f = 1.0;
  double l_r = 1.0;
};

/// Slip angle beta(u2) = atan(l_f / (l_f + l_r) * tan u2).
double vehicle_beta(double u2, const VehicleParams& p);
/// Enclosure of beta over an input interval; monotone inside (-pi/2, pi/2).
Interval vehicle_beta(const Interval& u2, const VehicleParams& p);

/// Kinematic bicycle with x = (p_x, p_y, phi, v), u = (force, wheel angle), no disturbance.
Vec vehicle_field(const Vec& x, const Vec& u, const VehicleParams& p);
Interval vehicle_extension(std::size_t i, std::span<const Interval> x, std::span<const Interval> u,
                           const VehicleParams& p);
std::shared_ptr<const OpenLoopSystem> make_vehicle_system(const VehicleParams& p = {});

/// Benchmark initial set for the vehicle.
IntervalVector vehicle_initial_set();

/// Zero-order hold double integrator with unit step.
Mat double_integrator_a();
Mat double_integrator_b();
IntervalVector double_integrator_initial_set();
/// Continuous-style field (A - I) x + B u; one Euler step of size 1 reproduces the discrete map.
std::shared_ptr<const OpenLoopSystem> make_double_integrator_system();

/// x' = -x + u, with the sign-split decomposition.
std::shared_ptr<const OpenLoopSystem> make_scalar_toy_system();

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
};

/// Time grid produced by the engine for the given parameters (truncated at T).
std::vector<double> tube_time_grid(const AlgorithmParams& params, bool discrete_time);

/// Closed-loop trajectories from uniform initial states. Disturbances are
/// drawn uniformly once per control interval. Each trajectory has its own
/// generator seeded from (seed, index), so results do not depend on threads.
std::vector<Trajectory> sample_trajectories(const ClosedLoopModel& model, const IntervalVector& x0,
                                            std::size_t count, std::uint64_t seed, const AlgorithmParams& params);

/// Trajectory from a given initial state and per-interval disturbances (empty means the box center).
Trajectory simulate(const ClosedLoopModel& model, const Vec& x0, const AlgorithmParams& params,
                    std::span<const Vec> disturbances = {});

struct ContainmentReport {
  std::size_t checked = 0;
  std::size_t violations = 0;
  /// Largest distance by which a state leaves the union of boxes (<= 0 when contained).
  double worst_excess = -std::numeric_limits<double>::infinity();
  std::size_t worst_trajectory = 0;
  std::size_t worst_step = 0;
};

/// Membership of each trajectory state in the union of the tube's boxes at the same step.
ContainmentReport containment_check(const ReachTube& tube, std::span<const Trajectory> trajectories,
                                    double slack = 1e-9);

/// Product of hull widths over coords (all coordinates when empty) at grid time t.
double hull_volume(const ReachTube& tube, double t, std::span<const std::size_t> coords = {});

/// Area of the union of the boxes projected on (coords[0], coords[1]), by
/// counting cell centres of a resolution x resolution grid over the hull.
double union_area_raster(std::span<const IntervalVector> boxes, std::size_t c0, std::size_t c1,
                         std::size_t resolution);

}  // namespace reachmm
