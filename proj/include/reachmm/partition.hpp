#pragma once

#include "reachmm/bounds.hpp"
#include "reachmm/interval.hpp"
#include "reachmm/mixed_monotone.hpp"

#include <memory>
#include <string_view>
#include <vector>

namespace reachmm {

/// Propagates one partition's embedding state across a single control interval.
class IntervalPropagator {
 public:
  virtual ~IntervalPropagator() = default;
  /// One integration step (one Euler step, or one map application in discrete time).
  virtual EmbeddingState advance(const EmbeddingState& state) = 0;
};

/// Closed-loop system as seen by the partition engine: how to verify the
/// network on a box and how to integrate a partition given frozen bounds.
class ClosedLoopModel {
 public:
  virtual ~ClosedLoopModel() = default;
  virtual std::size_t state_dim() const = 0;
  /// Discrete-time models take exactly one step per control interval.
  virtual bool discrete_time() const = 0;
  /// Network bounds valid over box (one CROWN call).
  virtual std::shared_ptr<const InclusionFunction> verify(const IntervalVector& box) const = 0;
  /// Starts control interval j for a partition whose box at t_j is box.
  virtual std::unique_ptr<IntervalPropagator> begin_interval(std::shared_ptr<const InclusionFunction> bounds,
                                                             const IntervalVector& box, std::size_t j,
                                                             double dt) const = 0;

  /// Pointwise controller N(x).
  virtual Vec control(const Vec& x) const = 0;
  /// One step of the true closed loop with the control held at u.
  virtual Vec simulate_step(const Vec& x, const Vec& u, const Vec& w, double dt) const = 0;
  /// Disturbance set (dimension 0 when the model has none).
  virtual IntervalVector disturbance_box() const = 0;
};

/// Continuous-time plant with a sampled network controller, integrated with Euler steps.
class ContinuousClosedLoop : public ClosedLoopModel {
 public:
  ContinuousClosedLoop(std::shared_ptr<const OpenLoopSystem> sys, std::shared_ptr<const MLPNetwork> net,
                       IntervalVector disturbance, ControlBounds mode = ControlBounds::Faces);

  std::size_t state_dim() const override { return sys_->state_dim(); }
  bool discrete_time() const override { return false; }
  std::shared_ptr<const InclusionFunction> verify(const IntervalVector& box) const override;
  std::unique_ptr<IntervalPropagator> begin_interval(std::shared_ptr<const InclusionFunction> bounds,
                                                     const IntervalVector& box, std::size_t j,
                                                     double dt) const override;
  Vec control(const Vec& x) const override { return (*net_)(x); }
  Vec simulate_step(const Vec& x, const Vec& u, const Vec& w, double dt) const override;
  IntervalVector disturbance_box() const override { return w_; }

  const OpenLoopSystem& system() const { return *sys_; }
  std::shared_ptr<const OpenLoopSystem> system_ptr() const { return sys_; }
  ControlBounds control_bounds() const { return mode_; }
  const MLPNetwork& network() const { return *net_; }
  const IntervalVector& disturbance() const { return w_; }

 private:
  std::shared_ptr<const OpenLoopSystem> sys_;
  std::shared_ptr<const MLPNetwork> net_;
  IntervalVector w_;
  ControlBounds mode_;
};

/// x+ = A x + B N(x), propagated with the sign-split affine embedding.
class DiscreteLTIClosedLoop : public ClosedLoopModel {
 public:
  DiscreteLTIClosedLoop(Mat a, Mat b, std::shared_ptr<const MLPNetwork> net);

  std::size_t state_dim() const override { return static_cast<std::size_t>(a_.rows()); }
  bool discrete_time() const override { return true; }
  std::shared_ptr<const InclusionFunction> verify(const IntervalVector& box) const override;
  std::unique_ptr<IntervalPropagator> begin_interval(std::shared_ptr<const InclusionFunction> bounds,
                                                     const IntervalVector& box, std::size_t j,
                                                     double dt) const override;
  Vec control(const Vec& x) const override { return (*net_)(x); }
  Vec simulate_step(const Vec& x, const Vec& u, const Vec& w, double dt) const override;
  IntervalVector disturbance_box() const override { return {}; }

  const Mat& a() const { return a_; }
  const Mat& b() const { return b_; }
  const MLPNetwork& network() const { return *net_; }

 private:
  Mat a_, b_;
  std::shared_ptr<const MLPNetwork> net_;
};

enum class PartitionMode { Adaptive, NonAdaptiveUniform };
PartitionMode parse_partition_mode(std::string_view name);
std::string_view to_string(PartitionMode m);

struct AlgorithmParams {
  ToleranceVector eps;
  double gamma = 0.1;
  int D_p = 0;
  int D_N = 0;
  /// t_0 < t_1 < ... < t_m with t_m the first instant >= T.
  std::vector<double> control_instants;
  double T = 0.0;
  double dt = 0.01;
  PartitionMode mode = PartitionMode::Adaptive;
  /// Worker cap; 1 is the sequential path, 0 uses the hardware concurrency.
  unsigned threads = 1;

  /// Throws std::invalid_argument describing the first violated precondition.
  void validate(std::size_t n, bool discrete_time) const;
};

/// t0, t0 + period, ... up to and including the first instant >= T.
std::vector<double> uniform_instants(double t0, double period, double T);

/// Number of integration steps covering [a, b] with step dt (must divide within 1e-9).
std::size_t steps_in_interval(double a, double b, double dt);

/// Index m of the first control instant >= T.
std::size_t final_control_index(const AlgorithmParams& params);

/// End of the k-th of K equal steps across [a, b]; exactly b when k = K.
double step_time(double a, double b, std::size_t k, std::size_t K);

struct PartitionNode {
  IntervalVector box;
  bool nn_flag = true;
  int depth = 0;
  std::vector<PartitionNode> children;
  /// Bounds this node computed itself, if it ever verified.
  std::shared_ptr<const InclusionFunction> bounds;
  /// Whether this node has ever owned a network verification.
  bool verified = false;

  bool leaf() const { return children.empty(); }
};

struct TreeStats {
  std::size_t leaves = 0;
  int max_depth = 0;
  /// Nodes that verify the network or are flagged to (a fresh root counts as one).
  std::size_t nn_nodes = 0;
};
TreeStats tree_stats(const PartitionNode& root);

/// Leaf boxes in depth-first order.
std::vector<IntervalVector> leaf_boxes(const PartitionNode& root);

struct IntervalStats {
  std::size_t control_index = 0;
  std::size_t leaves = 0;
  std::size_t nn_calls = 0;
  std::size_t subdivisions = 0;
  int max_depth = 0;
  /// Deepest node that computed network bounds in this interval (-1 if none).
  int max_verify_depth = -1;
};

/// Time-indexed union of boxes, one entry per integration step.
struct ReachTube {
  std::vector<double> times;
  std::vector<std::vector<IntervalVector>> boxes;
  std::vector<IntervalStats> stats;

  std::size_t size() const { return times.size(); }
  IntervalVector hull(std::size_t k) const;
  /// Index of the grid time t (within 1e-9); throws std::out_of_range when off grid.
  std::size_t index_of(double t) const;
  std::size_t total_nn_calls() const;
};

/// Contraction-guided adaptive partitioning.
class ReachEngine {
 public:
  ReachEngine(std::shared_ptr<const ClosedLoopModel> model, AlgorithmParams params);

  ReachTube run(const IntervalVector& x0);
  const PartitionNode& root() const { return root_; }
  const AlgorithmParams& params() const { return params_; }

 private:
  struct Fragment;
  Fragment step(PartitionNode& node, const std::shared_ptr<const InclusionFunction>& inherited, std::size_t j,
                double t_begin, double t_end);
  Fragment integrate_leaf(PartitionNode& node, const std::shared_ptr<const InclusionFunction>& incl, std::size_t j,
                          double t_begin, double t_end);
  void subdivide(PartitionNode& node) const;
  bool take_worker();
  void release_worker();

  std::shared_ptr<const ClosedLoopModel> model_;
  AlgorithmParams params_;
  PartitionNode root_;
  struct WorkerBudget;
  std::shared_ptr<WorkerBudget> budget_;
};

ReachTube compute_reachable_set(std::shared_ptr<const ClosedLoopModel> model, const IntervalVector& root_box,
                                const AlgorithmParams& params);

/// True when the contraction probe asks for subdivision: w_gamma and w0 are
/// weighted widths at t_gamma and t_{j-1}, gamma the realised probe fraction.
bool subdivision_predicate(double w0, double w_gamma, double gamma);

}  // namespace reachmm
