#include "reachmm/partition.hpp"

#include "reachmm/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>
#include <thread>

namespace reachmm {

namespace {

constexpr double kTimeTol = 1e-9;

class EulerPropagator : public IntervalPropagator {
 public:
  EulerPropagator(ClosedLoopEmbedding emb, std::size_t j, double dt) : emb_(std::move(emb)), j_(j), dt_(dt) {}
  EmbeddingState advance(const EmbeddingState& state) override { return emb_.euler_step(state, dt_, j_); }

 private:
  ClosedLoopEmbedding emb_;
  std::size_t j_;
  double dt_;
};

class LTIPropagator : public IntervalPropagator {
 public:
  explicit LTIPropagator(DiscreteLTIEmbedding emb) : emb_(std::move(emb)) {}
  EmbeddingState advance(const EmbeddingState& state) override { return emb_.step(state); }

 private:
  DiscreteLTIEmbedding emb_;
};

double weighted_width(const IntervalVector& box, const ToleranceVector& eps) {
  return weighted_inf_norm(box.width(), eps);
}

}  // namespace

ContinuousClosedLoop::ContinuousClosedLoop(std::shared_ptr<const OpenLoopSystem> sys,
                                           std::shared_ptr<const MLPNetwork> net, IntervalVector disturbance,
                                           ControlBounds mode)
    : sys_(std::move(sys)), net_(std::move(net)), w_(std::move(disturbance)), mode_(mode) {
  // Validates dimensions.
  ClosedLoopEmbedding probe(sys_, net_, w_, mode_);
}

std::shared_ptr<const InclusionFunction> ContinuousClosedLoop::verify(const IntervalVector& box) const {
  return std::make_shared<const InclusionFunction>(make_inclusion(crown_bounds(*net_, box)));
}

std::unique_ptr<IntervalPropagator> ContinuousClosedLoop::begin_interval(
    std::shared_ptr<const InclusionFunction> bounds, const IntervalVector& box, std::size_t j, double dt) const {
  ClosedLoopEmbedding emb(sys_, net_, w_, mode_);
  emb.inherit(std::move(bounds));
  emb.refresh_control(box, j, false);
  return std::make_unique<EulerPropagator>(std::move(emb), j, dt);
}

Vec ContinuousClosedLoop::simulate_step(const Vec& x, const Vec& u, const Vec& w, double dt) const {
  return x + dt * sys_->f(x, u, w);
}

Vec DiscreteLTIClosedLoop::simulate_step(const Vec& x, const Vec& u, const Vec&, double) const {
  return a_ * x + b_ * u;
}

DiscreteLTIClosedLoop::DiscreteLTIClosedLoop(Mat a, Mat b, std::shared_ptr<const MLPNetwork> net)
    : a_(std::move(a)), b_(std::move(b)), net_(std::move(net)) {
  if (!net_) throw std::invalid_argument("DiscreteLTIClosedLoop: null network");
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows()) {
    throw std::invalid_argument("DiscreteLTIClosedLoop: A must be n x n and B n x p");
  }
  if (net_->input_dim() != static_cast<std::size_t>(a_.rows()) ||
      net_->output_dim() != static_cast<std::size_t>(b_.cols())) {
    throw std::invalid_argument(fmt::format("network is {}->{} but system has n = {}, p = {}", net_->input_dim(),
                                            net_->output_dim(), a_.rows(), b_.cols()));
  }
}

std::shared_ptr<const InclusionFunction> DiscreteLTIClosedLoop::verify(const IntervalVector& box) const {
  return std::make_shared<const InclusionFunction>(make_inclusion(crown_bounds(*net_, box)));
}

std::unique_ptr<IntervalPropagator> DiscreteLTIClosedLoop::begin_interval(
    std::shared_ptr<const InclusionFunction> bounds, const IntervalVector& box, std::size_t, double) const {
  if (!bounds) throw std::logic_error("DiscreteLTIClosedLoop: no network bounds");
  if (!bounds->domain().contains(box)) {
    throw DomainError("query box not contained in the domain of the inherited network bounds");
  }
  DiscreteLTIEmbedding emb(a_, b_);
  emb.set_bounds(bounds->bounds());
  return std::make_unique<LTIPropagator>(std::move(emb));
}

PartitionMode parse_partition_mode(std::string_view name) {
  if (name == "adaptive") return PartitionMode::Adaptive;
  if (name == "non-adaptive-uniform" || name == "non-adaptive") return PartitionMode::NonAdaptiveUniform;
  throw std::invalid_argument(
      fmt::format("unknown mode '{}' (expected adaptive or non-adaptive-uniform)", name));
}

std::string_view to_string(PartitionMode m) {
  return m == PartitionMode::Adaptive ? "adaptive" : "non-adaptive-uniform";
}

std::vector<double> uniform_instants(double t0, double period, double T) {
  if (!(period > 0.0) || !std::isfinite(period)) throw std::invalid_argument("control period must be positive");
  if (!(T >= t0)) throw std::invalid_argument("final time T precedes t0");
  std::vector<double> out{t0};
  for (std::size_t k = 1; out.back() < T - kTimeTol; ++k) out.push_back(t0 + static_cast<double>(k) * period);
  if (out.size() == 1) out.push_back(t0 + period);
  return out;
}

std::size_t steps_in_interval(double a, double b, double dt) {
  const double ratio = (b - a) / dt;
  const double k = std::round(ratio);
  if (k < 1.0 || std::abs(k * dt - (b - a)) > kTimeTol) {
    throw std::invalid_argument(
        fmt::format("integration step {} does not divide the control interval [{}, {}]", dt, a, b));
  }
  return static_cast<std::size_t>(k);
}

void AlgorithmParams::validate(std::size_t n, bool discrete_time) const {
  if (eps.dim() != n) {
    throw std::invalid_argument(fmt::format("eps has {} entries, state dimension is {}", eps.dim(), n));
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument(fmt::format("gamma = {} not in (0, 1]", gamma));
  if (D_p < 0 || D_N < 0) throw std::invalid_argument("D_p and D_N must be non-negative");
  if (control_instants.size() < 2) throw std::invalid_argument("need at least two control instants");
  for (std::size_t k = 1; k < control_instants.size(); ++k) {
    if (!(control_instants[k] > control_instants[k - 1])) {
      throw std::invalid_argument("control instants must be strictly increasing");
    }
  }
  if (!std::isfinite(T) || T < control_instants.front()) throw std::invalid_argument("T must not precede t0");
  if (control_instants.back() < T - kTimeTol) throw std::invalid_argument("control instants end before T");
  if (!discrete_time) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
    for (std::size_t k = 1; k < control_instants.size(); ++k) {
      steps_in_interval(control_instants[k - 1], control_instants[k], dt);
    }
  }
}

std::size_t final_control_index(const AlgorithmParams& params) {
  const auto& ts = params.control_instants;
  std::size_t m = 1;
  while (m + 1 < ts.size() && ts[m] < params.T - kTimeTol) ++m;
  return m;
}

double step_time(double a, double b, std::size_t k, std::size_t K) {
  return k == K ? b : a + static_cast<double>(k) * (b - a) / static_cast<double>(K);
}

bool subdivision_predicate(double w0, double w_gamma, double gamma) {
  if (w0 == 0.0) return false;
  if (std::isinf(w0) || std::isinf(w_gamma)) return true;
  const double c = w_gamma / w0;
  return std::pow(c, 1.0 / gamma) * w0 > 1.0;
}

TreeStats tree_stats(const PartitionNode& root) {
  TreeStats s;
  s.max_depth = root.depth;
  if (root.verified || root.nn_flag) ++s.nn_nodes;
  if (root.leaf()) {
    s.leaves = 1;
    return s;
  }
  for (const auto& c : root.children) {
    const auto cs = tree_stats(c);
    s.leaves += cs.leaves;
    s.max_depth = std::max(s.max_depth, cs.max_depth);
    s.nn_nodes += cs.nn_nodes;
  }
  return s;
}

std::vector<IntervalVector> leaf_boxes(const PartitionNode& root) {
  if (root.leaf()) return {root.box};
  std::vector<IntervalVector> out;
  for (const auto& c : root.children) {
    auto sub = leaf_boxes(c);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

IntervalVector ReachTube::hull(std::size_t k) const { return interval_hull(boxes.at(k)); }

std::size_t ReachTube::index_of(double t) const {
  const auto it = std::lower_bound(times.begin(), times.end(), t - kTimeTol);
  if (it == times.end() || std::abs(*it - t) > kTimeTol) {
    throw std::out_of_range(fmt::format("time {} is not on the tube grid", t));
  }
  return static_cast<std::size_t>(it - times.begin());
}

std::size_t ReachTube::total_nn_calls() const {
  std::size_t n = 0;
  for (const auto& s : stats) n += s.nn_calls;
  return n;
}

struct ReachEngine::WorkerBudget {
  std::atomic<int> available{0};
};

struct ReachEngine::Fragment {
  std::vector<std::vector<IntervalVector>> boxes;
  std::size_t nn_calls = 0;
  std::size_t subdivisions = 0;
  int max_verify_depth = -1;

  void merge(Fragment&& other) {
    if (boxes.empty()) {
      boxes = std::move(other.boxes);
    } else {
      for (std::size_t k = 0; k < boxes.size(); ++k) {
        auto& src = other.boxes[k];
        boxes[k].insert(boxes[k].end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
      }
    }
    nn_calls += other.nn_calls;
    subdivisions += other.subdivisions;
    max_verify_depth = std::max(max_verify_depth, other.max_verify_depth);
  }
};

ReachEngine::ReachEngine(std::shared_ptr<const ClosedLoopModel> model, AlgorithmParams params)
    : model_(std::move(model)), params_(std::move(params)), budget_(std::make_shared<WorkerBudget>()) {
  if (!model_) throw std::invalid_argument("ReachEngine: null model");
  params_.validate(model_->state_dim(), model_->discrete_time());
  unsigned threads = params_.threads;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  budget_->available = static_cast<int>(threads) - 1;
}

bool ReachEngine::take_worker() {
  int cur = budget_->available.load();
  while (cur > 0) {
    if (budget_->available.compare_exchange_weak(cur, cur - 1)) return true;
  }
  return false;
}

void ReachEngine::release_worker() { ++budget_->available; }

void ReachEngine::subdivide(PartitionNode& node) const {
  const bool child_flag = node.depth < params_.D_N;
  for (auto& box : uniform_divide(node.box)) {
    PartitionNode child;
    child.box = std::move(box);
    child.depth = node.depth + 1;
    child.nn_flag = child_flag;
    node.children.push_back(std::move(child));
  }
  node.nn_flag = node.nn_flag && (node.depth + 1 > params_.D_N);
}

ReachEngine::Fragment ReachEngine::integrate_leaf(PartitionNode& node,
                                                  const std::shared_ptr<const InclusionFunction>& incl,
                                                  std::size_t j, double t_begin, double t_end) {
  const std::size_t K = model_->discrete_time() ? 1 : steps_in_interval(t_begin, t_end, params_.dt);
  auto prop = model_->begin_interval(incl, node.box, j, params_.dt);
  Fragment frag;
  frag.boxes.reserve(K);
  EmbeddingState state(node.box);

  const bool probe = params_.mode == PartitionMode::Adaptive && node.depth < params_.D_p;
  const std::size_t k_probe =
      probe ? std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(params_.gamma * static_cast<double>(K) - 1e-9)),
                                      1, K)
            : 0;
  for (std::size_t k = 1; k <= K; ++k) {
    state = prop->advance(state);
    if (!state.ordered()) {
      throw NumericFailure(fmt::format("embedding state became unordered at step {} of control interval {}", k, j));
    }
    frag.boxes.push_back({state.box()});
    if (k == k_probe) {
      const double w0 = weighted_width(node.box, params_.eps);
      const double wg = weighted_width(frag.boxes.back().front(), params_.eps);
      const double g_eff = static_cast<double>(k_probe) / static_cast<double>(K);
      if (subdivision_predicate(w0, wg, g_eff)) {
        frag.boxes.clear();
        frag.subdivisions = 1;
        return frag;
      }
    }
  }
  node.box = frag.boxes.back().front();
  return frag;
}

ReachEngine::Fragment ReachEngine::step(PartitionNode& node, const std::shared_ptr<const InclusionFunction>& inherited,
                                        std::size_t j, double t_begin, double t_end) {
  Fragment frag;
  std::shared_ptr<const InclusionFunction> incl = inherited;
  if (node.nn_flag) {
    node.bounds = model_->verify(node.box);
    node.verified = true;
    incl = node.bounds;
    frag.nn_calls = 1;
    frag.max_verify_depth = node.depth;
  }
  if (node.leaf()) {
    if (!incl) throw std::logic_error("leaf partition has no network bounds to evaluate");
    auto leaf = integrate_leaf(node, incl, j, t_begin, t_end);
    if (leaf.subdivisions == 0) {
      frag.merge(std::move(leaf));
      return frag;
    }
    // Back to t_{j-1} with 2^n children; the bounds just computed on this
    // box are still the ones the children inherit.
    subdivide(node);
    frag.subdivisions += 1;
  }

  auto& children = node.children;
  std::vector<Fragment> results(children.size());
  std::vector<std::future<Fragment>> pending(children.size());
  for (std::size_t c = 0; c < children.size(); ++c) {
    if (c + 1 < children.size() && take_worker()) {
      pending[c] = std::async(std::launch::async, [this, &children, &incl, c, j, t_begin, t_end] {
        struct Release {
          ReachEngine* e;
          ~Release() { e->release_worker(); }
        } release{this};
        return step(children[c], incl, j, t_begin, t_end);
      });
    } else {
      try {
        results[c] = step(children[c], incl, j, t_begin, t_end);
      } catch (...) {
        for (auto& f : pending) {
          if (f.valid()) f.wait();
        }
        throw;
      }
    }
  }
  std::exception_ptr error;
  for (std::size_t c = 0; c < children.size(); ++c) {
    if (!pending[c].valid()) continue;
    try {
      results[c] = pending[c].get();
    } catch (...) {
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  std::vector<IntervalVector> finals;
  finals.reserve(children.size());
  for (std::size_t c = 0; c < children.size(); ++c) {
    finals.push_back(children[c].box);
    frag.merge(std::move(results[c]));
  }
  node.box = interval_hull(finals);
  return frag;
}

ReachTube ReachEngine::run(const IntervalVector& x0) {
  if (x0.dim() != model_->state_dim()) {
    throw std::invalid_argument(
        fmt::format("initial set has dimension {}, system has {}", x0.dim(), model_->state_dim()));
  }
  root_ = PartitionNode{};
  root_.box = x0;
  if (params_.mode == PartitionMode::NonAdaptiveUniform) {
    auto prepartition = [this](auto&& self, PartitionNode& node) -> void {
      if (node.depth >= params_.D_p) return;
      subdivide(node);
      for (auto& c : node.children) self(self, c);
    };
    prepartition(prepartition, root_);
  }

  const auto& ts = params_.control_instants;
  const std::size_t m = final_control_index(params_);

  ReachTube tube;
  tube.times.push_back(ts.front());
  tube.boxes.push_back(leaf_boxes(root_));
  for (std::size_t j = 1; j <= m; ++j) {
    auto frag = step(root_, nullptr, j, ts[j - 1], ts[j]);
    const std::size_t K = frag.boxes.size();
    for (std::size_t k = 1; k <= K; ++k) {
      const double t = step_time(ts[j - 1], ts[j], k, K);
      if (t > params_.T + kTimeTol) break;
      tube.times.push_back(t);
      tube.boxes.push_back(std::move(frag.boxes[k - 1]));
    }
    const auto st = tree_stats(root_);
    IntervalStats is;
    is.control_index = j;
    is.leaves = st.leaves;
    is.nn_calls = frag.nn_calls;
    is.subdivisions = frag.subdivisions;
    is.max_depth = st.max_depth;
    is.max_verify_depth = frag.max_verify_depth;
    tube.stats.push_back(is);
  }
  return tube;
}

ReachTube compute_reachable_set(std::shared_ptr<const ClosedLoopModel> model, const IntervalVector& root_box,
                                const AlgorithmParams& params) {
  ReachEngine engine(std::move(model), params);
  return engine.run(root_box);
}

}  // namespace reachmm
