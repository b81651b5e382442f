#pragma once

#include "reachmm/bounds.hpp"
#include "reachmm/interval.hpp"
#include "reachmm/network.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reachmm {

/// x' = f(x, u, w)
using VectorField = std::function<Vec(const Vec& x, const Vec& u, const Vec& w)>;

/// Component i of a decomposition function d(x, xh, u, uh, w, wh).
using DecompositionFn = std::function<double(std::size_t i, const Vec& x, const Vec& xh, const Vec& u,
                                             const Vec& uh, const Vec& w, const Vec& wh)>;

/// Sound enclosure of f_i over a box of states, inputs and disturbances.
using IntervalExtension = std::function<Interval(std::size_t i, std::span<const Interval> x,
                                                 std::span<const Interval> u, std::span<const Interval> w)>;

/// Open-loop plant together with a decomposition function for it.
class OpenLoopSystem {
 public:
  OpenLoopSystem(std::string name, std::size_t n, std::size_t p, std::size_t q, VectorField f, DecompositionFn d);

  const std::string& name() const { return name_; }
  std::size_t state_dim() const { return n_; }
  std::size_t input_dim() const { return p_; }
  std::size_t disturbance_dim() const { return q_; }

  Vec f(const Vec& x, const Vec& u, const Vec& w) const;
  Vec d(const Vec& x, const Vec& xh, const Vec& u, const Vec& uh, const Vec& w, const Vec& wh) const;
  double d(std::size_t i, const Vec& x, const Vec& xh, const Vec& u, const Vec& uh, const Vec& w,
           const Vec& wh) const {
    return d_(i, x, xh, u, uh, w, wh);
  }

 private:
  std::string name_;
  std::size_t n_, p_, q_;
  VectorField f_;
  DecompositionFn d_;
};

/// Decomposition built from an interval extension: for an ordered argument
/// d_i is the lower end of the enclosure of f_i over the box with coordinate i
/// pinned to x_i; for a reversed argument it is the upper end. The orientation
/// is read from the state pair, falling back to the input and then the
/// disturbance pair when the state pair is degenerate. A fully degenerate
/// argument returns f exactly.
DecompositionFn build_tight_decomposition(VectorField f, IntervalExtension ext, std::size_t n, std::size_t p,
                                          std::size_t q);

/// Sign-split decomposition of f(x, u, w) = A x + B u + E w (E may be empty).
DecompositionFn linear_decomposition(Mat a, Mat b, Mat e = Mat());
VectorField linear_field(Mat a, Mat b, Mat e = Mat());

/// (d(lo, hi, u_lo, u_hi, w_lo, w_hi), d(hi, lo, u_hi, u_lo, w_hi, w_lo)) stacked into R^{2n}.
Vec open_embedding_field(const OpenLoopSystem& sys, const EmbeddingState& state, const IntervalVector& u,
                         const IntervalVector& w);

/// How the closed-loop embedding bounds the held control input.
enum class ControlBounds {
  Faces,  ///< per-axis face bounds at t_j (tightest)
  Box,    ///< bounds over the whole box at t_j for every axis
};
ControlBounds parse_control_bounds(std::string_view name);
std::string_view to_string(ControlBounds c);

/// Closed-loop embedding for one partition over one control interval. The
/// network inclusion function is frozen for the interval; per-axis face
/// bounds on the control are cached when the interval begins.
class ClosedLoopEmbedding {
 public:
  ClosedLoopEmbedding(std::shared_ptr<const OpenLoopSystem> sys, std::shared_ptr<const MLPNetwork> net,
                      IntervalVector disturbance, ControlBounds mode = ControlBounds::Faces);

  /// Use bounds computed by an ancestor partition.
  void inherit(std::shared_ptr<const InclusionFunction> bounds);

  /// Starts control interval j from box_at_tj. With reverify the network
  /// bounds are recomputed on the box; otherwise the current bounds must
  /// cover it (DomainError if not).
  void refresh_control(const IntervalVector& box_at_tj, std::size_t j, bool reverify);

  /// E^c(lo, hi): lower half uses the lower-face control bounds, upper half
  /// the upper-face ones; a reversed state swaps the roles.
  Vec closed_decomposition(const EmbeddingState& state, std::size_t j) const;
  EmbeddingState euler_step(const EmbeddingState& state, double dt, std::size_t j) const;

  const OpenLoopSystem& system() const { return *sys_; }
  const std::shared_ptr<const InclusionFunction>& inclusion() const { return incl_; }
  const IntervalVector& disturbance() const { return w_; }
  std::optional<std::size_t> control_index() const { return j_; }
  std::size_t nn_calls() const { return nn_calls_; }

  /// Control bounds over the face x_i = lo_i (eta) and x_i = hi_i (nu).
  const InclusionFunction::Output& eta(std::size_t i) const { return eta_.at(i); }
  const InclusionFunction::Output& nu(std::size_t i) const { return nu_.at(i); }

 private:
  std::shared_ptr<const OpenLoopSystem> sys_;
  std::shared_ptr<const MLPNetwork> net_;
  IntervalVector w_;
  ControlBounds mode_;
  std::shared_ptr<const InclusionFunction> incl_;
  std::vector<InclusionFunction::Output> eta_;
  std::vector<InclusionFunction::Output> nu_;
  std::optional<std::size_t> j_;
  std::size_t nn_calls_ = 0;
};

/// Face-wise control bounds of a state pair under an inclusion function,
/// evaluated without domain checks.
struct FaceBounds {
  std::vector<InclusionFunction::Output> eta;
  std::vector<InclusionFunction::Output> nu;
};
FaceBounds face_bounds(const InclusionFunction& incl, const Vec& lo, const Vec& hi);

/// Embedding field with the control bounds re-evaluated on the faces of the
/// current state (continuously applied network). This is the map whose
/// Jacobian the contraction estimates are taken of.
Vec feedback_embedding_field(const OpenLoopSystem& sys, const InclusionFunction& incl, const IntervalVector& w,
                             const EmbeddingState& state);

/// Tighter one-step embedding for x+ = A x + B N(x) given affine network bounds.
class DiscreteLTIEmbedding {
 public:
  DiscreteLTIEmbedding(Mat a, Mat b);

  void set_bounds(LinearBounds lb);
  const Mat& m_lo() const { return m_lo_; }
  const Mat& m_hi() const { return m_hi_; }
  const Mat& a() const { return a_; }
  const Mat& b() const { return b_; }

  /// ([M_lo]^+ lo + [M_lo]^- hi + B^+ d_lo + B^- d_hi, [M_hi]^- lo + [M_hi]^+ hi + B^- d_lo + B^+ d_hi).
  EmbeddingState step(const EmbeddingState& state) const;

 private:
  Mat a_, b_, b_pos_, b_neg_;
  std::optional<LinearBounds> lb_;
  Mat m_lo_, m_hi_;
};

}  // namespace reachmm
