#pragma once

#include "reachmm/interval.hpp"
#include "reachmm/network.hpp"

#include <memory>

namespace reachmm {

/// Interval bound propagation: pushes the box through each layer with a
/// signed-part split of the weights and endpointwise monotone activations.
IntervalVector ibp_bounds(const MLPNetwork& net, const IntervalVector& box);

/// Affine envelopes C_lo x + d_lo <= N(x) <= C_hi x + d_hi, valid for x in domain.
struct LinearBounds {
  Mat C_lo;
  Vec d_lo;
  Mat C_hi;
  Vec d_hi;
  IntervalVector domain;

  std::size_t input_dim() const { return static_cast<std::size_t>(C_lo.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(C_lo.rows()); }
};

/// Backward linear relaxation (CROWN). Pre-activation ranges come from a
/// forward IBP pass. ReLU lower slope is 1 when u >= |l| and 0 otherwise.
LinearBounds crown_bounds(const MLPNetwork& net, const IntervalVector& box);

/// Output interval of the network over a box, evaluated from a frozen tuple
/// of linear bounds.
class InclusionFunction {
 public:
  explicit InclusionFunction(LinearBounds lb);

  struct Output {
    Vec lo;
    Vec hi;
  };

  /// For a <= b returns ([C_lo]^+ a + [C_lo]^- b + d_lo, [C_hi]^+ b + [C_hi]^- a + d_hi).
  /// For b <= a the roles of a and b swap, so the result bounds the box [b, a].
  /// Throws DomainError when the spanned box is not inside the domain and
  /// std::invalid_argument when (a, b) is a mixed-order pair.
  Output operator()(const Vec& a, const Vec& b) const;

  /// Same formula without the domain check; used for derivative estimates
  /// at points on the domain boundary.
  Output evaluate_unchecked(const Vec& a, const Vec& b) const;

  const LinearBounds& bounds() const { return lb_; }
  const IntervalVector& domain() const { return lb_.domain; }
  std::size_t input_dim() const { return lb_.input_dim(); }
  std::size_t output_dim() const { return lb_.output_dim(); }

 private:
  LinearBounds lb_;
  Mat lo_pos_, lo_neg_, hi_pos_, hi_neg_;
};

InclusionFunction make_inclusion(LinearBounds lb);

}  // namespace reachmm
