#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace reachmm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Axis-aligned box [lo, hi] in R^n with finite endpoints and lo <= hi.
class IntervalVector {
 public:
  IntervalVector() = default;
  /// Throws std::invalid_argument on size mismatch, non-finite entries or lo > hi.
  IntervalVector(Vec lo, Vec hi);

  static IntervalVector point(const Vec& x) { return {x, x}; }

  std::size_t dim() const { return static_cast<std::size_t>(lo_.size()); }
  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }
  double lo(std::size_t i) const { return lo_(static_cast<Eigen::Index>(i)); }
  double hi(std::size_t i) const { return hi_(static_cast<Eigen::Index>(i)); }

  Vec width() const { return hi_ - lo_; }
  Vec center() const { return lo_ + 0.5 * (hi_ - lo_); }
  double volume() const { return width().prod(); }

  bool contains(const Vec& x, double slack = 0.0) const;
  bool contains(const IntervalVector& other, double slack = 0.0) const;

  friend bool operator==(const IntervalVector& a, const IntervalVector& b);

 private:
  Vec lo_;
  Vec hi_;
};

/// Point (lo, hi) of R^{2n} on which embedding systems are evaluated.
/// Either ordering is legal; a pair that is neither is "mixed".
struct EmbeddingState {
  Vec lo;
  Vec hi;

  enum class Order { Ordered, Reversed, Degenerate, Mixed };

  EmbeddingState() = default;
  EmbeddingState(Vec l, Vec h);
  explicit EmbeddingState(const IntervalVector& box) : lo(box.lo()), hi(box.hi()) {}

  std::size_t dim() const { return static_cast<std::size_t>(lo.size()); }
  Order order() const;
  /// lo <= hi componentwise (includes degenerate).
  bool ordered() const;
  /// Throws NumericFailure unless ordered.
  IntervalVector box() const;
  Vec stacked() const;
  static EmbeddingState from_stacked(const Vec& z);
};

EmbeddingState::Order pair_order(const Vec& a, const Vec& b);

/// Per-axis width tolerance; entries in [0, inf].
class ToleranceVector {
 public:
  ToleranceVector() = default;
  explicit ToleranceVector(Vec eps);
  static ToleranceVector uniform(std::size_t n, double value);

  std::size_t dim() const { return static_cast<std::size_t>(eps_.size()); }
  const Vec& values() const { return eps_; }
  double operator[](std::size_t i) const { return eps_(static_cast<Eigen::Index>(i)); }

 private:
  Vec eps_;
};

/// Scalar closed interval used by interval extensions of vector fields.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double l, double h) : lo(l), hi(h) {}
  explicit Interval(double x) : lo(x), hi(x) {}

  bool valid() const { return lo <= hi; }
  double width() const { return hi - lo; }
};

Interval operator+(const Interval& a, const Interval& b);
Interval operator-(const Interval& a, const Interval& b);
Interval operator-(const Interval& a);
Interval operator*(const Interval& a, const Interval& b);
Interval operator*(double s, const Interval& a);
Interval isin(const Interval& a);
Interval icos(const Interval& a);
Interval iatan(const Interval& a);

/// max_i |x_i| / eps_i. eps_i = inf masks the term; eps_i = 0 yields inf unless x_i = 0.
double weighted_inf_norm(const Vec& x, const ToleranceVector& eps);

/// mu_inf(A) = max_i ( A_ii + sum_{j != i} |A_ij| ).
double matrix_measure_inf(const Mat& a);

/// Induced infinity norm (max absolute row sum).
double induced_inf_norm(const Mat& a);

Mat positive_part(const Mat& a);
Mat negative_part(const Mat& a);

/// Bisects every axis at its midpoint. Axis 0 is the most significant bit of
/// the child index, so children come out in lexicographic order.
std::vector<IntervalVector> uniform_divide(const IntervalVector& box);

/// x with component i replaced by xhat_i.
Vec face_replace(const Vec& x, const Vec& xhat, std::size_t i);

IntervalVector interval_hull(std::span<const IntervalVector> boxes);

}  // namespace reachmm
