#include "reachmm/interval.hpp"

#include "reachmm/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace reachmm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

}  // namespace

IntervalVector::IntervalVector(Vec lo, Vec hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size()) {
    throw std::invalid_argument(
        fmt::format("IntervalVector: lo has {} entries but hi has {}", lo_.size(), hi_.size()));
  }
  for (Eigen::Index i = 0; i < lo_.size(); ++i) {
    if (!std::isfinite(lo_(i)) || !std::isfinite(hi_(i))) {
      throw std::invalid_argument(fmt::format("IntervalVector: non-finite bound on axis {}", i));
    }
    if (lo_(i) > hi_(i)) {
      throw std::invalid_argument(
          fmt::format("IntervalVector: lo > hi on axis {} ({} > {})", i, lo_(i), hi_(i)));
    }
  }
}

bool IntervalVector::contains(const Vec& x, double slack) const {
  if (x.size() != lo_.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) >= lo_(i) - slack && x(i) <= hi_(i) + slack)) return false;
  }
  return true;
}

bool IntervalVector::contains(const IntervalVector& other, double slack) const {
  if (other.dim() != dim()) return false;
  for (Eigen::Index i = 0; i < lo_.size(); ++i) {
    if (other.lo_(i) < lo_(i) - slack || other.hi_(i) > hi_(i) + slack) return false;
  }
  return true;
}

bool operator==(const IntervalVector& a, const IntervalVector& b) {
  return a.dim() == b.dim() && a.lo_ == b.lo_ && a.hi_ == b.hi_;
}

EmbeddingState::EmbeddingState(Vec l, Vec h) : lo(std::move(l)), hi(std::move(h)) {
  if (lo.size() != hi.size()) {
    throw std::invalid_argument("EmbeddingState: halves differ in length");
  }
}

EmbeddingState::Order pair_order(const Vec& a, const Vec& b) {
  bool le = true;
  bool ge = true;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::isnan(a(i)) || std::isnan(b(i))) return EmbeddingState::Order::Mixed;
    if (a(i) > b(i)) le = false;
    if (a(i) < b(i)) ge = false;
  }
  if (le && ge) return EmbeddingState::Order::Degenerate;
  if (le) return EmbeddingState::Order::Ordered;
  if (ge) return EmbeddingState::Order::Reversed;
  return EmbeddingState::Order::Mixed;
}

EmbeddingState::Order EmbeddingState::order() const { return pair_order(lo, hi); }

bool EmbeddingState::ordered() const {
  const auto o = order();
  return o == Order::Ordered || o == Order::Degenerate;
}

IntervalVector EmbeddingState::box() const {
  if (!ordered()) {
    throw NumericFailure("embedding state is not ordered (lo > hi on some axis)");
  }
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(lo(i)) || !std::isfinite(hi(i))) {
      throw NumericFailure(fmt::format("embedding state diverged on axis {}", i));
    }
  }
  return {lo, hi};
}

Vec EmbeddingState::stacked() const {
  Vec z(lo.size() + hi.size());
  z << lo, hi;
  return z;
}

EmbeddingState EmbeddingState::from_stacked(const Vec& z) {
  const Eigen::Index n = z.size() / 2;
  return {z.head(n), z.tail(n)};
}

ToleranceVector::ToleranceVector(Vec eps) : eps_(std::move(eps)) {
  for (Eigen::Index i = 0; i < eps_.size(); ++i) {
    if (std::isnan(eps_(i)) || eps_(i) < 0.0) {
      throw std::invalid_argument(
          fmt::format("ToleranceVector: entry {} must lie in [0, inf], got {}", i, eps_(i)));
    }
  }
}

ToleranceVector ToleranceVector::uniform(std::size_t n, double value) {
  return ToleranceVector(Vec::Constant(idx(n), value));
}

Interval operator+(const Interval& a, const Interval& b) { return {a.lo + b.lo, a.hi + b.hi}; }
Interval operator-(const Interval& a, const Interval& b) { return {a.lo - b.hi, a.hi - b.lo}; }
Interval operator-(const Interval& a) { return {-a.hi, -a.lo}; }

Interval operator*(const Interval& a, const Interval& b) {
  const double p1 = a.lo * b.lo;
  const double p2 = a.lo * b.hi;
  const double p3 = a.hi * b.lo;
  const double p4 = a.hi * b.hi;
  return {std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4})};
}

Interval operator*(double s, const Interval& a) {
  return s >= 0.0 ? Interval{s * a.lo, s * a.hi} : Interval{s * a.hi, s * a.lo};
}

Interval icos(const Interval& a) {
  constexpr double pi = std::numbers::pi;
  if (a.hi - a.lo >= 2.0 * pi) return {-1.0, 1.0};
  const double ca = std::cos(a.lo);
  const double cb = std::cos(a.hi);
  double lo = std::min(ca, cb);
  double hi = std::max(ca, cb);
  // maxima at 2k*pi, minima at (2k+1)*pi
  if (2.0 * pi * std::ceil(a.lo / (2.0 * pi)) <= a.hi) hi = 1.0;
  if (2.0 * pi * std::ceil((a.lo - pi) / (2.0 * pi)) + pi <= a.hi) lo = -1.0;
  return {lo, hi};
}

Interval isin(const Interval& a) {
  constexpr double half_pi = std::numbers::pi / 2.0;
  if (a.lo == a.hi) return Interval(std::sin(a.lo));
  return icos(Interval{a.lo - half_pi, a.hi - half_pi});
}

Interval iatan(const Interval& a) { return {std::atan(a.lo), std::atan(a.hi)}; }

double weighted_inf_norm(const Vec& x, const ToleranceVector& eps) {
  if (static_cast<std::size_t>(x.size()) != eps.dim()) {
    throw std::invalid_argument("weighted_inf_norm: dimension mismatch");
  }
  double result = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double mag = std::abs(x(i));
    const double e = eps.values()(i);
    double term = 0.0;
    if (std::isinf(e)) {
      term = 0.0;
    } else if (e == 0.0) {
      term = mag > 0.0 ? kInf : 0.0;
    } else {
      term = mag / e;
    }
    result = std::max(result, term);
  }
  return result;
}

double matrix_measure_inf(const Mat& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("matrix_measure_inf: matrix not square");
  double result = -kInf;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double row = a(i, i);
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (j != i) row += std::abs(a(i, j));
    }
    result = std::max(result, row);
  }
  return a.rows() == 0 ? 0.0 : result;
}

double induced_inf_norm(const Mat& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  return a.cwiseAbs().rowwise().sum().maxCoeff();
}

Mat positive_part(const Mat& a) { return a.cwiseMax(0.0); }
Mat negative_part(const Mat& a) { return a.cwiseMin(0.0); }

std::vector<IntervalVector> uniform_divide(const IntervalVector& box) {
  const std::size_t n = box.dim();
  if (n >= 8 * sizeof(std::size_t) - 1) throw std::invalid_argument("uniform_divide: dimension too large");
  const Vec mid = box.lo() + box.width() / 2.0;
  const std::size_t count = std::size_t{1} << n;
  std::vector<IntervalVector> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Vec lo(box.lo());
    Vec hi(box.hi());
    for (std::size_t i = 0; i < n; ++i) {
      const bool upper = (k >> (n - 1 - i)) & 1U;
      if (upper) {
        lo(idx(i)) = mid(idx(i));
      } else {
        hi(idx(i)) = mid(idx(i));
      }
    }
    out.emplace_back(std::move(lo), std::move(hi));
  }
  return out;
}

Vec face_replace(const Vec& x, const Vec& xhat, std::size_t i) {
  if (x.size() != xhat.size()) throw std::invalid_argument("face_replace: dimension mismatch");
  if (i >= static_cast<std::size_t>(x.size())) {
    throw std::out_of_range(fmt::format("face_replace: index {} out of range for n = {}", i, x.size()));
  }
  Vec out = x;
  out(idx(i)) = xhat(idx(i));
  return out;
}

IntervalVector interval_hull(std::span<const IntervalVector> boxes) {
  if (boxes.empty()) throw std::invalid_argument("interval_hull: empty list");
  Vec lo = boxes.front().lo();
  Vec hi = boxes.front().hi();
  for (const auto& b : boxes.subspan(1)) {
    if (b.dim() != boxes.front().dim()) throw std::invalid_argument("interval_hull: dimension mismatch");
    lo = lo.cwiseMin(b.lo());
    hi = hi.cwiseMax(b.hi());
  }
  return {std::move(lo), std::move(hi)};
}

}  // namespace reachmm
