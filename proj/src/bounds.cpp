#include "reachmm/bounds.hpp"

#include "reachmm/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace reachmm {

namespace {

void check_input(const MLPNetwork& net, const IntervalVector& box) {
  if (box.dim() != net.input_dim()) {
    throw std::invalid_argument(
        fmt::format("box has dimension {}, network expects {}", box.dim(), net.input_dim()));
  }
}

// Affine image of [lo, hi] under W x + b.
void affine_interval(const Mat& w, const Vec& b, const Vec& lo, const Vec& hi, Vec& out_lo, Vec& out_hi) {
  const Mat wp = positive_part(w);
  const Mat wn = negative_part(w);
  out_lo = wp * lo + wn * hi + b;
  out_hi = wp * hi + wn * lo + b;
}

double tanh_slope(double z) {
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

// Linear relaxation s_lo z + t_lo <= sigma(z) <= s_hi z + t_hi on [l, u].
struct Relaxation {
  Vec s_lo, t_lo, s_hi, t_hi;
};

Relaxation relax(Activation act, const Vec& l, const Vec& u) {
  const Eigen::Index m = l.size();
  Relaxation r{Vec::Ones(m), Vec::Zero(m), Vec::Ones(m), Vec::Zero(m)};
  if (act == Activation::Identity) return r;
  for (Eigen::Index k = 0; k < m; ++k) {
    const double lk = l(k);
    const double uk = u(k);
    if (act == Activation::Relu) {
      if (lk >= 0.0) continue;
      if (uk <= 0.0) {
        r.s_lo(k) = r.s_hi(k) = 0.0;
        continue;
      }
      const double s = uk / (uk - lk);
      r.s_hi(k) = s;
      r.t_hi(k) = -lk * s;
      r.s_lo(k) = uk >= -lk ? 1.0 : 0.0;
      continue;
    }
    // tanh: convex on (-inf, 0], concave on [0, inf)
    const double tl = std::tanh(lk);
    const double tu = std::tanh(uk);
    if (uk - lk <= 0.0) {
      const double s = tanh_slope(lk);
      r.s_lo(k) = r.s_hi(k) = s;
      r.t_lo(k) = r.t_hi(k) = tl - s * lk;
      continue;
    }
    const double chord = (tu - tl) / (uk - lk);
    const double mid = 0.5 * (lk + uk);
    const double tangent = tanh_slope(mid);
    if (uk <= 0.0) {
      r.s_hi(k) = chord;
      r.t_hi(k) = tl - chord * lk;
      r.s_lo(k) = tangent;
      r.t_lo(k) = std::tanh(mid) - tangent * mid;
    } else if (lk >= 0.0) {
      r.s_lo(k) = chord;
      r.t_lo(k) = tl - chord * lk;
      r.s_hi(k) = tangent;
      r.t_hi(k) = std::tanh(mid) - tangent * mid;
    } else {
      // tanh(z) - s z is nondecreasing on [l, u] for s below the smallest slope
      const double s = std::min(tanh_slope(lk), tanh_slope(uk));
      r.s_lo(k) = r.s_hi(k) = s;
      r.t_lo(k) = tl - s * lk;
      r.t_hi(k) = tu - s * uk;
    }
  }
  return r;
}

}  // namespace

IntervalVector ibp_bounds(const MLPNetwork& net, const IntervalVector& box) {
  check_input(net, box);
  Vec lo = box.lo();
  Vec hi = box.hi();
  for (const auto& layer : net.layers()) {
    Vec zl, zh;
    affine_interval(layer.weight, layer.bias, lo, hi, zl, zh);
    if (layer.activation != Activation::Identity) {
      const auto act = layer.activation;
      zl = zl.unaryExpr([act](double v) { return activate(act, v); });
      zh = zh.unaryExpr([act](double v) { return activate(act, v); });
    }
    lo = std::move(zl);
    hi = std::move(zh);
  }
  return {std::move(lo), std::move(hi)};
}

LinearBounds crown_bounds(const MLPNetwork& net, const IntervalVector& box) {
  check_input(net, box);
  const auto& layers = net.layers();
  const std::size_t depth = layers.size();

  // Forward IBP pass for the pre-activation range of every hidden layer.
  std::vector<Relaxation> relaxations;
  relaxations.reserve(depth - 1);
  {
    Vec lo = box.lo();
    Vec hi = box.hi();
    for (std::size_t k = 0; k + 1 < depth; ++k) {
      const auto& layer = layers[k];
      Vec zl, zh;
      affine_interval(layer.weight, layer.bias, lo, hi, zl, zh);
      relaxations.push_back(relax(layer.activation, zl, zh));
      const auto act = layer.activation;
      lo = zl.unaryExpr([act](double v) { return activate(act, v); });
      hi = zh.unaryExpr([act](double v) { return activate(act, v); });
    }
  }

  const auto p = static_cast<Eigen::Index>(net.output_dim());
  Mat lam_hi = Mat::Identity(p, p);
  Mat lam_lo = Mat::Identity(p, p);
  Vec off_hi = Vec::Zero(p);
  Vec off_lo = Vec::Zero(p);

  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = layers[k];
    off_hi += lam_hi * layer.bias;
    off_lo += lam_lo * layer.bias;
    lam_hi = lam_hi * layer.weight;
    lam_lo = lam_lo * layer.weight;
    if (k == 0) break;
    const auto& r = relaxations[k - 1];
    {
      const Mat pos = positive_part(lam_hi);
      const Mat neg = negative_part(lam_hi);
      off_hi += pos * r.t_hi + neg * r.t_lo;
      lam_hi = pos * r.s_hi.asDiagonal() + neg * r.s_lo.asDiagonal();
    }
    {
      const Mat pos = positive_part(lam_lo);
      const Mat neg = negative_part(lam_lo);
      off_lo += pos * r.t_lo + neg * r.t_hi;
      lam_lo = pos * r.s_lo.asDiagonal() + neg * r.s_hi.asDiagonal();
    }
  }
  return LinearBounds{std::move(lam_lo), std::move(off_lo), std::move(lam_hi), std::move(off_hi), box};
}

InclusionFunction::InclusionFunction(LinearBounds lb) : lb_(std::move(lb)) {
  const auto n = static_cast<Eigen::Index>(lb_.domain.dim());
  if (lb_.C_lo.cols() != n || lb_.C_hi.cols() != n || lb_.C_lo.rows() != lb_.C_hi.rows() ||
      lb_.d_lo.size() != lb_.C_lo.rows() || lb_.d_hi.size() != lb_.C_hi.rows()) {
    throw std::invalid_argument("LinearBounds: inconsistent dimensions");
  }
  lo_pos_ = positive_part(lb_.C_lo);
  lo_neg_ = negative_part(lb_.C_lo);
  hi_pos_ = positive_part(lb_.C_hi);
  hi_neg_ = negative_part(lb_.C_hi);
}

InclusionFunction::Output InclusionFunction::evaluate_unchecked(const Vec& a, const Vec& b) const {
  const bool reversed = pair_order(a, b) == EmbeddingState::Order::Reversed;
  const Vec& lo = reversed ? b : a;
  const Vec& hi = reversed ? a : b;
  return {lo_pos_ * lo + lo_neg_ * hi + lb_.d_lo, hi_pos_ * hi + hi_neg_ * lo + lb_.d_hi};
}

InclusionFunction::Output InclusionFunction::operator()(const Vec& a, const Vec& b) const {
  if (a.size() != b.size() || static_cast<std::size_t>(a.size()) != input_dim()) {
    throw std::invalid_argument("inclusion function: argument dimension mismatch");
  }
  const auto order = pair_order(a, b);
  if (order == EmbeddingState::Order::Mixed) {
    throw std::invalid_argument("inclusion function: arguments are not an ordered pair");
  }
  const bool reversed = order == EmbeddingState::Order::Reversed;
  const IntervalVector query(reversed ? b : a, reversed ? a : b);
  if (!lb_.domain.contains(query)) {
    throw DomainError("query box not contained in the domain of the network bounds");
  }
  return evaluate_unchecked(a, b);
}

InclusionFunction make_inclusion(LinearBounds lb) { return InclusionFunction(std::move(lb)); }

}  // namespace reachmm
