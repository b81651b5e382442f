#include "reachmm/mixed_monotone.hpp"

#include "reachmm/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace reachmm {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_size(const Vec& v, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(v.size()) != n) {
    throw std::invalid_argument(fmt::format("{} has {} entries, expected {}", what, v.size(), n));
  }
}

using Order = EmbeddingState::Order;

// Orientation of a decomposition argument: +1 ordered, -1 reversed, 0 fully degenerate.
int orientation(const Vec& x, const Vec& xh, const Vec& u, const Vec& uh, const Vec& w, const Vec& wh) {
  for (const auto& [a, b] : {std::pair<const Vec*, const Vec*>{&x, &xh}, {&u, &uh}, {&w, &wh}}) {
    switch (pair_order(*a, *b)) {
      case Order::Ordered: return 1;
      case Order::Reversed: return -1;
      case Order::Degenerate: break;
      case Order::Mixed:
        throw std::invalid_argument("decomposition argument is not an ordered or reversed pair");
    }
  }
  return 0;
}

std::vector<Interval> hull_of(const Vec& a, const Vec& b) {
  std::vector<Interval> out(static_cast<std::size_t>(a.size()));
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    out[static_cast<std::size_t>(k)] = Interval{std::min(a(k), b(k)), std::max(a(k), b(k))};
  }
  return out;
}

}  // namespace

ControlBounds parse_control_bounds(std::string_view name) {
  if (name == "faces") return ControlBounds::Faces;
  if (name == "box") return ControlBounds::Box;
  throw std::invalid_argument(fmt::format("unknown control bounds mode '{}' (expected faces or box)", name));
}

std::string_view to_string(ControlBounds c) { return c == ControlBounds::Box ? "box" : "faces"; }

OpenLoopSystem::OpenLoopSystem(std::string name, std::size_t n, std::size_t p, std::size_t q, VectorField f,
                               DecompositionFn d)
    : name_(std::move(name)), n_(n), p_(p), q_(q), f_(std::move(f)), d_(std::move(d)) {
  if (n_ == 0) throw std::invalid_argument("system state dimension must be positive");
  if (!f_ || !d_) throw std::invalid_argument("system needs both a vector field and a decomposition");
}

Vec OpenLoopSystem::f(const Vec& x, const Vec& u, const Vec& w) const {
  check_size(x, n_, "state");
  check_size(u, p_, "input");
  check_size(w, q_, "disturbance");
  return f_(x, u, w);
}

Vec OpenLoopSystem::d(const Vec& x, const Vec& xh, const Vec& u, const Vec& uh, const Vec& w,
                      const Vec& wh) const {
  check_size(x, n_, "state");
  check_size(xh, n_, "state");
  check_size(u, p_, "input");
  check_size(uh, p_, "input");
  check_size(w, q_, "disturbance");
  check_size(wh, q_, "disturbance");
  Vec out(idx(n_));
  for (std::size_t i = 0; i < n_; ++i) out(idx(i)) = d_(i, x, xh, u, uh, w, wh);
  return out;
}

DecompositionFn build_tight_decomposition(VectorField f, IntervalExtension ext, std::size_t n, std::size_t p,
                                          std::size_t q) {
  return [f = std::move(f), ext = std::move(ext), n, p, q](std::size_t i, const Vec& x, const Vec& xh,
                                                           const Vec& u, const Vec& uh, const Vec& w,
                                                           const Vec& wh) -> double {
    const int orient = orientation(x, xh, u, uh, w, wh);
    if (orient == 0) return f(x, u, w)(idx(i));
    auto xbox = hull_of(x, xh);
    xbox[i] = Interval(x(idx(i)));
    const auto ubox = hull_of(u, uh);
    const auto wbox = hull_of(w, wh);
    const Interval r = ext(i, xbox, ubox, wbox);
    if (!r.valid() || std::isnan(r.lo) || std::isnan(r.hi)) {
      throw std::invalid_argument(fmt::format("interval extension returned an invalid interval [{}, {}] for f_{}",
                                              r.lo, r.hi, i));
    }
    (void)n;
    (void)p;
    (void)q;
    return orient > 0 ? r.lo : r.hi;
  };
}

DecompositionFn linear_decomposition(Mat a, Mat b, Mat e) {
  if (a.rows() != a.cols()) throw std::invalid_argument("linear_decomposition: A must be square");
  if (b.size() > 0 && b.rows() != a.rows()) throw std::invalid_argument("linear_decomposition: B row mismatch");
  if (e.size() > 0 && e.rows() != a.rows()) throw std::invalid_argument("linear_decomposition: E row mismatch");
  Mat off = a;
  off.diagonal().setZero();
  Mat a_pos = positive_part(off);
  Mat a_neg = negative_part(off);
  a_pos.diagonal() = a.diagonal();
  return [a_pos = std::move(a_pos), a_neg = std::move(a_neg), b_pos = positive_part(b), b_neg = negative_part(b),
          e_pos = positive_part(e), e_neg = negative_part(e)](std::size_t i, const Vec& x, const Vec& xh,
                                                              const Vec& u, const Vec& uh, const Vec& w,
                                                              const Vec& wh) -> double {
    const auto r = idx(i);
    double v = a_pos.row(r).dot(x) + a_neg.row(r).dot(xh);
    if (b_pos.size() > 0) v += b_pos.row(r).dot(u) + b_neg.row(r).dot(uh);
    if (e_pos.size() > 0) v += e_pos.row(r).dot(w) + e_neg.row(r).dot(wh);
    return v;
  };
}

VectorField linear_field(Mat a, Mat b, Mat e) {
  return [a = std::move(a), b = std::move(b), e = std::move(e)](const Vec& x, const Vec& u, const Vec& w) -> Vec {
    Vec v = a * x;
    if (b.size() > 0) v += b * u;
    if (e.size() > 0) v += e * w;
    return v;
  };
}

Vec open_embedding_field(const OpenLoopSystem& sys, const EmbeddingState& state, const IntervalVector& u,
                         const IntervalVector& w) {
  if (state.order() == Order::Mixed) {
    throw NumericFailure("open_embedding_field: state is a mixed-order pair");
  }
  Vec out(2 * idx(sys.state_dim()));
  out << sys.d(state.lo, state.hi, u.lo(), u.hi(), w.lo(), w.hi()),
      sys.d(state.hi, state.lo, u.hi(), u.lo(), w.hi(), w.lo());
  return out;
}

ClosedLoopEmbedding::ClosedLoopEmbedding(std::shared_ptr<const OpenLoopSystem> sys,
                                         std::shared_ptr<const MLPNetwork> net, IntervalVector disturbance,
                                         ControlBounds mode)
    : sys_(std::move(sys)), net_(std::move(net)), w_(std::move(disturbance)), mode_(mode) {
  if (!sys_ || !net_) throw std::invalid_argument("ClosedLoopEmbedding: null system or network");
  if (net_->input_dim() != sys_->state_dim() || net_->output_dim() != sys_->input_dim()) {
    throw std::invalid_argument(fmt::format("network is {}->{} but system has n = {}, p = {}", net_->input_dim(),
                                            net_->output_dim(), sys_->state_dim(), sys_->input_dim()));
  }
  if (w_.dim() != sys_->disturbance_dim()) {
    throw std::invalid_argument("disturbance box dimension does not match the system");
  }
}

void ClosedLoopEmbedding::inherit(std::shared_ptr<const InclusionFunction> bounds) {
  incl_ = std::move(bounds);
  j_.reset();
}

FaceBounds face_bounds(const InclusionFunction& incl, const Vec& lo, const Vec& hi) {
  const auto n = static_cast<std::size_t>(lo.size());
  FaceBounds fb;
  fb.eta.reserve(n);
  fb.nu.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    fb.eta.push_back(incl.evaluate_unchecked(lo, face_replace(hi, lo, i)));
    fb.nu.push_back(incl.evaluate_unchecked(hi, face_replace(lo, hi, i)));
  }
  return fb;
}

void ClosedLoopEmbedding::refresh_control(const IntervalVector& box_at_tj, std::size_t j, bool reverify) {
  if (box_at_tj.dim() != sys_->state_dim()) throw std::invalid_argument("refresh_control: box dimension mismatch");
  if (reverify) {
    incl_ = std::make_shared<const InclusionFunction>(make_inclusion(crown_bounds(*net_, box_at_tj)));
    ++nn_calls_;
  }
  if (!incl_) throw std::logic_error("refresh_control: no network bounds to inherit");
  if (!incl_->domain().contains(box_at_tj)) {
    throw DomainError("query box not contained in the domain of the inherited network bounds");
  }
  const auto n = sys_->state_dim();
  eta_.clear();
  nu_.clear();
  if (mode_ == ControlBounds::Box) {
    const auto whole = (*incl_)(box_at_tj.lo(), box_at_tj.hi());
    eta_.assign(n, whole);
    nu_.assign(n, whole);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      eta_.push_back((*incl_)(box_at_tj.lo(), face_replace(box_at_tj.hi(), box_at_tj.lo(), i)));
      nu_.push_back((*incl_)(box_at_tj.hi(), face_replace(box_at_tj.lo(), box_at_tj.hi(), i)));
    }
  }
  j_ = j;
}

Vec ClosedLoopEmbedding::closed_decomposition(const EmbeddingState& state, std::size_t j) const {
  if (!j_ || *j_ != j) {
    throw std::logic_error(fmt::format("closed_decomposition: control caches are for interval {}, requested {}",
                                       j_ ? fmt::format("{}", *j_) : std::string("<none>"), j));
  }
  const auto order = state.order();
  if (order == Order::Mixed) throw NumericFailure("closed_decomposition: state is a mixed-order pair");
  const auto n = sys_->state_dim();
  const Vec& wl = w_.lo();
  const Vec& wh = w_.hi();
  Vec out(2 * idx(n));
  if (order != Order::Reversed) {
    for (std::size_t i = 0; i < n; ++i) {
      out(idx(i)) = sys_->d(i, state.lo, state.hi, eta_[i].lo, eta_[i].hi, wl, wh);
      out(idx(n + i)) = sys_->d(i, state.hi, state.lo, nu_[i].hi, nu_[i].lo, wh, wl);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      out(idx(i)) = sys_->d(i, state.lo, state.hi, nu_[i].hi, nu_[i].lo, wh, wl);
      out(idx(n + i)) = sys_->d(i, state.hi, state.lo, eta_[i].lo, eta_[i].hi, wl, wh);
    }
  }
  return out;
}

EmbeddingState ClosedLoopEmbedding::euler_step(const EmbeddingState& state, double dt, std::size_t j) const {
  const Vec field = closed_decomposition(state, j);
  const auto n = idx(sys_->state_dim());
  return {state.lo + dt * field.head(n), state.hi + dt * field.tail(n)};
}

Vec feedback_embedding_field(const OpenLoopSystem& sys, const InclusionFunction& incl, const IntervalVector& w,
                             const EmbeddingState& state) {
  const auto order = state.order();
  if (order == Order::Mixed) throw NumericFailure("feedback_embedding_field: state is a mixed-order pair");
  const bool reversed = order == Order::Reversed;
  const Vec& lo = reversed ? state.hi : state.lo;
  const Vec& hi = reversed ? state.lo : state.hi;
  const auto fb = face_bounds(incl, lo, hi);
  const auto n = sys.state_dim();
  Vec out(2 * idx(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& low_face = reversed ? fb.nu[i] : fb.eta[i];
    const auto& high_face = reversed ? fb.eta[i] : fb.nu[i];
    if (!reversed) {
      out(idx(i)) = sys.d(i, state.lo, state.hi, low_face.lo, low_face.hi, w.lo(), w.hi());
      out(idx(n + i)) = sys.d(i, state.hi, state.lo, high_face.hi, high_face.lo, w.hi(), w.lo());
    } else {
      out(idx(i)) = sys.d(i, state.lo, state.hi, low_face.hi, low_face.lo, w.hi(), w.lo());
      out(idx(n + i)) = sys.d(i, state.hi, state.lo, high_face.lo, high_face.hi, w.lo(), w.hi());
    }
  }
  return out;
}

DiscreteLTIEmbedding::DiscreteLTIEmbedding(Mat a, Mat b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows()) {
    throw std::invalid_argument("DiscreteLTIEmbedding: A must be n x n and B n x p");
  }
  b_pos_ = positive_part(b_);
  b_neg_ = negative_part(b_);
}

void DiscreteLTIEmbedding::set_bounds(LinearBounds lb) {
  if (lb.C_lo.rows() != b_.cols() || lb.C_lo.cols() != a_.cols()) {
    throw std::invalid_argument("DiscreteLTIEmbedding: bounds have the wrong shape");
  }
  m_lo_ = a_ + b_pos_ * lb.C_lo + b_neg_ * lb.C_hi;
  m_hi_ = a_ + b_pos_ * lb.C_hi + b_neg_ * lb.C_lo;
  lb_ = std::move(lb);
}

EmbeddingState DiscreteLTIEmbedding::step(const EmbeddingState& state) const {
  if (!lb_) throw std::logic_error("DiscreteLTIEmbedding: no network bounds set");
  if (!state.ordered()) throw NumericFailure("lti_step: state is not ordered");
  if (!lb_->domain.contains(state.box())) {
    throw DomainError("lti_step: state box not contained in the domain of the network bounds");
  }
  const Vec& d_lo = lb_->d_lo;
  const Vec& d_hi = lb_->d_hi;
  Vec lo = positive_part(m_lo_) * state.lo + negative_part(m_lo_) * state.hi + b_pos_ * d_lo + b_neg_ * d_hi;
  Vec hi = negative_part(m_hi_) * state.lo + positive_part(m_hi_) * state.hi + b_neg_ * d_lo + b_pos_ * d_hi;
  return {std::move(lo), std::move(hi)};
}

}  // namespace reachmm
