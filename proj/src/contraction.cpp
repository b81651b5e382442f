#include "reachmm/contraction.hpp"

#include "reachmm/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace reachmm {

namespace {

constexpr std::array<unsigned, 40> kPrimes = {2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,  43,
                                              47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101, 103, 107,
                                              109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173};

double fd_step(double z) { return 1e-6 * std::max(1.0, std::abs(z)); }

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

Vec open_field(const OpenLoopSystem& sys, const Vec& lo, const Vec& hi, const Vec& ul, const Vec& uh, const Vec& wl,
               const Vec& wh) {
  const auto n = idx(sys.state_dim());
  Vec out(2 * n);
  out << sys.d(lo, hi, ul, uh, wl, wh), sys.d(hi, lo, uh, ul, wh, wl);
  return out;
}

void check_region(const InclusionFunction& incl, std::span<const IntervalVector> region) {
  if (region.empty()) throw std::invalid_argument("contraction estimate needs a non-empty region");
  for (const auto& box : region) {
    if (!incl.domain().contains(box, 1e-9)) {
      throw DomainError("region box not contained in the domain of the network bounds");
    }
  }
}

std::vector<EmbeddingState> region_samples(std::span<const IntervalVector> region, const SampleOptions& opts) {
  std::vector<EmbeddingState> out;
  for (const auto& box : region) {
    auto s = embedding_samples(box, opts);
    out.insert(out.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return out;
}

// Face-evaluated control pairs of every row, stacked as (eta_0, ..., eta_{n-1}, nu_0, ..., nu_{n-1}),
// each pair laid out as (lo, hi).
Vec stacked_faces(const InclusionFunction& incl, const EmbeddingState& z) {
  const auto fb = face_bounds(incl, z.lo, z.hi);
  const auto n = fb.eta.size();
  const auto p = idx(incl.output_dim());
  Vec out(static_cast<Eigen::Index>(4 * n) * p);
  Eigen::Index at = 0;
  for (const auto* list : {&fb.eta, &fb.nu}) {
    for (const auto& o : *list) {
      out.segment(at, p) = o.lo;
      out.segment(at + p, p) = o.hi;
      at += 2 * p;
    }
  }
  return out;
}

}  // namespace

Vec halton_point(std::size_t index, std::size_t dim) {
  if (dim > kPrimes.size()) throw std::invalid_argument("Halton sequence supports at most 40 dimensions");
  Vec out(idx(dim));
  for (std::size_t d = 0; d < dim; ++d) {
    const double base = kPrimes[d];
    double f = 1.0, r = 0.0;
    for (std::size_t i = index; i > 0; i /= kPrimes[d]) {
      f /= base;
      r += f * static_cast<double>(i % kPrimes[d]);
    }
    out(idx(d)) = r;
  }
  return out;
}

std::vector<EmbeddingState> embedding_samples(const IntervalVector& box, const SampleOptions& opts) {
  const std::size_t n = box.dim();
  const Vec& lo = box.lo();
  const Vec w = box.width();
  std::vector<EmbeddingState> out;
  std::size_t grid = opts.grid_density == 0 ? 0 : 1;
  for (std::size_t k = 0; k < n && grid > 0; ++k) grid *= opts.grid_density;
  out.reserve(grid + opts.halton_samples);
  for (std::size_t g = 0; g < grid; ++g) {
    Vec fl(idx(n));
    std::size_t rem = g;
    for (std::size_t k = n; k-- > 0;) {
      const std::size_t digit = rem % opts.grid_density;
      rem /= opts.grid_density;
      fl(idx(k)) = opts.grid_density == 1 ? 0.25 : 0.5 * static_cast<double>(digit) /
                                                        static_cast<double>(opts.grid_density - 1);
    }
    const Vec fh = (0.5 + 0.5 * halton_point(g + 1, n).array()).matrix();
    out.emplace_back(lo + fl.cwiseProduct(w), lo + fh.cwiseProduct(w));
  }
  for (std::size_t s = 1; s <= opts.halton_samples; ++s) {
    const Vec h = halton_point(s, 2 * n);
    const Vec fl = 0.5 * h.head(idx(n));
    const Vec fh = (0.5 + 0.5 * h.tail(idx(n)).array()).matrix();
    out.emplace_back(lo + fl.cwiseProduct(w), lo + fh.cwiseProduct(w));
  }
  return out;
}

Mat embedding_jacobian(const std::function<Vec(const EmbeddingState&)>& field, const EmbeddingState& z) {
  const Vec base = z.stacked();
  const auto n2 = base.size();
  const auto n = n2 / 2;
  Mat jac;
  for (Eigen::Index k = 0; k < n2; ++k) {
    const double h = fd_step(base(k));
    Vec plus = base, minus = base;
    plus(k) += h;
    minus(k) -= h;
    const auto sp = EmbeddingState::from_stacked(plus);
    const auto sm = EmbeddingState::from_stacked(minus);
    Vec col;
    if (sp.order() != EmbeddingState::Order::Mixed && sm.order() != EmbeddingState::Order::Mixed) {
      col = (field(sp) - field(sm)) / (2.0 * h);
    } else {
      // Move away from the partner endpoint: lower entries down, upper entries up.
      const bool lower = k < n;
      const double s = lower ? -h : h;
      Vec moved = base;
      moved(k) += s;
      col = (field(EmbeddingState::from_stacked(moved)) - field(z)) / s;
    }
    if (jac.size() == 0) jac.resize(col.size(), n2);
    jac.col(k) = col;
  }
  return jac;
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x) {
  Mat jac;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = fd_step(x(k));
    Vec plus = x, minus = x;
    plus(k) += h;
    minus(k) -= h;
    const Vec col = (f(plus) - f(minus)) / (2.0 * h);
    if (jac.size() == 0) jac.resize(col.size(), x.size());
    jac.col(k) = col;
  }
  return jac;
}

double estimate_cx(const OpenLoopSystem& sys, const InclusionFunction& incl, const IntervalVector& w,
                   std::span<const IntervalVector> region, const SampleOptions& opts) {
  check_region(incl, region);
  const auto field = [&](const EmbeddingState& s) { return feedback_embedding_field(sys, incl, w, s); };
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& z : region_samples(region, opts)) {
    best = std::max(best, matrix_measure_inf(embedding_jacobian(field, z)));
  }
  return best;
}

double lip_inf_closed_form(const LinearBounds& lb) {
  const Vec lo = lb.C_lo.cwiseAbs().rowwise().sum();
  const Vec hi = lb.C_hi.cwiseAbs().rowwise().sum();
  return std::max(lo.size() ? lo.maxCoeff() : 0.0, hi.size() ? hi.maxCoeff() : 0.0);
}

double lip_inf_finite_difference(const InclusionFunction& incl, std::span<const IntervalVector> region,
                                 const SampleOptions& opts) {
  check_region(incl, region);
  const auto faces = [&](const EmbeddingState& s) { return stacked_faces(incl, s); };
  double best = 0.0;
  for (const auto& z : region_samples(region, opts)) {
    best = std::max(best, induced_inf_norm(embedding_jacobian(faces, z)));
  }
  return best;
}

ContractionEstimate estimate_contraction(const OpenLoopSystem& sys, const InclusionFunction& incl,
                                         const IntervalVector& w, std::span<const IntervalVector> region,
                                         const SampleOptions& opts) {
  check_region(incl, region);
  if (incl.input_dim() != sys.state_dim() || incl.output_dim() != sys.input_dim()) {
    throw std::invalid_argument("network bounds do not match the system dimensions");
  }
  const auto p = idx(sys.input_dim());
  const auto q = idx(sys.disturbance_dim());
  const Vec& wl = w.lo();
  const Vec& wh = w.hi();

  ContractionEstimate est;
  est.region.assign(region.begin(), region.end());
  est.c_x = est.c_x_o = -std::numeric_limits<double>::infinity();
  est.lip_inf = lip_inf_closed_form(incl.bounds());

  const auto closed = [&](const EmbeddingState& s) { return feedback_embedding_field(sys, incl, w, s); };

  auto input_norms = [&](const Vec& lo, const Vec& hi, const Vec& ul, const Vec& uh) {
    Vec upair(2 * p);
    upair << ul, uh;
    const Mat ju = fd_jacobian(
        [&](const Vec& v) { return open_field(sys, lo, hi, v.head(p), v.tail(p), wl, wh); }, upair);
    est.l_u_o = std::max(est.l_u_o, induced_inf_norm(ju));
    if (q > 0) {
      Vec wpair(2 * q);
      wpair << wl, wh;
      const Mat jw = fd_jacobian(
          [&](const Vec& v) { return open_field(sys, lo, hi, ul, uh, v.head(q), v.tail(q)); }, wpair);
      est.l_w_o = std::max(est.l_w_o, induced_inf_norm(jw));
    }
  };

  const auto samples = region_samples(region, opts);
  est.sample_count = samples.size();
  for (const auto& z : samples) {
    est.c_x = std::max(est.c_x, matrix_measure_inf(embedding_jacobian(closed, z)));
    const auto fb = face_bounds(incl, z.lo, z.hi);
    for (const auto* list : {&fb.eta, &fb.nu}) {
      for (const auto& u : *list) {
        const auto open = [&](const EmbeddingState& s) { return open_field(sys, s.lo, s.hi, u.lo, u.hi, wl, wh); };
        est.c_x_o = std::max(est.c_x_o, matrix_measure_inf(embedding_jacobian(open, z)));
        input_norms(z.lo, z.hi, u.lo, u.hi);
      }
    }
    // Degenerate state with the control pair the inclusion gives at that point.
    const auto at = incl.evaluate_unchecked(z.lo, z.lo);
    input_norms(z.lo, z.lo, at.lo, at.hi);
  }
  return est;
}

LipschitzEstimate estimate_lipschitz(const OpenLoopSystem& sys, const InclusionFunction& incl,
                                     const IntervalVector& w, std::span<const IntervalVector> region,
                                     const SampleOptions& opts) {
  const auto est = estimate_contraction(sys, incl, w, region, opts);
  return {est.l_u_o, est.l_w_o, est.lip_inf};
}

double theorem1_bound(double c_x, double l_u_o, double l_w_o, double t, double init_err, double nn_err_sup,
                      double w_err_sup) {
  const double e = std::max(0.0, std::exp(c_x * t));
  const double growth = c_x == 0.0 ? t : (e - 1.0) / c_x;
  return e * init_err + l_u_o * growth * nn_err_sup + l_w_o * growth * w_err_sup;
}

double theorem1_bound(const ContractionEstimate& est, double t, double init_err, double nn_err_sup,
                      double w_err_sup) {
  return theorem1_bound(est.c_x, est.l_u_o, est.l_w_o, t, init_err, nn_err_sup, w_err_sup);
}

double theorem2_bound(double c_x_o, double l_u_o, double lip_inf) { return c_x_o + l_u_o * lip_inf; }

double network_error_sup(const MLPNetwork& net, const InclusionFunction& incl, std::span<const IntervalVector> region,
                         const SampleOptions& opts) {
  check_region(incl, region);
  double best = 0.0;
  for (const auto& z : region_samples(region, opts)) {
    for (const Vec* x : {&z.lo, &z.hi}) {
      const Vec n = net(*x);
      const auto b = incl.evaluate_unchecked(*x, *x);
      best = std::max({best, (b.lo - n).cwiseAbs().maxCoeff(), (b.hi - n).cwiseAbs().maxCoeff()});
    }
  }
  return best;
}

}  // namespace reachmm
