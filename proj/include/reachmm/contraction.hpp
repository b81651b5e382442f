#pragma once

#include "reachmm/bounds.hpp"
#include "reachmm/interval.hpp"
#include "reachmm/mixed_monotone.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace reachmm {

struct SampleOptions {
  /// Lower endpoints on a grid of this many fractions per axis in [0, 0.5].
  std::size_t grid_density = 5;
  /// Extra Halton-sequence pairs per region box.
  std::size_t halton_samples = 64;
};

/// Sampled suprema; they under-estimate the true suprema and are reported as estimates.
struct ContractionEstimate {
  double c_x = 0.0;
  double c_x_o = 0.0;
  double l_u_o = 0.0;
  double l_w_o = 0.0;
  double lip_inf = 0.0;
  std::vector<IntervalVector> region;
  std::string method = "sample";
  std::size_t sample_count = 0;
};

/// k-th point of the Halton sequence in [0, 1)^dim (index starts at 1).
Vec halton_point(std::size_t index, std::size_t dim);

/// Ordered pairs (lo <= hi) inside box: lower fractions on a grid in [0, 0.5],
/// upper fractions 0.5 + 0.5 * Halton, plus Halton pairs.
std::vector<EmbeddingState> embedding_samples(const IntervalVector& box, const SampleOptions& opts);

/// Central-difference Jacobian of F at z with step 1e-6 * max(1, |z_k|).
/// When a perturbation would make the pair mixed, falls back to a one-sided
/// difference away from the other endpoint.
Mat embedding_jacobian(const std::function<Vec(const EmbeddingState&)>& field, const EmbeddingState& z);

/// Plain central-difference Jacobian of F at x.
Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x);

/// sup of mu_inf of the Jacobian of the closed-loop embedding field over the region samples.
double estimate_cx(const OpenLoopSystem& sys, const InclusionFunction& incl, const IntervalVector& w,
                   std::span<const IntervalVector> region, const SampleOptions& opts = {});

struct LipschitzEstimate {
  double l_u_o = 0.0;
  double l_w_o = 0.0;
  double lip_inf = 0.0;
};
LipschitzEstimate estimate_lipschitz(const OpenLoopSystem& sys, const InclusionFunction& incl,
                                     const IntervalVector& w, std::span<const IntervalVector> region,
                                     const SampleOptions& opts = {});

/// Lipschitz constant of the inclusion map (lo, hi) -> (u_lo, u_hi) in the
/// infinity norm: max over output rows of the 1-norms of the rows of C_lo and C_hi.
double lip_inf_closed_form(const LinearBounds& lb);

/// Same constant estimated by differencing the face-evaluated inclusion map.
double lip_inf_finite_difference(const InclusionFunction& incl, std::span<const IntervalVector> region,
                                 const SampleOptions& opts = {});

/// All quantities on one common sample set.
ContractionEstimate estimate_contraction(const OpenLoopSystem& sys, const InclusionFunction& incl,
                                         const IntervalVector& w, std::span<const IntervalVector> region,
                                         const SampleOptions& opts = {});

/// Right-hand side of the accuracy bound
/// e^{c t} r0 + l_u (e^{c t} - 1)/c * nn_err + l_w (e^{c t} - 1)/c * w_err,
/// with (e^{c t} - 1)/c replaced by t at c = 0.
double theorem1_bound(const ContractionEstimate& est, double t, double init_err, double nn_err_sup,
                      double w_err_sup);
double theorem1_bound(double c_x, double l_u_o, double l_w_o, double t, double init_err, double nn_err_sup,
                      double w_err_sup);

/// c_x_o + l_u_o * lip_inf.
double theorem2_bound(double c_x_o, double l_u_o, double lip_inf);

/// sup over sampled z of ||(N_lo(z, z) - N(z), N_hi(z, z) - N(z))||_inf.
double network_error_sup(const MLPNetwork& net, const InclusionFunction& incl,
                         std::span<const IntervalVector> region, const SampleOptions& opts = {});

}  // namespace reachmm
