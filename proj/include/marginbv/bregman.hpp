#pragma once

#include <optional>

#include "marginbv/loss_zoo.hpp"
#include "marginbv/numeric.hpp"

namespace marginbv {

// Strictly convex differentiable generator of a Bregman divergence.
struct BregmanGenerator {
    ScalarFn phi;
    ScalarFn phi_grad;
    Interval domain;
};

BregmanGenerator generator_from_loss(const LossDescriptor& loss);

// phi(u) - phi(v) - phi'(v)(u - v).
//
// u must lie in the domain and v in its interior. Values below zero by no more
// than 1e-12 (relative to the magnitude of the terms) are clamped to zero;
// anything more negative is an invariant violation.
double divergence(const BregmanGenerator& gen, double u, double v);

// Largest relative gap |B(u,v) - B(-u,-v)| over the square axis x axis.
double max_label_flip_gap(const LossDescriptor& loss, const ProbeGrid& axis);

// True iff the label-flip gap stays within tol on the (u, v) grid.
bool label_flip_symmetric(const LossDescriptor& loss, const ProbeGrid& axis, double tol);
bool label_flip_symmetric(const LossDescriptor& loss);

// Numeric Legendre transform sup_p { p v - phi(p) } over the generator's domain.
// Bounded domains are clipped 1e-12 inside their ends; unbounded ones are
// bracketed outward from 0.5. The maximiser is located by golden-section
// search to `tol` in p.
double conjugate(const BregmanGenerator& gen, double v, double tol = 1e-10);

// Anchors g+ and g- = -g+ of the limit-Bregman representation of a
// gradient-symmetric loss; infinite when the loss has no finite minimiser.
struct LimitAnchor {
    double g_plus = kInf;
    double g_minus = -kInf;
    double truncation_G = 10.0;
    // Tabulated losses: set when the minimiser sits on the edge of the table, so
    // the finite/infinite regime could not be decided from the data.
    bool regime_ambiguous = false;
};

// Locates g+ = argmin l over the extended reals. Throws InapplicableError for
// losses that are not gradient-symmetric.
LimitAnchor limit_anchor(const LossDescriptor& loss);

struct LimitBregmanResult {
    double value;
    // Anchor magnitude G at which the sequence settled; absent for finite anchors.
    std::optional<double> truncation_level;
    // True when the value is a Richardson extrapolation in 1/G rather than a raw
    // truncated divergence.
    bool extrapolated = false;
};

// lim_{g -> g_y} B_l(f, g). Infinite anchors are approached along
// G = truncation_G * 2^k; the value is accepted when successive raw divergences,
// or successive Richardson extrapolants in 1/G, differ by less than 1e-9.
LimitBregmanResult limit_bregman_loss(const LossDescriptor& loss, int y, double f,
                                      const LimitAnchor& anchor);

}  // namespace marginbv
