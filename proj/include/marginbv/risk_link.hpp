#pragma once

#include <memory>
#include <optional>
#include <span>

#include "marginbv/bregman.hpp"
#include "marginbv/loss_zoo.hpp"

namespace marginbv {

// p l(v) + (1 - p) l(-v).
double pointwise_risk(const LossDescriptor& loss, double p, double v);

struct ImpliedProbability {
    double q;
    bool clamped;
};

// Probability-side view of a margin loss: minimum risk, optimal link and the
// derivative of the negative minimum risk, each with its inverse.
struct LinkBundle {
    std::shared_ptr<const LossDescriptor> loss;
    ScalarFn min_risk;
    ScalarFn link;
    ScalarFn neg_min_risk_grad;
    ScalarFn neg_min_risk_grad_inverse;
    // Margins on which the inverse link is defined; [-1, 1] for the squared loss.
    Interval link_range;
    // Domain of the negative minimum risk as a Bregman generator.
    Interval generator_domain{0.0, 1.0};
    bool numeric_link = false;
    bool numeric_min_risk = false;

    // f -> q. Margins outside link_range (shrunk by 1e-9) and probabilities
    // outside [1e-12, 1 - 1e-12] are clamped and flagged.
    ImpliedProbability inverse_link(double f) const;

    // Raw inverse link without clamping.
    ScalarFn inverse_link_raw;
};

LinkBundle build_link_bundle(const LossDescriptor& loss);

// Generator -L(p) of the excess-risk divergence.
BregmanGenerator neg_min_risk_generator(const LinkBundle& bundle);

// Returns c when L'(p) / psi(p) is constant within tol over the grid (p = 1/2
// excluded) and negative. L' is taken by central differences of the minimum
// risk with h = 1e-6, one-sided near the ends of [0, 1].
std::optional<double> canonical_scaling_check(const LossDescriptor& loss, const LinkBundle& bundle,
                                              std::span<const double> p_grid, double tol);
std::optional<double> canonical_scaling_check(const LossDescriptor& loss, const LinkBundle& bundle);

// |L(p, psi(q)) - L(p) - B_{-L}(p, q)|: the excess-risk divergence identity.
double excess_risk_residual(const LinkBundle& bundle, double p, double q);

// |B_l(u, v) - B_{-L}([-L']^{-1}(c v), [-L']^{-1}(c u))| for a gradient-symmetric loss.
double dual_connection_residual(const LinkBundle& bundle, double c, double u, double v);

}  // namespace marginbv
