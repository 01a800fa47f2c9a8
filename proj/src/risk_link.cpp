#include "marginbv/risk_link.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "marginbv/errors.hpp"

namespace marginbv {

double pointwise_risk(const LossDescriptor& loss, double p, double v) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ParameterError("probability outside [0, 1]");
    }
    return p * loss.eval(v) + (1.0 - p) * loss.eval(-v);
}

ImpliedProbability LinkBundle::inverse_link(double f) const {
    bool clamped = false;
    if (std::isfinite(link_range.lo) && f < link_range.lo + 1e-9) {
        f = link_range.lo + 1e-9;
        clamped = true;
    }
    if (std::isfinite(link_range.hi) && f > link_range.hi - 1e-9) {
        f = link_range.hi - 1e-9;
        clamped = true;
    }
    double q = inverse_link_raw(f);
    if (!std::isfinite(q)) {
        std::ostringstream msg;
        msg << "inverse link of '" << loss->name << "' is not finite at f = " << f;
        throw NumericError(msg.str());
    }
    const double clipped = clip_probability(q);
    if (clipped != q) {
        clamped = true;
    }
    return {clipped, clamped};
}

namespace {

// argmin of l over [-50, 50]; infinite when l is still decreasing at 50.
double loss_minimiser(const LossDescriptor& loss) {
    if (loss.known.minimiser) {
        return *loss.known.minimiser;
    }
    const double root = bisect_increasing(loss.grad, -50.0, 50.0);
    if (std::isfinite(root)) {
        return root;
    }
    return loss.grad(50.0) < 0 ? kInf : -kInf;
}

}  // namespace

LinkBundle build_link_bundle(const LossDescriptor& loss_in) {
    auto loss = std::make_shared<const LossDescriptor>(loss_in);
    LinkBundle b;
    b.loss = loss;
    const KnownForms& known = loss->known;

    const double g_plus = loss_minimiser(*loss);
    if (!(g_plus > 0)) {
        throw LinkDomainError("loss '" + loss->name + "' does not reward positive margins");
    }
    b.link_range = Interval{-g_plus, g_plus};

    if (known.link) {
        b.link = known.link;
    } else {
        b.numeric_link = true;
        b.link = [loss](double p) {
            const double pc = clip_probability(p);
            auto foc = [&](double v) { return pc * loss->grad(v) - (1.0 - pc) * loss->grad(-v); };
            const double v = bisect_increasing(foc, -50.0, 50.0);
            if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << "optimal link of '" << loss->name << "' not bracketed in [-50, 50] at p = " << p;
                throw LinkDomainError(msg.str());
            }
            return v;
        };
    }

    if (known.inverse_link) {
        b.inverse_link_raw = known.inverse_link;
    } else {
        // First-order condition of the pointwise risk solved for p.
        b.inverse_link_raw = [loss](double f) {
            const double a = loss->grad(-f);
            return a / (loss->grad(f) + a);
        };
    }

    if (known.min_risk) {
        b.min_risk = known.min_risk;
        b.generator_domain = known.neg_min_risk_domain;
    } else {
        b.numeric_min_risk = true;
        auto link = b.link;
        b.min_risk = [loss, link](double p) {
            const double pc = clip_probability(p);
            return pointwise_risk(*loss, pc, link(pc));
        };
    }

    if (known.neg_min_risk_grad) {
        b.neg_min_risk_grad = known.neg_min_risk_grad;
    } else {
        // Envelope theorem: d/dp L(p, psi(p)) = l(psi) - l(-psi).
        auto link = b.link;
        b.neg_min_risk_grad = [loss, link](double p) {
            const double v = link(p);
            return loss->eval(-v) - loss->eval(v);
        };
    }

    if (known.neg_min_risk_grad_inverse) {
        b.neg_min_risk_grad_inverse = known.neg_min_risk_grad_inverse;
    } else {
        auto grad = b.neg_min_risk_grad;
        auto name = loss->name;
        b.neg_min_risk_grad_inverse = [grad, name](double y) {
            const double p = bisect_increasing([&](double q) { return grad(q) - y; }, kProbEps,
                                               1.0 - kProbEps, 1e-15);
            if (!std::isfinite(p)) {
                std::ostringstream msg;
                msg << "inverse of -L' for '" << name << "' not bracketed at " << y;
                throw NumericError(msg.str());
            }
            return p;
        };
    }
    return b;
}

BregmanGenerator neg_min_risk_generator(const LinkBundle& bundle) {
    auto min_risk = bundle.min_risk;
    return {[min_risk](double p) { return -min_risk(p); }, bundle.neg_min_risk_grad,
            bundle.generator_domain};
}

std::optional<double> canonical_scaling_check(const LossDescriptor& loss, const LinkBundle& bundle,
                                              std::span<const double> p_grid, double tol) {
    (void)loss;
    constexpr double h = 1e-6;
    std::vector<double> ratios;
    for (double p : p_grid) {
        if (std::abs(p - 0.5) < 1e-9) {
            continue;
        }
        double deriv = 0.0;
        if (p - h <= 0.0) {
            deriv = (bundle.min_risk(p + h) - bundle.min_risk(p)) / h;
        } else if (p + h >= 1.0) {
            deriv = (bundle.min_risk(p) - bundle.min_risk(p - h)) / h;
        } else {
            deriv = (bundle.min_risk(p + h) - bundle.min_risk(p - h)) / (2.0 * h);
        }
        ratios.push_back(deriv / bundle.link(p));
    }
    if (ratios.empty()) {
        return std::nullopt;
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    if (*hi - *lo > tol) {
        return std::nullopt;
    }
    const double c = ordered_mean(ratios);
    if (!(c < 0)) {
        return std::nullopt;
    }
    return c;
}

std::optional<double> canonical_scaling_check(const LossDescriptor& loss, const LinkBundle& bundle) {
    const auto grid = default_probability_grid();
    return canonical_scaling_check(loss, bundle, grid, 1e-6);
}

double excess_risk_residual(const LinkBundle& bundle, double p, double q) {
    const auto gen = neg_min_risk_generator(bundle);
    const double lhs = pointwise_risk(*bundle.loss, p, bundle.link(q)) - bundle.min_risk(p);
    return std::abs(lhs - divergence(gen, p, q));
}

double dual_connection_residual(const LinkBundle& bundle, double c, double u, double v) {
    const auto loss_gen = generator_from_loss(*bundle.loss);
    const auto risk_gen = neg_min_risk_generator(bundle);
    const double lhs = divergence(loss_gen, u, v);
    const double a = bundle.neg_min_risk_grad_inverse(c * v);
    const double b = bundle.neg_min_risk_grad_inverse(c * u);
    return std::abs(lhs - divergence(risk_gen, a, b));
}

}  // namespace marginbv
