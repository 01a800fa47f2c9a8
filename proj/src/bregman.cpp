#include "marginbv/bregman.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "marginbv/errors.hpp"

namespace marginbv {

BregmanGenerator generator_from_loss(const LossDescriptor& loss) {
    return {loss.eval, loss.grad, Interval::real_line()};
}

double divergence(const BregmanGenerator& gen, double u, double v) {
    if (!gen.domain.contains(u)) {
        std::ostringstream msg;
        msg << "Bregman first argument " << u << " outside generator domain";
        throw ParameterError(msg.str());
    }
    if (!(v > gen.domain.lo && v < gen.domain.hi)) {
        std::ostringstream msg;
        msg << "Bregman second argument " << v << " not in the interior of the generator domain";
        throw ParameterError(msg.str());
    }
    const double pu = gen.phi(u);
    const double pv = gen.phi(v);
    const double gv = gen.phi_grad(v);
    if (!std::isfinite(pu) || !std::isfinite(pv) || !std::isfinite(gv)) {
        std::ostringstream msg;
        msg << "non-finite generator value in B(" << u << ", " << v << ")";
        throw NumericError(msg.str());
    }
    const double lin = gv * (u - v);
    const double d = pu - pv - lin;
    if (d >= 0.0) {
        return d;
    }
    const double scale = std::max({1.0, std::abs(pu), std::abs(pv), std::abs(lin)});
    if (d >= -1e-12 * scale) {
        return 0.0;
    }
    std::ostringstream msg;
    msg << "negative Bregman divergence " << d << " at (" << u << ", " << v << ")";
    throw InvariantViolation(msg.str());
}

double max_label_flip_gap(const LossDescriptor& loss, const ProbeGrid& axis) {
    const auto gen = generator_from_loss(loss);
    const auto pts = axis.points();
    double worst = 0.0;
    for (double u : pts) {
        for (double v : pts) {
            const double a = divergence(gen, u, v);
            const double b = divergence(gen, -u, -v);
            worst = std::max(worst, std::abs(a - b) / std::max({1.0, a, b}));
        }
    }
    return worst;
}

bool label_flip_symmetric(const LossDescriptor& loss, const ProbeGrid& axis, double tol) {
    return max_label_flip_gap(loss, axis) <= tol;
}

bool label_flip_symmetric(const LossDescriptor& loss) {
    return label_flip_symmetric(loss, ProbeGrid{-5.0, 5.0, 41}, default_symmetry_tol(loss));
}

double conjugate(const BregmanGenerator& gen, double v, double tol) {
    double lo = gen.domain.lo;
    double hi = gen.domain.hi;
    if (std::isfinite(lo) && std::isfinite(hi)) {
        const double width = hi - lo;
        lo += kProbEps * width;
        hi -= kProbEps * width;
    }
    auto objective = [&](double p) { return p * v - gen.phi(p); };
    const auto res = golden_section_max(objective, lo, hi, tol, 200, 0.5);
    if (!res.converged) {
        std::ostringstream msg;
        msg << "conjugate search at v = " << v << " did not converge in 200 iterations";
        throw NumericError(msg.str());
    }
    if (!std::isfinite(res.value)) {
        throw NumericError("non-finite conjugate value");
    }
    return res.value;
}

LimitAnchor limit_anchor(const LossDescriptor& loss) {
    if (!classify_gradient_symmetry(loss)) {
        throw InapplicableError("limit-Bregman representation requires a gradient-symmetric loss; '" +
                                loss.name + "' is not");
    }
    LimitAnchor anchor;
    double lo = -50.0;
    double hi = 50.0;
    if (loss.tabulated_range) {
        lo = std::max(lo, loss.tabulated_range->lo);
        hi = std::min(hi, loss.tabulated_range->hi);
    }
    const double root = loss.known.minimiser ? *loss.known.minimiser : bisect_increasing(loss.grad, lo, hi);
    if (std::isfinite(root)) {
        anchor.g_plus = root;
        anchor.g_minus = -root;
        if (loss.tabulated_range && (root >= hi - 1e-9 || root <= lo + 1e-9)) {
            anchor.regime_ambiguous = true;
        }
    } else if (loss.grad(hi) < 0) {
        anchor.g_plus = kInf;
        anchor.g_minus = -kInf;
        anchor.regime_ambiguous = loss.tabulated_range.has_value();
    } else {
        throw NumericError("loss '" + loss.name + "' has no minimiser with positive margin");
    }
    return anchor;
}

LimitBregmanResult limit_bregman_loss(const LossDescriptor& loss, int y, double f,
                                      const LimitAnchor& anchor) {
    if (y != 1 && y != -1) {
        throw ParameterError("label must be +1 or -1");
    }
    const auto gen = generator_from_loss(loss);
    const double g = y > 0 ? anchor.g_plus : anchor.g_minus;
    if (std::isfinite(g)) {
        return {divergence(gen, f, g), std::nullopt, false};
    }
    const double sign = g > 0 ? 1.0 : -1.0;
    constexpr int kMaxDoublings = 30;
    constexpr int kMaxColumns = 6;
    constexpr double kSettle = 1e-9;
    std::vector<std::array<double, kMaxColumns + 1>> table;
    double level = anchor.truncation_G;
    double last = 0.0;
    for (int k = 0; k <= kMaxDoublings; ++k, level *= 2.0) {
        const double raw = divergence(gen, f, sign * level);
        std::array<double, kMaxColumns + 1> row{};
        row[0] = raw;
        const int depth = std::min(k, kMaxColumns);
        for (int j = 1; j <= depth; ++j) {
            const double factor = std::ldexp(1.0, j) - 1.0;
            row[j] = row[j - 1] + (row[j - 1] - table[k - 1][j - 1]) / factor;
        }
        last = row[depth];
        if (k > 0) {
            if (std::abs(raw - table[k - 1][0]) < kSettle) {
                return {raw, level, false};
            }
            const int prev_depth = std::min(k - 1, kMaxColumns);
            if (k >= 2 && std::abs(row[depth] - table[k - 1][prev_depth]) < kSettle) {
                return {row[depth], level, true};
            }
        }
        table.push_back(row);
    }
    std::ostringstream msg;
    msg << "limit-Bregman value for '" << loss.name << "' at f = " << f
        << " did not settle by G = " << level / 2.0;
    throw TruncationError(msg.str(), last, level / 2.0);
}

}  // namespace marginbv
