#include "marginbv/loss_zoo.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "marginbv/errors.hpp"

namespace marginbv {

namespace {

void reject_params(const std::string& name, const std::map<std::string, double>& params,
                   std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : params) {
        bool ok = false;
        for (const char* a : allowed) {
            ok = ok || key == a;
        }
        if (!ok) {
            throw ParameterError("loss '" + name + "' has no parameter '" + key + "'");
        }
    }
}

double sqrt_pq(double p) { return std::sqrt(p * (1.0 - p)); }

// Inverse of p -> (2p - 1) / sqrt(p(1 - p)), written to avoid cancellation for f << 0.
double half_logit_like_inverse(double f) {
    const double s = std::sqrt(f * f + 4.0);
    if (f >= 0) {
        return 0.5 * (1.0 + f / s);
    }
    return 2.0 / (s * (s - f));
}

LossDescriptor make_squared() {
    LossDescriptor d;
    d.name = "squared";
    d.eval = [](double v) { return (1.0 - v) * (1.0 - v); };
    d.grad = [](double v) { return 2.0 * (v - 1.0); };
    d.known_c = -4.0;
    d.known.link = [](double p) { return 2.0 * p - 1.0; };
    d.known.inverse_link = [](double f) { return 0.5 * (f + 1.0); };
    d.known.min_risk = [](double p) { return 4.0 * p * (1.0 - p); };
    d.known.neg_min_risk_grad = [](double p) { return 8.0 * p - 4.0; };
    d.known.neg_min_risk_grad_inverse = [](double y) { return (y + 4.0) / 8.0; };
    d.known.conjugate = [](double v) { return (1.0 + v / 4.0) * (1.0 + v / 4.0); };
    d.known.minimiser = 1.0;
    // -4p(1-p) is a polynomial; its convex extension to the real line is the
    // generator whose Legendre transform is (1 + v/4)^2 for every v.
    d.known.neg_min_risk_domain = Interval::real_line();
    return d;
}

LossDescriptor make_logistic() {
    LossDescriptor d;
    d.name = "logistic";
    d.eval = [](double v) { return softplus(-v); };
    d.grad = [](double v) { return -sigmoid(-v); };
    d.known_c = -1.0;
    d.known.link = [](double p) { return logit(p); };
    d.known.inverse_link = [](double f) { return sigmoid(f); };
    d.known.min_risk = [](double p) { return -xlogx(p) - xlogx(1.0 - p); };
    d.known.neg_min_risk_grad = [](double p) { return logit(p); };
    d.known.neg_min_risk_grad_inverse = [](double y) { return sigmoid(y); };
    d.known.conjugate = [](double v) { return softplus(v); };
    return d;
}

LossDescriptor make_canonical_boosting() {
    LossDescriptor d;
    d.name = "canonical_boosting";
    d.eval = [](double v) {
        const double s = std::sqrt(v * v + 4.0);
        return v > 0 ? 2.0 / (s + v) : 0.5 * (s - v);
    };
    d.grad = [](double v) {
        const double s = std::sqrt(v * v + 4.0);
        return v > 0 ? -2.0 / (s * (s + v)) : v / (2.0 * s) - 0.5;
    };
    d.known_c = -1.0;
    d.known.link = [](double p) { return (2.0 * p - 1.0) / sqrt_pq(p); };
    d.known.inverse_link = half_logit_like_inverse;
    d.known.min_risk = [](double p) { return 2.0 * sqrt_pq(p); };
    d.known.neg_min_risk_grad = [](double p) { return (2.0 * p - 1.0) / sqrt_pq(p); };
    d.known.neg_min_risk_grad_inverse = half_logit_like_inverse;
    d.known.conjugate = [](double v) {
        const double s = std::sqrt(v * v + 4.0);
        return v < 0 ? 2.0 / (s - v) : 0.5 * (s + v);
    };
    return d;
}

LossDescriptor make_laplacian() {
    LossDescriptor d;
    d.name = "laplacian";
    d.eval = [](double v) { return v >= 0 ? 0.5 * std::exp(-v) : 0.5 * std::exp(v) - v; };
    d.grad = [](double v) { return v >= 0 ? -0.5 * std::exp(-v) : -1.0 + 0.5 * std::exp(v); };
    d.known_c = -1.0;
    // Link and minimum risk are left to the numeric route.
    d.known.conjugate = [](double v) { return 0.5 * (std::exp(-std::abs(v)) + std::abs(v) + v); };
    return d;
}

LossDescriptor make_exponential() {
    LossDescriptor d;
    d.name = "exponential";
    d.eval = [](double v) { return std::exp(-v); };
    d.grad = [](double v) { return -std::exp(-v); };
    d.known.link = [](double p) { return 0.5 * logit(p); };
    d.known.inverse_link = [](double f) { return sigmoid(2.0 * f); };
    d.known.min_risk = [](double p) { return 2.0 * sqrt_pq(p); };
    d.known.neg_min_risk_grad = [](double p) { return (2.0 * p - 1.0) / sqrt_pq(p); };
    d.known.neg_min_risk_grad_inverse = half_logit_like_inverse;
    return d;
}

LossDescriptor make_smooth_hinge(double t) {
    if (!(t > 0) || !std::isfinite(t)) {
        throw ParameterError("smooth_hinge requires t > 0");
    }
    LossDescriptor d;
    d.name = "smooth_hinge";
    d.params["t"] = t;
    d.eval = [t](double v) { return softplus(-t * (v - 1.0)) / t; };
    d.grad = [t](double v) { return -sigmoid(-t * (v - 1.0)); };
    return d;
}

// Fritsch-Carlson monotone cubic Hermite interpolant with linear extrapolation.
class MonotoneCubic {
public:
    MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        std::vector<double> delta(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) {
            delta[k] = (y_[k + 1] - y_[k]) / (x_[k + 1] - x_[k]);
        }
        m_.assign(n, 0.0);
        m_[0] = delta[0];
        m_[n - 1] = delta[n - 2];
        for (std::size_t k = 1; k + 1 < n; ++k) {
            m_[k] = delta[k - 1] * delta[k] <= 0 ? 0.0 : 0.5 * (delta[k - 1] + delta[k]);
        }
        for (std::size_t k = 0; k + 1 < n; ++k) {
            if (delta[k] == 0.0) {
                m_[k] = 0.0;
                m_[k + 1] = 0.0;
                continue;
            }
            const double a = m_[k] / delta[k];
            const double b = m_[k + 1] / delta[k];
            const double r = a * a + b * b;
            if (r > 9.0) {
                const double tau = 3.0 / std::sqrt(r);
                m_[k] = tau * a * delta[k];
                m_[k + 1] = tau * b * delta[k];
            }
        }
    }

    double operator()(double v) const {
        const std::size_t n = x_.size();
        if (v <= x_.front()) {
            return y_.front() + m_.front() * (v - x_.front());
        }
        if (v >= x_.back()) {
            return y_.back() + m_.back() * (v - x_.back());
        }
        auto it = std::upper_bound(x_.begin(), x_.end(), v);
        std::size_t k = static_cast<std::size_t>(it - x_.begin()) - 1;
        k = std::min(k, n - 2);
        const double h = x_[k + 1] - x_[k];
        const double s = (v - x_[k]) / h;
        const double s2 = s * s;
        const double s3 = s2 * s;
        return (2 * s3 - 3 * s2 + 1) * y_[k] + (s3 - 2 * s2 + s) * h * m_[k] +
               (-2 * s3 + 3 * s2) * y_[k + 1] + (s3 - s2) * h * m_[k + 1];
    }

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;
};

}  // namespace

std::vector<std::string> builtin_loss_names() {
    return {"squared", "logistic", "canonical_boosting", "laplacian", "exponential", "smooth_hinge"};
}

LossDescriptor builtin_loss(const std::string& name, const std::map<std::string, double>& params) {
    if (name == "smooth_hinge") {
        reject_params(name, params, {"t"});
        auto it = params.find("t");
        return make_smooth_hinge(it == params.end() ? 10.0 : it->second);
    }
    LossDescriptor d;
    if (name == "squared") {
        d = make_squared();
    } else if (name == "logistic") {
        d = make_logistic();
    } else if (name == "canonical_boosting") {
        d = make_canonical_boosting();
    } else if (name == "laplacian") {
        d = make_laplacian();
    } else if (name == "exponential") {
        d = make_exponential();
    } else {
        throw CatalogueError("unknown loss '" + name + "'");
    }
    reject_params(name, params, {});
    return d;
}

LossSpec parse_loss_spec(const std::string& text) {
    LossSpec spec;
    const auto colon = text.find(':');
    spec.name = text.substr(0, colon);
    if (spec.name.empty()) {
        throw ParameterError("empty loss name");
    }
    if (colon == std::string::npos) {
        return spec;
    }
    std::stringstream rest(text.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ParameterError("malformed loss parameter '" + item + "'");
        }
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        std::size_t used = 0;
        double x = 0;
        try {
            x = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != value.size()) {
            throw ParameterError("loss parameter '" + key + "' is not a number: '" + value + "'");
        }
        spec.params[key] = x;
    }
    return spec;
}

LossDescriptor loss_from_spec(const std::string& text) {
    const LossSpec spec = parse_loss_spec(text);
    return builtin_loss(spec.name, spec.params);
}

LossDescriptor tabulated_loss(const std::string& name, std::vector<double> margins,
                              std::vector<double> values) {
    if (margins.size() != values.size() || margins.size() < 4) {
        throw ParameterError("tabulated loss needs at least 4 (v, l(v)) pairs");
    }
    for (std::size_t k = 0; k < margins.size(); ++k) {
        if (!std::isfinite(margins[k]) || !std::isfinite(values[k]) || values[k] < 0) {
            throw ParameterError("tabulated loss values must be finite and non-negative");
        }
        if (k > 0 && !(margins[k] > margins[k - 1])) {
            throw ParameterError("tabulated loss margins must be strictly increasing");
        }
    }
    LossDescriptor d;
    d.name = name;
    d.grad_is_analytic = false;
    d.tabulated_range = Interval{margins.front(), margins.back()};
    auto interp = std::make_shared<const MonotoneCubic>(std::move(margins), std::move(values));
    d.eval = [interp](double v) { return (*interp)(v); };
    d.grad = [interp](double v) {
        const double h = 1e-6 * std::max(1.0, std::abs(v));
        return ((*interp)(v + h) - (*interp)(v - h)) / (2.0 * h);
    };
    return d;
}

double default_symmetry_tol(const LossDescriptor& loss) {
    return loss.grad_is_analytic ? 1e-8 : 1e-5;
}

std::optional<double> classify_gradient_symmetry(const LossDescriptor& loss, const ProbeGrid& grid,
                                                 double tol) {
    if (!grid.symmetric() || grid.count < 101) {
        throw ParameterError("gradient-symmetry grid must be symmetric about 0 with >= 101 points");
    }
    if (!(tol > 0)) {
        throw ParameterError("gradient-symmetry tolerance must be positive");
    }
    double lo = kInf;
    double hi = -kInf;
    double sum = 0.0;
    const auto pts = grid.points();
    for (double v : pts) {
        const double s = loss.grad(v) + loss.grad(-v);
        if (!std::isfinite(s)) {
            std::ostringstream msg;
            msg << "non-finite gradient of '" << loss.name << "' at v = " << v;
            throw NumericError(msg.str());
        }
        lo = std::min(lo, s);
        hi = std::max(hi, s);
        sum += s;
    }
    if (hi - lo > tol) {
        return std::nullopt;
    }
    const double c = sum / static_cast<double>(pts.size());
    if (loss.known_c && std::abs(*loss.known_c - c) > tol) {
        std::ostringstream msg;
        msg << "gradient-symmetry constant of '" << loss.name << "' measured " << c
            << " but catalogue states " << *loss.known_c;
        throw InvariantViolation(msg.str());
    }
    return c;
}

std::optional<double> classify_gradient_symmetry(const LossDescriptor& loss) {
    return classify_gradient_symmetry(loss, ProbeGrid{}, default_symmetry_tol(loss));
}

EvenOddParts even_odd_split(const LossDescriptor& loss, const ProbeGrid& grid, double tol) {
    if (!grid.symmetric()) {
        throw ParameterError("even/odd split grid must be symmetric about 0");
    }
    auto eval = loss.eval;
    EvenOddParts parts;
    parts.even = [eval](double v) { return 0.5 * (eval(v) + eval(-v)); };
    parts.odd = [eval](double v) { return 0.5 * (eval(v) - eval(-v)); };

    const double b = parts.odd(1.0);
    bool linear = true;
    for (double v : grid.points()) {
        if (std::abs(parts.odd(v) - b * v) > tol) {
            linear = false;
            break;
        }
    }
    if (linear) {
        parts.odd_slope = b;
        if (auto c = classify_gradient_symmetry(loss, grid.count >= 101 ? grid : ProbeGrid{},
                                                default_symmetry_tol(loss));
            c && std::abs(b - *c / 2.0) > std::max(tol, default_symmetry_tol(loss))) {
            std::ostringstream msg;
            msg << "odd slope " << b << " of '" << loss.name << "' differs from c/2 = " << *c / 2.0;
            throw InvariantViolation(msg.str());
        }
    }
    return parts;
}

EvenOddParts even_odd_split(const LossDescriptor& loss) {
    return even_odd_split(loss, ProbeGrid{}, default_symmetry_tol(loss));
}

double max_gradient_fd_error(const LossDescriptor& loss, const ProbeGrid& grid, double skip_radius) {
    double worst = 0.0;
    for (double v : grid.points()) {
        if (std::abs(v) < skip_radius) {
            continue;
        }
        const double h = 1e-5 * std::max(1.0, std::abs(v));
        const double fd = (loss.eval(v + h) - loss.eval(v - h)) / (2.0 * h);
        const double err = std::abs(loss.grad(v) - fd) / std::max(1.0, std::abs(loss.eval(v)));
        worst = std::max(worst, err);
    }
    return worst;
}

bool is_strictly_convex_on(const LossDescriptor& loss, const ProbeGrid& grid) {
    const auto pts = grid.points();
    const std::size_t n = pts.size();
    for (std::size_t stride : {std::size_t{1}, std::size_t{10}, n / 4}) {
        if (stride == 0) {
            continue;
        }
        for (std::size_t k = 0; k + 2 * stride < n; k += stride) {
            const double a = pts[k];
            const double b = pts[k + 2 * stride];
            for (double lambda : {0.25, 0.5, 0.75}) {
                const double x = lambda * a + (1.0 - lambda) * b;
                const double chord = lambda * loss.eval(a) + (1.0 - lambda) * loss.eval(b);
                const double fx = loss.eval(x);
                const double scale = std::max({1.0, std::abs(chord), std::abs(fx)});
                if (fx - chord > 1e-12 * scale) {
                    return false;
                }
                // Strictness is required on wide chords, where curvature beats rounding.
                if (stride == n / 4 && !(fx < chord)) {
                    return false;
                }
            }
        }
    }
    return true;
}

}  // namespace marginbv
