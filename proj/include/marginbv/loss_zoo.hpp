#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "marginbv/numeric.hpp"

namespace marginbv {

// Closed forms for the probability-side objects of a loss. Any member may be
// empty; consumers fall back to numeric routes when it is.
struct KnownForms {
    ScalarFn link;                         // p -> psi(p)
    ScalarFn inverse_link;                 // f -> q
    ScalarFn min_risk;                     // p -> minimum pointwise risk
    ScalarFn neg_min_risk_grad;            // p -> derivative of the negative minimum risk
    ScalarFn neg_min_risk_grad_inverse;    // inverse of the above
    ScalarFn conjugate;                    // v -> Legendre transform of the negative minimum risk
    std::optional<double> minimiser;       // argmin of l when it is finite
    // Domain on which the closed-form negative minimum risk is a valid convex
    // generator. Defaults to [0, 1]; polynomial forms extend to the real line.
    Interval neg_min_risk_domain{0.0, 1.0};
};

// A margin loss v -> l(v) with its derivative.
struct LossDescriptor {
    std::string name;
    ScalarFn eval;
    ScalarFn grad;
    bool grad_is_analytic = true;
    std::map<std::string, double> params;
    std::optional<double> known_c;
    KnownForms known;
    // Set for tabulated losses: the range the table covers.
    std::optional<Interval> tabulated_range;

    double operator()(double v) const { return eval(v); }
};

struct LossSpec {
    std::string name;
    std::map<std::string, double> params;
};

std::vector<std::string> builtin_loss_names();

// Table of catalogue losses: squared, logistic, canonical_boosting, laplacian,
// exponential, smooth_hinge (parameter t, default 10).
LossDescriptor builtin_loss(const std::string& name,
                            const std::map<std::string, double>& params = {});

// Parses "<name>[:<param>=<value>[,<param>=<value>...]]".
LossSpec parse_loss_spec(const std::string& text);
LossDescriptor loss_from_spec(const std::string& text);

// Loss given as (v, l(v)) samples, interpolated by a monotone-preserving cubic
// (Fritsch-Carlson) and differentiated by central differences.
LossDescriptor tabulated_loss(const std::string& name, std::vector<double> margins,
                              std::vector<double> values);

// Default tolerance for gradient-symmetry and related constancy checks.
double default_symmetry_tol(const LossDescriptor& loss);

// Returns c when l'(v) + l'(-v) is constant on the grid within tol.
std::optional<double> classify_gradient_symmetry(const LossDescriptor& loss,
                                                 const ProbeGrid& grid, double tol);
std::optional<double> classify_gradient_symmetry(const LossDescriptor& loss);

struct EvenOddParts {
    ScalarFn even;
    ScalarFn odd;
    std::optional<double> odd_slope;
};

EvenOddParts even_odd_split(const LossDescriptor& loss, const ProbeGrid& grid, double tol);
EvenOddParts even_odd_split(const LossDescriptor& loss);

// Largest |grad(v) - central difference| on the grid, with h = 1e-5 max(1,|v|),
// scaled by max(1, l(v)). Points with |v| < skip_radius are skipped.
double max_gradient_fd_error(const LossDescriptor& loss, const ProbeGrid& grid,
                             double skip_radius = 0.0);

// Midpoint chord test over pairs at several spacings on the grid.
bool is_strictly_convex_on(const LossDescriptor& loss, const ProbeGrid& grid);

}  // namespace marginbv
