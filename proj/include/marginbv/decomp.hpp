#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marginbv/loss_zoo.hpp"
#include "marginbv/matrix.hpp"
#include "marginbv/risk_link.hpp"

namespace marginbv {

// Margins f(x_j; D_i) of M models on N points. Expectations over training
// sets are weighted means over rows; expectations over data are uniform means
// over columns.
struct MarginSampleMatrix {
    Matrix margins;
    std::vector<double> weights;

    MarginSampleMatrix() = default;
    explicit MarginSampleMatrix(Matrix m);
    MarginSampleMatrix(Matrix m, std::vector<double> w);

    std::size_t model_count() const { return margins.rows(); }
    std::size_t point_count() const { return margins.cols(); }

    // Throws ParameterError on non-finite entries or bad weights.
    void validate() const;

    // f*_j: weighted mean of column j.
    std::vector<double> central_model() const;
};

struct DecompositionReport {
    std::string theorem_id;
    // Human-readable form of the identity the components satisfy.
    std::string identity;
    double expected_risk = 0.0;
    std::map<std::string, double> components;
    // expected_risk minus the identity's right-hand side.
    double residual = 0.0;
    double residual_tolerance = 1e-9;
    std::map<std::string, double> diagnostics;
    std::map<std::string, std::vector<double>> per_point;
    std::vector<std::string> flags;
    std::vector<std::string> notes;

    double relative_residual() const;
    bool within_tolerance() const { return relative_residual() <= residual_tolerance; }
};

struct DecompOptions {
    bool per_point = false;
    unsigned threads = 1;
};

// Decomposition identifiers used in reports.
namespace theorem {
inline constexpr const char* kMarginVariance = "margin_variance";
inline constexpr const char* kGradientSymmetric = "gradient_symmetric_bias_variance";
inline constexpr const char* kBuja = "probability_bias_variance";
inline constexpr const char* kLinearOdd = "linear_odd";
inline constexpr const char* kNoiseBias = "noise_bias_split";
}  // namespace theorem

// Expected risk = risk of the central model + margin variance.
DecompositionReport margin_variance_decomposition(const LossDescriptor& loss,
                                                  const MarginSampleMatrix& samples,
                                                  std::span<const int> labels,
                                                  const DecompOptions& opts = {});

// Mean over points of sum_i w_i B_l(f_ij, f*_j), with no reference to labels.
double label_free_variance(const LossDescriptor& loss, const MarginSampleMatrix& samples);

// Expected risk = bias + noise (risk of f*) + label-free variance. Only valid
// for gradient-symmetric losses; others raise InapplicableError.
DecompositionReport bv_decomposition_gradient_symmetric(const LossDescriptor& loss,
                                                        const MarginSampleMatrix& samples,
                                                        std::span<const int> labels,
                                                        const DecompOptions& opts = {});

struct BujaInputs {
    std::vector<double> posteriors;
    Matrix implied_probabilities;
    std::vector<double> centroid;
    std::size_t clamped = 0;
};

// q = inverse link of every margin and the centroid q* solving
// -L'(q*) = E_D[-L'(q)].
BujaInputs buja_inputs(const LinkBundle& bundle, const MarginSampleMatrix& samples,
                       std::span<const double> posteriors);

// Expected excess risk = B_{-L}(p, q*) + E_D B_{-L}(q*, q).
DecompositionReport buja_decomposition(const LossDescriptor& loss, const LinkBundle& bundle,
                                       const MarginSampleMatrix& samples,
                                       std::span<const double> posteriors,
                                       const DecompOptions& opts = {});

// Expected risk = E[b Y* f*] + E[E_D l_e(f)] for linear odd losses.
// Y* = 2p - 1 when posteriors are given, the observed label otherwise.
DecompositionReport lol_decomposition(const LossDescriptor& loss, const EvenOddParts& parts,
                                      const MarginSampleMatrix& samples,
                                      std::span<const int> labels,
                                      std::optional<std::span<const double>> posteriors = std::nullopt,
                                      const DecompOptions& opts = {});

struct NoiseBiasSplit {
    std::vector<double> noise;
    std::vector<double> bias;
    std::vector<double> central_risk;
    // Noise written as E_Y B_{-L}(Y_{0/1}, p) + L(0); agrees with `noise`.
    std::vector<double> noise_bregman;
    double l0_offset = 0.0;
    std::size_t clamped = 0;
    bool bregman_fallback = false;
};

NoiseBiasSplit noise_bias_split(const LossDescriptor& loss, const LinkBundle& bundle,
                                std::span<const double> f_star, std::span<const double> posteriors);

// Report wrapper: risk of f* = noise + bias.
DecompositionReport noise_bias_report(const LossDescriptor& loss, const LinkBundle& bundle,
                                      std::span<const double> f_star,
                                      std::span<const double> posteriors,
                                      const DecompOptions& opts = {});

}  // namespace marginbv
