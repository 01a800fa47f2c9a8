#include "marginbv/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "marginbv/bregman.hpp"
#include "marginbv/errors.hpp"

namespace marginbv {

MarginSampleMatrix::MarginSampleMatrix(Matrix m)
    : margins(std::move(m)),
      weights(margins.rows(), margins.rows() ? 1.0 / static_cast<double>(margins.rows()) : 0.0) {}

MarginSampleMatrix::MarginSampleMatrix(Matrix m, std::vector<double> w)
    : margins(std::move(m)), weights(std::move(w)) {}

void MarginSampleMatrix::validate() const {
    if (margins.rows() == 0 || margins.cols() == 0) {
        throw ParameterError("margin matrix needs at least one model and one point");
    }
    if (weights.size() != margins.rows()) {
        throw ParameterError("one weight per model is required");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ParameterError("model weights must be finite and non-negative");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ParameterError("model weights must sum to 1");
    }
    for (double x : margins.data()) {
        if (!std::isfinite(x)) {
            throw ParameterError("margin matrix contains a non-finite entry");
        }
    }
}

std::vector<double> MarginSampleMatrix::central_model() const {
    std::vector<double> out(point_count());
    for (std::size_t j = 0; j < point_count(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < model_count(); ++i) {
            s += weights[i] * margins(i, j);
        }
        out[j] = s;
    }
    return out;
}

double DecompositionReport::relative_residual() const {
    return std::abs(residual) / std::max(1.0, std::abs(expected_risk));
}

namespace {

void check_labels(std::span<const int> labels, std::size_t n) {
    if (labels.size() != n) {
        throw ParameterError("one label per point is required");
    }
    for (int y : labels) {
        if (y != 1 && y != -1) {
            throw ParameterError("labels must be +1 or -1");
        }
    }
}

void check_posteriors(std::span<const double> p, std::size_t n, bool open) {
    if (p.size() != n) {
        throw ParameterError("one posterior per point is required");
    }
    for (double x : p) {
        const bool ok = open ? (x > 0.0 && x < 1.0) : (x >= 0.0 && x <= 1.0);
        if (!ok) {
            throw ParameterError(open ? "posteriors must lie in (0, 1)" : "posteriors must lie in [0, 1]");
        }
    }
}

double located_divergence(const BregmanGenerator& gen, double u, double v, std::size_t i,
                          std::size_t j) {
    try {
        return divergence(gen, u, v);
    } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << e.what() << " (model " << i << ", point " << j << ")";
        throw NumericError(msg.str());
    }
}

double residual_tolerance_for(const LossDescriptor& loss) {
    return loss.grad_is_analytic ? 1e-9 : 1e-6;
}

void finish(DecompositionReport& r) {
    if (!r.within_tolerance()) {
        r.flags.push_back("residual_exceeds_tolerance");
    }
}

// Column means of several per-point series, summed in index order.
double mean_of(const std::vector<double>& v) { return ordered_mean(v); }

}  // namespace

DecompositionReport margin_variance_decomposition(const LossDescriptor& loss,
                                                  const MarginSampleMatrix& samples,
                                                  std::span<const int> labels,
                                                  const DecompOptions& opts) {
    samples.validate();
    const std::size_t n = samples.point_count();
    const std::size_t m = samples.model_count();
    check_labels(labels, n);
    const auto gen = generator_from_loss(loss);
    const auto f_star = samples.central_model();

    std::vector<double> risk(n), central(n), spread(n);
    parallel_for(n, opts.threads, [&](std::size_t j) {
        const double y = labels[j];
        double r = 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double f = samples.margins(i, j);
            r += samples.weights[i] * loss.eval(y * f);
            s += samples.weights[i] * located_divergence(gen, y * f, y * f_star[j], i, j);
        }
        risk[j] = r;
        central[j] = loss.eval(y * f_star[j]);
        spread[j] = s;
    });

    DecompositionReport rep;
    rep.theorem_id = theorem::kMarginVariance;
    rep.identity = "expected_risk = central_risk + margin_variance";
    rep.residual_tolerance = residual_tolerance_for(loss);
    rep.expected_risk = mean_of(risk);
    rep.components["central_risk"] = mean_of(central);
    rep.components["margin_variance"] = mean_of(spread);
    rep.residual = rep.expected_risk - (rep.components["central_risk"] + rep.components["margin_variance"]);
    if (opts.per_point) {
        rep.per_point["expected_risk"] = risk;
        rep.per_point["central_risk"] = central;
        rep.per_point["margin_variance"] = spread;
        rep.per_point["central_margin"] = f_star;
    }
    finish(rep);
    return rep;
}

double label_free_variance(const LossDescriptor& loss, const MarginSampleMatrix& samples) {
    samples.validate();
    const auto gen = generator_from_loss(loss);
    const auto f_star = samples.central_model();
    std::vector<double> spread(samples.point_count());
    for (std::size_t j = 0; j < samples.point_count(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < samples.model_count(); ++i) {
            s += samples.weights[i] * located_divergence(gen, samples.margins(i, j), f_star[j], i, j);
        }
        spread[j] = s;
    }
    return mean_of(spread);
}

DecompositionReport bv_decomposition_gradient_symmetric(const LossDescriptor& loss,
                                                        const MarginSampleMatrix& samples,
                                                        std::span<const int> labels,
                                                        const DecompOptions& opts) {
    if (!classify_gradient_symmetry(loss)) {
        throw InapplicableError(
            "a label-free variance term exists if and only if the loss is gradient-symmetric; '" +
            loss.name + "' is not");
    }
    samples.validate();
    const std::size_t n = samples.point_count();
    const std::size_t m = samples.model_count();
    check_labels(labels, n);
    const auto gen = generator_from_loss(loss);
    const auto f_star = samples.central_model();

    std::vector<double> risk(n), central(n), spread(n), margin_spread(n);
    parallel_for(n, opts.threads, [&](std::size_t j) {
        const double y = labels[j];
        double r = 0.0;
        double s = 0.0;
        double ms = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double f = samples.margins(i, j);
            r += samples.weights[i] * loss.eval(y * f);
            s += samples.weights[i] * located_divergence(gen, f, f_star[j], i, j);
            ms += samples.weights[i] * located_divergence(gen, y * f, y * f_star[j], i, j);
        }
        risk[j] = r;
        central[j] = loss.eval(y * f_star[j]);
        spread[j] = s;
        margin_spread[j] = ms;
    });

    DecompositionReport rep;
    rep.theorem_id = theorem::kGradientSymmetric;
    rep.identity = "expected_risk = bias_plus_noise + variance";
    rep.residual_tolerance = residual_tolerance_for(loss);
    rep.expected_risk = mean_of(risk);
    rep.components["bias_plus_noise"] = mean_of(central);
    rep.components["variance"] = mean_of(spread);
    rep.residual = rep.expected_risk - (rep.components["bias_plus_noise"] + rep.components["variance"]);
    const double gap = std::abs(rep.components["variance"] - mean_of(margin_spread));
    rep.diagnostics["margin_variance_gap"] = gap;
    if (gap > 1e-10 * std::max(1.0, rep.components["variance"])) {
        rep.flags.push_back("variance_differs_from_margin_variance");
    }
    if (opts.per_point) {
        rep.per_point["expected_risk"] = risk;
        rep.per_point["bias_plus_noise"] = central;
        rep.per_point["variance"] = spread;
        rep.per_point["central_margin"] = f_star;
    }
    finish(rep);
    return rep;
}

BujaInputs buja_inputs(const LinkBundle& bundle, const MarginSampleMatrix& samples,
                       std::span<const double> posteriors) {
    samples.validate();
    const std::size_t n = samples.point_count();
    const std::size_t m = samples.model_count();
    check_posteriors(posteriors, n, true);
    BujaInputs in;
    in.posteriors.assign(posteriors.begin(), posteriors.end());
    in.implied_probabilities = Matrix(m, n);
    in.centroid.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        double dual_mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const auto ip = bundle.inverse_link(samples.margins(i, j));
            in.clamped += ip.clamped ? 1 : 0;
            in.implied_probabilities(i, j) = ip.q;
            dual_mean += samples.weights[i] * bundle.neg_min_risk_grad(ip.q);
        }
        in.centroid[j] = bundle.neg_min_risk_grad_inverse(dual_mean);
    }
    return in;
}

DecompositionReport buja_decomposition(const LossDescriptor& loss, const LinkBundle& bundle,
                                       const MarginSampleMatrix& samples,
                                       std::span<const double> posteriors,
                                       const DecompOptions& opts) {
    const BujaInputs in = buja_inputs(bundle, samples, posteriors);
    const std::size_t n = samples.point_count();
    const std::size_t m = samples.model_count();
    const auto gen = neg_min_risk_generator(bundle);
    const auto f_star = samples.central_model();

    std::vector<double> excess(n), bias(n), variance(n), direct(n), centroid_gap(n);
    parallel_for(n, opts.threads, [&](std::size_t j) {
        const double p = in.posteriors[j];
        const double q_star = in.centroid[j];
        double ex = 0.0;
        double var = 0.0;
        double risk = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double q = in.implied_probabilities(i, j);
            ex += samples.weights[i] * located_divergence(gen, p, q, i, j);
            var += samples.weights[i] * located_divergence(gen, q_star, q, i, j);
            risk += samples.weights[i] * pointwise_risk(loss, p, samples.margins(i, j));
        }
        excess[j] = ex;
        variance[j] = var;
        bias[j] = located_divergence(gen, p, q_star, m, j);
        direct[j] = risk - bundle.min_risk(p);
        centroid_gap[j] = std::abs(bundle.link(q_star) - f_star[j]);
    });

    DecompositionReport rep;
    rep.theorem_id = theorem::kBuja;
    rep.identity = "expected_excess_risk = bias + variance";
    rep.residual_tolerance = loss.grad_is_analytic ? 1e-8 : 1e-6;
    rep.expected_risk = mean_of(excess);
    rep.components["bias"] = mean_of(bias);
    rep.components["variance"] = mean_of(variance);
    rep.residual = rep.expected_risk - (rep.components["bias"] + rep.components["variance"]);
    rep.diagnostics["excess_risk_from_pointwise_risk"] = mean_of(direct);
    rep.diagnostics["max_centroid_gap"] = *std::max_element(centroid_gap.begin(), centroid_gap.end());
    const double clamped_fraction =
        static_cast<double>(in.clamped) / static_cast<double>(m * n);
    rep.diagnostics["clamped_fraction"] = clamped_fraction;
    if (clamped_fraction > 0.10) {
        rep.flags.push_back("clamped_fraction_above_10_percent");
    } else if (in.clamped > 0) {
        rep.notes.push_back("some margins were clamped into the invertible range of the link");
    }
    if (opts.per_point) {
        rep.per_point["excess_risk"] = excess;
        rep.per_point["bias"] = bias;
        rep.per_point["variance"] = variance;
        rep.per_point["centroid_probability"] = in.centroid;
    }
    finish(rep);
    return rep;
}

DecompositionReport lol_decomposition(const LossDescriptor& loss, const EvenOddParts& parts,
                                      const MarginSampleMatrix& samples,
                                      std::span<const int> labels,
                                      std::optional<std::span<const double>> posteriors,
                                      const DecompOptions& opts) {
    if (!parts.odd_slope) {
        throw InapplicableError("loss '" + loss.name + "' is not linear odd");
    }
    samples.validate();
    const std::size_t n = samples.point_count();
    const std::size_t m = samples.model_count();
    check_labels(labels, n);
    if (posteriors) {
        check_posteriors(*posteriors, n, false);
    }
    const double b = *parts.odd_slope;
    const auto f_star = samples.central_model();
    // The cross-check against the gradient-symmetric decomposition needs a
    // convex loss; a non-convex even part only gets the Jensen gap.
    const bool gradient_symmetric =
        classify_gradient_symmetry(loss).has_value() && is_strictly_convex_on(loss, ProbeGrid{});
    const auto gen = generator_from_loss(loss);

    std::vector<double> risk(n), margin_term(n), even_term(n), central_risk(n), jensen(n),
        spread(n);
    parallel_for(n, opts.threads, [&](std::size_t j) {
        const double p = posteriors ? (*posteriors)[j] : 0.0;
        const double target = posteriors ? 2.0 * p - 1.0 : static_cast<double>(labels[j]);
        double r = 0.0;
        double e = 0.0;
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double f = samples.margins(i, j);
            const double w = samples.weights[i];
            r += w * (posteriors ? pointwise_risk(loss, p, f) : loss.eval(labels[j] * f));
            e += w * parts.even(f);
            if (gradient_symmetric) {
                s += w * located_divergence(gen, f, f_star[j], i, j);
            }
        }
        risk[j] = r;
        margin_term[j] = b * target * f_star[j];
        even_term[j] = e;
        central_risk[j] =
            posteriors ? pointwise_risk(loss, p, f_star[j]) : loss.eval(labels[j] * f_star[j]);
        jensen[j] = e - parts.even(f_star[j]);
        spread[j] = s;
    });

    DecompositionReport rep;
    rep.theorem_id = theorem::kLinearOdd;
    rep.identity = "expected_risk = expected_margin_term + even_part_term";
    rep.residual_tolerance = residual_tolerance_for(loss);
    rep.expected_risk = mean_of(risk);
    rep.components["expected_margin_term"] = mean_of(margin_term);
    rep.components["even_part_term"] = mean_of(even_term);
    rep.residual = rep.expected_risk -
                   (rep.components["expected_margin_term"] + rep.components["even_part_term"]);
    rep.diagnostics["odd_slope"] = b;
    rep.diagnostics["jensen_gap"] = mean_of(jensen);
    if (!posteriors) {
        rep.notes.push_back("empirical Y*: observed labels stand in for E[Y | x]");
    }
    if (gradient_symmetric) {
        std::vector<double> lol_bias(n);
        for (std::size_t j = 0; j < n; ++j) {
            lol_bias[j] = margin_term[j] + parts.even(f_star[j]);
        }
        const double bias_gap = std::abs(mean_of(central_risk) - mean_of(lol_bias));
        const double variance_gap = std::abs(mean_of(spread) - mean_of(jensen));
        rep.diagnostics["bias_plus_noise_gap"] = bias_gap;
        rep.diagnostics["variance_jensen_gap"] = variance_gap;
        if (bias_gap > 1e-10 * std::max(1.0, mean_of(central_risk)) ||
            variance_gap > 1e-10 * std::max(1.0, mean_of(spread))) {
            rep.flags.push_back("linear_odd_cross_identity_failed");
        }
    }
    if (opts.per_point) {
        rep.per_point["expected_risk"] = risk;
        rep.per_point["expected_margin_term"] = margin_term;
        rep.per_point["even_part_term"] = even_term;
    }
    finish(rep);
    return rep;
}

NoiseBiasSplit noise_bias_split(const LossDescriptor& loss, const LinkBundle& bundle,
                                std::span<const double> f_star, std::span<const double> posteriors) {
    const std::size_t n = f_star.size();
    check_posteriors(posteriors, n, false);
    NoiseBiasSplit out;
    out.l0_offset = bundle.min_risk(0.0);
    if (!std::isfinite(out.l0_offset)) {
        throw InapplicableError("noise split needs a finite minimum risk at p = 0");
    }
    const auto gen = neg_min_risk_generator(bundle);
    out.noise.resize(n);
    out.bias.resize(n);
    out.central_risk.resize(n);
    out.noise_bregman.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double p = posteriors[j];
        out.noise[j] = bundle.min_risk(p);
        out.central_risk[j] = pointwise_risk(loss, p, f_star[j]);

        const auto ip = bundle.inverse_link(f_star[j]);
        out.clamped += ip.clamped ? 1 : 0;
        out.bias[j] = divergence(gen, p, ip.q);

        double breg = out.noise[j];
        if (p > 0.0 && p < 1.0) {
            try {
                breg = p * divergence(gen, 1.0, p) + (1.0 - p) * divergence(gen, 0.0, p) + out.l0_offset;
                if (!std::isfinite(breg)) {
                    throw NumericError("non-finite");
                }
            } catch (const Error&) {
                breg = out.noise[j];
                out.bregman_fallback = true;
            }
        }
        out.noise_bregman[j] = breg;
    }
    return out;
}

DecompositionReport noise_bias_report(const LossDescriptor& loss, const LinkBundle& bundle,
                                      std::span<const double> f_star,
                                      std::span<const double> posteriors,
                                      const DecompOptions& opts) {
    const NoiseBiasSplit split = noise_bias_split(loss, bundle, f_star, posteriors);
    DecompositionReport rep;
    rep.theorem_id = theorem::kNoiseBias;
    rep.identity = "central_model_risk = noise + bias";
    rep.residual_tolerance = loss.grad_is_analytic ? 1e-8 : 1e-6;
    rep.expected_risk = mean_of(split.central_risk);
    rep.components["noise"] = mean_of(split.noise);
    rep.components["bias"] = mean_of(split.bias);
    rep.residual = rep.expected_risk - (rep.components["noise"] + rep.components["bias"]);
    rep.diagnostics["l0_offset"] = split.l0_offset;
    rep.diagnostics["noise_bregman_form_gap"] =
        std::abs(mean_of(split.noise_bregman) - mean_of(split.noise));
    if (split.bregman_fallback) {
        rep.flags.push_back("noise_bregman_form_unavailable");
    }
    if (split.clamped > 0) {
        rep.flags.push_back("central_margins_clamped");
    }
    if (opts.per_point) {
        rep.per_point["noise"] = split.noise;
        rep.per_point["bias"] = split.bias;
        rep.per_point["central_risk"] = split.central_risk;
    }
    finish(rep);
    return rep;
}

}  // namespace marginbv
