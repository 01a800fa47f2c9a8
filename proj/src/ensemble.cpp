#include "marginbv/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "marginbv/bregman.hpp"
#include "marginbv/errors.hpp"

namespace marginbv {

Combiner parse_combiner(const std::string& name) {
    if (name == "mean" || name == "arithmetic") {
        return Combiner::arithmetic;
    }
    if (name == "additive") {
        return Combiner::additive;
    }
    if (name == "weighted") {
        return Combiner::weighted;
    }
    if (name == "centroid") {
        return Combiner::centroid;
    }
    throw ConfigError("unknown combiner '" + name + "'");
}

std::string to_string(Combiner c) {
    switch (c) {
        case Combiner::arithmetic:
            return "mean";
        case Combiner::additive:
            return "additive";
        case Combiner::weighted:
            return "weighted";
        case Combiner::centroid:
            return "centroid";
    }
    return "unknown";
}

EnsembleSpec EnsembleSpec::uniform(Matrix margins, Combiner combiner) {
    EnsembleSpec spec;
    const std::size_t m = margins.rows();
    spec.member_margins = std::move(margins);
    spec.weights.assign(m, m ? 1.0 / static_cast<double>(m) : 0.0);
    spec.combiner = combiner;
    return spec;
}

namespace {

void check_spec(const EnsembleSpec& spec, bool weights_sum_to_one) {
    if (spec.member_count() == 0 || spec.point_count() == 0) {
        throw ParameterError("ensemble needs at least one member and one point");
    }
    if (spec.weights.size() != spec.member_count()) {
        throw ParameterError("one weight per ensemble member is required");
    }
    double total = 0.0;
    for (double w : spec.weights) {
        if (!std::isfinite(w)) {
            throw ParameterError("ensemble weights must be finite");
        }
        total += w;
    }
    if (weights_sum_to_one && std::abs(total - 1.0) > 1e-12) {
        throw ParameterError("ensemble weights must sum to 1 for mean and centroid combiners");
    }
    for (double x : spec.member_margins.data()) {
        if (!std::isfinite(x)) {
            throw ParameterError("member margins contain a non-finite entry");
        }
    }
}

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

void require_gradient_symmetric(const LossDescriptor& loss, const char* what) {
    if (!classify_gradient_symmetry(loss)) {
        throw InapplicableError(std::string(what) + " requires a gradient-symmetric loss; '" +
                                loss.name + "' is not");
    }
}

std::vector<double> combine_arithmetic(const EnsembleSpec& spec) {
    std::vector<double> out(spec.point_count());
    for (std::size_t j = 0; j < spec.point_count(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < spec.member_count(); ++i) {
            s += spec.weights[i] * spec.member_margins(i, j);
        }
        out[j] = s;
    }
    return out;
}

void finish(DecompositionReport& r) {
    if (!r.within_tolerance()) {
        r.flags.push_back("residual_exceeds_tolerance");
    }
}

}  // namespace

DecompositionReport margin_ambiguity(const LossDescriptor& loss, const EnsembleSpec& spec,
                                     std::span<const int> labels) {
    check_spec(spec, true);
    const std::size_t n = spec.point_count();
    check_labels(labels, n);
    const auto gen = generator_from_loss(loss);
    const auto fbar = combine_arithmetic(spec);
    std::vector<double> ens(n), avg(n), amb(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double y = labels[j];
        double a = 0.0;
        double d = 0.0;
        for (std::size_t i = 0; i < spec.member_count(); ++i) {
            const double f = spec.member_margins(i, j);
            a += spec.weights[i] * loss.eval(y * f);
            d += spec.weights[i] * divergence(gen, y * f, y * fbar[j]);
        }
        ens[j] = loss.eval(y * fbar[j]);
        avg[j] = a;
        amb[j] = d;
    }
    DecompositionReport rep;
    rep.theorem_id = "margin_ambiguity";
    rep.identity = "ensemble_loss = average_error - ambiguity";
    rep.residual_tolerance = loss.grad_is_analytic ? 1e-9 : 1e-6;
    rep.expected_risk = ordered_mean(ens);
    rep.components["average_error"] = ordered_mean(avg);
    rep.components["ambiguity"] = ordered_mean(amb);
    rep.residual = rep.expected_risk - (rep.components["average_error"] - rep.components["ambiguity"]);
    finish(rep);
    return rep;
}

double label_free_ambiguity(const LossDescriptor& loss, const EnsembleSpec& spec) {
    check_spec(spec, true);
    const auto gen = generator_from_loss(loss);
    const auto fbar = combine_arithmetic(spec);
    std::vector<double> amb(spec.point_count());
    for (std::size_t j = 0; j < spec.point_count(); ++j) {
        double d = 0.0;
        for (std::size_t i = 0; i < spec.member_count(); ++i) {
            d += spec.weights[i] * divergence(gen, spec.member_margins(i, j), fbar[j]);
        }
        amb[j] = d;
    }
    return ordered_mean(amb);
}

DecompositionReport gradient_symmetric_ambiguity(const LossDescriptor& loss, const EnsembleSpec& spec,
                                                 std::span<const int> labels) {
    require_gradient_symmetric(loss, "label-free ambiguity");
    DecompositionReport rep = margin_ambiguity(loss, spec, labels);
    const double margin_amb = rep.components["ambiguity"];
    const double amb = label_free_ambiguity(loss, spec);
    rep.theorem_id = "gradient_symmetric_ambiguity";
    rep.components["ambiguity"] = amb;
    rep.residual = rep.expected_risk - (rep.components["average_error"] - amb);
    rep.diagnostics["margin_ambiguity_gap"] = std::abs(amb - margin_amb);
    rep.flags.clear();
    finish(rep);
    return rep;
}

DecompositionReport additive_ambiguity(const LossDescriptor& loss, const EnsembleSpec& spec,
                                       std::span<const int> labels) {
    require_gradient_symmetric(loss, "the additive ambiguity decomposition");
    check_spec(spec, false);
    const std::size_t n = spec.point_count();
    const std::size_t m = spec.member_count();
    check_labels(labels, n);
    std::vector<double> alpha(m, 1.0);
    if (spec.combiner == Combiner::weighted) {
        alpha = spec.weights;
    }
    const auto gen = generator_from_loss(loss);
    const double scale = static_cast<double>(m);
    std::vector<double> ens(n), avg(n), amb(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double y = labels[j];
        double f_add = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            f_add += alpha[i] * spec.member_margins(i, j);
        }
        double a = 0.0;
        double d = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double inflated = scale * alpha[i] * spec.member_margins(i, j);
            a += loss.eval(y * inflated);
            d += divergence(gen, inflated, f_add);
        }
        ens[j] = loss.eval(y * f_add);
        avg[j] = a / scale;
        amb[j] = d / scale;
    }
    DecompositionReport rep;
    rep.theorem_id = "additive_ambiguity";
    rep.identity = "ensemble_loss = average_inflated_error - ambiguity";
    rep.residual_tolerance = loss.grad_is_analytic ? 1e-9 : 1e-6;
    rep.expected_risk = ordered_mean(ens);
    rep.components["average_inflated_error"] = ordered_mean(avg);
    rep.components["ambiguity"] = ordered_mean(amb);
    rep.residual =
        rep.expected_risk - (rep.components["average_inflated_error"] - rep.components["ambiguity"]);
    finish(rep);
    return rep;
}

CentroidResult centroid_combine(const LinkBundle& bundle, std::span<const double> members,
                                std::span<const double> weights) {
    if (members.empty() || members.size() != weights.size()) {
        throw ParameterError("centroid combiner needs one weight per member");
    }
    const std::size_t budget = members.size() / 100;
    std::size_t clamped = 0;
    double dual_mean = 0.0;
    for (std::size_t i = 0; i < members.size(); ++i) {
        const auto ip = bundle.inverse_link(members[i]);
        if (ip.clamped) {
            ++clamped;
        }
        dual_mean += weights[i] * bundle.neg_min_risk_grad(ip.q);
    }
    if (clamped > budget) {
        std::ostringstream msg;
        msg << clamped << " of " << members.size()
            << " members fall outside the invertible range of the link";
        throw RangeError(msg.str());
    }
    return {bundle.link(bundle.neg_min_risk_grad_inverse(dual_mean)), clamped};
}

double centroid_combine(const LinkBundle& bundle, std::span<const double> members) {
    std::vector<double> w(members.size(), 1.0 / static_cast<double>(members.size()));
    return centroid_combine(bundle, members, w).value;
}

DecompositionReport centroid_ambiguity(const LossDescriptor& loss, const LinkBundle& bundle,
                                       const EnsembleSpec& spec, std::span<const double> targets) {
    check_spec(spec, true);
    const std::size_t n = spec.point_count();
    const std::size_t m = spec.member_count();
    if (targets.size() != n) {
        throw ParameterError("one target probability per point is required");
    }
    const auto gen = neg_min_risk_generator(bundle);
    const auto fbar = combine_arithmetic(spec);
    const std::size_t budget = m / 100;
    std::vector<double> lhs(n), avg(n), amb(n), deviation(n), centroid(n);
    std::vector<double> q(m);
    for (std::size_t j = 0; j < n; ++j) {
        const double p = targets[j];
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ParameterError("target probabilities must lie in [0, 1]");
        }
        std::size_t clamped = 0;
        double dual_mean = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const auto ip = bundle.inverse_link(spec.member_margins(i, j));
            clamped += ip.clamped ? 1 : 0;
            q[i] = ip.q;
            dual_mean += spec.weights[i] * bundle.neg_min_risk_grad(ip.q);
        }
        if (clamped > budget) {
            std::ostringstream msg;
            msg << "point " << j << ": " << clamped << " of " << m
                << " members fall outside the invertible range of the link";
            throw RangeError(msg.str());
        }
        const double qbar = bundle.neg_min_risk_grad_inverse(dual_mean);
        double a = 0.0;
        double d = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            a += spec.weights[i] * divergence(gen, p, q[i]);
            d += spec.weights[i] * divergence(gen, qbar, q[i]);
        }
        lhs[j] = divergence(gen, p, qbar);
        avg[j] = a;
        amb[j] = d;
        centroid[j] = bundle.link(qbar);
        deviation[j] = std::abs(centroid[j] - fbar[j]);
    }
    DecompositionReport rep;
    rep.theorem_id = "centroid_ambiguity";
    rep.identity = "ensemble_divergence = average_divergence - ambiguity";
    rep.residual_tolerance = loss.grad_is_analytic ? 1e-8 : 1e-6;
    rep.expected_risk = ordered_mean(lhs);
    rep.components["average_divergence"] = ordered_mean(avg);
    rep.components["ambiguity"] = ordered_mean(amb);
    rep.residual = rep.expected_risk - (rep.components["average_divergence"] - rep.components["ambiguity"]);
    rep.diagnostics["max_deviation_from_mean"] = *std::max_element(deviation.begin(), deviation.end());
    rep.per_point["centroid_margin"] = centroid;
    bool uniform = true;
    for (double w : spec.weights) {
        uniform = uniform && std::abs(w - spec.weights.front()) <= 1e-15;
    }
    if (!uniform) {
        rep.notes.push_back("extension: weighted centroid combiner");
    }
    finish(rep);
    return rep;
}

}  // namespace marginbv
