#include "marginbv/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "marginbv/bregman.hpp"
#include "marginbv/decomp.hpp"
#include "marginbv/ensemble.hpp"
#include "marginbv/errors.hpp"
#include "marginbv/learner.hpp"
#include "marginbv/risk_link.hpp"
#include "marginbv/rng.hpp"

namespace marginbv {

using nlohmann::json;

std::uint64_t default_seed() {
    const char* env = std::getenv("MARGINBV_SEED");
    if (env == nullptr || *env == '\0') {
        return 0;
    }
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used != std::string(env).size() || env[0] == '-' || env[0] == '+') {
            throw std::invalid_argument("not a plain unsigned integer");
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string("MARGINBV_SEED is not an unsigned integer: '") + env + "'");
    }
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const CatalogueError*>(&e) ||
        dynamic_cast<const ParameterError*>(&e) || dynamic_cast<const InapplicableError*>(&e)) {
        return kExitConfig;
    }
    return kExitCheckFailed;
}

namespace {

// Gradient-symmetry facts of the catalogue: the constant c, or none.
std::optional<std::optional<double>> catalogue_symmetry(const std::string& name) {
    static const std::map<std::string, std::optional<double>> table = {
        {"squared", -4.0},      {"logistic", -1.0},    {"canonical_boosting", -1.0},
        {"laplacian", -1.0},    {"exponential", std::nullopt}, {"smooth_hinge", std::nullopt},
    };
    const auto it = table.find(name);
    if (it == table.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string describe_c(const std::optional<double>& c) {
    if (!c) {
        return "not gradient-symmetric";
    }
    std::ostringstream s;
    s << "gradient-symmetric, c = " << *c;
    return s.str();
}

struct SuiteContext {
    const LossDescriptor& loss;
    std::optional<double> c;
    std::optional<double> tol_override;
    std::uint64_t seed;
    std::vector<CheckResult>& checks;
    std::vector<InapplicableNotice>& inapplicable;

    double tol(double fallback) const { return tol_override.value_or(fallback); }

    void add(const std::string& suite, const std::string& name, const std::string& anchor,
             double measured, double tolerance, bool passed, std::string detail = {}) {
        checks.push_back({suite, name, anchor, measured, tolerance, passed, std::move(detail)});
    }

    // Records a failed check when `body` throws a library error.
    template <class F>
    void guarded(const std::string& suite, const std::string& name, const std::string& anchor, F&& body) {
        try {
            body();
        } catch (const Error& e) {
            add(suite, name, anchor, std::nan(""), 0.0, false, e.what());
        }
    }
};

double max_rel(double current, const DecompositionReport& r) {
    return std::max(current, r.relative_residual());
}

void symmetry_suite(SuiteContext& ctx) {
    const auto& loss = ctx.loss;
    const std::string s = "symmetry";
    ctx.guarded(s, "gradient_sum_constancy", "gradient-symmetric loss classification", [&] {
        const ProbeGrid grid;
        const auto pts = grid.points();
        std::vector<double> sums;
        sums.reserve(pts.size());
        for (double v : pts) {
            sums.push_back(loss.grad(v) + loss.grad(-v));
        }
        const double mean = ordered_mean(sums);
        double spread = 0.0;
        for (double x : sums) {
            spread = std::max(spread, std::abs(x - mean));
        }
        const double tol = ctx.tol(default_symmetry_tol(loss));
        const auto classified = classify_gradient_symmetry(loss, grid, tol);
        bool ok = true;
        std::string detail = describe_c(classified);
        if (const auto expected = catalogue_symmetry(loss.name)) {
            ok = expected->has_value() == classified.has_value();
            if (ok && classified) {
                ok = std::abs(*classified - **expected) <= tol * std::max(1.0, std::abs(**expected));
            }
            if (!ok) {
                detail += "; catalogue says " + describe_c(*expected);
            }
        }
        ctx.add(s, "gradient_sum_constancy", "gradient-symmetric loss classification", spread, tol, ok, detail);
    });
    ctx.guarded(s, "gradient_matches_finite_difference", "differentiable margin loss", [&] {
        const double tol = loss.grad_is_analytic ? 1e-6 : 1e-4;
        const double err = max_gradient_fd_error(loss, ProbeGrid{});
        ctx.add(s, "gradient_matches_finite_difference", "differentiable margin loss", err, tol, err <= tol);
    });
    ctx.guarded(s, "strict_convexity", "strictly convex margin loss", [&] {
        const bool convex = is_strictly_convex_on(loss, ProbeGrid{});
        ctx.add(s, "strict_convexity", "strictly convex margin loss", convex ? 1.0 : 0.0, 1.0, convex,
                convex ? "" : "midpoint chord test failed");
    });
    if (ctx.c) {
        ctx.guarded(s, "odd_part_slope", "gradient-symmetric losses are linear odd", [&] {
            const auto parts = even_odd_split(loss);
            const double gap = parts.odd_slope ? std::abs(*parts.odd_slope - *ctx.c / 2) : kInf;
            const double tol = ctx.tol(default_symmetry_tol(loss));
            ctx.add(s, "odd_part_slope", "gradient-symmetric losses are linear odd", gap, tol, gap <= tol,
                    "odd part is b v with b = c / 2");
        });
    }
}

void bregman_suite(SuiteContext& ctx) {
    const auto& loss = ctx.loss;
    const std::string s = "bregman";
    ctx.guarded(s, "label_flip_symmetry", "label-flip symmetry iff gradient-symmetric", [&] {
        const double gap = max_label_flip_gap(loss, ProbeGrid{-5.0, 5.0, 41});
        const double tol = ctx.tol(loss.grad_is_analytic ? 1e-8 : 1e-5);
        const bool symmetric = gap <= tol;
        const bool ok = symmetric == ctx.c.has_value();
        const auto gen = generator_from_loss(loss);
        std::ostringstream detail;
        detail << (symmetric ? "symmetric" : "asymmetric") << "; B(1,0) = " << divergence(gen, 1, 0)
               << ", B(-1,0) = " << divergence(gen, -1, 0);
        ctx.add(s, "label_flip_symmetry", "label-flip symmetry iff gradient-symmetric", gap, tol, ok,
                detail.str());
    });
    ctx.guarded(s, "nonnegativity", "Bregman divergences are non-negative", [&] {
        const auto gen = generator_from_loss(loss);
        const auto pts = ProbeGrid{-8.0, 8.0, 81}.points();
        double lowest = kInf;
        for (double u : pts) {
            for (double v : pts) {
                lowest = std::min(lowest, divergence(gen, u, v));
            }
        }
        ctx.add(s, "nonnegativity", "Bregman divergences are non-negative", lowest, 0.0, lowest >= 0.0);
    });
    if (!ctx.c) {
        return;
    }
    ctx.guarded(s, "limit_representation", "loss as a limit of Bregman divergences", [&] {
        const auto anchor = limit_anchor(loss);
        Rng rng(Rng::derive_seed(ctx.seed, 0x11));
        double worst = 0.0;
        bool extrapolated = false;
        for (int k = 0; k < 20; ++k) {
            const int y = rng.bernoulli(0.5) ? 1 : -1;
            const double f = -4.0 + 8.0 * rng.uniform();
            const auto r = limit_bregman_loss(loss, y, f, anchor);
            extrapolated = extrapolated || r.extrapolated;
            worst = std::max(worst, std::abs(r.value - loss.eval(y * f)));
        }
        const double tol = 1e-6;
        ctx.add(s, "limit_representation", "loss as a limit of Bregman divergences", worst, tol, worst <= tol,
                std::isfinite(anchor.g_plus) ? "finite anchors" : (extrapolated ? "infinite anchors, extrapolated in 1/G"
                                                                               : "infinite anchors"));
    });
}

void conjugate_suite(SuiteContext& ctx) {
    const auto& loss = ctx.loss;
    const std::string s = "conjugate";
    std::optional<LinkBundle> bundle;
    ctx.guarded(s, "link_bundle", "optimal link and minimum risk", [&] { bundle = build_link_bundle(loss); });
    if (!bundle) {
        return;
    }
    const auto gen = neg_min_risk_generator(*bundle);
    const auto vs = ProbeGrid{-8.0, 8.0, 33}.points();
    if (loss.known.conjugate) {
        ctx.guarded(s, "closed_form_conjugate", "conjugate of the negative minimum risk (closed form)", [&] {
            double worst = 0.0;
            for (double v : vs) {
                worst = std::max(worst, std::abs(conjugate(gen, v) - loss.known.conjugate(v)));
            }
            const double tol = 1e-6;
            ctx.add(s, "closed_form_conjugate", "conjugate of the negative minimum risk (closed form)", worst, tol,
                    worst <= tol);
        });
    }
    if (ctx.c) {
        ctx.guarded(s, "conjugate_is_rescaled_loss", "conjugate of the negative minimum risk equals l(v / c)", [&] {
            double worst = 0.0;
            for (double v : vs) {
                worst = std::max(worst, std::abs(conjugate(gen, v) - loss.eval(v / *ctx.c)));
            }
            const double tol = 1e-6;
            ctx.add(s, "conjugate_is_rescaled_loss", "conjugate of the negative minimum risk equals l(v / c)", worst,
                    tol, worst <= tol);
        });
        ctx.guarded(s, "dual_connection", "dual connection of loss and minimum-risk divergences", [&] {
            Rng rng(Rng::derive_seed(ctx.seed, 0x22));
            double worst = 0.0;
            for (int k = 0; k < 50; ++k) {
                const double u = -3.0 + 6.0 * rng.uniform();
                const double v = -3.0 + 6.0 * rng.uniform();
                worst = std::max(worst, dual_connection_residual(*bundle, *ctx.c, u, v));
            }
            const double tol = ctx.tol(loss.grad_is_analytic ? 1e-8 : 1e-5);
            ctx.add(s, "dual_connection", "dual connection of loss and minimum-risk divergences", worst, tol,
                    worst <= tol);
        });
    }
    ctx.guarded(s, "canonical_scaling", "gradient-symmetric losses are rescaled canonical losses", [&] {
        const auto scale = canonical_scaling_check(loss, *bundle);
        const bool ok = scale.has_value() == ctx.c.has_value() &&
                        (!scale || std::abs(*scale - *ctx.c) <= 1e-5 * std::max(1.0, std::abs(*ctx.c)));
        const double measured = scale && ctx.c ? std::abs(*scale - *ctx.c) : 0.0;
        ctx.add(s, "canonical_scaling", "gradient-symmetric losses are rescaled canonical losses", measured, 1e-5,
                ok, scale ? "minimum-risk derivative is c times the link" : "not a rescaled canonical loss");
    });
    ctx.guarded(s, "excess_risk_divergence", "excess risk is the minimum-risk Bregman divergence", [&] {
        double worst = 0.0;
        const auto ps = default_probability_grid();
        for (std::size_t a = 0; a < ps.size(); a += 7) {
            for (std::size_t b = 0; b < ps.size(); b += 7) {
                worst = std::max(worst, excess_risk_residual(*bundle, ps[a], ps[b]));
            }
        }
        const double tol = ctx.tol(loss.grad_is_analytic ? 1e-8 : 1e-5);
        ctx.add(s, "excess_risk_divergence", "excess risk is the minimum-risk Bregman divergence", worst, tol,
                worst <= tol);
    });
}

struct RandomInstance {
    Matrix margins;
    std::vector<int> labels;
    std::vector<double> posteriors;
};

RandomInstance random_instance(Rng& rng, double lo, double hi) {
    const std::size_t m = 1 + rng.index(8);
    const std::size_t n = 1 + rng.index(16);
    RandomInstance r;
    r.margins = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            r.margins(i, j) = lo + (hi - lo) * rng.uniform();
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        r.labels.push_back(rng.bernoulli(0.5) ? 1 : -1);
        r.posteriors.push_back(0.05 + 0.9 * rng.uniform());
    }
    return r;
}

// Margins for probability-side checks stay where the inverse link is well
// conditioned: between psi(0.01) and psi(0.99), and inside [-4, 4].
std::pair<double, double> margin_box(const std::optional<LinkBundle>& bundle) {
    if (!bundle) {
        return {-4.0, 4.0};
    }
    return {std::max(-4.0, bundle->link(0.01)), std::min(4.0, bundle->link(0.99))};
}

void decomp_suite(SuiteContext& ctx) {
    const auto& loss = ctx.loss;
    const std::string s = "decomp";
    const int instances = 100;
    const auto parts = even_odd_split(loss);
    std::optional<LinkBundle> bundle;
    try {
        bundle = build_link_bundle(loss);
    } catch (const NumericError& e) {
        ctx.inapplicable.push_back({theorem::kBuja, e.what()});
    }

    ctx.guarded(s, "margin_variance_identity", "expected risk = central risk + margin variance", [&] {
        Rng rng(Rng::derive_seed(ctx.seed, 0x31));
        double worst = 0.0;
        for (int k = 0; k < instances; ++k) {
            auto in = random_instance(rng, -4.0, 4.0);
            worst = max_rel(worst, margin_variance_decomposition(loss, MarginSampleMatrix(in.margins), in.labels));
        }
        const double tol = ctx.tol(loss.grad_is_analytic ? 1e-9 : 1e-6);
        ctx.add(s, "margin_variance_identity", "expected risk = central risk + margin variance", worst, tol,
                worst <= tol, "relative residual, 100 random instances");
    });

    if (ctx.c) {
        ctx.guarded(s, "gradient_symmetric_identity", "label-free bias-variance decomposition", [&] {
            Rng rng(Rng::derive_seed(ctx.seed, 0x32));
            double worst = 0.0;
            for (int k = 0; k < instances; ++k) {
                auto in = random_instance(rng, -4.0, 4.0);
                worst = max_rel(worst,
                                bv_decomposition_gradient_symmetric(loss, MarginSampleMatrix(in.margins), in.labels));
            }
            const double tol = ctx.tol(loss.grad_is_analytic ? 1e-9 : 1e-6);
            ctx.add(s, "gradient_symmetric_identity", "label-free bias-variance decomposition", worst, tol,
                    worst <= tol, "relative residual, 100 random instances");
        });
    } else {
        ctx.inapplicable.push_back({theorem::kGradientSymmetric, "loss '" + loss.name + "' is not gradient-symmetric"});
    }

    if (parts.odd_slope) {
        ctx.guarded(s, "linear_odd_identity", "decomposition for linear odd losses", [&] {
            Rng rng(Rng::derive_seed(ctx.seed, 0x33));
            double worst = 0.0;
            for (int k = 0; k < instances; ++k) {
                auto in = random_instance(rng, -4.0, 4.0);
                worst = max_rel(worst, lol_decomposition(loss, parts, MarginSampleMatrix(in.margins), in.labels));
            }
            const double tol = ctx.tol(loss.grad_is_analytic ? 1e-9 : 1e-6);
            ctx.add(s, "linear_odd_identity", "decomposition for linear odd losses", worst, tol, worst <= tol,
                    "relative residual, 100 random instances");
        });
    } else {
        ctx.inapplicable.push_back({theorem::kLinearOdd, "odd part of '" + loss.name + "' is not linear"});
    }

    if (bundle) {
        const auto [lo, hi] = margin_box(bundle);
        ctx.guarded(s, "probability_identity", "expected excess risk = bias + variance in probability space", [&] {
            Rng rng(Rng::derive_seed(ctx.seed, 0x34));
            double worst = 0.0;
            for (int k = 0; k < instances; ++k) {
                auto in = random_instance(rng, lo, hi);
                worst = max_rel(worst, buja_decomposition(loss, *bundle, MarginSampleMatrix(in.margins), in.posteriors));
            }
            const double tol = ctx.tol(loss.grad_is_analytic ? 1e-8 : 1e-6);
            ctx.add(s, "probability_identity", "expected excess risk = bias + variance in probability space", worst,
                    tol, worst <= tol, "relative residual, 100 random instances");
        });
        ctx.guarded(s, "noise_split_identity", "central-model risk = noise + bias", [&] {
            Rng rng(Rng::derive_seed(ctx.seed, 0x35));
            double worst = 0.0;
            for (int k = 0; k < instances; ++k) {
                auto in = random_instance(rng, lo, hi);
                const auto f_star = MarginSampleMatrix(in.margins).central_model();
                worst = max_rel(worst, noise_bias_report(loss, *bundle, f_star, in.posteriors));
            }
            const double tol = ctx.tol(loss.grad_is_analytic ? 1e-8 : 1e-6);
            ctx.add(s, "noise_split_identity", "central-model risk = noise + bias", worst, tol, worst <= tol,
                    "relative residual, 100 random instances");
        });
    }

    ctx.guarded(s, "label_free_variance", "label-free variance iff gradient-symmetric", [&] {
        // Two models with margins 0 and 2 on one negative example.
        const MarginSampleMatrix witness(Matrix(2, 1, std::vector<double>{0.0, 2.0}));
        const std::vector<int> y{-1};
        const auto margin = margin_variance_decomposition(loss, witness, y);
        const double gap = std::abs(label_free_variance(loss, witness) - margin.components.at("margin_variance"));
        const double tol = 1e-8;
        const bool ok = ctx.c ? gap <= tol : gap > 1e-3;
        ctx.add(s, "label_free_variance", "label-free variance iff gradient-symmetric", gap, ctx.c ? tol : 1e-3, ok,
                ctx.c ? "equals the margin variance" : "differs from the margin variance");
    });

    if (ctx.c && bundle && parts.odd_slope) {
        ctx.guarded(s, "variance_agreement", "four routes to the variance agree", [&] {
            const auto [lo, hi] = margin_box(bundle);
            const double a = std::min(1.0, 0.25 * hi);
            const double b = std::min(3.0, 0.75 * hi);
            const MarginSampleMatrix micro(Matrix(2, 1, std::vector<double>{a, b}));
            const std::vector<int> y{1};
            const std::vector<double> p{0.5};
            const double v1 = margin_variance_decomposition(loss, micro, y).components.at("margin_variance");
            const double v2 = bv_decomposition_gradient_symmetric(loss, micro, y).components.at("variance");
            const double v3 = buja_decomposition(loss, *bundle, micro, p).components.at("variance");
            const double v4 = lol_decomposition(loss, parts, micro, y).diagnostics.at("jensen_gap");
            const double lo_v = std::min({v1, v2, v3, v4});
            const double hi_v = std::max({v1, v2, v3, v4});
            const double tol = ctx.tol(loss.grad_is_analytic ? 1e-8 : 1e-6);
            std::ostringstream detail;
            detail.precision(8);
            detail << "margins {" << a << ", " << b << "}, y = +1: variance " << v1;
            ctx.add(s, "variance_agreement", "four routes to the variance agree", hi_v - lo_v, tol, hi_v - lo_v <= tol,
                    detail.str());
        });
    }
}

EnsembleSpec random_ensemble(Rng& rng, double lo, double hi, bool random_weights) {
    auto in = random_instance(rng, lo, hi);
    auto spec = EnsembleSpec::uniform(std::move(in.margins));
    if (random_weights) {
        double total = 0.0;
        for (auto& w : spec.weights) {
            w = 0.1 + rng.uniform();
            total += w;
        }
        for (auto& w : spec.weights) {
            w /= total;
        }
        // Force an exact sum of one on the last weight.
        double head = 0.0;
        for (std::size_t i = 0; i + 1 < spec.weights.size(); ++i) {
            head += spec.weights[i];
        }
        spec.weights.back() = 1.0 - head;
    }
    return spec;
}

std::vector<int> random_labels(Rng& rng, std::size_t n) {
    std::vector<int> y(n);
    for (auto& v : y) {
        v = rng.bernoulli(0.5) ? 1 : -1;
    }
    return y;
}

void ensemble_suite(SuiteContext& ctx) {
    const auto& loss = ctx.loss;
    const std::string s = "ensemble";
    const int instances = 100;

    ctx.guarded(s, "margin_ambiguity_identity", "ensemble loss = average loss - ambiguity", [&] {
        Rng rng(Rng::derive_seed(ctx.seed, 0x41));
        double worst = 0.0;
        double worst_gain = -kInf;
        for (int k = 0; k < instances; ++k) {
            const auto spec = random_ensemble(rng, -4.0, 4.0, k % 2 == 1);
            const auto y = random_labels(rng, spec.point_count());
            const auto rep = margin_ambiguity(loss, spec, y);
            worst = max_rel(worst, rep);
            worst_gain = std::max(worst_gain, rep.expected_risk - rep.components.at("average_error"));
        }
        const double tol = ctx.tol(loss.grad_is_analytic ? 1e-9 : 1e-6);
        ctx.add(s, "margin_ambiguity_identity", "ensemble loss = average loss - ambiguity", worst, tol, worst <= tol,
                "relative residual, 100 random ensembles");
        ctx.add(s, "ensemble_not_worse_than_average", "ensemble loss <= average member loss", worst_gain, 1e-12,
                worst_gain <= 1e-12, "largest ensemble loss minus average member loss");
    });

    if (ctx.c) {
        ctx.guarded(s, "label_free_ambiguity_identity", "label-free ambiguity decomposition", [&] {
            Rng rng(Rng::derive_seed(ctx.seed, 0x42));
            double worst = 0.0;
            for (int k = 0; k < instances; ++k) {
                const auto spec = random_ensemble(rng, -4.0, 4.0, k % 2 == 1);
                worst = max_rel(worst, gradient_symmetric_ambiguity(loss, spec, random_labels(rng, spec.point_count())));
            }
            const double tol = ctx.tol(loss.grad_is_analytic ? 1e-9 : 1e-6);
            ctx.add(s, "label_free_ambiguity_identity", "label-free ambiguity decomposition", worst, tol, worst <= tol,
                    "relative residual, 100 random ensembles");
        });
        ctx.guarded(s, "additive_ambiguity_identity", "ambiguity of summed ensembles under margin inflation", [&] {
            Rng rng(Rng::derive_seed(ctx.seed, 0x43));
            double worst = 0.0;
            for (int k = 0; k < instances; ++k) {
                auto spec = random_ensemble(rng, -1.0, 1.0, false);
                spec.combiner = Combiner::additive;
                worst = max_rel(worst, additive_ambiguity(loss, spec, random_labels(rng, spec.point_count())));
            }
            const double tol = ctx.tol(loss.grad_is_analytic ? 1e-9 : 1e-6);
            ctx.add(s, "additive_ambiguity_identity", "ambiguity of summed ensembles under margin inflation", worst,
                    tol, worst <= tol, "relative residual, 100 random ensembles");
        });
    } else {
        ctx.inapplicable.push_back(
            {"gradient_symmetric_ambiguity", "loss '" + loss.name + "' is not gradient-symmetric"});
        ctx.inapplicable.push_back({"additive_ambiguity", "loss '" + loss.name + "' is not gradient-symmetric"});
    }

    std::optional<LinkBundle> bundle;
    ctx.guarded(s, "link_bundle", "optimal link and minimum risk", [&] { bundle = build_link_bundle(loss); });
    if (!bundle) {
        return;
    }
    ctx.guarded(s, "centroid_ambiguity_identity", "ambiguity decomposition for the centroid combiner", [&] {
        const auto [lo, hi] = margin_box(bundle);
        Rng rng(Rng::derive_seed(ctx.seed, 0x44));
        double worst = 0.0;
        double deviation = 0.0;
        for (int k = 0; k < instances; ++k) {
            const auto spec = random_ensemble(rng, lo, hi, k % 2 == 1);
            std::vector<double> targets(spec.point_count());
            for (auto& p : targets) {
                p = rng.uniform();
            }
            const auto rep = centroid_ambiguity(loss, *bundle, spec, targets);
            worst = max_rel(worst, rep);
            deviation = std::max(deviation, rep.diagnostics.at("max_deviation_from_mean"));
        }
        const double tol = ctx.tol(loss.grad_is_analytic ? 1e-8 : 1e-6);
        ctx.add(s, "centroid_ambiguity_identity", "ambiguity decomposition for the centroid combiner", worst, tol,
                worst <= tol, "relative residual, 100 random ensembles");
        if (ctx.c) {
            ctx.add(s, "centroid_is_arithmetic_mean", "centroid combiner is linear iff gradient-symmetric", deviation,
                    1e-8, deviation <= 1e-8, "largest |centroid - mean| over random ensembles");
        }
    });
    if (!ctx.c) {
        ctx.guarded(s, "centroid_is_not_arithmetic_mean", "centroid combiner is linear iff gradient-symmetric", [&] {
            const std::vector<double> members{0.0, 2.0};
            const double dev = std::abs(centroid_combine(*bundle, members) - 1.0);
            ctx.add(s, "centroid_is_not_arithmetic_mean", "centroid combiner is linear iff gradient-symmetric", dev,
                    1e-3, dev > 1e-3, "members {0, 2}: |centroid - 1|");
        });
    }
}

}  // namespace

CommandResult cmd_verify(const VerifyOptions& opts) {
    static const std::vector<std::string> suites = {"symmetry", "bregman", "conjugate", "decomp", "ensemble"};
    if (opts.suite != "all" && std::find(suites.begin(), suites.end(), opts.suite) == suites.end()) {
        throw ConfigError("unknown suite '" + opts.suite +
                          "' (expected symmetry, bregman, conjugate, decomp, ensemble or all)");
    }
    if (opts.tol && !(*opts.tol > 0)) {
        throw ConfigError("--tol must be positive");
    }
    const LossDescriptor loss = loss_from_spec(opts.loss);

    CommandResult result;
    Report& r = result.report;
    r.command = json{{"name", "verify"}, {"loss", opts.loss}, {"suite", opts.suite}, {"seed", opts.seed}};
    r.command["tol"] = opts.tol ? number_to_json(*opts.tol) : json(nullptr);

    std::optional<double> c;
    try {
        c = classify_gradient_symmetry(loss);
        r.loss = loss_echo(loss);
    } catch (const Error& e) {
        r.loss = json{{"name", loss.name}};
        r.warnings.push_back(std::string("classification failed: ") + e.what());
    }
    SuiteContext ctx{loss, c, opts.tol, opts.seed, r.checks, r.inapplicable};
    auto selected = [&](const char* name) { return opts.suite == "all" || opts.suite == name; };
    if (selected("symmetry")) {
        symmetry_suite(ctx);
    }
    if (selected("bregman")) {
        bregman_suite(ctx);
    }
    if (selected("conjugate")) {
        conjugate_suite(ctx);
    }
    if (selected("decomp")) {
        decomp_suite(ctx);
    }
    if (selected("ensemble")) {
        ensemble_suite(ctx);
    }
    r.summary = json{{"classification", describe_c(c)},
                     {"checks", r.checks.size()},
                     {"failed", std::count_if(r.checks.begin(), r.checks.end(),
                                              [](const CheckResult& x) { return !x.passed; })}};
    result.exit_code = r.passed() ? kExitOk : kExitCheckFailed;
    return result;
}

namespace {

std::string normalized_synthetic(const SyntheticSpec& s) {
    std::ostringstream out;
    out.precision(17);
    out << to_string(s.kind) << ":n=" << s.n << ",d=" << s.d << ",sep=" << s.separation;
    return out.str();
}

CheckResult residual_check(const std::string& suite, const DecompositionReport& rep) {
    return {suite,
            rep.theorem_id,
            rep.identity,
            rep.relative_residual(),
            rep.residual_tolerance,
            rep.within_tolerance(),
            "relative residual"};
}

void collect_flags(Report& r, const DecompositionReport& rep) {
    for (const auto& f : rep.flags) {
        r.warnings.push_back(rep.theorem_id + ": " + f);
    }
}

}  // namespace

CommandResult cmd_diagnose(const DiagnoseOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    if (opts.data.has_value() == opts.synthetic.has_value()) {
        throw ConfigError("give exactly one of --data or --synthetic");
    }
    if (opts.models < 1) {
        throw ConfigError("--models must be at least 1");
    }
    const LossDescriptor loss = loss_from_spec(opts.loss);

    CommandResult result;
    Report& r = result.report;
    r.command = json{{"name", "diagnose"},
                     {"loss", opts.loss},
                     {"models", opts.models},
                     {"seed", opts.seed},
                     {"per_point", opts.per_point},
                     {"require_noise", opts.require_noise},
                     {"learning_rate", opts.learning_rate},
                     {"iterations", opts.iterations},
                     {"l2_penalty", opts.l2_penalty},
                     {"init_scale", opts.init_scale}};

    LabeledDataset data;
    if (opts.synthetic) {
        const auto spec = parse_synthetic_spec(*opts.synthetic);
        data = make_synthetic(spec, opts.seed);
        r.command["synthetic"] = normalized_synthetic(spec);
        r.command["data"] = nullptr;
    } else {
        data = read_dataset_csv(*opts.data);
        r.command["data"] = *opts.data;
        r.command["synthetic"] = nullptr;
    }
    if (opts.require_noise && !data.posterior) {
        throw ConfigError("--require-noise was given but the dataset has no posterior column 'p'");
    }

    TrainConfig config;
    config.loss_spec = opts.loss;
    config.learning_rate = opts.learning_rate;
    config.iterations = opts.iterations;
    config.l2_penalty = opts.l2_penalty;
    config.bootstrap_count = opts.models;
    config.seed = opts.seed;
    config.init_scale = opts.init_scale;
    const auto boot = bootstrap_margins(data, loss, config, opts.threads);
    const auto train_end = std::chrono::steady_clock::now();

    r.loss = loss_echo(loss);
    const DecompOptions dopts{opts.per_point, opts.threads};
    const std::string suite = "diagnose";
    auto record = [&](DecompositionReport rep) {
        r.checks.push_back(residual_check(suite, rep));
        collect_flags(r, rep);
        r.decompositions.push_back(std::move(rep));
    };

    record(margin_variance_decomposition(loss, boot.samples, boot.labels, dopts));
    try {
        record(bv_decomposition_gradient_symmetric(loss, boot.samples, boot.labels, dopts));
    } catch (const InapplicableError& e) {
        r.inapplicable.push_back({theorem::kGradientSymmetric, e.what()});
    }
    const auto parts = even_odd_split(loss);
    if (parts.odd_slope) {
        std::optional<std::span<const double>> post;
        if (boot.posterior) {
            post = std::span<const double>(*boot.posterior);
        }
        record(lol_decomposition(loss, parts, boot.samples, boot.labels, post, dopts));
    } else {
        r.inapplicable.push_back({theorem::kLinearOdd, "odd part of '" + loss.name + "' is not linear"});
    }
    if (boot.posterior) {
        try {
            const auto bundle = build_link_bundle(loss);
            record(buja_decomposition(loss, bundle, boot.samples, *boot.posterior, dopts));
            const auto f_star = boot.samples.central_model();
            record(noise_bias_report(loss, bundle, f_star, *boot.posterior, dopts));
        } catch (const LinkDomainError& e) {
            r.inapplicable.push_back({theorem::kBuja, e.what()});
            r.inapplicable.push_back({theorem::kNoiseBias, e.what()});
        } catch (const InapplicableError& e) {
            r.inapplicable.push_back({theorem::kNoiseBias, e.what()});
        }
    } else {
        const std::string why = "dataset has no posterior column";
        r.inapplicable.push_back({theorem::kBuja, why});
        r.inapplicable.push_back({theorem::kNoiseBias, why});
    }

    if (boot.redraws > 0) {
        r.warnings.push_back("bootstrap: " + std::to_string(boot.redraws) + " single-class resamples redrawn");
    }
    r.summary = json{{"points", data.size()},
                     {"dimension", data.dimension()},
                     {"train_points", data.rows(Split::train).size()},
                     {"eval_points", boot.eval_rows.size()},
                     {"models", opts.models},
                     {"posterior_known", data.posterior.has_value()},
                     {"bootstrap_redraws", boot.redraws}};
    if (opts.timing) {
        const auto end = std::chrono::steady_clock::now();
        const auto secs = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
        r.timing = json{{"train_seconds", secs(start, train_end)},
                        {"decompose_seconds", secs(train_end, end)},
                        {"threads", opts.threads}};
    }
    result.exit_code = r.passed() ? kExitOk : kExitCheckFailed;
    return result;
}

MembersTable read_members_csv(std::istream& in) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t\r");
            const auto e = cell.find_last_not_of(" \t\r");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError("members CSV is empty");
    }
    const auto header = split(line);
    if (header.size() < 3 || header.front() != "point_id" || header.back() != "label") {
        throw ConfigError("members CSV header must be point_id,member_1,...,member_M,label");
    }
    const std::size_t m = header.size() - 2;
    for (std::size_t i = 0; i < m; ++i) {
        if (header[i + 1] != "member_" + std::to_string(i + 1)) {
            throw ConfigError("members CSV column " + std::to_string(i + 2) + " should be member_" +
                              std::to_string(i + 1));
        }
    }
    MembersTable t;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw ConfigError("members CSV line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields");
        }
        std::vector<double> row(m);
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t used = 0;
            try {
                row[i] = std::stod(cells[i + 1], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[i + 1].size() || !std::isfinite(row[i])) {
                throw ConfigError("members CSV line " + std::to_string(line_no) + ": '" + cells[i + 1] +
                                  "' is not a finite number");
            }
        }
        const auto& lab = cells.back();
        if (lab != "1" && lab != "+1" && lab != "-1") {
            throw ConfigError("members CSV line " + std::to_string(line_no) + ": label must be -1 or +1");
        }
        t.point_ids.push_back(cells.front());
        t.labels.push_back(lab == "-1" ? -1 : 1);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw ConfigError("members CSV has no data rows");
    }
    t.margins = Matrix(m, rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            t.margins(i, j) = rows[j][i];
        }
    }
    return t;
}

MembersTable read_members_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open members file '" + path + "'");
    }
    return read_members_csv(in);
}

CommandResult cmd_ensemble(const EnsembleOptions& opts) {
    const auto table = read_members_csv(opts.members);
    auto result = cmd_ensemble(table, opts);
    result.report.command["members"] = opts.members;
    return result;
}

CommandResult cmd_ensemble(const MembersTable& table, const EnsembleOptions& opts) {
    const Combiner combiner = parse_combiner(opts.combiner);
    if (combiner == Combiner::weighted) {
        throw ConfigError("the weighted combiner is not available from the command line");
    }
    const LossDescriptor loss = loss_from_spec(opts.loss);
    const auto c = classify_gradient_symmetry(loss);
    if (combiner == Combiner::additive && !c) {
        throw ConfigError("the additive combiner needs a gradient-symmetric loss; l'(v) + l'(-v) is not constant for '" +
                          loss.name + "'");
    }

    CommandResult result;
    Report& r = result.report;
    r.command = json{{"name", "ensemble"}, {"loss", opts.loss}, {"combiner", to_string(combiner)},
                     {"per_point", opts.per_point}, {"members", nullptr}};
    r.loss = loss_echo(loss);
    const std::string suite = "ensemble";
    auto record = [&](DecompositionReport rep) {
        r.checks.push_back(residual_check(suite, rep));
        collect_flags(r, rep);
        r.decompositions.push_back(std::move(rep));
    };

    auto spec = EnsembleSpec::uniform(table.margins, combiner);
    if (combiner == Combiner::arithmetic) {
        auto rep = margin_ambiguity(loss, spec, table.labels);
        const double gain = rep.expected_risk - rep.components.at("average_error");
        r.checks.push_back({suite, "ensemble_not_worse_than_average", "ensemble loss <= average member loss", gain,
                            1e-12 * std::max(1.0, std::abs(rep.expected_risk)),
                            gain <= 1e-12 * std::max(1.0, std::abs(rep.expected_risk)), ""});
        record(std::move(rep));
        if (c) {
            record(gradient_symmetric_ambiguity(loss, spec, table.labels));
        } else {
            r.inapplicable.push_back(
                {"gradient_symmetric_ambiguity", "loss '" + loss.name + "' is not gradient-symmetric"});
        }
    } else if (combiner == Combiner::additive) {
        record(additive_ambiguity(loss, spec, table.labels));
    } else {
        const auto bundle = build_link_bundle(loss);
        std::vector<double> targets;
        for (int y : table.labels) {
            targets.push_back(y > 0 ? 1.0 : 0.0);
        }
        auto rep = centroid_ambiguity(loss, bundle, spec, targets);
        if (!opts.per_point) {
            rep.per_point.clear();
        }
        const double dev = rep.diagnostics.at("max_deviation_from_mean");
        if (c) {
            r.checks.push_back({suite, "centroid_is_arithmetic_mean", "centroid combiner is linear iff gradient-symmetric",
                                dev, 1e-8, dev <= 1e-8, "largest |centroid - mean| over points"});
        } else {
            std::ostringstream w;
            w << "centroid combiner deviates from the arithmetic mean by up to " << dev
              << " (loss is not gradient-symmetric)";
            r.warnings.push_back(w.str());
        }
        record(std::move(rep));
    }
    r.summary = json{{"members", spec.member_count()}, {"points", spec.point_count()}};
    result.exit_code = r.passed() ? kExitOk : kExitCheckFailed;
    return result;
}

}  // namespace marginbv
