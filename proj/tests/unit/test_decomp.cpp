#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "../oracles.hpp"
#include "marginbv/decomp.hpp"
#include "marginbv/errors.hpp"
#include "marginbv/rng.hpp"

using namespace marginbv;

namespace {

MarginSampleMatrix column(std::vector<double> margins) {
    const std::size_t m = margins.size();
    return MarginSampleMatrix(Matrix(m, 1, std::move(margins)));
}

struct Instance {
    MarginSampleMatrix samples;
    std::vector<int> labels;
    std::vector<double> posteriors;
};

Instance random_instance(Rng& rng, double lo = -4, double hi = 4) {
    const std::size_t m = 1 + rng.index(8);
    const std::size_t n = 1 + rng.index(16);
    Matrix x(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            x(i, j) = lo + (hi - lo) * rng.uniform();
        }
    }
    Instance in{MarginSampleMatrix(std::move(x)), {}, {}};
    for (std::size_t j = 0; j < n; ++j) {
        in.labels.push_back(rng.bernoulli(0.5) ? 1 : -1);
        in.posteriors.push_back(0.05 + 0.9 * rng.uniform());
    }
    return in;
}

const std::vector<std::string> kSymmetric = {"squared", "logistic", "canonical_boosting", "laplacian"};

}  // namespace

TEST_CASE("margin variance decomposition of the worked instance") {
    const oracle::LogisticMicro micro;
    CHECK(micro.expected_risk == doctest::Approx(0.180925).epsilon(1e-5));
    CHECK(micro.central_risk == doctest::Approx(0.126928).epsilon(1e-5));
    CHECK(micro.variance == doctest::Approx(0.053996).epsilon(1e-5));

    const auto loss = builtin_loss("logistic");
    const std::vector<int> y{1};
    const auto rep = margin_variance_decomposition(loss, column({1, 3}), y);
    CHECK(rep.theorem_id == theorem::kMarginVariance);
    CHECK(rep.expected_risk == doctest::Approx(micro.expected_risk).epsilon(1e-14));
    CHECK(rep.components.at("central_risk") == doctest::Approx(micro.central_risk).epsilon(1e-14));
    CHECK(rep.components.at("margin_variance") == doctest::Approx(micro.variance).epsilon(1e-13));
    CHECK(rep.within_tolerance());
    CHECK(rep.flags.empty());
}

TEST_CASE("margin variance decomposition edge cases") {
    const auto sq = builtin_loss("squared");
    const std::vector<int> y{1};
    const auto rep = margin_variance_decomposition(sq, column({0, 2}), y);
    CHECK(rep.expected_risk == doctest::Approx(1));
    CHECK(rep.components.at("central_risk") == doctest::Approx(0));
    CHECK(rep.components.at("margin_variance") == doctest::Approx(1));

    for (const auto& name : builtin_loss_names()) {
        const auto single = margin_variance_decomposition(builtin_loss(name), column({0.7}), y);
        CHECK(single.components.at("margin_variance") == 0.0);
        CHECK(single.components.at("central_risk") == single.expected_risk);
    }

    const std::vector<int> bad{2};
    CHECK_THROWS_AS(margin_variance_decomposition(sq, column({0, 2}), bad), ParameterError);
    CHECK_THROWS_AS(margin_variance_decomposition(sq, column({0, std::nan("")}), y), ParameterError);
    CHECK_THROWS_AS(MarginSampleMatrix(Matrix(2, 1, std::vector<double>{0, 1}), {0.3, 0.3}).validate(),
                    ParameterError);
}

TEST_CASE("non-finite divergences name the offending model and point") {
    auto loss = builtin_loss("logistic");
    loss.name = "spiky";
    loss.eval = [](double v) { return v > 4.5 ? std::nan("") : oracle::logistic(v); };
    const std::vector<int> y{1, 1};
    try {
        margin_variance_decomposition(loss, MarginSampleMatrix(Matrix(2, 2, std::vector<double>{0, 1, 0, 5})), y);
        FAIL("expected a NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("model 1") != std::string::npos);
        CHECK(msg.find("point 1") != std::string::npos);
    }
}

TEST_CASE("label-free decomposition for gradient-symmetric losses") {
    const auto loss = builtin_loss("logistic");
    const oracle::LogisticMicro micro;
    const std::vector<int> pos{1};
    const std::vector<int> neg{-1};
    const auto a = bv_decomposition_gradient_symmetric(loss, column({1, 3}), pos);
    const auto b = bv_decomposition_gradient_symmetric(loss, column({1, 3}), neg);
    CHECK(a.components.at("variance") == doctest::Approx(micro.variance).epsilon(1e-13));
    CHECK(b.components.at("variance") == a.components.at("variance"));
    CHECK(b.components.at("bias_plus_noise") == doctest::Approx(oracle::logistic(-2)).epsilon(1e-14));
    CHECK(b.components.at("bias_plus_noise") == doctest::Approx(2.126928).epsilon(1e-6));
    CHECK_THROWS_AS(bv_decomposition_gradient_symmetric(builtin_loss("exponential"), column({1, 3}), pos),
                    InapplicableError);
    CHECK_THROWS_AS(bv_decomposition_gradient_symmetric(builtin_loss("smooth_hinge"), column({1, 3}), pos),
                    InapplicableError);
}

TEST_CASE("probability-space decomposition") {
    const auto loss = builtin_loss("logistic");
    const auto bundle = build_link_bundle(loss);
    const oracle::LogisticMicro micro;
    for (double p : {0.2, 0.5, 0.93}) {
        const std::vector<double> post{p};
        const auto in = buja_inputs(bundle, column({1, 3}), post);
        CHECK(in.centroid[0] == doctest::Approx(oracle::sigmoid(2)).epsilon(1e-12));
        const auto rep = buja_decomposition(loss, bundle, column({1, 3}), post);
        CHECK(rep.components.at("variance") == doctest::Approx(micro.variance).epsilon(1e-10));
        CHECK(rep.expected_risk ==
              doctest::Approx(0.5 * (oracle::pointwise_risk(oracle::logistic, p, 1) +
                                     oracle::pointwise_risk(oracle::logistic, p, 3)) +
                              oracle::neg_min_risk_logistic(p))
                  .epsilon(1e-10));
        CHECK(rep.within_tolerance());
    }
    const std::vector<double> post{0.4};
    const auto single = buja_decomposition(loss, bundle, column({0.3}), post);
    CHECK(single.components.at("variance") == doctest::Approx(0).scale(1));
    CHECK(single.expected_risk == doctest::Approx(single.components.at("bias")).epsilon(1e-14));
    const std::vector<double> bad{1.0};
    CHECK_THROWS_AS(buja_decomposition(loss, bundle, column({0.3}), bad), ParameterError);
}

TEST_CASE("clamped margins are flagged") {
    const auto loss = builtin_loss("squared");
    const auto bundle = build_link_bundle(loss);
    const std::vector<double> post{0.4};
    const auto rep = buja_decomposition(loss, bundle, column({2.0, 3.0, 0.1}), post);
    CHECK(rep.diagnostics.at("clamped_fraction") == doctest::Approx(2.0 / 3.0));
    CHECK(std::find(rep.flags.begin(), rep.flags.end(), "clamped_fraction_above_10_percent") != rep.flags.end());
}

TEST_CASE("linear odd decomposition") {
    const auto loss = builtin_loss("logistic");
    const auto parts = even_odd_split(loss);
    const std::vector<int> y{1};
    const auto constant = lol_decomposition(loss, parts, column({2, 2}), y);
    CHECK(constant.components.at("expected_margin_term") == doctest::Approx(-1).epsilon(1e-14));
    CHECK(constant.components.at("even_part_term") == doctest::Approx(1.126928).epsilon(1e-6));
    CHECK(constant.expected_risk == doctest::Approx(oracle::logistic(2)).epsilon(1e-14));

    const auto micro = lol_decomposition(loss, parts, column({1, 3}), y);
    const double even_1 = 0.5 * (oracle::logistic(1) + oracle::logistic(-1));
    const double even_3 = 0.5 * (oracle::logistic(3) + oracle::logistic(-3));
    const double even_2 = 0.5 * (oracle::logistic(2) + oracle::logistic(-2));
    CHECK(micro.diagnostics.at("jensen_gap") == doctest::Approx(0.5 * (even_1 + even_3) - even_2).epsilon(1e-12));
    CHECK(micro.diagnostics.at("jensen_gap") == doctest::Approx(oracle::LogisticMicro{}.variance).epsilon(1e-12));
    CHECK(std::find(micro.notes.begin(), micro.notes.end(), "empirical Y*: observed labels stand in for E[Y | x]") !=
          micro.notes.end());

    const auto zero = lol_decomposition(loss, parts, column({-1, 1}), y);
    CHECK(zero.components.at("expected_margin_term") == 0.0);
    const std::vector<double> half{0.5};
    const auto zero_y = lol_decomposition(loss, parts, column({1, 3}), y, std::span<const double>(half));
    CHECK(zero_y.components.at("expected_margin_term") == 0.0);

    CHECK_THROWS_AS(lol_decomposition(builtin_loss("exponential"), even_odd_split(builtin_loss("exponential")),
                                      column({1, 3}), y),
                    InapplicableError);
}

TEST_CASE("negative example: a non-convex linear odd loss has a negative Jensen gap") {
    LossDescriptor wavy;
    wavy.name = "wavy";
    wavy.eval = [](double v) { return 2 + std::cos(v) - v / 2; };
    wavy.grad = [](double v) { return -std::sin(v) - 0.5; };
    const auto parts = even_odd_split(wavy);
    REQUIRE(parts.odd_slope.has_value());
    CHECK(*parts.odd_slope == doctest::Approx(-0.5));
    const std::vector<int> y{1};
    const auto rep = lol_decomposition(wavy, parts, column({-std::numbers::pi, std::numbers::pi}), y);
    CHECK(rep.diagnostics.at("jensen_gap") == doctest::Approx(-2).epsilon(1e-12));
    CHECK(rep.within_tolerance());
}

TEST_CASE("noise and bias split") {
    const auto loss = builtin_loss("logistic");
    const auto bundle = build_link_bundle(loss);
    const std::vector<double> f{0.0, 0.3, bundle.link(0.8)};
    const std::vector<double> p{0.5, 0.0, 0.8};
    const auto split = noise_bias_split(loss, bundle, f, p);
    CHECK(split.noise[0] == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(split.noise[1] == 0.0);
    CHECK(split.bias[2] == doctest::Approx(0).scale(1e-12));
    CHECK(split.l0_offset == 0.0);
    for (std::size_t j = 0; j < f.size(); ++j) {
        CHECK(split.noise[j] + split.bias[j] == doctest::Approx(split.central_risk[j]).epsilon(1e-10));
        CHECK(split.noise_bregman[j] == doctest::Approx(split.noise[j]).epsilon(1e-10));
    }
    const std::vector<double> one{1.0};
    const std::vector<double> f1{0.2};
    CHECK(noise_bias_split(loss, bundle, f1, one).noise[0] == 0.0);
    const auto rep = noise_bias_report(loss, bundle, f, p);
    CHECK(rep.theorem_id == theorem::kNoiseBias);
    CHECK(rep.within_tolerance());
}

TEST_CASE("property: identities hold on random instances for every catalogue loss") {
    Rng rng(101);
    for (const auto& name : builtin_loss_names()) {
        CAPTURE(name);
        const auto loss = builtin_loss(name);
        const auto parts = even_odd_split(loss);
        const bool symmetric = classify_gradient_symmetry(loss).has_value();
        for (int k = 0; k < 100; ++k) {
            const auto in = random_instance(rng);
            CHECK(margin_variance_decomposition(loss, in.samples, in.labels).relative_residual() <= 1e-9);
            if (parts.odd_slope) {
                CHECK(lol_decomposition(loss, parts, in.samples, in.labels).relative_residual() <= 1e-9);
                CHECK(lol_decomposition(loss, parts, in.samples, in.labels, std::span<const double>(in.posteriors))
                          .relative_residual() <= 1e-9);
            }
            if (symmetric) {
                const auto gs = bv_decomposition_gradient_symmetric(loss, in.samples, in.labels);
                CHECK(gs.relative_residual() <= 1e-9);
                CHECK(gs.diagnostics.at("margin_variance_gap") <= 1e-10);
            }
        }
    }
}

TEST_CASE("property: the variance and bias terms of the two decompositions coincide") {
    Rng rng(202);
    for (const auto& name : kSymmetric) {
        CAPTURE(name);
        const auto loss = builtin_loss(name);
        const auto bundle = build_link_bundle(loss);
        const double lo = std::max(-4.0, bundle.link(0.01));
        const double hi = std::min(4.0, bundle.link(0.99));
        for (int k = 0; k < 50; ++k) {
            const auto in = random_instance(rng, lo, hi);
            const auto gs = bv_decomposition_gradient_symmetric(loss, in.samples, in.labels, {true, 1});
            const auto buja = buja_decomposition(loss, bundle, in.samples, in.posteriors, {true, 1});
            CHECK(std::abs(gs.components.at("variance") - buja.components.at("variance")) <= 1e-8);
            CHECK(buja.diagnostics.at("max_centroid_gap") <= 1e-8);
            CHECK(buja.relative_residual() <= 1e-8);
            // E_Y l(Y f*) = B(p, psi^{-1}(f*)) + L(p), point by point.
            const auto f_star = in.samples.central_model();
            const auto split = noise_bias_split(loss, bundle, f_star, in.posteriors);
            for (std::size_t j = 0; j < f_star.size(); ++j) {
                const double expected_central = oracle::pointwise_risk(loss.eval, in.posteriors[j], f_star[j]);
                CHECK(std::abs(split.noise[j] + split.bias[j] - expected_central) <= 1e-8);
            }
        }
    }
}

TEST_CASE("witness: the exponential loss separates the centroid from the central model") {
    const auto loss = builtin_loss("exponential");
    const auto bundle = build_link_bundle(loss);
    const std::vector<double> post{0.5};
    const auto rep = buja_decomposition(loss, bundle, column({0, 2}), post);
    // -L'(psi^{-1}(f)) = 2 sinh f, so psi(q*) = asinh(sinh(2) / 2).
    CHECK(rep.diagnostics.at("max_centroid_gap") == doctest::Approx(std::asinh(std::sinh(2.0) / 2) - 1).epsilon(1e-9));
    CHECK(rep.diagnostics.at("max_centroid_gap") > 1e-3);
    CHECK(rep.within_tolerance());
}

TEST_CASE("witness: label-free and margin variances differ for the exponential loss") {
    const auto loss = builtin_loss("exponential");
    const auto samples = column({0, 2});
    for (int y : {1, -1}) {
        const std::vector<int> labels{y};
        const double margin = margin_variance_decomposition(loss, samples, labels).components.at("margin_variance");
        const double label_free = label_free_variance(loss, samples);
        if (y == -1) {
            CHECK(std::abs(margin - label_free) > 1e-3);
        }
        // Hand evaluation with B(u, v) = e^{-u} - e^{-v} + e^{-v}(u - v).
        auto b = [](double u, double v) { return std::exp(-u) - std::exp(-v) + std::exp(-v) * (u - v); };
        CHECK(margin == doctest::Approx(0.5 * (b(0, y) + b(2.0 * y, y))).epsilon(1e-12));
        CHECK(label_free == doctest::Approx(0.5 * (b(0, 1) + b(2, 1))).epsilon(1e-12));
    }
    for (const auto& name : kSymmetric) {
        const auto sym = builtin_loss(name);
        const std::vector<int> neg{-1};
        CHECK(std::abs(margin_variance_decomposition(sym, samples, neg).components.at("margin_variance") -
                       label_free_variance(sym, samples)) <= 1e-8);
    }
}

TEST_CASE("weighted model distributions") {
    const auto loss = builtin_loss("logistic");
    const MarginSampleMatrix weighted(Matrix(3, 1, std::vector<double>{1, 3, 3}), {1.0 / 3, 1.0 / 3, 1.0 / 3});
    const MarginSampleMatrix merged(Matrix(2, 1, std::vector<double>{1, 3}), {1.0 / 3, 2.0 / 3});
    const std::vector<int> y{1};
    const auto a = margin_variance_decomposition(loss, weighted, y);
    const auto b = margin_variance_decomposition(loss, merged, y);
    CHECK(a.expected_risk == doctest::Approx(b.expected_risk).epsilon(1e-14));
    CHECK(a.components.at("margin_variance") == doctest::Approx(b.components.at("margin_variance")).epsilon(1e-13));
}

TEST_CASE("results do not depend on the thread count") {
    Rng rng(7);
    std::vector<double> entries(6 * 300);
    for (double& v : entries) {
        v = 6 * rng.uniform() - 3;
    }
    const Matrix x(6, 300, entries);
    std::vector<int> y(300);
    std::vector<double> p(300);
    for (std::size_t j = 0; j < 300; ++j) {
        y[j] = rng.bernoulli(0.5) ? 1 : -1;
        p[j] = 0.05 + 0.9 * rng.uniform();
    }
    const MarginSampleMatrix samples(x);
    const auto loss = builtin_loss("logistic");
    const auto bundle = build_link_bundle(loss);
    const auto a = margin_variance_decomposition(loss, samples, y, {true, 1});
    const auto b = margin_variance_decomposition(loss, samples, y, {true, 4});
    CHECK(a.expected_risk == b.expected_risk);
    CHECK(a.components == b.components);
    CHECK(a.per_point == b.per_point);
    const auto c = buja_decomposition(loss, bundle, samples, p, {false, 1});
    const auto d = buja_decomposition(loss, bundle, samples, p, {false, 3});
    CHECK(c.components == d.components);
    CHECK(c.residual == d.residual);
}
