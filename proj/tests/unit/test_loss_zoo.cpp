#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "../oracles.hpp"
#include "marginbv/errors.hpp"
#include "marginbv/loss_zoo.hpp"

using namespace marginbv;

namespace {

struct Row {
    const char* name;
    oracle::Fn eval;
    oracle::Fn grad;
};

std::vector<Row> catalogue_rows() {
    return {
        {"squared", oracle::squared, oracle::squared_grad},
        {"logistic", oracle::logistic, oracle::logistic_grad},
        {"canonical_boosting", oracle::boosting, oracle::boosting_grad},
        {"laplacian", oracle::laplacian, oracle::laplacian_grad},
        {"exponential", oracle::exponential, oracle::exponential_grad},
        {"smooth_hinge", [](double v) { return oracle::smooth_hinge(v, 10); },
         [](double v) { return oracle::smooth_hinge_grad(v, 10); }},
    };
}

}  // namespace

TEST_CASE("catalogue point values") {
    CHECK(builtin_loss("squared").eval(0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(builtin_loss("logistic").eval(0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(builtin_loss("squared").grad(1) == 0.0);
}

TEST_CASE("catalogue losses and gradients match the loss table") {
    for (const auto& row : catalogue_rows()) {
        CAPTURE(row.name);
        const auto loss = builtin_loss(row.name);
        for (double v = -10; v <= 10; v += 0.125) {
            CAPTURE(v);
            CHECK(loss.eval(v) == doctest::Approx(row.eval(v)).epsilon(1e-12));
            CHECK(std::abs(loss.grad(v) - row.grad(v)) <= 1e-12 * std::max(1.0, std::abs(row.grad(v))));
        }
    }
}

TEST_CASE("losses stay finite far from the origin") {
    for (const auto& name : builtin_loss_names()) {
        CAPTURE(name);
        const auto loss = builtin_loss(name);
        for (double v : {-700.0, -50.0, 50.0, 700.0}) {
            if (name == "exponential" && v < -600) {
                continue;
            }
            CHECK(std::isfinite(loss.eval(v)));
            CHECK(std::isfinite(loss.grad(v)));
        }
    }
    CHECK(builtin_loss("logistic").eval(800) >= 0);
    CHECK(builtin_loss("logistic").eval(-800) == doctest::Approx(800));
}

TEST_CASE("catalogue errors") {
    CHECK_THROWS_AS(builtin_loss("hinge"), CatalogueError);
    CHECK_THROWS_AS(builtin_loss("smooth_hinge", {{"t", 0.0}}), ParameterError);
    CHECK_THROWS_AS(builtin_loss("smooth_hinge", {{"t", -1.0}}), ParameterError);
    CHECK_THROWS_AS(builtin_loss("logistic", {{"t", 2.0}}), ParameterError);
    CHECK_THROWS_AS(loss_from_spec("smooth_hinge:t"), ParameterError);
    CHECK_THROWS_AS(loss_from_spec("smooth_hinge:t=abc"), ParameterError);
}

TEST_CASE("loss spec parsing") {
    const auto spec = parse_loss_spec("smooth_hinge:t=2.5");
    CHECK(spec.name == "smooth_hinge");
    CHECK(spec.params.at("t") == 2.5);
    const auto sh = loss_from_spec("smooth_hinge:t=2.5");
    CHECK(sh.eval(0.3) == doctest::Approx(oracle::smooth_hinge(0.3, 2.5)).epsilon(1e-14));
    CHECK(loss_from_spec("smooth_hinge").params.at("t") == 10.0);
}

TEST_CASE("gradient-symmetry column of the loss table") {
    CHECK(*classify_gradient_symmetry(builtin_loss("squared")) == doctest::Approx(-4).epsilon(1e-12));
    CHECK(*classify_gradient_symmetry(builtin_loss("logistic")) == doctest::Approx(-1).epsilon(1e-12));
    CHECK(*classify_gradient_symmetry(builtin_loss("canonical_boosting")) == doctest::Approx(-1).epsilon(1e-12));
    CHECK(*classify_gradient_symmetry(builtin_loss("laplacian")) == doctest::Approx(-1).epsilon(1e-12));
    CHECK_FALSE(classify_gradient_symmetry(builtin_loss("exponential")).has_value());
    CHECK_FALSE(classify_gradient_symmetry(builtin_loss("smooth_hinge")).has_value());
    CHECK_FALSE(classify_gradient_symmetry(builtin_loss("smooth_hinge", {{"t", 1.0}})).has_value());
}

TEST_CASE("classification rejects inconsistent catalogue constants and bad grids") {
    auto loss = builtin_loss("logistic");
    loss.known_c = -2.0;
    CHECK_THROWS_AS(classify_gradient_symmetry(loss), InvariantViolation);
    CHECK_THROWS_AS(classify_gradient_symmetry(builtin_loss("logistic"), ProbeGrid{-10, 9, 1001}, 1e-8),
                    ParameterError);
    CHECK_THROWS_AS(classify_gradient_symmetry(builtin_loss("logistic"), ProbeGrid{-10, 10, 11}, 1e-8),
                    ParameterError);
}

TEST_CASE("non-finite gradients are reported with their location") {
    auto loss = builtin_loss("logistic");
    loss.name = "broken";
    loss.grad = [](double v) { return v > 2.95 && v < 3.05 ? std::nan("") : oracle::logistic_grad(v); };
    try {
        classify_gradient_symmetry(loss);
        FAIL("expected a NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("v = ") != std::string::npos);
        CHECK(std::string(e.what()).find("broken") != std::string::npos);
    }
}

TEST_CASE("odd parts") {
    CHECK(*even_odd_split(builtin_loss("logistic")).odd_slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(*even_odd_split(builtin_loss("squared")).odd_slope == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(*even_odd_split(builtin_loss("canonical_boosting")).odd_slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(*even_odd_split(builtin_loss("laplacian")).odd_slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK_FALSE(even_odd_split(builtin_loss("exponential")).odd_slope.has_value());
    CHECK_FALSE(even_odd_split(builtin_loss("smooth_hinge")).odd_slope.has_value());
    const auto parts = even_odd_split(builtin_loss("exponential"));
    for (double v : {-2.0, 0.5, 3.0}) {
        CHECK(parts.odd(v) == doctest::Approx(-std::sinh(v)).epsilon(1e-12));
    }
}

TEST_CASE("property: l(v) - l(-v) = c v for gradient-symmetric losses") {
    for (const char* name : {"squared", "logistic", "canonical_boosting", "laplacian"}) {
        CAPTURE(name);
        const auto loss = builtin_loss(name);
        const double c = *classify_gradient_symmetry(loss);
        for (double v : ProbeGrid{}.points()) {
            CHECK(std::abs(loss.eval(v) - loss.eval(-v) - c * v) <= 1e-8);
        }
    }
}

TEST_CASE("property: even and odd parts reassemble the loss") {
    for (const auto& name : builtin_loss_names()) {
        const auto loss = builtin_loss(name);
        const auto parts = even_odd_split(loss);
        for (double v : ProbeGrid{-10, 10, 201}.points()) {
            const double scale = std::max({1.0, std::abs(loss.eval(v)), std::abs(loss.eval(-v))});
            CHECK(std::abs(parts.even(v) + parts.odd(v) - loss.eval(v)) <= 1e-14 * scale);
        }
    }
}

TEST_CASE("property: analytic gradients agree with central differences") {
    for (const auto& name : builtin_loss_names()) {
        CAPTURE(name);
        CHECK(max_gradient_fd_error(builtin_loss(name), ProbeGrid{}) <= 1e-6);
    }
}

TEST_CASE("property: catalogue losses are strictly convex") {
    for (const auto& name : builtin_loss_names()) {
        CAPTURE(name);
        CHECK(is_strictly_convex_on(builtin_loss(name), ProbeGrid{}));
    }
    LossDescriptor wavy = builtin_loss("logistic");
    wavy.eval = [](double v) { return 2 + std::cos(v) - v / 2; };
    wavy.grad = [](double v) { return -std::sin(v) - 0.5; };
    CHECK_FALSE(is_strictly_convex_on(wavy, ProbeGrid{}));
}

TEST_CASE("tabulated loss follows the sampled curve") {
    std::vector<double> vs;
    std::vector<double> ls;
    for (int k = -400; k <= 400; ++k) {
        vs.push_back(k * 0.025);
        ls.push_back(oracle::logistic(k * 0.025));
    }
    const auto tab = tabulated_loss("tab_logistic", vs, ls);
    CHECK_FALSE(tab.grad_is_analytic);
    CHECK(default_symmetry_tol(tab) == 1e-5);
    for (double v : {-7.3, -1.01, 0.0, 0.4, 5.55}) {
        CHECK(tab.eval(v) == doctest::Approx(oracle::logistic(v)).epsilon(1e-5));
        CHECK(std::abs(tab.grad(v) - oracle::logistic_grad(v)) < 1e-4);
    }
    CHECK_THROWS_AS(tabulated_loss("bad", {0, 1, 2}, {1, 1, 1}), ParameterError);
    CHECK_THROWS_AS(tabulated_loss("bad", {0, 2, 1, 3}, {1, 1, 1, 1}), ParameterError);
}
