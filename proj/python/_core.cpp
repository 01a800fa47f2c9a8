#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "marginbv/bregman.hpp"
#include "marginbv/commands.hpp"
#include "marginbv/decomp.hpp"
#include "marginbv/ensemble.hpp"
#include "marginbv/errors.hpp"
#include "marginbv/report.hpp"
#include "marginbv/risk_link.hpp"

namespace py = pybind11;
using namespace marginbv;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    return Matrix::from_rows(rows);
}

// Reports cross the boundary as JSON text; the Python side parses them.
std::string decompose(const std::string& loss_spec, const std::vector<std::vector<double>>& margins,
                      const std::vector<int>& labels, std::optional<std::vector<double>> posteriors,
                      bool per_point) {
    const auto loss = loss_from_spec(loss_spec);
    const MarginSampleMatrix samples(to_matrix(margins));
    const DecompOptions opts{per_point, 1};
    Report r;
    r.command = {{"name", "decompose"}, {"loss", loss_spec}};
    r.loss = loss_echo(loss);
    r.decompositions.push_back(margin_variance_decomposition(loss, samples, labels, opts));
    try {
        r.decompositions.push_back(bv_decomposition_gradient_symmetric(loss, samples, labels, opts));
    } catch (const InapplicableError& e) {
        r.inapplicable.push_back({theorem::kGradientSymmetric, e.what()});
    }
    const auto parts = even_odd_split(loss);
    if (parts.odd_slope) {
        r.decompositions.push_back(lol_decomposition(loss, parts, samples, labels, std::nullopt, opts));
    } else {
        r.inapplicable.push_back({theorem::kLinearOdd, "odd part is not linear"});
    }
    if (posteriors) {
        const auto bundle = build_link_bundle(loss);
        r.decompositions.push_back(buja_decomposition(loss, bundle, samples, *posteriors, opts));
        r.decompositions.push_back(noise_bias_report(loss, bundle, samples.central_model(), *posteriors, opts));
    }
    return to_json(r).dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bias-variance decompositions for margin losses";
    m.attr("tool_version") = kToolVersion;

    // Later registrations are tried first, so the base class goes in first.
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<CatalogueError>(m, "CatalogueError", PyExc_KeyError);
    py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
    py::register_exception<InapplicableError>(m, "InapplicableError", PyExc_ValueError);

    m.def("loss_names", &builtin_loss_names);
    m.def("loss_value", [](const std::string& spec, double v) { return loss_from_spec(spec).eval(v); });
    m.def("loss_gradient", [](const std::string& spec, double v) { return loss_from_spec(spec).grad(v); });
    m.def("gradient_symmetry", [](const std::string& spec) { return classify_gradient_symmetry(loss_from_spec(spec)); },
          "c when l'(v) + l'(-v) is constant, else None");
    m.def("loss_info", [](const std::string& spec) { return loss_echo(loss_from_spec(spec)).dump(); });
    m.def("divergence", [](const std::string& spec, double u, double v) {
        return divergence(generator_from_loss(loss_from_spec(spec)), u, v);
    });
    m.def("link", [](const std::string& spec, double p) { return build_link_bundle(loss_from_spec(spec)).link(p); });
    m.def("min_risk",
          [](const std::string& spec, double p) { return build_link_bundle(loss_from_spec(spec)).min_risk(p); });
    m.def("conjugate", [](const std::string& spec, double v) {
        return conjugate(neg_min_risk_generator(build_link_bundle(loss_from_spec(spec))), v);
    });
    m.def("centroid", [](const std::string& spec, const std::vector<double>& members) {
        return centroid_combine(build_link_bundle(loss_from_spec(spec)), members);
    });
    m.def("decompose", &decompose, py::arg("loss"), py::arg("margins"), py::arg("labels"),
          py::arg("posteriors") = py::none(), py::arg("per_point") = false);

    m.def(
        "verify",
        [](const std::string& loss, const std::string& suite, std::optional<double> tol, std::uint64_t seed) {
            const auto r = cmd_verify({loss, suite, tol, seed});
            return py::make_tuple(r.exit_code, dump_report(r.report));
        },
        py::arg("loss"), py::arg("suite") = "all", py::arg("tol") = py::none(), py::arg("seed") = 0);
    m.def(
        "diagnose",
        [](std::optional<std::string> data, std::optional<std::string> synthetic, const std::string& loss,
           std::size_t models, std::uint64_t seed, unsigned threads, int iterations, double learning_rate,
           double l2, bool per_point) {
            DiagnoseOptions o;
            o.data = std::move(data);
            o.synthetic = std::move(synthetic);
            o.loss = loss;
            o.models = models;
            o.seed = seed;
            o.threads = threads;
            o.iterations = iterations;
            o.learning_rate = learning_rate;
            o.l2_penalty = l2;
            o.per_point = per_point;
            py::gil_scoped_release release;
            const auto r = cmd_diagnose(o);
            return std::make_pair(r.exit_code, dump_report(r.report));
        },
        py::arg("data") = py::none(), py::arg("synthetic") = py::none(), py::arg("loss") = "logistic",
        py::arg("models") = 50, py::arg("seed") = 0, py::arg("threads") = 1, py::arg("iterations") = 500,
        py::arg("learning_rate") = 0.1, py::arg("l2") = 1e-4, py::arg("per_point") = false);
    m.def(
        "ensemble",
        [](const std::string& members, const std::string& loss, const std::string& combiner, bool per_point) {
            const auto r = cmd_ensemble({members, loss, combiner, per_point});
            return py::make_tuple(r.exit_code, dump_report(r.report));
        },
        py::arg("members"), py::arg("loss") = "logistic", py::arg("combiner") = "mean", py::arg("per_point") = false);
}
