#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "marginbv/commands.hpp"
#include "marginbv/errors.hpp"
#include "marginbv/report.hpp"

using namespace marginbv;

namespace {

int emit(const CommandResult& result, const std::string& out, const std::string& per_point_out, bool quiet) {
    const std::string text = dump_report(result.report);
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        write_file_atomic(out, text);
    }
    if (!per_point_out.empty()) {
        write_file_atomic(per_point_out, per_point_csv(result.report));
    }
    if (!quiet) {
        std::cerr << summary_table(result.report);
        std::cerr << (result.exit_code == kExitOk ? "result: pass" : "result: FAIL") << '\n';
    }
    return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bias-variance and ambiguity decompositions for margin losses"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string out;
    std::string per_point_out;
    bool quiet = false;
    std::optional<std::uint64_t> seed;

    VerifyOptions vopts;
    std::optional<double> tol;
    auto* verify = app.add_subcommand("verify", "Run the property suites for a loss");
    verify->add_option("--loss", vopts.loss, "Loss spec, e.g. logistic or smooth_hinge:t=10")->required();
    verify->add_option("--suite", vopts.suite, "symmetry, bregman, conjugate, decomp, ensemble or all")
        ->capture_default_str();
    verify->add_option("--tol", tol, "Tolerance for constancy and identity checks");
    verify->add_option("--seed", seed, "Seed for random instances (default: $MARGINBV_SEED or 0)");
    verify->add_option("--out", out, "Report path ('-' for stdout)");
    verify->add_flag("--quiet", quiet, "Suppress the summary table");

    DiagnoseOptions dopts;
    std::string data;
    std::string synthetic;
    unsigned threads = 1;
    auto* diagnose = app.add_subcommand("diagnose", "Bootstrap linear models and decompose their risk");
    auto* data_opt = diagnose->add_option("--data", data, "Dataset CSV with columns f1..fd,y[,p]");
    auto* synth_opt =
        diagnose->add_option("--synthetic", synthetic, "Synthetic data, e.g. two_gaussians:n=2000,sep=2");
    data_opt->excludes(synth_opt);
    diagnose->add_option("--loss", dopts.loss, "Loss spec")->capture_default_str();
    diagnose->add_option("--models", dopts.models, "Number of bootstrap models")->capture_default_str();
    diagnose->add_option("--seed", seed, "Seed (default: $MARGINBV_SEED or 0)");
    diagnose->add_option("--learning-rate", dopts.learning_rate)->capture_default_str();
    diagnose->add_option("--iterations", dopts.iterations)->capture_default_str();
    diagnose->add_option("--l2", dopts.l2_penalty, "L2 penalty")->capture_default_str();
    diagnose->add_option("--init-scale", dopts.init_scale, "Std. dev. of seeded initial weights")
        ->capture_default_str();
    diagnose->add_option("--threads", threads, "Worker threads (0: hardware concurrency)")->capture_default_str();
    diagnose->add_flag("--per-point", dopts.per_point, "Include per-point series");
    diagnose->add_option("--per-point-csv", per_point_out, "Also write per-point series as flat CSV");
    diagnose->add_flag("--require-noise", dopts.require_noise, "Fail if the dataset has no posterior");
    diagnose->add_flag("--timing", dopts.timing, "Record wall-clock timing in the report");
    diagnose->add_option("--out", out, "Report path ('-' for stdout)");
    diagnose->add_flag("--quiet", quiet, "Suppress the summary table");

    EnsembleOptions eopts;
    auto* ensemble = app.add_subcommand("ensemble", "Ambiguity decomposition of an ensemble");
    ensemble->add_option("--members", eopts.members, "CSV point_id,member_1..member_M,label")->required();
    ensemble->add_option("--loss", eopts.loss, "Loss spec")->capture_default_str();
    ensemble->add_option("--combiner", eopts.combiner, "mean, additive or centroid")->capture_default_str();
    ensemble->add_flag("--per-point", eopts.per_point, "Include per-point series");
    ensemble->add_option("--out", out, "Report path ('-' for stdout)");
    ensemble->add_flag("--quiet", quiet, "Suppress the summary table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        const std::uint64_t chosen_seed = seed ? *seed : default_seed();
        if (verify->parsed()) {
            vopts.tol = tol;
            vopts.seed = chosen_seed;
            return emit(cmd_verify(vopts), out, "", quiet);
        }
        if (diagnose->parsed()) {
            if (!data.empty()) {
                dopts.data = data;
            }
            if (!synthetic.empty()) {
                dopts.synthetic = synthetic;
            }
            dopts.seed = chosen_seed;
            dopts.threads = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
            return emit(cmd_diagnose(dopts), out, per_point_out, quiet);
        }
        return emit(cmd_ensemble(eopts), out, "", quiet);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
}
