#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marginbv/decomp.hpp"
#include "marginbv/loss_zoo.hpp"
#include "marginbv/matrix.hpp"

namespace marginbv {

enum class Split { train, eval };

struct LabeledDataset {
    Matrix features;  // N x d
    std::vector<int> labels;
    std::optional<std::vector<double>> posterior;
    std::vector<Split> split;

    std::size_t size() const { return labels.size(); }
    std::size_t dimension() const { return features.cols(); }
    std::vector<std::size_t> rows(Split which) const;

    void validate() const;
};

// Every fourth point (index % 4 == 3) is held out for evaluation.
std::vector<Split> default_split(std::size_t n);

enum class SyntheticKind { two_gaussians, logistic_ground_truth };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::two_gaussians;
    std::size_t n = 2000;
    std::size_t d = 2;
    double separation = 1.0;
};

// Parses "<kind>[:n=<int>,d=<int>,sep=<real>]".
SyntheticSpec parse_synthetic_spec(const std::string& text);
std::string to_string(SyntheticKind kind);

// two_gaussians: y = +/-1 equiprobable, x ~ N(y * separation * e1, I), so the
// Bayes posterior is sigmoid(2 * separation * x1).
// logistic_ground_truth: x ~ N(0, I), p(x) = sigmoid(w0 . x) with a seeded w0
// of norm `separation`, y drawn from p(x).
LabeledDataset make_synthetic(SyntheticKind kind, std::size_t n, std::size_t d, double separation,
                              std::uint64_t seed);
LabeledDataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// CSV with header row: feature columns f1..fd, label column y in {-1, +1},
// optional posterior column p.
LabeledDataset read_dataset_csv(std::istream& in);
LabeledDataset read_dataset_csv(const std::string& path);
void write_dataset_csv(std::ostream& out, const LabeledDataset& data);

struct TrainConfig {
    std::string loss_spec = "logistic";
    double learning_rate = 0.1;
    int iterations = 500;
    double l2_penalty = 1e-4;
    std::size_t bootstrap_count = 50;
    std::uint64_t seed = 0;
    // Standard deviation of the seeded initial weights; 0 starts from zero.
    double init_scale = 0.0;
    std::string learner = "linear";

    void validate() const;
};

struct LinearModel {
    std::vector<double> weights;
    double intercept = 0.0;
    // Regularised training objective after every iteration, starting with the initial value.
    std::vector<double> objective_history;

    double margin(std::span<const double> x) const;
};

// Full-batch gradient descent on mean l(y f(x)) + l2/2 |w|^2 over `rows`.
// A step that increases the objective is halved, up to 30 times; if none of
// the halved steps helps the parameters stay put, so the objective never rises.
LinearModel train_linear(const LossDescriptor& loss, const Matrix& features,
                         std::span<const int> labels, std::span<const std::size_t> rows,
                         const TrainConfig& config, std::span<const double> initial_weights = {});
LinearModel train_linear(const LabeledDataset& data, const TrainConfig& config);

struct BootstrapResult {
    MarginSampleMatrix samples;  // M x (number of eval points)
    std::vector<int> labels;
    std::optional<std::vector<double>> posterior;
    std::vector<std::size_t> eval_rows;
    std::size_t redraws = 0;
};

// Trains config.bootstrap_count linear models on bootstrap resamples of the
// training split and evaluates their margins on the evaluation split. Each
// resample is driven by a stream derived from (seed, bootstrap index), so the
// result does not depend on `threads`.
BootstrapResult bootstrap_margins(const LabeledDataset& data, const LossDescriptor& loss,
                                  const TrainConfig& config, unsigned threads = 1);
BootstrapResult bootstrap_margins(const LabeledDataset& data, const TrainConfig& config,
                                  unsigned threads = 1);

}  // namespace marginbv
