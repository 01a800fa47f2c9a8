#include "marginbv/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "marginbv/errors.hpp"
#include "marginbv/rng.hpp"

namespace marginbv {

std::vector<std::size_t> LabeledDataset::rows(Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < split.size(); ++j) {
        if (split[j] == which) {
            out.push_back(j);
        }
    }
    return out;
}

void LabeledDataset::validate() const {
    const std::size_t n = labels.size();
    if (features.rows() != n || split.size() != n) {
        throw ConfigError("dataset columns have inconsistent lengths");
    }
    for (int y : labels) {
        if (y != 1 && y != -1) {
            throw ConfigError("labels must be -1 or +1");
        }
    }
    if (posterior) {
        if (posterior->size() != n) {
            throw ConfigError("posterior column has the wrong length");
        }
        for (double p : *posterior) {
            if (!(p > 0.0 && p < 1.0)) {
                throw ConfigError("posteriors must lie in (0, 1)");
            }
        }
    }
    for (double x : features.data()) {
        if (!std::isfinite(x)) {
            throw ConfigError("features must be finite");
        }
    }
}

std::vector<Split> default_split(std::size_t n) {
    std::vector<Split> out(n, Split::train);
    for (std::size_t j = 3; j < n; j += 4) {
        out[j] = Split::eval;
    }
    return out;
}

std::string to_string(SyntheticKind kind) {
    return kind == SyntheticKind::two_gaussians ? "two_gaussians" : "logistic_ground_truth";
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
    SyntheticSpec spec;
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    if (kind == "two_gaussians") {
        spec.kind = SyntheticKind::two_gaussians;
    } else if (kind == "logistic_ground_truth") {
        spec.kind = SyntheticKind::logistic_ground_truth;
    } else {
        throw ConfigError("unknown synthetic kind '" + kind + "'");
    }
    if (colon == std::string::npos) {
        return spec;
    }
    std::stringstream rest(text.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("malformed synthetic parameter '" + item + "'");
        }
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        try {
            std::size_t used = 0;
            if (key == "n" || key == "d") {
                const long long v = std::stoll(value, &used);
                if (v < 0) {
                    throw ConfigError("negative size");
                }
                (key == "n" ? spec.n : spec.d) = static_cast<std::size_t>(v);
            } else if (key == "sep" || key == "separation") {
                spec.separation = std::stod(value, &used);
            } else {
                throw ConfigError("unknown synthetic parameter '" + key + "'");
            }
            if (used != value.size()) {
                throw ConfigError("trailing characters");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("synthetic parameter '" + key + "' is not a number: '" + value + "'");
        }
    }
    return spec;
}

LabeledDataset make_synthetic(SyntheticKind kind, std::size_t n, std::size_t d, double separation,
                              std::uint64_t seed) {
    if (n < 2 || d < 1) {
        throw ConfigError("synthetic data needs n >= 2 and d >= 1");
    }
    if (!std::isfinite(separation) || separation < 0) {
        throw ConfigError("separation must be finite and non-negative");
    }
    Rng rng(seed);
    LabeledDataset data;
    data.features = Matrix(n, d);
    data.labels.resize(n);
    std::vector<double> posterior(n);

    if (kind == SyntheticKind::two_gaussians) {
        for (std::size_t j = 0; j < n; ++j) {
            const int y = rng.bernoulli(0.5) ? 1 : -1;
            data.labels[j] = y;
            for (std::size_t k = 0; k < d; ++k) {
                data.features(j, k) = rng.normal();
            }
            data.features(j, 0) += separation * y;
            posterior[j] = sigmoid(2.0 * separation * data.features(j, 0));
        }
    } else {
        std::vector<double> w0(d);
        double norm = 0.0;
        for (auto& w : w0) {
            w = rng.normal();
            norm += w * w;
        }
        norm = std::sqrt(norm);
        for (auto& w : w0) {
            w = norm > 0 ? separation * w / norm : 0.0;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                data.features(j, k) = rng.normal();
                s += w0[k] * data.features(j, k);
            }
            posterior[j] = sigmoid(s);
            data.labels[j] = rng.bernoulli(posterior[j]) ? 1 : -1;
        }
    }
    // Keep posteriors strictly inside (0, 1) for extreme draws.
    for (auto& p : posterior) {
        p = clip_probability(p);
    }
    data.posterior = std::move(posterior);
    data.split = default_split(n);
    return data;
}

LabeledDataset make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    return make_synthetic(spec.kind, spec.n, spec.d, spec.separation, seed);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != cell.size()) {
        throw ConfigError("line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
    }
    return v;
}

}  // namespace

LabeledDataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ConfigError("dataset CSV is empty");
    }
    const auto header = split_csv_line(line);
    std::map<std::size_t, std::size_t> feature_cols;  // feature index -> column
    std::optional<std::size_t> label_col;
    std::optional<std::size_t> posterior_col;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto& h = header[c];
        if (h == "y") {
            label_col = c;
        } else if (h == "p") {
            posterior_col = c;
        } else if (h.size() > 1 && h[0] == 'f' &&
                   std::all_of(h.begin() + 1, h.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
            feature_cols[std::stoul(h.substr(1))] = c;
        } else {
            throw ConfigError("unexpected dataset column '" + h + "'");
        }
    }
    if (!label_col || feature_cols.empty()) {
        throw ConfigError("dataset CSV needs columns f1..fd and y");
    }
    std::size_t expect = 1;
    for (const auto& [k, c] : feature_cols) {
        if (k != expect++) {
            throw ConfigError("feature columns must be f1..fd without gaps");
        }
    }
    const std::size_t d = feature_cols.size();
    std::vector<double> feats;
    std::vector<int> labels;
    std::vector<double> post;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields");
        }
        for (const auto& [k, c] : feature_cols) {
            feats.push_back(parse_cell(cells[c], line_no));
        }
        const double y = parse_cell(cells[*label_col], line_no);
        if (y != 1.0 && y != -1.0) {
            throw ConfigError("line " + std::to_string(line_no) + ": label must be -1 or +1");
        }
        labels.push_back(static_cast<int>(y));
        if (posterior_col) {
            post.push_back(parse_cell(cells[*posterior_col], line_no));
        }
    }
    LabeledDataset data;
    const std::size_t n = labels.size();
    data.features = Matrix(n, d, std::move(feats));
    data.labels = std::move(labels);
    if (posterior_col) {
        data.posterior = std::move(post);
    }
    data.split = default_split(n);
    data.validate();
    return data;
}

LabeledDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open dataset '" + path + "'");
    }
    return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const LabeledDataset& data) {
    const auto old_precision = out.precision(17);
    for (std::size_t k = 0; k < data.dimension(); ++k) {
        out << 'f' << (k + 1) << ',';
    }
    out << 'y';
    if (data.posterior) {
        out << ",p";
    }
    out << '\n';
    for (std::size_t j = 0; j < data.size(); ++j) {
        for (std::size_t k = 0; k < data.dimension(); ++k) {
            out << data.features(j, k) << ',';
        }
        out << data.labels[j];
        if (data.posterior) {
            out << ',' << (*data.posterior)[j];
        }
        out << '\n';
    }
    out.precision(old_precision);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning rate must be positive");
    }
    if (iterations < 1) {
        throw ConfigError("iterations must be at least 1");
    }
    if (bootstrap_count < 1) {
        throw ConfigError("bootstrap count must be at least 1");
    }
    if (!(l2_penalty >= 0) || !std::isfinite(l2_penalty)) {
        throw ConfigError("l2 penalty must be non-negative");
    }
    if (!(init_scale >= 0)) {
        throw ConfigError("initial weight scale must be non-negative");
    }
    if (learner != "linear") {
        throw ConfigError("only the linear learner is available");
    }
}

double LinearModel::margin(std::span<const double> x) const {
    double s = intercept;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        s += weights[k] * x[k];
    }
    return s;
}

namespace {

struct Objective {
    const LossDescriptor& loss;
    const Matrix& x;
    std::span<const int> y;
    std::span<const std::size_t> rows;
    double l2;

    double value(const std::vector<double>& w, double b) const {
        double s = 0.0;
        for (std::size_t r : rows) {
            double f = b;
            for (std::size_t k = 0; k < w.size(); ++k) {
                f += w[k] * x(r, k);
            }
            s += loss.eval(y[r] * f);
        }
        double reg = 0.0;
        for (double wk : w) {
            reg += wk * wk;
        }
        return s / static_cast<double>(rows.size()) + 0.5 * l2 * reg;
    }

    void gradient(const std::vector<double>& w, double b, std::vector<double>& gw, double& gb) const {
        std::fill(gw.begin(), gw.end(), 0.0);
        gb = 0.0;
        for (std::size_t r : rows) {
            double f = b;
            for (std::size_t k = 0; k < w.size(); ++k) {
                f += w[k] * x(r, k);
            }
            const double g = loss.grad(y[r] * f) * y[r];
            for (std::size_t k = 0; k < w.size(); ++k) {
                gw[k] += g * x(r, k);
            }
            gb += g;
        }
        const double inv = 1.0 / static_cast<double>(rows.size());
        for (std::size_t k = 0; k < w.size(); ++k) {
            gw[k] = gw[k] * inv + l2 * w[k];
        }
        gb *= inv;
    }
};

}  // namespace

LinearModel train_linear(const LossDescriptor& loss, const Matrix& features,
                         std::span<const int> labels, std::span<const std::size_t> rows,
                         const TrainConfig& config, std::span<const double> initial_weights) {
    config.validate();
    if (rows.empty()) {
        throw ConfigError("no training rows");
    }
    const std::size_t d = features.cols();
    Objective obj{loss, features, labels, rows, config.l2_penalty};
    LinearModel model;
    model.weights.assign(d, 0.0);
    if (!initial_weights.empty()) {
        if (initial_weights.size() != d) {
            throw ConfigError("initial weights have the wrong dimension");
        }
        model.weights.assign(initial_weights.begin(), initial_weights.end());
    }
    double current = obj.value(model.weights, model.intercept);
    if (!std::isfinite(current)) {
        throw DivergenceError("non-finite training objective at the initial point", 0);
    }
    model.objective_history.push_back(current);

    std::vector<double> gw(d), trial(d);
    double gb = 0.0;
    for (int it = 1; it <= config.iterations; ++it) {
        obj.gradient(model.weights, model.intercept, gw, gb);
        bool finite = std::isfinite(gb);
        for (double g : gw) {
            finite = finite && std::isfinite(g);
        }
        if (!finite) {
            throw DivergenceError("non-finite gradient at iteration " + std::to_string(it), it);
        }
        double step = config.learning_rate;
        bool any_finite = false;
        for (int halving = 0; halving <= 30; ++halving, step *= 0.5) {
            for (std::size_t k = 0; k < d; ++k) {
                trial[k] = model.weights[k] - step * gw[k];
            }
            const double trial_b = model.intercept - step * gb;
            const double value = obj.value(trial, trial_b);
            any_finite = any_finite || std::isfinite(value);
            if (value <= current) {
                model.weights = trial;
                model.intercept = trial_b;
                current = value;
                break;
            }
        }
        if (!any_finite) {
            throw DivergenceError("non-finite training objective at iteration " + std::to_string(it), it);
        }
        model.objective_history.push_back(current);
    }
    return model;
}

LinearModel train_linear(const LabeledDataset& data, const TrainConfig& config) {
    data.validate();
    const auto rows = data.rows(Split::train);
    return train_linear(loss_from_spec(config.loss_spec), data.features, data.labels, rows, config);
}

BootstrapResult bootstrap_margins(const LabeledDataset& data, const LossDescriptor& loss,
                                  const TrainConfig& config, unsigned threads) {
    config.validate();
    data.validate();
    const auto train_rows = data.rows(Split::train);
    const auto eval_rows = data.rows(Split::eval);
    if (train_rows.size() < 10) {
        throw ConfigError("bootstrap needs at least 10 training points");
    }
    if (eval_rows.empty()) {
        throw ConfigError("dataset has no evaluation points");
    }
    const std::size_t m = config.bootstrap_count;
    const std::size_t n_eval = eval_rows.size();
    Matrix margins(m, n_eval);
    std::vector<std::size_t> redraws(m, 0);

    parallel_for(m, threads, [&](std::size_t b) {
        Rng rng(Rng::derive_seed(config.seed, b));
        std::vector<std::size_t> sample(train_rows.size());
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            bool pos = false;
            bool neg = false;
            for (auto& s : sample) {
                s = train_rows[rng.index(train_rows.size())];
                (data.labels[s] > 0 ? pos : neg) = true;
            }
            ok = pos && neg;
            if (!ok) {
                ++redraws[b];
            }
        }
        if (!ok) {
            throw ConfigError("bootstrap " + std::to_string(b) +
                              ": every resample in 100 attempts held a single class");
        }
        std::vector<double> init;
        if (config.init_scale > 0) {
            init.resize(data.dimension());
            for (auto& w : init) {
                w = config.init_scale * rng.normal();
            }
        }
        const LinearModel model =
            train_linear(loss, data.features, data.labels, sample, config, init);
        for (std::size_t j = 0; j < n_eval; ++j) {
            margins(b, j) = model.margin(data.features.row(eval_rows[j]));
        }
    });

    BootstrapResult out;
    out.samples = MarginSampleMatrix(std::move(margins));
    out.eval_rows = eval_rows;
    out.labels.reserve(n_eval);
    for (std::size_t r : eval_rows) {
        out.labels.push_back(data.labels[r]);
    }
    if (data.posterior) {
        std::vector<double> p;
        p.reserve(n_eval);
        for (std::size_t r : eval_rows) {
            p.push_back((*data.posterior)[r]);
        }
        out.posterior = std::move(p);
    }
    for (auto r : redraws) {
        out.redraws += r;
    }
    return out;
}

BootstrapResult bootstrap_margins(const LabeledDataset& data, const TrainConfig& config,
                                  unsigned threads) {
    return bootstrap_margins(data, loss_from_spec(config.loss_spec), config, threads);
}

}  // namespace marginbv
