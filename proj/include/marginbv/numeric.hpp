#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace marginbv {

using ScalarFn = std::function<double(double)>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Closed interval [lo, hi]; either end may be infinite.
struct Interval {
    double lo = -kInf;
    double hi = kInf;

    bool contains(double x) const { return x >= lo && x <= hi; }
    bool bounded() const { return std::isfinite(lo) && std::isfinite(hi); }
    static Interval real_line() { return {}; }
};

// Equispaced probe points on [lo, hi].
struct ProbeGrid {
    double lo = -10.0;
    double hi = 10.0;
    std::size_t count = 1001;

    std::vector<double> points() const;
    bool symmetric() const;
};

// 99 points {0.01, ..., 0.99}.
std::vector<double> default_probability_grid();

inline constexpr double kProbEps = 1e-12;

inline double clip_probability(double p) {
    return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
}

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// ln(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 0) {
        return x + std::log1p(std::exp(-x));
    }
    return std::log1p(std::exp(x));
}

// x ln x with the 0 ln 0 = 0 convention.
inline double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

// Root of an increasing function on [lo, hi]. Returns NaN if the bracket does
// not straddle zero. Stops when the bracket is below x_tol or stops shrinking.
double bisect_increasing(const ScalarFn& fn, double lo, double hi, double x_tol = 1e-13,
                         int max_iter = 400);

struct MaximizeResult {
    double argmax;
    double value;
    int iterations;
    bool converged;
};

// Golden-section search for the maximum of a unimodal function on [lo, hi].
// Infinite ends are bracketed first by doubling steps away from `start`.
MaximizeResult golden_section_max(const ScalarFn& fn, double lo, double hi, double x_tol,
                                  int max_iter, double start = 0.5);

// Weighted sum in index order; the fixed order keeps results schedule-independent.
inline double ordered_dot(std::span<const double> w, std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += w[i] * x[i];
    }
    return s;
}

inline double ordered_mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) {
        s += v;
    }
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is written
// by exactly one worker, so callers that reduce afterwards in index order get
// identical results for any thread count.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace marginbv
