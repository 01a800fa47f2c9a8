#include "marginbv/numeric.hpp"

#include <algorithm>
#include <exception>
#include <thread>

namespace marginbv {

std::vector<double> ProbeGrid::points() const {
    std::vector<double> out(count);
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) {
        out[k] = lo + step * static_cast<double>(k);
    }
    // Pin the midpoint of odd symmetric grids to exact zero.
    if (symmetric() && count % 2 == 1) {
        out[count / 2] = 0.0;
    }
    return out;
}

bool ProbeGrid::symmetric() const { return lo == -hi && hi > 0; }

std::vector<double> default_probability_grid() {
    std::vector<double> out;
    out.reserve(99);
    for (int k = 1; k <= 99; ++k) {
        out.push_back(static_cast<double>(k) / 100.0);
    }
    return out;
}

double bisect_increasing(const ScalarFn& fn, double lo, double hi, double x_tol, int max_iter) {
    double flo = fn(lo);
    double fhi = fn(hi);
    if (!std::isfinite(flo) || !std::isfinite(fhi)) {
        return std::nan("");
    }
    if (flo == 0.0) {
        return lo;
    }
    if (fhi == 0.0) {
        return hi;
    }
    if (flo > 0.0 || fhi < 0.0) {
        return std::nan("");
    }
    for (int it = 0; it < max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi || hi - lo <= x_tol * std::max(1.0, std::abs(mid))) {
            break;
        }
        const double fm = fn(mid);
        if (!std::isfinite(fm)) {
            return std::nan("");
        }
        if (fm == 0.0) {
            return mid;
        }
        if (fm < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

namespace {

// Expands an infinite end outward until the function stops increasing.
double bracket_end(const ScalarFn& fn, double start, double direction, double limit) {
    double step = 1.0;
    double x = start;
    double fx = fn(x);
    for (int k = 0; k < 200; ++k) {
        double next = x + direction * step;
        if ((direction > 0 && next > limit) || (direction < 0 && next < limit)) {
            return limit;
        }
        double fn_next = fn(next);
        if (!(fn_next > fx)) {
            return next;
        }
        x = next;
        fx = fn_next;
        step *= 2.0;
    }
    return x;
}

}  // namespace

MaximizeResult golden_section_max(const ScalarFn& fn, double lo, double hi, double x_tol,
                                  int max_iter, double start) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        double s = std::clamp(start, lo, hi);
        if (!std::isfinite(hi)) {
            hi = bracket_end(fn, s, +1.0, hi);
        }
        if (!std::isfinite(lo)) {
            lo = bracket_end(fn, s, -1.0, lo);
        }
    }
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo;
    double b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = fn(c);
    double fd = fn(d);
    int it = 0;
    bool converged = false;
    while (it < max_iter) {
        if (b - a <= x_tol) {
            converged = true;
            break;
        }
        ++it;
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = fn(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = fn(d);
        }
    }
    if (!converged && b - a <= x_tol) {
        converged = true;
    }
    // The endpoints themselves may hold the supremum when the optimum is on the boundary.
    double best_x = fc >= fd ? c : d;
    double best = std::max(fc, fd);
    for (double x : {lo, hi, 0.5 * (a + b)}) {
        double fx = fn(x);
        if (fx > best) {
            best = fx;
            best_x = x;
        }
    }
    return {best_x, best, it, converged};
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) {
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace marginbv
