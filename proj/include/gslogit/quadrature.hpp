#pragma once
#include "core.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

// Quadrature for log-concave integrands on R^k (k small), returning logarithms so that
// evidences far below double range stay representable.
namespace gslogit::quadrature {

struct Options {
    double rel_tol = 1e-6;
    /// Integration stops where log f has fallen this far below its maximum.
    double log_drop = 36.0;
    int max_subdivisions = 400;
    /// Tolerance factor applied to each nested inner level.
    double inner_tol_factor = 0.1;
};

struct Piece {
    double a = 0.0;
    double b = 0.0;
    double value = 0.0;
    double error = 0.0;
    bool operator<(const Piece& other) const { return error < other.error; }
};

/// Globally adaptive Gauss-Kronrod (7,15) over consecutive breakpoints: the piece with the
/// largest error estimate is bisected until the summed error meets rel_tol.
template <class F>
double integrate_pieces(F&& f, const std::vector<double>& breaks, double rel_tol, int max_subdivisions,
                        double* error_out = nullptr)
{
    using Rule = boost::math::quadrature::gauss_kronrod<double, 15>;
    auto apply = [&](double a, double b) {
        Piece p{a, b, 0.0, 0.0};
        p.value = Rule::integrate(f, a, b, 0, 0.0, &p.error);
        return p;
    };
    std::priority_queue<Piece> heap;
    double total = 0.0;
    double error = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        if (!(breaks[k + 1] > breaks[k])) continue;
        Piece p = apply(breaks[k], breaks[k + 1]);
        total += p.value;
        error += p.error;
        heap.push(p);
    }
    for (int it = 0; it < max_subdivisions && !heap.empty() && error > rel_tol * std::abs(total); ++it) {
        Piece worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) break;
        Piece left = apply(worst.a, mid);
        Piece right = apply(mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    if (error_out) *error_out = error;
    return total;
}

namespace detail {

template <class LogF>
double golden_max(LogF& log_f, double lo, double hi, double tol)
{
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - ratio * (hi - lo);
    double d = lo + ratio * (hi - lo);
    double fc = log_f(c);
    double fd = log_f(d);
    for (int it = 0; it < 80 && (hi - lo) > tol; ++it) {
        if (fc >= fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = log_f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = log_f(d);
        }
    }
    return fc >= fd ? c : d;
}

} // namespace detail

/// log of the integral over R of exp(log_f) for a log-concave log_f.
///
/// `center` and `scale` are a rough location and width; the routine brackets the mode by an
/// expanding walk, refines it by golden section, then lays breakpoints outward on a doubling
/// grid until log_f has dropped by log_drop. Zero is always a breakpoint (the slab kink).
template <class LogF>
double log_integrate_1d(LogF&& log_f, double center, double scale, const Options& opt = {})
{
    if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
    if (!std::isfinite(center)) center = 0.0;

    // 1. bracket the mode
    double best_x = center;
    double best = log_f(center);
    double right_x = center;
    {
        double h = scale;
        double x = center;
        for (int k = 0; k < 200; ++k) {
            x += h;
            const double v = log_f(x);
            if (v > best) {
                best = v;
                best_x = x;
            } else if (v < best - 1.0) {
                break;
            }
            h *= 2.0;
        }
        right_x = x;
    }
    double left_x = center;
    {
        double h = scale;
        double x = center;
        for (int k = 0; k < 200; ++k) {
            x -= h;
            const double v = log_f(x);
            if (v > best) {
                best = v;
                best_x = x;
            } else if (v < best - 1.0) {
                break;
            }
            h *= 2.0;
        }
        left_x = x;
    }
    // neighbours of best_x on the walk are within the bracket; golden search over it
    double mode = detail::golden_max(log_f, left_x, right_x, 1e-4 * scale);
    double top = log_f(mode);
    if (best > top) {
        mode = best_x;
        top = best;
    }
    if (0.0 > left_x && 0.0 < right_x) {
        const double at_zero = log_f(0.0);
        if (at_zero > top) {
            mode = 0.0;
            top = at_zero;
        }
    }
    if (!std::isfinite(top)) return top;

    // 2. local step on each side: the largest h <= scale with a drop of at most 2
    auto local_step = [&](double dir) {
        double h = scale;
        for (int k = 0; k < 60; ++k) {
            if (top - log_f(mode + dir * h) <= 2.0) break;
            h *= 0.5;
        }
        return h;
    };
    std::vector<double> breaks{mode};
    for (double dir : {1.0, -1.0}) {
        double h = local_step(dir);
        double x = mode;
        for (int k = 0; k < 200; ++k) {
            x += dir * h;
            breaks.push_back(x);
            if (log_f(x) < top - opt.log_drop) break;
            h *= 2.0;
        }
    }
    std::sort(breaks.begin(), breaks.end());
    if (breaks.front() < 0.0 && breaks.back() > 0.0) breaks.push_back(0.0);
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

    auto integrand = [&](double x) { return std::exp(log_f(x) - top); };
    const double value = integrate_pieces(integrand, breaks, opt.rel_tol, opt.max_subdivisions);
    if (!(value > 0.0)) return -std::numeric_limits<double>::infinity();
    return top + std::log(value);
}

/// log of the integral over R^k of exp(log_f(x)) for log-concave log_f, k = mode.size() >= 1.
///
/// `covariance` is a Gaussian approximation used only to place each nested level: level k is
/// centred at the conditional mean given the outer coordinates with the conditional sd as scale.
template <class LogF>
double log_integrate(LogF&& log_f, const Vec& mode, const Mat& covariance, const Options& opt = {})
{
    const Index dim = mode.size();
    require(dim >= 1, "log_integrate needs at least one dimension");
    require(covariance.rows() == dim && covariance.cols() == dim, "covariance shape mismatch");

    // conditional regression coefficients and sds for x_k | x_0..x_{k-1}
    std::vector<Vec> coef(static_cast<std::size_t>(dim));
    std::vector<double> sd(static_cast<std::size_t>(dim));
    for (Index k = 0; k < dim; ++k) {
        if (k == 0) {
            coef[0] = Vec();
            sd[0] = std::sqrt(std::max(covariance(0, 0), 1e-300));
            continue;
        }
        const Mat s11 = covariance.topLeftCorner(k, k);
        const Vec s12 = covariance.block(0, k, k, 1);
        Vec b = s11.ldlt().solve(s12);
        coef[static_cast<std::size_t>(k)] = b;
        sd[static_cast<std::size_t>(k)] = std::sqrt(std::max(covariance(k, k) - b.dot(s12), 1e-300));
    }

    Vec x = mode;
    std::function<double(Index, double)> level = [&](Index k, double tol) -> double {
        const auto ku = static_cast<std::size_t>(k);
        double center = mode(k);
        if (k > 0) center += coef[ku].dot(x.head(k) - mode.head(k));
        Options local = opt;
        local.rel_tol = tol;
        if (k == dim - 1) {
            auto f = [&](double t) {
                x(k) = t;
                return log_f(static_cast<const Vec&>(x));
            };
            return log_integrate_1d(f, center, sd[ku], local);
        }
        auto f = [&](double t) {
            x(k) = t;
            return level(k + 1, tol * opt.inner_tol_factor);
        };
        return log_integrate_1d(f, center, sd[ku], local);
    };
    return level(0, opt.rel_tol);
}

} // namespace gslogit::quadrature
