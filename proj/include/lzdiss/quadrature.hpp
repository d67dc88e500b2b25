#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lzdiss/error.hpp"

namespace lzdiss::quad {

template <typename T>
struct Result {
    T value{};
    double error = 0.0;  // absolute error estimate
    double l1 = 0.0;     // integral of |f|
};

struct Options {
    double rel_tol = 1e-10;  // relative to the L1 norm of the integrand
    double abs_tol = 0.0;
    int panels = 1;          // equal-width panels, each refined adaptively
    unsigned max_depth = 20;
};

/// Adaptive Gauss-Kronrod (15/31) over [a, b], split into equal panels so
/// oscillatory integrands are resolved before bisection starts. Throws
/// QuadratureError when the combined estimate misses max(abs_tol, rel_tol*L1).
template <typename F>
auto integrate(F&& f, double a, double b, const Options& opt = {}, const char* context = "quadrature")
    -> Result<std::invoke_result_t<F&, double>> {
    using T = std::invoke_result_t<F&, double>;
    Result<T> out;
    if (a == b) return out;
    const int panels = std::max(1, opt.panels);
    const double width = (b - a) / panels;
    for (int i = 0; i < panels; ++i) {
        const double lo = a + i * width;
        const double hi = (i + 1 == panels) ? b : lo + width;
        double err = 0.0;
        double l1 = 0.0;
        T part = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            f, lo, hi, opt.max_depth, opt.rel_tol, &err, &l1);
        out.value += part;
        out.error += err;
        out.l1 += l1;
    }
    const double target = std::max(opt.abs_tol, opt.rel_tol * out.l1);
    // Kronrod estimates are pessimistic; allow an order of magnitude of slack.
    if (!std::isfinite(out.error) || out.error > 10.0 * target + 1e-300) {
        throw QuadratureError(std::string(context) + ": tolerance not reached", out.error);
    }
    return out;
}

}  // namespace lzdiss::quad
