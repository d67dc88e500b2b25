#pragma once

// Crossing-time-window analysis: relaxation-rate profiles G1(t), the
// integrated relaxation weight Xi and the location of the dissipative
// minimum of P_LZ(v).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <future>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "lzdiss/error.hpp"
#include "lzdiss/model.hpp"
#include "lzdiss/neqb.hpp"
#include "lzdiss/quadrature.hpp"

namespace lzdiss::analysis {

/// Raised when a probability scan has no interior minimum in its bracket.
class NoInteriorMinimum : public Error {
public:
    using Error::Error;
};

namespace detail {

/// Same bath with unit coupling; G1 is linear in gamma.
inline BathParams unit_coupling(BathParams b) {
    b.gamma = 1.0;
    return b;
}

}  // namespace detail

/// G1(t) in units of gamma * delta.
inline double normalized_relaxation_rate(const ModelParams& p, const BathParams& b, double t) {
    return neqb::relaxation_rate(p, detail::unit_coupling(b), t) / p.delta;
}

/// Xi_hat = (2 v / (gamma delta^2)) int G1 dt, independent of v and gamma.
/// Only defined at zero temperature. gamma = 0 is evaluated at unit coupling.
inline double xi_weight(const ModelParams& p, const BathParams& b) {
    p.validate();
    b.validate();
    if (b.temperature != 0.0) throw ConfigError("xi_weight: only defined at temperature 0");
    const BathParams bath = b.gamma == 0.0 ? detail::unit_coupling(b) : b;
    // int G1 dt over |eps| <= 60 omega_c, plus the tail out to 120 omega_c.
    const double reach = 60.0 * b.omega_c / p.sweep_speed;
    const double body = neqb::integrated_relaxation(p, bath, -reach, reach, 1e-10);
    const double tail = neqb::integrated_relaxation(p, bath, reach, 2.0 * reach, 1e-8) +
                        neqb::integrated_relaxation(p, bath, -2.0 * reach, -reach, 1e-8);
    return 2.0 * p.sweep_speed / (bath.gamma * p.delta * p.delta) * (body + tail);
}

struct WindowProfile {
    std::vector<double> t;
    std::vector<double> gamma1;       // units of gamma * delta
    std::vector<double> peak_times;   // refined local maxima, ascending
    std::vector<double> peak_gaps;    // E(t*) at each peak
    double half_width = 0.0;          // smallest tau with int_{|t|<tau} G1 >= 0.99 int G1
};

inline WindowProfile window_profile(const ModelParams& p, const BathParams& b, const std::vector<double>& t_grid) {
    p.validate();
    b.validate();
    WindowProfile w;
    w.t = t_grid;
    w.gamma1.reserve(t_grid.size());
    for (double t : t_grid) w.gamma1.push_back(normalized_relaxation_rate(p, b, t));

    auto negative_rate = [&](double t) { return -normalized_relaxation_rate(p, b, t); };
    for (std::size_t i = 1; i + 1 < t_grid.size(); ++i) {
        const double g = w.gamma1[i];
        if (g > 0.0 && g >= w.gamma1[i - 1] && g > w.gamma1[i + 1]) {
            const auto [t_star, neg] =
                boost::math::tools::brent_find_minima(negative_rate, t_grid[i - 1], t_grid[i + 1], 52);
            (void)neg;
            w.peak_times.push_back(t_star);
            w.peak_gaps.push_back(gap(p, t_star));
        }
    }

    // Effective window from the continuous rate, independent of the grid.
    const BathParams unit = detail::unit_coupling(b);
    const double reach = (120.0 * b.omega_c + 10.0 * p.delta) / p.sweep_speed;
    const double total = neqb::integrated_relaxation(p, unit, -reach, reach);
    if (total > 0.0) {
        double lo = 0.0;
        double hi = reach;
        for (int it = 0; it < 80 && hi - lo > 1e-9 * reach; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (neqb::integrated_relaxation(p, unit, -mid, mid) >= 0.99 * total) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        w.half_width = hi;
    }
    return w;
}

struct VMinResult {
    double v_min = 0.0;
    double probability = 0.0;
    std::vector<double> grid_values;
};

/// Locates the minimum of `probability(v)` over a bracketing grid: a grid
/// scan, then golden-section refinement in log v between the neighbours of
/// the lowest grid point, to relative tolerance `rel_tol` in v.
template <typename ProbabilityOfV>
VMinResult find_v_min(ProbabilityOfV&& probability, const std::vector<double>& v_grid, double rel_tol = 1e-2,
                      unsigned workers = 1) {
    if (v_grid.size() < 3) throw ConfigError("find_v_min: need at least three grid points");
    for (std::size_t i = 1; i < v_grid.size(); ++i) {
        if (!(v_grid[i] > v_grid[i - 1]) || !(v_grid[i - 1] > 0.0)) {
            throw ConfigError("find_v_min: v grid must be positive and strictly increasing");
        }
    }
    VMinResult out;
    out.grid_values.resize(v_grid.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < v_grid.size(); ++i) out.grid_values[i] = probability(v_grid[i]);
    } else {
        std::vector<std::future<double>> pending;
        std::size_t next = 0;
        std::vector<std::pair<std::size_t, std::future<double>>> running;
        while (next < v_grid.size() || !running.empty()) {
            while (next < v_grid.size() && running.size() < workers) {
                running.emplace_back(next, std::async(std::launch::async, [&, i = next] { return probability(v_grid[i]); }));
                ++next;
            }
            out.grid_values[running.front().first] = running.front().second.get();
            running.erase(running.begin());
        }
    }

    const auto it = std::min_element(out.grid_values.begin(), out.grid_values.end());
    const std::size_t i = static_cast<std::size_t>(it - out.grid_values.begin());
    if (i == 0 || i + 1 == v_grid.size() || !(out.grid_values[i] < out.grid_values[i - 1]) ||
        !(out.grid_values[i] < out.grid_values[i + 1])) {
        throw NoInteriorMinimum("find_v_min: no interior minimum in [" + std::to_string(v_grid.front()) + ", " +
                                std::to_string(v_grid.back()) + "]");
    }

    // Golden section on x = log v.
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = std::log(v_grid[i - 1]);
    double b = std::log(v_grid[i + 1]);
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = probability(std::exp(c));
    double fd = probability(std::exp(d));
    while (b - a > rel_tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = probability(std::exp(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = probability(std::exp(d));
        }
    }
    // Best evaluated point, grid point included.
    out.v_min = v_grid[i];
    out.probability = out.grid_values[i];
    if (fc < out.probability) {
        out.v_min = std::exp(c);
        out.probability = fc;
    }
    if (fd < out.probability) {
        out.v_min = std::exp(d);
        out.probability = fd;
    }
    return out;
}

/// NEQB P_LZ (or P_ES) as a function of sweep speed, t_max converged.
inline auto neqb_probability(ModelParams base, BathParams b, Initial initial,
                             neqb::ControllerOptions opt = {}) {
    return [=](double v) {
        ModelParams p = base;
        p.sweep_speed = v;
        const auto r = neqb::run_converged(p, b, initial, opt);
        if (!r.converged) throw IntegrationError("NEQB t_max did not converge at v = " + std::to_string(v));
        return r.probability;
    };
}

}  // namespace lzdiss::analysis
