#pragma once

// Driven two-state system, Ohmic / super-Ohmic bath spectrum and the
// closed-form coherent Landau-Zener reference.
//
// Units: hbar = k_B = 1. Energies are measured in units of the tunnel
// coupling delta, times in 1/delta, sweep speeds in delta^2.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "lzdiss/error.hpp"
#include "lzdiss/quadrature.hpp"

namespace lzdiss {

using Complex = std::complex<double>;
using Matrix2 = Eigen::Matrix2cd;

/// Two-state system parameters: H_S(t) = (delta/2) sx + (v t/2) sz,
/// coupled to the bath through (sz cos(theta) + sx sin(theta)) / 2.
struct ModelParams {
    double delta = 1.0;
    double sweep_speed = 1.0;
    double theta = 0.0;  // radians, in (-pi/2, pi/2]

    void validate() const {
        if (!(delta > 0.0)) throw ConfigError("delta must be > 0");
        if (!(sweep_speed > 0.0)) throw ConfigError("sweep_speed must be > 0");
        constexpr double half_pi = std::numbers::pi / 2;
        if (!(theta > -half_pi && theta <= half_pi + 1e-15)) {
            throw ConfigError("theta must lie in (-pi/2, pi/2]");
        }
    }
};

/// Bath spectrum G(w) = gamma delta^(1-s) / pi * w^s exp(-w/omega_c) at
/// temperature `temperature` (0 means beta = infinity).
struct BathParams {
    double s = 1.0;
    double gamma = 0.0;
    double omega_c = 5.0;
    double temperature = 0.0;

    void validate() const {
        if (!(s >= 1.0)) throw ConfigError("spectral exponent s must be >= 1");
        if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
        if (!(omega_c > 0.0)) throw ConfigError("omega_c must be > 0");
        if (!(temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
    }
};

/// 2x2 density matrix in the diabatic (sz) basis.
struct DensityMatrix {
    Matrix2 rho = Matrix2::Zero();

    Complex trace() const { return rho.trace(); }

    bool is_physical(double herm_tol = 1e-12, double trace_tol = 1e-10, double eig_tol = 1e-8) const {
        if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > herm_tol) return false;
        if (std::abs(rho.trace() - 1.0) > trace_tol) return false;
        const Eigen::Matrix2cd h = 0.5 * (rho + rho.adjoint());
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(h, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff() >= -eig_tol;
    }
};

namespace pauli {
inline Matrix2 x() { Matrix2 m; m << 0, 1, 1, 0; return m; }
inline Matrix2 y() { Matrix2 m; m << 0, Complex(0, -1), Complex(0, 1), 0; return m; }
inline Matrix2 z() { Matrix2 m; m << 1, 0, 0, -1; return m; }
}  // namespace pauli

inline double bias(const ModelParams& p, double t) { return p.sweep_speed * t; }

inline Matrix2 hamiltonian(const ModelParams& p, double t) {
    return 0.5 * p.delta * pauli::x() + 0.5 * bias(p, t) * pauli::z();
}

/// Instantaneous level splitting E(t) = sqrt(delta^2 + (v t)^2).
inline double gap(const ModelParams& p, double t) { return std::hypot(p.delta, bias(p, t)); }

/// phi(t) = arctan(v t / delta).
inline double mixing_angle(const ModelParams& p, double t) { return std::atan2(bias(p, t), p.delta); }

inline double cos_phi(const ModelParams& p, double t) { return p.delta / gap(p, t); }
inline double sin_phi(const ModelParams& p, double t) { return bias(p, t) / gap(p, t); }

/// phi'(t) = v delta / E(t)^2.
inline double mixing_angle_rate(const ModelParams& p, double t) {
    const double e = gap(p, t);
    return p.sweep_speed * p.delta / (e * e);
}

inline double spectral_density(const BathParams& b, double delta, double omega) {
    if (omega < 0.0) throw std::domain_error("spectral_density: omega must be >= 0");
    if (omega == 0.0) return 0.0;
    const double power = (b.s == 1.0) ? omega : std::pow(omega, b.s);
    const double scale = (b.s == 1.0) ? 1.0 : std::pow(delta, 1.0 - b.s);
    return b.gamma * scale / std::numbers::pi * power * std::exp(-omega / b.omega_c);
}

/// coth(w / 2T), with the T = 0 branch returning 1.
inline double thermal_factor(const BathParams& b, double omega) {
    if (b.temperature == 0.0) return 1.0;
    const double x = omega / (2.0 * b.temperature);
    if (x > 20.0) return 1.0 + 2.0 * std::exp(-2.0 * x);
    return 1.0 / std::tanh(x);
}

namespace detail {

inline constexpr double kCutoffMultiple = 50.0;
inline constexpr double kTailBound = 1e-12;

/// int_0^inf dw G(w) [coth(w/2T) even(w) - i odd(w)], where `weights(w)`
/// returns {even, odd}. `time_scale` is the largest time the weights
/// oscillate with and sets the panel count.
template <typename Weights>
Complex spectral_transform(const BathParams& b, double delta, Weights&& weights, double time_scale,
                           double rel_tol, const char* context) {
    if (b.gamma == 0.0) return {0.0, 0.0};
    double upper = kCutoffMultiple * b.omega_c;
    // Extend the horizon until the discarded spectral weight is negligible.
    for (int grow = 0;; ++grow) {
        auto tail_integrand = [&](double w) { return spectral_density(b, delta, w) * thermal_factor(b, w); };
        const double tail = quad::integrate(tail_integrand, upper, 2.0 * upper, {.rel_tol = 1e-6}, context).value;
        if (tail < kTailBound) break;
        if (grow == 4) throw QuadratureError(std::string(context) + ": spectral tail does not decay", tail);
        upper *= 2.0;
    }
    const double cycles = upper * std::abs(time_scale) / (2.0 * std::numbers::pi);
    const int panels = static_cast<int>(std::clamp(std::ceil(2.0 * cycles), 4.0, 40000.0));
    auto integrand = [&](double w) -> Complex {
        const auto [even, odd] = weights(w);
        const double g = spectral_density(b, delta, w);
        return {g * thermal_factor(b, w) * even, -g * odd};
    };
    return quad::integrate(integrand, 0.0, upper, {.rel_tol = rel_tol, .panels = panels}, context).value;
}

}  // namespace detail

/// C(t) = <B(t) B(0)> = int_0^inf dw G(w) [coth(w/2T) cos(w t) - i sin(w t)].
inline Complex bath_correlation(const BathParams& b, double delta, double t, double rel_tol = 1e-8) {
    auto weights = [t](double w) { return std::pair{std::cos(w * t), std::sin(w * t)}; };
    return detail::spectral_transform(b, delta, weights, t, rel_tol, "bath_correlation");
}

/// Coherent Landau-Zener probability 1 - exp(-pi delta^2 / 2v).
inline double coherent_probability(const ModelParams& p) {
    return -std::expm1(-std::numbers::pi * p.delta * p.delta / (2.0 * p.sweep_speed));
}

}  // namespace lzdiss
