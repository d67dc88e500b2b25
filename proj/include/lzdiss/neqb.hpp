#pragma once

// Non-equilibrium Bloch equations in the adiabatic frame.
//
// With H_S(t) = E(t) tau_x / 2 and rho_S = (1 - r . tau) / 2 the Bloch
// vector obeys
//   d r_x/dt = +phi' r_z - G1 (r_x - r_x^st)
//   d r_y/dt = -G2 r_y - E r_z
//   d r_z/dt = +E r_y - G2 r_z - phi' r_x
// with drive dependent rates G1, G2 = G1/2 + Gd. r = (1,0,0) is the
// instantaneous ground state.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "lzdiss/error.hpp"
#include "lzdiss/model.hpp"
#include "lzdiss/quadrature.hpp"

namespace lzdiss {

enum class Initial { ground, excited };

inline const char* to_string(Initial i) { return i == Initial::ground ? "ground" : "excited"; }

namespace neqb {

struct Amplitudes {
    double a_theta = 0.0;  // weight of the coupling on adiabatic transitions
    double b_theta = 0.0;  // weight on the adiabatic splitting (pure dephasing)
};

struct RateSet {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double gamma_d = 0.0;
    double a_theta = 0.0;
    double b_theta = 0.0;
    double r_x_st = 1.0;
};

struct BlochState {
    double r_x = 1.0;
    double r_y = 0.0;
    double r_z = 0.0;
    double t = 0.0;

    double norm() const { return std::sqrt(r_x * r_x + r_y * r_y + r_z * r_z); }
};

inline Amplitudes amplitudes(const ModelParams& p, double t) {
    const double u = cos_phi(p, t);
    const double w = sin_phi(p, t);
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    return {u * c - w * s, w * c + u * s};
}

/// tanh(E / 2T); exactly 1 at T = 0.
inline double thermal_polarization(const BathParams& b, double energy) {
    if (b.temperature == 0.0) return 1.0;
    return std::tanh(energy / (2.0 * b.temperature));
}

inline double relaxation_rate(const ModelParams& p, const BathParams& b, double t) {
    const double e = gap(p, t);
    const double a = amplitudes(p, t).a_theta;
    return a * a * (std::numbers::pi / 2) * spectral_density(b, p.delta, e) * thermal_factor(b, e);
}

/// Markovian pure dephasing: B^2 gamma T for an Ohmic bath, zero for s > 1.
inline double dephasing_rate(const ModelParams& p, const BathParams& b, double t) {
    if (b.s != 1.0) return 0.0;
    const double bt = amplitudes(p, t).b_theta;
    return bt * bt * b.gamma * b.temperature;
}

inline RateSet rates(const ModelParams& p, const BathParams& b, double t) {
    const Amplitudes amp = amplitudes(p, t);
    const double e = gap(p, t);
    RateSet r;
    r.a_theta = amp.a_theta;
    r.b_theta = amp.b_theta;
    r.gamma1 = amp.a_theta * amp.a_theta * (std::numbers::pi / 2) * spectral_density(b, p.delta, e) *
               thermal_factor(b, e);
    r.gamma_d = (b.s == 1.0) ? amp.b_theta * amp.b_theta * b.gamma * b.temperature : 0.0;
    r.gamma2 = 0.5 * r.gamma1 + r.gamma_d;
    r.r_x_st = thermal_polarization(b, e);
    return r;
}

using Vec3 = std::array<double, 3>;

inline Vec3 bloch_rhs(const ModelParams& p, const BathParams& b, double t, const Vec3& r) {
    const RateSet k = rates(p, b, t);
    const double e = gap(p, t);
    const double dphi = mixing_angle_rate(p, t);
    return {dphi * r[2] - k.gamma1 * (r[0] - k.r_x_st),
            -k.gamma2 * r[1] - e * r[2],
            e * r[1] - k.gamma2 * r[2] - dphi * r[0]};
}

inline BlochState bloch_rhs(const ModelParams& p, const BathParams& b, const BlochState& s) {
    const Vec3 d = bloch_rhs(p, b, s.t, Vec3{s.r_x, s.r_y, s.r_z});
    return {d[0], d[1], d[2], s.t};
}

/// int_{t0}^{t1} G1(t) dt, evaluated over the bias eps = v t.
inline double integrated_relaxation(const ModelParams& p, const BathParams& b, double t0, double t1,
                                    double rel_tol = 1e-10) {
    if (b.gamma == 0.0 || t0 == t1) return 0.0;
    auto integrand = [&](double eps) { return relaxation_rate(p, b, eps / p.sweep_speed); };
    const double e0 = bias(p, t0);
    const double e1 = bias(p, t1);
    const int panels = static_cast<int>(std::clamp(std::ceil(std::abs(e1 - e0) / b.omega_c), 1.0, 4000.0));
    return quad::integrate(integrand, e0, e1, {.rel_tol = rel_tol, .abs_tol = 1e-300, .panels = panels},
                           "integrated_relaxation")
               .value /
           p.sweep_speed;
}

/// Relaxation weight outside the protocol window [-t_max/2, t_max/2].
inline double residual_relaxation(const ModelParams& p, const BathParams& b, double t_max) {
    if (b.gamma == 0.0) return 0.0;
    const double half = 0.5 * t_max;
    // G1 decays at least like exp(-E/omega_c); 80 cut-off energies past the
    // window edge leave nothing measurable.
    const double reach = (80.0 * b.omega_c + 10.0 * p.delta) / p.sweep_speed;
    return integrated_relaxation(p, b, half, half + reach, 1e-8) +
           integrated_relaxation(p, b, -half - reach, -half, 1e-8);
}

struct ProtocolOptions {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    double record_interval = 0.0;  // > 0: sample the trajectory on this time grid
};

struct ProtocolResult {
    double probability = 0.0;
    double t_max = 0.0;
    double max_norm = 0.0;
    std::size_t steps = 0;
    std::vector<BlochState> trajectory;
};

/// Integrates the Bloch equations from -t_max/2 to +t_max/2 starting in the
/// instantaneous ground (r_x = +1) or excited (r_x = -1) state. Returns the
/// probability of ending in the same adiabatic state, P_LZ or P_ES.
inline ProtocolResult run_protocol(const ModelParams& p, const BathParams& b, Initial initial, double t_max,
                                   const ProtocolOptions& opt = {}) {
    namespace ode = boost::numeric::odeint;
    if (!(t_max > 0.0)) throw ConfigError("run_protocol: t_max must be > 0");
    p.validate();
    b.validate();

    Vec3 x{initial == Initial::ground ? 1.0 : -1.0, 0.0, 0.0};
    double t = -0.5 * t_max;
    const double t_end = 0.5 * t_max;

    auto system = [&](const Vec3& r, Vec3& drdt, double tt) { drdt = bloch_rhs(p, b, tt, r); };
    auto stepper = ode::make_controlled(opt.abs_tol, opt.rel_tol, ode::runge_kutta_dopri5<Vec3>());

    ProtocolResult out;
    out.t_max = t_max;
    out.max_norm = 1.0;
    double next_record = t;
    auto record = [&](double tt) {
        if (opt.record_interval <= 0.0) return;
        while (next_record <= tt + 1e-12) {
            // Sampling uses the accepted step endpoint closest from above; the
            // interval is expected to be coarse compared with the step size.
            out.trajectory.push_back({x[0], x[1], x[2], tt});
            next_record += opt.record_interval;
        }
    };
    record(t);

    double dt = 1e-3;
    while (t < t_end) {
        if (t + dt > t_end) dt = t_end - t;
        const double t_before = t;
        if (stepper.try_step(system, x, t, dt) == ode::fail) {
            if (dt < 1e-13 * std::max(1.0, std::abs(t))) {
                throw IntegrationError("run_protocol: step size underflow at t = " + std::to_string(t));
            }
            continue;
        }
        ++out.steps;
        const double n = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
        out.max_norm = std::max(out.max_norm, n);
        if (!std::isfinite(n)) throw IntegrationError("run_protocol: non-finite state at t = " + std::to_string(t));
        if (t <= t_before) throw IntegrationError("run_protocol: no progress at t = " + std::to_string(t));
        record(t);
    }
    out.probability = initial == Initial::ground ? 0.5 * (1.0 + x[0]) : 0.5 * (1.0 - x[0]);
    return out;
}

struct ControllerOptions {
    double t_max_start = 50.0;
    double prob_tol = 1e-4;          // change allowed when doubling t_max
    double residual_tol = 1e-6;      // int G1 dt outside the window
    double t_max_limit = 51200.0;
    ProtocolOptions protocol{};
};

struct ControllerResult {
    double probability = 0.0;
    double t_max = 0.0;
    bool converged = false;
    std::vector<std::pair<double, double>> history;  // (t_max, probability)
};

/// Doubles t_max from t_max_start until the residual relaxation weight is
/// below residual_tol and a further doubling changes the probability by less
/// than prob_tol. Reports the probability at the accepted t_max.
inline ControllerResult run_converged(const ModelParams& p, const BathParams& b, Initial initial,
                                     const ControllerOptions& opt = {}) {
    ControllerResult out;
    double t_max = opt.t_max_start;
    while (residual_relaxation(p, b, t_max) >= opt.residual_tol) {
        if (2.0 * t_max > opt.t_max_limit) return out;
        t_max *= 2.0;
    }
    double prob = run_protocol(p, b, initial, t_max, opt.protocol).probability;
    out.history.emplace_back(t_max, prob);
    while (2.0 * t_max <= opt.t_max_limit) {
        const double next = run_protocol(p, b, initial, 2.0 * t_max, opt.protocol).probability;
        out.history.emplace_back(2.0 * t_max, next);
        if (std::abs(next - prob) < opt.prob_tol) {
            out.probability = prob;
            out.t_max = t_max;
            out.converged = true;
            return out;
        }
        t_max *= 2.0;
        prob = next;
    }
    out.probability = prob;
    out.t_max = t_max;
    return out;
}

}  // namespace neqb
}  // namespace lzdiss
