#pragma once

// Quasi-adiabatic path integral (QUAPI) for the driven spin-boson model.
//
// The reduced density is propagated on a grid t_k = t0 + k dt, k = 0..N.
// Each grid point carries a forward/backward pair of eigenvalues (+-1/2) of
// the coupling operator O = (sz cos(theta) + sx sin(theta)) / 2. Between grid
// points the system evolves with the exact 2x2 propagator of H_S at the slice
// midpoint; the bath enters through the discretised Feynman-Vernon influence
// functional
//
//   F = exp( - sum_{k >= k'} (s+_k - s-_k) (eta_kk' s+_k' - conj(eta_kk') s-_k') ),
//
// where eta_kk' is the double integral of C(t' - t'') over the time intervals
// attributed to points k and k'. Point 0 owns [t0, t0 + dt/2], the final
// point owns [t_N - dt/2, t_N] and every other point [t_k - dt/2, t_k + dt/2].
// Pairs further apart than k_max points are dropped, which turns the path sum
// into an iterative contraction of a rank-k_max tensor (4^k_max entries).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lzdiss/error.hpp"
#include "lzdiss/model.hpp"
#include "lzdiss/neqb.hpp"

namespace lzdiss::quapi {

inline constexpr int kMaxMemory = 12;

struct ConvergenceParams {
    double dt = 0.1;
    int k_max = 1;
    double t_max = 50.0;
    double tol_p = 1e-3;

    /// Number of Trotter slices t_max / dt.
    int slices() const { return static_cast<int>(std::llround(t_max / dt)); }

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
        if (k_max < 1 || k_max > kMaxMemory) {
            throw ConfigError("k_max must lie in [1, " + std::to_string(kMaxMemory) + "]");
        }
        if (!(t_max > 0.0)) throw ConfigError("t_max must be > 0");
        if (!(tol_p > 0.0)) throw ConfigError("tol_p must be > 0");
        const double ratio = t_max / dt;
        const long long n = std::llround(ratio);
        if (std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio || n < 2 || n % 2 != 0) {
            throw ConfigError("t_max / dt must be an even integer >= 2");
        }
    }
};

// ---------------------------------------------------------------------------
// Influence kernel

namespace detail {

inline double sinc(double x) {
    if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

/// int_0^w e^{i w' t} dt' type factor for an interval [a, b]:
/// (b - a) exp(i w (a + b)/2) sinc(w (b - a)/2).
inline Complex interval_phase(double omega, double a, double b) {
    const double width = b - a;
    return width * sinc(0.5 * omega * width) * std::polar(1.0, 0.5 * omega * (a + b));
}

}  // namespace detail

/// int_{a}^{b} dt' int_{c}^{d} dt'' C(t' - t''), via the spectral
/// representation of C so no second antiderivatives have to cancel.
inline Complex rectangle_coefficient(const BathParams& b, double delta, double a, double bb, double c, double d,
                                     double rel_tol = 1e-10) {
    auto weights = [&](double w) {
        const Complex psi = detail::interval_phase(w, a, bb) * std::conj(detail::interval_phase(w, c, d));
        return std::pair{psi.real(), psi.imag()};
    };
    const double reach = std::max(std::abs(bb - c), std::abs(a - d));
    return lzdiss::detail::spectral_transform(b, delta, weights, reach, rel_tol, "influence coefficient");
}

/// int_0^w dt' int_0^{t'} dt'' C(t' - t'').
inline Complex triangle_coefficient(const BathParams& b, double delta, double w, double rel_tol = 1e-10) {
    auto weights = [w](double omega) {
        const double x = omega * w;
        const double s = detail::sinc(0.5 * x);
        const double even = 0.5 * w * w * s * s;  // (1 - cos x) / omega^2
        double odd_ratio;                          // (x - sin x) / x^2
        if (std::abs(x) < 1e-2) {
            const double x2 = x * x;
            odd_ratio = x / 6.0 - x * x2 / 120.0 + x * x2 * x2 / 5040.0;
        } else {
            odd_ratio = (x - std::sin(x)) / (x * x);
        }
        return std::pair{even, w * w * odd_ratio};
    };
    return lzdiss::detail::spectral_transform(b, delta, weights, w, rel_tol, "influence coefficient");
}

/// Discretised influence coefficients. Index 0 of `interior`, `start` and
/// `end` holds the self-interaction of a point (full or half interval);
/// index dk >= 1 holds the coupling between a later and an earlier point
/// dk slices apart:
///   interior:  both points interior
///   start:     earlier point is t0
///   end:       later point is the final point
///   end_start: later point final, earlier point t0
struct InfluenceKernel {
    double dt = 0.0;
    int k_max = 0;
    BathParams bath{};
    double delta = 1.0;
    std::vector<Complex> interior;
    std::vector<Complex> start;
    std::vector<Complex> end;
    std::vector<Complex> end_start;

    Complex coefficient(int later, int earlier, int last) const {
        const int dk = later - earlier;
        const bool first = earlier == 0;
        const bool final = later == last;
        if (dk == 0) return (first || final) ? start[0] : interior[0];
        if (first && final) return end_start[dk];
        if (first) return start[dk];
        if (final) return end[dk];
        return interior[dk];
    }
};

inline InfluenceKernel build_kernel(const ModelParams& p, const BathParams& b, const ConvergenceParams& cp) {
    p.validate();
    b.validate();
    if (!(cp.dt > 0.0)) throw ConfigError("dt must be > 0");
    if (cp.k_max < 1 || cp.k_max > kMaxMemory) throw ConfigError("k_max out of range");
    InfluenceKernel k;
    k.dt = cp.dt;
    k.k_max = cp.k_max;
    k.bath = b;
    k.delta = p.delta;
    const double h = cp.dt;
    const std::size_t n = static_cast<std::size_t>(cp.k_max) + 1;
    k.interior.resize(n);
    k.start.resize(n);
    k.end.resize(n);
    k.end_start.resize(n);
    try {
        k.interior[0] = triangle_coefficient(b, p.delta, h);
        k.start[0] = triangle_coefficient(b, p.delta, 0.5 * h);
        k.end[0] = k.start[0];
        k.end_start[0] = k.start[0];
        for (int dk = 1; dk <= cp.k_max; ++dk) {
            const double c = dk * h;
            k.interior[dk] = rectangle_coefficient(b, p.delta, c - 0.5 * h, c + 0.5 * h, -0.5 * h, 0.5 * h);
            k.start[dk] = rectangle_coefficient(b, p.delta, c - 0.5 * h, c + 0.5 * h, 0.0, 0.5 * h);
            k.end[dk] = rectangle_coefficient(b, p.delta, c - 0.5 * h, c, -0.5 * h, 0.5 * h);
            k.end_start[dk] = rectangle_coefficient(b, p.delta, c - 0.5 * h, c, 0.0, 0.5 * h);
        }
    } catch (const QuadratureError& e) {
        throw QuadratureError(std::string("build_kernel(dt=") + std::to_string(cp.dt) + "): " + e.what(),
                              e.achieved_error());
    }
    return k;
}

// ---------------------------------------------------------------------------
// System propagator

using Superop = Eigen::Matrix4cd;

/// Eigenvectors of the coupling operator in the diabatic basis; column 0
/// belongs to eigenvalue +1/2, column 1 to -1/2.
inline Matrix2 coupling_basis(double theta) {
    const double c = std::cos(0.5 * theta);
    const double s = std::sin(0.5 * theta);
    Matrix2 v;
    v << c, -s, s, c;
    return v;
}

/// exp(-i H_S(t_k + dt/2) dt) in the diabatic basis.
inline Matrix2 short_time_unitary(const ModelParams& p, double t_k, double dt) {
    const double t_mid = t_k + 0.5 * dt;
    const double e = gap(p, t_mid);
    const double phase = 0.5 * e * dt;
    const Matrix2 n = (p.delta * pauli::x() + bias(p, t_mid) * pauli::z()) / e;
    return std::cos(phase) * Matrix2::Identity() - Complex(0.0, std::sin(phase)) * n;
}

/// Forward (x) backward factor of the slice propagator in the coupling
/// eigenbasis: S(2a'+b', 2a+b) = U(a',a) conj(U(b',b)).
inline Superop short_time_propagator(const ModelParams& p, double t_k, double dt) {
    const Matrix2 v = coupling_basis(p.theta);
    const Matrix2 u = v.adjoint() * short_time_unitary(p, t_k, dt) * v;
    Superop s;
    for (int a1 = 0; a1 < 2; ++a1)
        for (int b1 = 0; b1 < 2; ++b1)
            for (int a0 = 0; a0 < 2; ++a0)
                for (int b0 = 0; b0 < 2; ++b0) s(2 * a1 + b1, 2 * a0 + b0) = u(a1, a0) * std::conj(u(b1, b0));
    return s;
}

/// Instantaneous adiabatic eigenvector of H_S(t) in the diabatic basis.
inline Eigen::Vector2cd adiabatic_state(const ModelParams& p, double t, Initial which) {
    Eigen::SelfAdjointEigenSolver<Matrix2> es(hamiltonian(p, t));
    return es.eigenvectors().col(which == Initial::ground ? 0 : 1);
}

// ---------------------------------------------------------------------------
// Propagation

inline constexpr double kPathValue[2] = {0.5, -0.5};

/// exp(-(s+ - s-)(eta s+' - conj(eta) s-')) for later digit d1 and earlier
/// digit d0, digits encoding (forward, backward) as 2a + b.
using PairTable = std::array<std::array<Complex, 4>, 4>;

inline PairTable pair_table(Complex eta) {
    PairTable t{};
    for (int d1 = 0; d1 < 4; ++d1) {
        const double diff = kPathValue[d1 >> 1] - kPathValue[d1 & 1];
        for (int d0 = 0; d0 < 4; ++d0) {
            const Complex phase = eta * kPathValue[d0 >> 1] - std::conj(eta) * kPathValue[d0 & 1];
            t[d1][d0] = std::exp(-diff * phase);
        }
    }
    return t;
}

inline std::array<Complex, 4> diagonal_table(Complex eta) {
    const PairTable t = pair_table(eta);
    return {t[0][0], t[1][1], t[2][2], t[3][3]};
}

struct SlicePoint {
    double t = 0.0;
    DensityMatrix rho;          // diabatic basis
    double p_ground = 0.0;      // population of the instantaneous ground state
    double p_excited = 0.0;
    double trace = 0.0;
};

struct PropagateOptions {
    int record_every = 0;  // > 0: read out the density every this many slices
    std::size_t memory_budget_bytes = std::size_t{1} << 30;
};

struct PropagateResult {
    double probability = 0.0;
    DensityMatrix final_rho;
    std::vector<SlicePoint> trajectory;
};

inline std::size_t tensor_bytes(int k_max) {
    return 3 * (std::size_t{1} << (2 * k_max)) * sizeof(Complex);
}

namespace detail {

/// Product over held points of the pair factors with a new point of digit
/// `d_new`; held points ordered oldest (most significant digit) to newest.
inline void influence_product(const std::vector<const PairTable*>& tables, int d_new, std::vector<Complex>& out) {
    out.assign(1, Complex(1.0, 0.0));
    for (const PairTable* t : tables) {
        const std::size_t n = out.size();
        out.resize(4 * n);
        for (std::size_t i = n; i-- > 0;) {
            const Complex v = out[i];
            for (int d = 0; d < 4; ++d) out[4 * i + d] = v * (*t)[d_new][d];
        }
    }
}

inline SlicePoint make_slice(const ModelParams& p, double t, const Matrix2& v, const std::array<Complex, 4>& rho_o) {
    Matrix2 ro;
    ro << rho_o[0], rho_o[1], rho_o[2], rho_o[3];
    SlicePoint sp;
    sp.t = t;
    sp.rho.rho = v * ro * v.adjoint();
    const Eigen::Vector2cd g = adiabatic_state(p, t, Initial::ground);
    const Eigen::Vector2cd e = adiabatic_state(p, t, Initial::excited);
    sp.p_ground = std::real(g.dot(sp.rho.rho * g));
    sp.p_excited = std::real(e.dot(sp.rho.rho * e));
    sp.trace = std::real(sp.rho.trace());
    return sp;
}

}  // namespace detail

/// Iterative tensor propagation from -t_max/2 to +t_max/2 with a prebuilt
/// kernel. The kernel's dt must match cp.dt and its k_max must cover cp.k_max.
inline PropagateResult propagate(const ModelParams& p, const InfluenceKernel& kernel, const ConvergenceParams& cp,
                                 Initial initial, const PropagateOptions& opt = {}) {
    cp.validate();
    if (std::abs(kernel.dt - cp.dt) > 1e-14 * cp.dt || kernel.k_max < cp.k_max) {
        throw ConfigError("propagate: kernel does not match convergence parameters");
    }
    const int n_slices = cp.slices();
    const int memory = std::min(cp.k_max, n_slices);
    if (tensor_bytes(memory) > opt.memory_budget_bytes) {
        throw BudgetError("propagate: memory tensor for k_max=" + std::to_string(memory) + " needs " +
                          std::to_string(tensor_bytes(memory)) + " bytes, budget " +
                          std::to_string(opt.memory_budget_bytes));
    }
    const double t0 = -0.5 * cp.t_max;
    const double dt = cp.dt;
    const Matrix2 v = coupling_basis(p.theta);

    // Pair tables indexed by kind, cached for the whole run.
    std::vector<PairTable> interior_t, start_t, end_t, end_start_t;
    for (int dk = 0; dk <= memory; ++dk) {
        interior_t.push_back(pair_table(kernel.interior[dk]));
        start_t.push_back(pair_table(kernel.start[dk]));
        end_t.push_back(pair_table(kernel.end[dk]));
        end_start_t.push_back(pair_table(kernel.end_start[dk]));
    }
    auto table_for = [&](int later, int earlier, bool final) -> const PairTable* {
        const int dk = later - earlier;
        if (earlier == 0) return final ? &end_start_t[dk] : &start_t[dk];
        return final ? &end_t[dk] : &interior_t[dk];
    };
    const auto diag_interior = diagonal_table(kernel.interior[0]);
    const auto diag_half = diagonal_table(kernel.start[0]);

    // Initial point: instantaneous eigenstate, expressed in the coupling basis.
    const Eigen::Vector2cd psi = adiabatic_state(p, t0, initial);
    const Matrix2 rho0 = v.adjoint() * (psi * psi.adjoint()) * v;
    std::vector<Complex> a(4);
    for (int d = 0; d < 4; ++d) a[d] = rho0(d >> 1, d & 1) * diag_half[d];
    int held = 1;  // points n-held+1 .. n

    PropagateResult out;
    if (opt.record_every > 0) {
        out.trajectory.push_back(detail::make_slice(p, t0, v, {rho0(0, 0), rho0(0, 1), rho0(1, 0), rho0(1, 1)}));
    }

    std::vector<Complex> next, f_int, f_end;
    std::array<std::vector<Complex>, 4> cached;  // stationary influence products
    bool cache_valid = false;

    for (int n = 0; n < n_slices; ++n) {
        const int m = n + 1;
        const bool final = m == n_slices;
        const bool want_readout = final || (opt.record_every > 0 && m % opt.record_every == 0);
        const Superop s = short_time_propagator(p, t0 + n * dt, dt);
        const bool truncate = held == memory;
        const int oldest = n - held + 1;
        // Points whose factors are carried by the product vectors.
        const int first_kept = truncate ? oldest + 1 : oldest;
        const std::size_t kept = static_cast<std::size_t>(n - first_kept + 1);
        const std::size_t kept_size = std::size_t{1} << (2 * kept);
        const bool stationary = truncate && oldest > 0 && !final;

        std::vector<const PairTable*> int_tables, end_tables;
        for (int j = first_kept; j <= n; ++j) {
            int_tables.push_back(table_for(m, j, false));
            end_tables.push_back(table_for(m, j, true));
        }
        const PairTable* old_int = truncate ? table_for(m, oldest, false) : nullptr;
        const PairTable* old_end = truncate ? table_for(m, oldest, true) : nullptr;

        const bool need_next = !final;
        if (need_next) next.assign(truncate ? 4 * kept_size : 4 * (std::size_t{1} << (2 * held)), Complex{});
        std::array<Complex, 4> readout{};

        for (int d1 = 0; d1 < 4; ++d1) {
            const std::vector<Complex>* fi = nullptr;
            if (need_next) {
                if (stationary) {
                    if (!cache_valid) detail::influence_product(int_tables, d1, cached[d1]);
                    fi = &cached[d1];
                } else {
                    detail::influence_product(int_tables, d1, f_int);
                    fi = &f_int;
                }
            }
            if (want_readout) detail::influence_product(end_tables, d1, f_end);
            const Complex diag_i = diag_interior[d1];
            const Complex diag_e = diag_half[d1];

            for (std::size_t j = 0; j < kept_size; ++j) {
                // Amplitude summed over the dropped oldest point (if any).
                Complex acc_i{}, acc_e{};
                if (truncate) {
                    for (int d0 = 0; d0 < 4; ++d0) {
                        Complex val = a[static_cast<std::size_t>(d0) * kept_size + j];
                        if (kept == 0) val *= s(d1, d0);  // oldest is also the newest
                        if (need_next) acc_i += (*old_int)[d1][d0] * val;
                        if (want_readout) acc_e += (*old_end)[d1][d0] * val;
                    }
                } else {
                    acc_i = acc_e = a[j];
                }
                const Complex prop = (kept > 0) ? s(d1, static_cast<int>(j & 3)) : Complex(1.0, 0.0);
                if (need_next) next[4 * j + d1] = acc_i * (*fi)[j] * prop * diag_i;
                if (want_readout) readout[d1] += acc_e * f_end[j] * prop * diag_e;
            }
        }
        if (stationary) cache_valid = true;

        if (want_readout) {
            for (const Complex& r : readout) {
                if (!std::isfinite(r.real()) || !std::isfinite(r.imag())) {
                    throw IntegrationError("propagate: non-finite density at slice " + std::to_string(m));
                }
            }
            SlicePoint sp = detail::make_slice(p, t0 + m * dt, v, readout);
            if (final) {
                out.final_rho = sp.rho;
                out.probability = initial == Initial::ground ? sp.p_ground : sp.p_excited;
            }
            if (opt.record_every > 0) out.trajectory.push_back(sp);
        }
        if (need_next) {
            a.swap(next);
            if (!truncate) ++held;
            if ((m & 63) == 0) {
                const Complex probe = a[0] + a[a.size() - 1];
                if (!std::isfinite(probe.real()) || !std::isfinite(probe.imag())) {
                    throw IntegrationError("propagate: non-finite tensor entries at slice " + std::to_string(m));
                }
            }
        }
    }
    return out;
}

inline PropagateResult propagate(const ModelParams& p, const BathParams& b, const ConvergenceParams& cp,
                                 Initial initial, const PropagateOptions& opt = {}) {
    cp.validate();
    if (tensor_bytes(std::min(cp.k_max, cp.slices())) > opt.memory_budget_bytes) {
        throw BudgetError("propagate: memory tensor exceeds budget for k_max=" + std::to_string(cp.k_max));
    }
    return propagate(p, build_kernel(p, b, cp), cp, initial, opt);
}

// ---------------------------------------------------------------------------
// Convergence scan

struct ScanRow {
    std::string stage;  // "t_max", "k_max" or "dt"
    double t_max = 0.0;
    double dt = 0.0;
    int k_max = 0;
    double probability = 0.0;
    double change = 0.0;  // |P - P_previous| within the stage, 0 for the first entry
};

struct ConvergeOptions {
    double dt_start = 0.2;
    int max_dt_halvings = 4;
    int k_max_cap = 10;
    double t_max_start = 50.0;
    double t_max_limit = 6400.0;
    double residual_tol = 1e-6;
    std::optional<double> t_max_fixed;  // skip the t_max stage
    std::size_t memory_budget_bytes = std::size_t{1} << 30;
};

struct ConvergeResult {
    double probability = 0.0;
    ConvergenceParams accepted;
    bool converged = false;
    std::string failure;  // reason when not converged
    std::vector<ScanRow> report;
};

/// Nested convergence scan: choose t_max by doubling, then for each dt of a
/// halving schedule raise k_max until the probability moves by less than
/// tol_p/2, and halve dt until the accepted probabilities agree to tol_p/2.
inline ConvergeResult converge(const ModelParams& p, const BathParams& b, Initial initial, double tol_p,
                               const ConvergeOptions& opt = {}) {
    p.validate();
    b.validate();
    if (!(tol_p > 0.0)) throw ConfigError("converge: tol_p must be > 0");
    const double half_tol = 0.5 * tol_p;
    ConvergeResult out;

    auto run = [&](double t_max, double dt, int k) {
        ConvergenceParams cp{dt, k, t_max, tol_p};
        return propagate(p, b, cp, initial, {.memory_budget_bytes = opt.memory_budget_bytes}).probability;
    };

    // t_max stage at the coarsest resolution.
    double t_max = opt.t_max_fixed.value_or(opt.t_max_start);
    if (!opt.t_max_fixed) {
        while (neqb::residual_relaxation(p, b, t_max) >= opt.residual_tol && 2.0 * t_max <= opt.t_max_limit) {
            t_max *= 2.0;
        }
        double prev = run(t_max, opt.dt_start, 1);
        out.report.push_back({"t_max", t_max, opt.dt_start, 1, prev, 0.0});
        for (;;) {
            if (2.0 * t_max > opt.t_max_limit) {
                out.failure = "t_max limit reached";
                out.probability = prev;
                out.accepted = {opt.dt_start, 1, t_max, tol_p};
                return out;
            }
            const double cur = run(2.0 * t_max, opt.dt_start, 1);
            const double change = std::abs(cur - prev);
            out.report.push_back({"t_max", 2.0 * t_max, opt.dt_start, 1, cur, change});
            if (change < half_tol) break;
            t_max *= 2.0;
            prev = cur;
        }
    }

    double dt = opt.dt_start;
    int k = 1;
    std::optional<double> previous_dt_value;
    for (int halving = 0; halving <= opt.max_dt_halvings; ++halving, dt *= 0.5) {
        // Halving dt at fixed k_max would halve the memory window; start the
        // finer scan from the previously accepted window instead.
        if (halving > 0) k = std::min(2 * k, opt.k_max_cap);
        // Without coupling there is no memory to resolve.
        if (b.gamma == 0.0) k = 1;
        double pk = run(t_max, dt, k);
        out.report.push_back({"k_max", t_max, dt, k, pk, 0.0});
        while (b.gamma != 0.0) {
            if (k + 1 > opt.k_max_cap) {
                out.failure = "k_max cap reached at dt=" + std::to_string(dt);
                out.probability = pk;
                out.accepted = {dt, k, t_max, tol_p};
                return out;
            }
            const double pk1 = run(t_max, dt, k + 1);
            const double change = std::abs(pk1 - pk);
            out.report.push_back({"k_max", t_max, dt, k + 1, pk1, change});
            ++k;
            pk = pk1;
            if (change < half_tol) break;
        }
        if (previous_dt_value) {
            const double change = std::abs(pk - *previous_dt_value);
            out.report.push_back({"dt", t_max, dt, k, pk, change});
            if (change < half_tol) {
                out.probability = pk;
                out.accepted = {dt, k, t_max, tol_p};
                out.converged = true;
                return out;
            }
        } else {
            out.report.push_back({"dt", t_max, dt, k, pk, 0.0});
        }
        previous_dt_value = pk;
        out.probability = pk;
        out.accepted = {dt, k, t_max, tol_p};
    }
    out.failure = "dt halving budget exhausted";
    return out;
}

}  // namespace lzdiss::quapi
