#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "lzdiss/model.hpp"

using namespace lzdiss;

namespace {

// Composite Simpson rule on a uniform grid; independent of the adaptive
// quadrature used by the library.
template <typename F>
std::complex<double> simpson(F f, double a, double b, int n) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    std::complex<double> sum = f(a) + f(b);
    for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return sum * h / 3.0;
}

std::complex<double> correlation_oracle(const BathParams& b, double delta, double t) {
    auto f = [&](double w) -> std::complex<double> {
        if (w == 0.0) {
            // Limit of G(w) coth(w/2T): gamma/pi * 2T for s = 1, else 0.
            return (b.s == 1.0 && b.temperature > 0.0) ? b.gamma / std::numbers::pi * 2.0 * b.temperature : 0.0;
        }
        const double g = b.gamma * std::pow(delta, 1.0 - b.s) / std::numbers::pi * std::pow(w, b.s) *
                         std::exp(-w / b.omega_c);
        const double coth = b.temperature == 0.0 ? 1.0 : 1.0 / std::tanh(w / (2.0 * b.temperature));
        return {g * coth * std::cos(w * t), -g * std::sin(w * t)};
    };
    return simpson(f, 0.0, 60.0 * b.omega_c, 400000);
}

}  // namespace

TEST(Hamiltonian, AtCrossingIsHalfSigmaX) {
    const ModelParams p{1.0, 1.0, 0.0};
    const Matrix2 h = hamiltonian(p, 0.0);
    EXPECT_NEAR(std::abs(h(0, 0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(h(1, 1)), 0.0, 1e-15);
    EXPECT_NEAR(h(0, 1).real(), 0.5, 1e-15);
    EXPECT_NEAR(h(1, 0).real(), 0.5, 1e-15);
}

TEST(Hamiltonian, BiasedEntries) {
    const ModelParams p{1.0, 1.0, 0.0};
    const Matrix2 h = hamiltonian(p, 2.0);
    EXPECT_DOUBLE_EQ(h(0, 0).real(), 1.0);
    EXPECT_DOUBLE_EQ(h(1, 1).real(), -1.0);
    EXPECT_DOUBLE_EQ(h(0, 1).real(), 0.5);
    for (double t : {-30.0, -1.3, 0.0, 0.4, 17.0}) {
        const Matrix2 m = hamiltonian({1.0, 0.7, 0.3}, t);
        EXPECT_LT((m - m.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(Gap, ValuesAndSymmetry) {
    const ModelParams p{1.0, 1.0, 0.0};
    EXPECT_DOUBLE_EQ(gap(p, 0.0), 1.0);
    EXPECT_NEAR(gap(p, 2.0), 2.2360680, 1e-7);
    for (double t = -50.0; t <= 50.0; t += 0.37) {
        EXPECT_DOUBLE_EQ(gap(p, t), gap(p, -t));
        EXPECT_GE(gap(p, t), p.delta);
        if (t != 0.0) EXPECT_GT(gap(p, t), p.delta);
    }
}

TEST(MixingAngleRate, MatchesFiniteDifferences) {
    const ModelParams p{1.0, 1.0, 0.0};
    EXPECT_DOUBLE_EQ(mixing_angle_rate(p, 0.0), 1.0);
    EXPECT_LT(mixing_angle_rate(p, 1e6), 1e-11);
    EXPECT_LT(mixing_angle_rate(p, -1e6), 1e-11);
    const double h = 1e-4;
    for (double v : {0.05, 1.0, 7.0}) {
        const ModelParams q{1.0, v, 0.0};
        for (double t = -20.0; t <= 20.0; t += 0.73) {
            const double fd = (mixing_angle(q, t + h) - mixing_angle(q, t - h)) / (2 * h);
            EXPECT_LT(std::abs(mixing_angle_rate(q, t) - fd), 1e-6) << "v=" << v << " t=" << t;
        }
    }
}

TEST(SpectralDensity, ReferenceValues) {
    const BathParams b{3.0, 5e-4, 5.0, 0.0};
    EXPECT_NEAR(spectral_density(b, 1.0, 1.0), 1.30305e-4, 1e-8);
    EXPECT_EQ(spectral_density(b, 1.0, 0.0), 0.0);
    EXPECT_EQ(spectral_density({1.0, 0.1, 5.0, 0.0}, 1.0, 0.0), 0.0);
    // Ohmic: independent of delta.
    const BathParams ohmic{1.0, 0.02, 3.0, 0.0};
    for (double w : {0.1, 1.0, 4.0}) {
        const double expected = 0.02 / std::numbers::pi * w * std::exp(-w / 3.0);
        EXPECT_NEAR(spectral_density(ohmic, 1.0, w), expected, 1e-16);
        EXPECT_NEAR(spectral_density(ohmic, 2.5, w), expected, 1e-16);
    }
    EXPECT_THROW(spectral_density(b, 1.0, -0.1), std::domain_error);
}

TEST(SpectralDensity, NonNegativeWithSingleMaximumAtSOmegaC) {
    for (double s : {1.0, 2.0, 3.0}) {
        const BathParams b{s, 1e-3, 5.0, 0.0};
        double best = -1.0;
        double arg = 0.0;
        int rises_after_peak = 0;
        double prev = 0.0;
        bool past_peak = false;
        for (double w = 0.0; w <= 200.0; w += 0.01) {
            const double g = spectral_density(b, 1.0, w);
            EXPECT_GE(g, 0.0);
            if (g > best) {
                best = g;
                arg = w;
            }
            if (past_peak && g > prev) ++rises_after_peak;
            if (g < prev) past_peak = true;
            prev = g;
        }
        EXPECT_NEAR(arg, s * b.omega_c, 0.011);
        EXPECT_EQ(rises_after_peak, 0);
    }
}

TEST(BathCorrelation, ZeroTemperatureSuperOhmicAtOrigin) {
    const BathParams b{3.0, 5e-4, 5.0, 0.0};
    // int w^3 exp(-w/wc) dw = 6 wc^4  =>  C(0) = 6 gamma wc^4 / (pi delta^2).
    const double closed = 6.0 * 5e-4 * 625.0 / std::numbers::pi;
    EXPECT_NEAR(closed, 0.596831, 1e-6);
    const Complex c0 = bath_correlation(b, 1.0, 0.0);
    EXPECT_NEAR(c0.real(), closed, 1e-8 * closed);
    EXPECT_NEAR(c0.imag(), 0.0, 1e-14);
    EXPECT_NEAR(correlation_oracle(b, 1.0, 0.0).real(), closed, 1e-9);
}

TEST(BathCorrelation, AgreesWithBruteForceQuadrature) {
    const BathParams baths[] = {{3.0, 5e-4, 5.0, 0.0}, {3.0, 5e-4, 5.0, 6.4}, {1.0, 5e-3, 5.0, 2.0},
                                {1.0, 5e-3, 10.0, 0.0}};
    for (const BathParams& b : baths) {
        for (double t : {0.0, 0.05, 0.3, 1.1, 2.7}) {
            const Complex c = bath_correlation(b, 1.0, t);
            const Complex o = correlation_oracle(b, 1.0, t);
            const double scale = std::abs(bath_correlation(b, 1.0, 0.0));
            EXPECT_LT(std::abs(c - o), 1e-8 * scale) << "s=" << b.s << " T=" << b.temperature << " t=" << t;
        }
    }
}

TEST(BathCorrelation, ParityAndConjugateSymmetry) {
    for (double temp : {0.0, 6.4}) {
        const BathParams b{3.0, 5e-4, 5.0, temp};
        for (double t = 0.1; t < 4.0; t += 0.37) {
            const Complex plus = bath_correlation(b, 1.0, t);
            const Complex minus = bath_correlation(b, 1.0, -t);
            EXPECT_NEAR(plus.real(), minus.real(), 1e-8);
            EXPECT_NEAR(plus.imag(), -minus.imag(), 1e-8);
            EXPECT_LT(std::abs(minus - std::conj(plus)), 1e-8);
        }
    }
}

TEST(BathCorrelation, DecaysAtLongTimes) {
    const BathParams b{3.0, 5e-4, 5.0, 0.0};
    const double c0 = std::abs(bath_correlation(b, 1.0, 0.0));
    double prev = c0;
    for (double t : {1.0, 5.0, 20.0, 60.0}) {
        const double c = std::abs(bath_correlation(b, 1.0, t));
        EXPECT_LT(c, prev);
        prev = c;
    }
    EXPECT_LT(prev, 1e-6 * c0);
}

TEST(BathCorrelation, VanishesWithoutCoupling) {
    EXPECT_EQ(bath_correlation({3.0, 0.0, 5.0, 2.0}, 1.0, 0.7), Complex(0.0, 0.0));
}

TEST(CoherentProbability, ClosedFormAndLimits) {
    EXPECT_NEAR(coherent_probability({1.0, 1.0, 0.0}), 0.7921205, 1e-7);
    EXPECT_LT(coherent_probability({1.0, 1e9, 0.0}), 1e-8);
    EXPECT_NEAR(coherent_probability({1.0, 1e-3, 0.0}), 1.0, 1e-12);
    double prev = 1.0;
    for (double v = 0.05; v < 50.0; v *= 1.1) {
        const double pr = coherent_probability({1.0, v, 0.0});
        EXPECT_LT(pr, prev);
        prev = pr;
    }
}

TEST(Params, Validation) {
    EXPECT_THROW((ModelParams{0.0, 1.0, 0.0}.validate()), ConfigError);
    EXPECT_THROW((ModelParams{1.0, -1.0, 0.0}.validate()), ConfigError);
    EXPECT_THROW((ModelParams{1.0, 1.0, -std::numbers::pi / 2}.validate()), ConfigError);
    EXPECT_NO_THROW((ModelParams{1.0, 1.0, std::numbers::pi / 2}.validate()));
    EXPECT_THROW((BathParams{0.5, 1e-3, 5.0, 0.0}.validate()), ConfigError);
    EXPECT_THROW((BathParams{1.0, -1e-3, 5.0, 0.0}.validate()), ConfigError);
    EXPECT_THROW((BathParams{1.0, 1e-3, 0.0, 0.0}.validate()), ConfigError);
    EXPECT_THROW((BathParams{1.0, 1e-3, 5.0, -1.0}.validate()), ConfigError);
}

TEST(DensityMatrix, PhysicalityChecks) {
    DensityMatrix d;
    d.rho << 0.7, Complex(0.1, 0.2), Complex(0.1, -0.2), 0.3;
    EXPECT_TRUE(d.is_physical());
    DensityMatrix bad = d;
    bad.rho(0, 0) = 0.8;
    EXPECT_FALSE(bad.is_physical());
    DensityMatrix negative;
    negative.rho << 1.2, 0.0, 0.0, -0.2;
    EXPECT_FALSE(negative.is_physical());
}
