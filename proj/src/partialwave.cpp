#include "zdecay/partialwave.hpp"

#include <cmath>

#include "zdecay/quadrature.hpp"

namespace zdk {

cplx confluent_L(double gamma_j, cplx z) {
    if (!(gamma_j >= 1.0)) throw invalid_argument_error("confluent_L: gamma_j must be >= 1");
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw invalid_argument_error("confluent_L: non-finite argument");
    // Normalization Gamma(2g+1) / (Gamma(g+1) Gamma(g)), via log-gammas.
    const double lognorm =
        std::lgamma(2.0 * gamma_j + 1.0) - std::lgamma(gamma_j + 1.0) - std::lgamma(gamma_j);
    const double norm = std::exp(lognorm);
    const int panels = panels_for_oscillation(std::abs(z));
    cplx val = integrate_c(
        [&](double u) {
            const double w = (gamma_j == 1.0)
                                 ? std::pow(u, gamma_j)
                                 : std::pow(u, gamma_j) * std::pow(1.0 - u, gamma_j - 1.0);
            return std::exp(z * u) * w;
        },
        0.0, 1.0, panels, 16);
    return norm * val;
}

namespace {

// Explicit positive-energy branch for kappa = +(j+1/2): real sine/cosine
// integral forms derived from the integral representation of L.
RadialWaveValue radial_wave_plus_plus(double gamma_j, double p, double r) {
    const double x = 2.0 * p * r;
    // (2pr)^(gamma-1): equal to 1 at r=0 when gamma=1 (the limiting form).
    const double pref_pow = (gamma_j == 1.0 && x == 0.0) ? 1.0 : std::pow(x, gamma_j - 1.0);
    const double pref = -(p / std::sqrt(M_PI)) * pref_pow / std::tgamma(gamma_j) * 2.0;
    const int panels = panels_for_oscillation(p * r);
    auto weight = [&](double u) {
        return (gamma_j == 1.0) ? std::pow(u, gamma_j)
                                : std::pow(u, gamma_j) * std::pow(1.0 - u, gamma_j - 1.0);
    };
    const double gi = integrate(
        [&](double u) { return std::sin(p * r * (2.0 * u - 1.0)) * weight(u); }, 0.0, 1.0,
        panels, 16);
    const double fi = integrate(
        [&](double u) { return std::cos(p * r * (2.0 * u - 1.0)) * weight(u); }, 0.0, 1.0,
        panels, 16);
    return {pref * gi, pref * fi};
}

}  // namespace

RadialWaveValue radial_wave(const Channel& ch, int sign, double p, double r) {
    ch.validate();
    if (p < 0.0 || r < 0.0) throw invalid_argument_error("radial_wave: p, r must be >= 0");
    if (sign != 1 && sign != -1) throw invalid_argument_error("radial_wave: sign must be +-1");
    const double gamma_j = ch.gamma();
    const RadialWaveValue pp = radial_wave_plus_plus(gamma_j, p, r);
    if (ch.kappa > 0) {
        if (sign > 0) return pp;
        return {pp.g, -pp.f};  // g_{+,-} = g_{+,+},  f_{+,-} = -f_{+,+}
    }
    if (sign > 0) return {-pp.f, pp.g};  // g_{-,+} = -f_{+,+},  f_{-,+} = g_{+,+}
    return {-pp.f, -pp.g};               // g_{-,-} = -f_{+,+},  f_{-,-} = -g_{+,+}
}

Envelope envelope_A(double p, const Channel& ch,
                    const std::function<double(double)>& f_cutoff, double Lambda) {
    ch.validate();
    if (!(Lambda > 0.0)) throw invalid_argument_error("envelope_A: cutoff support must be positive");
    const int l = ch.ell();
    const double i1 = integrate(
        [&](double r) {
            return std::abs(f_cutoff(r)) * std::pow(r, 2.0 * l) * (1.0 + p * p * r * r) *
                   (1.0 + r * r + r * r * r * r);
        },
        0.0, Lambda, 8, 16);
    const double i2 = integrate(
        [&](double r) { return std::abs(f_cutoff(r)) * std::pow(r, 2.0 * (l - 1)); }, 0.0,
        Lambda, 8, 16);
    Envelope env;
    env.A = std::pow(2.0 * p, l) / std::tgamma(static_cast<double>(l)) * std::sqrt(std::max(i1, 0.0));
    env.A_tilde = (l < 2) ? 0.0
                          : l * (l - 1) * std::pow(2.0 * p, l - 2) /
                                std::tgamma(static_cast<double>(l)) * std::sqrt(std::max(i2, 0.0));
    return env;
}

double bound_A1_g(double p, double r, double gamma_j) {
    return p / std::sqrt(M_PI) * std::pow(2.0 * p * r, gamma_j) / std::tgamma(gamma_j);
}

double bound_A1_f(double p, double r, double gamma_j) {
    const double x = 2.0 * p * r;
    const double xp = (gamma_j == 1.0 && x == 0.0) ? 1.0 : std::pow(x, gamma_j - 1.0);
    return 2.0 * p / std::sqrt(M_PI) * xp / std::tgamma(gamma_j);
}

}  // namespace zdk
