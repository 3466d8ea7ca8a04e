#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "zdecay/partialwave.hpp"
#include "zdecay/quadrature.hpp"

using zdk::Channel;
using zdk::cplx;

namespace {

// Series oracle: 1F1(a; b; z) = sum_n (a)_n z^n / ((b)_n n!), summed until the
// term drops below 1e-16 of the running value.
cplx hyp1f1_series(double a, double b, cplx z) {
    cplx term = 1.0, sum = 1.0;
    for (int n = 0; n < 500; ++n) {
        term *= (a + n) * z / ((b + n) * (n + 1.0));
        sum += term;
        if (std::abs(term) < 1e-16 * (std::abs(sum) + 1.0) && n > 4) break;
    }
    return sum;
}

// Closed-form oracle for integer gamma: expand (1-u)^{g-1} binomially and use
// the exact recurrence I_k = Int_0^1 u^k e^{zu} du = (e^z - k I_{k-1}) / z.
// Stable for |z| not small; the series oracle covers small |z|.
cplx hyp1f1_closed(int g, cplx z) {
    std::vector<cplx> I(2 * g);
    I[0] = (std::exp(z) - 1.0) / z;
    for (int k = 1; k < 2 * g; ++k) I[k] = (std::exp(z) - static_cast<double>(k) * I[k - 1]) / z;
    cplx integral = 0.0;
    double binom = 1.0;
    for (int m = 0; m <= g - 1; ++m) {
        integral += (m % 2 == 0 ? 1.0 : -1.0) * binom * I[g + m];
        binom *= static_cast<double>(g - 1 - m) / (m + 1.0);
    }
    const double norm = std::exp(std::lgamma(2.0 * g + 1.0) - std::lgamma(g + 1.0) -
                                 std::lgamma(static_cast<double>(g)));
    return norm * integral;
}

Channel chan(int two_j, int kappa) {
    Channel c;
    c.two_j = two_j;
    c.two_mj = 1;
    c.kappa = kappa;
    return c;
}

}  // namespace

TEST_CASE("confluent_L matches the power-series oracle") {
    CHECK(std::abs(zdk::confluent_L(1.0, cplx(0.0, 0.0)) - 1.0) < 1e-13);
    for (double g : {1.0, 2.0, 3.0}) {
        for (double t : {0.1, 0.5, 2.0, 10.0, 40.0, 100.0}) {
            for (cplx z : {cplx(0.0, t), cplx(0.0, -t), cplx(0.3 * t, 0.7 * t)}) {
                const cplx got = zdk::confluent_L(g, z);
                // The power series cancels catastrophically for large
                // oscillatory z; switch to the exact closed form there.
                const cplx want = (std::abs(z) < 5.0)
                                      ? hyp1f1_series(g + 1.0, 2.0 * g + 1.0, z)
                                      : hyp1f1_closed(static_cast<int>(g), z);
                CHECK(std::abs(got - want) <= 1e-10 * (1.0 + std::abs(want)));
            }
        }
    }
}

TEST_CASE("confluent_L conjugation symmetry") {
    for (double g : {1.0, 2.0}) {
        for (double t : {0.25, 1.0, 7.0, 33.0}) {
            const cplx z(0.4 * t, t);
            const cplx a = zdk::confluent_L(g, std::conj(z));
            const cplx b = std::conj(zdk::confluent_L(g, z));
            CHECK(std::abs(a - b) < 1e-12 * (1.0 + std::abs(b)));
        }
    }
}

TEST_CASE("confluent_L rejects invalid input") {
    CHECK_THROWS_AS(zdk::confluent_L(0.5, cplx(1.0, 0.0)), zdk::invalid_argument_error);
    CHECK_THROWS_AS(
        zdk::confluent_L(1.0, cplx(std::numeric_limits<double>::infinity(), 0.0)),
        zdk::invalid_argument_error);
}

TEST_CASE("radial_wave agrees with the confluent-hypergeometric representation") {
    // 2 Int sin(pr(2u-1)) w = 2 Im[e^{-ipr} B L(2ipr)],  B = G(g+1)G(g)/G(2g+1),
    // and the cosine integral is the matching real part.
    for (int two_j : {1, 3}) {
        const Channel c = chan(two_j, (two_j + 1) / 2);
        const double g = c.gamma();
        const double B = std::tgamma(g + 1.0) * std::tgamma(g) / std::tgamma(2.0 * g + 1.0);
        for (double p : {0.4, 2.0, 30.0}) {
            for (double r : {0.05, 1.0, 4.0}) {
                const cplx L = zdk::confluent_L(g, cplx(0.0, 2.0 * p * r));
                const cplx core = std::exp(cplx(0.0, -p * r)) * B * L;
                const double pref = -(p / std::sqrt(M_PI)) *
                                    std::pow(2.0 * p * r, g - 1.0) / std::tgamma(g);
                const auto w = zdk::radial_wave(c, +1, p, r);
                CHECK(std::abs(w.g - pref * 2.0 * core.imag()) < 1e-11 * (1.0 + p));
                CHECK(std::abs(w.f - pref * 2.0 * core.real()) < 1e-11 * (1.0 + p));
            }
        }
    }
}

TEST_CASE("radial_wave branch symmetry identities") {
    for (int two_j : {1, 3}) {
        const int g = (two_j + 1) / 2;
        for (double p : {0.7, 5.0}) {
            for (double r : {0.2, 3.0}) {
                const auto pp = zdk::radial_wave(chan(two_j, g), +1, p, r);
                const auto pm = zdk::radial_wave(chan(two_j, g), -1, p, r);
                const auto mp = zdk::radial_wave(chan(two_j, -g), +1, p, r);
                const auto mm = zdk::radial_wave(chan(two_j, -g), -1, p, r);
                // g_{+,+} = g_{+,-} = f_{-,+} = -f_{-,-}
                CHECK(std::abs(pp.g - pm.g) < 1e-12);
                CHECK(std::abs(pp.g - mp.f) < 1e-12);
                CHECK(std::abs(pp.g + mm.f) < 1e-12);
                // f_{+,+} = -g_{-,+} = -g_{-,-} = -f_{+,-}
                CHECK(std::abs(pp.f + mp.g) < 1e-12);
                CHECK(std::abs(pp.f + mm.g) < 1e-12);
                CHECK(std::abs(pp.f + pm.f) < 1e-12);
            }
        }
    }
}

TEST_CASE("radial_wave r -> 0 limit (j=1/2)") {
    // f_{1,+}(p, 0) = -(2p/sqrt(pi)) Int_0^1 u du = -p/sqrt(pi); g vanishes.
    const Channel c = chan(1, 1);
    const double p = 2.5;
    const auto w0 = zdk::radial_wave(c, +1, p, 0.0);
    CHECK(std::abs(w0.g) < 1e-13);
    CHECK(std::abs(w0.f - (-p / std::sqrt(M_PI))) < 1e-12);
    const auto weps = zdk::radial_wave(c, +1, p, 1e-7);
    CHECK(std::abs(weps.f - w0.f) < 1e-6);
}

TEST_CASE("pointwise envelopes (A-1) with nonnegative slack") {
    double min_slack_g = 1e300, min_slack_f = 1e300;
    for (int two_j : {1, 3}) {
        const Channel c = chan(two_j, (two_j + 1) / 2);
        const double g = c.gamma();
        for (double p : {0.3, 1.0, 5.0, 40.0}) {
            for (double r : {0.01, 0.1, 1.0, 5.0, 20.0}) {
                const auto w = zdk::radial_wave(c, +1, p, r);
                const double sg = zdk::bound_A1_g(p, r, g) - std::abs(w.g);
                const double sf = zdk::bound_A1_f(p, r, g) - std::abs(w.f);
                CHECK(sg >= -1e-12);
                CHECK(sf >= -1e-12);
                min_slack_g = std::min(min_slack_g, sg);
                min_slack_f = std::min(min_slack_f, sf);
            }
        }
    }
    MESSAGE("min slack: g-bound ", min_slack_g, ", f-bound ", min_slack_f);
}

TEST_CASE("derivative envelopes (A-2)/(A-3) via finite differences") {
    const double sqpi = std::sqrt(M_PI);
    for (int two_j : {1, 3}) {
        const Channel c = chan(two_j, (two_j + 1) / 2);
        const double g = c.gamma();
        const double Gg = std::tgamma(g);
        for (double p : {0.5, 2.0, 10.0}) {
            for (double r : {0.05, 0.5, 2.0}) {
                const double h = 1e-4 * p;
                auto gv = [&](double pp) { return zdk::radial_wave(c, +1, pp, r).g.real(); };
                auto fv = [&](double pp) { return zdk::radial_wave(c, +1, pp, r).f.real(); };
                const double dg = (gv(p + h) - gv(p - h)) / (2.0 * h);
                const double df = (fv(p + h) - fv(p - h)) / (2.0 * h);
                const double d2g = (gv(p + h) - 2.0 * gv(p) + gv(p - h)) / (h * h);
                const double d2f = (fv(p + h) - 2.0 * fv(p) + fv(p - h)) / (h * h);
                const double x = 2.0 * p * r;
                const double b_dg = (g + 1.0) / sqpi * std::pow(x, g) / Gg;
                const double b_df =
                    2.0 * g / sqpi * std::pow(x, g - 1.0) / Gg +
                    0.5 / sqpi * std::pow(x, g + 1.0) / Gg;
                const double b_d2g = 6.0 * r / sqpi * g * std::pow(x, g - 1.0) / Gg +
                                     2.0 * r / sqpi * (g - 1.0) * (g - 1.0) * std::pow(x, g) / Gg +
                                     0.5 * r / sqpi * std::pow(x, g + 1.0) / Gg;
                const double b_d2f = 3.0 * r / sqpi * g * std::pow(x, g) / Gg +
                                     4.0 * r / sqpi * g * (g - 1.0) * std::pow(x, g - 2.0) / Gg;
                CHECK(std::abs(dg) <= b_dg * 1.05);
                CHECK(std::abs(df) <= b_df * 1.05);
                CHECK(std::abs(d2g) <= b_d2g * 1.05);
                CHECK(std::abs(d2f) <= b_d2f * 1.05);
            }
        }
    }
}

TEST_CASE("envelope_A values and small-p scaling") {
    // Smooth bump supported on [0,1].
    auto bump = [](double r) {
        if (r <= 0.0 || r >= 1.0) return 0.0;
        const double t = 2.0 * r - 1.0;
        return std::exp(-1.0 / (1.0 - t * t));
    };
    const Channel c1 = chan(1, 1);  // ell = 1

    SUBCASE("zero cutoff gives zero envelopes") {
        auto env = zdk::envelope_A(1.0, c1, [](double) { return 0.0; }, 1.0);
        CHECK(env.A == 0.0);
        CHECK(env.A_tilde == 0.0);
    }

    SUBCASE("oracle quadrature at double resolution, ell = 1, p = 1") {
        auto env = zdk::envelope_A(1.0, c1, bump, 1.0);
        const double i1 = zdk::integrate(
            [&](double r) {
                return bump(r) * r * r * (1.0 + r * r) * (1.0 + r * r + r * r * r * r);
            },
            0.0, 1.0, 32, 32);
        CHECK(std::abs(env.A - 2.0 * std::sqrt(i1)) < 1e-8 * env.A);
        CHECK(env.A_tilde == 0.0);  // ell(ell-1) = 0
    }

    SUBCASE("log-log slope ell_j at small p") {
        for (int two_j : {1, 3}) {
            const Channel c = chan(two_j, (two_j + 1) / 2);
            auto a1 = zdk::envelope_A(1e-3, c, bump, 1.0);
            auto a2 = zdk::envelope_A(2e-3, c, bump, 1.0);
            const double slope = std::log(a2.A / a1.A) / std::log(2.0);
            CHECK(std::abs(slope - c.ell()) < 1e-3);
        }
    }

    SUBCASE("A_tilde positive for ell >= 2") {
        auto env = zdk::envelope_A(1.0, chan(3, 2), bump, 1.0);
        CHECK(env.A_tilde > 0.0);
    }
}

TEST_CASE("Channel validation") {
    CHECK_THROWS_AS(zdk::radial_wave(chan(2, 1), +1, 1.0, 1.0), zdk::invalid_argument_error);
    CHECK_THROWS_AS(zdk::radial_wave(chan(1, 2), +1, 1.0, 1.0), zdk::invalid_argument_error);
    CHECK_THROWS_AS(zdk::radial_wave(chan(1, 1), 0, 1.0, 1.0), zdk::invalid_argument_error);
    CHECK_THROWS_AS(zdk::radial_wave(chan(1, 1), +1, -1.0, 1.0), zdk::invalid_argument_error);
}
