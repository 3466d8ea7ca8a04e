#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "zdecay/kernels.hpp"
#include "zdecay/partialwave.hpp"

using zdk::cplx;
using zdk::CutoffProfile;
using zdk::KernelTable;
using zdk::ModeGrid;
using zdk::PhysicalConstants;
using zdk::SurrogateSpec;

namespace {

const PhysicalConstants kPC;

// Small-momentum grid so the quadrature-mode tests stay cheap.
ModeGrid small_grid(int nf, int nb, double pmax_frac = 0.2) {
    ModeGrid g;
    const double pmax = pmax_frac * kPC.m_Z;
    const auto fc = zdk::geometric_cells(pmax / 8.0, pmax, nf);
    zdk::Channel nu{1, 1, 1}, nubar{1, -1, -1};
    for (int i = 0; i < nf; ++i) {
        g.neutrino_modes.push_back({fc.nodes[i], fc.weights[i], nu});
        g.antineutrino_modes.push_back({fc.nodes[i], fc.weights[i], nubar});
    }
    const auto bc = zdk::geometric_cells(pmax / 4.0, pmax, nb);
    for (int i = 0; i < nb; ++i) g.boson_modes.push_back({bc.nodes[i], bc.weights[i], 0});
    g.p_max = pmax;
    g.k_max = pmax;
    return g;
}

}  // namespace

TEST_CASE("smooth cutoff profiles") {
    CHECK(zdk::smooth_step(-0.5) == 0.0);
    CHECK(zdk::smooth_step(1.5) == 1.0);
    CHECK(zdk::smooth_step(0.5) == doctest::Approx(0.5));
    CHECK(zdk::smooth_cut(0.5, 1.0, 2.0) == 1.0);
    CHECK(zdk::smooth_cut(2.5, 1.0, 2.0) == 0.0);
    double prev = 1.0;
    for (double x = 1.0; x <= 2.0; x += 0.05) {
        const double v = zdk::smooth_cut(x, 1.0, 2.0);
        CHECK(v <= prev + 1e-15);
        prev = v;
    }
}

TEST_CASE("spinor_contraction_h: zero cutoff gives zero") {
    CutoffProfile prof = CutoffProfile::standard(kPC);
    prof.f = [](double) { return 0.0; };
    const ModeGrid g = small_grid(1, 1);
    const cplx h =
        zdk::spinor_contraction_h(1, g.neutrino_modes[0], g.antineutrino_modes[0],
                                  g.boson_modes[0], prof, kPC);
    CHECK(std::abs(h) == 0.0);
}

TEST_CASE("spinor_contraction_h agrees with a refined-quadrature oracle") {
    CutoffProfile prof = CutoffProfile::standard(kPC);
    const ModeGrid g = small_grid(1, 1, 0.1);  // p1 = p2 = |k|-scale ~ m_Z/10
    zdk::FermionMode m1 = g.neutrino_modes[0];
    zdk::FermionMode m2 = g.antineutrino_modes[0];
    zdk::BosonMode m3 = g.boson_modes[0];
    m1.p = m2.p = m3.k = kPC.m_Z / 10.0;
    const cplx h = zdk::spinor_contraction_h(1, m1, m2, m3, prof, kPC);

    CutoffProfile fine = prof;
    fine.r_order = 32;
    fine.theta_order = 32;
    fine.convergence_check = false;
    const cplx oracle = zdk::spinor_contraction_h(1, m1, m2, m3, fine, kPC);
    CHECK(std::abs(h - oracle) <= 1e-6 * std::abs(oracle));
    CHECK(std::abs(h) > 0.0);
}

TEST_CASE("Lemma 3.1 envelopes for h and its p-derivatives") {
    CutoffProfile prof = CutoffProfile::standard(kPC);
    const ModeGrid g = small_grid(3, 2);
    auto envA = [&](double p, const zdk::Channel& ch) {
        return zdk::envelope_A(p, ch, prof.f, prof.Lambda).A;
    };
    // First display: |h| <= C (k^2+m_Z^2)^{1/4} A(p1) A(p2); record the
    // smallest admissible constant over the grid.
    double C_emp = 0.0;
    for (const auto& m1 : g.neutrino_modes)
        for (const auto& m2 : g.antineutrino_modes)
            for (const auto& m3 : g.boson_modes)
                for (int j : {1, 2}) {
                    const cplx h = zdk::spinor_contraction_h(j, m1, m2, m3, prof, kPC);
                    const double den = std::pow(m3.k * m3.k + kPC.m_Z * kPC.m_Z, 0.25) *
                                       envA(m1.p, m1.channel) * envA(m2.p, m2.channel);
                    REQUIRE(den > 0.0);
                    C_emp = std::max(C_emp, std::abs(h) / den);
                }
    MESSAGE("empirical Lemma 3.1 constant C_mZ = ", C_emp);
    CHECK(C_emp < 10.0);

    // Second display: |d h / d p_i| <= C (k^2+m_Z^2)^{1/4} p_i^{-1} (ell_i + 1)
    // A(p1) A(p2), with the same constant (10% headroom).
    const auto& m2 = g.antineutrino_modes[1];
    const auto& m3 = g.boson_modes[0];
    for (int j : {1, 2}) {
        zdk::FermionMode a = g.neutrino_modes[1], b = a;
        const double hstep = 1e-4 * a.p;
        a.p += hstep;
        b.p -= hstep;
        const cplx dh = (zdk::spinor_contraction_h(j, a, m2, m3, prof, kPC) -
                         zdk::spinor_contraction_h(j, b, m2, m3, prof, kPC)) /
                        (2.0 * hstep);
        const double p1 = g.neutrino_modes[1].p;
        const int ell = g.neutrino_modes[1].channel.ell();
        const double bound = C_emp * std::pow(m3.k * m3.k + kPC.m_Z * kPC.m_Z, 0.25) *
                             (ell + 1.0) / p1 * envA(p1, g.neutrino_modes[1].channel) *
                             envA(m2.p, m2.channel);
        CHECK(std::abs(dh) <= 1.1 * bound);
    }
}

TEST_CASE("quadrature-mode kernel table and weighted-norm oracle") {
    CutoffProfile prof = CutoffProfile::standard(kPC);
    const ModeGrid g = small_grid(2, 2);
    const KernelTable t = zdk::build_kernel_table(g, prof, kPC);
    // Direct-summation oracle for ||F1 / sqrt(p2)||^2.
    double want = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) {
                const auto& m1 = g.neutrino_modes[i];
                const auto& m2 = g.antineutrino_modes[j];
                const auto& m3 = g.boson_modes[k];
                const cplx F = zdk::spinor_contraction_h(1, m1, m2, m3, prof, kPC) *
                               prof.G1(m1.p, m2.p, m3.k);
                want += m1.w * m2.w * m3.w * std::norm(F) / m2.p;
            }
    const double got = t.norms(1).inv_sqrt_p2;
    CHECK(got * got == doctest::Approx(want).epsilon(1e-10));
    for (int j : {1, 2}) {
        const auto n = t.norms(j);
        for (double v : {n.l2, n.inv_sqrt_omega, n.inv_sqrt_p2, n.inv_sqrt_p2omega, n.inv_p1,
                         n.inv_p2}) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
        }
    }
}

TEST_CASE("calibrated surrogate: norms, envelope validation, derivatives") {
    const SurrogateSpec spec = SurrogateSpec::calibrated(kPC);

    SUBCASE("continuum calibration targets on a fine grid") {
        ModeGrid g;
        const int N = 48;
        const auto fc = zdk::geometric_cells(kPC.m_Z / 256.0, spec.cut_hi_mul * kPC.m_Z, N);
        zdk::Channel nu{1, 1, 1}, nubar{1, -1, -1};
        for (int i = 0; i < N; ++i) {
            g.neutrino_modes.push_back({fc.nodes[i], fc.weights[i], nu});
            g.antineutrino_modes.push_back({fc.nodes[i], fc.weights[i], nubar});
            g.boson_modes.push_back({fc.nodes[i], fc.weights[i], 0});
        }
        g.p_max = g.k_max = spec.cut_hi_mul * kPC.m_Z;
        const KernelTable t = zdk::build_kernel_table(g, spec, false);
        CHECK(t.norms(1).l2 == doctest::Approx(kPC.m_Z).epsilon(0.05));
        CHECK(t.norms(2).l2 == doctest::Approx(0.1 * kPC.m_Z).epsilon(0.05));
    }

    SUBCASE("Prop 3.2 constants follow from the norms") {
        const KernelTable t =
            zdk::build_kernel_table(zdk::default_grid(5, 3, kPC), spec, false);
        const auto n1 = t.norms(1), n2 = t.norms(2);
        CHECK(t.CF(1) == doctest::Approx(2.0 * n1.inv_sqrt_omega * n1.inv_sqrt_omega +
                                         n1.inv_sqrt_p2omega * n1.inv_sqrt_p2omega));
        CHECK(t.CF(2) == doctest::Approx(n2.inv_sqrt_p2omega * n2.inv_sqrt_p2omega));
        CHECK(t.CF_tilde(1) >= n1.inv_sqrt_p2 * n1.inv_sqrt_p2 - 1e-12);
        CHECK(t.CF_tilde(2) >=
              2.0 * n2.l2 * n2.l2 + n2.inv_sqrt_p2 * n2.inv_sqrt_p2 - 1e-12);
    }

    SUBCASE("derivative tables match finite differences of F") {
        const ModeGrid g = zdk::default_grid(4, 2, kPC);
        const KernelTable t = zdk::build_kernel_table(g, spec, true);
        REQUIRE(t.has_derivatives);
        for (int j : {1, 2}) {
            for (int i : {0, 2}) {
                const double p1 = g.neutrino_modes[i].p;
                const double p2 = g.antineutrino_modes[1].p;
                const double k = g.boson_modes[0].k;
                const double h = 1e-2 * p1;
                const cplx fd = (spec.eval(j, p1 + h, p2, k) - spec.eval(j, p1 - h, p2, k)) /
                                (2.0 * h);
                const cplx fdd = (spec.eval(j, p1 + h, p2, k) - 2.0 * spec.eval(j, p1, p2, k) +
                                  spec.eval(j, p1 - h, p2, k)) /
                                 (h * h);
                const std::size_t id = t.idx(i, 1, 0);
                const double scale = std::abs(spec.eval(j, p1, p2, k)) / p1 + 1e-12;
                CHECK(std::abs(t.dp1[j - 1][id] - fd) < 1e-3 * (std::abs(fd) + scale));
                CHECK(std::abs(t.dp1p1[j - 1][id] - fdd) <
                      1e-2 * (std::abs(fdd) + scale / p1));
            }
        }
    }

    SUBCASE("small-p envelope violation is rejected") {
        SurrogateSpec bad = spec;
        bad.phi_override = [&](int, double p) {
            return zdk::smooth_cut(p, kPC.m_Z, 1.2 * kPC.m_Z);  // does not vanish at p = 0
        };
        CHECK_THROWS_AS(zdk::build_kernel_table(zdk::default_grid(4, 2, kPC), bad, false),
                        zdk::invalid_argument_error);
    }

    SUBCASE("||F/p_i|| finite (Remark after Prop 3.2)") {
        const KernelTable t =
            zdk::build_kernel_table(zdk::default_grid(6, 4, kPC), spec, false);
        for (int j : {1, 2}) {
            CHECK(std::isfinite(t.norms(j).inv_p1));
            CHECK(std::isfinite(t.norms(j).inv_p2));
        }
    }
}

TEST_CASE("restrict_kernel") {
    const SurrogateSpec spec = SurrogateSpec::calibrated(kPC);
    const KernelTable t = zdk::build_kernel_table(zdk::default_grid(5, 3, kPC), spec, true);

    const KernelTable all = zdk::restrict_kernel(t, [](double, double) { return true; });
    for (std::size_t i = 0; i < t.F[0].size(); ++i) CHECK(all.F[0][i] == t.F[0][i]);
    CHECK(all.norms(1).l2 == doctest::Approx(t.norms(1).l2));

    const KernelTable none = zdk::restrict_kernel(t, [](double, double) { return false; });
    CHECK(none.norms(1).l2 == 0.0);
    CHECK(none.norms(2).l2 == 0.0);

    // Pythagorean split: region + complement recover the full norms.
    const double sigma = kPC.m_Z / 4.0;
    const KernelTable in =
        zdk::restrict_kernel(t, [&](double a, double b) { return a >= sigma && b >= sigma; });
    const KernelTable out =
        zdk::restrict_kernel(t, [&](double a, double b) { return !(a >= sigma && b >= sigma); });
    const double full = t.norms(1).l2;
    const double split = std::sqrt(std::pow(in.norms(1).l2, 2) + std::pow(out.norms(1).l2, 2));
    CHECK(split == doctest::Approx(full).epsilon(1e-12));
}

TEST_CASE("kernel table persistence roundtrip") {
    const SurrogateSpec spec = SurrogateSpec::calibrated(kPC);
    const KernelTable t = zdk::build_kernel_table(zdk::default_grid(4, 3, kPC), spec, true);
    const std::string path = "test_kernel_table.json";
    zdk::save_kernel_table(t, path);
    const KernelTable r = zdk::load_kernel_table(path);
    CHECK(r.mode == t.mode);
    CHECK(r.n1 == t.n1);
    CHECK(r.n2 == t.n2);
    CHECK(r.n3 == t.n3);
    CHECK(r.m_Z == t.m_Z);
    REQUIRE(r.F[0].size() == t.F[0].size());
    for (std::size_t i = 0; i < t.F[0].size(); ++i) {
        CHECK(r.F[0][i] == t.F[0][i]);
        CHECK(r.F[1][i] == t.F[1][i]);
        CHECK(r.dp1[0][i] == t.dp1[0][i]);
        CHECK(r.dp2p2[1][i] == t.dp2p2[1][i]);
    }
    CHECK(r.grid.neutrino_modes.size() == t.grid.neutrino_modes.size());
    CHECK(r.grid.neutrino_modes[2].p == t.grid.neutrino_modes[2].p);
    CHECK(r.grid.boson_modes[1].w == t.grid.boson_modes[1].w);
    std::remove("test_kernel_table.json");
    std::remove("test_kernel_table.bin");
}
