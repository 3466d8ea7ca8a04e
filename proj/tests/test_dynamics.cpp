// Dynamics module: position weight Q, filtered evolution, local decay traces
// and weighted window traces.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "zdecay/dynamics.hpp"
#include "zdecay/spectral.hpp"

using zdk::cplx;
using zdk::SpMat;

namespace {

const zdk::PhysicalConstants kPC;

zdk::HamiltonianSet small_instance(double g) {
    const zdk::ModeGrid grid = zdk::default_grid(4, 2, kPC);
    const zdk::FockBasis basis = zdk::build_basis(grid, 2, 2, 2);
    const zdk::KernelTable table =
        zdk::build_kernel_table(grid, zdk::SurrogateSpec::calibrated(kPC));
    return zdk::assemble(basis, table, g);
}

}  // namespace

TEST_CASE("radial_derivative: antisymmetric, needs >= 2 nodes") {
    const zdk::ModeGrid grid = zdk::default_grid(4, 2, kPC);
    const Eigen::MatrixXd D = zdk::radial_derivative(grid.neutrino_modes);
    CHECK((D + D.transpose()).cwiseAbs().maxCoeff() <= 1e-14);

    std::vector<zdk::FermionMode> one = {grid.neutrino_modes[0]};
    CHECK_THROWS_AS(zdk::radial_derivative(one), zdk::invalid_argument_error);
}

TEST_CASE("build_Q: q = |iD| against an in-test oracle; Q >= 0") {
    const auto set = small_instance(0.0);
    const auto qw = zdk::build_Q(set.basis, kPC.m_Z);

    // Oracle: recompute |iD| directly (4-node grid).
    const Eigen::MatrixXd D = kPC.m_Z * zdk::radial_derivative(set.basis.grid.neutrino_modes);
    const Eigen::MatrixXcd iD = cplx(0, 1) * D.cast<cplx>();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(iD);
    const Eigen::MatrixXcd qo = es.eigenvectors() * es.eigenvalues().cwiseAbs().asDiagonal() *
                                es.eigenvectors().adjoint();
    CHECK((qw.q1 - qo).cwiseAbs().maxCoeff() <= 1e-10);

    // q1 is positive semidefinite and Hermitian.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eq(qw.q1);
    CHECK(eq.eigenvalues().minCoeff() >= -1e-12);
    CHECK((qw.q1 - qw.q1.adjoint()).cwiseAbs().maxCoeff() <= 1e-13);

    // Q annihilates the vacuum; single-particle diagonal matches q1.
    Eigen::VectorXcd e0 = Eigen::VectorXcd::Zero(set.basis.dim());
    e0[0] = 1.0;
    CHECK((qw.Q.mat * e0).norm() <= 1e-14);

    CHECK_THROWS_AS(zdk::build_Q(set.basis, 0.0), zdk::invalid_argument_error);
}

TEST_CASE("fermion_dgamma_function: identity function reproduces dGamma") {
    const auto set = small_instance(0.0);
    const auto qw = zdk::build_Q(set.basis, kPC.m_Z);
    const SpMat F = zdk::fermion_dgamma_function(set.basis, qw.q1, qw.q2,
                                                 [](double x) { return cplx(x, 0.0); });
    const SpMat direct = SpMat(zdk::dgamma(set.basis, zdk::Species::nu, qw.q1) +
                               zdk::dgamma(set.basis, zdk::Species::nubar, qw.q2));
    const double scale = zdk::operator_norm(direct);
    CHECK(zdk::operator_norm(SpMat(F - direct)) <= 1e-10 * scale);
}

TEST_CASE("PositionWeight::weight: <Q>^{-s} bounded by 1, identity on vacuum") {
    const auto set = small_instance(0.0);
    const auto qw = zdk::build_Q(set.basis, kPC.m_Z);
    const auto W = qw.weight(set.basis, 1.0);
    CHECK(zdk::operator_norm(W.mat) <= 1.0 + 1e-12);
    Eigen::VectorXcd e0 = Eigen::VectorXcd::Zero(set.basis.dim());
    e0[0] = 1.0;
    CHECK((W.mat * e0 - e0).norm() <= 1e-12);  // Q vacuum = 0 => weight 1
}

TEST_CASE("default_chi: plateau and support") {
    const auto chi = zdk::default_chi(-0.5, 2.0, 10.0);
    CHECK(chi(-0.5) == 1.0);
    CHECK(chi(1.5) == 1.0);    // within plateau
    CHECK(chi(9.5) == 0.0);    // beyond edge
    const double mid = chi(5.0);
    CHECK(mid > 0.0);
    CHECK(mid < 1.0);
}

TEST_CASE("FilteredEvolution: stationarity, unitarity, coverage error") {
    const auto set = small_instance(0.05);
    const auto gs = zdk::lowest_eigenpairs(set.H, 2, 1e-11);
    const double E = gs[0].value;
    const double gap = gs[1].value - E;
    const auto ev = zdk::make_evolution(set, E + kPC.m_Z / 2);

    // chi covering only the ground state: evolution is a pure phase.
    const auto chi_gs = zdk::default_chi(E, gap / 4, gap / 2);
    std::vector<double> times = {0.0, 0.7, 3.1, 12.9};
    const auto traj = ev(chi_gs, gs[0].vector, times);
    REQUIRE(traj.size() == times.size());
    // t = 0: chi(H) acts as the identity on the ground state.
    CHECK((traj[0] - gs[0].vector).norm() <= 1e-9);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const cplx phase = std::exp(cplx(0.0, -times[i] * E));
        CHECK((traj[i] - phase * gs[0].vector).norm() <= 1e-9);
    }

    // Norm conservation over many steps for a generic low-energy state.
    const auto chi_low = zdk::default_chi(E, kPC.m_Z / 8, kPC.m_Z / 4);
    Eigen::VectorXcd psi0 = gs[0].vector + 0.5 * gs[1].vector;
    std::vector<double> many;
    for (int i = 0; i <= 10000; ++i) many.push_back(0.01 * i);
    const auto long_traj = ev(chi_low, psi0, many);
    const double n0 = long_traj[0].norm();
    double dev = 0.0;
    for (const auto& v : long_traj) dev = std::max(dev, std::abs(v.norm() - n0));
    CHECK(dev <= 1e-12 * std::max(1.0, n0));

    // chi not supported below cover -> coverage error.
    const auto chi_wide = zdk::default_chi(E, 2 * kPC.m_Z, 3 * kPC.m_Z);
    CHECK_THROWS_AS(ev(chi_wide, psi0, times), zdk::invalid_argument_error);
}

TEST_CASE("local_decay_trace: free instance with chi below the first excitation") {
    const auto set = small_instance(0.0);
    const auto fam = zdk::cutoff_family(set, 8);
    const auto casc = zdk::run_cascade(set, fam);
    const auto qw = zdk::build_Q(set.basis, kPC.m_Z);
    // First excitation at p_min = 0.3562; chi dies below it.
    const auto chi = zdk::default_chi(casc.E, 0.1, 0.3);
    std::vector<double> times;
    for (int i = 0; i <= 50; ++i) times.push_back(0.5 * i);
    const auto tr = zdk::local_decay_trace(set, casc, qw, 1.0, 0.25, chi, times,
                                           casc.E + kPC.m_Z / 2);
    // chi(H) projects onto the ground state alone: the residual vanishes.
    for (double r : tr.r) CHECK(r <= 1e-12);
    CHECK(tr.r0 <= 1e-12);

    // Parameter validation.
    CHECK_THROWS_AS(zdk::local_decay_trace(set, casc, qw, 0.5, 0.7, chi, times,
                                           casc.E + kPC.m_Z / 2),
                    zdk::invalid_argument_error);
}

TEST_CASE("local_decay_trace: interacting trace decays and fits") {
    const auto set = small_instance(0.05);
    const auto fam = zdk::cutoff_family(set, 8);
    const auto casc = zdk::run_cascade(set, fam);
    const double rho = std::max(0.5, 1.0 - casc.c_gap * set.g);
    const auto qw = zdk::build_Q(set.basis, kPC.m_Z);
    const auto chi = zdk::default_chi(casc.E, rho * fam.sigma0 / 6, kPC.m_Z / 4);
    std::vector<double> times;
    for (int i = 0; i <= 400; ++i) times.push_back(0.05 * i);
    const auto tr = zdk::local_decay_trace(set, casc, qw, 1.0, 0.25, chi, times,
                                           casc.E + kPC.m_Z / 4 + 1.0);
    CHECK(tr.r0 > 0.0);
    CHECK(tr.T_H > 0.0);
    CHECK(tr.fit_target == doctest::Approx(-0.75));
    // The trace is nontrivial and bounded by its initial value.
    double rmax = 0.0;
    for (double r : tr.r) rmax = std::max(rmax, r);
    CHECK(rmax <= tr.r0 * (1.0 + 1e-9));

    // CSV round trip.
    const std::string path = "/tmp/zdk_trace_test.csv";
    zdk::save_trace_csv(tr, path);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,r");
    std::string row;
    std::getline(in, row);
    double t0 = -1, r0 = -1;
    std::sscanf(row.c_str(), "%lf,%lf", &t0, &r0);
    CHECK(t0 == doctest::Approx(times[0]));
    CHECK(r0 == doctest::Approx(tr.r[0]).epsilon(1e-12));
    std::remove(path.c_str());
}

TEST_CASE("weighted_window_trace: r0 positive, onset detected") {
    const auto set = small_instance(0.05);
    const auto low = zdk::eigenpairs_below(set.H, 50.0, 1024);
    REQUIRE(low.size() >= 3);
    const double E = low[0].value;
    const auto qw = zdk::build_Q(set.basis, kPC.m_Z);
    const auto W = qw.weight(set.basis, 1.0);
    // Filter selecting a wide excited band (fast dephasing).
    auto filter = [E](double x) { return (x > E + 1e-9 && x <= E + 40.0) ? 1.0 : 0.0; };
    std::vector<double> times;
    for (int i = 0; i <= 600; ++i) times.push_back(0.1 * i);
    const auto wt = zdk::weighted_window_trace(low, W.mat, filter, times);
    REQUIRE(wt.r.size() == times.size());
    CHECK(wt.r0 > 0.0);
    CHECK(wt.r[0] == doctest::Approx(wt.r0));
    // With a 0/1 filter, r(t) = ||S U(t) S|| <= ||S||^2 = r0 for all t, and
    // dephasing moves the norm strictly off its initial value.
    double rmin = wt.r0;
    for (double r : wt.r) {
        CHECK(r <= wt.r0 * (1.0 + 1e-9));
        rmin = std::min(rmin, r);
    }
    CHECK(rmin < wt.r0 * (1.0 - 1e-6));
}
