// Time evolution and the Theorem 2.7 observables: Q-weighted local decay
// (eq:uniflocdec) and relaxation to the ground state (eq:returnunif).
#pragma once

#include <string>
#include <vector>

#include "zdecay/spectral.hpp"

namespace zdk {

// "Position" weights q_j = |i d/dp_j| per fermion species (Section 2.2) and
// the second-quantized Q = dGamma(q1) + dGamma(q2).
//
// The one-particle derivative D is the centered difference on the radial grid
// in weight-carrying coordinates (W^{1/2} D_raw W^{-1/2}, boundary rows
// one-sided), antisymmetrized so that iD is Hermitian w.r.t. the quadrature
// inner product; q = |iD| by one-particle eigendecomposition.  The paper's
// q = |i grad_p| lives on the half-line per channel; the boundary treatment of
// the derivative at p = 0 is unspecified there, and the one-sided
// antisymmetrized stencil is the choice made here.
struct PositionWeight {
    Eigen::MatrixXcd q1, q2;  // one-particle |iD| per species (weighted coords)
    SparseHermitian Q;        // dGamma(q1) + dGamma(q2); Q >= 0
    // <Q>^{-s} = (1 + Q^2)^{-s/2}, exact via Slater rotation; cached per s.
    SparseHermitian weight(const FockBasis& basis, double s) const;
};

// Antisymmetrized centered-difference derivative in weighted coordinates
// (shared with the conjugate-operator construction).  Throws
// invalid_argument_error if the species has fewer than 2 radial nodes.
Eigen::MatrixXd radial_derivative(const std::vector<FermionMode>& modes);

// p_unit nondimensionalizes the radial momentum before differentiating, so q
// is measured in units of 1/p_unit (the Compton length for p_unit = m_Z).
// This keeps the <Q> = (1 + Q^2)^{1/2} bracket from saturating at desk scale,
// where all grid spacings exceed 1 GeV^{-1}; a flagged unit choice.
PositionWeight build_Q(const FockBasis& basis, double p_unit);

// ---------------------------------------------------------------------------
// Filtered evolution in the low-energy eigenbasis.  chi must be supported
// below `cover`: all eigenpairs with value <= cover are computed, so
// e^{-itH} chi(H) psi0 is exact in the truncated eigenbasis.

struct FilteredEvolution {
    std::vector<EigenPair> low;     // eigenpairs below the coverage threshold
    double cover = 0.0;
    // Evolve: returns e^{-itH} chi(H) psi0 for each t.  Throws
    // invalid_argument_error (coverage) if chi(cover) > 1e-12, i.e. the
    // computed eigenbasis cannot represent chi(H).
    std::vector<Eigen::VectorXcd> operator()(const std::function<double(double)>& chi,
                                             const Eigen::VectorXcd& psi0,
                                             const std::vector<double>& times) const;
};

FilteredEvolution make_evolution(const HamiltonianSet& set, double cover,
                                 double tol = 1e-10);

// Smooth energy filter: 1 on [E, E + plateau], 0 above E + edge (Theorem 2.7
// chi; defaults plateau = rho sigma0 / 6, edge = m_Z / 4 relative to E).
std::function<double(double)> default_chi(double E, double plateau, double edge);

// ---------------------------------------------------------------------------
// Local decay trace (eq:uniflocdec):
//   r(t) = || <Q>^{-s} e^{-itH} chi(H) <Q>^{-s}
//            - e^{-itE} chi(E) <Q>^{-s} P_gs <Q>^{-s} ||.

struct DecayTrace {
    double s = 0.0, mu = 0.0;
    std::vector<double> times;
    std::vector<double> r;        // weighted residual norm per time
    double r0 = 0.0;              // r at t = 0
    double T_H = 0.0;             // Heisenberg time: 2 pi / mean level spacing in supp chi
    double fit_exponent = 0.0;    // power-law fit of r(t) on [t1, T_H/2]
    double fit_target = 0.0;      // -(s - mu)
    int fit_points = 0;
    bool insufficient = false;    // fewer than 10 usable times below T_H/2
};

// chi as a function of absolute energy.  The fit window starts at
// t1 = max(first time > 0, 1 / (rho sigma0)) and ends at T_H / 2.
DecayTrace local_decay_trace(const HamiltonianSet& set, const CascadeRecord& cascade,
                             const PositionWeight& weight, double s, double mu,
                             const std::function<double(double)>& chi,
                             const std::vector<double>& times, double cover,
                             double tol = 1e-10);

// CSV: header "t,r", one row per time; per-window components appended as
// extra columns when provided.
void save_trace_csv(const DecayTrace& trace, const std::string& path,
                    const std::vector<std::vector<double>>& window_components = {},
                    const std::vector<std::string>& window_names = {});

// ---------------------------------------------------------------------------
// Per-window weighted traces r(t) = || W e^{-itH} f(H) W || for a spectral
// filter f (absolute energies) and a Hermitian weight W, evaluated exactly in
// the partial eigenbasis `low` (which must cover supp f).  Used for the
// Theorem 4.4 second display (W = <A_{sigma_n}>^{-s}, f = phi_{sigma_n}(. - E),
// time scale ~ sigma_n^{-1}) and for Q-weighted onset comparisons.
struct WindowTrace {
    std::vector<double> times;
    std::vector<double> r;
    double r0 = 0.0;
    double onset_half = 0.0;      // first time with r <= r0 / 2 (0 if never)
    double fit_exponent = 0.0;    // log-log fit on [onset_half, 5 onset_half]
    int fit_points = 0;
};
WindowTrace weighted_window_trace(const std::vector<EigenPair>& low, const SpMat& W,
                                  const std::function<double(double)>& filter,
                                  const std::vector<double>& times);

}  // namespace zdk
