// Eigensolvers and the Section 3 cascade: ground states phi_n and energies
// E_n of the reduced operators K_n, spectral gaps, vacuum overlap, the
// convergence |E - E_n| ~ sigma_n^2 (Lemma 3.10), and the Weyl-probe
// essential-spectrum test of Theorem 2.5.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zdecay/hamiltonian.hpp"

namespace zdk {

struct EigenPair {
    double value = 0.0;
    Eigen::VectorXcd vector;
    double residual = 0.0;  // ||H v - lambda v|| (absolute)
};

// Lowest `count` eigenpairs of a Hermitian operator: dense solve when
// dim <= 4096, otherwise Lanczos with full reorthogonalization and sequential
// deflation (so degenerate eigenvalues are returned with multiplicity).
// Residuals satisfy ||H v - lambda v|| <= tol ||H||; eigenvalues
// nondecreasing.  Throws numeric_failure (message carries the achieved
// residual) if the iteration budget is exhausted.
std::vector<EigenPair> lowest_eigenpairs(const SparseHermitian& op, int count,
                                         double tol = 1e-10);

// The two backends, callable directly (dense_eigenpairs is the oracle the
// Lanczos path is validated against; it refuses dimensions > 4096).
std::vector<EigenPair> dense_eigenpairs(const SparseHermitian& op, int count);
std::vector<EigenPair> lanczos_eigenpairs(const SparseHermitian& op, int count,
                                          double tol = 1e-10);

// Every eigenpair with value <= threshold, sorted ascending (count grown by
// doubling until the spectrum above threshold is reached).  Functions of H on
// low-energy windows are evaluated in this partial eigenbasis.  Throws
// resource_limit_error if more than max_pairs eigenvalues lie below threshold.
std::vector<EigenPair> eigenpairs_below(const SparseHermitian& op, double threshold,
                                        int max_pairs = 1024, double tol = 1e-10);

// ---------------------------------------------------------------------------
// Cascade (Prop 3.6 / 3.7, Lemma 3.10).

struct CascadeLevelRecord {
    int n = 0;
    double sigma = 0.0;
    double E = 0.0;            // inf spec(K_n)
    double gap = 0.0;          // second eigenvalue of K_n minus E
    bool degenerate = false;   // gap < 1e-10 sigma (flagged, cascade continues)
    double overlap_vac = 0.0;  // <phi_n, (P_OmegaD (x) P_OmegaZ) phi_n> = |phi_n(vac)|^2
    double n_plus = 0.0, n_minus = 0.0;  // <N+>, <N-> in phi_n
    // Eq. (eq:lemC-1): ||N+^(1/2) phi_n|| <= (g/sqrt(m_Z)) (||F1/p1|| + ||F2/p1||)
    //                  ||(H0+1)^(1/2) phi_n||, and the p2-weighted analogue for N-.
    double lemC_lhs_plus = 0.0, lemC_rhs_plus = 0.0;
    double lemC_lhs_minus = 0.0, lemC_rhs_minus = 0.0;
    Eigen::VectorXcd phi;      // ground vector on the level's reduced basis
};

struct CascadeRecord {
    double g = 0.0;
    double sigma0 = 0.0;
    std::vector<CascadeLevelRecord> levels;

    double E = 0.0;            // inf spec(H) on the full basis
    Eigen::VectorXcd phi_gs;   // ground vector of H (full basis); P_gs = phi phi*

    // Gap bound gap_n >= (1 - C_gap g) sigma_n with C_gap = sigma0 a~ + 4 b~
    // the largest Lemma 3.4 form-fit constant over the levels.
    double c_gap = 0.0;
    bool gap_ok = false;
    bool monotone_ok = false;  // E <= E_{n+1} <= E_n <= 0, tolerance 1e-10 |E|-scaled
    bool lemC_ok = false;      // eq:lemC-1 holds on every level
    bool uniqueness_ok = false;  // gap_n / sigma_n >= 0.5 on every level

    // log-log fit of |E - E_n| vs sigma_n over levels with |E - E_n| above
    // round-off (Lemma 3.10 expects slope ~ 2).
    double slope_E = 0.0;
    int slope_points = 0;

    bool perturbative_warning = false;  // g outside the relative-bound regime
};

// Runs the cascade on a prebuilt family.  `set` must be the HamiltonianSet the
// family was built from (same g).  shell_trials/seed feed the Lemma 3.4 fits.
CascadeRecord run_cascade(const HamiltonianSet& set, const CutoffFamily& fam,
                          double tol = 1e-10, int shell_trials = 120,
                          std::uint64_t seed = 0x5eedcafe01ull);

// JSON (per-level scalars) + binary vectors side file (extension ".bin").
void save_cascade(const CascadeRecord& rec, const std::string& path);
CascadeRecord load_cascade(const std::string& path);

// ---------------------------------------------------------------------------
// Weyl probe (Theorem 2.5): psi = 2^{-1/2} (b+(f) + b+*(f) + b-(h) + b-*(h))
// phi_gs with f, h one-particle wave packets concentrating at energy lambda.
// Width shrinks by 2 per step (weak vanishing realized by support sharpening
// toward the nearest grid node / UV edge on the fixed grid).

struct WeylStep {
    double width = 0.0;     // packet width [GeV]
    double norm = 0.0;      // ||psi|| before normalization
    double residual = 0.0;  // ||(H - E - lambda) psi|| / ||psi||
};

// Throws invalid_argument_error if lambda is not resolvable on the grid
// (outside [0, 1.05 p_max]).  phi_gs/E are computed internally with
// lowest_eigenpairs.
std::vector<WeylStep> weyl_probe(const HamiltonianSet& set, double lambda, int L,
                                 double tol = 1e-10);

}  // namespace zdk
