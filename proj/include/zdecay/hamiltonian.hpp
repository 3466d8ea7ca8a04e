// H = H0 + g H_I (Definition 2.3) on the truncated Fock basis, the infrared
// cutoff family of Section 3.2 (H_n, K_n, below-cutoff free energy, shell and
// tail interactions), and the relative-bound / pull-through verification
// routines of Section 3 and Appendix B as matrix statements.
//
// Discrete conventions: the kernel table stores weighted entries
// F_ijk sqrt(w_i w_j w_k), and the discrete ladder operators are
// b_i = sqrt(w_i) b(xi_i), so
//   H_I = sum_ijk [ F1w_ijk b+*_i b-*_j a_k + F2w_ijk b+*_i b-*_j a*_k ] + h.c.
// reproduces the continuum quadruple integrals under the quadrature rule.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "zdecay/fock.hpp"
#include "zdecay/kernels.hpp"

namespace zdk {

struct HamiltonianSet {
    FockBasis basis;
    KernelTable table;
    double g = 0.0;
    SparseHermitian HD;   // dGamma(p) over both fermion species
    SparseHermitian HZ0;  // dGamma(omega3)
    SparseHermitian H0;   // HD + HZ0
    SparseHermitian HI;   // H_I^(1) + H_I^(2) + adjoints
    SparseHermitian H;    // H0 + g HI (entrywise exact)
};

// j in {1,2}: the monomial part int F^(j) b+* b-* a^{#}, WITHOUT its adjoint;
// j = 1 carries the boson annihilator, j = 2 the boson creator.
SpMat interaction_monomial(const FockBasis& basis, const KernelTable& table, int j);
SpMat interaction_full(const FockBasis& basis, const KernelTable& table);

// Throws invalid_argument_error on dimension mismatch; hermiticity of every
// assembled operator is verified to 1e-13.
HamiltonianSet assemble(const FockBasis& basis, const KernelTable& table, double g);

// ---------------------------------------------------------------------------
// Infrared cutoff family (Section 3.2): sigma_0 = m_Z, sigma_{n+1} = gamma
// sigma_n, gamma = 1/4.  K_n lives on the sub-basis obtained by DELETING the
// fermion modes with p < sigma_n (paper's F_n factor), so the tensor identity
// H_n = K_n (x) Id + Id (x) Hcheck^n_inf is an exact block statement on pairs
// of full-basis states (see tensor_identity_error).
struct CutoffLevel {
    double sigma = 0.0;

    KernelTable table_n;    // kernel restricted to p1 >= sigma and p2 >= sigma
    SparseHermitian H_n;    // H0 + g H_{I,n} on the full basis

    std::vector<int> keep_nu, keep_nubar;  // modes with p >= sigma
    FockBasis reduced_basis;
    KernelTable reduced_table;
    SparseHermitian K_n;    // on the reduced basis
    SparseHermitian K0_n;   // free part on the reduced basis

    Eigen::VectorXd Hcheck_diag;   // Hcheck^n_inf: below-cutoff free fermion energy
    Eigen::VectorXd H0_next_diag;  // dGamma(1{p >= sigma_{n+1}} p) + H_Z0 (empty on the last level)

    // Shell interaction H_{I,n+1}^n (kernel indicator 1{both >= sigma_{n+1}}
    // - 1{both >= sigma_n}); empty matrices on the last level.
    SpMat shell_mono[2];  // per-j monomials, no h.c.
    SpMat shell_full;     // both j plus adjoints; H_{n+1} - H_n = g shell_full

    // Tail interaction H_{I,infty}^n (kernel support {p1 < sigma} u {p2 < sigma}).
    SpMat tail_mono[2];
    SpMat tail_full;      // H - H_n = g tail_full
};

struct CutoffFamily {
    double sigma0 = 0.0;
    double gamma = 0.25;
    std::vector<CutoffLevel> levels;  // levels[n] at sigma_n = sigma0 gamma^n
    bool truncated = false;           // n_max was reduced (grid does not resolve sigma_n)
};

// Levels are kept while sigma_n >= (smallest fermion mode) (1 - 1e-12); deeper
// levels would all coincide with H and are dropped (truncated flag set).
CutoffFamily cutoff_family(const HamiltonianSet& set, int n_max);

// max-norm error of the entrywise identities H - H_n = g tail_full(n) and
// H_{n+1} - H_n = g shell_full(n), over all levels.
double family_consistency_error(const HamiltonianSet& set, const CutoffFamily& fam);

// max-norm error of shell_full(n) against the sum of the three indicator
// regions of the paper's split of H_{I,n+1}^n:
//   {s' <= p1 < s, s <= p2} + {s <= p1, s' <= p2 < s} + {s' <= p1 < s, s' <= p2 < s}
// (s = sigma_n, s' = sigma_{n+1}), each region assembled independently.
double shell_split_error(const HamiltonianSet& set, const CutoffFamily& fam, int n);

// Exact block identity H_n = K_n (x) Id + Id (x) Hcheck^n_inf under the graded
// split of fermion modes into (p >= sigma) and (p < sigma) factors.  The check
// quantifies over pairs of FULL-basis states (the truncated product basis is
// not a full tensor product at the occupation-cap boundary; pairs whose lift
// is absent from the full basis carry no claim).  Returns the max entrywise
// error over both scan directions (every H_n nonzero, and every K_n nonzero
// lifted by every low-mode occupation signature present in the basis).
double tensor_identity_error(const HamiltonianSet& set, const CutoffFamily& fam, int n);

// ---------------------------------------------------------------------------
// Pull-through (Lemma 3.8): V built directly from the kernel table,
//   V+(m) = - sum_{j2,k} [ F1w(m,j2,k) b-*_{j2} a_k + F2w(m,j2,k) b-*_{j2} a*_k ],
//   V-(m) = + sum_{i,k}  [ F1w(i,m,k) b+*_i   a_k + F2w(i,m,k) b+*_i   a*_k ].
// The j = 2 term carries the boson CREATOR (the printed lemma shows a(xi_3)
// for both j; the CAR derivation forces a* for j = 2), and V- carries the
// opposite overall sign from V+ under the b+* b-* ordering used here.
SpMat pull_through_V(const HamiltonianSet& set, Species species, int mode);

// || H b(m) psi - b(m) H psi + omega(m) b(m) psi - g V(m) psi ||.  Vanishes to
// round-off when psi is supported on states with the pulled species' particle
// number <= cap - 1 (at the cap the truncated CAR has boundary terms).
double pull_through_residual(const HamiltonianSet& set, Species species, int mode,
                             const Eigen::VectorXcd& psi);

// ---------------------------------------------------------------------------
// Random normalized test vectors: Gaussian coefficients over the basis states
// with H0-energy <= emax and species occupation <= max_nu / max_nubar.
Eigen::VectorXcd random_vector(const HamiltonianSet& set, std::mt19937_64& rng,
                               double emax = 1e300, int max_nu = 1 << 30,
                               int max_nubar = 1 << 30);

// Prop 3.2: ||H_I psi||^2 <= 4 sum_j ( C_j ||(H0+1)psi||^2
//            + Ct_j ( (1+eps)||(H0+1)psi||^2 + (1/4eps)||psi||^2 ) )
// with C_j, Ct_j the closed-form constants of eq:defCF from the kernel norms.
struct RelativeBoundReport {
    double max_ratio = 0.0;  // LHS/RHS maximum over trials and eps
    double worst_eps = 0.0;
    int trials = 0;
    bool pass = false;  // max_ratio <= 1
};
RelativeBoundReport prop32_check(const HamiltonianSet& set, const std::vector<double>& eps,
                                 int trials, std::uint64_t seed);

// Appendix B, Lemma B.1 at boson node k_mode, in smeared (weight-carrying)
// form B~ = sqrt(w_k) B(xi_k).  slack[i] = min over trials of RHS - LHS for
// the four displayed inequalities (the first two checked with both p_1 and
// p_2 weights, reporting the tighter).
struct AppendixBReport {
    double slack[4] = {0, 0, 0, 0};
    bool pass = false;  // all slacks >= -1e-12 (relative)
};
AppendixBReport appendixB_check(const HamiltonianSet& set, int k_mode, int trials,
                                std::uint64_t seed);

// Lemma 3.4 fits at level n: smallest (a, b) with
//   ||shell psi|| <= (sigma_n - sigma_{n+1}) ( a ||H_{0,n+1} psi|| + b ||psi|| )
// over the sampled psi (minimizing sigma0 a + 4 b), and the quadratic-form
// version (a_form, b_form) for |<psi, shell psi>|; C_gap = sigma0 a_form
// + 4 b_form enters the cascade gap bound.
struct ShellFit {
    double a = 0.0, b = 0.0;
    double a_form = 0.0, b_form = 0.0;
    double c_gap = 0.0;  // sigma0 a_form + 4 b_form
};
ShellFit fit_shell_bound(const HamiltonianSet& set, const CutoffFamily& fam, int n,
                         int trials, std::uint64_t seed);

// Largest singular value by power iteration on M*M (deterministic start).
double operator_norm(const SpMat& m, int iters = 300, double tol = 1e-12);

// Lemma 3.5: norm[j-1] = || (Hcheck^n_inf)^{-1/2} H_{I,infty}^{(j)n} (N_Z0+1)^{-1/2} ||
// (pseudo-inverse square root; the tail monomial range lies in ran Hcheck).
struct TailNormReport {
    double norm[2] = {0, 0};
};
TailNormReport tail_weighted_norms(const HamiltonianSet& set, const CutoffFamily& fam, int n);

// ---------------------------------------------------------------------------
// Sparse-triplet operator files: 8-byte magic "ZDKSP001", then little-endian
// uint64 dimension, nnz, flags (bit0 hermitian, bit1 real), then nnz records
// of (int64 row, int64 col, float64 re, float64 im).
void save_operator(const SparseHermitian& op, const std::string& path);
SparseHermitian load_operator(const std::string& path);

}  // namespace zdk
