// Truncated Fock space H = F_a (x) F_a (x) F_Z0 (Section 2.1.1): basis
// enumeration and sparse creation/annihilation, second quantization dGamma,
// and number operators.
//
// Conventions:
//  - Fermion modes are globally ordered (all nu modes, then all nubar modes);
//    Jordan-Wigner sign strings cross species, so nu and nubar operators
//    anticommute (the paper's convention).
//  - The boson cap bounds the TOTAL occupation; CCR holds exactly on the
//    sub-basis strictly below the cap.
#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "zdecay/grid.hpp"
#include "zdecay/sparse.hpp"

namespace zdk {

enum class Species { nu, nubar, boson };

struct FockState {
    std::uint32_t nu_mask = 0;
    std::uint32_t nubar_mask = 0;
    std::uint64_t boson_packed = 0;  // 4 bits per mode (cap <= 15, modes <= 16)
};

struct FockBasis {
    ModeGrid grid;
    int nu_cap = 0, nubar_cap = 0, boson_cap = 0;

    // Per-factor enumerations: fermion masks sorted by (popcount, value);
    // boson occupations sorted by (total, lexicographic).  The full basis is
    // the lexicographic product (nu, nubar, boson); index 0 is the vacuum.
    std::vector<std::uint32_t> nu_masks, nubar_masks;
    std::vector<std::vector<std::uint8_t>> boson_occs;

    Eigen::Index dim() const {
        return static_cast<Eigen::Index>(nu_masks.size()) *
               static_cast<Eigen::Index>(nubar_masks.size()) *
               static_cast<Eigen::Index>(boson_occs.size());
    }

    int n_modes(Species s) const;

    FockState state(Eigen::Index idx) const;
    Eigen::Index index(const FockState& st) const;  // -1 if not in the basis

    // Sub-basis indices with total boson occupation < boson_cap (where CCR is
    // exact) and, more generally, <= budget.
    std::vector<Eigen::Index> indices_below_boson_total(int budget) const;

    // Inverse lookup tables (built by build_basis).
    std::unordered_map<std::uint32_t, int> nu_pos, nubar_pos;
    std::unordered_map<std::uint64_t, int> boson_pos;
};

// Enumerates the basis.  Throws resource_limit_error (with the estimated
// dimension in the message) if the dimension exceeds max_dimension.
FockBasis build_basis(const ModeGrid& grid, int nu_cap, int nubar_cap, int boson_cap,
                      Eigen::Index max_dimension = 2'000'000);

// Annihilator/creator pair for one mode.  Fermions satisfy the exact CAR on
// the whole truncated basis (cross-species anticommuting); the boson pair
// satisfies [a, a^+] = 1 on the sub-basis below the cap.
struct LadderPair {
    SpMat annihilate, create;
};
LadderPair ladder(const FockBasis& basis, Species species, int mode);

// Second quantization dGamma(h) = sum_ij h_ij b^+_i b_j (a^+_i a_j for the
// boson species).  h must be square over that species' modes.
SpMat dgamma(const FockBasis& basis, Species species, const Eigen::MatrixXcd& h);

// Number operator of a species (dGamma(Id), assembled directly).
SpMat number_op(const FockBasis& basis, Species species);

// f(dGamma(h1) + dGamma(h2)) for Hermitian one-particle matrices h1 (nu) and
// h2 (nubar), acting as the identity on the boson factor.  Computed exactly by
// Slater rotation: h_j = U_j D_j U_j^*, Gamma(U_j) on the mask enumeration via
// minors det(U[S'|S]) (rotations preserve particle number, so the cap
// truncation is respected exactly), then f applied to the occupied-eigenvalue
// sums.  Entries below drop_tol are discarded.  Used for functions of the
// conjugate operator <A>^{-s}, e^{i eps A} and of the position weight <Q>^{-s}.
SpMat fermion_dgamma_function(const FockBasis& basis, const Eigen::MatrixXcd& h1,
                              const Eigen::MatrixXcd& h2,
                              const std::function<cplx(double)>& f,
                              double drop_tol = 1e-14);

std::uint64_t pack_boson(const std::vector<std::uint8_t>& occ);

}  // namespace zdk
