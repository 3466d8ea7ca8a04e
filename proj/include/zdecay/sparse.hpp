// Sparse matrix plumbing shared by every operator-building module.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

#include "zdecay/constants.hpp"

namespace zdk {

using SpMat = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

// Max-norm of the entries.
double max_abs(const SpMat& m);

// || M - M^dagger ||_max.
double hermiticity_error(const SpMat& m);

// Sparse operator with verified structural flags.
struct SparseHermitian {
    SpMat mat;
    bool hermitian = false;
    bool real = false;

    Eigen::Index dim() const { return mat.rows(); }

    // Builds from triplets and verifies the requested flags
    // (||M - M^dagger||_max <= 1e-13, max |Im| <= 1e-13).
    static SparseHermitian make(Eigen::Index dim, const std::vector<Triplet>& entries,
                                bool expect_hermitian, bool expect_real = false);
    static SparseHermitian wrap(SpMat m, bool expect_hermitian, bool expect_real = false);
};

}  // namespace zdk
