#include "zdecay/sparse.hpp"

#include <cmath>

namespace zdk {

double max_abs(const SpMat& m) {
    double v = 0.0;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
    return v;
}

double hermiticity_error(const SpMat& m) {
    SpMat d = SpMat(m.adjoint()) - m;
    return max_abs(d);
}

SparseHermitian SparseHermitian::wrap(SpMat m, bool expect_hermitian, bool expect_real) {
    if (m.rows() != m.cols()) throw invalid_argument_error("SparseHermitian: matrix must be square");
    SparseHermitian s;
    s.mat = std::move(m);
    s.mat.makeCompressed();
    if (expect_hermitian) {
        const double err = hermiticity_error(s.mat);
        if (err > 1e-13)
            throw numeric_failure("SparseHermitian: hermiticity violated, ||M-M^+||_max = " +
                                  std::to_string(err));
        s.hermitian = true;
    }
    if (expect_real) {
        double im = 0.0;
        for (int k = 0; k < s.mat.outerSize(); ++k)
            for (SpMat::InnerIterator it(s.mat, k); it; ++it)
                im = std::max(im, std::abs(it.value().imag()));
        if (im > 1e-13)
            throw numeric_failure("SparseHermitian: realness violated, max|Im| = " +
                                  std::to_string(im));
        s.real = true;
    }
    return s;
}

SparseHermitian SparseHermitian::make(Eigen::Index dim, const std::vector<Triplet>& entries,
                                      bool expect_hermitian, bool expect_real) {
    SpMat m(dim, dim);
    m.setFromTriplets(entries.begin(), entries.end());
    return wrap(std::move(m), expect_hermitian, expect_real);
}

}  // namespace zdk
