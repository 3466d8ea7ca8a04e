// Generalized eigenfunctions of the massless Dirac operator (Appendix A)
// and the kernel envelopes of Lemma 3.1.
#pragma once

#include <functional>

#include "zdecay/constants.hpp"

namespace zdk {

// Angular momentum channel (j, m_j, kappa_j).  Half-integers are stored
// doubled: two_j = 2j, two_mj = 2 m_j.  kappa = +-(j + 1/2).
struct Channel {
    int two_j = 1;    // 2j, odd positive
    int two_mj = 1;   // 2 m_j, odd, |two_mj| <= two_j
    int kappa = 1;    // +-(j + 1/2)

    int ell() const { return (two_j + 1) / 2; }       // ell_j = j + 1/2
    int gamma() const { return kappa < 0 ? -kappa : kappa; }  // gamma_j = |kappa_j|

    void validate() const {
        if (two_j < 1 || two_j % 2 == 0) throw invalid_argument_error("two_j must be odd >= 1");
        if (std::abs(two_mj) > two_j || two_mj % 2 == 0)
            throw invalid_argument_error("two_mj must be odd with |m_j| <= j");
        if (std::abs(kappa) != (two_j + 1) / 2)
            throw invalid_argument_error("kappa must be +-(j+1/2)");
    }
};

// Confluent hypergeometric function L(gamma+1, 2gamma+1, z) = 1F1(gamma+1; 2gamma+1; z),
// computed by adaptive Gauss-Legendre quadrature of the integral representation
//
//   1F1(g+1; 2g+1; z) = Gamma(2g+1)/(Gamma(g+1)Gamma(g)) Int_0^1 e^{zu} u^g (1-u)^{g-1} du.
//
// Note: the representation uses the standard exponents u^g (1-u)^{g-1}; the
// weight (1-u)^g printed in the source display does not normalize to
// 1F1(a;b;0) = 1 and is treated as a typo.
cplx confluent_L(double gamma_j, cplx z);

// Radial amplitudes g_{kappa,sign}(p,r), f_{kappa,sign}(p,r) of the
// generalized eigenfunctions.  sign = +1 (positive energy) or -1.
// For kappa = +(j+1/2), sign = +, the explicit sine/cosine integral formulas
// are evaluated; the remaining branches follow from the symmetry relations
//   g_{+,+} = g_{+,-} = f_{-,+} = -f_{-,-},
//   f_{+,+} = -g_{-,+} = -g_{-,-} = -f_{+,-}.
struct RadialWaveValue {
    cplx g, f;
};
RadialWaveValue radial_wave(const Channel& ch, int sign, double p, double r);

// Lemma 3.1 envelopes:
//   A(p,l)  = (2p)^l / Gamma(l) * ( Int |f(r)| r^{2l} (1+p^2 r^2)(1+r^2+r^4) dr )^{1/2}
//   At(p,l) = l(l-1) (2p)^{l-2} / Gamma(l) * ( Int |f(r)| r^{2(l-1)} dr )^{1/2}
// f_cutoff must be compactly supported on [0, Lambda].
struct Envelope {
    double A, A_tilde;
};
Envelope envelope_A(double p, const Channel& ch,
                    const std::function<double(double)>& f_cutoff, double Lambda);

// Pointwise envelope bounds (eq:appA-1) for the (j+1/2,+) branch.
double bound_A1_g(double p, double r, double gamma_j);
double bound_A1_f(double p, double r, double gamma_j);

}  // namespace zdk
