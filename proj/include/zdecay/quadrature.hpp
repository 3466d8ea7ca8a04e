// Gauss-Legendre quadrature with adaptive panel splitting.
#pragma once

#include <functional>
#include <vector>

#include "zdecay/constants.hpp"

namespace zdk {

// Nodes/weights of the N-point Gauss-Legendre rule on [-1, 1].
// Computed by Newton iteration on the Legendre polynomial; cached per N.
struct GaussLegendre {
    std::vector<double> x, w;
    explicit GaussLegendre(int n);
};

const GaussLegendre& gauss_legendre(int n);

// Integrate f over [a,b] with `panels` equal panels of an n-point rule.
double integrate(const std::function<double(double)>& f, double a, double b,
                 int panels = 4, int order = 16);

cplx integrate_c(const std::function<cplx(double)>& f, double a, double b,
                 int panels = 4, int order = 16);

// Panel count proportional to the oscillation scale |z| of exp(i z u) type
// integrands on [0,1] (at least `base` panels).
inline int panels_for_oscillation(double abs_z, int base = 4) {
    int p = static_cast<int>(abs_z / 3.0) + base;
    return p;
}

}  // namespace zdk
