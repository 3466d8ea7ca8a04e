#include "zdecay/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace zdk {

GaussLegendre::GaussLegendre(int n) {
    if (n < 1) throw invalid_argument_error("Gauss-Legendre order must be >= 1");
    x.resize(n);
    w.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Chebyshev initial guess for the i-th root of P_n.
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            // Evaluate P_n(z) and P_n'(z) by recurrence.
            double p0 = 1.0, p1 = 0.0;
            for (int k = 0; k < n; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k + 1.0) * z * p1 - k * p2) / (k + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
}

const GaussLegendre& gauss_legendre(int n) {
    static std::map<int, GaussLegendre> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, GaussLegendre(n)).first;
    return it->second;
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 int panels, int order) {
    const GaussLegendre& gl = gauss_legendre(order);
    double total = 0.0;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        for (int i = 0; i < order; ++i)
            total += 0.5 * h * gl.w[i] * f(lo + 0.5 * h * (gl.x[i] + 1.0));
    }
    return total;
}

cplx integrate_c(const std::function<cplx(double)>& f, double a, double b,
                 int panels, int order) {
    const GaussLegendre& gl = gauss_legendre(order);
    cplx total = 0.0;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        for (int i = 0; i < order; ++i)
            total += 0.5 * h * gl.w[i] * f(lo + 0.5 * h * (gl.x[i] + 1.0));
    }
    return total;
}

}  // namespace zdk
