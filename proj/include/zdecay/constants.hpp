// Physical constants and common scalar types for the Z0 -> nu nubar decay lab.
//
// Units: energies and momenta in GeV, lengths in GeV^-1 (hbar = c = 1).
#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace zdk {

using cplx = std::complex<double>;

// Thrown when inputs violate an operation precondition.
struct invalid_argument_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when an iterative/numerical procedure fails to reach its target
// accuracy; carries the achieved error estimate in the message.
struct numeric_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when the requested truncation cannot be represented (memory budget,
// grid too coarse for the requested infrared level, ...).
struct resource_limit_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Physical constants of the model (Section 2.1.2 conventions).
struct PhysicalConstants {
    double m_Z = 91.18;    // Z0 mass [GeV]
    double m_W = 80.41;    // W+- mass [GeV]
    double G_F = 1.16e-5;  // Fermi constant [GeV^-2]
    double g = 0.0;        // coupling constant (dimensionless, >= 0)

    double cos_theta() const { return m_W / m_Z; }

    // Physical value of the coupling, from g^2 / (8 m_W^2) = G_F / sqrt(2).
    double g_physical() const { return std::sqrt(8.0 * m_W * m_W * G_F / std::sqrt(2.0)); }

    void validate() const {
        if (g < 0.0) throw invalid_argument_error("coupling g must be >= 0");
        if (!(m_W < m_Z)) throw invalid_argument_error("require m_W < m_Z (cos theta in (0,1))");
    }
};

// Boson dispersion relation omega_3(k) = sqrt(k^2 + m_Z^2).
inline double omega3(double k, double m_Z) { return std::sqrt(k * k + m_Z * m_Z); }

}  // namespace zdk
