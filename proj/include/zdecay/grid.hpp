// Radial mode grids for the one-particle spaces (Section 2.1.1 at finite
// truncation): L^2(R_+ x Gamma) per fermion species, radial x polarization
// for the boson.  The continuum delta(xi - xi') is realized as the Kronecker
// delta_ij / w_i; smeared operators carry sqrt(w_i) factors.
#pragma once

#include <vector>

#include "zdecay/constants.hpp"
#include "zdecay/partialwave.hpp"

namespace zdk {

struct FermionMode {
    double p = 0.0;  // radial momentum node [GeV]
    double w = 0.0;  // quadrature weight [GeV]
    Channel channel;
};

struct BosonMode {
    double k = 0.0;  // |k| node [GeV]
    double w = 0.0;  // quadrature weight [GeV]
    int lambda = 0;  // polarization in {-1, 0, 1}
};

struct ModeGrid {
    std::vector<FermionMode> neutrino_modes;
    std::vector<FermionMode> antineutrino_modes;
    std::vector<BosonMode> boson_modes;
    double p_max = 0.0;
    double k_max = 0.0;

    void validate() const;
};

// Geometric nodes p_min, ..., p_max (n points) with midpoint-cell weights:
// cell boundaries c_0 = 0, c_i = sqrt(p_{i-1} p_i), c_n = p_{n-1} sqrt(R),
// where R is the common ratio; weight w_i = c_{i+1} - c_i.
struct GridCells {
    std::vector<double> nodes, weights;
};
GridCells geometric_cells(double p_min, double p_max, int n);

// Default desk-scale grid: n_fermion radial modes per species on a geometric
// grid [m_Z/256, 2 m_Z] with the j = 1/2 channels (kappa = +1 for nu,
// kappa = -1 for nubar, m_j = +1/2), and n_boson modes on [m_Z/8, 1.5 m_Z]
// with lambda = 0.
ModeGrid default_grid(int n_fermion, int n_boson, const PhysicalConstants& pc);

}  // namespace zdk
