#include "zdecay/grid.hpp"

#include <cmath>

namespace zdk {

namespace {

void check_increasing(const std::vector<double>& nodes, const std::vector<double>& weights,
                      const char* what) {
    double prev = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!(nodes[i] > prev))
            throw invalid_argument_error(std::string(what) +
                                         ": grid must be strictly increasing with first node > 0");
        if (!(weights[i] > 0.0))
            throw invalid_argument_error(std::string(what) + ": weights must be > 0");
        prev = nodes[i];
    }
}

}  // namespace

void ModeGrid::validate() const {
    if (neutrino_modes.empty() || antineutrino_modes.empty() || boson_modes.empty())
        throw invalid_argument_error("ModeGrid: every species needs at least one mode");
    std::vector<double> n, w;
    for (const auto& m : neutrino_modes) {
        n.push_back(m.p);
        w.push_back(m.w);
        m.channel.validate();
    }
    check_increasing(n, w, "neutrino grid");
    n.clear();
    w.clear();
    for (const auto& m : antineutrino_modes) {
        n.push_back(m.p);
        w.push_back(m.w);
        m.channel.validate();
    }
    check_increasing(n, w, "antineutrino grid");
    n.clear();
    w.clear();
    for (const auto& m : boson_modes) {
        if (m.lambda < -1 || m.lambda > 1)
            throw invalid_argument_error("boson polarization must be in {-1,0,1}");
        n.push_back(m.k);
        w.push_back(m.w);
    }
    check_increasing(n, w, "boson grid");
    // 1-ulp tolerance: the top geometric node may land on p_max.
    const double tol = 1.0 + 1e-12;
    if (!(neutrino_modes.back().p <= p_max * tol) ||
        !(antineutrino_modes.back().p <= p_max * tol))
        throw invalid_argument_error("fermion grid exceeds p_max");
    if (!(boson_modes.back().k <= k_max * tol))
        throw invalid_argument_error("boson grid exceeds k_max");
}

GridCells geometric_cells(double p_min, double p_max, int n) {
    if (!(p_min > 0.0) || !(p_max > p_min) || n < 1)
        throw invalid_argument_error("geometric_cells: need 0 < p_min < p_max and n >= 1");
    GridCells g;
    g.nodes.resize(n);
    g.weights.resize(n);
    const double ratio = (n == 1) ? 1.0 : std::pow(p_max / p_min, 1.0 / (n - 1));
    for (int i = 0; i < n; ++i) g.nodes[i] = p_min * std::pow(ratio, i);
    std::vector<double> c(n + 1);
    c[0] = 0.0;
    for (int i = 1; i < n; ++i) c[i] = std::sqrt(g.nodes[i - 1] * g.nodes[i]);
    c[n] = g.nodes[n - 1] * std::sqrt(ratio);
    for (int i = 0; i < n; ++i) g.weights[i] = c[i + 1] - c[i];
    return g;
}

ModeGrid default_grid(int n_fermion, int n_boson, const PhysicalConstants& pc) {
    if (n_fermion < 2) throw invalid_argument_error("default_grid: need >= 2 fermion modes");
    if (n_boson < 1) throw invalid_argument_error("default_grid: need >= 1 boson mode");
    ModeGrid grid;
    const GridCells fc = geometric_cells(pc.m_Z / 256.0, 2.0 * pc.m_Z, n_fermion);
    // m_j(nubar) = -1/2 so the pair couples to the lambda = 0 boson
    // (psi~_- flips m_j; J_z conservation needs the flipped m_j to match).
    Channel nu{1, 1, 1}, nubar{1, -1, -1};
    for (int i = 0; i < n_fermion; ++i) {
        grid.neutrino_modes.push_back({fc.nodes[i], fc.weights[i], nu});
        grid.antineutrino_modes.push_back({fc.nodes[i], fc.weights[i], nubar});
    }
    const GridCells bc = geometric_cells(pc.m_Z / 8.0, 1.5 * pc.m_Z, n_boson);
    for (int i = 0; i < n_boson; ++i) grid.boson_modes.push_back({bc.nodes[i], bc.weights[i], 0});
    grid.p_max = 2.0 * pc.m_Z;
    grid.k_max = 1.5 * pc.m_Z;
    grid.validate();
    return grid;
}

}  // namespace zdk
