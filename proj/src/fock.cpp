#include "zdecay/fock.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace zdk {

namespace {

// (-1)^(number of occupied modes below i in mask).
int string_sign(std::uint32_t mask, int i) {
    const std::uint32_t below = mask & ((1u << i) - 1u);
    return (std::popcount(below) & 1) ? -1 : 1;
}

std::vector<std::uint32_t> enumerate_masks(int n_modes, int cap) {
    std::vector<std::uint32_t> masks;
    for (std::uint32_t m = 0; m < (1u << n_modes); ++m)
        if (std::popcount(m) <= cap) masks.push_back(m);
    std::sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
        const int pa = std::popcount(a), pb = std::popcount(b);
        return pa != pb ? pa < pb : a < b;
    });
    return masks;
}

void enumerate_occs(int n_modes, int total, int mode, std::vector<std::uint8_t>& cur,
                    std::vector<std::vector<std::uint8_t>>& out) {
    if (mode == n_modes) {
        if (total == 0) out.push_back(cur);
        return;
    }
    for (int v = 0; v <= total; ++v) {
        cur[mode] = static_cast<std::uint8_t>(v);
        enumerate_occs(n_modes, total - v, mode + 1, cur, out);
    }
    cur[mode] = 0;
}

double binom(int n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= static_cast<double>(n - i) / (i + 1);
    return r;
}

}  // namespace

std::uint64_t pack_boson(const std::vector<std::uint8_t>& occ) {
    std::uint64_t key = 0;
    for (std::size_t m = 0; m < occ.size(); ++m) key |= static_cast<std::uint64_t>(occ[m]) << (4 * m);
    return key;
}

int FockBasis::n_modes(Species s) const {
    switch (s) {
        case Species::nu: return static_cast<int>(grid.neutrino_modes.size());
        case Species::nubar: return static_cast<int>(grid.antineutrino_modes.size());
        default: return static_cast<int>(grid.boson_modes.size());
    }
}

FockState FockBasis::state(Eigen::Index idx) const {
    const Eigen::Index nb = static_cast<Eigen::Index>(boson_occs.size());
    const Eigen::Index nnb = static_cast<Eigen::Index>(nubar_masks.size());
    FockState st;
    st.boson_packed = pack_boson(boson_occs[idx % nb]);
    const Eigen::Index f = idx / nb;
    st.nubar_mask = nubar_masks[f % nnb];
    st.nu_mask = nu_masks[f / nnb];
    return st;
}

Eigen::Index FockBasis::index(const FockState& st) const {
    const auto a = nu_pos.find(st.nu_mask);
    const auto b = nubar_pos.find(st.nubar_mask);
    const auto c = boson_pos.find(st.boson_packed);
    if (a == nu_pos.end() || b == nubar_pos.end() || c == boson_pos.end()) return -1;
    return (static_cast<Eigen::Index>(a->second) * static_cast<Eigen::Index>(nubar_masks.size()) +
            b->second) *
               static_cast<Eigen::Index>(boson_occs.size()) +
           c->second;
}

std::vector<Eigen::Index> FockBasis::indices_below_boson_total(int budget) const {
    std::vector<Eigen::Index> out;
    const Eigen::Index nb = static_cast<Eigen::Index>(boson_occs.size());
    for (Eigen::Index i = 0; i < dim(); ++i) {
        const auto& occ = boson_occs[i % nb];
        int total = 0;
        for (auto v : occ) total += v;
        if (total <= budget) out.push_back(i);
    }
    return out;
}

FockBasis build_basis(const ModeGrid& grid, int nu_cap, int nubar_cap, int boson_cap,
                      Eigen::Index max_dimension) {
    grid.validate();
    if (nu_cap < 0 || nubar_cap < 0 || boson_cap < 0)
        throw invalid_argument_error("build_basis: caps must be >= 0");
    const int Mn = static_cast<int>(grid.neutrino_modes.size());
    const int Mb = static_cast<int>(grid.antineutrino_modes.size());
    const int Mz = static_cast<int>(grid.boson_modes.size());
    if (Mn > 32 || Mb > 32) throw resource_limit_error("build_basis: at most 32 fermion modes");
    if (Mz > 16 || boson_cap > 15)
        throw resource_limit_error("build_basis: at most 16 boson modes with cap <= 15");

    // Combinatorial dimension estimate before enumerating anything.
    double est_nu = 0.0, est_nubar = 0.0;
    for (int k = 0; k <= std::min(nu_cap, Mn); ++k) est_nu += binom(Mn, k);
    for (int k = 0; k <= std::min(nubar_cap, Mb); ++k) est_nubar += binom(Mb, k);
    const double est_bos = binom(Mz + boson_cap, boson_cap);
    const double est = est_nu * est_nubar * est_bos;
    if (est > static_cast<double>(max_dimension))
        throw resource_limit_error("build_basis: estimated dimension " + std::to_string(est) +
                                   " exceeds budget " + std::to_string(max_dimension));

    FockBasis basis;
    basis.grid = grid;
    basis.nu_cap = nu_cap;
    basis.nubar_cap = nubar_cap;
    basis.boson_cap = boson_cap;
    basis.nu_masks = enumerate_masks(Mn, nu_cap);
    basis.nubar_masks = enumerate_masks(Mb, nubar_cap);
    std::vector<std::uint8_t> cur(Mz, 0);
    for (int total = 0; total <= boson_cap; ++total)
        enumerate_occs(Mz, total, 0, cur, basis.boson_occs);
    for (std::size_t i = 0; i < basis.nu_masks.size(); ++i)
        basis.nu_pos[basis.nu_masks[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < basis.nubar_masks.size(); ++i)
        basis.nubar_pos[basis.nubar_masks[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < basis.boson_occs.size(); ++i)
        basis.boson_pos[pack_boson(basis.boson_occs[i])] = static_cast<int>(i);
    return basis;
}

LadderPair ladder(const FockBasis& basis, Species species, int mode) {
    if (mode < 0 || mode >= basis.n_modes(species))
        throw invalid_argument_error("ladder: mode index out of range");
    const Eigen::Index dim = basis.dim();
    std::vector<Triplet> trips;
    for (Eigen::Index c = 0; c < dim; ++c) {
        FockState st = basis.state(c);
        if (species == Species::boson) {
            const int occ = static_cast<int>((st.boson_packed >> (4 * mode)) & 0xFull);
            if (occ == 0) continue;
            FockState t = st;
            t.boson_packed -= (1ull << (4 * mode));
            trips.emplace_back(basis.index(t), c, cplx(std::sqrt(static_cast<double>(occ)), 0.0));
        } else {
            std::uint32_t& mask = (species == Species::nu) ? st.nu_mask : st.nubar_mask;
            if (!(mask & (1u << mode))) continue;
            int sign = string_sign(mask, mode);
            // nubar operators carry the cross-species string over all nu modes.
            if (species == Species::nubar && (std::popcount(st.nu_mask) & 1)) sign = -sign;
            mask &= ~(1u << mode);
            trips.emplace_back(basis.index(st), c, cplx(static_cast<double>(sign), 0.0));
        }
    }
    LadderPair lp;
    lp.annihilate.resize(dim, dim);
    lp.annihilate.setFromTriplets(trips.begin(), trips.end());
    lp.create = lp.annihilate.adjoint();
    return lp;
}

SpMat dgamma(const FockBasis& basis, Species species, const Eigen::MatrixXcd& h) {
    const int M = basis.n_modes(species);
    if (h.rows() != M || h.cols() != M)
        throw invalid_argument_error("dgamma: one-particle matrix shape mismatch");
    const Eigen::Index dim = basis.dim();
    std::vector<Triplet> trips;
    for (Eigen::Index c = 0; c < dim; ++c) {
        const FockState st = basis.state(c);
        if (species == Species::boson) {
            for (int j = 0; j < M; ++j) {
                const int occ_j = static_cast<int>((st.boson_packed >> (4 * j)) & 0xFull);
                if (occ_j == 0) continue;
                const double amp1 = std::sqrt(static_cast<double>(occ_j));
                const std::uint64_t mid = st.boson_packed - (1ull << (4 * j));
                for (int i = 0; i < M; ++i) {
                    if (h(i, j) == cplx(0.0, 0.0)) continue;
                    const int occ_i = static_cast<int>((mid >> (4 * i)) & 0xFull);
                    // i == j gives (sqrt(n))^2: use the exact integer.
                    const double amp = (i == j) ? static_cast<double>(occ_j)
                                                : amp1 * std::sqrt(static_cast<double>(occ_i + 1));
                    FockState t = st;
                    t.boson_packed = mid + (1ull << (4 * i));
                    trips.emplace_back(basis.index(t), c, h(i, j) * amp);
                }
            }
        } else {
            const std::uint32_t mask = (species == Species::nu) ? st.nu_mask : st.nubar_mask;
            for (int j = 0; j < M; ++j) {
                if (!(mask & (1u << j))) continue;
                const int sj = string_sign(mask, j);
                const std::uint32_t mid = mask & ~(1u << j);
                for (int i = 0; i < M; ++i) {
                    if (mid & (1u << i)) continue;
                    if (h(i, j) == cplx(0.0, 0.0)) continue;
                    const int si = string_sign(mid, i);
                    FockState t = st;
                    // Cross-species strings from b^+_i and b_j cancel in pairs.
                    if (species == Species::nu)
                        t.nu_mask = mid | (1u << i);
                    else
                        t.nubar_mask = mid | (1u << i);
                    trips.emplace_back(basis.index(t), c,
                                       h(i, j) * static_cast<double>(si * sj));
                }
            }
        }
    }
    SpMat out(dim, dim);
    out.setFromTriplets(trips.begin(), trips.end());
    out.prune([](Eigen::Index, Eigen::Index, const cplx& v) { return std::abs(v) > 0.0; });
    return out;
}

SpMat number_op(const FockBasis& basis, Species species) {
    const Eigen::Index dim = basis.dim();
    std::vector<Triplet> trips;
    for (Eigen::Index c = 0; c < dim; ++c) {
        const FockState st = basis.state(c);
        int n = 0;
        if (species == Species::nu)
            n = std::popcount(st.nu_mask);
        else if (species == Species::nubar)
            n = std::popcount(st.nubar_mask);
        else
            for (int m = 0; m < basis.n_modes(Species::boson); ++m)
                n += static_cast<int>((st.boson_packed >> (4 * m)) & 0xFull);
        if (n > 0) trips.emplace_back(c, c, cplx(static_cast<double>(n), 0.0));
    }
    SpMat out(dim, dim);
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

namespace {

// Gamma(U) on the mask enumeration: column S holds the expansion of the
// rotated Slater state c^+_{k1}...c^+_{kr}|0> (c^+_k = sum_i U_{ik} b^+_i,
// orbitals ascending) over the bare masks S', with coefficient det(U[S'|S]).
Eigen::MatrixXcd slater_rotation(const std::vector<std::uint32_t>& masks,
                                 const Eigen::MatrixXcd& U) {
    const int m = static_cast<int>(masks.size());
    std::vector<std::vector<int>> occ(m);
    for (int r = 0; r < m; ++r)
        for (int i = 0; i < 32; ++i)
            if (masks[r] & (1u << i)) occ[r].push_back(i);
    Eigen::MatrixXcd G = Eigen::MatrixXcd::Zero(m, m);
    for (int c = 0; c < m; ++c) {
        const std::size_t k = occ[c].size();
        for (int r = 0; r < m; ++r) {
            if (occ[r].size() != k) continue;
            if (k == 0) {
                G(r, c) = cplx(1.0, 0.0);
                continue;
            }
            Eigen::MatrixXcd sub(k, k);
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b) sub(a, b) = U(occ[r][a], occ[c][b]);
            G(r, c) = sub.determinant();
        }
    }
    return G;
}

}  // namespace

SpMat fermion_dgamma_function(const FockBasis& basis, const Eigen::MatrixXcd& h1,
                              const Eigen::MatrixXcd& h2,
                              const std::function<cplx(double)>& f, double drop_tol) {
    const int n1 = basis.n_modes(Species::nu), n2 = basis.n_modes(Species::nubar);
    if (h1.rows() != n1 || h1.cols() != n1 || h2.rows() != n2 || h2.cols() != n2)
        throw invalid_argument_error("fermion_dgamma_function: one-particle size mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es1(h1), es2(h2);
    const Eigen::MatrixXcd G1 = slater_rotation(basis.nu_masks, es1.eigenvectors());
    const Eigen::MatrixXcd G2 = slater_rotation(basis.nubar_masks, es2.eigenvectors());

    const int m1 = static_cast<int>(basis.nu_masks.size());
    const int m2 = static_cast<int>(basis.nubar_masks.size());
    const int mf = m1 * m2;
    // Occupied-eigenvalue sums per rotated product state.
    Eigen::VectorXcd fd(mf);
    for (int c1 = 0; c1 < m1; ++c1) {
        double s1 = 0.0;
        for (int i = 0; i < n1; ++i)
            if (basis.nu_masks[c1] & (1u << i)) s1 += es1.eigenvalues()[i];
        for (int c2 = 0; c2 < m2; ++c2) {
            double s2 = s1;
            for (int i = 0; i < n2; ++i)
                if (basis.nubar_masks[c2] & (1u << i)) s2 += es2.eigenvalues()[i];
            fd[c1 * m2 + c2] = f(s2);
        }
    }
    Eigen::MatrixXcd T(mf, mf);
    for (int r1 = 0; r1 < m1; ++r1)
        for (int r2 = 0; r2 < m2; ++r2)
            for (int c1 = 0; c1 < m1; ++c1)
                for (int c2 = 0; c2 < m2; ++c2)
                    T(r1 * m2 + r2, c1 * m2 + c2) = G1(r1, c1) * G2(r2, c2);
    const Eigen::MatrixXcd Ff = T * fd.asDiagonal() * T.adjoint();

    const Eigen::Index nb = static_cast<Eigen::Index>(basis.boson_occs.size());
    std::vector<Triplet> trips;
    for (int r = 0; r < mf; ++r)
        for (int c = 0; c < mf; ++c) {
            const cplx v = Ff(r, c);
            if (std::abs(v) <= drop_tol) continue;
            for (Eigen::Index b = 0; b < nb; ++b)
                trips.emplace_back(static_cast<Eigen::Index>(r) * nb + b,
                                   static_cast<Eigen::Index>(c) * nb + b, v);
        }
    SpMat out(basis.dim(), basis.dim());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

}  // namespace zdk
