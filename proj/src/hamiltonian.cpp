#include "zdecay/hamiltonian.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <unordered_map>

namespace zdk {

namespace {

// Keep-side mode predicate shared by every restriction, with a 1-ulp style
// tolerance so a mode sitting exactly on sigma counts as "above".
bool mode_above(double p, double sigma) { return p >= sigma * (1.0 - 1e-12); }

Eigen::MatrixXcd diag_matrix(const Eigen::VectorXd& d) {
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(d.size(), d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Eigen::VectorXd fermion_energies(const std::vector<FermionMode>& modes,
                                 const std::function<double(double)>& f) {
    Eigen::VectorXd d(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i) d[static_cast<Eigen::Index>(i)] = f(modes[i].p);
    return d;
}

// Fermion sub-grid: keep the listed mode indices of both species, bosons
// unchanged; quadrature weights stay those of the full grid.
KernelTable subtable(const KernelTable& t, const std::vector<int>& keep1,
                     const std::vector<int>& keep2) {
    KernelTable s;
    s.grid.boson_modes = t.grid.boson_modes;
    for (int i : keep1) s.grid.neutrino_modes.push_back(t.grid.neutrino_modes[i]);
    for (int j : keep2) s.grid.antineutrino_modes.push_back(t.grid.antineutrino_modes[j]);
    s.grid.p_max = t.grid.p_max;
    s.grid.k_max = t.grid.k_max;
    s.grid.validate();
    s.n1 = static_cast<int>(keep1.size());
    s.n2 = static_cast<int>(keep2.size());
    s.n3 = t.n3;
    s.m_Z = t.m_Z;
    s.mode = t.mode;
    s.has_derivatives = t.has_derivatives;
    const std::size_t total = static_cast<std::size_t>(s.n1) * s.n2 * s.n3;
    for (int j = 0; j < 2; ++j) {
        s.F[j].resize(total);
        if (s.has_derivatives) {
            s.dp1[j].resize(total);
            s.dp2[j].resize(total);
            s.dp1p1[j].resize(total);
            s.dp2p2[j].resize(total);
        }
        for (int a = 0; a < s.n1; ++a)
            for (int b = 0; b < s.n2; ++b)
                for (int k = 0; k < s.n3; ++k) {
                    const std::size_t src = t.idx(keep1[a], keep2[b], k);
                    const std::size_t dst = s.idx(a, b, k);
                    s.F[j][dst] = t.F[j][src];
                    if (s.has_derivatives) {
                        s.dp1[j][dst] = t.dp1[j][src];
                        s.dp2[j][dst] = t.dp2[j][src];
                        s.dp1p1[j][dst] = t.dp1p1[j][src];
                        s.dp2p2[j][dst] = t.dp2p2[j][src];
                    }
                }
    }
    return s;
}

void push_nonzeros(const SpMat& m, std::vector<Triplet>& out) {
    for (int c = 0; c < m.outerSize(); ++c)
        for (SpMat::InnerIterator it(m, c); it; ++it)
            if (it.value() != cplx(0.0, 0.0)) out.emplace_back(it.row(), it.col(), it.value());
}

// Tensor-split bookkeeping for one cutoff level: the graded isomorphism
// F(low + high) ~ F(high) (x) F(low).  With the basis ordering (nu low, nu
// high, nubar low, nubar high) and the target ordering (nu high, nubar high,
// nu low, nubar low), the reordering sign is
//   (-1)^{ a_l a_h + a_l bbar_h + bbar_l bbar_h }
// (a = nu occupation, bbar = nubar occupation, l/h = below/above sigma).
struct SplitMaps {
    std::vector<Eigen::Index> reduced_index;  // full idx -> K_n basis idx
    std::vector<std::uint64_t> low_sig;       // (low nu mask) | (low nubar mask)<<32
    std::vector<double> sign;
};

SplitMaps make_split(const FockBasis& full, const FockBasis& reduced,
                     const std::vector<int>& keep_nu, const std::vector<int>& keep_nubar) {
    const int nn = full.n_modes(Species::nu);
    const int nb = full.n_modes(Species::nubar);
    std::vector<int> pos_nu(nn, -1), pos_nubar(nb, -1);
    for (std::size_t a = 0; a < keep_nu.size(); ++a) pos_nu[keep_nu[a]] = static_cast<int>(a);
    for (std::size_t a = 0; a < keep_nubar.size(); ++a)
        pos_nubar[keep_nubar[a]] = static_cast<int>(a);

    auto split_mask = [](std::uint32_t mask, const std::vector<int>& pos, int n) {
        std::uint32_t hi = 0, lo = 0;
        for (int i = 0; i < n; ++i)
            if (mask & (1u << i)) {
                if (pos[i] >= 0)
                    hi |= 1u << pos[i];
                else
                    lo |= 1u << i;
            }
        return std::pair<std::uint32_t, std::uint32_t>(hi, lo);
    };

    SplitMaps sm;
    const Eigen::Index dim = full.dim();
    sm.reduced_index.resize(dim);
    sm.low_sig.resize(dim);
    sm.sign.resize(dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        const FockState st = full.state(r);
        auto [hn, ln] = split_mask(st.nu_mask, pos_nu, nn);
        auto [hb, lb] = split_mask(st.nubar_mask, pos_nubar, nb);
        const Eigen::Index red = reduced.index({hn, hb, st.boson_packed});
        if (red < 0) throw numeric_failure("tensor split: reduced state missing");
        sm.reduced_index[r] = red;
        sm.low_sig[r] = static_cast<std::uint64_t>(ln) |
                        (static_cast<std::uint64_t>(lb) << 32);
        const int al = std::popcount(ln), ah = std::popcount(hn);
        const int bl = std::popcount(lb), bh = std::popcount(hb);
        sm.sign[r] = ((al * ah + al * bh + bl * bh) % 2 == 0) ? 1.0 : -1.0;
    }
    return sm;
}

std::pair<double, double> fit_two_term(const std::vector<double>& x, const std::vector<double>& y,
                                       double wa, double wb) {
    // Minimize wa*a + wb*b subject to a*x_t + b >= y_t, a >= 0, b >= 0.
    const std::size_t n = x.size();
    auto feasible = [&](double a, double b) {
        for (std::size_t t = 0; t < n; ++t)
            if (a * x[t] + b < y[t] * (1.0 - 1e-12) - 1e-300) return false;
        return true;
    };
    double best_a = 0.0, best_b = 0.0, best = std::numeric_limits<double>::infinity();
    auto consider = [&](double a, double b) {
        if (!(a >= 0.0) || !(b >= 0.0) || !feasible(a, b)) return;
        const double obj = wa * a + wb * b;
        if (obj < best) {
            best = obj;
            best_a = a;
            best_b = b;
        }
    };
    double ymax = 0.0, rmax = 0.0;
    bool a_only_ok = true;
    for (std::size_t t = 0; t < n; ++t) {
        ymax = std::max(ymax, y[t]);
        if (x[t] > 0.0)
            rmax = std::max(rmax, y[t] / x[t]);
        else if (y[t] > 0.0)
            a_only_ok = false;
    }
    consider(0.0, ymax);
    if (a_only_ok) consider(rmax, 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t u = t + 1; u < n; ++u) {
            if (x[t] == x[u]) continue;
            const double a = (y[t] - y[u]) / (x[t] - x[u]);
            const double b = y[t] - a * x[t];
            consider(a, b);
        }
    // Absorb any residual (tolerance-level) violation into b.
    double viol = 0.0;
    for (std::size_t t = 0; t < n; ++t)
        viol = std::max(viol, y[t] - (best_a * x[t] + best_b));
    return {best_a, best_b + std::max(0.0, viol)};
}

struct Header {
    char magic[8];
    std::uint64_t dim, nnz, flags;
};

}  // namespace

SpMat interaction_monomial(const FockBasis& basis, const KernelTable& table, int j) {
    if (j != 1 && j != 2) throw invalid_argument_error("interaction_monomial: j must be 1 or 2");
    const int n1 = table.n1, n2 = table.n2, n3 = table.n3;
    if (n1 != basis.n_modes(Species::nu) || n2 != basis.n_modes(Species::nubar) ||
        n3 != basis.n_modes(Species::boson))
        throw invalid_argument_error("interaction_monomial: table/basis dimension mismatch");
    const Eigen::Index dim = basis.dim();
    const std::vector<cplx>& Fw = table.F[j - 1];

    std::vector<SpMat> cre_nu(n1), cre_nubar(n2), bos(n3);
    for (int i = 0; i < n1; ++i) cre_nu[i] = ladder(basis, Species::nu, i).create;
    for (int b = 0; b < n2; ++b) cre_nubar[b] = ladder(basis, Species::nubar, b).create;
    for (int k = 0; k < n3; ++k) {
        const LadderPair lp = ladder(basis, Species::boson, k);
        bos[k] = (j == 1) ? lp.annihilate : lp.create;
    }

    std::vector<Triplet> trips;
    for (int i = 0; i < n1; ++i)
        for (int b = 0; b < n2; ++b) {
            bool any = false;
            for (int k = 0; k < n3; ++k)
                if (Fw[table.idx(i, b, k)] != cplx(0.0, 0.0)) any = true;
            if (!any) continue;
            const SpMat P = SpMat(cre_nu[i] * cre_nubar[b]);
            std::vector<Triplet> qt;
            for (int k = 0; k < n3; ++k) {
                const cplx c = Fw[table.idx(i, b, k)];
                if (c == cplx(0.0, 0.0)) continue;
                for (int col = 0; col < bos[k].outerSize(); ++col)
                    for (SpMat::InnerIterator it(bos[k], col); it; ++it)
                        qt.emplace_back(it.row(), it.col(), c * it.value());
            }
            SpMat Q(dim, dim);
            Q.setFromTriplets(qt.begin(), qt.end());
            push_nonzeros(SpMat(P * Q), trips);
        }
    SpMat m(dim, dim);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

SpMat interaction_full(const FockBasis& basis, const KernelTable& table) {
    SpMat m = interaction_monomial(basis, table, 1) + interaction_monomial(basis, table, 2);
    return SpMat(m + SpMat(m.adjoint()));
}

HamiltonianSet assemble(const FockBasis& basis, const KernelTable& table, double g) {
    if (table.n1 != basis.n_modes(Species::nu) || table.n2 != basis.n_modes(Species::nubar) ||
        table.n3 != basis.n_modes(Species::boson))
        throw invalid_argument_error("assemble: table/basis dimension mismatch");
    HamiltonianSet set;
    set.basis = basis;
    set.table = table;
    set.g = g;

    auto id = [](double p) { return p; };
    const SpMat hd = dgamma(basis, Species::nu,
                            diag_matrix(fermion_energies(basis.grid.neutrino_modes, id))) +
                     dgamma(basis, Species::nubar,
                            diag_matrix(fermion_energies(basis.grid.antineutrino_modes, id)));
    set.HD = SparseHermitian::wrap(hd, true, true);

    Eigen::VectorXd wz(basis.n_modes(Species::boson));
    for (int k = 0; k < basis.n_modes(Species::boson); ++k)
        wz[k] = omega3(basis.grid.boson_modes[k].k, table.m_Z);
    set.HZ0 = SparseHermitian::wrap(dgamma(basis, Species::boson, diag_matrix(wz)), true, true);

    set.H0 = SparseHermitian::wrap(SpMat(set.HD.mat + set.HZ0.mat), true, true);
    set.HI = SparseHermitian::wrap(interaction_full(basis, table), true, false);
    set.H = SparseHermitian::wrap(SpMat(set.H0.mat + g * set.HI.mat), true, false);
    return set;
}

CutoffFamily cutoff_family(const HamiltonianSet& set, int n_max) {
    if (n_max < 0) throw invalid_argument_error("cutoff_family: n_max must be >= 0");
    const FockBasis& basis = set.basis;
    const KernelTable& table = set.table;
    CutoffFamily fam;
    fam.sigma0 = table.m_Z;
    fam.gamma = 0.25;

    double p_min = std::numeric_limits<double>::infinity();
    for (const auto& m : basis.grid.neutrino_modes) p_min = std::min(p_min, m.p);
    for (const auto& m : basis.grid.antineutrino_modes) p_min = std::min(p_min, m.p);

    // A level is useful while sigma_n >= p_min (otherwise K_n = H and all
    // deeper levels coincide).
    auto keep_level = [&](int n) {
        const double s = fam.sigma0 * std::pow(fam.gamma, n);
        return s >= p_min * (1.0 - 1e-12);
    };

    for (int n = 0; n <= n_max; ++n) {
        if (!keep_level(n)) {
            fam.truncated = true;
            std::cerr << "cutoff_family: grid does not resolve sigma_" << n
                      << "; stopping at " << fam.levels.size() << " level(s)\n";
            break;
        }
        CutoffLevel lv;
        lv.sigma = fam.sigma0 * std::pow(fam.gamma, n);
        const double s = lv.sigma;
        lv.table_n = restrict_kernel(
            table, [s](double p1, double p2) { return mode_above(p1, s) && mode_above(p2, s); });
        lv.H_n = SparseHermitian::wrap(
            SpMat(set.H0.mat + set.g * interaction_full(basis, lv.table_n)), true, false);

        for (int i = 0; i < basis.n_modes(Species::nu); ++i)
            if (mode_above(basis.grid.neutrino_modes[i].p, s)) lv.keep_nu.push_back(i);
        for (int i = 0; i < basis.n_modes(Species::nubar); ++i)
            if (mode_above(basis.grid.antineutrino_modes[i].p, s)) lv.keep_nubar.push_back(i);
        if (lv.keep_nu.empty() || lv.keep_nubar.empty())
            throw numeric_failure("cutoff_family: no fermion modes above sigma");

        lv.reduced_table = subtable(table, lv.keep_nu, lv.keep_nubar);
        lv.reduced_basis = build_basis(lv.reduced_table.grid, basis.nu_cap, basis.nubar_cap,
                                       basis.boson_cap);
        {
            const HamiltonianSet rset = assemble(lv.reduced_basis, lv.reduced_table, set.g);
            lv.K_n = rset.H;
            lv.K0_n = rset.H0;
        }

        auto below = [s](double p) { return mode_above(p, s) ? 0.0 : p; };
        lv.Hcheck_diag =
            SpMat(dgamma(basis, Species::nu,
                         diag_matrix(fermion_energies(basis.grid.neutrino_modes, below))) +
                  dgamma(basis, Species::nubar,
                         diag_matrix(fermion_energies(basis.grid.antineutrino_modes, below))))
                .diagonal()
                .real();

        const bool have_next = (n + 1 <= n_max) && keep_level(n + 1);
        if (have_next) {
            const double sp = s * fam.gamma;
            auto above_next = [sp](double p) { return mode_above(p, sp) ? p : 0.0; };
            lv.H0_next_diag =
                SpMat(dgamma(basis, Species::nu,
                             diag_matrix(
                                 fermion_energies(basis.grid.neutrino_modes, above_next))) +
                      dgamma(basis, Species::nubar,
                             diag_matrix(fermion_energies(basis.grid.antineutrino_modes,
                                                          above_next))))
                    .diagonal()
                    .real() +
                Eigen::VectorXd(set.HZ0.mat.diagonal().real());
            const KernelTable shell_table = restrict_kernel(table, [s, sp](double p1, double p2) {
                return mode_above(p1, sp) && mode_above(p2, sp) &&
                       !(mode_above(p1, s) && mode_above(p2, s));
            });
            lv.shell_mono[0] = interaction_monomial(basis, shell_table, 1);
            lv.shell_mono[1] = interaction_monomial(basis, shell_table, 2);
            lv.shell_full = interaction_full(basis, shell_table);
        }

        const KernelTable tail_table = restrict_kernel(table, [s](double p1, double p2) {
            return !(mode_above(p1, s) && mode_above(p2, s));
        });
        lv.tail_mono[0] = interaction_monomial(basis, tail_table, 1);
        lv.tail_mono[1] = interaction_monomial(basis, tail_table, 2);
        lv.tail_full = interaction_full(basis, tail_table);

        fam.levels.push_back(std::move(lv));
    }
    if (fam.levels.empty()) throw numeric_failure("cutoff_family: no resolvable levels");
    return fam;
}

double family_consistency_error(const HamiltonianSet& set, const CutoffFamily& fam) {
    double err = 0.0;
    for (std::size_t n = 0; n < fam.levels.size(); ++n) {
        const CutoffLevel& lv = fam.levels[n];
        err = std::max(err, max_abs(SpMat(set.H.mat - lv.H_n.mat - set.g * lv.tail_full)));
        if (n + 1 < fam.levels.size()) {
            const CutoffLevel& nx = fam.levels[n + 1];
            err = std::max(err,
                           max_abs(SpMat(nx.H_n.mat - lv.H_n.mat - set.g * lv.shell_full)));
        }
    }
    return err;
}

double shell_split_error(const HamiltonianSet& set, const CutoffFamily& fam, int n) {
    if (n < 0 || n + 1 >= static_cast<int>(fam.levels.size()))
        throw invalid_argument_error("shell_split_error: level has no shell");
    const double s = fam.levels[n].sigma;
    const double sp = s * fam.gamma;
    auto assemble_region = [&](const std::function<bool(double, double)>& reg) {
        return interaction_full(set.basis, restrict_kernel(set.table, reg));
    };
    const SpMat A = assemble_region([s, sp](double p1, double p2) {
        return mode_above(p1, sp) && !mode_above(p1, s) && mode_above(p2, s);
    });
    const SpMat B = assemble_region([s, sp](double p1, double p2) {
        return mode_above(p1, s) && mode_above(p2, sp) && !mode_above(p2, s);
    });
    const SpMat C = assemble_region([s, sp](double p1, double p2) {
        return mode_above(p1, sp) && !mode_above(p1, s) && mode_above(p2, sp) &&
               !mode_above(p2, s);
    });
    return max_abs(SpMat(fam.levels[n].shell_full - A - B - C));
}

double tensor_identity_error(const HamiltonianSet& set, const CutoffFamily& fam, int n) {
    if (n < 0 || n >= static_cast<int>(fam.levels.size()))
        throw invalid_argument_error("tensor_identity_error: bad level");
    const CutoffLevel& lv = fam.levels[n];
    const SplitMaps sm = make_split(set.basis, lv.reduced_basis, lv.keep_nu, lv.keep_nubar);

    std::unordered_map<std::uint64_t, cplx> kmap, hmap;
    const Eigen::Index kdim = lv.reduced_basis.dim();
    auto key = [](Eigen::Index r, Eigen::Index c, Eigen::Index dim) {
        return static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(dim) +
               static_cast<std::uint64_t>(c);
    };
    for (int c = 0; c < lv.K_n.mat.outerSize(); ++c)
        for (SpMat::InnerIterator it(lv.K_n.mat, c); it; ++it)
            kmap[key(it.row(), it.col(), kdim)] = it.value();

    const Eigen::Index dim = set.basis.dim();
    double err = 0.0;
    for (int c = 0; c < lv.H_n.mat.outerSize(); ++c)
        for (SpMat::InnerIterator it(lv.H_n.mat, c); it; ++it) {
            const Eigen::Index r = it.row(), cc = it.col();
            hmap[key(r, cc, dim)] = it.value();
            cplx expect(0.0, 0.0);
            if (sm.low_sig[r] == sm.low_sig[cc]) {
                auto f = kmap.find(key(sm.reduced_index[r], sm.reduced_index[cc], kdim));
                if (f != kmap.end()) expect = sm.sign[r] * sm.sign[cc] * f->second;
                if (r == cc) expect += lv.Hcheck_diag[r];
            }
            err = std::max(err, std::abs(it.value() - expect));
        }

    // Opposite direction: lift every K_n entry by every low signature present.
    std::unordered_map<std::uint64_t, std::size_t> sig_id;
    for (Eigen::Index r = 0; r < dim; ++r)
        sig_id.emplace(sm.low_sig[r], sig_id.size());
    const std::size_t n_sigs = sig_id.size();
    std::unordered_map<std::uint64_t, Eigen::Index> lift;  // (reduced idx, sig id) -> full idx
    auto lift_key = [n_sigs](Eigen::Index red, std::size_t sid) {
        return static_cast<std::uint64_t>(red) * n_sigs + sid;
    };
    for (Eigen::Index r = 0; r < dim; ++r)
        lift[lift_key(sm.reduced_index[r], sig_id.at(sm.low_sig[r]))] = r;
    for (const auto& [kk, v] : kmap) {
        const Eigen::Index p = static_cast<Eigen::Index>(kk / kdim);
        const Eigen::Index q = static_cast<Eigen::Index>(kk % kdim);
        for (std::size_t sid = 0; sid < n_sigs; ++sid) {
            auto fr = lift.find(lift_key(p, sid));
            auto fc = lift.find(lift_key(q, sid));
            if (fr == lift.end() || fc == lift.end()) continue;  // cap-boundary: no claim
            const Eigen::Index r = fr->second, c = fc->second;
            cplx expect = sm.sign[r] * sm.sign[c] * v;
            if (r == c) expect += lv.Hcheck_diag[r];
            auto fh = hmap.find(key(r, c, dim));
            const cplx got = (fh == hmap.end()) ? cplx(0.0, 0.0) : fh->second;
            err = std::max(err, std::abs(got - expect));
        }
    }
    return err;
}

SpMat pull_through_V(const HamiltonianSet& set, Species species, int mode) {
    const FockBasis& basis = set.basis;
    const KernelTable& t = set.table;
    const Eigen::Index dim = basis.dim();
    std::vector<Triplet> trips;
    std::vector<SpMat> bos_a(t.n3), bos_c(t.n3);
    for (int k = 0; k < t.n3; ++k) {
        const LadderPair lp = ladder(basis, Species::boson, k);
        bos_a[k] = lp.annihilate;
        bos_c[k] = lp.create;
    }
    auto add_terms = [&](const SpMat& cre, const cplx& c1, const cplx& c2, int k) {
        if (c1 != cplx(0.0, 0.0)) push_nonzeros(SpMat(c1 * (cre * bos_a[k])), trips);
        if (c2 != cplx(0.0, 0.0)) push_nonzeros(SpMat(c2 * (cre * bos_c[k])), trips);
    };
    if (species == Species::nu) {
        if (mode < 0 || mode >= t.n1) throw invalid_argument_error("pull_through_V: bad mode");
        for (int b = 0; b < t.n2; ++b) {
            const SpMat cre = ladder(basis, Species::nubar, b).create;
            for (int k = 0; k < t.n3; ++k)
                add_terms(cre, -t.F[0][t.idx(mode, b, k)], -t.F[1][t.idx(mode, b, k)], k);
        }
    } else if (species == Species::nubar) {
        if (mode < 0 || mode >= t.n2) throw invalid_argument_error("pull_through_V: bad mode");
        for (int i = 0; i < t.n1; ++i) {
            const SpMat cre = ladder(basis, Species::nu, i).create;
            for (int k = 0; k < t.n3; ++k)
                add_terms(cre, t.F[0][t.idx(i, mode, k)], t.F[1][t.idx(i, mode, k)], k);
        }
    } else {
        throw invalid_argument_error("pull_through_V: species must be a fermion");
    }
    SpMat v(dim, dim);
    v.setFromTriplets(trips.begin(), trips.end());
    return v;
}

double pull_through_residual(const HamiltonianSet& set, Species species, int mode,
                             const Eigen::VectorXcd& psi) {
    if (species != Species::nu && species != Species::nubar)
        throw invalid_argument_error("pull_through_residual: species must be a fermion");
    if (psi.size() != set.basis.dim())
        throw invalid_argument_error("pull_through_residual: psi dimension mismatch");
    const double omega = (species == Species::nu)
                             ? set.basis.grid.neutrino_modes[mode].p
                             : set.basis.grid.antineutrino_modes[mode].p;
    const SpMat b = ladder(set.basis, species, mode).annihilate;
    const SpMat V = pull_through_V(set, species, mode);
    const Eigen::VectorXcd bpsi = b * psi;
    const Eigen::VectorXcd resid = Eigen::VectorXcd(set.H.mat * bpsi) -
                                   Eigen::VectorXcd(b * Eigen::VectorXcd(set.H.mat * psi)) +
                                   omega * bpsi - set.g * Eigen::VectorXcd(V * psi);
    return resid.norm();
}

Eigen::VectorXcd random_vector(const HamiltonianSet& set, std::mt19937_64& rng, double emax,
                               int max_nu, int max_nubar) {
    const Eigen::VectorXd diag = set.H0.mat.diagonal().real();
    const Eigen::Index dim = set.basis.dim();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index r = 0; r < dim; ++r) {
        const FockState st = set.basis.state(r);
        if (diag[r] <= emax && std::popcount(st.nu_mask) <= max_nu &&
            std::popcount(st.nubar_mask) <= max_nubar)
            keep.push_back(r);
    }
    if (keep.empty()) throw invalid_argument_error("random_vector: empty selection");
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim);
    for (Eigen::Index r : keep) psi[r] = cplx(gauss(rng), gauss(rng));
    psi /= psi.norm();
    return psi;
}

RelativeBoundReport prop32_check(const HamiltonianSet& set, const std::vector<double>& eps,
                                 int trials, std::uint64_t seed) {
    if (eps.empty() || trials < 1) throw invalid_argument_error("prop32_check: bad arguments");
    std::mt19937_64 rng(seed);
    const double C1 = set.table.CF(1), C2 = set.table.CF(2);
    const double Ct1 = set.table.CF_tilde(1), Ct2 = set.table.CF_tilde(2);
    RelativeBoundReport rep;
    rep.trials = trials;
    for (int t = 0; t < trials; ++t) {
        const Eigen::VectorXcd psi = random_vector(set, rng, 2.0 * set.table.m_Z);
        const double lhs = Eigen::VectorXcd(set.HI.mat * psi).squaredNorm();
        const Eigen::VectorXcd h0p1 =
            Eigen::VectorXcd(set.H0.mat * psi) + psi;
        const double x = h0p1.squaredNorm();
        const double y = psi.squaredNorm();
        for (double e : eps) {
            const double rhs =
                4.0 * ((C1 + C2) * x + (Ct1 + Ct2) * ((1.0 + e) * x + y / (4.0 * e)));
            const double ratio = lhs / rhs;
            if (ratio > rep.max_ratio) {
                rep.max_ratio = ratio;
                rep.worst_eps = e;
            }
        }
    }
    rep.pass = rep.max_ratio <= 1.0;
    return rep;
}

AppendixBReport appendixB_check(const HamiltonianSet& set, int k_mode, int trials,
                                std::uint64_t seed) {
    const KernelTable& t = set.table;
    if (k_mode < 0 || k_mode >= t.n3) throw invalid_argument_error("appendixB_check: bad mode");
    const FockBasis& basis = set.basis;
    const Eigen::Index dim = basis.dim();

    std::vector<Triplet> t1, t2;
    double l2sq[2] = {0.0, 0.0};
    double wsq[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // [j kernel][p weight]
    for (int i = 0; i < t.n1; ++i)
        for (int b = 0; b < t.n2; ++b) {
            const cplx f1 = t.F[0][t.idx(i, b, k_mode)];
            const cplx f2 = t.F[1][t.idx(i, b, k_mode)];
            const double p1 = basis.grid.neutrino_modes[i].p;
            const double p2 = basis.grid.antineutrino_modes[b].p;
            l2sq[0] += std::norm(f1);
            l2sq[1] += std::norm(f2);
            wsq[0][0] += std::norm(f1) / p1;
            wsq[0][1] += std::norm(f1) / p2;
            wsq[1][0] += std::norm(f2) / p1;
            wsq[1][1] += std::norm(f2) / p2;
        }
    SpMat B1(dim, dim), B2(dim, dim);
    {
        std::vector<Triplet> tr1, tr2;
        for (int i = 0; i < t.n1; ++i) {
            const LadderPair ln = ladder(basis, Species::nu, i);
            for (int b = 0; b < t.n2; ++b) {
                const cplx f1 = t.F[0][t.idx(i, b, k_mode)];
                const cplx f2 = t.F[1][t.idx(i, b, k_mode)];
                const LadderPair lb = ladder(basis, Species::nubar, b);
                if (f1 != cplx(0.0, 0.0))
                    push_nonzeros(SpMat(-std::conj(f1) * (ln.annihilate * lb.annihilate)), tr1);
                if (f2 != cplx(0.0, 0.0))
                    push_nonzeros(SpMat(f2 * (ln.create * lb.create)), tr2);
            }
        }
        B1.setFromTriplets(tr1.begin(), tr1.end());
        B2.setFromTriplets(tr2.begin(), tr2.end());
    }
    const SpMat B1a = SpMat(B1.adjoint()), B2a = SpMat(B2.adjoint());
    const Eigen::VectorXd hd = set.HD.mat.diagonal().real();

    AppendixBReport rep;
    for (int i = 0; i < 4; ++i) rep.slack[i] = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(seed);
    for (int tr = 0; tr < trials; ++tr) {
        const Eigen::VectorXcd psi = random_vector(set, rng);
        const double hterm = std::sqrt((hd.array() * psi.cwiseAbs2().array()).sum());
        const double nb1 = Eigen::VectorXcd(B1 * psi).norm();
        const double nb1a = Eigen::VectorXcd(B1a * psi).norm();
        const double nb2 = Eigen::VectorXcd(B2 * psi).norm();
        const double nb2a = Eigen::VectorXcd(B2a * psi).norm();
        const double w1 = std::sqrt(std::min(wsq[0][0], wsq[0][1]));
        const double w2 = std::sqrt(std::min(wsq[1][0], wsq[1][1]));
        rep.slack[0] = std::min(rep.slack[0], w1 * hterm - nb1);
        rep.slack[1] = std::min(rep.slack[1], w2 * hterm - nb2a);
        rep.slack[2] = std::min(rep.slack[2],
                                std::sqrt(2.0 * l2sq[0] + nb1 * nb1) - nb1a);
        rep.slack[3] = std::min(rep.slack[3],
                                std::sqrt(2.0 * l2sq[1] + nb2a * nb2a) - nb2);
    }
    const double scale = 1.0 + std::sqrt(std::max(l2sq[0], l2sq[1]));
    rep.pass = true;
    for (int i = 0; i < 4; ++i)
        if (rep.slack[i] < -1e-12 * scale) rep.pass = false;
    return rep;
}

ShellFit fit_shell_bound(const HamiltonianSet& set, const CutoffFamily& fam, int n, int trials,
                         std::uint64_t seed) {
    if (n < 0 || n + 1 >= static_cast<int>(fam.levels.size()))
        throw invalid_argument_error("fit_shell_bound: level has no shell");
    const CutoffLevel& lv = fam.levels[n];
    const double dsig = lv.sigma * (1.0 - fam.gamma);
    std::mt19937_64 rng(seed);
    std::vector<double> x, y, xq, yq;
    for (int t = 0; t < trials; ++t) {
        const Eigen::VectorXcd psi = random_vector(set, rng, 2.0 * set.table.m_Z);
        const Eigen::VectorXcd spsi = lv.shell_full * psi;
        const Eigen::ArrayXd p2 = psi.cwiseAbs2().array();
        x.push_back(std::sqrt((lv.H0_next_diag.array().square() * p2).sum()));
        y.push_back(spsi.norm() / dsig);
        xq.push_back((lv.H0_next_diag.array() * p2).sum());
        yq.push_back(std::abs(psi.dot(spsi)) / dsig);
    }
    ShellFit fit;
    const double wa = fam.sigma0, wb = 4.0;
    std::tie(fit.a, fit.b) = fit_two_term(x, y, wa, wb);
    std::tie(fit.a_form, fit.b_form) = fit_two_term(xq, yq, wa, wb);
    fit.c_gap = fam.sigma0 * fit.a_form + 4.0 * fit.b_form;
    return fit;
}

double operator_norm(const SpMat& m, int iters, double tol) {
    const Eigen::Index dim = m.rows();
    if (dim == 0 || m.nonZeros() == 0) return 0.0;
    Eigen::VectorXcd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        v[i] = cplx(1.0 + 0.1 * std::sin(0.7 * static_cast<double>(i)),
                    0.05 * std::cos(1.3 * static_cast<double>(i)));
    v /= v.norm();
    const SpMat ma = SpMat(m.adjoint());
    double val = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXcd w = Eigen::VectorXcd(ma * Eigen::VectorXcd(m * v));
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        const double change = std::abs(nw - val);
        val = nw;
        v = w / nw;
        if (it > 4 && change <= tol * std::max(val, 1e-300)) break;
    }
    return std::sqrt(val);
}

TailNormReport tail_weighted_norms(const HamiltonianSet& set, const CutoffFamily& fam, int n) {
    if (n < 0 || n >= static_cast<int>(fam.levels.size()))
        throw invalid_argument_error("tail_weighted_norms: bad level");
    const CutoffLevel& lv = fam.levels[n];
    const Eigen::Index dim = set.basis.dim();
    const Eigen::VectorXd d = lv.Hcheck_diag;
    const double dmax = d.size() ? d.maxCoeff() : 0.0;
    Eigen::VectorXd dinv(dim);
    for (Eigen::Index r = 0; r < dim; ++r)
        dinv[r] = (d[r] > 1e-12 * std::max(dmax, 1.0)) ? 1.0 / std::sqrt(d[r]) : 0.0;
    Eigen::VectorXd nz = SpMat(number_op(set.basis, Species::boson)).diagonal().real();
    Eigen::VectorXd nzinv(dim);
    for (Eigen::Index r = 0; r < dim; ++r) nzinv[r] = 1.0 / std::sqrt(nz[r] + 1.0);

    TailNormReport rep;
    for (int j = 0; j < 2; ++j) {
        // Invariant: the tail monomial creates at least one below-cutoff
        // fermion, so its range lies where Hcheck > 0.
        std::vector<Triplet> trips;
        for (int c = 0; c < lv.tail_mono[j].outerSize(); ++c)
            for (SpMat::InnerIterator it(lv.tail_mono[j], c); it; ++it) {
                if (std::abs(it.value()) == 0.0) continue;
                if (dinv[it.row()] == 0.0)
                    throw numeric_failure("tail monomial leaves ran(Hcheck)");
                trips.emplace_back(it.row(), it.col(),
                                   it.value() * dinv[it.row()] * nzinv[it.col()]);
            }
        SpMat M(dim, dim);
        M.setFromTriplets(trips.begin(), trips.end());
        rep.norm[j] = operator_norm(M);
    }
    return rep;
}

void save_operator(const SparseHermitian& op, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_argument_error("save_operator: cannot open " + path);
    Header h;
    std::memcpy(h.magic, "ZDKSP001", 8);
    h.dim = static_cast<std::uint64_t>(op.dim());
    h.nnz = static_cast<std::uint64_t>(op.mat.nonZeros());
    h.flags = (op.hermitian ? 1u : 0u) | (op.real ? 2u : 0u);
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    for (int c = 0; c < op.mat.outerSize(); ++c)
        for (SpMat::InnerIterator it(op.mat, c); it; ++it) {
            const std::int64_t r = it.row(), cc = it.col();
            const double re = it.value().real(), im = it.value().imag();
            out.write(reinterpret_cast<const char*>(&r), 8);
            out.write(reinterpret_cast<const char*>(&cc), 8);
            out.write(reinterpret_cast<const char*>(&re), 8);
            out.write(reinterpret_cast<const char*>(&im), 8);
        }
    if (!out) throw numeric_failure("save_operator: write failed for " + path);
}

SparseHermitian load_operator(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_argument_error("load_operator: cannot open " + path);
    Header h;
    in.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!in || std::memcmp(h.magic, "ZDKSP001", 8) != 0)
        throw invalid_argument_error("load_operator: bad header in " + path);
    std::vector<Triplet> trips;
    trips.reserve(h.nnz);
    for (std::uint64_t i = 0; i < h.nnz; ++i) {
        std::int64_t r, c;
        double re, im;
        in.read(reinterpret_cast<char*>(&r), 8);
        in.read(reinterpret_cast<char*>(&c), 8);
        in.read(reinterpret_cast<char*>(&re), 8);
        in.read(reinterpret_cast<char*>(&im), 8);
        trips.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c),
                           cplx(re, im));
    }
    if (!in) throw invalid_argument_error("load_operator: truncated file " + path);
    return SparseHermitian::make(static_cast<Eigen::Index>(h.dim), trips, (h.flags & 1u) != 0,
                                 (h.flags & 2u) != 0);
}

}  // namespace zdk
