#include "zdecay/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace zdk {

namespace {

double lsq_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Hermitian square root of a PSD Gram matrix.
Eigen::MatrixXcd psd_sqrt(const Eigen::MatrixXcd& G) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G);
    Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

double spectral_norm(const Eigen::MatrixXcd& B) {
    if (B.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(B.adjoint() * B);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

}  // namespace

Eigen::MatrixXd radial_derivative(const std::vector<FermionMode>& modes) {
    const int n = static_cast<int>(modes.size());
    if (n < 2)
        throw invalid_argument_error("radial_derivative: need >= 2 radial nodes");
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        if (i == 0) {
            const double h = modes[1].p - modes[0].p;
            D(0, 0) = -1.0 / h;
            D(0, 1) = 1.0 / h;
        } else if (i == n - 1) {
            const double h = modes[n - 1].p - modes[n - 2].p;
            D(i, i - 1) = -1.0 / h;
            D(i, i) = 1.0 / h;
        } else {
            const double h1 = modes[i].p - modes[i - 1].p;
            const double h2 = modes[i + 1].p - modes[i].p;
            D(i, i - 1) = -h2 / (h1 * (h1 + h2));
            D(i, i) = (h2 - h1) / (h1 * h2);
            D(i, i + 1) = h1 / (h2 * (h1 + h2));
        }
    }
    // Weighted coordinates, then antisymmetrize so iD is Hermitian w.r.t. the
    // quadrature inner product.
    Eigen::VectorXd sw(n);
    for (int i = 0; i < n; ++i) sw[i] = std::sqrt(modes[i].w);
    Eigen::MatrixXd Dw = sw.asDiagonal() * D * sw.cwiseInverse().asDiagonal();
    return 0.5 * (Dw - Dw.transpose());
}

PositionWeight build_Q(const FockBasis& basis, double p_unit) {
    if (!(p_unit > 0.0))
        throw invalid_argument_error("build_Q: momentum unit must be positive");
    PositionWeight out;
    auto one_particle_q = [p_unit](const std::vector<FermionMode>& modes) {
        // d/d(p/p_unit) = p_unit d/dp: position measured in units of 1/p_unit
        // (the Compton length when p_unit = m_Z).
        const Eigen::MatrixXd D = p_unit * radial_derivative(modes);
        const Eigen::MatrixXcd iD = cplx(0.0, 1.0) * D.cast<cplx>();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(iD);
        const Eigen::VectorXd q = es.eigenvalues().cwiseAbs();
        return Eigen::MatrixXcd(es.eigenvectors() * q.asDiagonal() *
                                es.eigenvectors().adjoint());
    };
    out.q1 = one_particle_q(basis.grid.neutrino_modes);
    out.q2 = one_particle_q(basis.grid.antineutrino_modes);
    SpMat Q = dgamma(basis, Species::nu, out.q1) + dgamma(basis, Species::nubar, out.q2);
    out.Q = SparseHermitian::wrap(std::move(Q), true);
    return out;
}

SparseHermitian PositionWeight::weight(const FockBasis& basis, double s) const {
    SpMat w = fermion_dgamma_function(
        basis, q1, q2, [s](double x) { return cplx(std::pow(1.0 + x * x, -0.5 * s), 0.0); });
    return SparseHermitian::wrap(std::move(w), true);
}

// ---------------------------------------------------------------------------

std::vector<Eigen::VectorXcd> FilteredEvolution::operator()(
    const std::function<double(double)>& chi, const Eigen::VectorXcd& psi0,
    const std::vector<double>& times) const {
    if (chi(cover) > 1e-12)
        throw invalid_argument_error(
            "FilteredEvolution: chi does not vanish at the coverage threshold");
    std::vector<cplx> coef;
    std::vector<const EigenPair*> used;
    for (const auto& p : low) {
        const double c = chi(p.value);
        if (c == 0.0) continue;
        coef.push_back(c * p.vector.dot(psi0));
        used.push_back(&p);
    }
    std::vector<Eigen::VectorXcd> out;
    out.reserve(times.size());
    for (double t : times) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(psi0.size());
        for (std::size_t j = 0; j < used.size(); ++j)
            v += coef[j] * std::exp(cplx(0.0, -used[j]->value * t)) * used[j]->vector;
        out.push_back(std::move(v));
    }
    return out;
}

FilteredEvolution make_evolution(const HamiltonianSet& set, double cover, double tol) {
    FilteredEvolution ev;
    ev.cover = cover;
    ev.low = eigenpairs_below(set.H, cover, 1024, tol);
    return ev;
}

std::function<double(double)> default_chi(double E, double plateau, double edge) {
    if (!(edge > plateau) || !(plateau > 0))
        throw invalid_argument_error("default_chi: need 0 < plateau < edge");
    return [E, plateau, edge](double x) { return smooth_cut(x - E, plateau, edge); };
}

// ---------------------------------------------------------------------------

DecayTrace local_decay_trace(const HamiltonianSet& set, const CascadeRecord& cascade,
                             const PositionWeight& weight, double s, double mu,
                             const std::function<double(double)>& chi,
                             const std::vector<double>& times, double cover, double tol) {
    if (!(s > 0.0 && s <= 1.0) || !(mu > 0.0 && mu < s))
        throw invalid_argument_error("local_decay_trace: need 0 < mu < s <= 1");
    if (chi(cover) > 1e-12)
        throw invalid_argument_error(
            "local_decay_trace: chi does not vanish at the coverage threshold");
    const auto low = eigenpairs_below(set.H, cover, 1024, tol);

    DecayTrace tr;
    tr.s = s;
    tr.mu = mu;
    tr.times = times;
    tr.fit_target = -(s - mu);

    const SparseHermitian Ws = weight.weight(set.basis, s);
    // The subtracted ground-state term is the j = 0 contribution; the excited
    // filtered states carry the decay.
    std::vector<double> lam, chij;
    std::vector<Eigen::VectorXcd> cols;
    for (std::size_t j = 1; j < low.size(); ++j) {
        const double c = chi(low[j].value);
        if (c <= 1e-14) continue;
        lam.push_back(low[j].value);
        chij.push_back(c);
        cols.push_back(Ws.mat * low[j].vector);
    }
    const int k = static_cast<int>(cols.size());
    if (k == 0) {
        // chi(H) projects onto the ground state alone: the residual vanishes.
        tr.r.assign(times.size(), 0.0);
        return tr;
    }
    Eigen::MatrixXcd X(set.basis.dim(), k);
    for (int j = 0; j < k; ++j) X.col(j) = cols[j];
    const Eigen::MatrixXcd S = psd_sqrt(X.adjoint() * X);

    for (double t : times) {
        Eigen::VectorXcd d(k);
        for (int j = 0; j < k; ++j) d[j] = chij[j] * std::exp(cplx(0.0, -lam[j] * t));
        tr.r.push_back(spectral_norm(S * d.asDiagonal() * S));
    }
    tr.r0 = tr.r.empty() ? 0.0 : tr.r.front();

    // Heisenberg time from the mean level spacing inside supp chi.
    if (k >= 2) {
        const double span = lam.back() - lam.front();
        if (span > 0.0) tr.T_H = 2.0 * M_PI * (k - 1) / span;
    }

    std::vector<double> lx, ly;
    const double sigma0 = cascade.sigma0 > 0 ? cascade.sigma0 : 1.0;
    const double t1 = 1.0 / sigma0;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (times[i] >= t1 && times[i] <= tr.T_H / 2 && tr.r[i] > 1e-14) {
            lx.push_back(std::log(times[i]));
            ly.push_back(std::log(tr.r[i]));
        }
    tr.fit_points = static_cast<int>(lx.size());
    if (tr.fit_points >= 2) tr.fit_exponent = lsq_slope(lx, ly);
    tr.insufficient = (k >= 2) && (tr.fit_points < 10);
    return tr;
}

void save_trace_csv(const DecayTrace& trace, const std::string& path,
                    const std::vector<std::vector<double>>& window_components,
                    const std::vector<std::string>& window_names) {
    std::ofstream f(path);
    if (!f) throw invalid_argument_error("save_trace_csv: cannot open " + path);
    f << "t,r";
    for (const auto& name : window_names) f << "," << name;
    f << "\n";
    f.precision(17);
    for (std::size_t i = 0; i < trace.times.size(); ++i) {
        f << trace.times[i] << "," << trace.r[i];
        for (const auto& comp : window_components)
            f << "," << (i < comp.size() ? comp[i] : 0.0);
        f << "\n";
    }
}

// ---------------------------------------------------------------------------

WindowTrace weighted_window_trace(const std::vector<EigenPair>& low, const SpMat& W,
                                  const std::function<double(double)>& filter,
                                  const std::vector<double>& times) {
    WindowTrace tr;
    tr.times = times;
    std::vector<double> lam, fj;
    std::vector<Eigen::VectorXcd> cols;
    for (const auto& p : low) {
        const double c = filter(p.value);
        if (c <= 1e-14) continue;
        lam.push_back(p.value);
        fj.push_back(c);
        cols.push_back(W * p.vector);
    }
    const int k = static_cast<int>(cols.size());
    if (k == 0) {
        tr.r.assign(times.size(), 0.0);
        return tr;
    }
    Eigen::MatrixXcd X(W.rows(), k);
    for (int j = 0; j < k; ++j) X.col(j) = cols[j];
    const Eigen::MatrixXcd S = psd_sqrt(X.adjoint() * X);
    for (double t : times) {
        Eigen::VectorXcd d(k);
        for (int j = 0; j < k; ++j) d[j] = fj[j] * std::exp(cplx(0.0, -lam[j] * t));
        tr.r.push_back(spectral_norm(S * d.asDiagonal() * S));
    }
    tr.r0 = tr.r.front();
    for (std::size_t i = 0; i < times.size(); ++i)
        if (tr.r[i] <= 0.5 * tr.r0) {
            tr.onset_half = times[i];
            break;
        }
    if (tr.onset_half > 0.0) {
        std::vector<double> lx, ly;
        for (std::size_t i = 0; i < times.size(); ++i)
            if (times[i] >= tr.onset_half && times[i] <= 5.0 * tr.onset_half &&
                tr.r[i] > 1e-14) {
                lx.push_back(std::log(times[i]));
                ly.push_back(std::log(tr.r[i]));
            }
        tr.fit_points = static_cast<int>(lx.size());
        if (tr.fit_points >= 2) tr.fit_exponent = lsq_slope(lx, ly);
    }
    return tr;
}

}  // namespace zdk
