#include "zdecay/kernels.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "zdecay/partialwave.hpp"
#include "zdecay/quadrature.hpp"

namespace zdk {

double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / t);
    const double b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

double smooth_cut(double x, double lo, double hi) {
    return 1.0 - smooth_step((x - lo) / (hi - lo));
}

CutoffProfile CutoffProfile::standard(const PhysicalConstants& pc) {
    CutoffProfile prof;
    prof.Lambda = 1.0;
    prof.f = [](double r) {
        if (r <= 0.0 || r >= 1.0) return 0.0;
        const double t = 2.0 * r - 1.0;
        return std::exp(-1.0 / (1.0 - t * t));
    };
    const double lo = pc.m_Z, hi = 1.2 * pc.m_Z;
    auto G = [lo, hi](double p1, double p2, double k) {
        return smooth_cut(p1, lo, hi) * smooth_cut(p2, lo, hi) * smooth_cut(k, lo, hi);
    };
    prof.G1 = G;
    prof.G2 = G;
    prof.support_radius = hi;
    return prof;
}

namespace {

using Mat4 = Eigen::Matrix4cd;
using Vec4 = Eigen::Vector4cd;
const cplx I(0.0, 1.0);

// Dirac matrices in the standard representation.
Mat4 gamma_mu(int mu) {
    Mat4 g = Mat4::Zero();
    switch (mu) {
        case 0:
            g(0, 0) = 1;
            g(1, 1) = 1;
            g(2, 2) = -1;
            g(3, 3) = -1;
            break;
        case 1:
            g(0, 3) = 1;
            g(1, 2) = 1;
            g(2, 1) = -1;
            g(3, 0) = -1;
            break;
        case 2:
            g(0, 3) = -I;
            g(1, 2) = I;
            g(2, 1) = I;
            g(3, 0) = -I;
            break;
        case 3:
            g(0, 2) = 1;
            g(1, 3) = -1;
            g(2, 0) = -1;
            g(3, 1) = 1;
            break;
        default:  // gamma_5
            g(0, 2) = 1;
            g(1, 3) = 1;
            g(2, 0) = 1;
            g(3, 1) = 1;
            break;
    }
    return g;
}

// Massive spin-1 polarization 4-vector, k along +z.
Eigen::Vector4cd polarization(double k, int lambda, double m_Z) {
    Eigen::Vector4cd eps = Eigen::Vector4cd::Zero();
    if (lambda == 0) {
        const double om = omega3(k, m_Z);
        eps(0) = k / m_Z;
        eps(3) = om / m_Z;
    } else {
        eps(1) = (lambda > 0) ? -1.0 / std::sqrt(2.0) : 1.0 / std::sqrt(2.0);
        eps(2) = cplx(0.0, -1.0 / std::sqrt(2.0));
    }
    return eps;
}

// Y_l^m(theta, 0); the e^{im phi} factor is handled analytically.
double Ylm_theta(int l, int m, double theta) {
    if (std::abs(m) > l) return 0.0;
    const double v = std::sph_legendre(l, std::abs(m), theta);
    return (m < 0 && (std::abs(m) % 2 == 1)) ? -v : v;
}

int spinor_l(int kappa) { return kappa > 0 ? kappa : -kappa - 1; }

// Spherical spinor chi_kappa^{m_j} at (theta, phi = 0); components carry the
// azimuthal labels m_j -+ 1/2.
void spherical_spinor(int kappa, int two_mj, double theta, double out[2]) {
    const int l = spinor_l(kappa);
    const double L2 = 2.0 * l + 1.0;
    const int mu = (two_mj - 1) / 2, md = (two_mj + 1) / 2;
    double cu, cd;
    if (kappa > 0) {
        cu = -std::sqrt((2.0 * l - two_mj + 1.0) / (2.0 * L2));
        cd = std::sqrt((2.0 * l + two_mj + 1.0) / (2.0 * L2));
    } else {
        cu = std::sqrt((2.0 * l + two_mj + 1.0) / (2.0 * L2));
        cd = std::sqrt((2.0 * l - two_mj + 1.0) / (2.0 * L2));
    }
    out[0] = cu * Ylm_theta(l, mu, theta);
    out[1] = cd * Ylm_theta(l, md, theta);
}

// Angular factors of psi (4 components) at phi = 0 plus their m labels.
void spinor_angular(const Channel& ch, double theta, double ang[4], int mlab[4]) {
    double up[2], dn[2];
    spherical_spinor(ch.kappa, ch.two_mj, theta, up);   // Phi^(1)
    spherical_spinor(-ch.kappa, ch.two_mj, theta, dn);  // Phi^(2)
    ang[0] = up[0];
    ang[1] = up[1];
    ang[2] = dn[0];
    ang[3] = dn[1];
    mlab[0] = mlab[2] = (ch.two_mj - 1) / 2;
    mlab[1] = mlab[3] = (ch.two_mj + 1) / 2;
}

struct AngularRule {
    std::vector<double> c, w;       // cos(theta) nodes/weights on [-1, 1]
    std::vector<Mat4> T;            // 2*pi * conj(ang1_a) M_ab ang2_b delta_m
};

AngularRule make_angular_rule(const Channel& ch1, const Channel& ch2, const Mat4& M, int panels,
                              int order) {
    AngularRule rule;
    const GaussLegendre& gl = gauss_legendre(order);
    const double h = 2.0 / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = -1.0 + p * h;
        for (int i = 0; i < order; ++i) {
            rule.c.push_back(lo + 0.5 * h * (gl.x[i] + 1.0));
            rule.w.push_back(0.5 * h * gl.w[i]);
        }
    }
    rule.T.resize(rule.c.size());
    for (std::size_t t = 0; t < rule.c.size(); ++t) {
        const double theta = std::acos(std::clamp(rule.c[t], -1.0, 1.0));
        double ang1[4], ang2[4];
        int m1[4], m2[4];
        spinor_angular(ch1, theta, ang1, m1);
        spinor_angular(ch2, theta, ang2, m2);
        Mat4 T = Mat4::Zero();
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                if (m1[a] == m2[b]) T(a, b) = 2.0 * M_PI * ang1[a] * M(a, b) * ang2[b];
        rule.T[t] = T;
    }
    return rule;
}

}  // namespace

cplx spinor_contraction_h(int j, const FermionMode& m1, const FermionMode& m2,
                          const BosonMode& m3, const CutoffProfile& prof,
                          const PhysicalConstants& pc) {
    if (j != 1 && j != 2) throw invalid_argument_error("spinor_contraction_h: j must be 1 or 2");
    if (!(m1.p > 0.0) || !(m2.p > 0.0) || !(m3.k > 0.0))
        throw invalid_argument_error("spinor_contraction_h: momenta must be > 0");
    m1.channel.validate();
    m2.channel.validate();

    // psi~_-(xi2) = psi_-((p2, (j, -m_j, -kappa)), x).
    Channel ch2 = m2.channel;
    ch2.two_mj = -ch2.two_mj;
    ch2.kappa = -ch2.kappa;

    // Contraction matrix  gamma^0 (eps_mu gamma^mu) (1 - gamma_5), with
    // eps_mu gamma^mu = eps^0 gamma^0 - eps^i gamma^i; h^(2) uses eps^*.
    Eigen::Vector4cd eps = polarization(m3.k, m3.lambda, pc.m_Z);
    if (j == 2) eps = eps.conjugate();
    Mat4 slash = eps(0) * gamma_mu(0);
    for (int i = 1; i <= 3; ++i) slash -= eps(i) * gamma_mu(i);
    const Mat4 M = gamma_mu(0) * slash * (Mat4::Identity() - gamma_mu(5));
    const int sign_k = (j == 1) ? +1 : -1;

    auto evaluate = [&](double refine) -> cplx {
        const int th_panels =
            std::max(1, static_cast<int>(refine * panels_for_oscillation(m3.k * prof.Lambda)));
        const int r_panels = std::max(
            1, static_cast<int>(refine *
                                panels_for_oscillation((m1.p + m2.p + m3.k) * prof.Lambda)));
        const AngularRule rule =
            make_angular_rule(m1.channel, ch2, M, th_panels, prof.theta_order);
        const GaussLegendre& gl = gauss_legendre(prof.r_order);
        const double h = prof.Lambda / r_panels;
        cplx total(0.0, 0.0);
        for (int pnl = 0; pnl < r_panels; ++pnl) {
            const double lo = pnl * h;
            for (int i = 0; i < prof.r_order; ++i) {
                const double r = lo + 0.5 * h * (gl.x[i] + 1.0);
                const double wr = 0.5 * h * gl.w[i];
                const double fr = prof.f(r);
                if (fr == 0.0) continue;
                const RadialWaveValue rw1 = radial_wave(m1.channel, +1, m1.p, r);
                const RadialWaveValue rw2 = radial_wave(ch2, -1, m2.p, r);
                const Vec4 rad1(I * rw1.g, I * rw1.g, -rw1.f, -rw1.f);
                const Vec4 rad2(I * rw2.g, I * rw2.g, -rw2.f, -rw2.f);
                cplx s(0.0, 0.0);
                for (std::size_t t = 0; t < rule.c.size(); ++t) {
                    const cplx phase =
                        std::exp(cplx(0.0, sign_k * m3.k * r * rule.c[t]));
                    s += rule.w[t] * phase * (rad1.adjoint() * rule.T[t] * rad2)(0, 0);
                }
                total += wr * r * r * fr * s;
            }
        }
        return total / std::sqrt(2.0 * omega3(m3.k, pc.m_Z));
    };

    const cplx coarse = evaluate(1.0);
    if (!prof.convergence_check) return coarse;
    const cplx fine = evaluate(1.5);
    const double err = std::abs(fine - coarse);
    const double tol = 1e-6 * std::max(std::abs(fine), 1e-2);
    if (err > tol)
        throw numeric_failure("spinor_contraction_h: quadrature not converged, error estimate " +
                              std::to_string(err));
    return fine;
}

double SurrogateSpec::radial(int j, double p) const {
    if (phi_override) return phi_override(j, p);
    const double lo = cut_lo_mul * pc.m_Z, hi = cut_hi_mul * pc.m_Z;
    const double base = (j == 1) ? p : p / std::sqrt(1.0 + p / knee_p0);
    const int c = j - 1;
    const double shape = (1.0 + std::pow(p / bump_pb[c], bump_rise[c])) /
                         (1.0 + std::pow(p / bump_pc[c], bump_rise[c] + bump_fall[c]));
    return base * shape * smooth_cut(p, lo, hi);
}

cplx SurrogateSpec::eval(int j, double p1, double p2, double k) const {
    const double lo = cut_lo_mul * pc.m_Z, hi = cut_hi_mul * pc.m_Z;
    const double B = std::pow(k * k + pc.m_Z * pc.m_Z, 0.25) * smooth_cut(k, lo, hi);
    return ((j == 1) ? c1 : c2) * radial(j, p1) * radial(j, p2) * B;
}

SurrogateSpec SurrogateSpec::calibrated(const PhysicalConstants& pc) {
    SurrogateSpec s;
    s.pc = pc;
    const double lo = s.cut_lo_mul * pc.m_Z, hi = s.cut_hi_mul * pc.m_Z;
    auto phi_sq = [&](int j) {
        return integrate([&](double p) { const double v = s.radial(j, p); return v * v; },
                         0.0, hi, 32, 16);
    };
    const double IB = integrate(
        [&](double k) {
            const double v = std::pow(k * k + pc.m_Z * pc.m_Z, 0.25) * smooth_cut(k, lo, hi);
            return v * v;
        },
        0.0, hi, 32, 16);
    const double n1 = std::sqrt(phi_sq(1) * phi_sq(1) * IB);
    const double n2 = std::sqrt(phi_sq(2) * phi_sq(2) * IB);
    s.c1 = cplx(pc.m_Z / n1, 0.0);
    s.c2 = 0.1 * pc.m_Z / n2 * std::exp(cplx(0.0, M_PI / 5.0));
    return s;
}

namespace {

// 5-point central differences of F(p) with Richardson-quality accuracy.
void derivative_tables(const std::function<cplx(double, double, double)>& F, double p1, double p2,
                       double k, cplx& d1, cplx& d2, cplx& d11, cplx& d22) {
    auto d_dp = [&](bool first_arg, cplx& d, cplx& dd) {
        const double p = first_arg ? p1 : p2;
        const double h = 1e-3 * std::max(p, 0.1);
        auto at = [&](double dp) {
            return first_arg ? F(p + dp, p2, k) : F(p1, p + dp, k);
        };
        const cplx fm2 = at(-2 * h), fm1 = at(-h), f0 = at(0.0), fp1 = at(h), fp2 = at(2 * h);
        d = (-fp2 + 8.0 * fp1 - 8.0 * fm1 + fm2) / (12.0 * h);
        dd = (-fp2 + 16.0 * fp1 - 30.0 * f0 + 16.0 * fm1 - fm2) / (12.0 * h * h);
    };
    d_dp(true, d1, d11);
    d_dp(false, d2, d22);
}

KernelTable fill_table(const ModeGrid& grid,
                       const std::function<cplx(int, double, double, double)>& F,
                       const std::string& mode, bool want_derivatives, double m_Z) {
    KernelTable t;
    t.grid = grid;
    t.m_Z = m_Z;
    t.n1 = static_cast<int>(grid.neutrino_modes.size());
    t.n2 = static_cast<int>(grid.antineutrino_modes.size());
    t.n3 = static_cast<int>(grid.boson_modes.size());
    t.mode = mode;
    const std::size_t n = static_cast<std::size_t>(t.n1) * t.n2 * t.n3;
    for (int j = 0; j < 2; ++j) {
        t.F[j].assign(n, cplx(0.0, 0.0));
        if (want_derivatives) {
            t.dp1[j].assign(n, cplx(0.0, 0.0));
            t.dp2[j].assign(n, cplx(0.0, 0.0));
            t.dp1p1[j].assign(n, cplx(0.0, 0.0));
            t.dp2p2[j].assign(n, cplx(0.0, 0.0));
        }
    }
    t.has_derivatives = want_derivatives;
    for (int i = 0; i < t.n1; ++i) {
        const auto& m1 = grid.neutrino_modes[i];
        for (int jj = 0; jj < t.n2; ++jj) {
            const auto& m2 = grid.antineutrino_modes[jj];
            for (int kk = 0; kk < t.n3; ++kk) {
                const auto& m3 = grid.boson_modes[kk];
                const double sw = std::sqrt(m1.w * m2.w * m3.w);
                const std::size_t id = t.idx(i, jj, kk);
                for (int which = 1; which <= 2; ++which) {
                    t.F[which - 1][id] = F(which, m1.p, m2.p, m3.k) * sw;
                    if (want_derivatives) {
                        cplx d1, d2, d11, d22;
                        derivative_tables(
                            [&](double a, double b, double c) { return F(which, a, b, c); },
                            m1.p, m2.p, m3.k, d1, d2, d11, d22);
                        t.dp1[which - 1][id] = d1;
                        t.dp2[which - 1][id] = d2;
                        t.dp1p1[which - 1][id] = d11;
                        t.dp2p2[which - 1][id] = d22;
                    }
                }
            }
        }
    }
    return t;
}

}  // namespace

KernelNorms KernelTable::norms(int j) const {
    if (j != 1 && j != 2) throw invalid_argument_error("KernelTable::norms: j must be 1 or 2");
    KernelNorms n;
    for (int i = 0; i < n1; ++i) {
        const double p1 = grid.neutrino_modes[i].p;
        for (int jj = 0; jj < n2; ++jj) {
            const double p2 = grid.antineutrino_modes[jj].p;
            for (int kk = 0; kk < n3; ++kk) {
                const double om = omega3(grid.boson_modes[kk].k, m_Z);
                const double a2 = std::norm(F[j - 1][idx(i, jj, kk)]);
                n.l2 += a2;
                n.inv_sqrt_omega += a2 / om;
                n.inv_sqrt_p2 += a2 / p2;
                n.inv_sqrt_p2omega += a2 / (p2 * om);
                n.inv_p1 += a2 / (p1 * p1);
                n.inv_p2 += a2 / (p2 * p2);
            }
        }
    }
    n.l2 = std::sqrt(n.l2);
    n.inv_sqrt_omega = std::sqrt(n.inv_sqrt_omega);
    n.inv_sqrt_p2 = std::sqrt(n.inv_sqrt_p2);
    n.inv_sqrt_p2omega = std::sqrt(n.inv_sqrt_p2omega);
    n.inv_p1 = std::sqrt(n.inv_p1);
    n.inv_p2 = std::sqrt(n.inv_p2);
    return n;
}

double KernelTable::CF(int j) const {
    const KernelNorms n = norms(j);
    if (j == 1)
        return 2.0 * n.inv_sqrt_omega * n.inv_sqrt_omega +
               n.inv_sqrt_p2omega * n.inv_sqrt_p2omega;
    return n.inv_sqrt_p2omega * n.inv_sqrt_p2omega;
}

double KernelTable::CF_tilde(int j) const {
    const KernelNorms n = norms(j);
    if (j == 1)
        return std::max(n.inv_sqrt_p2 * n.inv_sqrt_p2,
                        n.inv_sqrt_p2omega * n.inv_sqrt_p2omega);
    return std::max(
        2.0 * n.inv_sqrt_omega * n.inv_sqrt_omega + n.inv_sqrt_p2omega * n.inv_sqrt_p2omega,
        2.0 * n.l2 * n.l2 + n.inv_sqrt_p2 * n.inv_sqrt_p2);
}

KernelTable build_kernel_table(const ModeGrid& grid, const CutoffProfile& prof,
                               const PhysicalConstants& pc, bool want_derivatives) {
    grid.validate();
    auto F = [&](int j, double p1, double p2, double k) -> cplx {
        const double G = (j == 1) ? prof.G1(p1, p2, k) : prof.G2(p1, p2, k);
        if (G == 0.0) return cplx(0.0, 0.0);
        FermionMode m1 = grid.neutrino_modes.front();
        FermionMode m2 = grid.antineutrino_modes.front();
        BosonMode m3 = grid.boson_modes.front();
        m1.p = p1;
        m2.p = p2;
        m3.k = k;
        return spinor_contraction_h(j, m1, m2, m3, prof, pc) * G;
    };
    return fill_table(grid, F, "quadrature", want_derivatives, pc.m_Z);
}

KernelTable build_kernel_table(const ModeGrid& grid, const SurrogateSpec& spec,
                               bool want_derivatives) {
    grid.validate();
    // Validate the Lemma 3.1 envelope shape: F must vanish like p^{ell_j}
    // as p -> 0 in each fermion argument, and respect the compact support.
    const double pref = spec.pc.m_Z / 10.0, kref = spec.pc.m_Z / 10.0;
    const int ell1 = grid.neutrino_modes.front().channel.ell();
    const int ell2 = grid.antineutrino_modes.front().channel.ell();
    for (int j = 1; j <= 2; ++j) {
        for (int arg = 1; arg <= 2; ++arg) {
            const int ell = (arg == 1) ? ell1 : ell2;
            auto at = [&](double p) {
                return std::abs(arg == 1 ? spec.eval(j, p, pref, kref)
                                         : spec.eval(j, pref, p, kref));
            };
            const double lo = at(1e-5 * spec.pc.m_Z), hi = at(2e-5 * spec.pc.m_Z);
            if (!(lo > 0.0) || !(hi > 0.0))
                throw invalid_argument_error("surrogate vanishes identically near p = 0");
            const double slope = std::log(hi / lo) / std::log(2.0);
            if (slope < ell - 0.05)
                throw invalid_argument_error(
                    "surrogate violates the small-p envelope: slope " + std::to_string(slope) +
                    " < ell = " + std::to_string(ell));
        }
        const double edge = 1.05 * spec.cut_hi_mul * spec.pc.m_Z;
        if (std::abs(spec.eval(j, edge, pref, kref)) != 0.0 ||
            std::abs(spec.eval(j, pref, edge, kref)) != 0.0 ||
            std::abs(spec.eval(j, pref, pref, edge)) != 0.0)
            throw invalid_argument_error("surrogate violates the compact support");
    }
    auto F = [&](int j, double p1, double p2, double k) { return spec.eval(j, p1, p2, k); };
    return fill_table(grid, F, "surrogate", want_derivatives, spec.pc.m_Z);
}

KernelTable restrict_kernel(const KernelTable& table,
                            const std::function<bool(double, double)>& region) {
    KernelTable t = table;
    t.mode = "restricted";
    for (int i = 0; i < t.n1; ++i) {
        const double p1 = t.grid.neutrino_modes[i].p;
        for (int jj = 0; jj < t.n2; ++jj) {
            const double p2 = t.grid.antineutrino_modes[jj].p;
            if (region(p1, p2)) continue;
            for (int kk = 0; kk < t.n3; ++kk) {
                const std::size_t id = t.idx(i, jj, kk);
                for (int w = 0; w < 2; ++w) {
                    t.F[w][id] = cplx(0.0, 0.0);
                    if (t.has_derivatives) {
                        t.dp1[w][id] = cplx(0.0, 0.0);
                        t.dp2[w][id] = cplx(0.0, 0.0);
                        t.dp1p1[w][id] = cplx(0.0, 0.0);
                        t.dp2p2[w][id] = cplx(0.0, 0.0);
                    }
                }
            }
        }
    }
    return t;
}

namespace {

std::string bin_path_for(const std::string& path) {
    const std::size_t dot = path.find_last_of('.');
    return (dot == std::string::npos ? path : path.substr(0, dot)) + ".bin";
}

void write_array(std::ofstream& os, const std::vector<cplx>& v) {
    for (const cplx& z : v) {
        const double re = z.real(), im = z.imag();
        os.write(reinterpret_cast<const char*>(&re), sizeof(double));
        os.write(reinterpret_cast<const char*>(&im), sizeof(double));
    }
}

void read_array(std::ifstream& is, std::vector<cplx>& v, std::size_t n) {
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double re = 0.0, im = 0.0;
        is.read(reinterpret_cast<char*>(&re), sizeof(double));
        is.read(reinterpret_cast<char*>(&im), sizeof(double));
        v[i] = cplx(re, im);
    }
    if (!is) throw invalid_argument_error("kernel binary file truncated");
}

}  // namespace

void save_kernel_table(const KernelTable& table, const std::string& path) {
    nlohmann::json j;
    j["format"] = "zdk-kernel-1";
    j["mode"] = table.mode;
    j["n1"] = table.n1;
    j["n2"] = table.n2;
    j["n3"] = table.n3;
    j["m_Z"] = table.m_Z;
    j["has_derivatives"] = table.has_derivatives;
    j["binary"] = bin_path_for(path);
    nlohmann::json gj;
    for (const auto& m : table.grid.neutrino_modes)
        gj["neutrino"].push_back({{"p", m.p},
                                  {"w", m.w},
                                  {"two_j", m.channel.two_j},
                                  {"two_mj", m.channel.two_mj},
                                  {"kappa", m.channel.kappa}});
    for (const auto& m : table.grid.antineutrino_modes)
        gj["antineutrino"].push_back({{"p", m.p},
                                      {"w", m.w},
                                      {"two_j", m.channel.two_j},
                                      {"two_mj", m.channel.two_mj},
                                      {"kappa", m.channel.kappa}});
    for (const auto& m : table.grid.boson_modes)
        gj["boson"].push_back({{"k", m.k}, {"w", m.w}, {"lambda", m.lambda}});
    gj["p_max"] = table.grid.p_max;
    gj["k_max"] = table.grid.k_max;
    j["grid"] = gj;
    std::vector<std::string> arrays = {"F1", "F2"};
    if (table.has_derivatives)
        for (const char* n : {"dp1_F1", "dp1_F2", "dp2_F1", "dp2_F2", "dp1p1_F1", "dp1p1_F2",
                              "dp2p2_F1", "dp2p2_F2"})
            arrays.push_back(n);
    j["arrays"] = arrays;

    std::ofstream meta(path);
    if (!meta) throw invalid_argument_error("cannot write " + path);
    meta << j.dump(2) << "\n";
    std::ofstream bin(bin_path_for(path), std::ios::binary);
    if (!bin) throw invalid_argument_error("cannot write " + bin_path_for(path));
    write_array(bin, table.F[0]);
    write_array(bin, table.F[1]);
    if (table.has_derivatives) {
        write_array(bin, table.dp1[0]);
        write_array(bin, table.dp1[1]);
        write_array(bin, table.dp2[0]);
        write_array(bin, table.dp2[1]);
        write_array(bin, table.dp1p1[0]);
        write_array(bin, table.dp1p1[1]);
        write_array(bin, table.dp2p2[0]);
        write_array(bin, table.dp2p2[1]);
    }
}

KernelTable load_kernel_table(const std::string& path) {
    std::ifstream meta(path);
    if (!meta) throw invalid_argument_error("cannot read " + path);
    nlohmann::json j;
    meta >> j;
    if (j.value("format", "") != "zdk-kernel-1")
        throw invalid_argument_error("unsupported kernel table format");
    KernelTable t;
    t.mode = j["mode"];
    t.n1 = j["n1"];
    t.n2 = j["n2"];
    t.n3 = j["n3"];
    t.m_Z = j.value("m_Z", 91.18);
    t.has_derivatives = j["has_derivatives"];
    for (const auto& m : j["grid"]["neutrino"])
        t.grid.neutrino_modes.push_back(
            {m["p"], m["w"], Channel{m["two_j"], m["two_mj"], m["kappa"]}});
    for (const auto& m : j["grid"]["antineutrino"])
        t.grid.antineutrino_modes.push_back(
            {m["p"], m["w"], Channel{m["two_j"], m["two_mj"], m["kappa"]}});
    for (const auto& m : j["grid"]["boson"])
        t.grid.boson_modes.push_back({m["k"], m["w"], m["lambda"]});
    t.grid.p_max = j["grid"]["p_max"];
    t.grid.k_max = j["grid"]["k_max"];
    const std::size_t n = static_cast<std::size_t>(t.n1) * t.n2 * t.n3;
    std::ifstream bin(bin_path_for(path), std::ios::binary);
    if (!bin) throw invalid_argument_error("cannot read " + bin_path_for(path));
    read_array(bin, t.F[0], n);
    read_array(bin, t.F[1], n);
    if (t.has_derivatives) {
        read_array(bin, t.dp1[0], n);
        read_array(bin, t.dp1[1], n);
        read_array(bin, t.dp2[0], n);
        read_array(bin, t.dp2[1], n);
        read_array(bin, t.dp1p1[0], n);
        read_array(bin, t.dp1p1[1], n);
        read_array(bin, t.dp2p2[0], n);
        read_array(bin, t.dp2p2[1], n);
    }
    return t;
}

}  // namespace zdk
