#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "pfb/fields.hpp"
#include "pfb/linalg.hpp"
#include "pfb/tensor.hpp"

namespace pfb {

/// Chart data for the structure group: adjoint representation rho(a), the
/// invariant-frame coefficient matrix u_bar(a) (whose determinant is the
/// density of the right-invariant measure), its inverse v_bar, and a
/// normalized quadrature rule for averaging over the group.
struct GroupChart {
    std::function<Mat(const Vec&)> rho;
    std::function<Mat(const Vec&)> u_bar;
    std::function<Mat(const Vec&)> v_bar;
    std::function<double(const Vec&)> haar_density;
    /// nodes (group-chart points) and weights, normalized to sum 1
    std::function<std::vector<std::pair<Vec, double>>(int level)> quadrature;
};

/// A principal-bundle problem instance: total-space metric, isometric group
/// action through its Killing fields, gauge functions cutting the local
/// section, and the structure constants of the group.
struct BundleSpec {
    int dim_total = 0;  // dim of the total space
    int dim_group = 0;  // dim of the structure group

    SmoothField metric;      // G_AB,   dim_total x dim_total, SPD
    SmoothField killing;     // K^A_mu, dim_total x dim_group
    SmoothField gauge;       // chi^a,  dim_group values; surface = zero set
    SmoothField gauge_grad;  // chi^a_B, dim_group x dim_total (FD of gauge if unset)

    Tensor structure_constants;  // c^g_{ab}, antisymmetric in the lower pair

    std::optional<GroupChart> group_chart;

    /// exact action of a group-chart element on a point (flow fallback if unset)
    std::function<Vec(const Vec&, const Vec&)> orbit_shift;
    /// chart membership; SDE paths leaving it are truncated
    std::function<bool(const Vec&)> in_chart;

    FdConfig fd;

    Mat metric_at(const Vec& q) const { return metric.eval(q).to_matrix(); }
    Mat killing_at(const Vec& q) const { return killing.eval(q).to_matrix(); }
    Vec gauge_at(const Vec& q) const { return gauge.eval(q).to_vector(); }

    Mat gauge_grad_at(const Vec& q) const {
        if (gauge_grad.eval) return gauge_grad.eval(q).to_matrix();
        Mat gg(dim_group, dim_total);
        for (int d = 0; d < dim_total; ++d) {
            Tensor col = fd_derivative(gauge, q, d, 1);
            for (int a = 0; a < dim_group; ++a) gg(a, d) = col(a);
        }
        return gg;
    }

    bool chart_contains(const Vec& q) const { return in_chart ? in_chart(q) : true; }
};

/// Pointwise projector package on the gauge surface.
struct ProjectorSet {
    Vec point;
    Mat Phi, Phi_inv;   // Faddeev-Popov pairing and its inverse
    Mat Lambda;         // Phi^{-1} chi_grad, dim_group x dim_total
    Mat P_perp;         // orthogonal projector onto the surface tangent
    Mat N;              // oblique projector along the orbit directions
    Mat Pi;             // orthogonal projector onto the horizontal subspace
    Mat gamma, gamma_inv;
};

struct ConnectionData {
    Mat A;     // mechanical connection, dim_group x dim_total
    Tensor F;  // its curvature, [mu][E][P], antisymmetric in (E, P)
};

// ---------------------------------------------------------------------------
// pointwise operations

/// Orbit metric gamma_{mu nu} = K^A_mu G_AB K^B_nu and its inverse.
inline std::pair<Mat, Mat> orbit_metric(const BundleSpec& b, const Vec& q) {
    const Mat G = b.metric_at(q);
    const Mat K = b.killing_at(q);
    Mat gamma = K.transpose() * G * K;
    gamma = 0.5 * (gamma + gamma.transpose());
    Eigen::LLT<Mat> llt(gamma);
    if (llt.info() != Eigen::Success)
        throw LinAlgError("orbit_metric: gamma not positive definite at " + format_point(q) +
                          " (degenerate orbit, action not free here)");
    InverseDet gi = inverse_det(gamma);
    return {gamma, gi.inverse};
}

/// Faddeev-Popov matrix Phi^b_mu = K^A_mu d(chi^b)/dQ^A and its inverse.
inline std::pair<Mat, Mat> faddeev_popov(const BundleSpec& b, const Vec& q) {
    const Mat K = b.killing_at(q);
    const Mat cg = b.gauge_grad_at(q);
    const Mat Phi = cg * K;  // [beta][mu]
    try {
        InverseDet pi = inverse_det(Phi);
        return {Phi, pi.inverse};
    } catch (const LinAlgError&) {
        throw LinAlgError("faddeev_popov: singular pairing at " + format_point(q) +
                          " (gauge surface not transverse to the orbit)");
    }
}

/// All pointwise projectors at a point of the gauge surface.
inline ProjectorSet projectors(const BundleSpec& b, const Vec& q_star) {
    const int n = b.dim_total;
    ProjectorSet p;
    p.point = q_star;

    const Vec chi = b.gauge_at(q_star);
    if (chi.cwiseAbs().maxCoeff() > 1e-8)
        throw Error("projectors: point " + format_point(q_star) + " is not on the gauge surface (|chi| = " +
                    std::to_string(chi.cwiseAbs().maxCoeff()) + ")");

    const Mat G = b.metric_at(q_star);
    const Mat K = b.killing_at(q_star);
    const Mat cg = b.gauge_grad_at(q_star);
    const InverseDet Gi = inverse_det(G);

    auto [gamma, gamma_inv] = orbit_metric(b, q_star);
    p.gamma = gamma;
    p.gamma_inv = gamma_inv;

    auto [Phi, Phi_inv] = faddeev_popov(b, q_star);
    p.Phi = Phi;
    p.Phi_inv = Phi_inv;
    p.Lambda = Phi_inv * cg;

    p.N = Mat::Identity(n, n) - K * p.Lambda;

    const Mat cgt = Gi.inverse * cg.transpose();              // chi-gradients raised
    const Mat m = cg * cgt;                                   // chi Ginv chi^T
    p.P_perp = Mat::Identity(n, n) - cgt * inverse_det(m).inverse * cg;

    p.Pi = Mat::Identity(n, n) - K * gamma_inv * K.transpose() * G;
    return p;
}

/// Mechanical connection A^nu_P = gamma^{nu mu} K^R_mu G_RP.
inline Mat mechanical_connection(const BundleSpec& b, const Vec& q) {
    auto [gamma, gamma_inv] = orbit_metric(b, q);
    (void)gamma;
    return gamma_inv * b.killing_at(q).transpose() * b.metric_at(q);
}

/// Horizontal metric G^H = Pi^T G Pi (degenerate, annihilates the orbit directions).
inline Mat horizontal_metric(const BundleSpec& b, const Vec& q) {
    const Mat G = b.metric_at(q);
    const Mat K = b.killing_at(q);
    Mat gamma = K.transpose() * G * K;
    const Mat Pi = Mat::Identity(b.dim_total, b.dim_total) - K * inverse_det(gamma).inverse * K.transpose() * G;
    Mat GH = Pi.transpose() * G * Pi;
    return 0.5 * (GH + GH.transpose());
}

/// Curvature F^mu_{EP} = d_E A^mu_P - d_P A^mu_E + c^mu_{ns} A^n_E A^s_P.
inline Tensor connection_curvature(const BundleSpec& b, const Vec& q) {
    const int n = b.dim_total, g = b.dim_group;
    auto A_at = [&b](const Vec& x) { return mechanical_connection(b, x); };
    std::vector<Mat> dA(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) dA[static_cast<std::size_t>(d)] = d_matrix(A_at, q, d, b.fd);
    const Mat A = A_at(q);
    const Tensor& c = b.structure_constants;
    Tensor F({g, n, n});
    for (int mu = 0; mu < g; ++mu)
        for (int e = 0; e < n; ++e)
            for (int pp = 0; pp < n; ++pp) {
                double v = dA[static_cast<std::size_t>(e)](mu, pp) - dA[static_cast<std::size_t>(pp)](mu, e);
                for (int nu = 0; nu < g; ++nu)
                    for (int s = 0; s < g; ++s) v += c(mu, nu, s) * A(nu, e) * A(s, pp);
                F(mu, e, pp) = v;
            }
    return F;
}

// ---------------------------------------------------------------------------
// group chart in exponential coordinates, generated from the structure constants

namespace detail {

inline Mat ad_matrix(const Tensor& c, const Vec& a) {
    const int g = static_cast<int>(a.size());
    Mat ad = Mat::Zero(g, g);
    for (int gg = 0; gg < g; ++gg)
        for (int al = 0; al < g; ++al)
            for (int be = 0; be < g; ++be) ad(gg, be) += c(gg, al, be) * a[al];
    return ad;
}

inline Mat mat_exp_series(const Mat& X, int terms = 24) {
    Mat out = Mat::Identity(X.rows(), X.cols());
    Mat pw = Mat::Identity(X.rows(), X.cols());
    double fact = 1.0;
    for (int k = 1; k <= terms; ++k) {
        pw = pw * X;
        fact *= k;
        out += pw / fact;
    }
    return out;
}

/// sum_k (-ad)^k / (k+1)!  — differential of the exponential chart.
inline Mat dexp_series(const Mat& ad, int terms = 24) {
    Mat out = Mat::Identity(ad.rows(), ad.cols());
    Mat pw = Mat::Identity(ad.rows(), ad.cols());
    double fact = 1.0;
    for (int k = 1; k <= terms; ++k) {
        pw = pw * (-ad);
        fact *= (k + 1);
        out += pw / fact;
    }
    return out;
}

}  // namespace detail

/// Group chart in exponential coordinates derived from the structure
/// constants: rho = exp(ad_a), u_bar = dexp, Haar density |det u_bar|.
inline GroupChart exponential_group_chart(const Tensor& c, int dim_group) {
    GroupChart gc;
    Tensor cc = c;
    gc.rho = [cc](const Vec& a) { return detail::mat_exp_series(detail::ad_matrix(cc, a)); };
    gc.u_bar = [cc](const Vec& a) { return detail::dexp_series(detail::ad_matrix(cc, a)); };
    gc.v_bar = [cc](const Vec& a) { return inverse_det(detail::dexp_series(detail::ad_matrix(cc, a))).inverse; };
    gc.haar_density = [cc](const Vec& a) {
        return std::abs(detail::dexp_series(detail::ad_matrix(cc, a)).determinant());
    };
    if (dim_group == 1) {
        gc.quadrature = [](int level) {
            const int m = std::max(4, level);
            std::vector<std::pair<Vec, double>> nodes;
            nodes.reserve(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) {
                Vec a(1);
                a[0] = -M_PI + 2.0 * M_PI * (i + 0.5) / m;
                nodes.emplace_back(a, 1.0 / m);
            }
            return nodes;
        };
    } else if (dim_group == 3) {
        // ball |x| <= pi in spherical coordinates; radial density 2(1 - cos t)
        gc.quadrature = [](int level) {
            const int nr = std::max(4, level), nc = std::max(4, level), np = std::max(4, level);
            std::vector<std::pair<Vec, double>> nodes;
            // Gauss-Legendre nodes on [-1, 1]
            auto legendre = [](int m) {
                std::vector<std::pair<double, double>> xw(static_cast<std::size_t>(m));
                for (int i = 0; i < m; ++i) {
                    double x = std::cos(M_PI * (i + 0.75) / (m + 0.5));
                    for (int it = 0; it < 100; ++it) {
                        double p0 = 1.0, p1 = x;
                        for (int k = 2; k <= m; ++k) {
                            double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                            p0 = p1;
                            p1 = p2;
                        }
                        double dp = m * (x * p1 - p0) / (x * x - 1.0);
                        double dx = p1 / dp;
                        x -= dx;
                        if (std::abs(dx) < 1e-15) break;
                    }
                    double p0 = 1.0, p1 = x;
                    for (int k = 2; k <= m; ++k) {
                        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                        p0 = p1;
                        p1 = p2;
                    }
                    double dp = m * (x * p1 - p0) / (x * x - 1.0);
                    xw[static_cast<std::size_t>(i)] = {x, 2.0 / ((1.0 - x * x) * dp * dp)};
                }
                return xw;
            };
            auto tw = legendre(nr);
            auto cw = legendre(nc);
            double total = 0.0;
            for (const auto& [xt, wt] : tw) {
                const double t = 0.5 * M_PI * (xt + 1.0);
                const double wr = 0.5 * M_PI * wt * 2.0 * (1.0 - std::cos(t));
                for (const auto& [xc, wc] : cw) {
                    const double st = std::sqrt(std::max(0.0, 1.0 - xc * xc));
                    for (int ip = 0; ip < np; ++ip) {
                        const double phi = 2.0 * M_PI * (ip + 0.5) / np;
                        Vec a(3);
                        a[0] = t * st * std::cos(phi);
                        a[1] = t * st * std::sin(phi);
                        a[2] = t * xc;
                        const double w = wr * wc * (2.0 * M_PI / np);
                        nodes.emplace_back(a, w);
                        total += w;
                    }
                }
            }
            for (auto& nw : nodes) nw.second /= total;
            return nodes;
        };
    }
    return gc;
}

// ---------------------------------------------------------------------------
// adapted metric in the section-plus-group coordinates

inline const GroupChart& require_chart(const BundleSpec& b) {
    if (!b.group_chart) throw UnsupportedError("operation requires a group chart on the bundle spec");
    return *b.group_chart;
}

/// Block metric of the section-adapted coordinates at (q_star, a).
inline Mat adapted_metric(const BundleSpec& b, const Vec& q_star, const Vec& a) {
    const GroupChart& gc = require_chart(b);
    const ProjectorSet p = projectors(b, q_star);
    const Mat G = b.metric_at(q_star);
    const Mat K = b.killing_at(q_star);
    const Mat ub = gc.u_bar(a);
    const int n = b.dim_total, g = b.dim_group;

    Mat out(n + g, n + g);
    out.topLeftCorner(n, n) = p.P_perp.transpose() * G * p.P_perp;
    out.topRightCorner(n, g) = p.P_perp.transpose() * G * K * ub;
    out.bottomLeftCorner(g, n) = out.topRightCorner(n, g).transpose();
    out.bottomRightCorner(g, g) = ub.transpose() * p.gamma * ub;
    return 0.5 * (out + out.transpose());
}

/// Pseudoinverse block matrix; its product with adapted_metric is
/// block-diag(P_perp, identity).
inline Mat adapted_pseudoinverse(const BundleSpec& b, const Vec& q_star, const Vec& a) {
    const GroupChart& gc = require_chart(b);
    const ProjectorSet p = projectors(b, q_star);
    const Mat Gi = inverse_det(b.metric_at(q_star)).inverse;
    const Mat cg = b.gauge_grad_at(q_star);
    const Mat vb = gc.v_bar(a);
    const int n = b.dim_total, g = b.dim_group;

    const Mat raised = Gi * cg.transpose() * p.Phi_inv.transpose();  // [C][nu]
    Mat out(n + g, n + g);
    out.topLeftCorner(n, n) = p.N * Gi * p.N.transpose();
    out.topRightCorner(n, g) = p.N * raised * vb.transpose();
    out.bottomLeftCorner(g, n) = vb * p.Phi_inv * cg * Gi * p.N.transpose();
    out.bottomRightCorner(g, g) = vb * p.Phi_inv * cg * raised * vb.transpose();
    return out;
}

/// Determinant of the adapted metric on its non-degenerate block, in the
/// factorized form pdet(P_perp^T G^H P_perp) * det(gamma) * det(u_bar)^2.
inline double adapted_determinant(const BundleSpec& b, const Vec& q_star, const Vec& a) {
    const GroupChart& gc = require_chart(b);
    const ProjectorSet p = projectors(b, q_star);
    const Mat GH = horizontal_metric(b, q_star);
    const double du = gc.u_bar(a).determinant();
    const Mat core = p.P_perp.transpose() * GH * p.P_perp;
    return pseudo_det(core, b.dim_total - b.dim_group) * p.gamma.determinant() * du * du;
}

// ---------------------------------------------------------------------------
// orbit motion: group action flow and the surface projection

/// Move a point by the group-chart element `a` (exact action when supplied,
/// otherwise an RK4 flow along K(Q) a).
inline Vec killing_flow(const BundleSpec& b, const Vec& q, const Vec& a, int substeps = 16) {
    if (b.orbit_shift) return b.orbit_shift(q, a);
    Vec x = q;
    const double ds = 1.0 / substeps;
    auto vel = [&](const Vec& y) -> Vec { return b.killing_at(y) * a; };
    for (int s = 0; s < substeps; ++s) {
        const Vec k1 = vel(x);
        const Vec k2 = vel(x + 0.5 * ds * k1);
        const Vec k3 = vel(x + 0.5 * ds * k2);
        const Vec k4 = vel(x + ds * k3);
        x += ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return x;
}

/// Newton projection onto the gauge surface along the orbit directions.
inline Vec project_to_surface(const BundleSpec& b, const Vec& q, double tol = 1e-10, int max_iter = 50) {
    Vec x = q;
    for (int it = 0; it < max_iter; ++it) {
        const Vec chi = b.gauge_at(x);
        if (chi.cwiseAbs().maxCoeff() <= tol) return x;
        auto [Phi, Phi_inv] = faddeev_popov(b, x);
        (void)Phi;
        const Vec eps = -(Phi_inv * chi);
        x = killing_flow(b, x, eps);
    }
    throw Error("project_to_surface: Newton iteration did not converge from " + format_point(q));
}

// ---------------------------------------------------------------------------
// spec self-checks (structure constants, Killing property, chart identities)

struct InvariantResidual {
    std::string name;
    double residual;
    double tolerance;
    bool pass() const { return residual <= tolerance; }
};

inline std::vector<InvariantResidual> check_bundle_invariants(const BundleSpec& b,
                                                              const std::vector<Vec>& points) {
    std::vector<InvariantResidual> out;
    const Tensor& c = b.structure_constants;
    const int g = b.dim_group;

    double r_anti = 0.0, r_trace = 0.0, r_jacobi = 0.0;
    for (int gg = 0; gg < g; ++gg)
        for (int al = 0; al < g; ++al) {
            for (int be = 0; be < g; ++be) r_anti = std::max(r_anti, std::abs(c(gg, al, be) + c(gg, be, al)));
        }
    for (int mu = 0; mu < g; ++mu) {
        double t = 0.0;
        for (int s = 0; s < g; ++s) t += c(s, s, mu);
        r_trace = std::max(r_trace, std::abs(t));
    }
    for (int al = 0; al < g; ++al)
        for (int be = 0; be < g; ++be)
            for (int ga = 0; ga < g; ++ga)
                for (int de = 0; de < g; ++de) {
                    double s = 0.0;
                    for (int e = 0; e < g; ++e)
                        s += c(e, al, be) * c(de, e, ga) + c(e, be, ga) * c(de, e, al) + c(e, ga, al) * c(de, e, be);
                    r_jacobi = std::max(r_jacobi, std::abs(s));
                }
    out.push_back({"structure_constants_antisymmetry", r_anti, 1e-14});
    out.push_back({"structure_constants_trace", r_trace, 1e-14});
    out.push_back({"structure_constants_jacobi", r_jacobi, 1e-12});

    // Killing property: K^E dG/dQ^E + G dK + (G dK)^T = 0, by finite differences
    double r_kill = 0.0;
    for (const Vec& q : points) {
        const Mat K = b.killing_at(q);
        auto Gf = [&b](const Vec& x) { return b.metric_at(x); };
        auto Kf = [&b](const Vec& x) { return b.killing_at(x); };
        for (int mu = 0; mu < g; ++mu) {
            Mat lie = Mat::Zero(b.dim_total, b.dim_total);
            for (int e = 0; e < b.dim_total; ++e) lie += K(e, mu) * d_matrix(Gf, q, e, b.fd);
            const Mat G = b.metric_at(q);
            Mat dK(b.dim_total, b.dim_total);  // dK[e][a] = d_a K^e_mu
            for (int a = 0; a < b.dim_total; ++a) dK.col(a) = d_matrix(Kf, q, a, b.fd).col(mu);
            lie += dK.transpose() * G + G * dK;
            r_kill = std::max(r_kill, lie.cwiseAbs().maxCoeff());
        }
    }
    out.push_back({"killing_property", r_kill, 1e-6});

    if (b.group_chart) {
        Vec e0 = Vec::Zero(g);
        const Mat rho_e = b.group_chart->rho(e0);
        const Mat ub_e = b.group_chart->u_bar(e0);
        out.push_back({"group_chart_rho_identity", (rho_e - Mat::Identity(g, g)).cwiseAbs().maxCoeff(), 1e-12});
        out.push_back({"group_chart_ubar_identity", (ub_e - Mat::Identity(g, g)).cwiseAbs().maxCoeff(), 1e-12});
    }
    return out;
}

}  // namespace pfb
