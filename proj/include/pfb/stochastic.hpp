#pragma once

#include <array>
#include <atomic>
#include <limits>
#include <map>
#include <random>
#include <thread>

#include "pfb/curvature.hpp"
#include "pfb/scenarios.hpp"

namespace pfb {

/// Simulation parameters. mu2_kappa is the diffusion scale (the generator is
/// (mu2_kappa/2) Laplace-Beltrami plus the potential term V/(mu2_kappa*mass)).
struct SDEConfig {
    double mu2_kappa = 1.0;
    double mass = 1.0;
    double dt = 1e-3;
    int n_steps = 500;
    long n_paths = 1;
    std::uint64_t rng_seed = 1;
    std::function<double(const Vec&)> potential;  // optional; absent means V = 0
    double max_truncated_fraction = 0.01;
    int n_threads = 0;  // 0: hardware concurrency

    void validate() const {
        if (!(dt > 0)) throw Error("SDEConfig: dt must be positive");
        if (n_paths < 1) throw Error("SDEConfig: n_paths must be >= 1");
        if (n_steps < 1) throw Error("SDEConfig: n_steps must be >= 1");
        if (!(mu2_kappa > 0)) throw Error("SDEConfig: mu2_kappa must be positive");
        if (!(mass > 0)) throw Error("SDEConfig: mass must be positive");
    }

    double t_final() const { return dt * n_steps; }
};

enum class GirsanovForm { stochastic, ito };
enum class GreenKind { original, reduced_sigma, reduced_M };

/// One discretized trajectory with its Wiener increments and accumulated
/// weight pieces. Reduced paths satisfy |chi| <= 1e-8 at every recorded state.
struct PathSample {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<Vec> dw;  // per step, variance dt per component
    double log_girsanov_stochastic = 0.0;
    double log_girsanov_ito = 0.0;
    double potential_integral = 0.0;  // int V dt along the path
    bool truncated = false;
    int truncated_at_step = -1;
};

/// Weak Monte Carlo pairing E[f(end) * weight] with its standard error.
struct GreenEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    long n_paths = 0;
    long n_truncated = 0;
    long n_nonfinite = 0;
    std::map<std::string, double> extras;
};

struct ReductionCheck {
    GreenEstimate reduced;
    GreenEstimate original;
    double difference = 0.0;
    double combined_se = 0.0;
    double sigma_residual = 0.0;  // |difference| / combined_se
};

// ---------------------------------------------------------------------------
// deterministic helpers

namespace detail {

inline double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

inline std::pair<double, double> mean_and_se(const std::vector<double>& v) {
    const std::size_t n = v.size();
    if (n == 0) return {0.0, 0.0};
    const double mean = pairwise_sum(v.data(), n) / static_cast<double>(n);
    if (n == 1) return {mean, 0.0};
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (v[i] - mean) * (v[i] - mean);
    const double var = pairwise_sum(sq.data(), n) / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

inline std::mt19937_64 path_rng(std::uint64_t seed, long path_index) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(0x517cc1b727220a95ULL + static_cast<std::uint64_t>(path_index))));
}

/// Run `body(path_index)` over [0, n); results must go to disjoint slots so
/// the outcome is independent of the thread count.
template <class Body>
inline void for_each_path(long n, int n_threads, Body body) {
    int t = n_threads > 0 ? n_threads : static_cast<int>(std::thread::hardware_concurrency());
    if (t < 1) t = 1;
    if (t == 1 || n < 4 * t) {
        for (long i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(t));
    std::atomic<long> next{0};
    const long chunk = std::max<long>(1, n / (16 * t));
    for (int k = 0; k < t; ++k)
        pool.emplace_back([&]() {
            for (;;) {
                const long begin = next.fetch_add(chunk);
                if (begin >= n) return;
                const long end = std::min(n, begin + chunk);
                for (long i = begin; i < end; ++i) body(i);
            }
        });
    for (auto& th : pool) th.join();
}

/// Upper-triangular factor X with X X^T = G^{-1}, from the Cholesky of G.
inline Mat diffusion_factor(const Mat& G) {
    Eigen::LLT<Mat> llt(G);
    if (llt.info() != Eigen::Success)
        throw LinAlgError("diffusion_factor: metric not positive definite along the path");
    const Mat C = llt.matrixL();
    return C.transpose().triangularView<Eigen::Upper>().solve(Mat::Identity(G.rows(), G.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// steppers

namespace detail {

/// Drift of the chart representation of the invariant diffusion:
/// (mu2k/2) G^{-1/2} d_B ( sqrt(G) G^{AB} ).
inline Vec original_drift(const BundleSpec& b, const Vec& q, double mu2k) {
    const int n = b.dim_total;
    auto Wf = [&b](const Vec& x) -> Mat {
        const Mat G = b.metric_at(x);
        InverseDet gi = inverse_det(G);
        return std::sqrt(gi.det) * gi.inverse;
    };
    const double sqrt_det = std::sqrt(inverse_det(b.metric_at(q)).det);
    Vec drift = Vec::Zero(n);
    for (int d = 0; d < n; ++d) drift += d_matrix(Wf, q, d, b.fd).col(d);
    return (0.5 * mu2k / sqrt_det) * drift;
}

/// Everything the reduced stepper needs at one surface point.
struct ReducedCoeffs {
    Vec drift;             // mu2k * (-1/2 h:Grep + j_I)
    Mat B;                 // N X, diffusion factor (X X^T = G^{-1})
    Vec theta;             // per-component integrand of the measure-change factor
    double jtilde = 0.0;
    double log_det_gamma = 0.0;
};

/// Elementary pointwise package used by the fused stencil sweep below.
struct PointEval {
    Mat G, K, cg, N, GH;
    double ln_gamma = 0.0;
};

inline PointEval point_eval(const BundleSpec& b, const Vec& x, bool need_gh) {
    PointEval p;
    p.G = b.metric_at(x);
    p.K = b.killing_at(x);
    p.cg = b.gauge_grad_at(x);
    const Mat Phi = p.cg * p.K;
    const Mat Phi_inv = inverse_det(Phi).inverse;
    p.N = Mat::Identity(b.dim_total, b.dim_total) - p.K * (Phi_inv * p.cg);
    Mat gamma = p.K.transpose() * p.G * p.K;
    InverseDet gi = inverse_det(gamma);
    p.ln_gamma = std::log(gi.det);
    if (need_gh) {
        const Mat GK = p.G * p.K;
        p.GH = p.G - GK * gi.inverse * GK.transpose();  // equals the projected metric
    }
    return p;
}

/// Single-sweep evaluation of the reduced-SDE coefficients: one stencil pass
/// supplies the symbol representative, the projector derivative, the
/// log-det-gamma gradient/Hessian, and the measure-change integrands.
inline ReducedCoeffs reduced_coeffs(const BundleSpec& b, const Vec& q, double mu2k, bool need_jtilde,
                                    bool need_theta) {
    const int n = b.dim_total;
    const PointEval c0 = point_eval(b, q, true);
    const Mat Gi = inverse_det(c0.G).inverse;
    const Mat gamma = c0.K.transpose() * c0.G * c0.K;
    const InverseDet gam_id = inverse_det(gamma);
    const Mat h = c0.N * Gi * c0.N.transpose();

    ReducedCoeffs rc;
    rc.log_det_gamma = c0.ln_gamma;

    // axis sweep (shared step for first and second differences)
    std::vector<Mat> dGH(static_cast<std::size_t>(n)), dN(static_cast<std::size_t>(n));
    Vec f(n);
    Mat hess = Mat::Zero(n, n);
    std::vector<double> hstep(static_cast<std::size_t>(n));
    std::vector<PointEval> plus(static_cast<std::size_t>(n)), minus(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) {
        const double hd = b.fd.h2(q[d]);
        hstep[static_cast<std::size_t>(d)] = hd;
        Vec qp = q, qm = q;
        qp[d] += hd;
        qm[d] -= hd;
        plus[static_cast<std::size_t>(d)] = point_eval(b, qp, true);
        minus[static_cast<std::size_t>(d)] = point_eval(b, qm, true);
        const PointEval& pp = plus[static_cast<std::size_t>(d)];
        const PointEval& pm = minus[static_cast<std::size_t>(d)];
        dGH[static_cast<std::size_t>(d)] = (pp.GH - pm.GH) / (2 * hd);
        dN[static_cast<std::size_t>(d)] = (pp.N - pm.N) / (2 * hd);
        f[d] = (pp.ln_gamma - pm.ln_gamma) / (2 * hd);
        if (need_jtilde) hess(d, d) = (pp.ln_gamma - 2 * c0.ln_gamma + pm.ln_gamma) / (hd * hd);
    }
    if (need_jtilde) {
        auto ln_gamma_at = [&b](const Vec& x) {
            const Mat K = b.killing_at(x);
            const Mat G = b.metric_at(x);
            return std::log((K.transpose() * G * K).determinant());
        };
        for (int a = 0; a < n; ++a)
            for (int d = a + 1; d < n; ++d) {
                const double ha = hstep[static_cast<std::size_t>(a)], hd = hstep[static_cast<std::size_t>(d)];
                Vec qpp = q, qpm = q, qmp = q, qmm = q;
                qpp[a] += ha; qpp[d] += hd;
                qpm[a] += ha; qpm[d] -= hd;
                qmp[a] -= ha; qmp[d] += hd;
                qmm[a] -= ha; qmm[d] -= hd;
                hess(a, d) = hess(d, a) =
                    (ln_gamma_at(qpp) - ln_gamma_at(qpm) - ln_gamma_at(qmp) + ln_gamma_at(qmm)) / (4 * ha * hd);
            }
    }

    // symbol representative Grep^A_{CD} = N^A_S G^{SE} * lowered pattern of dGH,
    // and the unprojected raise Ghat for the orbit-space mean curvature
    auto low = [&](int e, int cidx, int d) {
        return 0.5 * (dGH[static_cast<std::size_t>(d)](e, cidx) + dGH[static_cast<std::size_t>(cidx)](e, d) -
                      dGH[static_cast<std::size_t>(e)](cidx, d));
    };
    Tensor ghat({n, n, n});
    for (int a = 0; a < n; ++a)
        for (int cidx = 0; cidx < n; ++cidx)
            for (int d = cidx; d < n; ++d) {
                double v = 0;
                for (int e = 0; e < n; ++e) v += Gi(a, e) * low(e, cidx, d);
                ghat(a, cidx, d) = v;
                ghat(a, d, cidx) = v;
            }
    Tensor grep({n, n, n});
    for (int a = 0; a < n; ++a)
        for (int cidx = 0; cidx < n; ++cidx)
            for (int d = 0; d < n; ++d) {
                double v = 0;
                for (int m = 0; m < n; ++m) v += c0.N(a, m) * ghat(m, cidx, d);
                grep(a, cidx, d) = v;
            }

    Vec drift(n);
    for (int a = 0; a < n; ++a) {
        double hg = 0, j1 = 0;
        for (int cidx = 0; cidx < n; ++cidx)
            for (int bb = 0; bb < n; ++bb) {
                const double hcb = h(cidx, bb);
                if (hcb == 0.0) continue;
                hg += hcb * grep(a, cidx, bb);
                double term = dN[static_cast<std::size_t>(bb)](a, cidx) + ghat(a, cidx, bb);
                for (int m = 0; m < n; ++m) term -= c0.N(a, m) * ghat(m, cidx, bb);
                j1 += 0.5 * hcb * term;
            }
        drift[a] = mu2k * (-0.5 * hg + j1);
    }
    rc.drift = drift;

    const Mat X = diffusion_factor(c0.G);
    rc.B = c0.N * X;

    if (need_jtilde) {
        double term1 = 0, term2 = 0, term3 = 0;
        for (int a = 0; a < n; ++a)
            for (int e = 0; e < n; ++e) {
                term1 += 0.25 * h(a, e) * f[a] * f[e];
                term2 += h(a, e) * hess(a, e);
            }
        const Mat GiNt = Gi * c0.N.transpose();
        for (int bb = 0; bb < n; ++bb) {
            double v = 0;
            for (int cidx = 0; cidx < n; ++cidx)
                for (int f2 = 0; f2 < n; ++f2)
                    v += GiNt(cidx, f2) * (dN[static_cast<std::size_t>(f2)](bb, cidx) - grep(bb, f2, cidx));
            term3 += v * f[bb];
        }
        rc.jtilde = term1 + term2 + term3;
    }

    if (need_theta) {
        // theta = -1/2 sqrt(mu2k) X^T G^H w, with w the inverse-orbit-metric
        // contraction of the covariant acceleration of the Killing fields
        Vec w = Vec::Zero(n);
        std::vector<Mat> dG(static_cast<std::size_t>(n)), dK(static_cast<std::size_t>(n));
        for (int d = 0; d < n; ++d) {
            if (b.metric.analytic_derivative) {
                dG[static_cast<std::size_t>(d)] = b.metric.analytic_derivative(q, d).to_matrix();
            } else {
                dG[static_cast<std::size_t>(d)] =
                    (plus[static_cast<std::size_t>(d)].G - minus[static_cast<std::size_t>(d)].G) /
                    (2 * hstep[static_cast<std::size_t>(d)]);
            }
            if (b.killing.analytic_derivative) {
                dK[static_cast<std::size_t>(d)] = b.killing.analytic_derivative(q, d).to_matrix();
            } else {
                dK[static_cast<std::size_t>(d)] =
                    (plus[static_cast<std::size_t>(d)].K - minus[static_cast<std::size_t>(d)].K) /
                    (2 * hstep[static_cast<std::size_t>(d)]);
            }
        }
        const int g = b.dim_group;
        for (int al = 0; al < g; ++al)
            for (int be = 0; be < g; ++be) {
                const double gi = gam_id.inverse(al, be);
                if (gi == 0.0) continue;
                for (int cc = 0; cc < n; ++cc) {
                    double v = 0;
                    for (int a = 0; a < n; ++a) {
                        v += c0.K(a, al) * dK[static_cast<std::size_t>(a)](cc, be);
                        for (int b2 = 0; b2 < n; ++b2) {
                            // Levi-Civita symbol assembled inline from dG
                            double gam_cab = 0;
                            for (int e = 0; e < n; ++e)
                                gam_cab += 0.5 * Gi(cc, e) *
                                           (dG[static_cast<std::size_t>(a)](e, b2) + dG[static_cast<std::size_t>(b2)](e, a) -
                                            dG[static_cast<std::size_t>(e)](a, b2));
                            v += c0.K(a, al) * c0.K(b2, be) * gam_cab;
                        }
                    }
                    w[cc] += gi * v;
                }
            }
        rc.theta = -0.5 * std::sqrt(mu2k) * (X.transpose() * (c0.GH * w));
    } else {
        rc.theta = Vec::Zero(n);
    }
    return rc;
}

/// Reference composition of the same coefficients through the curvature-module
/// operations; used to validate the fused sweep.
inline ReducedCoeffs reduced_coeffs_reference(const BundleSpec& b, const Vec& q, double mu2k) {
    const Frame fr = frame(b, q);
    const int n = fr.n;
    const Tensor low = horizontal_lowered(b, q);
    const Tensor ghat = raise_first(fr.Gi, low);
    const Tensor grep = project_first(fr.N, ghat);

    ReducedCoeffs rc;
    rc.log_det_gamma = std::log(fr.det_gamma);
    const Vec j1 = mean_curvature_base(b, q);
    Vec drift(n);
    for (int a = 0; a < n; ++a) {
        double hg = 0;
        for (int cidx = 0; cidx < n; ++cidx)
            for (int bb = 0; bb < n; ++bb) hg += fr.h(cidx, bb) * grep(a, cidx, bb);
        drift[a] = mu2k * (-0.5 * hg + j1[a]);
    }
    rc.drift = drift;
    rc.B = fr.N * diffusion_factor(fr.G);
    rc.jtilde = jacobian_integrand_coords(b, q);
    const Tensor gam = christoffel_coordinate(b, q);
    const Vec w = orbit_acceleration(b, fr, gam);
    rc.theta = -0.5 * std::sqrt(mu2k) * (diffusion_factor(fr.G).transpose() * (fr.GH * w));
    return rc;
}

}  // namespace detail

/// Euler-Maruyama trajectory of the invariant diffusion in the chart.
/// `given_noise` substitutes the Wiener increments (shared-noise studies and
/// the zero-noise limit).
inline PathSample simulate_original(const BundleSpec& b, const SDEConfig& cfg, const Vec& start,
                                    const std::vector<Vec>* given_noise = nullptr) {
    cfg.validate();
    if (!b.chart_contains(start)) throw Error("simulate_original: start point outside chart");
    PathSample p;
    std::mt19937_64 rng = detail::path_rng(cfg.rng_seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sq_dt = std::sqrt(cfg.dt);
    const double mu_sqrt_k = std::sqrt(cfg.mu2_kappa);

    Vec q = start;
    p.times.push_back(0.0);
    p.states.push_back(q);
    for (int s = 0; s < cfg.n_steps; ++s) {
        if (cfg.potential) p.potential_integral += cfg.potential(q) * cfg.dt;
        const Vec drift = detail::original_drift(b, q, cfg.mu2_kappa);
        const Mat X = detail::diffusion_factor(b.metric_at(q));
        Vec dw(b.dim_total);
        if (given_noise) {
            if (static_cast<std::size_t>(s) >= given_noise->size())
                throw Error("simulate_original: supplied noise is shorter than n_steps");
            dw = (*given_noise)[static_cast<std::size_t>(s)];
        } else {
            for (int i = 0; i < b.dim_total; ++i) dw[i] = gauss(rng) * sq_dt;
        }
        q = q + drift * cfg.dt + mu_sqrt_k * (X * dw);
        if (!b.chart_contains(q)) {
            p.truncated = true;
            p.truncated_at_step = s;
            break;
        }
        p.dw.push_back(dw);
        p.times.push_back((s + 1) * cfg.dt);
        p.states.push_back(q);
    }
    return p;
}

/// Euler-Maruyama trajectory of the reduced diffusion on the gauge surface,
/// re-projected onto the surface after every step.
inline PathSample simulate_reduced(const BundleSpec& b, const SDEConfig& cfg, const Vec& start,
                                   const std::vector<Vec>* given_noise = nullptr) {
    cfg.validate();
    Vec q = project_to_surface(b, start);
    PathSample p;
    std::mt19937_64 rng = detail::path_rng(cfg.rng_seed, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double sq_dt = std::sqrt(cfg.dt);
    const double mu_sqrt_k = std::sqrt(cfg.mu2_kappa);

    p.times.push_back(0.0);
    p.states.push_back(q);
    const double ldg_start = detail::log_det_gamma_field(b)(q);
    double ldg_end = ldg_start, jint = 0.0;
    for (int s = 0; s < cfg.n_steps; ++s) {
        if (cfg.potential) p.potential_integral += cfg.potential(q) * cfg.dt;
        const auto rc = detail::reduced_coeffs(b, q, cfg.mu2_kappa, true, true);
        Vec dw(b.dim_total);
        if (given_noise) {
            if (static_cast<std::size_t>(s) >= given_noise->size())
                throw Error("simulate_reduced: supplied noise is shorter than n_steps");
            dw = (*given_noise)[static_cast<std::size_t>(s)];
        } else {
            for (int i = 0; i < b.dim_total; ++i) dw[i] = gauss(rng) * sq_dt;
        }
        p.log_girsanov_stochastic += rc.theta.dot(dw) - 0.5 * rc.theta.squaredNorm() * cfg.dt;
        jint += rc.jtilde * cfg.dt;

        q = q + rc.drift * cfg.dt + mu_sqrt_k * (rc.B * dw);
        if (!b.chart_contains(q)) {
            p.truncated = true;
            p.truncated_at_step = s;
            break;
        }
        q = project_to_surface(b, q);
        ldg_end = detail::log_det_gamma_field(b)(q);
        p.dw.push_back(dw);
        p.times.push_back((s + 1) * cfg.dt);
        p.states.push_back(q);
    }
    p.log_girsanov_ito = 0.25 * (ldg_end - ldg_start) - 0.125 * cfg.mu2_kappa * jint;
    return p;
}

/// Recompute the measure-change log factor of a recorded reduced path in
/// either form; independent post-processing of the stored states and noise.
inline double girsanov_log_factor(const BundleSpec& b, const SDEConfig& cfg, const PathSample& path,
                                  GirsanovForm form) {
    if (path.dw.empty() && path.states.size() > 1)
        throw Error("girsanov_log_factor: path has no recorded Wiener increments");
    double log_st = 0.0, jint = 0.0;
    for (std::size_t s = 0; s + 1 < path.states.size(); ++s) {
        const auto rc = detail::reduced_coeffs(b, path.states[s], cfg.mu2_kappa,
                                               form == GirsanovForm::ito, form == GirsanovForm::stochastic);
        if (form == GirsanovForm::stochastic)
            log_st += rc.theta.dot(path.dw[s]) - 0.5 * rc.theta.squaredNorm() * cfg.dt;
        else
            jint += rc.jtilde * cfg.dt;
    }
    if (form == GirsanovForm::stochastic) return log_st;
    auto ldg = detail::log_det_gamma_field(b);
    return 0.25 * (ldg(path.states.back()) - ldg(path.states.front())) - 0.125 * cfg.mu2_kappa * jint;
}

// ---------------------------------------------------------------------------
// weak-pairing estimators

/// Weak pairing E[f(end) * weight] for the chosen process.
///
/// original:       weight = exp( int V dt / (mu2k m) )
/// reduced_sigma:  adds the stochastic-form measure-change factor
/// reduced_M:      adds the boundary/time-integral form
///                 (det-gamma ratio)^{1/4} exp(-mu2k/8 int Jtilde dt)
inline GreenEstimate estimate_green(const BundleSpec& b, const SDEConfig& cfg, GreenKind kind, const Vec& start,
                                    const std::function<double(const Vec&)>& f) {
    cfg.validate();
    const double sq_dt = std::sqrt(cfg.dt);
    const double mu_sqrt_k = std::sqrt(cfg.mu2_kappa);
    const double pot_scale = 1.0 / (cfg.mu2_kappa * cfg.mass);

    std::vector<double> vals(static_cast<std::size_t>(cfg.n_paths), 0.0);
    std::vector<unsigned char> ok(static_cast<std::size_t>(cfg.n_paths), 0);
    std::vector<unsigned char> trunc(static_cast<std::size_t>(cfg.n_paths), 0);

    Vec start_red = start;
    double ldg_start = 0.0;
    if (kind != GreenKind::original) {
        start_red = project_to_surface(b, start);
        ldg_start = detail::log_det_gamma_field(b)(start_red);
    }

    detail::for_each_path(cfg.n_paths, cfg.n_threads, [&](long i) {
        std::mt19937_64 rng = detail::path_rng(cfg.rng_seed, i);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Vec q = (kind == GreenKind::original) ? start : start_red;
        double pot = 0.0, log_w = 0.0, jint = 0.0, ldg_end = ldg_start;
        bool truncated = false;
        for (int s = 0; s < cfg.n_steps; ++s) {
            if (cfg.potential) pot += cfg.potential(q) * cfg.dt;
            Vec dw(b.dim_total);
            for (int d = 0; d < b.dim_total; ++d) dw[d] = gauss(rng) * sq_dt;
            if (kind == GreenKind::original) {
                const Vec drift = detail::original_drift(b, q, cfg.mu2_kappa);
                const Mat X = detail::diffusion_factor(b.metric_at(q));
                q = q + drift * cfg.dt + mu_sqrt_k * (X * dw);
            } else {
                const auto rc = detail::reduced_coeffs(b, q, cfg.mu2_kappa, kind == GreenKind::reduced_M,
                                                       kind == GreenKind::reduced_sigma);
                if (kind == GreenKind::reduced_sigma)
                    log_w += rc.theta.dot(dw) - 0.5 * rc.theta.squaredNorm() * cfg.dt;
                else
                    jint += rc.jtilde * cfg.dt;
                q = q + rc.drift * cfg.dt + mu_sqrt_k * (rc.B * dw);
            }
            if (!b.chart_contains(q)) {
                truncated = true;
                break;
            }
            if (kind != GreenKind::original) {
                q = project_to_surface(b, q);
                if (s + 1 == cfg.n_steps) ldg_end = detail::log_det_gamma_field(b)(q);
            }
        }
        if (truncated) {
            trunc[static_cast<std::size_t>(i)] = 1;
            return;
        }
        double w = std::exp(pot * pot_scale);
        if (kind == GreenKind::reduced_sigma) w *= std::exp(log_w);
        if (kind == GreenKind::reduced_M)
            w *= std::exp(0.25 * (ldg_end - ldg_start) - 0.125 * cfg.mu2_kappa * jint);
        const double v = f(q) * w;
        if (std::isfinite(v)) {
            vals[static_cast<std::size_t>(i)] = v;
            ok[static_cast<std::size_t>(i)] = 1;
        }
    });

    GreenEstimate g;
    std::vector<double> kept;
    kept.reserve(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (trunc[i]) {
            ++g.n_truncated;
        } else if (!ok[i]) {
            ++g.n_nonfinite;
        } else {
            kept.push_back(vals[i]);
        }
    }
    auto [mean, se] = detail::mean_and_se(kept);
    g.value = mean;
    g.standard_error = se;
    g.n_paths = static_cast<long>(kept.size());
    if (static_cast<double>(g.n_truncated) > cfg.max_truncated_fraction * static_cast<double>(cfg.n_paths))
        throw Error("estimate_green: " + std::to_string(g.n_truncated) + " of " + std::to_string(cfg.n_paths) +
                    " paths left the chart (limit fraction " + std::to_string(cfg.max_truncated_fraction) + ")");
    if (kind != GreenKind::original) {
        // both prefactor normalizations, recorded for inspection
        g.extras["gamma_quarter_start"] = std::exp(0.25 * ldg_start);
        g.extras["value_times_gamma_quarter_start"] = g.value * std::exp(0.25 * ldg_start);
    }
    return g;
}

/// Compare the reduced-side pairing with the group-averaged original-side
/// pairing for the same start point and test function on the surface.
inline ReductionCheck verify_reduction_relation(const BundleSpec& b, const SDEConfig& cfg, const Vec& start,
                                                const std::function<double(const Vec&)>& f_surface,
                                                int quadrature_level = 8) {
    cfg.validate();
    const GroupChart& gc = require_chart(b);
    const auto nodes = gc.quadrature(quadrature_level);
    if (nodes.empty()) throw UnsupportedError("verify_reduction_relation: no quadrature rule for this group");

    ReductionCheck out;
    out.reduced = estimate_green(b, cfg, GreenKind::reduced_M, start, f_surface);

    auto f_orbit_avg = [&](const Vec& p) {
        double acc = 0.0;
        for (const auto& [a, w] : nodes) acc += w * f_surface(project_to_surface(b, killing_flow(b, p, a)));
        return acc;
    };
    SDEConfig cfg_orig = cfg;
    cfg_orig.rng_seed = splitmix64(cfg.rng_seed + 0x9e3779b97f4a7c15ULL);  // independent noise
    out.original = estimate_green(b, cfg_orig, GreenKind::original, project_to_surface(b, start), f_orbit_avg);

    out.difference = out.reduced.value - out.original.value;
    out.combined_se = std::hypot(out.reduced.standard_error, out.original.standard_error);
    out.sigma_residual = out.combined_se > 0
                             ? std::abs(out.difference) / out.combined_se
                             : (std::abs(out.difference) > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// generators

enum class GeneratorKind { op2, op3 };

/// Apply the reduced-evolution generator to a test function at a surface point.
///
/// op2 generates the fully weighted pairing (drift carries both mean-curvature
/// vectors); op3 generates the time-integral-weighted pairing, whose extra
/// potential is -(mu2k/8) Jtilde and whose drift keeps only the orbit-space
/// mean curvature.
inline double apply_generator(const BundleSpec& b, const SDEConfig& cfg,
                              const std::function<double(const Vec&)>& psi, const Vec& q_star,
                              GeneratorKind which) {
    const detail::Frame fr = detail::frame(b, q_star);
    const Vec grad = grad_scalar(psi, q_star, b.fd);
    const Mat hess = hess_scalar(psi, q_star, b.fd);

    const Tensor grep = christoffel_horizontal(b, q_star);
    double second = 0.0, hgamma_drift = 0.0;
    for (int a = 0; a < fr.n; ++a)
        for (int bb = 0; bb < fr.n; ++bb) second += fr.h(a, bb) * hess(a, bb);
    for (int a = 0; a < fr.n; ++a) {
        double hg = 0;
        for (int cidx = 0; cidx < fr.n; ++cidx)
            for (int bb = 0; bb < fr.n; ++bb) hg += fr.h(cidx, bb) * grep(a, cidx, bb);
        hgamma_drift += hg * grad[a];
    }
    const Vec j1 = mean_curvature_base(b, q_star);
    double out = 0.5 * cfg.mu2_kappa * (second - hgamma_drift);
    if (which == GeneratorKind::op2) {
        const Vec j2 = mean_curvature_orbit(b, q_star);
        out += cfg.mu2_kappa * (j1 + j2).dot(grad);
    } else {
        out += cfg.mu2_kappa * j1.dot(grad);
        out += -0.125 * cfg.mu2_kappa * jacobian_integrand_coords(b, q_star) * psi(q_star);
    }
    if (cfg.potential) out += cfg.potential(q_star) * psi(q_star) / (cfg.mu2_kappa * cfg.mass);
    return out;
}

/// Monte Carlo estimate of (E[psi(xi_dt) W] - psi(x0)) / dt over one step,
/// with the leading noise term subtracted path-by-path as a control variate.
/// Converges to apply_generator(..) as dt -> 0.
struct DerivativeEstimate {
    double value = 0.0;
    double standard_error = 0.0;
};

inline DerivativeEstimate semigroup_derivative_estimate(const BundleSpec& b, const SDEConfig& cfg,
                                                        GeneratorKind which, const Vec& start,
                                                        const std::function<double(const Vec&)>& psi) {
    SDEConfig one = cfg;
    one.n_steps = 1;
    one.validate();
    const Vec q0 = project_to_surface(b, start);
    const double psi0 = psi(q0);
    const Vec grad0 = grad_scalar(psi, q0, b.fd);
    const auto rc0 = detail::reduced_coeffs(b, q0, one.mu2_kappa, true, true);
    const double mu_sqrt_k = std::sqrt(one.mu2_kappa);
    const double sq_dt = std::sqrt(one.dt);
    const double pot_scale = 1.0 / (one.mu2_kappa * one.mass);

    std::vector<double> vals(static_cast<std::size_t>(one.n_paths), 0.0);
    detail::for_each_path(one.n_paths, one.n_threads, [&](long i) {
        std::mt19937_64 rng = detail::path_rng(one.rng_seed, i);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Vec dw(b.dim_total);
        for (int d = 0; d < b.dim_total; ++d) dw[d] = gauss(rng) * sq_dt;
        Vec q1 = q0 + rc0.drift * one.dt + mu_sqrt_k * (rc0.B * dw);
        q1 = project_to_surface(b, q1);
        double w = 1.0;
        if (one.potential) w *= std::exp(one.potential(q0) * one.dt * pot_scale);
        if (which == GeneratorKind::op2)
            w *= std::exp(rc0.theta.dot(dw) - 0.5 * rc0.theta.squaredNorm() * one.dt);
        else
            w *= std::exp(-0.125 * one.mu2_kappa * rc0.jtilde * one.dt);
        const double noise_part = mu_sqrt_k * grad0.dot(rc0.B * dw);
        vals[static_cast<std::size_t>(i)] = (psi(q1) * w - psi0 - noise_part) / one.dt;
    });
    auto [mean, se] = detail::mean_and_se(vals);
    return {mean, se};
}

}  // namespace pfb
