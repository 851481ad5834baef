#pragma once

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pfb/stochastic.hpp"

namespace pfb {

// Exit-code contract: 0 pass, 1 numeric failure, 2 usage/config error.
inline constexpr int exit_pass = 0;
inline constexpr int exit_numeric_failure = 1;
inline constexpr int exit_usage = 2;

/// One machine-readable result row (long format, shared by all commands).
struct ResultRow {
    std::string quantity;
    Vec point;
    double value = 0.0;
    bool has_oracle = false;
    double oracle = 0.0;
    double residual = 0.0;
    double tolerance = 0.0;
    bool pass = true;
    std::string provenance;
};

/// Batch-run configuration; populated from a strict JSON document and/or
/// command-line flags.
struct RunConfig {
    std::string scenario;
    std::vector<Vec> points;          // empty: scenario recommended points
    double eps_f = 0.0;               // 0: take the scenario's frozen value
    double fd_step = 0.0;             // 0: library default
    double tolerance = 1e-5;          // report residual gate
    double dt = 1e-3;
    int n_steps = 0;                  // 0: derive from t_final
    double t_final = 0.5;
    long n_paths = 10000;
    std::uint64_t seed = 1;
    double mu2_kappa = 1.0;
    double mass = 1.0;
    int quadrature_level = 16;
    int n_threads = 0;
    std::string out;                  // empty: stdout
    std::string format = "json";     // json | csv

    int steps() const { return n_steps > 0 ? n_steps : std::max(1, static_cast<int>(std::llround(t_final / dt))); }
};

namespace cli_detail {

inline Vec to_vec(const nlohmann::json& j) {
    Vec v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

/// %.17g rendering: stable, locale-free, round-trip exact.
inline std::string num17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

inline std::string point_str(const Vec& p) {
    std::string s;
    for (int i = 0; i < p.size(); ++i) s += (i ? ";" : "") + num17(p[i]);
    return s;
}

inline nlohmann::ordered_json row_json(const ResultRow& r) {
    nlohmann::ordered_json j;
    j["quantity"] = r.quantity;
    j["point"] = nlohmann::ordered_json::array();
    for (int i = 0; i < r.point.size(); ++i) j["point"].push_back(r.point[i]);
    j["value"] = r.value;
    if (r.has_oracle) {
        j["oracle"] = r.oracle;
        j["residual"] = r.residual;
        j["tolerance"] = r.tolerance;
        j["provenance"] = r.provenance;
    }
    j["pass"] = r.pass;
    return j;
}

inline int write_rows(const RunConfig& cfg, const std::string& command, const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    if (cfg.format == "csv") {
        os << "command,quantity,point,value,oracle,residual,tolerance,pass,provenance\n";
        for (const auto& r : rows) {
            os << command << ',' << r.quantity << ',' << point_str(r.point) << ',' << num17(r.value) << ',';
            if (r.has_oracle) os << num17(r.oracle) << ',' << num17(r.residual) << ',' << num17(r.tolerance);
            else os << ",,";
            os << ',' << (r.pass ? "true" : "false") << ',' << '"' << r.provenance << '"' << '\n';
        }
    } else {
        nlohmann::ordered_json doc;
        doc["command"] = command;
        doc["scenario"] = cfg.scenario;
        doc["seed"] = cfg.seed;
        doc["rows"] = nlohmann::ordered_json::array();
        for (const auto& r : rows) doc["rows"].push_back(row_json(r));
        os << doc.dump(2) << '\n';
    }
    if (cfg.out.empty()) {
        std::cout << os.str();
    } else {
        std::ofstream f(cfg.out, std::ios::binary);
        if (!f) {
            std::cerr << "error: cannot open output file " << cfg.out << "\n";
            return exit_usage;
        }
        f << os.str();
    }
    return exit_pass;
}

}  // namespace cli_detail

/// Strict JSON config parser: unknown keys are rejected.
inline void parse_config_json(const nlohmann::json& j, RunConfig& cfg) {
    static const std::vector<std::string> known = {
        "scenario", "points", "eps_f", "fd_step", "tolerance", "dt",    "n_steps",    "t_final",
        "n_paths",  "seed",   "mu2_kappa", "mass", "quadrature_level", "n_threads", "out", "format"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw Error("config: unknown key '" + it.key() + "'");
    }
    if (j.contains("scenario")) cfg.scenario = j["scenario"].get<std::string>();
    if (j.contains("points"))
        for (const auto& p : j["points"]) cfg.points.push_back(cli_detail::to_vec(p));
    if (j.contains("eps_f")) cfg.eps_f = j["eps_f"].get<double>();
    if (j.contains("fd_step")) cfg.fd_step = j["fd_step"].get<double>();
    if (j.contains("tolerance")) cfg.tolerance = j["tolerance"].get<double>();
    if (j.contains("dt")) cfg.dt = j["dt"].get<double>();
    if (j.contains("n_steps")) cfg.n_steps = j["n_steps"].get<int>();
    if (j.contains("t_final")) cfg.t_final = j["t_final"].get<double>();
    if (j.contains("n_paths")) cfg.n_paths = j["n_paths"].get<long>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("mu2_kappa")) cfg.mu2_kappa = j["mu2_kappa"].get<double>();
    if (j.contains("mass")) cfg.mass = j["mass"].get<double>();
    if (j.contains("quadrature_level")) cfg.quadrature_level = j["quadrature_level"].get<int>();
    if (j.contains("n_threads")) cfg.n_threads = j["n_threads"].get<int>();
    if (j.contains("out")) cfg.out = j["out"].get<std::string>();
    if (j.contains("format")) cfg.format = j["format"].get<std::string>();
    if (cfg.format != "json" && cfg.format != "csv") throw Error("config: format must be json or csv");
    if (cfg.dt <= 0) throw Error("config: dt must be positive");
    if (cfg.n_paths < 0) throw Error("config: n_paths must be positive");
    if (cfg.tolerance <= 0) throw Error("config: tolerance must be positive");
}

namespace cli_detail {

inline Scenario load_scenario(const RunConfig& cfg) {
    Scenario s = make_scenario(cfg.scenario);
    if (cfg.fd_step > 0) {
        s.spec.fd.h1_rel = cfg.fd_step;
        s.spec.metric.fd.h1_rel = cfg.fd_step;
        for (auto& [name, variant] : s.gauge_variants) {
            (void)name;
            variant.fd.h1_rel = cfg.fd_step;
        }
    }
    return s;
}

inline void push_scalar(std::vector<ResultRow>& rows, const Scenario& s, const Vec& pt, const std::string& name,
                        double value, double gate) {
    ResultRow r;
    r.quantity = name;
    r.point = pt;
    r.value = value;
    if (auto e = s.find_oracle(name, pt)) {
        r.has_oracle = true;
        r.oracle = e->value;
        r.residual = std::abs(value - e->value);
        r.tolerance = std::max(e->tolerance, 0.0);
        r.provenance = e->provenance;
        r.pass = e->tolerance <= 0 ? value == e->value : r.residual <= r.tolerance;
    } else {
        r.pass = std::abs(value) <= gate || gate <= 0;
        r.pass = true;  // no oracle and no gate: informational
    }
    rows.push_back(r);
}

}  // namespace cli_detail

/// Geometry report: one row per (quantity, point) with oracle residuals.
inline int cmd_report(const RunConfig& cfg) {
    Scenario s;
    try {
        s = cli_detail::load_scenario(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }
    const double eps_f = cfg.eps_f != 0.0 ? cfg.eps_f : s.eps_f;
    const std::vector<Vec> pts = cfg.points.empty() ? s.recommended_points : cfg.points;

    std::vector<ResultRow> rows;
    bool ok = true;
    try {
        for (const Vec& pt : pts) {
            const CurvatureReport r = decomposition_report(s.spec, pt, eps_f);
            cli_detail::push_scalar(rows, s, pt, "R_P_direct", r.R_P_direct, 0);
            cli_detail::push_scalar(rows, s, pt, "R_P_nonholonomic", r.R_P_nonholonomic, 0);
            cli_detail::push_scalar(rows, s, pt, "HR", r.HR, 0);
            cli_detail::push_scalar(rows, s, pt, "R_G", r.R_G, 0);
            cli_detail::push_scalar(rows, s, pt, "Fsq", r.Fsq, 0);
            cli_detail::push_scalar(rows, s, pt, "jsq", r.jsq, 0);
            cli_detail::push_scalar(rows, s, pt, "Jtilde_coords", r.Jtilde_coords, 0);
            cli_detail::push_scalar(rows, s, pt, "Jtilde_geom", r.Jtilde_geom, 0);
            cli_detail::push_scalar(rows, s, pt, "j_II_r", r.j_II.size() ? r.j_II[0] : 0.0, 0);

            ResultRow rd;
            rd.quantity = "residual_decomposition";
            rd.point = pt;
            rd.value = r.residual_decomposition;
            rd.has_oracle = true;
            rd.oracle = 0.0;
            rd.residual = std::abs(r.residual_decomposition);
            rd.tolerance = cfg.tolerance;
            rd.provenance = "split of the chart-metric curvature scalar";
            rd.pass = rd.residual <= cfg.tolerance;
            rows.push_back(rd);

            ResultRow rj = rd;
            rj.quantity = "residual_Jroutes";
            rj.value = r.residual_Jroutes;
            rj.residual = r.residual_Jroutes;
            rj.provenance = "gap between the two integrand routes";
            rj.pass = rj.residual <= cfg.tolerance;
            rows.push_back(rj);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }
    for (const auto& r : rows) ok = ok && r.pass;
    const int wr = cli_detail::write_rows(cfg, "report", rows);
    if (wr != exit_pass) return wr;
    return ok ? exit_pass : exit_numeric_failure;
}

/// Identity-verification suite: every projector/connection/curvature identity
/// evaluated on the scenario's recommended and random surface points.
inline int cmd_verify(const RunConfig& cfg) {
    Scenario s;
    try {
        s = cli_detail::load_scenario(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }
    const double eps_f = cfg.eps_f != 0.0 ? cfg.eps_f : s.eps_f;

    std::vector<Vec> pts = cfg.points.empty() ? s.recommended_points : cfg.points;
    std::mt19937_64 rng(cfg.seed);
    for (int k = 0; k < 8; ++k) pts.push_back(s.random_surface_point(rng));

    std::map<std::string, std::pair<double, double>> agg;  // name -> (max residual, tol)
    auto fold = [&agg](const std::vector<InvariantResidual>& v) {
        for (const auto& r : v) {
            auto& slot = agg[r.name];
            slot.first = std::max(slot.first, r.residual);
            slot.second = r.tolerance;
        }
    };

    try {
        fold(check_bundle_invariants(s.spec, {pts.front(), pts.back()}));
        for (const Vec& pt : pts) {
            const ProjectorSet p = projectors(s.spec, pt);
            const int n = s.spec.dim_total;
            std::vector<InvariantResidual> v;
            v.push_back({"projector_N_idempotent", (p.N * p.N - p.N).cwiseAbs().maxCoeff(), 1e-10});
            v.push_back({"projector_NPperp", (p.N * p.P_perp - p.P_perp).cwiseAbs().maxCoeff(), 1e-10});
            v.push_back({"projector_PperpN", (p.P_perp * p.N - p.N).cwiseAbs().maxCoeff(), 1e-10});
            v.push_back({"projector_Pperp_idempotent", (p.P_perp * p.P_perp - p.P_perp).cwiseAbs().maxCoeff(), 1e-10});
            v.push_back({"projector_Pperp_kills_gradient",
                         (s.spec.gauge_grad_at(pt) * p.P_perp).cwiseAbs().maxCoeff(), 1e-10});
            v.push_back({"projector_N_kills_killing", (p.N * s.spec.killing_at(pt)).cwiseAbs().maxCoeff(), 1e-10});
            v.push_back({"projector_Pi_kills_killing", (p.Pi * s.spec.killing_at(pt)).cwiseAbs().maxCoeff(), 1e-10});
            const Mat A = mechanical_connection(s.spec, pt);
            v.push_back({"connection_reproduces", (A * s.spec.killing_at(pt) - Mat::Identity(s.spec.dim_group, s.spec.dim_group)).cwiseAbs().maxCoeff(), 1e-10});
            const Mat GH = horizontal_metric(s.spec, pt);
            v.push_back({"horizontal_metric_kills_killing", (GH * s.spec.killing_at(pt)).cwiseAbs().maxCoeff(), 1e-10});
            {
                auto GHf = detail::gh_field(s.spec);
                const Mat K = s.spec.killing_at(pt);
                double res = 0;
                for (int mu = 0; mu < s.spec.dim_group; ++mu) {
                    Mat lie = Mat::Zero(n, n);
                    for (int e = 0; e < n; ++e) lie += K(e, mu) * d_matrix(GHf, pt, e, s.spec.fd);
                    res = std::max(res, lie.cwiseAbs().maxCoeff());
                }
                v.push_back({"horizontal_metric_invariant", res, 1e-5});
            }
            {
                const Tensor F = connection_curvature(s.spec, pt);
                double res = 0;
                for (int mu = 0; mu < s.spec.dim_group; ++mu)
                    for (int e = 0; e < n; ++e)
                        for (int pp = 0; pp < n; ++pp) res = std::max(res, std::abs(F(mu, e, pp) + F(mu, pp, e)));
                v.push_back({"curvature_antisymmetry", res, 1e-6});
            }
            if (s.spec.group_chart) {
                Vec a0 = Vec::Zero(s.spec.dim_group);
                const Mat Gm = adapted_metric(s.spec, pt, a0);
                const Mat Gp = adapted_pseudoinverse(s.spec, pt, a0);
                Mat expect = Mat::Zero(Gm.rows(), Gm.cols());
                expect.topLeftCorner(n, n) = p.P_perp;
                expect.bottomRightCorner(s.spec.dim_group, s.spec.dim_group) =
                    Mat::Identity(s.spec.dim_group, s.spec.dim_group);
                v.push_back({"adapted_pseudoinverse_product", (Gp * Gm - expect).cwiseAbs().maxCoeff(), 1e-9});
                const double fact = adapted_determinant(s.spec, pt, a0);
                const double direct = pseudo_det(Gm, s.spec.dim_total);
                v.push_back({"adapted_determinant_factorization",
                             std::abs(fact - direct) / std::max(1.0, std::abs(direct)), 1e-8});
            }
            fold(v);
            fold(identity_residuals(s.spec, pt));

            const CurvatureReport r = decomposition_report(s.spec, pt, eps_f);
            fold({{"two_route_jacobian_gap", r.residual_Jroutes, 1e-5},
                  {"decomposition_residual", std::abs(r.residual_decomposition), cfg.tolerance}});
        }
        for (const auto& [vname, variant] : s.gauge_variants) {
            if (vname != "same_surface") continue;
            for (const Vec& pt : s.recommended_points) {
                const ProjectorSet p1 = projectors(s.spec, pt);
                const ProjectorSet p2 = projectors(variant, pt);
                fold({{"gauge_choice_covariance",
                       std::max((p1.N - p2.N).cwiseAbs().maxCoeff(), (p1.Lambda - p2.Lambda).cwiseAbs().maxCoeff()),
                       1e-8}});
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }

    std::vector<ResultRow> rows;
    bool ok = true;
    for (const auto& [name, val] : agg) {
        ResultRow r;
        r.quantity = name;
        r.point = Vec();
        r.value = val.first;
        r.has_oracle = true;
        r.oracle = 0.0;
        r.residual = val.first;
        r.tolerance = val.second;
        r.pass = val.first <= val.second;
        r.provenance = "identity suite";
        ok = ok && r.pass;
        rows.push_back(r);
    }
    const int wr = cli_detail::write_rows(cfg, "verify", rows);
    if (wr != exit_pass) return wr;
    return ok ? exit_pass : exit_numeric_failure;
}

/// Monte Carlo checks: weight normalization, the reduction relation, and the
/// closed-form pairing oracle where the scenario has one.
inline int cmd_simulate(const RunConfig& cfg) {
    Scenario s;
    try {
        s = cli_detail::load_scenario(cfg);
        if (cfg.n_paths < 1) throw Error("simulate: n_paths must be >= 1");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }

    SDEConfig sde;
    sde.mu2_kappa = cfg.mu2_kappa;
    sde.mass = cfg.mass;
    sde.dt = cfg.dt;
    sde.n_steps = cfg.steps();
    sde.n_paths = cfg.n_paths;
    sde.rng_seed = cfg.seed;
    sde.n_threads = cfg.n_threads;

    Vec start;
    std::function<double(const Vec&)> f;
    bool have_oracle = false;
    double oracle = 0.0;
    const double sigma2 = cfg.mu2_kappa * sde.n_steps * sde.dt;
    if (s.name == "flat_torus_u1") {
        start = detail::vec2(0.8, 0.0);
        f = [](const Vec& q) { return std::cos(q[0]); };
        have_oracle = true;
        oracle = wrapped_gaussian_cos_moment(0.8, sigma2);
    } else if (s.name == "polar_plane_u1") {
        start = detail::vec2(2.0, 0.0);
        f = [](const Vec& q) { return std::exp(-2.0 * (q[0] - 2.0) * (q[0] - 2.0)); };
        have_oracle = true;
        oracle = radial_heat_pairing([](double r) { return std::exp(-2.0 * (r - 2.0) * (r - 2.0)); }, 2.0, sigma2);
    } else if (s.name == "hopf_s3") {
        start = detail::vec3(M_PI / 2, 0.3, 0.0);
        f = [](const Vec& q) { return std::cos(q[0]); };
    } else {
        start = s.recommended_points.front();
        f = [](const Vec&) { return 1.0; };
        have_oracle = true;
        oracle = 1.0;
    }

    std::vector<ResultRow> rows;
    bool ok = true;
    try {
        // weight normalization: V = 0, f = 1 pairs to unity for every kind
        for (GreenKind kind : {GreenKind::original, GreenKind::reduced_sigma, GreenKind::reduced_M}) {
            SDEConfig norm_cfg = sde;
            norm_cfg.n_paths = std::min<long>(sde.n_paths, 20000);
            const GreenEstimate g =
                estimate_green(s.spec, norm_cfg, kind, start, [](const Vec&) { return 1.0; });
            ResultRow r;
            r.quantity = kind == GreenKind::original     ? "normalization_original"
                         : kind == GreenKind::reduced_sigma ? "normalization_reduced_sigma"
                                                            : "normalization_reduced_M";
            r.point = start;
            r.value = g.value;
            r.has_oracle = true;
            r.oracle = 1.0;
            r.residual = std::abs(g.value - 1.0);
            r.tolerance = 3.0 * std::max(g.standard_error, 1e-12);
            r.pass = r.residual <= r.tolerance;
            r.provenance = "measure-change factor has unit expectation";
            ok = ok && r.pass;
            rows.push_back(r);
        }

        const ReductionCheck rc = verify_reduction_relation(s.spec, sde, start, f, cfg.quadrature_level);
        ResultRow r;
        r.quantity = "reduction_relation_sigma_gap";
        r.point = start;
        r.value = rc.sigma_residual;
        r.has_oracle = true;
        r.oracle = 0.0;
        r.residual = rc.sigma_residual;
        r.tolerance = 3.0;
        r.pass = rc.sigma_residual <= 3.0;
        r.provenance = "reduced pairing vs group-averaged original pairing";
        ok = ok && r.pass;
        rows.push_back(r);

        ResultRow rv;
        rv.quantity = "reduced_pairing";
        rv.point = start;
        rv.value = rc.reduced.value;
        if (have_oracle) {
            rv.has_oracle = true;
            rv.oracle = oracle;
            rv.residual = std::abs(rc.reduced.value - oracle);
            rv.tolerance = 3.0 * std::max(rc.reduced.standard_error, 1e-12);
            rv.pass = rv.residual <= rv.tolerance;
            rv.provenance = "closed-form pairing oracle";
            ok = ok && rv.pass;
        }
        rows.push_back(rv);

        ResultRow ro = rv;
        ro.quantity = "original_pairing";
        ro.value = rc.original.value;
        if (have_oracle) {
            ro.residual = std::abs(rc.original.value - oracle);
            ro.tolerance = 3.0 * std::max(rc.original.standard_error, 1e-12);
            ro.pass = ro.residual <= ro.tolerance;
            ok = ok && ro.pass;
        }
        rows.push_back(ro);

        ResultRow rt;
        rt.quantity = "truncated_paths";
        rt.point = start;
        rt.value = static_cast<double>(rc.reduced.n_truncated + rc.original.n_truncated);
        rt.pass = true;
        rows.push_back(rt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }

    const int wr = cli_detail::write_rows(cfg, "simulate", rows);
    if (wr != exit_pass) return wr;
    return ok ? exit_pass : exit_numeric_failure;
}

}  // namespace pfb
