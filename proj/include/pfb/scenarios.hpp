#pragma once

#include <cmath>
#include <random>

#include "pfb/bundle.hpp"

namespace pfb {

/// One frozen ground-truth value: a named quantity at a point (empty point =
/// point-independent), with tolerance and a provenance note pointing at the
/// derivation that produced it.
struct OracleEntry {
    std::string quantity;
    Vec point;  // size 0 when the value is point-independent
    double value = 0;
    double tolerance = 0;
    std::string provenance;
};

/// A fully specified bundle instance with ground truth attached.
struct Scenario {
    std::string name;
    BundleSpec spec;
    std::vector<std::pair<std::string, BundleSpec>> gauge_variants;  // same surface or same geometry
    std::optional<SmoothField> base_metric;                          // induced base-chart metric
    std::vector<Vec> recommended_points;
    std::function<Vec(std::mt19937_64&)> random_surface_point;
    std::vector<OracleEntry> oracle;
    double eps_f = -1.0;  // orientation of the squared-curvature term, frozen by the Hopf check

    std::optional<OracleEntry> find_oracle(const std::string& quantity, const Vec& point,
                                           double point_tol = 1e-9) const {
        for (const auto& e : oracle) {
            if (e.quantity != quantity) continue;
            if (e.point.size() == 0) return e;
            if (e.point.size() == point.size() && (e.point - point).cwiseAbs().maxCoeff() <= point_tol) return e;
        }
        return std::nullopt;
    }
};

inline std::vector<std::string> scenario_names() {
    return {"flat_torus_u1", "polar_plane_u1", "hopf_s3", "su2_self"};
}

namespace detail {

inline Tensor u1_structure_constants() { return Tensor({1, 1, 1}); }

inline Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

inline Vec vec3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

// rotation-matrix helpers for the exact group action of the su2 scenario
inline Mat rot_z(double a) {
    Mat r(3, 3);
    r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    return r;
}

inline Mat rot_y(double a) {
    Mat r(3, 3);
    r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    return r;
}

inline Mat rodrigues(const Vec& u) {
    const double t = u.norm();
    Mat s(3, 3);
    s << 0, -u[2], u[1], u[2], 0, -u[0], -u[1], u[0], 0;
    if (t < 1e-12) return Mat(Mat::Identity(3, 3) + s + 0.5 * s * s);
    return Mat(Mat::Identity(3, 3) + std::sin(t) / t * s + (1 - std::cos(t)) / (t * t) * (s * s));
}

/// zyz angles of g(q) * exp(a), with the exponential matched to the invariant
/// frame of the scenario (the first axis enters with the opposite sign).
inline Vec su2_orbit_shift(const Vec& q, const Vec& a) {
    const Mat g = rot_z(q[1]) * rot_y(q[0]) * rot_z(q[2]);
    Vec u(3);
    u << -a[0], a[1], a[2];
    const Mat r = g * rodrigues(u);
    const double ct = std::clamp(r(2, 2), -1.0, 1.0);
    Vec out(3);
    out[0] = std::acos(ct);
    out[1] = std::atan2(r(1, 2), r(0, 2));
    out[2] = std::atan2(r(2, 1), -r(2, 0));
    return out;
}

inline Scenario make_flat_torus() {
    Scenario s;
    s.name = "flat_torus_u1";
    BundleSpec b;
    b.dim_total = 2;
    b.dim_group = 1;
    b.metric = make_matrix_field(2, 2, 2, [](const Vec&) { return Mat(Mat::Identity(2, 2)); });
    b.metric.analytic_derivative = [](const Vec&, int) { return Tensor({2, 2}); };
    b.killing = make_matrix_field(2, 2, 1, [](const Vec&) {
        Mat k(2, 1);
        k << 0, 1;
        return k;
    });
    b.killing.analytic_derivative = [](const Vec&, int) { return Tensor({2, 1}); };
    b.gauge = make_vector_field(2, 1, [](const Vec& q) {
        Vec v(1);
        v << q[1];
        return v;
    });
    b.gauge_grad = make_matrix_field(2, 1, 2, [](const Vec&) {
        Mat g(1, 2);
        g << 0, 1;
        return g;
    });
    b.structure_constants = u1_structure_constants();
    b.group_chart = exponential_group_chart(b.structure_constants, 1);
    b.orbit_shift = [](const Vec& q, const Vec& a) { return Vec(vec2(q[0], q[1] + a[0])); };

    s.spec = b;

    BundleSpec tilted = b;  // same flat geometry, oblique gauge surface y = -0.3 x
    tilted.gauge = make_vector_field(2, 1, [](const Vec& q) {
        Vec v(1);
        v << q[1] + 0.3 * q[0];
        return v;
    });
    tilted.gauge_grad = make_matrix_field(2, 1, 2, [](const Vec&) {
        Mat g(1, 2);
        g << 0.3, 1;
        return g;
    });
    s.gauge_variants.emplace_back("tilted", tilted);

    BundleSpec rescaled = b;  // chi' = (2 + sin x) y : same surface y = 0
    rescaled.gauge = make_vector_field(2, 1, [](const Vec& q) {
        Vec v(1);
        v << (2.0 + std::sin(q[0])) * q[1];
        return v;
    });
    rescaled.gauge_grad = SmoothField{};
    s.gauge_variants.emplace_back("same_surface", rescaled);

    s.base_metric = make_matrix_field(1, 1, 1, [](const Vec&) { return Mat(Mat::Identity(1, 1)); });
    s.recommended_points = {vec2(0.3, 0.0), vec2(1.2, 0.0), vec2(2.5, 0.0)};
    s.random_surface_point = [](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(0.0, 2 * M_PI);
        return Vec(vec2(u(rng), 0.0));
    };
    s.eps_f = -1.0;

    const char* prov = "all curvatures of the flat metric vanish; constant orbit metric";
    for (const char* q : {"R_P_direct", "R_P_nonholonomic", "HR", "R_G", "Fsq", "jsq", "Jtilde_coords",
                          "Jtilde_geom", "residual_decomposition"})
        s.oracle.push_back({q, Vec(), 0.0, 1e-8, prov});
    s.oracle.push_back({"gamma", Vec(), 1.0, 1e-12, "identity metric, unit Killing field"});
    s.oracle.push_back({"base_scalar", Vec(), 0.0, 1e-10, "flat one-dimensional base"});
    s.oracle.push_back({"eps_f", Vec(), -1.0, 0.0, "frozen by the hopf_s3 decomposition check"});
    return s;
}

inline Scenario make_polar_plane() {
    Scenario s;
    s.name = "polar_plane_u1";
    BundleSpec b;
    b.dim_total = 2;
    b.dim_group = 1;
    b.metric = make_matrix_field(2, 2, 2, [](const Vec& q) {
        Mat g = Mat::Zero(2, 2);
        g(0, 0) = 1.0;
        g(1, 1) = q[0] * q[0];
        return g;
    });
    b.metric.analytic_derivative = [](const Vec& q, int d) {
        Tensor t({2, 2});
        if (d == 0) t(1, 1) = 2.0 * q[0];
        return t;
    };
    b.killing = make_matrix_field(2, 2, 1, [](const Vec&) {
        Mat k(2, 1);
        k << 0, 1;
        return k;
    });
    b.killing.analytic_derivative = [](const Vec&, int) { return Tensor({2, 1}); };
    b.gauge = make_vector_field(2, 1, [](const Vec& q) {
        Vec v(1);
        v << q[1];
        return v;
    });
    b.gauge_grad = make_matrix_field(2, 1, 2, [](const Vec&) {
        Mat g(1, 2);
        g << 0, 1;
        return g;
    });
    b.structure_constants = u1_structure_constants();
    b.group_chart = exponential_group_chart(b.structure_constants, 1);
    b.orbit_shift = [](const Vec& q, const Vec& a) { return Vec(vec2(q[0], q[1] + a[0])); };
    b.in_chart = [](const Vec& q) { return q[0] > 0.05 && q[0] < 50.0; };
    s.spec = b;

    BundleSpec samesurf = b;  // chi' = sin(phi)(1 + r/2): same ray phi = 0
    samesurf.gauge = make_vector_field(2, 1, [](const Vec& q) {
        Vec v(1);
        v << std::sin(q[1]) * (1.0 + 0.5 * q[0]);
        return v;
    });
    samesurf.gauge_grad = SmoothField{};
    s.gauge_variants.emplace_back("same_surface", samesurf);

    s.base_metric = make_matrix_field(1, 1, 1, [](const Vec&) { return Mat(Mat::Identity(1, 1)); });
    s.recommended_points = {vec2(0.5, 0.0), vec2(1.0, 0.0), vec2(2.0, 0.0), vec2(3.0, 0.0)};
    s.random_surface_point = [](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(0.5, 3.0);
        return Vec(vec2(u(rng), 0.0));
    };
    s.eps_f = -1.0;

    const char* deriv = "closed form, docs/oracles/polar_plane.py";
    for (double r : {0.5, 1.0, 2.0, 3.0}) {
        s.oracle.push_back({"gamma", vec2(r, 0.0), r * r, 1e-10, deriv});
        s.oracle.push_back({"Jtilde_coords", vec2(r, 0.0), -1.0 / (r * r), 1e-6, deriv});
        s.oracle.push_back({"Jtilde_geom", vec2(r, 0.0), -1.0 / (r * r), 1e-6, deriv});
        s.oracle.push_back({"jsq", vec2(r, 0.0), 1.0 / (r * r), 1e-8, deriv});
        s.oracle.push_back({"j_II_r", vec2(r, 0.0), 0.5 / r, 1e-8, deriv});
    }
    s.oracle.push_back({"R_P_direct", Vec(), 0.0, 1e-7, "flat plane in polar coordinates"});
    s.oracle.push_back({"residual_decomposition", Vec(), 0.0, 1e-6, deriv});
    s.oracle.push_back({"base_scalar", Vec(), 0.0, 1e-10, "flat one-dimensional base (a ray)"});
    s.oracle.push_back({"eps_f", Vec(), -1.0, 0.0, "frozen by the hopf_s3 decomposition check"});
    return s;
}

inline Scenario make_hopf() {
    Scenario s;
    s.name = "hopf_s3";
    BundleSpec b;
    b.dim_total = 3;
    b.dim_group = 1;
    b.metric = make_matrix_field(3, 3, 3, [](const Vec& q) {
        const double c = std::cos(q[0]);
        Mat g(3, 3);
        g << 1, 0, 0, 0, 1, c, 0, c, 1;
        return Mat(0.25 * g);
    });
    b.metric.analytic_derivative = [](const Vec& q, int d) {
        Tensor t({3, 3});
        if (d == 0) {
            const double s = std::sin(q[0]);
            t(1, 2) = -0.25 * s;
            t(2, 1) = -0.25 * s;
        }
        return t;
    };
    b.killing = make_matrix_field(3, 3, 1, [](const Vec&) {
        Mat k(3, 1);
        k << 0, 0, 1;
        return k;
    });
    b.killing.analytic_derivative = [](const Vec&, int) { return Tensor({3, 1}); };
    b.gauge = make_vector_field(3, 1, [](const Vec& q) {
        Vec v(1);
        v << q[2];
        return v;
    });
    b.gauge_grad = make_matrix_field(3, 1, 3, [](const Vec&) {
        Mat g(1, 3);
        g << 0, 0, 1;
        return g;
    });
    b.structure_constants = u1_structure_constants();
    b.group_chart = exponential_group_chart(b.structure_constants, 1);
    b.orbit_shift = [](const Vec& q, const Vec& a) { return Vec(vec3(q[0], q[1], q[2] + a[0])); };
    b.in_chart = [](const Vec& q) { return q[0] > 0.12 && q[0] < M_PI - 0.12; };
    s.spec = b;

    // base: sphere of radius 1/2 in spherical coordinates (theta, phi)
    s.base_metric = make_matrix_field(2, 2, 2, [](const Vec& x) {
        Mat h = Mat::Zero(2, 2);
        h(0, 0) = 0.25;
        h(1, 1) = 0.25 * std::sin(x[0]) * std::sin(x[0]);
        return h;
    });
    s.recommended_points = {vec3(0.5, 0.2, 0.0), vec3(1.0, 0.9, 0.0), vec3(1.4, 2.0, 0.0), vec3(2.2, 4.1, 0.0)};
    s.random_surface_point = [](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> uth(0.4, M_PI - 0.4), uph(0.0, 2 * M_PI);
        return Vec(vec3(uth(rng), uph(rng), 0.0));
    };
    s.eps_f = -1.0;

    const char* prov = "round-sphere values, docs/oracles/hopf_sphere.py";
    s.oracle.push_back({"R_P_direct", Vec(), 6.0, 1e-5, prov});
    s.oracle.push_back({"R_P_nonholonomic", Vec(), 6.0, 1e-5, prov});
    s.oracle.push_back({"HR", Vec(), 8.0, 1e-5, prov});
    s.oracle.push_back({"base_scalar", Vec(), 8.0, 1e-5, prov});
    s.oracle.push_back({"gamma", Vec(), 0.25, 1e-12, prov});
    s.oracle.push_back({"R_G", Vec(), 0.0, 1e-12, "one-dimensional structure group"});
    s.oracle.push_back({"Fsq", Vec(), 8.0, 1e-6, prov});
    s.oracle.push_back({"jsq", Vec(), 0.0, 1e-10, "constant orbit metric: totally geodesic fibres"});
    s.oracle.push_back({"Jtilde_coords", Vec(), 0.0, 1e-8, "constant orbit metric"});
    s.oracle.push_back({"residual_decomposition", Vec(), 0.0, 1e-5, prov});
    s.oracle.push_back({"eps_f", Vec(), -1.0, 0.0, "unique sign closing the decomposition here"});
    return s;
}

inline Scenario make_su2_self() {
    Scenario s;
    s.name = "su2_self";
    const Vec q0 = vec3(1.0, 0.7, 0.5);

    BundleSpec b;
    b.dim_total = 3;
    b.dim_group = 3;
    b.metric = make_matrix_field(3, 3, 3, [](const Vec& q) {
        const double c = std::cos(q[0]);
        Mat g(3, 3);
        g << 1, 0, 0, 0, 1, c, 0, c, 1;
        return g;
    });
    b.metric.analytic_derivative = [](const Vec& q, int d) {
        Tensor t({3, 3});
        if (d == 0) {
            const double sn = std::sin(q[0]);
            t(1, 2) = -sn;
            t(2, 1) = -sn;
        }
        return t;
    };
    // invariant orthonormal frame; generates the translations used as the group action
    b.killing = make_matrix_field(3, 3, 3, [](const Vec& q) {
        const double sps = std::sin(q[2]), cps = std::cos(q[2]);
        const double st = std::sin(q[0]), ct = std::cos(q[0]);
        Mat k(3, 3);
        k.col(0) << -sps, cps / st, -cps * ct / st;
        k.col(1) << cps, sps / st, -sps * ct / st;
        k.col(2) << 0, 0, 1;
        return k;
    });
    b.gauge = make_vector_field(3, 3, [q0](const Vec& q) { return Vec(q - q0); });
    b.gauge_grad = make_matrix_field(3, 3, 3, [](const Vec&) { return Mat(Mat::Identity(3, 3)); });
    {
        Tensor c({3, 3, 3});  // c^g_{ab} = -eps_{gab}, matching the frame brackets
        c(0, 1, 2) = -1;
        c(0, 2, 1) = 1;
        c(1, 2, 0) = -1;
        c(1, 0, 2) = 1;
        c(2, 0, 1) = -1;
        c(2, 1, 0) = 1;
        b.structure_constants = c;
    }
    b.group_chart = exponential_group_chart(b.structure_constants, 3);
    b.orbit_shift = su2_orbit_shift;
    b.in_chart = [](const Vec& q) { return q[0] > 0.12 && q[0] < M_PI - 0.12; };
    s.spec = b;

    s.recommended_points = {q0};
    s.random_surface_point = [q0](std::mt19937_64&) { return q0; };
    s.eps_f = -1.0;

    const char* prov = "bi-invariant group metric, docs/oracles/su2_group.py";
    s.oracle.push_back({"R_P_direct", Vec(), 1.5, 1e-6, prov});
    s.oracle.push_back({"R_P_nonholonomic", Vec(), 1.5, 1e-6, prov});
    s.oracle.push_back({"R_G", Vec(), 1.5, 1e-12, prov});
    s.oracle.push_back({"HR", Vec(), 0.0, 1e-10, "no horizontal directions (base is a point)"});
    s.oracle.push_back({"jsq", Vec(), 0.0, 1e-10, "oblique projector vanishes"});
    s.oracle.push_back({"Jtilde_coords", Vec(), 0.0, 1e-10, "oblique projector vanishes"});
    s.oracle.push_back({"residual_decomposition", Vec(), 0.0, 1e-6, prov});
    s.oracle.push_back({"eps_f", Vec(), -1.0, 0.0, "frozen by the hopf_s3 decomposition check"});
    return s;
}

}  // namespace detail

/// Build a shipped scenario by name; unknown names list the valid ones.
inline Scenario make_scenario(const std::string& name) {
    if (name == "flat_torus_u1") return detail::make_flat_torus();
    if (name == "polar_plane_u1") return detail::make_polar_plane();
    if (name == "hopf_s3") return detail::make_hopf();
    if (name == "su2_self") return detail::make_su2_self();
    std::string valid;
    for (const auto& n : scenario_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw Error("unknown scenario '" + name + "' (valid: " + valid + ")");
}

// ---------------------------------------------------------------------------
// closed-form pairing oracles used by the Monte Carlo checks

/// E[cos(x_t)] for Brownian motion on the line started at x0 with variance
/// sigma2: the first circular moment of the wrapped Gaussian.
inline double wrapped_gaussian_cos_moment(double x0, double sigma2) {
    return std::cos(x0) * std::exp(-0.5 * sigma2);
}

/// Pairing of f with the radial density of planar Brownian motion started at
/// radius r0 (variance sigma2 per coordinate): int f(r) (r/s2) e^{-(r^2+r0^2)/2s2} I0(r r0/s2) dr.
inline double radial_heat_pairing(const std::function<double(double)>& f, double r0, double sigma2,
                                  double r_max = 0.0, int n_panels = 4000) {
    if (r_max <= 0.0) r_max = r0 + 12.0 * std::sqrt(sigma2);
    auto integrand = [&](double r) {
        const double z = r * r0 / sigma2;
        return f(r) * (r / sigma2) * std::exp(-(r * r + r0 * r0) / (2 * sigma2)) * std::cyl_bessel_i(0.0, z);
    };
    // composite Simpson
    const int n = 2 * n_panels;
    const double h = r_max / n;
    double acc = integrand(0.0) + integrand(r_max);
    for (int i = 1; i < n; ++i) acc += integrand(i * h) * ((i % 2) ? 4.0 : 2.0);
    return acc * h / 3.0;
}

}  // namespace pfb
