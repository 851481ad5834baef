#include <gtest/gtest.h>

#include "pfb/scenarios.hpp"

using namespace pfb;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

Vec v3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

}  // namespace

TEST(OrbitMetric, KnownValues) {
    auto torus = make_scenario("flat_torus_u1");
    auto [g1, gi1] = orbit_metric(torus.spec, v2(0.3, 0.0));
    EXPECT_NEAR(g1(0, 0), 1.0, 1e-14);

    auto polar = make_scenario("polar_plane_u1");
    auto [g2, gi2] = orbit_metric(polar.spec, v2(2.0, 0.0));
    EXPECT_NEAR(g2(0, 0), 4.0, 1e-14);
    EXPECT_NEAR(gi2(0, 0), 0.25, 1e-14);

    auto hopf = make_scenario("hopf_s3");
    for (const Vec& q : hopf.recommended_points) {
        auto [g3, gi3] = orbit_metric(hopf.spec, q);
        EXPECT_NEAR(g3(0, 0), 0.25, 1e-13);
    }
}

TEST(OrbitMetric, DegenerateOrbitRejected) {
    BundleSpec b = make_scenario("flat_torus_u1").spec;
    b.killing = make_matrix_field(2, 2, 1, [](const Vec&) { return Mat(Mat::Zero(2, 1)); });
    EXPECT_THROW(orbit_metric(b, v2(0.3, 0.0)), LinAlgError);
}

TEST(FaddeevPopov, LinearGauges) {
    BundleSpec b = make_scenario("flat_torus_u1").spec;
    auto [phi, phi_inv] = faddeev_popov(b, v2(0.3, 0.0));
    EXPECT_NEAR(phi(0, 0), 1.0, 1e-14);

    b.gauge = make_vector_field(2, 1, [](const Vec& q) { return Vec(2.0 * q.tail(1)); });
    b.gauge_grad = SmoothField{};
    auto [phi2, phi2_inv] = faddeev_popov(b, v2(0.3, 0.0));
    EXPECT_NEAR(phi2(0, 0), 2.0, 1e-9);
    EXPECT_NEAR((phi2_inv * phi2 - Mat::Identity(1, 1)).cwiseAbs().maxCoeff(), 0.0, 1e-10);
}

TEST(FaddeevPopov, NonTransverseGaugeFatal) {
    BundleSpec b = make_scenario("flat_torus_u1").spec;
    b.gauge = make_vector_field(2, 1, [](const Vec& q) { return Vec(q.head(1)); });  // chi = x
    b.gauge_grad = SmoothField{};
    try {
        faddeev_popov(b, v2(0.3, 0.0));
        FAIL() << "expected singular pairing";
    } catch (const LinAlgError& e) {
        EXPECT_NE(std::string(e.what()).find("transverse"), std::string::npos);
    }
}

TEST(Projectors, FlatTorusAxisGauge) {
    auto s = make_scenario("flat_torus_u1");
    const ProjectorSet p = projectors(s.spec, v2(1.2, 0.0));
    Mat d10 = Mat::Zero(2, 2);
    d10(0, 0) = 1.0;
    EXPECT_NEAR((p.N - d10).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((p.P_perp - d10).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((p.Pi - d10).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(Projectors, TiltedGaugeObliqueProjector) {
    auto s = make_scenario("flat_torus_u1");
    const BundleSpec& tilted = s.gauge_variants.front().second;
    const Vec q = v2(1.0, -0.3);  // on y = -0.3 x
    const ProjectorSet p = projectors(tilted, q);
    EXPECT_NEAR(p.Lambda(0, 0), 0.3, 1e-12);
    EXPECT_NEAR(p.Lambda(0, 1), 1.0, 1e-12);
    EXPECT_NEAR(p.N(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(p.N(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(p.N(1, 0), -0.3, 1e-12);
    EXPECT_NEAR(p.N(1, 1), 0.0, 1e-12);
    // algebraic identities of the projector family
    EXPECT_NEAR((p.N * p.N - p.N).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((p.N * p.P_perp - p.P_perp).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((p.P_perp * p.N - p.N).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((p.N * tilted.killing_at(q)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(Projectors, OffSurfacePointRejected) {
    auto s = make_scenario("flat_torus_u1");
    EXPECT_THROW(projectors(s.spec, v2(0.3, 0.5)), Error);
}

TEST(Projectors, InvariantsOnRandomSurfacePoints) {
    std::mt19937_64 rng(3);
    for (const char* name : {"flat_torus_u1", "polar_plane_u1", "hopf_s3", "su2_self"}) {
        auto s = make_scenario(name);
        for (int k = 0; k < 20; ++k) {
            const Vec q = s.random_surface_point(rng);
            const ProjectorSet p = projectors(s.spec, q);
            const Mat K = s.spec.killing_at(q);
            EXPECT_LE((p.N * p.N - p.N).cwiseAbs().maxCoeff(), 1e-10) << name;
            EXPECT_LE((p.N * p.P_perp - p.P_perp).cwiseAbs().maxCoeff(), 1e-10) << name;
            EXPECT_LE((p.P_perp * p.N - p.N).cwiseAbs().maxCoeff(), 1e-10) << name;
            EXPECT_LE((p.P_perp * p.P_perp - p.P_perp).cwiseAbs().maxCoeff(), 1e-10) << name;
            EXPECT_LE((s.spec.gauge_grad_at(q) * p.P_perp).cwiseAbs().maxCoeff(), 1e-10) << name;
            EXPECT_LE((p.N * K).cwiseAbs().maxCoeff(), 1e-10) << name;
            EXPECT_LE((p.Pi * K).cwiseAbs().maxCoeff(), 1e-10) << name;
            Eigen::LLT<Mat> llt(p.gamma);
            EXPECT_EQ(llt.info(), Eigen::Success) << name;
        }
    }
}

TEST(MechanicalConnection, ReproducingProperty) {
    for (const char* name : {"flat_torus_u1", "polar_plane_u1", "hopf_s3", "su2_self"}) {
        auto s = make_scenario(name);
        for (const Vec& q : s.recommended_points) {
            const Mat A = mechanical_connection(s.spec, q);
            const Mat K = s.spec.killing_at(q);
            EXPECT_LE((A * K - Mat::Identity(s.spec.dim_group, s.spec.dim_group)).cwiseAbs().maxCoeff(), 1e-10)
                << name;
        }
    }
    auto polar = make_scenario("polar_plane_u1");
    const Mat A = mechanical_connection(polar.spec, v2(2.0, 0.0));
    EXPECT_NEAR(A(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(A(0, 1), 1.0, 1e-12);
}

TEST(ConnectionCurvature, FlatCasesVanishHopfDoesNot) {
    auto torus = make_scenario("flat_torus_u1");
    EXPECT_LE(connection_curvature(torus.spec, v2(0.3, 0.0)).max_abs(), 1e-9);
    auto polar = make_scenario("polar_plane_u1");
    EXPECT_LE(connection_curvature(polar.spec, v2(2.0, 0.0)).max_abs(), 1e-9);

    auto hopf = make_scenario("hopf_s3");
    const Vec q = v3(1.1, 0.4, 0.0);
    const Tensor F = connection_curvature(hopf.spec, q);
    EXPECT_NEAR(F(0, 0, 1), -std::sin(1.1), 1e-9);
    EXPECT_NEAR(F(0, 1, 0), std::sin(1.1), 1e-9);
    for (int e = 0; e < 3; ++e)
        for (int p = 0; p < 3; ++p) EXPECT_NEAR(F(0, e, p) + F(0, p, e), 0.0, 1e-12);
}

TEST(ConnectionCurvature, GroupOnItselfIsFlat) {
    // the connection equals the invariant coframe; its curvature two-form
    // cancels against the structure-constant term
    auto s = make_scenario("su2_self");
    EXPECT_LE(connection_curvature(s.spec, s.recommended_points.front()).max_abs(), 1e-7);
}

TEST(HorizontalMetric, KnownValuesAndInvariance) {
    auto polar = make_scenario("polar_plane_u1");
    Mat GH = horizontal_metric(polar.spec, v2(2.0, 0.0));
    Mat expect = Mat::Zero(2, 2);
    expect(0, 0) = 1.0;
    EXPECT_NEAR((GH - expect).cwiseAbs().maxCoeff(), 0.0, 1e-12);

    auto hopf = make_scenario("hopf_s3");
    const Vec q = v3(0.9, 1.3, 0.0);
    Mat GH3 = horizontal_metric(hopf.spec, q);
    Mat expect3 = Mat::Zero(3, 3);
    expect3(0, 0) = 0.25;
    expect3(1, 1) = 0.25 * std::sin(0.9) * std::sin(0.9);
    EXPECT_NEAR((GH3 - expect3).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_LE((GH3 * hopf.spec.killing_at(q)).cwiseAbs().maxCoeff(), 1e-12);

    // invariance along the orbit by finite differences
    auto GHf = [&hopf](const Vec& x) { return horizontal_metric(hopf.spec, x); };
    const Mat K = hopf.spec.killing_at(q);
    Mat lie = Mat::Zero(3, 3);
    for (int e = 0; e < 3; ++e) lie += K(e, 0) * d_matrix(GHf, q, e, hopf.spec.fd);
    EXPECT_LE(lie.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(AdaptedMetric, BlockStructureAndPseudoinverse) {
    for (const char* name : {"flat_torus_u1", "polar_plane_u1", "hopf_s3"}) {
        auto s = make_scenario(name);
        const Vec q = s.recommended_points.front();
        Vec a(1);
        a << 0.6;
        const Mat Gm = adapted_metric(s.spec, q, a);
        EXPECT_LE((Gm - Gm.transpose()).cwiseAbs().maxCoeff(), 1e-12) << name;
        const Mat Gp = adapted_pseudoinverse(s.spec, q, a);
        const ProjectorSet p = projectors(s.spec, q);
        const int n = s.spec.dim_total, g = s.spec.dim_group;
        Mat expect = Mat::Zero(n + g, n + g);
        expect.topLeftCorner(n, n) = p.P_perp;
        expect.bottomRightCorner(g, g) = Mat::Identity(g, g);
        EXPECT_LE((Gp * Gm - expect).cwiseAbs().maxCoeff(), 1e-9) << name;
    }
}

TEST(AdaptedMetric, NonAbelianPseudoinverseAwayFromIdentity) {
    auto s = make_scenario("su2_self");
    const Vec q = s.recommended_points.front();
    Vec a(3);
    a << 0.4, -0.2, 0.7;
    const Mat Gm = adapted_metric(s.spec, q, a);
    const Mat Gp = adapted_pseudoinverse(s.spec, q, a);
    const ProjectorSet p = projectors(s.spec, q);
    Mat expect = Mat::Zero(6, 6);
    expect.topLeftCorner(3, 3) = p.P_perp;  // vanishes here: no horizontal directions
    expect.bottomRightCorner(3, 3) = Mat::Identity(3, 3);
    EXPECT_LE((Gp * Gm - expect).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AdaptedMetric, MissingChartReported) {
    auto s = make_scenario("flat_torus_u1");
    s.spec.group_chart.reset();
    Vec a(1);
    a << 0.0;
    EXPECT_THROW(adapted_metric(s.spec, s.recommended_points.front(), a), UnsupportedError);
}

TEST(AdaptedDeterminant, FactorizationMatchesBlockPseudoDet) {
    Vec a1(1);
    a1 << 0.0;
    auto polar = make_scenario("polar_plane_u1");
    const double det_polar = adapted_determinant(polar.spec, v2(2.0, 0.0), a1);
    EXPECT_NEAR(det_polar, 4.0, 1e-10);  // unit horizontal factor times det gamma = r^2

    for (const char* name : {"flat_torus_u1", "polar_plane_u1", "hopf_s3"}) {
        auto s = make_scenario(name);
        for (const Vec& q : s.recommended_points) {
            const double fact = adapted_determinant(s.spec, q, a1);
            const double direct = pseudo_det(adapted_metric(s.spec, q, a1), s.spec.dim_total);
            EXPECT_NEAR(fact, direct, 1e-8 * std::max(1.0, std::abs(direct))) << name;
        }
    }

    // oblique gauge: the surface factor is no longer unity
    auto torus = make_scenario("flat_torus_u1");
    const BundleSpec& tilted = torus.gauge_variants.front().second;
    const double d = adapted_determinant(tilted, v2(1.0, -0.3), a1);
    EXPECT_NEAR(d, 1.0 / 1.09, 1e-10);
    EXPECT_NEAR(d, pseudo_det(adapted_metric(tilted, v2(1.0, -0.3), a1), 2), 1e-10);
}

TEST(AdaptedDeterminant, SurfaceProjectorHasUnitPseudoDet) {
    for (const char* name : {"flat_torus_u1", "polar_plane_u1", "hopf_s3"}) {
        auto s = make_scenario(name);
        const ProjectorSet p = projectors(s.spec, s.recommended_points.front());
        EXPECT_NEAR(pseudo_det(p.P_perp, s.spec.dim_total - s.spec.dim_group), 1.0, 1e-10) << name;
    }
}

TEST(SurfaceProjection, NewtonConvergesOnAllScenarios) {
    auto hopf = make_scenario("hopf_s3");
    const Vec q = project_to_surface(hopf.spec, v3(1.2, 0.7, 0.9));
    EXPECT_LE(hopf.spec.gauge_at(q).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(q[0], 1.2, 1e-12);
    EXPECT_NEAR(q[1], 0.7, 1e-12);

    auto su2 = make_scenario("su2_self");
    const Vec p = project_to_surface(su2.spec, v3(1.1, 0.63, 0.42));
    EXPECT_LE(su2.spec.gauge_at(p).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(GroupChart, ExponentialChartProperties) {
    auto su2 = make_scenario("su2_self");
    const GroupChart& gc = *su2.spec.group_chart;
    Vec zero = Vec::Zero(3);
    EXPECT_LE((gc.rho(zero) - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((gc.u_bar(zero) - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-14);
    Vec a(3);
    a << 0.5, -0.8, 0.3;
    EXPECT_LE((gc.v_bar(a) * gc.u_bar(a) - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    const double t = a.norm();
    EXPECT_NEAR(gc.haar_density(a), 2.0 * (1.0 - std::cos(t)) / (t * t), 1e-10);
    // adjoint orthogonality for the orthonormal-frame normalization
    EXPECT_LE((gc.rho(a).transpose() * gc.rho(a) - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);

    const auto nodes = gc.quadrature(8);
    double total = 0.0;
    for (const auto& [node, w] : nodes) total += w;
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(GroupChart, StructureConstantsMatchFrameBrackets) {
    auto su2 = make_scenario("su2_self");
    const BundleSpec& b = su2.spec;
    const Vec q = su2.recommended_points.front();
    auto Kf = [&b](const Vec& x) { return b.killing_at(x); };
    const Mat K = b.killing_at(q);
    std::vector<Mat> dK(3);
    for (int d = 0; d < 3; ++d) dK[static_cast<std::size_t>(d)] = d_matrix(Kf, q, d, b.fd);
    for (int al = 0; al < 3; ++al)
        for (int be = 0; be < 3; ++be) {
            Vec bracket = Vec::Zero(3);
            for (int bcomp = 0; bcomp < 3; ++bcomp)
                for (int a = 0; a < 3; ++a)
                    bracket[bcomp] += K(a, al) * dK[static_cast<std::size_t>(a)](bcomp, be) -
                                      K(a, be) * dK[static_cast<std::size_t>(a)](bcomp, al);
            Vec expect = Vec::Zero(3);
            for (int g = 0; g < 3; ++g) expect += b.structure_constants(g, al, be) * K.col(g);
            EXPECT_LE((bracket - expect).cwiseAbs().maxCoeff(), 1e-7) << al << be;
        }
}

TEST(GroupChart, ExactShiftMatchesKillingFlow) {
    // pins the sign convention of the closed-form group action against the
    // frame-field flow
    auto su2 = make_scenario("su2_self");
    BundleSpec no_shift = su2.spec;
    no_shift.orbit_shift = nullptr;
    const Vec q = su2.recommended_points.front();
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (int k = 0; k < 6; ++k) {
        Vec a(3);
        a << u(rng), u(rng), u(rng);
        const Vec exact = killing_flow(su2.spec, q, a);
        const Vec flowed = killing_flow(no_shift, q, a, 64);
        EXPECT_LE((exact - flowed).cwiseAbs().maxCoeff(), 1e-8) << format_point(a);
    }
    // composition property: two successive shifts along the same direction
    Vec a1(3), a2(3);
    a1 << 0.4, -0.3, 0.8;
    a2 = 2.0 * a1;
    const Vec once = killing_flow(su2.spec, killing_flow(su2.spec, q, a1), a1);
    const Vec twice = killing_flow(su2.spec, q, a2);
    EXPECT_LE((once - twice).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(BundleInvariants, AllScenariosClean) {
    for (const char* name : {"flat_torus_u1", "polar_plane_u1", "hopf_s3", "su2_self"}) {
        auto s = make_scenario(name);
        const auto res = check_bundle_invariants(s.spec, s.recommended_points);
        for (const auto& r : res) EXPECT_TRUE(r.pass()) << name << ": " << r.name << " = " << r.residual;
    }
}

TEST(GaugeCovariance, SameSurfaceSameProjectors) {
    for (const char* name : {"flat_torus_u1", "polar_plane_u1"}) {
        auto s = make_scenario(name);
        for (const auto& [vname, variant] : s.gauge_variants) {
            if (vname != "same_surface") continue;
            for (const Vec& q : s.recommended_points) {
                const ProjectorSet p1 = projectors(s.spec, q);
                const ProjectorSet p2 = projectors(variant, q);
                EXPECT_LE((p1.N - p2.N).cwiseAbs().maxCoeff(), 1e-8) << name;
                EXPECT_LE((p1.Lambda - p2.Lambda).cwiseAbs().maxCoeff(), 1e-8) << name;
            }
        }
    }
}
