#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "pfb/scenarios.hpp"

using namespace pfb;

TEST(MakeScenario, UnknownNameListsValidOnes) {
    try {
        make_scenario("nope");
        FAIL() << "expected error";
    } catch (const Error& e) {
        const std::string msg = e.what();
        for (const auto& n : scenario_names()) EXPECT_NE(msg.find(n), std::string::npos);
    }
}

TEST(MakeScenario, EveryScenarioCarriesProvenance) {
    for (const auto& name : scenario_names()) {
        auto s = make_scenario(name);
        EXPECT_FALSE(s.oracle.empty()) << name;
        for (const auto& e : s.oracle) EXPECT_FALSE(e.provenance.empty()) << name << ":" << e.quantity;
        EXPECT_FALSE(s.recommended_points.empty()) << name;
    }
}

TEST(MakeScenario, RecommendedPointsLieOnSurface) {
    for (const auto& name : scenario_names()) {
        auto s = make_scenario(name);
        for (const Vec& q : s.recommended_points)
            EXPECT_LE(s.spec.gauge_at(q).cwiseAbs().maxCoeff(), 1e-12) << name;
        std::mt19937_64 rng(2);
        for (int k = 0; k < 10; ++k)
            EXPECT_LE(s.spec.gauge_at(s.random_surface_point(rng)).cwiseAbs().maxCoeff(), 1e-12) << name;
    }
}

TEST(OracleTable, LookupByPointAndQuantity) {
    auto polar = make_scenario("polar_plane_u1");
    Vec p(2);
    p << 2.0, 0.0;
    auto e = polar.find_oracle("Jtilde_coords", p);
    ASSERT_TRUE(e.has_value());
    EXPECT_NEAR(e->value, -0.25, 1e-15);
    auto eps = polar.find_oracle("eps_f", Vec());
    ASSERT_TRUE(eps.has_value());
    EXPECT_EQ(eps->value, -1.0);
    EXPECT_FALSE(polar.find_oracle("no_such_quantity", p).has_value());
}

// data/*.json is the serialized external form of the oracle tables; the files
// in the repository must stay in sync with the in-code tables.
TEST(OracleTable, SerializedTablesMatch) {
    for (const auto& name : scenario_names()) {
        auto s = make_scenario(name);
        const std::string path = std::string(PFB_SOURCE_DIR) + "/data/" + name + ".json";
        std::ifstream f(path);
        ASSERT_TRUE(f.good()) << "missing " << path;
        nlohmann::json doc = nlohmann::json::parse(f);
        ASSERT_TRUE(doc.contains("oracle"));
        const auto& arr = doc["oracle"];
        ASSERT_EQ(arr.size(), s.oracle.size()) << name;
        for (std::size_t i = 0; i < s.oracle.size(); ++i) {
            EXPECT_EQ(arr[i]["quantity"].get<std::string>(), s.oracle[i].quantity);
            EXPECT_EQ(arr[i]["value"].get<double>(), s.oracle[i].value);
            EXPECT_EQ(arr[i]["tolerance"].get<double>(), s.oracle[i].tolerance);
            EXPECT_EQ(arr[i]["provenance"].get<std::string>(), s.oracle[i].provenance);
            const auto& pt = arr[i]["point"];
            ASSERT_EQ(static_cast<int>(pt.size()), static_cast<int>(s.oracle[i].point.size()));
            for (int k = 0; k < s.oracle[i].point.size(); ++k)
                EXPECT_EQ(pt[static_cast<std::size_t>(k)].get<double>(), s.oracle[i].point[k]);
        }
        EXPECT_EQ(doc["eps_f"].get<double>(), s.eps_f) << name;
    }
}

TEST(ClosedFormOracles, WrappedGaussianMoment) {
    // exact first circular moment at zero variance and decay afterwards
    EXPECT_NEAR(wrapped_gaussian_cos_moment(0.8, 0.0), std::cos(0.8), 1e-15);
    EXPECT_NEAR(wrapped_gaussian_cos_moment(0.0, 2.0), std::exp(-1.0), 1e-15);
}

TEST(ClosedFormOracles, RadialPairingNormalizes) {
    // f = 1 integrates the radial density to one
    const double total = radial_heat_pairing([](double) { return 1.0; }, 2.0, 0.5);
    EXPECT_NEAR(total, 1.0, 1e-9);
    // second moment of the planar displacement: E r^2 = r0^2 + 2 sigma^2
    const double m2 = radial_heat_pairing([](double r) { return r * r; }, 2.0, 0.5);
    EXPECT_NEAR(m2, 4.0 + 1.0, 1e-8);
}
