#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "minlab/gallery.hpp"
#include "minlab/mesh.hpp"
#include "minlab/numutil.hpp"

using namespace minlab;
using namespace minlab::mesh;
using weierstrass::ChartPoint;
using weierstrass::Vec3;
using meromorphic::Complex;

TEST_CASE("icosphere subdivision counts") {
    const auto m3 = build_sphere_mesh(3);
    CHECK(m3.vertices.size() == 642);
    CHECK(m3.triangles.size() == 1280);
    CHECK(m3.refinement_level == 3);
    const auto m4 = build_sphere_mesh(4);
    CHECK(m4.vertices.size() == 2562);
    CHECK(euler_characteristic(m4.vertices.size(), m4.triangles) == 2);
}

TEST_CASE("chart coordinates are consistent with the sphere position") {
    const auto m = build_sphere_mesh(3);
    for (const auto& v : m.vertices) {
        CHECK((v.chart.unit_sphere() - v.sphere).norm() < 1e-12);
        CHECK(std::abs(v.chart.coord) <= 1.0 + 1e-12);
    }
}

TEST_CASE("discrete Gauss-Bonnet on the round sphere") {
    const auto m = build_sphere_mesh(4);
    std::vector<double> angle_sum(m.vertices.size(), 0.0);
    for (const auto& t : m.triangles) {
        for (int e = 0; e < 3; ++e) {
            const Vec3& a = m.vertices[t[e]].sphere;
            const Vec3& b = m.vertices[t[(e + 1) % 3]].sphere;
            const Vec3& c = m.vertices[t[(e + 2) % 3]].sphere;
            const Vec3 u = (b - a), w = (c - a);
            angle_sum[t[e]] += std::acos(std::clamp(u.dot(w) / (u.norm() * w.norm()), -1.0, 1.0));
        }
    }
    double defect = 0.0;
    for (const double s : angle_sum) defect += 2 * M_PI - s;
    CHECK(std::abs(defect - 4 * M_PI) / double(m.vertices.size()) < 1e-6);
}

TEST_CASE("punctures become mesh vertices") {
    const auto data = gallery::load("jorge-meeks-3");
    auto m = build_compact_mesh(data, 3, false);
    REQUIRE(m.puncture_vertices.size() == 3);
    const auto punctures = data.all_punctures();
    for (size_t i = 0; i < punctures.size(); ++i) {
        const auto& v = m.vertices[m.puncture_vertices[i]];
        CHECK((v.sphere - punctures[i].unit_sphere()).norm() < 1e-14);
    }
}

TEST_CASE("adaptive refinement concentrates near branch points") {
    const auto data = gallery::load("jorge-meeks-3");
    const auto plainm = build_compact_mesh(data, 3, false);
    const auto adapted = build_compact_mesh(data, 3, true);
    CHECK(adapted.vertices.size() > plainm.vertices.size());
    // branch points of g = z^2 are 0 and infinity; count vertices near them
    auto near_branch = [](const SphereMesh& m) {
        int n = 0;
        for (const auto& v : m.vertices)
            if (std::abs(v.chart.coord) < 0.25) ++n;  // both charts: near 0 or near infinity
        return n;
    };
    CHECK(near_branch(adapted) > near_branch(plainm));
    CHECK(euler_characteristic(adapted.vertices.size(), adapted.triangles) == 2);
}

TEST_CASE("refinement level bounds are enforced") {
    const auto data = gallery::load("catenoid");
    CHECK_THROWS_AS(build_compact_mesh(data, 1, false), DegenerateInput);
    CHECK_THROWS_AS(build_compact_mesh(data, 9, false), DegenerateInput);
}

TEST_CASE("uniform refine of the sphere mesh") {
    const auto m3 = build_sphere_mesh(3);
    const auto m4 = refine(m3);
    CHECK(m4.vertices.size() == 2562);
    CHECK(m4.triangles.size() == 5120);
    const auto m5 = refine(m4);
    CHECK(m5.refinement_level == 5);
    CHECK(m5.vertices.size() == 10242);
}

TEST_CASE("catenoid truncation: two boundary loops, tight boundary") {
    const auto data = gallery::load("catenoid");
    const double R = 10.0;
    const auto m = build_truncated_mesh(data, R, R / 16.0, 3);
    CHECK(boundary_loop_count(m) == 2);
    CHECK(is_manifold_with_boundary(m));
    int nb = 0;
    for (const auto& v : m.vertices) {
        if (v.boundary) {
            ++nb;
            CHECK(std::abs(v.X.norm() - R) / R <= 1e-3);
        } else {
            CHECK(v.X.norm() < R);
        }
    }
    CHECK(nb > 8);
}

TEST_CASE("catenoid truncation below the neck scale is rejected") {
    const auto data = gallery::load("catenoid");
    CHECK_THROWS_AS(build_truncated_mesh(data, -1.0), RTooSmall);
    // R = 1 on the centered catenoid cannot contain the neck circle, so the
    // boundary cannot separate the two ends
    CHECK_THROWS_AS(
        build_truncated_mesh(data, 1.0, 0.2, 3, default_vertex_budget(), Vec3(-1, 0, 0)),
        RTooSmall);
}

TEST_CASE("three-noid truncation has three boundary loops") {
    const auto data = gallery::load("jorge-meeks-3");
    const auto m = build_truncated_mesh(data, 20.0, 20.0 / 12.0, 3);
    CHECK(boundary_loop_count(m) == 3);
    CHECK(is_manifold_with_boundary(m));
}

TEST_CASE("truncated refine quadruples triangles and keeps the boundary") {
    const auto data = gallery::load("catenoid");
    const double R = 10.0;
    const auto m = build_truncated_mesh(data, R, R / 10.0, 3);
    const auto m2 = refine(m, data);
    CHECK(m2.triangles.size() == 4 * m.triangles.size());
    for (const auto& v : m2.vertices)
        if (v.boundary) CHECK(std::abs(v.X.norm() - R) / R <= 1e-3);
    CHECK(boundary_loop_count(m2) == 2);
}

TEST_CASE("truncated area converges to the closed form") {
    // centered catenoid: the region |X| < R is exactly {cosh^2 t + t^2 < R^2},
    // whose area in the doubled conformal metric is 4 pi (t0 + sinh t0 cosh t0)
    const auto data = gallery::load("catenoid");
    const double R = 6.0;
    double t0 = std::log(2 * R);
    for (int i = 0; i < 60; ++i) {
        const double f = std::cosh(t0) * std::cosh(t0) + t0 * t0 - R * R;
        const double df = 2 * std::cosh(t0) * std::sinh(t0) + 2 * t0;
        t0 -= f / df;
    }
    const double exact = 4 * M_PI * (t0 + std::sinh(t0) * std::cosh(t0));

    std::vector<double> lh, lerr;
    for (const double h : {R / 16.0, R / 32.0, R / 64.0}) {
        const auto m =
            build_truncated_mesh(data, R, h, 3, default_vertex_budget(), Vec3(-1, 0, 0));
        const double area = induced_area(m, data);
        lh.push_back(std::log(h));
        lerr.push_back(std::log(std::abs(area - exact)));
    }
    const auto fit = linear_fit(lh, lerr);
    CHECK(fit.slope >= 1.0);  // order >= 1 in max edge length
    CHECK(lerr.back() < lerr.front());
}

TEST_CASE("total curvature quadrature matches the Gauss map degree") {
    for (const char* name : {"catenoid", "jorge-meeks-3"}) {
        const auto data = gallery::load(name);
        const auto m = build_compact_mesh(data, 6, true);
        const double tc = total_curvature_quadrature(m, data);
        const double expect = -4 * M_PI * data.gauss.map_degree();
        CHECK(std::abs(tc - expect) / std::abs(expect) < 1e-3);
    }
}

TEST_CASE("mesh dumps are parseable text") {
    const auto data = gallery::load("catenoid");
    const auto sm = build_compact_mesh(data, 2, false);
    std::ostringstream os;
    dump_off(sm, os);
    CHECK(os.str().find("z ") != std::string::npos);
    const auto tm = build_truncated_mesh(data, 10.0, 1.0, 3);
    std::ostringstream ot;
    dump_off(tm, ot);
    CHECK(ot.str().find("boundary") != std::string::npos);
}
