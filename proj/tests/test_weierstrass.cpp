#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "minlab/gallery.hpp"
#include "minlab/weierstrass.hpp"

using namespace minlab;
using namespace minlab::meromorphic;
using namespace minlab::weierstrass;

namespace {
Complex C(double re, double im = 0.0) { return Complex(re, im); }

const std::vector<std::string>& gallery_names() {
    static const std::vector<std::string> names = {"plane",         "catenoid",      "enneper",
                                                   "jorge-meeks-3", "jorge-meeks-4", "jorge-meeks-5"};
    return names;
}

// Random chart points avoiding punctures and poles of phi.
std::vector<ChartPoint> sample_points(const WeierstrassData& d, int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.6, 1.6);
    std::vector<ChartPoint> out;
    while (int(out.size()) < n) {
        const Complex z(u(rng), u(rng));
        bool bad = false;
        for (const auto& p : d.phi_poles_z)
            if (std::abs(z - p) < 0.05) bad = true;
        for (const auto& p : d.punctures)
            if (std::abs(z - p) < 0.05) bad = true;
        if (bad) continue;
        out.push_back(std::abs(z) <= 1.0 ? ChartPoint::z(z) : ChartPoint::z(z).other_chart());
    }
    return out;
}
}  // namespace

TEST_CASE("catenoid and enneper phi forms") {
    const auto cat = gallery::load("catenoid");
    for (const Complex z : {C(0.4, 0.3), C(1.2, -0.5)}) {
        const auto v = phi_at(cat, ChartPoint::z(z));
        const Complex zi2 = 1.0 / (z * z);
        CHECK(std::abs(v[0] - 0.5 * (zi2 - 1.0)) < 1e-12);
        CHECK(std::abs(v[1] - C(0, 0.5) * (zi2 + 1.0)) < 1e-12);
        CHECK(std::abs(v[2] - 1.0 / z) < 1e-12);
    }
    const auto enn = gallery::load("enneper");
    CHECK(std::abs(enn.phi[2].coeff.eval(C(0.7, 0.2)) - C(0.7, 0.2)) < 1e-12);
}

TEST_CASE("conformality identity: phi1^2 + phi2^2 + phi3^2 vanishes") {
    for (const auto& name : gallery_names()) {
        const auto d = gallery::load(name);
        const RationalMap sum = d.phi[0].coeff * d.phi[0].coeff + d.phi[1].coeff * d.phi[1].coeff +
                                d.phi[2].coeff * d.phi[2].coeff;
        for (const auto& p : sample_points(d, 10, 7)) {
            const Complex z = p.w_chart ? p.z_value() : p.coord;
            const double scale = metric_factor(d, ChartPoint::z(z));
            CHECK(std::abs(sum.eval(z)) < 1e-10 * (1.0 + scale));
        }
    }
}

TEST_CASE("period closure") {
    SECTION("catenoid: vertical period is 2 pi i") {
        const auto d = gallery::load("catenoid");
        const auto rep = period_closure_check(d);
        REQUIRE(rep.pass);
        REQUIRE(rep.rows.size() == 2);
        // puncture at 0: residues (0,0,1) -> periods (0,0,2 pi i)
        CHECK(std::abs(rep.rows[0].periods[0]) < 1e-9);
        CHECK(std::abs(rep.rows[0].periods[1]) < 1e-9);
        CHECK(std::abs(rep.rows[0].periods[2] - C(0, 2 * M_PI)) < 1e-8);
    }
    SECTION("plane passes trivially") {
        CHECK(period_closure_check(gallery::load("plane")).pass);
    }
    SECTION("mismatched height differential fails closure") {
        // g = z with dh = dz/z^2 has a real period at 0
        const auto bad = make_data("bad", RationalMap::identity(),
                                   Differential(RationalMap({C(1)}, {C(0), C(0), C(1)})), {C(0)}, true);
        CHECK_FALSE(period_closure_check(bad).pass);
        CHECK_THROWS_AS(validate(bad), PeriodFailure);
    }
}

TEST_CASE("immersion of the catenoid") {
    const auto d = gallery::load("catenoid");
    SECTION("basepoint maps to the origin") {
        CHECK(immerse(d, C(1)).norm() < 1e-10);
    }
    SECTION("height is log|z|") {
        for (const double th : {0.3, 1.2, 2.9}) {
            const Complex z = std::polar(1.0, th);
            CHECK(std::abs(immerse(d, z).z()) < 1e-7);
        }
        CHECK(std::abs(immerse(d, C(2)).z() - std::log(2.0)) < 1e-7);
    }
    SECTION("path independence") {
        // same endpoint reached through an intermediate detour point
        const Complex target(0.3, 1.4);
        const Vec3 direct = immerse(d, target);
        const Vec3 via = immerse_delta(d, ChartPoint::z(C(1)), ChartPoint::z(C(-1.2, 0.8))) +
                         immerse_delta(d, ChartPoint::z(C(-1.2, 0.8)), ChartPoint::z(target));
        CHECK((direct - via).norm() < 1e-7);
    }
}

TEST_CASE("metric factor") {
    const auto cat = gallery::load("catenoid");
    CHECK(std::abs(metric_factor(cat, C(0, 1)) - 2.0) < 1e-12);

    const auto pl = gallery::load("plane");
    CHECK(std::abs(metric_factor(pl, C(0.2, 0.1)) - metric_factor(pl, C(-1.4, 0.9))) < 1e-12);

    // scaling dh by a real constant scales the metric factor by its square
    const auto scaled = make_data("catenoid-scaled", cat.gauss,
                                  Differential(Complex(3.0) * cat.height.coeff), cat.punctures,
                                  cat.puncture_at_infinity);
    CHECK(std::abs(metric_factor(scaled, C(0.5, 0.4)) - 9.0 * metric_factor(cat, C(0.5, 0.4))) <
          1e-10);
}

TEST_CASE("normal, curvature, and minimality at random points") {
    for (const auto& name : gallery_names()) {
        const auto d = gallery::load(name);
        for (const auto& p : sample_points(d, 50, 11)) {
            const Vec3 n = normal(d, p);
            CHECK(std::abs(n.norm() - 1.0) < 1e-10);
            const double kappa = gauss_curvature(d, p);
            CHECK(kappa <= 0.0);
            if (fubini_study_density(d, p) > 1e-8) CHECK(kappa < 0.0);
            const double h2 = std::pow(std::sqrt(std::max(0.0, -2.0 * kappa)), 2);
            CHECK(std::abs(2.0 * kappa + h2) < 1e-8 * (1.0 + std::abs(kappa)));
        }
    }
}

TEST_CASE("curvature decays at least quadratically on an end") {
    const auto d = gallery::load("catenoid");
    std::vector<double> lx, lk;
    for (double r = 0.05; r > 1e-4; r *= 0.6) {
        const Complex z(r, 0.3 * r);  // ray into the puncture at 0
        const ChartPoint p = ChartPoint::z(z);
        const Vec3 x = immerse(d, z);
        const double kappa = gauss_curvature(d, p);
        lx.push_back(std::log(1.0 + x.squaredNorm()));
        lk.push_back(std::log(std::abs(kappa)));
    }
    const auto fit = linear_fit(lx, lk);
    CHECK(fit.slope <= -1.0 + 0.05);  // |kappa| <= C (1+|x|^2)^{-1} at least
    CHECK(fit.r2 > 0.99);
}

TEST_CASE("topology reports") {
    const auto cat = topology(gallery::load("catenoid"));
    CHECK(cat.genus == 0);
    CHECK(cat.ends == 2);
    CHECK(cat.gauss_degree == 1);
    CHECK(std::abs(cat.total_curvature + 4 * M_PI) < 1e-12);
    CHECK(cat.jorge_meeks_holds);

    const auto jm3 = topology(gallery::load("jorge-meeks-3"));
    CHECK(jm3.ends == 3);
    CHECK(jm3.gauss_degree == 2);
    CHECK(std::abs(jm3.total_curvature + 8 * M_PI) < 1e-12);
    CHECK(jm3.jorge_meeks_holds);

    // Enneper: single non-embedded end, the degree relation is not asserted
    const auto enn = topology(gallery::load("enneper"));
    CHECK(enn.ends == 1);
    CHECK(enn.gauss_degree == 1);
    CHECK_FALSE(enn.embedded_ends);
    CHECK_FALSE(enn.jorge_meeks_holds);
}

TEST_CASE("end analysis") {
    SECTION("catenoid") {
        const auto ends = end_analysis(gallery::load("catenoid"));
        REQUIRE(ends.size() == 2);
        CHECK(ends[0].growth_order == 1);
        CHECK(ends[1].growth_order == 1);
        CHECK(ends[0].embedded);
        CHECK((ends[0].limit_normal - Vec3(0, 0, -1)).norm() < 1e-10);
        CHECK((ends[1].limit_normal - Vec3(0, 0, 1)).norm() < 1e-10);
    }
    SECTION("enneper end has multiplicity three") {
        const auto ends = end_analysis(gallery::load("enneper"));
        REQUIRE(ends.size() == 1);
        CHECK(ends[0].growth_order == 3);
        CHECK_FALSE(ends[0].embedded);
    }
    SECTION("r-noid ends are embedded with equatorial normals") {
        const auto ends = end_analysis(gallery::load("jorge-meeks-3"));
        REQUIRE(ends.size() == 3);
        for (const auto& e : ends) {
            CHECK(e.growth_order == 1);
            CHECK(std::abs(e.limit_normal.z()) < 1e-9);
        }
    }
}

TEST_CASE("end growth exponent matches the integer order") {
    for (const char* name : {"catenoid", "enneper"}) {
        const auto d = gallery::load(name);
        const auto ends = end_analysis(d);
        // probe the first end along a ray approaching its puncture
        const auto& e = ends.front();
        std::vector<double> linvz, lX;
        for (double r = 0.03; r > 3e-4; r *= 0.55) {
            Complex z;
            if (e.puncture.is_infinity())
                z = 1.0 / Complex(r, 0.2 * r);
            else
                z = e.puncture.z_value() + Complex(r, 0.2 * r);
            const Vec3 x = immerse(d, z);
            linvz.push_back(-std::log(r));
            lX.push_back(std::log(x.norm()));
        }
        const auto fit = linear_fit(linvz, lX);
        CHECK(std::abs(fit.slope - e.growth_order) < 0.05);
    }
}

TEST_CASE("immersion is rotation equivariant") {
    const auto d = gallery::load("catenoid");
    const Mat3 r = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitX()).toRotationMatrix();
    const auto dr = rotate(d, r);
    CHECK(period_closure_check(dr).pass);
    for (const Complex z : {C(2), C(0.3, 0.9), C(-1.1, 0.4)}) {
        const Vec3 a = r * immerse(d, z);
        const Vec3 b = immerse(dr, z);
        CHECK((a - b).norm() < 1e-6);
    }
}

TEST_CASE("blow-down: embedded ends flatten against the limit normal") {
    const auto d = gallery::load("catenoid");
    const auto ends = end_analysis(d);
    const auto& e = ends[1];  // end at infinity, limit normal (0,0,1)
    std::vector<double> lX, ldev;
    for (double rr = 10.0; rr < 3000.0; rr *= 2.0) {
        const Complex z(rr, 0.4 * rr);
        const Vec3 x = immerse(d, z);
        const double dev = std::abs(x.dot(e.limit_normal)) / x.norm();
        lX.push_back(std::log(x.norm()));
        ldev.push_back(std::log(dev));
    }
    for (size_t i = 1; i < ldev.size(); ++i) CHECK(ldev[i] < ldev[i - 1]);
    const auto fit = linear_fit(lX, ldev);
    // catenoidal ends flatten like log|X|/|X|; the log factor drags the
    // finite-window fitted rate slightly below 1
    CHECK(fit.slope < -0.75);
}

TEST_CASE("gallery loader enforces the schema") {
    CHECK_THROWS_AS(gallery::load("no-such-surface"), DegenerateInput);
    {
        std::ofstream out("/tmp/bad_gallery_extra.json");
        out << R"({"name":"x","genus":0,"gauss":{"num":[[0,0],[1,0]],"den":[[1,0]]},)"
            << R"("height":{"num":[[1,0]],"den":[[0,0],[1,0]]},"punctures":[[0,0]],)"
            << R"("puncture_at_infinity":true,"surprise":1})";
    }
    CHECK_THROWS_AS(gallery::load_file("/tmp/bad_gallery_extra.json"), DegenerateInput);
    {
        std::ofstream out("/tmp/bad_gallery_missing.json");
        out << R"({"name":"x","genus":0})";
    }
    CHECK_THROWS_AS(gallery::load_file("/tmp/bad_gallery_missing.json"), DegenerateInput);
}

TEST_CASE("second fundamental form coefficient is chart consistent") {
    const auto d = gallery::load("jorge-meeks-3");
    // In overlapping charts psi transforms as a quadratic differential:
    // psi_w = psi_z(1/w) * (dz/dw)^2 = psi_z(1/w) / w^4
    for (const Complex z : {C(1.3, 0.2), C(0.9, -1.1)}) {
        const Complex w = 1.0 / z;
        const Complex a = sff_coefficient(d, ChartPoint::z(z));
        const Complex b = sff_coefficient(d, ChartPoint::w(w));
        const Complex expect = a * (z * z) * (z * z);
        CHECK(std::abs(b - expect) < 1e-9 * (1.0 + std::abs(expect)));
    }
}
