#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "minlab/gallery.hpp"
#include "minlab/meromorphic.hpp"

using namespace minlab;
using namespace minlab::meromorphic;

namespace {

RationalMap rm(Poly num, Poly den) { return RationalMap(std::move(num), std::move(den)); }

Complex C(double re, double im = 0.0) { return Complex(re, im); }

}  // namespace

TEST_CASE("rational map evaluation") {
    const RationalMap zsq = rm({C(0), C(0), C(1)}, {C(1)});
    CHECK(std::abs(zsq.eval(C(1, 1)) - C(0, 2)) < 1e-12);

    const RationalMap inv = rm({C(1)}, {C(0), C(1)});
    CHECK(std::abs(inv.eval(C(2)) - C(0.5)) < 1e-12);

    const RationalMap f = rm({C(-1), C(0), C(0), C(1)}, {C(2), C(1)});
    CHECK(std::abs(f.eval(C(1))) < 1e-12);

    // catastrophic cancellation near a pole away from the origin is rejected
    const RationalMap shifted = rm({C(1)}, {C(-1), C(1)});  // 1/(z-1)
    CHECK_THROWS_AS(shifted.eval(C(1.0 + 1e-12)), PoleProximity);
    CHECK_THROWS_AS(inv.eval(C(0)), PoleProximity);
    // a pole at the chart origin is cancellation-free: deep evaluation works
    const RationalMap invsq = rm({C(1)}, {C(0), C(0), C(1)});
    CHECK(std::abs(invsq.eval(C(1e-30)) - C(1e60)) < 1e48);
}

TEST_CASE("evaluation is stable at large arguments") {
    const RationalMap f = rm({C(1), C(0), C(3)}, {C(0), C(0), C(1)});  // (3z^2+1)/z^2
    CHECK(std::abs(f.eval(C(1e9)) - C(3)) < 1e-8);
}

TEST_CASE("derivatives") {
    const RationalMap zsq = rm({C(0), C(0), C(1)}, {C(1)});
    const RationalMap dz = zsq.derivative();
    CHECK(std::abs(dz.eval(C(3)) - C(6)) < 1e-12);

    const RationalMap inv = rm({C(1)}, {C(0), C(1)});
    CHECK(std::abs(inv.derivative().eval(C(2)) - C(-0.25)) < 1e-12);

    // (z^2+1)/(z-1) -> (z^2-2z-1)/(z-1)^2, checked by finite differences
    const RationalMap g = rm({C(1), C(0), C(1)}, {C(-1), C(1)});
    const RationalMap gd = g.derivative();
    const double h = 1e-6;
    for (const Complex z : {C(0.3), C(2.5), C(-1.2, 0.7), C(0, 3), C(4, -2)}) {
        const Complex fd = (g.eval(z + h) - g.eval(z - h)) / (2 * h);
        CHECK(std::abs(gd.eval(z) - fd) < 1e-5 * (1.0 + std::abs(fd)));
    }
}

TEST_CASE("polynomial roots") {
    SECTION("cube roots of unity") {
        const auto r = roots({C(-1), C(0), C(0), C(1)});
        REQUIRE(r.size() == 3);
        for (const auto& root : r) {
            CHECK(root.multiplicity == 1);
            CHECK(std::abs(std::pow(root.value, 3) - C(1)) < 1e-9);
        }
    }
    SECTION("double root") {
        const auto r = roots({C(4), C(-4), C(1)});  // (z-2)^2
        REQUIRE(r.size() == 1);
        CHECK(r[0].multiplicity == 2);
        CHECK(std::abs(r[0].value - C(2)) < 1e-6);
    }
    SECTION("z^4 + 1") {
        const auto r = roots({C(1), C(0), C(0), C(0), C(1)});
        REQUIRE(r.size() == 4);
        for (const auto& root : r) {
            CHECK(std::abs(std::abs(root.value) - 1.0) < 1e-9);
            CHECK(std::abs(std::pow(root.value, 4) + C(1)) < 1e-9);
        }
    }
    SECTION("zero polynomial rejected") {
        CHECK_THROWS_AS(roots({C(0), C(0)}), DegenerateInput);
    }
}

TEST_CASE("residues") {
    const Differential dz_over_z(rm({C(1)}, {C(0), C(1)}));
    CHECK(std::abs(residue(dz_over_z, C(0)) - C(1)) < 1e-10);

    const Differential dz_over_z2(rm({C(1)}, {C(0), C(0), C(1)}));
    CHECK(std::abs(residue(dz_over_z2, C(0))) < 1e-10);

    // (z+1)/(z(z-1)) = -1/z + 2/(z-1)
    const Differential f(rm({C(1), C(1)}, {C(0), C(-1), C(1)}));
    CHECK(std::abs(residue(f, C(1)) - C(2)) < 1e-10);
    CHECK(std::abs(residue(f, C(0)) - C(-1)) < 1e-10);

    CHECK_THROWS_AS(residue(dz_over_z, C(5)), NotAPole);
}

TEST_CASE("path integrals") {
    const Differential one(rm({C(1)}, {C(1)}));
    PathSpec seg;
    seg.waypoints = {C(0), C(1, 1)};
    CHECK(std::abs(path_integral(one, seg) - C(1, 1)) < 1e-10);

    const Differential idmap(rm({C(0), C(1)}, {C(1)}));
    PathSpec seg2;
    seg2.waypoints = {C(0), C(2)};
    CHECK(std::abs(path_integral(idmap, seg2) - C(2)) < 1e-10);

    // closed unit square loop around the pole of dz/z
    const Differential dz_over_z(rm({C(1)}, {C(0), C(1)}));
    PathSpec loop;
    loop.waypoints = {C(1, -1), C(1, 1), C(-1, 1), C(-1, -1), C(1, -1)};
    loop.pole_clearance = 0.5;
    CHECK(std::abs(path_integral(dz_over_z, loop) - C(0, 2 * M_PI)) < 1e-8);
}

TEST_CASE("closed null-homotopic loop integrates to zero") {
    const auto data = gallery::load("jorge-meeks-3");
    PathSpec loop;
    loop.waypoints = {C(0.2, 0.2), C(0.5, 0.2), C(0.5, 0.5), C(0.2, 0.5), C(0.2, 0.2)};
    loop.pole_clearance = 1e-2;
    for (const auto& phi : data.phi) CHECK(std::abs(path_integral(phi, loop)) < 1e-8);
}

TEST_CASE("residue agrees with a small closed loop integral") {
    for (const char* name : {"catenoid", "jorge-meeks-3"}) {
        const auto data = gallery::load(name);
        for (const auto& phi : data.phi) {
            for (const auto& pole : phi.coeff.poles()) {
                const Complex p = pole.value;
                const double r = 0.05;
                PathSpec loop;
                const int n = 16;
                for (int i = 0; i <= n; ++i) {
                    const double th = 2 * M_PI * i / n;
                    loop.waypoints.push_back(p + r * Complex(std::cos(th), std::sin(th)));
                }
                loop.pole_clearance = r * 0.3;
                const Complex via_loop = path_integral(phi, loop) / Complex(0, 2 * M_PI);
                CHECK(std::abs(via_loop - residue(phi, p)) < 1e-8);
            }
        }
    }
}

TEST_CASE("derivative matches finite differences on gallery maps") {
    std::mt19937 rng(20240817);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (const char* name : {"catenoid", "enneper", "jorge-meeks-3", "jorge-meeks-4"}) {
        const auto data = gallery::load(name);
        const RationalMap gd = data.gauss.derivative();
        int tested = 0;
        while (tested < 20) {
            const Complex z(u(rng), u(rng));
            Complex exact, approx;
            try {
                exact = gd.eval(z);
                const double h = 1e-6;
                approx = (data.gauss.eval(z + h) - data.gauss.eval(z - h)) / (2 * h);
            } catch (const PoleProximity&) {
                continue;
            }
            CHECK(std::abs(exact - approx) < 1e-5 * (1.0 + std::abs(exact)));
            ++tested;
        }
    }
}

TEST_CASE("chart transform is an involution") {
    const auto data = gallery::load("jorge-meeks-3");
    for (const auto& phi : data.phi) {
        const Differential back = phi.chart_transform().chart_transform();
        for (const Complex z : {C(0.3, 0.1), C(1.7, -0.4), C(-0.8, 0.9)}) {
            const Complex a = phi.coeff.eval(z);
            const Complex b = back.coeff.eval(z);
            CHECK(std::abs(a - b) < 1e-12 * (1.0 + std::abs(a)));
        }
    }
}

TEST_CASE("reduced form removes common factors") {
    // (z^2-1)/(z-1) reduces to z+1: no pole at z=1
    const RationalMap f = rm({C(-1), C(0), C(1)}, {C(-1), C(1)});
    CHECK(std::abs(f.eval(C(1)) - C(2)) < 1e-10);
    CHECK(f.poles().empty());
}
