#pragma once

// Surface geometry generated from Weierstrass data (g, dh): immersion,
// conformal metric factor, Gauss map, curvature, ends, and topology
// bookkeeping on the genus-zero compactification.

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "minlab/errors.hpp"
#include "minlab/meromorphic.hpp"
#include "minlab/numutil.hpp"

namespace minlab::weierstrass {

using meromorphic::Complex;
using meromorphic::Differential;
using meromorphic::RationalMap;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Chart convention: z is the stereographic coordinate with z=0 at the south
// pole (0,0,-1) and z=infinity at the north pole (0,0,1); w = 1/z.

struct ChartPoint {
    Complex coord{0.0, 0.0};
    bool w_chart = false;

    static ChartPoint z(Complex c) { return {c, false}; }
    static ChartPoint w(Complex c) { return {c, true}; }
    static ChartPoint infinity() { return {Complex(0.0), true}; }

    bool is_infinity() const { return w_chart && coord == Complex(0.0); }
    bool is_zero() const { return !w_chart && coord == Complex(0.0); }

    Complex z_value() const {
        if (!w_chart) return coord;
        return 1.0 / coord;  // infinite for w=0; caller guards
    }
    Complex w_value() const {
        if (w_chart) return coord;
        return 1.0 / coord;
    }
    ChartPoint other_chart() const {
        return {1.0 / coord, !w_chart};
    }
    Vec3 unit_sphere() const {
        const double u = coord.real(), v = coord.imag();
        const double n2 = u * u + v * v;
        if (!w_chart) return Vec3(2 * u, 2 * v, n2 - 1) / (n2 + 1);
        return Vec3(2 * u, -2 * v, 1 - n2) / (1 + n2);
    }
};

inline Vec3 stereographic(Complex g) {
    const double n2 = std::norm(g);
    if (!std::isfinite(n2) || n2 > 1e300) return Vec3(0, 0, 1);
    return Vec3(2 * g.real(), 2 * g.imag(), n2 - 1) / (n2 + 1);
}

// Inverse stereographic; throws when N is the north pole.
inline Complex stereographic_inverse(const Vec3& n) {
    if (1.0 - n.z() < 1e-12) throw DegenerateInput("stereographic_inverse: north pole");
    return Complex(n.x(), n.y()) / (1.0 - n.z());
}

inline Mat3 rotation_taking(const Vec3& from_in, const Vec3& to_in) {
    const Vec3 a = from_in.normalized(), b = to_in.normalized();
    const double c = a.dot(b);
    if (c > 1.0 - 1e-14) return Mat3::Identity();
    Vec3 axis = a.cross(b);
    if (axis.norm() < 1e-14) {
        // Antipodal: rotate by pi about any axis orthogonal to a.
        axis = a.cross(Vec3::UnitX());
        if (axis.norm() < 1e-8) axis = a.cross(Vec3::UnitY());
        return Eigen::AngleAxisd(M_PI, axis.normalized()).toRotationMatrix();
    }
    return Eigen::AngleAxisd(std::acos(std::clamp(c, -1.0, 1.0)), axis.normalized()).toRotationMatrix();
}

// ---------------------------------------------------------------------------

struct WeierstrassData {
    std::string name;
    int genus = 0;
    RationalMap gauss;
    Differential height;
    std::vector<Complex> punctures;  // finite punctures
    bool puncture_at_infinity = false;

    // Derived caches (filled by make_data).
    std::array<Differential, 3> phi;    // z-chart coefficients
    std::array<Differential, 3> phi_w;  // w-chart coefficients
    RationalMap gauss_w;                // g(1/w)
    RationalMap gauss_dz, gauss_w_dw;   // chart derivatives of g
    RationalMap sff_z, sff_w;           // (g'/g) dh coefficient: II = Re(psi dz^2)
    std::vector<Complex> phi_poles_z, phi_poles_w;
    Complex basepoint{1.0, 0.0};

    bool is_flat() const { return gauss.map_degree() == 0; }
    int end_count() const { return int(punctures.size()) + (puncture_at_infinity ? 1 : 0); }

    std::vector<ChartPoint> all_punctures() const {
        std::vector<ChartPoint> out;
        for (const auto& p : punctures) out.push_back(ChartPoint::z(p));
        if (puncture_at_infinity) out.push_back(ChartPoint::infinity());
        return out;
    }
};

inline std::array<Differential, 3> rotated_phi(const Mat3& r, const std::array<Differential, 3>& phi) {
    std::array<Differential, 3> out;
    for (int i = 0; i < 3; ++i) {
        RationalMap acc = RationalMap::constant(Complex(0.0));
        for (int j = 0; j < 3; ++j) acc = acc + Complex(r(i, j)) * phi[j].coeff;
        out[i] = Differential(acc);
    }
    return out;
}

namespace detail {

inline std::array<Differential, 3> build_phi(const RationalMap& gauss, const Differential& height) {
    if (gauss.map_degree() == 0) {
        // Flat surface: the representation degenerates at constant g; the
        // plane orthogonal to the limit normal is generated directly and
        // rotated into place.
        const Complex c = gauss.eval(Complex(0.0));
        const Mat3 r = rotation_taking(Vec3(0, 0, -1), stereographic(c));
        std::array<Differential, 3> base = {
            Differential(height.coeff),
            Differential(Complex(0.0, -1.0) * height.coeff),
            Differential(RationalMap::constant(Complex(0.0)))};
        return rotated_phi(r, base);
    }
    const RationalMap& g = gauss;
    const RationalMap ginv = g.reciprocal();
    const RationalMap& eta = height.coeff;
    return {Differential(Complex(0.5) * ((ginv - g) * eta)),
            Differential(Complex(0.0, 0.5) * ((ginv + g) * eta)),
            Differential(eta)};
}

inline std::vector<Complex> pole_locations(const std::array<Differential, 3>& phi) {
    std::vector<Complex> out;
    for (const auto& d : phi)
        for (const auto& p : d.coeff.poles()) {
            bool dup = false;
            for (const auto& q : out)
                if (std::abs(q - p.value) < 1e-9 * std::max(1.0, std::abs(p.value))) dup = true;
            if (!dup) out.push_back(p.value);
        }
    return out;
}

}  // namespace detail

inline WeierstrassData make_data(std::string name, RationalMap gauss, Differential height,
                                 std::vector<Complex> punctures, bool puncture_at_infinity,
                                 int genus = 0) {
    if (genus != 0) throw DegenerateInput("make_data: only genus 0 is supported");
    WeierstrassData d;
    d.name = std::move(name);
    d.genus = genus;
    d.gauss = std::move(gauss);
    d.height = std::move(height);
    d.punctures = std::move(punctures);
    d.puncture_at_infinity = puncture_at_infinity;

    d.phi = detail::build_phi(d.gauss, d.height);
    for (int i = 0; i < 3; ++i) d.phi_w[i] = d.phi[i].chart_transform();
    d.gauss_w = d.gauss.at_inverse();
    d.gauss_dz = d.gauss.derivative();
    d.gauss_w_dw = d.gauss_w.derivative();
    if (!d.is_flat()) {
        d.sff_z = (d.gauss_dz / d.gauss) * d.height.coeff;
        d.sff_w = (d.gauss_w_dw / d.gauss_w) * d.height.chart_transform().coeff;
    } else {
        d.sff_z = RationalMap::constant(Complex(0.0));
        d.sff_w = RationalMap::constant(Complex(0.0));
    }
    d.phi_poles_z = detail::pole_locations(d.phi);
    d.phi_poles_w = detail::pole_locations(d.phi_w);

    d.basepoint = Complex(1.0, 0.0);
    for (const auto& p : d.punctures)
        if (std::abs(p - d.basepoint) < 1e-9) d.basepoint = Complex(1.0, 1.0);
    return d;
}

// ---------------------------------------------------------------------------
// Chart-aware pointwise evaluation.

inline std::array<Complex, 3> phi_at(const WeierstrassData& d, const ChartPoint& p) {
    const auto& phi = p.w_chart ? d.phi_w : d.phi;
    return {phi[0].coeff.eval(p.coord), phi[1].coeff.eval(p.coord), phi[2].coeff.eval(p.coord)};
}

// Conformal factor of the induced metric, lambda^2 = |phi1|^2+|phi2|^2+|phi3|^2.
inline double metric_factor(const WeierstrassData& d, const ChartPoint& p) {
    const auto v = phi_at(d, p);
    return std::norm(v[0]) + std::norm(v[1]) + std::norm(v[2]);
}

inline double metric_factor(const WeierstrassData& d, Complex z) {
    return metric_factor(d, ChartPoint::z(z));
}

// Fubini-Study pullback density rho(z) = 4|g'|^2/(1+|g|^2)^2 in the chart of p.
// Evaluated through 1/g when |g| is large, so poles of g are regular points.
inline double fubini_study_density(const WeierstrassData& d, const ChartPoint& p) {
    if (d.is_flat()) return 0.0;
    const RationalMap& g = p.w_chart ? d.gauss_w : d.gauss;
    const RationalMap& gd = p.w_chart ? d.gauss_w_dw : d.gauss_dz;
    bool use_reciprocal = false;
    Complex gv;
    try {
        gv = g.eval(p.coord);
        if (std::abs(gv) > 1.0) use_reciprocal = true;
    } catch (const PoleProximity&) {
        use_reciprocal = true;
    }
    if (!use_reciprocal) {
        const Complex gdv = gd.eval(p.coord);
        const double den = 1.0 + std::norm(gv);
        return 4.0 * std::norm(gdv) / (den * den);
    }
    const RationalMap h = g.reciprocal();
    const Complex hv = h.eval(p.coord);
    const Complex hdv = h.derivative().eval(p.coord);
    const double den = 1.0 + std::norm(hv);
    return 4.0 * std::norm(hdv) / (den * den);
}

inline Vec3 normal(const WeierstrassData& d, const ChartPoint& p) {
    const RationalMap& g = p.w_chart ? d.gauss_w : d.gauss;
    try {
        return stereographic(g.eval(p.coord));
    } catch (const PoleProximity&) {
        return Vec3(0, 0, 1);
    }
}

inline double gauss_curvature(const WeierstrassData& d, const ChartPoint& p) {
    const double l2 = metric_factor(d, p);
    if (l2 <= 0.0) throw PoleProximity("gauss_curvature: degenerate metric sample");
    return -fubini_study_density(d, p) / l2;
}

// Second fundamental form in the chart of p: II = Re(psi dz^2) with
// psi = (g'/g) dh.  Components h_uu = Re psi, h_uv = -Im psi, h_vv = -Re psi.
inline Complex sff_coefficient(const WeierstrassData& d, const ChartPoint& p) {
    const RationalMap& s = p.w_chart ? d.sff_w : d.sff_z;
    return s.eval(p.coord);
}

struct SurfaceGeometry {
    Vec3 position = Vec3::Zero();
    double metric_factor = 0.0;
    Vec3 normal = Vec3::Zero();
    double gauss_curvature = 0.0;
    double sff_norm = 0.0;
    double extrinsic_radius = 0.0;
};

// ---------------------------------------------------------------------------
// Immersion: X = Re int (phi1, phi2, phi3).

// Increment of X along a chart segment from a to b (both in the same chart,
// straight line with perpendicular pole detours).
inline Vec3 immerse_delta_chart(const WeierstrassData& d, Complex a, Complex b, bool w_chart,
                                double clearance = 1e-3) {
    const auto& phi = w_chart ? d.phi_w : d.phi;
    const auto& poles = w_chart ? d.phi_poles_w : d.phi_poles_z;
    double end_dist = 1e300;
    for (const auto& p : poles) end_dist = std::min({end_dist, std::abs(a - p), std::abs(b - p)});
    if (end_dist < 1e-12) throw PoleProximity("immerse: endpoint at a pole");
    const double eff = std::min(clearance, 0.45 * end_dist);
    meromorphic::PathSpec path;
    path.pole_clearance = eff * 0.999;
    path.waypoints = meromorphic::route_segment(a, b, poles, eff);
    Vec3 dx;
    for (int k = 0; k < 3; ++k) dx[k] = meromorphic::path_integral(phi[k], path).real();
    return dx;
}

// Chart selection for a segment between two chart points: prefer the chart
// in which both endpoints have the smaller maximum modulus.
inline Vec3 immerse_delta(const WeierstrassData& d, const ChartPoint& a, const ChartPoint& b,
                          double clearance = 1e-3) {
    auto mod_in = [&](const ChartPoint& p, bool w) {
        if (p.w_chart == w) return std::abs(p.coord);
        if (p.coord == Complex(0.0)) return 1e300;  // other chart's origin is this chart's infinity
        return 1.0 / std::abs(p.coord);
    };
    const double mz = std::max(mod_in(a, false), mod_in(b, false));
    const double mw = std::max(mod_in(a, true), mod_in(b, true));
    const bool use_w = mw < mz;
    const Complex ca = use_w ? a.w_value() : a.z_value();
    const Complex cb = use_w ? b.w_value() : b.z_value();
    return immerse_delta_chart(d, ca, cb, use_w, clearance);
}

inline Vec3 immerse(const WeierstrassData& d, Complex z, std::optional<Complex> basepoint = {}) {
    const Complex b = basepoint.value_or(d.basepoint);
    return immerse_delta(d, ChartPoint::z(b), ChartPoint::z(z));
}

inline SurfaceGeometry surface_geometry(const WeierstrassData& d, const ChartPoint& p,
                                        const Vec3& position) {
    SurfaceGeometry s;
    s.position = position;
    s.metric_factor = metric_factor(d, p);
    s.normal = normal(d, p);
    s.gauss_curvature = gauss_curvature(d, p);
    s.sff_norm = std::sqrt(std::max(0.0, -2.0 * s.gauss_curvature));
    s.extrinsic_radius = position.norm();
    return s;
}

// ---------------------------------------------------------------------------
// Period closure.

struct PunctureperiodRow {
    ChartPoint puncture;
    std::array<Complex, 3> periods;  // closed-loop periods of phi_k
    double max_real = 0.0;
};

struct PeriodReport {
    std::vector<PunctureperiodRow> rows;
    bool pass = true;
    double tolerance = 1e-8;
};

inline PeriodReport period_closure_check(const WeierstrassData& d, double tol = 1e-8) {
    PeriodReport rep;
    rep.tolerance = tol;
    const Complex two_pi_i(0.0, 2.0 * M_PI);
    for (const auto& p : d.all_punctures()) {
        PunctureperiodRow row;
        row.puncture = p;
        for (int k = 0; k < 3; ++k) {
            Complex res(0.0);
            try {
                if (p.is_infinity())
                    res = meromorphic::residue_at_infinity(d.phi[k]);
                else
                    res = meromorphic::residue(d.phi[k], p.coord);
            } catch (const NotAPole&) {
                res = Complex(0.0);
            }
            row.periods[k] = two_pi_i * res;
            row.max_real = std::max(row.max_real, std::abs(row.periods[k].real()));
        }
        if (row.max_real > tol) rep.pass = false;
        rep.rows.push_back(row);
    }
    return rep;
}

inline void validate(const WeierstrassData& d) {
    const PeriodReport rep = period_closure_check(d);
    if (!rep.pass) {
        for (const auto& row : rep.rows)
            if (row.max_real > rep.tolerance)
                throw PeriodFailure(d.name + ": period closure fails at a puncture, |Re period| = " +
                                    std::to_string(row.max_real));
    }
    // Completeness proxy: metric factor strictly positive at a few samples.
    for (const Complex z : {Complex(0.37, 0.22), Complex(-0.61, 0.48), Complex(1.73, -0.35)}) {
        bool near_puncture = false;
        for (const auto& p : d.punctures)
            if (std::abs(p - z) < 1e-6) near_puncture = true;
        if (near_puncture) continue;
        if (metric_factor(d, z) <= 0.0)
            throw DegenerateInput(d.name + ": metric factor not positive at a sample point");
    }
}

// ---------------------------------------------------------------------------
// Rotation of the surface in R^3, acting on the Weierstrass data.

inline WeierstrassData rotate(const WeierstrassData& d, const Mat3& r) {
    const auto phi_t = rotated_phi(r, d.phi);
    const RationalMap denom = phi_t[0].coeff - Complex(0.0, 1.0) * phi_t[1].coeff;
    RationalMap g_t;
    Differential dh_t(phi_t[2].coeff);
    if (phi_t[2].coeff.is_zero()) {
        // Rotated flat surface: constant Gauss map from the rotated normal.
        const Vec3 n_new = r * stereographic(d.gauss.eval(Complex(0.0)));
        g_t = RationalMap::constant(stereographic_inverse(n_new));
    } else if (denom.is_zero()) {
        throw DegenerateInput("rotate: Gauss map becomes identically infinite");
    } else {
        g_t = phi_t[2].coeff / denom;
    }
    return make_data(d.name + " (rotated)", g_t, dh_t, d.punctures, d.puncture_at_infinity, d.genus);
}

// ---------------------------------------------------------------------------
// End analysis.

struct EndData {
    ChartPoint puncture;
    int growth_order = 0;  // k: |X| ~ |z|^{-k} near the puncture
    Vec3 limit_normal = Vec3::Zero();
    bool embedded = false;
};

inline int pole_order_at(const Differential& omega, const ChartPoint& p) {
    if (p.is_infinity()) return meromorphic::pole_order_at_infinity(omega);
    if (p.w_chart) return meromorphic::pole_order(omega.chart_transform(), p.coord);
    return meromorphic::pole_order(omega, p.coord);
}

inline std::vector<EndData> end_analysis(const WeierstrassData& d) {
    std::vector<EndData> out;
    for (const auto& p : d.all_punctures()) {
        EndData e;
        e.puncture = p;
        e.limit_normal = normal(d, p);
        // Rotate so the end's limit normal is (0,0,-1); in that frame phi_1
        // and phi_2 share the top pole order and phi_3 is strictly lower.
        const Mat3 r = rotation_taking(e.limit_normal, Vec3(0, 0, -1));
        const auto phi_t = rotated_phi(r, d.phi);
        const int o1 = pole_order_at(phi_t[0], p);
        const int o2 = pole_order_at(phi_t[1], p);
        const int o3 = pole_order_at(phi_t[2], p);
        if (o1 != o2 || o1 <= o3 || o1 < 2)
            throw InconsistentPoleOrders(d.name + ": pole orders (" + std::to_string(o1) + "," +
                                         std::to_string(o2) + "," + std::to_string(o3) +
                                         ") violate the end structure");
        e.growth_order = o1 - 1;
        e.embedded = (e.growth_order == 1);
        out.push_back(e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Topology report and the Jorge-Meeks relation.

struct Topology {
    int genus = 0;
    int ends = 0;
    int gauss_degree = 0;
    double total_curvature = 0.0;
    int sum_growth_orders = 0;
    bool embedded_ends = false;
    bool jorge_meeks_holds = false;
};

inline Topology topology(const WeierstrassData& d, bool enforce_jorge_meeks = true) {
    Topology t;
    t.genus = d.genus;
    t.ends = d.end_count();
    t.gauss_degree = d.gauss.map_degree();
    t.total_curvature = -4.0 * M_PI * t.gauss_degree;
    const auto ends = end_analysis(d);
    t.embedded_ends = true;
    for (const auto& e : ends) {
        t.sum_growth_orders += e.growth_order;
        if (!e.embedded) t.embedded_ends = false;
    }
    t.jorge_meeks_holds = (t.gauss_degree == t.genus + t.ends - 1);
    if (enforce_jorge_meeks && t.embedded_ends && !t.jorge_meeks_holds)
        throw JorgeMeeksViolation(d.name + ": d != g + r - 1 despite embedded ends");
    return t;
}

}  // namespace minlab::weierstrass
