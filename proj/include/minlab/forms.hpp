#pragma once

// Harmonic 1-forms on the compactified surface: explicit end forms with
// prescribed residues, conjugate coordinate differentials *dx_k, weighted-norm
// scans over growing truncations, the vector-valued test fields X_omega, and
// a finite-difference check of the Bochner-type identity they satisfy.

#include <Eigen/Dense>

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "minlab/errors.hpp"
#include "minlab/mesh.hpp"
#include "minlab/numutil.hpp"
#include "minlab/weierstrass.hpp"

namespace minlab::forms {

using meromorphic::Complex;
using meromorphic::Differential;
using meromorphic::Poly;
using meromorphic::RationalMap;
using weierstrass::ChartPoint;
using weierstrass::Vec3;
using weierstrass::WeierstrassData;

// A harmonic 1-form represented through a meromorphic differential f dz:
// the real form is Re(f dz) (a = Re f, b = -Im f in du, dv components) or
// Im(f dz) (a = Im f, b = Re f) depending on the conjugate flag.
struct HarmonicForm {
    Differential holo_z;   // coefficient in the z chart
    Differential holo_w;   // coefficient in the w = 1/z chart
    bool conjugate_flag = false;
    std::string label;

    HarmonicForm() = default;
    HarmonicForm(Differential holo, bool conj, std::string lbl)
        : holo_z(std::move(holo)), conjugate_flag(conj), label(std::move(lbl)) {
        holo_w = holo_z.chart_transform();
    }

    const Differential& in_chart(bool w_chart) const { return w_chart ? holo_w : holo_z; }

    Complex coefficient(const ChartPoint& p) const { return in_chart(p.w_chart).coeff.eval(p.coord); }

    // (a, b) with the real form written a du + b dv in p's chart
    Eigen::Vector2d components(const ChartPoint& p) const {
        const Complex f = coefficient(p);
        if (conjugate_flag) return {f.imag(), f.real()};
        return {f.real(), -f.imag()};
    }
};

// ---------------------------------------------------------------------------
// Construction.

// End forms: for punctures p_1, ..., p_r the r-1 differentials with residue
// +1 at p_1 and -1 at p_j (j >= 2), together with their conjugate partners:
// 2r-2 real harmonic 1-forms in total.
inline std::vector<HarmonicForm> build_end_forms(const WeierstrassData& data) {
    const auto punctures = data.all_punctures();
    const int r = int(punctures.size());
    if (r < 2) throw TooFewEnds("end forms require at least two punctures");
    if (data.genus != 0) throw DegenerateInput("end forms are implemented for genus zero only");
    std::vector<HarmonicForm> out;
    // ChartPoint::infinity() is stored as w = 0; detect it through the chart
    auto is_infinite = [](const ChartPoint& p) { return p.w_chart && p.coord == Complex(0.0); };
    const ChartPoint& p1 = punctures[0];
    for (int j = 1; j < r; ++j) {
        const ChartPoint& pj = punctures[j];
        RationalMap f;
        if (is_infinite(pj)) {
            // dz/(z - p1): residue +1 at p1, -1 at infinity
            f = RationalMap({Complex(1.0)}, {-p1.z_value(), Complex(1.0)});
        } else if (is_infinite(p1)) {
            // -dz/(z - pj): residue +1 at infinity, -1 at pj
            f = RationalMap({Complex(-1.0)}, {-pj.z_value(), Complex(1.0)});
        } else {
            // dz/(z - p1) - dz/(z - pj) = (p1 - pj) / ((z - p1)(z - pj))
            const Complex a = p1.z_value(), b = pj.z_value();
            f = RationalMap({a - b}, {a * b, -(a + b), Complex(1.0)});
        }
        const std::string tag = "end-1" + std::to_string(j + 1);
        out.emplace_back(Differential(f), false, tag + "-re");
        out.emplace_back(Differential(f), true, tag + "-im");
    }
    return out;
}

// dx_k = Re(phi_k), so its conjugate differential *dx_k = Im(phi_k).
inline HarmonicForm star_dx(const WeierstrassData& data, int k) {
    if (k < 1 || k > 3) throw DegenerateInput("coordinate index must be 1, 2 or 3");
    return HarmonicForm(data.phi[k - 1], true, "star-dx" + std::to_string(k));
}

inline HarmonicForm coordinate_dx(const WeierstrassData& data, int k) {
    if (k < 1 || k > 3) throw DegenerateInput("coordinate index must be 1, 2 or 3");
    return HarmonicForm(data.phi[k - 1], false, "dx" + std::to_string(k));
}

// ---------------------------------------------------------------------------
// Discrete closedness: circulation of the real form around each chart
// triangle (zero for closed forms away from poles).

template <typename Mesh>
inline double closedness_residual(const HarmonicForm& form, const Mesh& mesh) {
    double worst = 0.0;
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        bool w = false;
        const auto c = mesh.triangle_coords(int(t), &w);
        const auto& coeff = form.in_chart(w).coeff;
        // skip triangles that touch a pole of the coefficient
        bool near_pole = false;
        double scale = 0.0;
        for (const auto& pole : coeff.poles())
            for (int e = 0; e < 3; ++e)
                if (meromorphic::point_segment_distance(pole.value, c[e], c[(e + 1) % 3]) <
                    0.35 * std::abs(c[(e + 1) % 3] - c[e]))
                    near_pole = true;
        if (near_pole) continue;
        Complex loop(0.0);
        try {
            for (int e = 0; e < 3; ++e) {
                meromorphic::PathSpec seg;
                seg.waypoints = {c[e], c[(e + 1) % 3]};
                seg.pole_clearance = 0.0;
                const Complex val = meromorphic::path_integral(form.in_chart(w), seg);
                loop += val;
                scale += std::abs(val);
            }
        } catch (const PoleProximity&) {
            continue;
        }
        const double circ = form.conjugate_flag ? std::abs(loop.imag()) : std::abs(loop.real());
        worst = std::max(worst, circ / (1.0 + scale));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Weighted norms over truncations.

struct WeightedNormScan {
    double delta = 0.0;
    std::vector<double> radii;
    std::vector<double> truncated_norms;
    double fitted_growth_exponent = 0.0;  // slope of log(norm) vs log(R), last decade
    double fit_r2 = 0.0;

    std::vector<double> local_slopes() const {
        std::vector<double> s;
        for (size_t i = 0; i + 1 < radii.size(); ++i)
            s.push_back((std::log(truncated_norms[i + 1]) - std::log(truncated_norms[i])) /
                        (std::log(radii[i + 1]) - std::log(radii[i])));
        return s;
    }
};

namespace detail {

// Linear interpolation of the immersion X inside a chart triangle.
inline Vec3 interp_x(const mesh::TruncatedMesh& m, int t, const std::array<Complex, 3>& c,
                     Complex q) {
    const auto& tri = m.triangles[t];
    const double det = (c[1] - c[0]).real() * (c[2] - c[0]).imag() -
                       (c[1] - c[0]).imag() * (c[2] - c[0]).real();
    const double l1 =
        ((c[1] - q).real() * (c[2] - q).imag() - (c[1] - q).imag() * (c[2] - q).real()) / det;
    const double l2 =
        ((c[2] - q).real() * (c[0] - q).imag() - (c[2] - q).imag() * (c[0] - q).real()) / det;
    return l1 * m.vertices[tri[0]].X + l2 * m.vertices[tri[1]].X +
           (1.0 - l1 - l2) * m.vertices[tri[2]].X;
}

// Edge-midpoint quadrature of a density that also needs the interpolated X.
template <typename F>
inline double integrate_with_x(const mesh::TruncatedMesh& m, F&& density) {
    double total = 0.0;
    for (size_t t = 0; t < m.triangles.size(); ++t) {
        bool w = false;
        const auto c = m.triangle_coords(int(t), &w);
        const double area = 0.5 * std::abs((c[1] - c[0]).real() * (c[2] - c[0]).imag() -
                                           (c[1] - c[0]).imag() * (c[2] - c[0]).real());
        double mean = 0.0;
        for (int e = 0; e < 3; ++e) {
            const Complex mid = 0.5 * (c[e] + c[(e + 1) % 3]);
            mean += density(ChartPoint{mid, w}, interp_x(m, int(t), c, mid));
        }
        total += area * mean / 3.0;
    }
    return total;
}

}  // namespace detail

// Truncated weighted L^2 norm of the form on one truncated mesh: the
// pointwise density |omega|^2 dA is conformally invariant and equals
// |f|^2 du dv in any chart; the weight is (1+|X|^2)^(-delta).
inline double truncated_weighted_norm(const HarmonicForm& form, const mesh::TruncatedMesh& m,
                                      double delta) {
    return detail::integrate_with_x(m, [&](const ChartPoint& p, const Vec3& x) {
        const double f2 = std::norm(form.coefficient(p));
        return f2 * std::pow(1.0 + x.squaredNorm(), -delta);
    });
}

// Precomputed truncations shared across scans of different forms.
inline std::vector<mesh::TruncatedMesh> make_scan_meshes(const WeierstrassData& data,
                                                         const std::vector<double>& radii,
                                                         int seed_level = 3) {
    std::vector<mesh::TruncatedMesh> out;
    for (const double r : radii) out.push_back(mesh::build_truncated_mesh(data, r, r / 16.0, seed_level));
    return out;
}

inline WeightedNormScan weighted_norm_scan(const HarmonicForm& form, double delta,
                                           const std::vector<double>& radii,
                                           const std::vector<mesh::TruncatedMesh>& meshes) {
    if (!(delta >= 0.0)) throw DegenerateInput("weight exponent must be nonnegative");
    if (radii.size() != meshes.size() || radii.size() < 2)
        throw DegenerateInput("norm scan needs matching radii and truncations");
    for (size_t i = 0; i + 1 < radii.size(); ++i)
        if (!(radii[i] < radii[i + 1])) throw DegenerateInput("scan radii must increase");
    WeightedNormScan scan;
    scan.delta = delta;
    scan.radii = radii;
    for (size_t i = 0; i < radii.size(); ++i)
        scan.truncated_norms.push_back(truncated_weighted_norm(form, meshes[i], delta));
    // fit the growth exponent over the last decade of radii
    std::vector<double> lr, ln;
    for (size_t i = 0; i < radii.size(); ++i)
        if (radii[i] >= radii.back() / 10.0) {
            lr.push_back(std::log(radii[i]));
            ln.push_back(std::log(std::max(scan.truncated_norms[i], 1e-300)));
        }
    const auto fit = linear_fit(lr, ln);
    scan.fitted_growth_exponent = fit.slope;
    scan.fit_r2 = fit.r2;
    return scan;
}

inline WeightedNormScan weighted_norm_scan(const HarmonicForm& form, const WeierstrassData& data,
                                           double delta, const std::vector<double>& radii,
                                           int seed_level = 3) {
    return weighted_norm_scan(form, delta, radii, make_scan_meshes(data, radii, seed_level));
}

inline void scan_csv(const WeightedNormScan& scan, std::ostream& os) {
    os << "R,truncated_norm,local_slope\n";
    const auto slopes = scan.local_slopes();
    char buf[160];
    for (size_t i = 0; i < scan.radii.size(); ++i) {
        const double slope = i == 0 ? 0.0 : slopes[i - 1];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", scan.radii[i],
                      scan.truncated_norms[i], slope);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// Gram matrix of forms in the truncated weighted inner product (the pairing
// density is (a1 a2 + b1 b2) du dv, conformally invariant like the norm).

inline Eigen::MatrixXd gram_matrix(const std::vector<HarmonicForm>& forms,
                                   const mesh::TruncatedMesh& m, double delta) {
    const int n = int(forms.size());
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            const double v = detail::integrate_with_x(m, [&](const ChartPoint& p, const Vec3& x) {
                const Eigen::Vector2d a = forms[i].components(p);
                const Eigen::Vector2d b = forms[j].components(p);
                return a.dot(b) * std::pow(1.0 + x.squaredNorm(), -delta);
            });
            g(i, j) = g(j, i) = v;
        }
    return g;
}

inline int gram_rank(const Eigen::MatrixXd& g, double rel_tol = 1e-8) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    const double top = std::max(es.eigenvalues().maxCoeff(), 0.0);
    int rank = 0;
    for (int i = 0; i < g.rows(); ++i)
        if (es.eigenvalues()[i] > rel_tol * top) ++rank;
    return rank;
}

// ---------------------------------------------------------------------------
// Test fields X_omega = (<omega, dx_1>, <omega, dx_2>, <omega, dx_3>).

// Pointwise value: for real 1-forms a1 du + b1 dv and a2 du + b2 dv in a
// conformal chart with metric factor lambda^2, <.,.> = (a1 a2 + b1 b2)/lambda^2.
inline Vec3 test_field_at(const HarmonicForm& form, const WeierstrassData& data,
                          const ChartPoint& p) {
    const Eigen::Vector2d a = form.components(p);
    const auto phi = weierstrass::phi_at(data, p);
    const double lam2 = std::norm(phi[0]) + std::norm(phi[1]) + std::norm(phi[2]);
    Vec3 out;
    for (int k = 0; k < 3; ++k) {
        // dx_k = Re(phi_k dz): components (Re phi_k, -Im phi_k)
        out[k] = (a[0] * phi[k].real() - a[1] * phi[k].imag()) / lam2;
    }
    return out;
}

template <typename Mesh>
inline std::vector<Vec3> test_field(const HarmonicForm& form, const WeierstrassData& data,
                                    const Mesh& mesh) {
    std::vector<Vec3> out;
    out.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) out.push_back(test_field_at(form, data, v.chart));
    return out;
}

// Pointwise norm of the form in the surface metric (|omega|^2 = (a^2+b^2)/lambda^2).
inline double form_norm_at(const HarmonicForm& form, const WeierstrassData& data,
                           const ChartPoint& p) {
    const Eigen::Vector2d a = form.components(p);
    return std::sqrt(a.squaredNorm() / weierstrass::metric_factor(data, p));
}

// ---------------------------------------------------------------------------
// Covariant derivative of the form and the Bochner-identity residual.

namespace detail {

// 2 Re sum_i phi_i' conj(phi_i) and -2 Im ..., the chart derivatives of lambda^2.
inline Eigen::Vector2d grad_lambda2(const WeierstrassData& data, const ChartPoint& p,
                                    const std::array<RationalMap, 3>& dphi) {
    Complex s(0.0);
    const auto phi = weierstrass::phi_at(data, p);
    for (int i = 0; i < 3; ++i) s += dphi[i].eval(p.coord) * std::conj(phi[i]);
    return {2.0 * s.real(), -2.0 * s.imag()};
}

}  // namespace detail

// The contraction <grad omega, h> in the conformal chart: (grad omega)_ij are
// the covariant derivatives (exact component derivatives plus conformal
// Christoffel terms), h is the second fundamental form Re(psi dz^2), and the
// metric contraction carries lambda^{-4}.
inline double nabla_omega_dot_sff(const HarmonicForm& form, const WeierstrassData& data,
                                  const ChartPoint& p) {
    const bool w = p.w_chart;
    const Complex z = p.coord;
    const Complex f = form.in_chart(w).coeff.eval(z);
    const Complex fp = form.in_chart(w).coeff.derivative().eval(z);
    // components and exact partials of the real form a du + b dv
    double a, b, au, av, bu, bv;
    if (form.conjugate_flag) {
        a = f.imag();
        b = f.real();
        au = fp.imag();
        av = fp.real();   // d/dv Im f = Re f'
        bu = fp.real();
        bv = -fp.imag();  // d/dv Re f = -Im f'
    } else {
        a = f.real();
        b = -f.imag();
        au = fp.real();
        av = -fp.imag();
        bu = -fp.imag();
        bv = -fp.real();
    }
    std::array<RationalMap, 3> dphi;
    const auto& phi = w ? data.phi_w : data.phi;
    for (int i = 0; i < 3; ++i) dphi[i] = phi[i].coeff.derivative();
    const double lam2 = weierstrass::metric_factor(data, p);
    const Eigen::Vector2d dl2 = detail::grad_lambda2(data, p, dphi);
    const double pu = 0.5 * dl2[0] / lam2;  // d/du log(lambda)
    const double pv = 0.5 * dl2[1] / lam2;
    // covariant derivative in a conformal chart:
    // (grad omega)_uu = au - (pu a - pv b), (grad omega)_uv = av - (pv a + pu b)
    // (grad omega)_vu = bu - (pv a + pu b), (grad omega)_vv = bv + (pu a - pv b)
    const double guu = au - (pu * a - pv * b);
    const double guv = av - (pv * a + pu * b);
    const double gvu = bu - (pv * a + pu * b);
    const double gvv = bv + (pu * a - pv * b);
    // second fundamental form h = Re(psi dz^2) with the orientation matching
    // the Gauss-map normal: h_uu = -Re psi, h_vv = Re psi, h_uv = Im psi
    const Complex psi = weierstrass::sff_coefficient(data, p);
    const double huu = -psi.real(), hvv = psi.real(), huv = psi.imag();
    return (guu * huu + gvv * hvv + (guv + gvu) * huv) / (lam2 * lam2);
}

struct BochnerResidual {
    double max_residual = 0.0;
    double rms_residual = 0.0;
    int sampled = 0;
    int skipped = 0;
};

// Checks Delta X_omega - 2 kappa X_omega = 2 <grad omega, h> N at interior
// vertices, with the Laplacian discretized by a 5-point finite-difference
// stencil in the vertex's chart (step tied to the local mesh scale, so the
// residual is pure discretization error and shrinks under refinement).
inline BochnerResidual bochner_residual(const HarmonicForm& form, const WeierstrassData& data,
                                        const mesh::TruncatedMesh& mesh, double step_factor = 0.5) {
    // local chart scale: shortest incident edge per vertex
    std::vector<double> local(mesh.vertices.size(), 1e300);
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        bool w = false;
        const auto c = mesh.triangle_coords(int(t), &w);
        for (int e = 0; e < 3; ++e) {
            const double l = std::abs(c[(e + 1) % 3] - c[e]);
            const int i = mesh.triangles[t][e], j = mesh.triangles[t][(e + 1) % 3];
            // record only if the chart matches the vertex's own chart
            if (mesh.vertices[i].chart.w_chart == w) local[i] = std::min(local[i], l);
            if (mesh.vertices[j].chart.w_chart == w) local[j] = std::min(local[j], l);
        }
    }
    BochnerResidual out;
    double sq = 0.0;
    for (size_t vi = 0; vi < mesh.vertices.size(); ++vi) {
        const auto& v = mesh.vertices[vi];
        if (v.boundary || !(local[vi] < 1e300)) continue;
        const double h = step_factor * local[vi];
        try {
            const bool w = v.chart.w_chart;
            auto field = [&](Complex q) { return test_field_at(form, data, ChartPoint{q, w}); };
            const Vec3 xc = field(v.chart.coord);
            const Vec3 lap_flat = (field(v.chart.coord + h) + field(v.chart.coord - h) +
                                   field(v.chart.coord + Complex(0.0, h)) +
                                   field(v.chart.coord - Complex(0.0, h)) - 4.0 * xc) /
                                  (h * h);
            const double lam2 = weierstrass::metric_factor(data, v.chart);
            const double kappa = weierstrass::gauss_curvature(data, v.chart);
            const Vec3 n = weierstrass::normal(data, v.chart);
            const double coupling = nabla_omega_dot_sff(form, data, v.chart);
            const Vec3 res = lap_flat / lam2 - 2.0 * kappa * xc - 2.0 * coupling * n;
            const double r = res.norm();
            out.max_residual = std::max(out.max_residual, r);
            sq += r * r;
            ++out.sampled;
        } catch (const PoleProximity&) {
            ++out.skipped;
        }
    }
    if (out.sampled > 0) out.rms_residual = std::sqrt(sq / out.sampled);
    return out;
}

// Truncated gradient energy of the form: |grad omega|^2 dA = lambda^{-2}
// sum_ij (grad omega)_ij^2 du dv in the chart.
// An optional radius cap windows the integral to {|X| < cap} on the same
// mesh, so tail differences between radii are free of re-meshing noise.
inline double gradient_energy(const HarmonicForm& form, const WeierstrassData& data,
                              const mesh::TruncatedMesh& mesh, double radius_cap = -1.0) {
    return detail::integrate_with_x(mesh, [&](const ChartPoint& p, const Vec3& x) {
        if (radius_cap > 0.0 && x.norm() >= radius_cap) return 0.0;
        const bool w = p.w_chart;
        const Complex z = p.coord;
        const Complex f = form.in_chart(w).coeff.eval(z);
        const Complex fp = form.in_chart(w).coeff.derivative().eval(z);
        double a, b, au, av, bu, bv;
        if (form.conjugate_flag) {
            a = f.imag(); b = f.real();
            au = fp.imag(); av = fp.real();
            bu = fp.real(); bv = -fp.imag();
        } else {
            a = f.real(); b = -f.imag();
            au = fp.real(); av = -fp.imag();
            bu = -fp.imag(); bv = -fp.real();
        }
        std::array<RationalMap, 3> dphi;
        const auto& phi = w ? data.phi_w : data.phi;
        for (int i = 0; i < 3; ++i) dphi[i] = phi[i].coeff.derivative();
        const double lam2 = weierstrass::metric_factor(data, p);
        const Eigen::Vector2d dl2 = detail::grad_lambda2(data, p, dphi);
        const double pu = 0.5 * dl2[0] / lam2, pv = 0.5 * dl2[1] / lam2;
        const double guu = au - (pu * a - pv * b);
        const double guv = av - (pv * a + pu * b);
        const double gvu = bu - (pv * a + pu * b);
        const double gvv = bv + (pu * a - pv * b);
        return (guu * guu + guv * guv + gvu * gvu + gvv * gvv) / lam2;
    });
}

// ---------------------------------------------------------------------------
// Logarithmic cutoff: phi_R = s(|X|/R) with the unique quintic s that is 1 on
// [0,1], 0 on [2,infinity) and C^2 at the junctions.

inline double cutoff(double xnorm, double R) {
    const double t = xnorm / R;
    if (t <= 1.0) return 1.0;
    if (t >= 2.0) return 0.0;
    const double s = t - 1.0;
    return 1.0 - (10.0 * s * s * s - 15.0 * s * s * s * s + 6.0 * s * s * s * s * s);
}

inline double cutoff_derivative(double xnorm, double R) {
    const double t = xnorm / R;
    if (t <= 1.0 || t >= 2.0) return 0.0;
    const double s = t - 1.0;
    return -(30.0 * s * s - 60.0 * s * s * s + 30.0 * s * s * s * s) / R;
}

inline std::vector<double> cutoff_phi(const mesh::TruncatedMesh& mesh, double R) {
    if (!(2.0 * R <= mesh.truncation_radius * (1.0 + 1e-9)))
        throw DegenerateInput("cutoff support 2R must fit inside the truncation");
    std::vector<double> out;
    out.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) out.push_back(cutoff(v.X.norm(), R));
    return out;
}

// |grad phi_R| at a point: |s'(|X|/R)| * |grad |X|| with
// |grad |X||^2 = sum_km x_k x_m <grad x_k, grad x_m> / |X|^2.
inline double cutoff_gradient_norm(const WeierstrassData& data, const ChartPoint& p, const Vec3& x,
                                   double R) {
    const double d = cutoff_derivative(x.norm(), R);
    if (d == 0.0) return 0.0;
    const auto phi = weierstrass::phi_at(data, p);
    const double lam2 = std::norm(phi[0]) + std::norm(phi[1]) + std::norm(phi[2]);
    Eigen::Matrix3d pairing;
    for (int k = 0; k < 3; ++k)
        for (int m = 0; m < 3; ++m)
            pairing(k, m) = (phi[k].real() * phi[m].real() + phi[k].imag() * phi[m].imag()) / lam2;
    const double g2 = x.dot(pairing * x) / x.squaredNorm();
    return std::abs(d) * std::sqrt(std::max(g2, 0.0));
}

}  // namespace minlab::forms
