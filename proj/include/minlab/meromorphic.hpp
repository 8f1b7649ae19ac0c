#pragma once

// Rational-map arithmetic over the complex numbers with root finding,
// residues and adaptive contour integration.  Everything here is exact at
// the coefficient level except where a tolerance is stated.

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "minlab/errors.hpp"

namespace minlab::meromorphic {

using Complex = std::complex<double>;
using Poly = std::vector<Complex>;  // coefficients, ascending degree

constexpr double kCoeffTol = 1e-10;      // reduced-form / trim tolerance
constexpr double kRootClusterTol = 1e-6; // multiplicity clustering
constexpr double kPoleEps = 1e-9;        // eval pole guard (relative)

inline double poly_scale(const Poly& p) {
    double s = 0.0;
    for (const auto& c : p) s = std::max(s, std::abs(c));
    return s;
}

inline Poly trimmed(Poly p, double rel_tol = kCoeffTol) {
    const double s = poly_scale(p);
    const double tol = s * rel_tol;
    while (p.size() > 1 && std::abs(p.back()) <= tol) p.pop_back();
    if (p.empty()) p.push_back(Complex(0.0));
    if (p.size() == 1 && std::abs(p[0]) <= tol) p[0] = Complex(0.0);
    return p;
}

inline bool poly_is_zero(const Poly& p) {
    for (const auto& c : p)
        if (c != Complex(0.0)) return false;
    return true;
}

inline int degree(const Poly& p) { return static_cast<int>(trimmed(p).size()) - 1; }

inline Complex poly_eval(const Poly& p, Complex z) {
    Complex acc(0.0);
    for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * z + *it;
    return acc;
}

// Horner with absolute coefficients: bounds the rounding-noise scale of
// poly_eval at the same argument.
inline double poly_eval_abs(const Poly& p, double r) {
    double acc = 0.0;
    for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * r + std::abs(*it);
    return acc;
}

inline Poly poly_add(const Poly& a, const Poly& b) {
    Poly r(std::max(a.size(), b.size()), Complex(0.0));
    for (size_t i = 0; i < a.size(); ++i) r[i] += a[i];
    for (size_t i = 0; i < b.size(); ++i) r[i] += b[i];
    return trimmed(r);
}

inline Poly poly_sub(const Poly& a, const Poly& b) {
    Poly r(std::max(a.size(), b.size()), Complex(0.0));
    for (size_t i = 0; i < a.size(); ++i) r[i] += a[i];
    for (size_t i = 0; i < b.size(); ++i) r[i] -= b[i];
    return trimmed(r);
}

inline Poly poly_mul(const Poly& a, const Poly& b) {
    Poly r(a.size() + b.size() - 1, Complex(0.0));
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return trimmed(r);
}

inline Poly poly_scale_by(const Poly& a, Complex c) {
    Poly r = a;
    for (auto& x : r) x *= c;
    return r;
}

inline Poly poly_derivative(const Poly& p) {
    if (p.size() <= 1) return {Complex(0.0)};
    Poly r(p.size() - 1);
    for (size_t i = 1; i < p.size(); ++i) r[i - 1] = p[i] * double(i);
    return trimmed(r);
}

// Euclidean division a = q*b + r, deg r < deg b.
inline std::pair<Poly, Poly> poly_divmod(const Poly& a_in, const Poly& b_in) {
    Poly a = trimmed(a_in), b = trimmed(b_in);
    if (poly_is_zero(b)) throw DegenerateInput("poly_divmod: division by zero polynomial");
    const int da = static_cast<int>(a.size()) - 1;
    const int db = static_cast<int>(b.size()) - 1;
    if (da < db) return {Poly{Complex(0.0)}, a};
    Poly q(da - db + 1, Complex(0.0));
    Poly r = a;
    const Complex lead = b.back();
    for (int k = da - db; k >= 0; --k) {
        Complex c = r[k + db] / lead;
        q[k] = c;
        for (int j = 0; j <= db; ++j) r[k + j] -= c * b[j];
    }
    r.resize(std::max(db, 1));
    return {trimmed(q), trimmed(r)};
}

inline Poly poly_monic(const Poly& p_in) {
    Poly p = trimmed(p_in);
    if (poly_is_zero(p)) return p;
    const Complex lead = p.back();
    for (auto& c : p) c /= lead;
    return p;
}

// Monic gcd by the Euclidean algorithm with a relative zero tolerance.
inline Poly poly_gcd(const Poly& a_in, const Poly& b_in, double tol = kCoeffTol) {
    Poly a = poly_monic(a_in), b = poly_monic(b_in);
    if (poly_is_zero(a)) return b;
    if (poly_is_zero(b)) return a;
    while (true) {
        if (degree(b) == 0) return Poly{Complex(1.0)};
        Poly r = poly_divmod(a, b).second;
        if (poly_scale(r) <= tol || poly_is_zero(r)) return poly_monic(b);
        a = std::move(b);
        b = poly_monic(trimmed(r, tol));
    }
}

// --------------------------------------------------------------------------
// Root finding: companion-matrix eigenvalues, one Newton polish step, then
// multiplicity detection by clustering.

struct Root {
    Complex value;
    int multiplicity;
};

inline std::vector<Complex> roots_raw(const Poly& p_in) {
    Poly p = trimmed(p_in);
    if (poly_is_zero(p)) throw DegenerateInput("roots: zero polynomial");
    const int n = static_cast<int>(p.size()) - 1;
    if (n < 1) throw DegenerateInput("roots: degree must be >= 1");
    Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
    for (int i = 0; i < n; ++i) companion(i, n - 1) = -p[i] / p[n];
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(companion, false);
    if (es.info() != Eigen::Success) throw NonConvergent("roots: eigensolver failed");
    const Poly dp = poly_derivative(p);
    std::vector<Complex> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        Complex z = es.eigenvalues()(i);
        const Complex d = poly_eval(dp, z);
        if (std::abs(d) > 1e-14 * poly_scale(dp)) z -= poly_eval(p, z) / d;
        out.push_back(z);
    }
    return out;
}

inline std::vector<Root> roots(const Poly& p_in, double cluster_tol = kRootClusterTol) {
    std::vector<Complex> raw = roots_raw(p_in);
    std::sort(raw.begin(), raw.end(), [](Complex a, Complex b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    std::vector<Root> out;
    std::vector<bool> used(raw.size(), false);
    for (size_t i = 0; i < raw.size(); ++i) {
        if (used[i]) continue;
        Complex sum = raw[i];
        int count = 1;
        used[i] = true;
        const double tol = cluster_tol * std::max(1.0, std::abs(raw[i]));
        for (size_t j = i + 1; j < raw.size(); ++j) {
            if (!used[j] && std::abs(raw[j] - raw[i]) <= tol) {
                sum += raw[j];
                ++count;
                used[j] = true;
            }
        }
        out.push_back({sum / double(count), count});
    }
    return out;
}

// --------------------------------------------------------------------------
// RationalMap: reduced quotient of complex polynomials.

class RationalMap {
  public:
    RationalMap() : num_{Complex(0.0)}, den_{Complex(1.0)} {}
    RationalMap(Poly num, Poly den) : num_(std::move(num)), den_(std::move(den)) { reduce(); }

    static RationalMap constant(Complex c) { return RationalMap({c}, {Complex(1.0)}); }
    static RationalMap identity() { return RationalMap({Complex(0.0), Complex(1.0)}, {Complex(1.0)}); }

    const Poly& num() const { return num_; }
    const Poly& den() const { return den_; }

    bool is_zero() const { return poly_is_zero(num_); }
    bool is_constant() const { return degree(num_) <= 0 && degree(den_) == 0; }
    int map_degree() const { return std::max(degree(num_), degree(den_)); }

    Complex eval(Complex z) const {
        // For very large |z| evaluate through the reversed coefficients.
        if (std::abs(z) > 1e8) {
            const Complex w = 1.0 / z;
            return at_inverse().eval(w);
        }
        // Relative proximity guard: approaching a pole at the origin is
        // cancellation-free in Horner form, so only |z - p| small relative
        // to |p| (catastrophic cancellation) is rejected up front.
        for (const Complex& p : pole_values_)
            if (std::abs(z - p) <= kPoleEps * std::abs(p))
                throw PoleProximity("RationalMap::eval: z too close to a pole");
        const Complex d = poly_eval(den_, z);
        if (d == Complex(0.0)) throw PoleProximity("RationalMap::eval: denominator vanished");
        const Complex v = poly_eval(num_, z) / d;
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw PoleProximity("RationalMap::eval: value overflowed near a pole");
        return v;
    }

    // Value together with an absolute rounding-noise estimate: near roots of
    // the denominator the cancellation makes the value unreliable at this
    // scale, which adaptive quadrature must not try to resolve.
    Complex eval_with_noise(Complex z, double* noise) const {
        const Complex v = eval(z);
        const double r = std::abs(z);
        const double eps = 2.2e-16;
        const double dn = std::abs(poly_eval(den_, z));
        *noise = eps * (poly_eval_abs(num_, r) + std::abs(v) * poly_eval_abs(den_, r)) / dn;
        return v;
    }

    // f(1/w) as a rational map of w.
    RationalMap at_inverse() const {
        const int n = std::max(degree(num_), degree(den_));
        Poly nn(n + 1, Complex(0.0)), dd(n + 1, Complex(0.0));
        for (int i = 0; i <= degree(num_); ++i) nn[n - i] = num_[i];
        for (int i = 0; i <= degree(den_); ++i) dd[n - i] = den_[i];
        return RationalMap(std::move(nn), std::move(dd));
    }

    RationalMap derivative() const {
        Poly n = poly_sub(poly_mul(poly_derivative(num_), den_), poly_mul(num_, poly_derivative(den_)));
        return RationalMap(std::move(n), poly_mul(den_, den_));
    }

    RationalMap reciprocal() const {
        if (is_zero()) throw DegenerateInput("RationalMap: reciprocal of zero map");
        return RationalMap(den_, num_);
    }

    std::vector<Root> poles() const {
        if (degree(den_) < 1) return {};
        return roots(den_);
    }

    std::vector<Root> zeros() const {
        if (degree(num_) < 1) return {};
        return roots(num_);
    }

    friend RationalMap operator+(const RationalMap& a, const RationalMap& b) {
        return RationalMap(poly_add(poly_mul(a.num_, b.den_), poly_mul(b.num_, a.den_)),
                           poly_mul(a.den_, b.den_));
    }
    friend RationalMap operator-(const RationalMap& a, const RationalMap& b) {
        return RationalMap(poly_sub(poly_mul(a.num_, b.den_), poly_mul(b.num_, a.den_)),
                           poly_mul(a.den_, b.den_));
    }
    friend RationalMap operator*(const RationalMap& a, const RationalMap& b) {
        return RationalMap(poly_mul(a.num_, b.num_), poly_mul(a.den_, b.den_));
    }
    friend RationalMap operator/(const RationalMap& a, const RationalMap& b) {
        if (b.is_zero()) throw DegenerateInput("RationalMap: division by zero map");
        return RationalMap(poly_mul(a.num_, b.den_), poly_mul(a.den_, b.num_));
    }
    friend RationalMap operator*(Complex c, const RationalMap& a) {
        return RationalMap(poly_scale_by(a.num_, c), a.den_);
    }
    friend RationalMap operator-(const RationalMap& a) { return Complex(-1.0) * a; }

  private:
    void reduce() {
        num_ = trimmed(num_);
        den_ = trimmed(den_);
        if (poly_is_zero(den_)) throw DegenerateInput("RationalMap: zero denominator");
        if (poly_is_zero(num_)) {
            num_ = {Complex(0.0)};
            den_ = {Complex(1.0)};
            return;
        }
        Poly g = poly_gcd(num_, den_);
        if (degree(g) >= 1) {
            num_ = poly_divmod(num_, g).first;
            den_ = poly_divmod(den_, g).first;
        }
        // Deterministic representative: monic denominator.
        const Complex lead = den_.back();
        for (auto& c : num_) c /= lead;
        for (auto& c : den_) c /= lead;
        pole_values_.clear();
        if (degree(den_) >= 1)
            for (const Complex& r : roots_raw(den_)) pole_values_.push_back(r);
    }

    Poly num_, den_;
    std::vector<Complex> pole_values_;
};

// --------------------------------------------------------------------------
// Differential: coefficient(z) dz in the z chart.  The w = 1/z chart
// coefficient is coefficient(1/w) * (-1/w^2), formed exactly.

struct Differential {
    RationalMap coeff;

    Differential() = default;
    explicit Differential(RationalMap c) : coeff(std::move(c)) {}

    Differential chart_transform() const {
        RationalMap inv = coeff.at_inverse();
        RationalMap minus_w2_inv({Complex(-1.0)}, {Complex(0.0), Complex(0.0), Complex(1.0)});
        return Differential(inv * minus_w2_inv);
    }
};

struct PathSpec {
    std::vector<Complex> waypoints;
    double pole_clearance = 1e-3;
};

inline double point_segment_distance(Complex p, Complex a, Complex b) {
    const Complex ab = b - a;
    const double len2 = std::norm(ab);
    if (len2 == 0.0) return std::abs(p - a);
    double t = ((p - a).real() * ab.real() + (p - a).imag() * ab.imag()) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return std::abs(p - (a + t * ab));
}

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
inline constexpr double kGK15Nodes[15] = {
    -0.991455371120813, -0.949107912342759, -0.864864423359769, -0.741531185599394,
    -0.586087235467691, -0.405845151377397, -0.207784955007898, 0.0,
    0.207784955007898,  0.405845151377397,  0.586087235467691,  0.741531185599394,
    0.864864423359769,  0.949107912342759,  0.991455371120813};
inline constexpr double kGK15Weights[15] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250, 0.140653259715525,
    0.169004726639267, 0.190350578064785, 0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529};
inline constexpr double kG7Weights[7] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119, 0.417959183673469,
    0.381830050505119, 0.279705391489277, 0.129484966168870};

struct SegmentEstimate {
    Complex value;
    double error;
    double l1;     // integral of |f|
    double noise;  // integral of the pointwise rounding-noise scale of f
};

// f(z, &noise) returns the value and writes an absolute noise estimate.
template <class F>
SegmentEstimate gk15_segment(const F& f, Complex a, Complex b) {
    const Complex mid = 0.5 * (a + b);
    const Complex half = 0.5 * (b - a);
    Complex k(0.0), g(0.0);
    double l1 = 0.0, noise = 0.0;
    for (int i = 0; i < 15; ++i) {
        double nz = 0.0;
        const Complex v = f(mid + half * kGK15Nodes[i], &nz);
        k += kGK15Weights[i] * v;
        l1 += kGK15Weights[i] * std::abs(v);
        noise += kGK15Weights[i] * nz;
        if (i % 2 == 1) g += kG7Weights[i / 2] * v;
    }
    k *= half;
    g *= half;
    l1 *= std::abs(half);
    noise *= std::abs(half);
    return {k, std::abs(k - g), l1, noise};
}

template <class F>
Complex adaptive_segment(const F& f, Complex a, Complex b, double tol, int depth) {
    auto [val, err, l1, noise] = gk15_segment(f, a, b);
    // Error estimates below the integrand's own rounding noise cannot be
    // improved by subdivision; accept them.
    if (err <= tol || err <= 1e-12 * l1 + 8.0 * noise || std::abs(b - a) < 1e-14) return val;
    if (depth <= 0) throw NonConvergent("path_integral: adaptive subdivision depth exhausted");
    const Complex mid = 0.5 * (a + b);
    return adaptive_segment(f, a, mid, 0.5 * tol, depth - 1) +
           adaptive_segment(f, mid, b, 0.5 * tol, depth - 1);
}

}  // namespace detail

inline Complex path_integral(const Differential& omega, const PathSpec& path,
                             double abs_tol = 1e-11, int max_depth = 40) {
    if (path.waypoints.size() < 2) return Complex(0.0);
    const auto poles = omega.coeff.poles();
    for (size_t i = 0; i + 1 < path.waypoints.size(); ++i) {
        for (const auto& p : poles) {
            if (point_segment_distance(p.value, path.waypoints[i], path.waypoints[i + 1]) <
                path.pole_clearance)
                throw PoleProximity("path_integral: path violates pole clearance");
        }
    }
    auto f = [&](Complex z, double* noise) { return omega.coeff.eval_with_noise(z, noise); };
    Complex total(0.0);
    const double seg_tol = abs_tol / double(path.waypoints.size() - 1);
    for (size_t i = 0; i + 1 < path.waypoints.size(); ++i)
        total += detail::adaptive_segment(f, path.waypoints[i], path.waypoints[i + 1], seg_tol, max_depth);
    return total;
}

// Route a straight segment around poles by perpendicular detours.
inline std::vector<Complex> route_segment(Complex a, Complex b, const std::vector<Complex>& poles,
                                          double clearance) {
    struct Detour {
        double t;
        Complex point;
    };
    std::vector<Detour> detours;
    const Complex ab = b - a;
    const double len2 = std::norm(ab);
    if (len2 == 0.0) return {a, b};
    for (const Complex& p : poles) {
        double t = ((p - a).real() * ab.real() + (p - a).imag() * ab.imag()) / len2;
        if (t <= 0.0 || t >= 1.0) {
            if (std::abs(p - a) < clearance || std::abs(p - b) < clearance) continue;  // endpoint guard elsewhere
            continue;
        }
        const Complex foot = a + t * ab;
        const double d = std::abs(p - foot);
        if (d >= clearance * 1.5) continue;
        Complex dir;
        if (d > 1e-14) {
            dir = (foot - p) / d;
        } else {
            dir = ab / std::sqrt(len2) * Complex(0.0, 1.0);  // perpendicular, fixed side
        }
        detours.push_back({t, p + dir * (2.0 * clearance)});
    }
    std::sort(detours.begin(), detours.end(), [](const Detour& x, const Detour& y) { return x.t < y.t; });
    std::vector<Complex> out;
    out.push_back(a);
    for (const auto& d : detours) out.push_back(d.point);
    out.push_back(b);
    return out;
}

inline PathSpec make_path(Complex a, Complex b, const std::vector<Complex>& poles,
                          double clearance = 1e-3) {
    PathSpec p;
    p.pole_clearance = clearance;
    p.waypoints = route_segment(a, b, poles, clearance);
    return p;
}

// Residue by contour quadrature on a circle of adaptive radius.
inline Complex residue(const Differential& omega, Complex p) {
    const auto poles = omega.coeff.poles();
    double dist_self = 1e300, dist_other = 1e300;
    for (const auto& q : poles) {
        const double d = std::abs(q.value - p);
        if (d < dist_self) {
            dist_other = std::min(dist_other, dist_self);
            dist_self = d;
        } else {
            dist_other = std::min(dist_other, d);
        }
    }
    if (dist_self > kRootClusterTol * std::max(1.0, std::abs(p)))
        throw NotAPole("residue: point is not a pole of the differential");
    double radius = 0.5 * std::min(dist_other, 1.0);
    radius = std::max(radius, 1e-6);
    // Trapezoid rule on the circle: spectrally accurate for the Laurent tail.
    Complex prev(0.0);
    for (int n = 64; n <= 1 << 16; n *= 2) {
        Complex acc(0.0);
        for (int k = 0; k < n; ++k) {
            const double th = 2.0 * M_PI * k / n;
            const Complex z = p + radius * Complex(std::cos(th), std::sin(th));
            acc += omega.coeff.eval(z) * (z - p);
        }
        acc /= double(n);
        if (n > 64 && std::abs(acc - prev) <= 1e-12 * (1.0 + std::abs(acc))) return acc;
        prev = acc;
    }
    return prev;
}

// Residue at infinity: res_inf(omega) = residue at w=0 of the w-chart coefficient.
inline Complex residue_at_infinity(const Differential& omega) {
    Differential w = omega.chart_transform();
    // w=0 may or may not be a pole; a regular point has residue 0.
    try {
        return residue(w, Complex(0.0));
    } catch (const NotAPole&) {
        return Complex(0.0);
    }
}

// Pole order of a differential at p (0 if regular), from the reduced form.
inline int pole_order(const Differential& omega, Complex p) {
    int order = 0;
    for (const auto& q : omega.coeff.poles())
        if (std::abs(q.value - p) <= kRootClusterTol * std::max(1.0, std::abs(p)))
            order += q.multiplicity;
    return order;
}

inline int pole_order_at_infinity(const Differential& omega) {
    return pole_order(omega.chart_transform(), Complex(0.0));
}

}  // namespace minlab::meromorphic
