#pragma once

// Finite-element eigenvalue problems on the compactified surface and on
// extrinsic truncations: piecewise-linear (cotangent) stiffness in chart
// coordinates, density-weighted mass matrices, shift-invert eigensolves,
// and the eigenvalue-counting rules used to report index.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "minlab/errors.hpp"
#include "minlab/mesh.hpp"
#include "minlab/weierstrass.hpp"

namespace minlab::spectral {

using meromorphic::Complex;
using weierstrass::ChartPoint;
using weierstrass::WeierstrassData;

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

enum class Boundary { Closed, Dirichlet };
enum class MassRule { ThreePoint, OnePoint };

struct SpectralProblem {
    SparseMat stiffness;               // K, symmetric positive semidefinite (plus potential)
    SparseMat mass;                    // M, symmetric positive definite
    bool includes_potential = false;   // whether K contains the curvature term
    Boundary boundary = Boundary::Closed;
    std::vector<int> dof_to_vertex;    // dof index -> mesh vertex index
    double mesh_size = 0.0;            // max chart-independent edge length proxy
    double suggested_shift = -0.5;     // shift-invert target for solve_lowest
};

struct SpectralResult {
    std::vector<double> eigenvalues;           // ascending
    std::vector<Eigen::VectorXd> eigenvectors; // M-orthonormal, dof-indexed
    std::vector<double> residuals;             // relative pencil residuals
    double mesh_size = 0.0;

    int count_below(double threshold, double tol = 0.0) const {
        int n = 0;
        for (const double l : eigenvalues)
            if (l < threshold - tol) ++n;
        return n;
    }
};

struct IndexCount {
    int index = 0;       // eigenvalues strictly below threshold - tol
    int nullity = 0;     // eigenvalues within the tol band around the threshold
    double margin = 0.0; // distance from the threshold to the nearest out-of-band eigenvalue
};

namespace detail {

inline int thread_count() {
    if (const char* env = std::getenv("MINLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

// Density evaluation with a deterministic nudge away from evaluation
// singularities (quadrature points are edge midpoints, so an exact hit on a
// pole of the underlying rational data is a measure-zero accident).
template <typename F>
inline double eval_density(F&& f, const ChartPoint& p) {
    try {
        return f(p);
    } catch (const PoleProximity&) {
        const double nudge = 1e-9 * (1.0 + std::abs(p.coord));
        return f(ChartPoint{p.coord + Complex(nudge, nudge), p.w_chart});
    }
}

// Local P1 stiffness of a flat chart triangle (the 2D Dirichlet energy is
// conformally invariant, so chart coordinates may be used on any surface
// conformal to the chart).
inline void local_stiffness(const std::array<Complex, 3>& c, double out[3][3]) {
    const double x1 = c[0].real(), y1 = c[0].imag();
    const double x2 = c[1].real(), y2 = c[1].imag();
    const double x3 = c[2].real(), y3 = c[2].imag();
    const double det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1);
    const double area = 0.5 * std::abs(det);
    if (!(area > 0.0)) throw SingularMass("degenerate chart triangle in stiffness assembly");
    const double bx[3] = {y2 - y3, y3 - y1, y1 - y2};
    const double by[3] = {x3 - x2, x1 - x3, x2 - x1};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            out[i][j] = (bx[i] * bx[j] + by[i] * by[j]) / (4.0 * area);
}

// Local mass with a chart-area density: edge-midpoint (3-point, exact for
// quadratics when the density is constant) or centroid (1-point) rule.
template <typename Density>
inline void local_mass(const std::array<Complex, 3>& c, bool w_chart, Density&& rho,
                       MassRule rule, double out[3][3]) {
    const double det = (c[1] - c[0]).real() * (c[2] - c[0]).imag() -
                       (c[1] - c[0]).imag() * (c[2] - c[0]).real();
    const double area = 0.5 * std::abs(det);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out[i][j] = 0.0;
    if (rule == MassRule::OnePoint) {
        const Complex cen = (c[0] + c[1] + c[2]) / 3.0;
        const double r = rho(ChartPoint{cen, w_chart});
        const double w = area * r / 9.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) out[i][j] += w;
    } else {
        for (int e = 0; e < 3; ++e) {
            const int a = e, b = (e + 1) % 3;
            const Complex mid = 0.5 * (c[a] + c[b]);
            const double r = rho(ChartPoint{mid, w_chart});
            const double w = area * r / 3.0;  // basis values are 1/2, 1/2, 0
            out[a][a] += w * 0.25;
            out[b][b] += w * 0.25;
            out[a][b] += w * 0.25;
            out[b][a] += w * 0.25;
        }
    }
}

struct AssemblyTerms {
    std::vector<Triplet> stiffness;
    std::vector<Triplet> mass;
    std::vector<Triplet> potential;
    double min_potential_ratio = 0.0;  // min over quad points of (potential density)/(mass density)
};

// Per-triangle assembly over [begin, end); the caller concatenates chunk
// results in chunk order, so the final triplet stream is deterministic.
template <typename Mesh, typename MassDensity, typename PotDensity>
inline AssemblyTerms assemble_range(const Mesh& mesh, size_t begin, size_t end,
                                    MassDensity&& mass_rho, PotDensity&& pot_rho,
                                    bool with_potential, MassRule rule) {
    AssemblyTerms out;
    double klocal[3][3], mlocal[3][3], plocal[3][3];
    for (size_t t = begin; t < end; ++t) {
        bool w = false;
        const auto c = mesh.triangle_coords(int(t), &w);
        local_stiffness(c, klocal);
        local_mass(c, w, mass_rho, rule, mlocal);
        double mdiag = 0.0;
        for (int i = 0; i < 3; ++i) mdiag += mlocal[i][i];
        if (!(mdiag > 0.0))
            throw SingularMass("nonpositive element mass; the mesh is too coarse here");
        if (with_potential) {
            local_mass(c, w, pot_rho, rule, plocal);
            for (int e = 0; e < 3; ++e) {
                const Complex mid = 0.5 * (c[e] + c[(e + 1) % 3]);
                const double mr = eval_density(mass_rho, ChartPoint{mid, w});
                const double pr = eval_density(pot_rho, ChartPoint{mid, w});
                if (mr > 0.0)
                    out.min_potential_ratio = std::min(out.min_potential_ratio, pr / mr);
            }
        }
        const auto& tri = mesh.triangles[t];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                out.stiffness.emplace_back(tri[i], tri[j], klocal[i][j]);
                out.mass.emplace_back(tri[i], tri[j], mlocal[i][j]);
                if (with_potential) out.potential.emplace_back(tri[i], tri[j], plocal[i][j]);
            }
    }
    return out;
}

template <typename Mesh, typename MassDensity, typename PotDensity>
inline AssemblyTerms assemble_all(const Mesh& mesh, MassDensity&& mass_rho, PotDensity&& pot_rho,
                                  bool with_potential, MassRule rule) {
    const size_t nt = mesh.triangles.size();
    const int nthreads = std::min<int>(thread_count(), std::max<size_t>(nt / 64, 1));
    if (nthreads <= 1)
        return assemble_range(mesh, 0, nt, mass_rho, pot_rho, with_potential, rule);
    std::vector<AssemblyTerms> chunks(nthreads);
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(nthreads);
    for (int k = 0; k < nthreads; ++k) {
        const size_t lo = nt * k / nthreads, hi = nt * (k + 1) / nthreads;
        workers.emplace_back([&, k, lo, hi] {
            try {
                chunks[k] = assemble_range(mesh, lo, hi, mass_rho, pot_rho, with_potential, rule);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    AssemblyTerms out;
    for (auto& ch : chunks) {
        out.stiffness.insert(out.stiffness.end(), ch.stiffness.begin(), ch.stiffness.end());
        out.mass.insert(out.mass.end(), ch.mass.begin(), ch.mass.end());
        out.potential.insert(out.potential.end(), ch.potential.begin(), ch.potential.end());
        out.min_potential_ratio = std::min(out.min_potential_ratio, ch.min_potential_ratio);
    }
    return out;
}

inline SparseMat from_triplets(int n, const std::vector<Triplet>& t) {
    SparseMat m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

// Restrict a matrix to a dof subset (Dirichlet elimination by deletion).
inline SparseMat restrict_to(const SparseMat& a, const std::vector<int>& dof_of_vertex, int ndof) {
    std::vector<Triplet> t;
    t.reserve(a.nonZeros());
    for (int k = 0; k < a.outerSize(); ++k)
        for (SparseMat::InnerIterator it(a, k); it; ++it) {
            const int i = dof_of_vertex[it.row()], j = dof_of_vertex[it.col()];
            if (i >= 0 && j >= 0) t.emplace_back(i, j, it.value());
        }
    return from_triplets(ndof, t);
}

inline double max_chart_edge(const mesh::SphereMesh& m) {
    double h = 0.0;
    for (size_t t = 0; t < m.triangles.size(); ++t) {
        const auto& tri = m.triangles[t];
        for (int e = 0; e < 3; ++e)
            h = std::max(h, (m.vertices[tri[e]].sphere - m.vertices[tri[(e + 1) % 3]].sphere).norm());
    }
    return h;
}

inline double max_chart_edge(const mesh::TruncatedMesh& m) {
    double h = 0.0;
    for (size_t t = 0; t < m.triangles.size(); ++t) {
        bool w = false;
        const auto c = m.triangle_coords(int(t), &w);
        for (int e = 0; e < 3; ++e) h = std::max(h, std::abs(c[e] - c[(e + 1) % 3]));
    }
    return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Assembly of the three eigenvalue problems.

// Laplacian of the metric pulled back from the round sphere by the Gauss map
// (density 4|g'|^2/(1+|g|^2)^2 relative to the flat chart), on the closed
// compactified surface.  Index of the minimal surface = #{eigenvalues < 2}.
inline SpectralProblem assemble_gauss_metric(const mesh::SphereMesh& mesh,
                                             const WeierstrassData& data,
                                             MassRule rule = MassRule::ThreePoint) {
    const int n = int(mesh.vertices.size());
    auto rho = [&](const ChartPoint& p) {
        return detail::eval_density(
            [&](const ChartPoint& q) { return weierstrass::fubini_study_density(data, q); }, p);
    };
    auto terms = detail::assemble_all(mesh, rho, rho, false, rule);
    SpectralProblem prob;
    prob.stiffness = detail::from_triplets(n, terms.stiffness);
    prob.mass = detail::from_triplets(n, terms.mass);
    prob.includes_potential = false;
    prob.boundary = Boundary::Closed;
    prob.dof_to_vertex.resize(n);
    for (int i = 0; i < n; ++i) prob.dof_to_vertex[i] = i;
    prob.mesh_size = detail::max_chart_edge(mesh);
    prob.suggested_shift = -0.5;
    for (int i = 0; i < n; ++i)
        if (!(prob.mass.coeff(i, i) > 0.0))
            throw SingularMass("mass matrix has a nonpositive diagonal entry");
    return prob;
}

// Jacobi operator L = -Delta + 2*kappa on a truncation {|X| < R} with
// Dirichlet boundary conditions.  In the conformal chart, the potential
// density is 2*kappa*lambda^2 = -2*rho_hat and the mass density is lambda^2.
inline SpectralProblem assemble_jacobi_truncated(const mesh::TruncatedMesh& mesh,
                                                 const WeierstrassData& data,
                                                 MassRule rule = MassRule::ThreePoint) {
    const int n = int(mesh.vertices.size());
    auto lam2 = [&](const ChartPoint& p) {
        return detail::eval_density(
            [&](const ChartPoint& q) { return weierstrass::metric_factor(data, q); }, p);
    };
    auto pot = [&](const ChartPoint& p) {
        return detail::eval_density(
            [&](const ChartPoint& q) { return -2.0 * weierstrass::fubini_study_density(data, q); },
            p);
    };
    auto terms = detail::assemble_all(mesh, lam2, pot, true, rule);
    SparseMat k_full = detail::from_triplets(n, terms.stiffness);
    const SparseMat p_full = detail::from_triplets(n, terms.potential);
    k_full = k_full + p_full;
    const SparseMat m_full = detail::from_triplets(n, terms.mass);

    SpectralProblem prob;
    prob.boundary = Boundary::Dirichlet;
    prob.includes_potential = true;
    std::vector<int> dof_of_vertex(n, -1);
    int ndof = 0;
    for (int i = 0; i < n; ++i)
        if (!mesh.vertices[i].boundary) dof_of_vertex[i] = ndof++;
    prob.dof_to_vertex.resize(ndof);
    for (int i = 0; i < n; ++i)
        if (dof_of_vertex[i] >= 0) prob.dof_to_vertex[dof_of_vertex[i]] = i;
    prob.stiffness = detail::restrict_to(k_full, dof_of_vertex, ndof);
    prob.mass = detail::restrict_to(m_full, dof_of_vertex, ndof);
    prob.mesh_size = detail::max_chart_edge(mesh);
    // Shift below the potential lower bound so K - sigma*M stays positive
    // definite and the shift-inverted spectrum is one-sided.
    prob.suggested_shift = std::min(-0.5, 1.1 * terms.min_potential_ratio);
    for (int i = 0; i < ndof; ++i)
        if (!(prob.mass.coeff(i, i) > 0.0))
            throw SingularMass("mass matrix has a nonpositive diagonal entry");
    return prob;
}

// Weighted problem: same Jacobi stiffness, mass density lambda^2 * (1+|X|^2)^(-delta).
// |X| is interpolated linearly from the mesh immersion values.
inline SpectralProblem assemble_weighted(const mesh::TruncatedMesh& mesh,
                                         const WeierstrassData& data, double delta,
                                         MassRule rule = MassRule::ThreePoint) {
    if (!(delta > 0.0 && delta < 1.0))
        throw DegenerateInput("weighted problem requires delta in (0,1)");
    SpectralProblem prob = assemble_jacobi_truncated(mesh, data, rule);
    // Rebuild the mass with the weighted density, using per-triangle linear
    // interpolation of X in the triangle's own chart.
    const int n = int(mesh.vertices.size());
    std::vector<Triplet> wmass;
    double mlocal[3][3];
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        bool w = false;
        const auto c = mesh.triangle_coords(int(t), &w);
        const auto& tri = mesh.triangles[t];
        auto interp_x = [&](Complex q) {
            // barycentric coordinates of q in the chart triangle
            const double det = (c[1] - c[0]).real() * (c[2] - c[0]).imag() -
                               (c[1] - c[0]).imag() * (c[2] - c[0]).real();
            const double l1 = ((c[1] - q).real() * (c[2] - q).imag() -
                               (c[1] - q).imag() * (c[2] - q).real()) / det;
            const double l2 = ((c[2] - q).real() * (c[0] - q).imag() -
                               (c[2] - q).imag() * (c[0] - q).real()) / det;
            const double l3 = 1.0 - l1 - l2;
            return l1 * mesh.vertices[tri[0]].X + l2 * mesh.vertices[tri[1]].X +
                   l3 * mesh.vertices[tri[2]].X;
        };
        auto rho = [&](const ChartPoint& p) {
            const double lam2 = detail::eval_density(
                [&](const ChartPoint& q) { return weierstrass::metric_factor(data, q); }, p);
            const double x2 = interp_x(p.coord).squaredNorm();
            return lam2 * std::pow(1.0 + x2, -delta);
        };
        detail::local_mass(c, w, rho, rule, mlocal);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) wmass.emplace_back(tri[i], tri[j], mlocal[i][j]);
    }
    std::vector<int> dof_of_vertex(n, -1);
    for (size_t d = 0; d < prob.dof_to_vertex.size(); ++d) dof_of_vertex[prob.dof_to_vertex[d]] = int(d);
    const SparseMat m_full = detail::from_triplets(n, wmass);
    prob.mass = detail::restrict_to(m_full, dof_of_vertex, int(prob.dof_to_vertex.size()));
    // The weight is bounded below by (1+R^2)^(-delta) on the truncation, so
    // the shifted pencil stays definite after rescaling the bound.
    const double wmin = std::pow(1.0 + mesh.truncation_radius * mesh.truncation_radius, -delta);
    prob.suggested_shift = prob.suggested_shift / wmin;
    for (int i = 0; i < int(prob.dof_to_vertex.size()); ++i)
        if (!(prob.mass.coeff(i, i) > 0.0))
            throw SingularMass("weighted mass matrix has a nonpositive diagonal entry");
    return prob;
}

// ---------------------------------------------------------------------------
// Eigensolvers.

struct SolveOptions {
    std::optional<double> shift;     // defaults to problem.suggested_shift
    bool force_sparse = false;       // skip the dense fallback (testing)
    int dense_cutoff = 3000;         // use a dense solve below this dimension
    int max_subspace = 0;            // 0 = automatic
    double residual_tol = 1e-8;
};

namespace detail {

inline SpectralResult finalize(const SpectralProblem& prob, std::vector<double> vals,
                               std::vector<Eigen::VectorXd> vecs, double residual_tol) {
    // Sort ascending, M-normalize, and record relative pencil residuals.
    std::vector<size_t> order(vals.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return vals[a] < vals[b]; });
    SpectralResult res;
    res.mesh_size = prob.mesh_size;
    const double knorm = prob.stiffness.coeffs().abs().maxCoeff();
    const double mnorm = prob.mass.coeffs().abs().maxCoeff();
    for (const size_t i : order) {
        Eigen::VectorXd v = vecs[i];
        const double mn = std::sqrt(v.dot(prob.mass * v));
        if (!(mn > 0.0)) throw NonConvergent("eigenvector has zero mass norm");
        v /= mn;
        const double lambda = v.dot(prob.stiffness * v);  // Rayleigh quotient, M-normalized
        const Eigen::VectorXd r = prob.stiffness * v - lambda * (prob.mass * v);
        const double rel = r.norm() / ((knorm + std::abs(lambda) * mnorm) * v.norm());
        if (!(rel <= residual_tol))
            throw NonConvergent("eigenpair residual " + std::to_string(rel) +
                                " exceeds the tolerance");
        res.eigenvalues.push_back(lambda);
        res.eigenvectors.push_back(std::move(v));
        res.residuals.push_back(rel);
    }
    return res;
}

// Shift-invert Lanczos with full reorthogonalization in the M-inner product.
// Assumes sigma is below the smallest pencil eigenvalue, so the operator
// (K - sigma M)^{-1} M is positive definite and its largest eigenvalues
// correspond to the smallest pencil eigenvalues.
inline SpectralResult solve_sparse(const SpectralProblem& prob, int m, double sigma,
                                   const SolveOptions& opts) {
    const int n = int(prob.stiffness.rows());
    SparseMat shifted = prob.stiffness - sigma * prob.mass;
    shifted.makeCompressed();
    Eigen::SparseLU<SparseMat> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success)
        throw FactorizationFailure("sparse factorization of the shifted pencil failed");

    const int ncv_max =
        std::min(n, opts.max_subspace > 0 ? opts.max_subspace : std::max(16 * m + 200, 400));
    std::vector<Eigen::VectorXd> basis;   // M-orthonormal Lanczos vectors
    std::vector<Eigen::VectorXd> mbasis;  // M * basis (cached for reorthogonalization)
    std::vector<double> alpha, beta;

    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) v[i] = std::cos(0.7 * i + 0.3) + 1.0;  // deterministic start
    Eigen::VectorXd mv = prob.mass * v;
    v /= std::sqrt(v.dot(mv));
    basis.push_back(v);
    mbasis.push_back(prob.mass * v);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    bool converged = false;
    bool exhausted = false;
    int checkpoint = std::min(ncv_max, std::max(2 * m + 30, 60));
    for (int j = 0; j < ncv_max && !exhausted; ++j) {
        Eigen::VectorXd w = lu.solve(mbasis[j]);
        if (!w.allFinite())
            throw FactorizationFailure("shift-invert solve produced non-finite values");
        const double a = w.dot(mbasis[j]);
        alpha.push_back(a);
        // full reorthogonalization (twice) against the M-orthonormal basis
        for (int pass = 0; pass < 2; ++pass)
            for (size_t k = 0; k < basis.size(); ++k) w -= w.dot(mbasis[k]) * basis[k];
        const double b = std::sqrt(std::max(w.dot(prob.mass * w), 0.0));
        beta.push_back(b);
        if (b < 1e-13) exhausted = true;  // the subspace is invariant; all Ritz pairs exact
        const int k = int(alpha.size());
        if (k >= checkpoint || k == ncv_max || exhausted) {
            // Checkpoint: Ritz residuals in the transformed problem are
            // |beta_k * (last component of the tridiagonal eigenvector)|.
            Eigen::MatrixXd trid = Eigen::MatrixXd::Zero(k, k);
            for (int i = 0; i < k; ++i) {
                trid(i, i) = alpha[i];
                if (i + 1 < k) trid(i, i + 1) = trid(i + 1, i) = beta[i];
            }
            es.compute(trid);
            if (es.info() != Eigen::Success) throw NonConvergent("tridiagonal eigensolve failed");
            if (k >= m) {
                converged = true;
                for (int i = 0; i < m && converged; ++i) {
                    const double theta = es.eigenvalues()[k - 1 - i];
                    const double rres = std::abs(b * es.eigenvectors()(k - 1, k - 1 - i));
                    if (!exhausted && !(rres <= 1e-11 * std::max(std::abs(theta), 1e-30)))
                        converged = false;
                }
            }
            if (converged) break;
            checkpoint = std::min(ncv_max, checkpoint + std::max(checkpoint / 2, 30));
        }
        if (exhausted || j + 1 == ncv_max) break;
        w /= b;
        basis.push_back(w);
        mbasis.push_back(prob.mass * w);
    }
    const int k = int(alpha.size());
    if (k < m || !converged)
        throw NonConvergent("Lanczos iteration did not converge the requested eigenpairs");

    // Largest theta -> smallest pencil eigenvalue lambda = sigma + 1/theta.
    std::vector<double> vals;
    std::vector<Eigen::VectorXd> vecs;
    for (int i = 0; i < m; ++i) {
        const double theta = es.eigenvalues()[k - 1 - i];
        if (!(theta > 0.0))
            throw NonConvergent("shift is not below the spectrum; shift-invert ordering broke");
        Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < k; ++j) y += es.eigenvectors()(j, k - 1 - i) * basis[j];
        vals.push_back(sigma + 1.0 / theta);
        vecs.push_back(std::move(y));
    }
    return finalize(prob, std::move(vals), std::move(vecs), opts.residual_tol);
}

inline SpectralResult solve_dense(const SpectralProblem& prob, int m, const SolveOptions& opts) {
    const Eigen::MatrixXd kd = Eigen::MatrixXd(prob.stiffness);
    const Eigen::MatrixXd md = Eigen::MatrixXd(prob.mass);
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(kd, md);
    if (es.info() != Eigen::Success)
        throw FactorizationFailure("dense generalized eigensolve failed");
    std::vector<double> vals;
    std::vector<Eigen::VectorXd> vecs;
    for (int i = 0; i < m; ++i) {
        vals.push_back(es.eigenvalues()[i]);
        vecs.push_back(es.eigenvectors().col(i));
    }
    return finalize(prob, std::move(vals), std::move(vecs), opts.residual_tol);
}

}  // namespace detail

// The m algebraically smallest eigenpairs of K u = lambda M u.
inline SpectralResult solve_lowest(const SpectralProblem& prob, int m, SolveOptions opts = {}) {
    const int n = int(prob.stiffness.rows());
    if (m < 1 || m >= n) throw DegenerateInput("requested eigenpair count out of range");
    if (n < opts.dense_cutoff && !opts.force_sparse) return detail::solve_dense(prob, m, opts);
    double sigma = opts.shift.value_or(prob.suggested_shift);
    for (int attempt = 0; attempt < 3; ++attempt) {
        try {
            return detail::solve_sparse(prob, m, sigma, opts);
        } catch (const NonConvergent&) {
            if (attempt == 2) throw;
            // retry with a larger subspace
            opts.max_subspace = std::max(opts.max_subspace, 16 * m + 200) * 2;
        }
    }
    throw NonConvergent("unreachable");
}

// ---------------------------------------------------------------------------
// Counting.

// Count eigenvalues below a threshold, excluding a symmetric tolerance band
// around it (eigenvalues in the band are reported as nullity).  `strict`
// makes an inconclusive margin an error instead of a best-effort report.
inline IndexCount index_count(const SpectralResult& result, double threshold = 2.0,
                              double tol = 0.05, bool strict = false) {
    if (result.eigenvalues.empty() || result.eigenvalues.back() < threshold)
        throw AmbiguousCount("no eigenvalue at or above the threshold was computed");
    IndexCount out;
    out.margin = 1e300;
    for (const double l : result.eigenvalues) {
        const double d = l - threshold;
        if (std::abs(d) <= tol)
            ++out.nullity;
        else {
            if (d < 0.0) ++out.index;
            out.margin = std::min(out.margin, std::abs(d) - tol);
        }
    }
    if (strict && out.margin < tol)
        throw AmbiguousCount("eigenvalue margin " + std::to_string(out.margin) +
                             " is below the tolerance band " + std::to_string(tol));
    return out;
}

// Negative-eigenvalue count for truncated Dirichlet problems.
inline int negative_count(const SpectralResult& result, double tol = 1e-9) {
    return result.count_below(0.0, tol);
}

// Count the negative pencil eigenvalues directly: negatives sit at the far
// end of the shift-inverted spectrum and converge long before the positive
// cluster near zero does, so only they need to be resolved.
inline int negative_count(const SpectralProblem& prob, SolveOptions opts = {}) {
    const int n = int(prob.stiffness.rows());
    const double sigma = opts.shift.value_or(prob.suggested_shift);
    SparseMat shifted = prob.stiffness - sigma * prob.mass;
    shifted.makeCompressed();
    Eigen::SparseLU<SparseMat> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success)
        throw FactorizationFailure("sparse factorization of the shifted pencil failed");
    const int ncv_max = std::min(n, opts.max_subspace > 0 ? opts.max_subspace : 600);
    std::vector<Eigen::VectorXd> basis, mbasis;
    std::vector<double> alpha, beta;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) v[i] = std::cos(0.7 * i + 0.3) + 1.0;
    v /= std::sqrt(v.dot(prob.mass * v));
    basis.push_back(v);
    mbasis.push_back(prob.mass * v);
    int prev_count = -1;
    for (int j = 0; j < ncv_max; ++j) {
        Eigen::VectorXd w = lu.solve(mbasis[j]);
        if (!w.allFinite())
            throw FactorizationFailure("shift-invert solve produced non-finite values");
        alpha.push_back(w.dot(mbasis[j]));
        for (int pass = 0; pass < 2; ++pass)
            for (size_t k = 0; k < basis.size(); ++k) w -= w.dot(mbasis[k]) * basis[k];
        const double b = std::sqrt(std::max(w.dot(prob.mass * w), 0.0));
        beta.push_back(b);
        const bool exhausted = b < 1e-13;
        const int k = int(alpha.size());
        if (k >= 60 && (k % 30 == 0 || exhausted || k == ncv_max)) {
            Eigen::MatrixXd trid = Eigen::MatrixXd::Zero(k, k);
            for (int i = 0; i < k; ++i) {
                trid(i, i) = alpha[i];
                if (i + 1 < k) trid(i, i + 1) = trid(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(trid);
            if (es.info() != Eigen::Success) throw NonConvergent("tridiagonal eigensolve failed");
            int count = 0;
            bool all_converged = true;
            bool saw_positive = false;
            for (int i = k - 1; i >= 0; --i) {
                const double theta = es.eigenvalues()[i];
                if (!(theta > 0.0)) break;  // ordering broke; treat as unconverged
                const double lambda = sigma + 1.0 / theta;
                if (lambda >= 0.0) {
                    saw_positive = true;
                    break;  // negatives occupy the top of the theta spectrum
                }
                const double rres = std::abs(b * es.eigenvectors()(k - 1, i));
                if (!exhausted && !(rres <= 1e-10 * theta)) all_converged = false;
                ++count;
            }
            if (all_converged && (saw_positive || exhausted) && count == prev_count) return count;
            prev_count = all_converged && (saw_positive || exhausted) ? count : -1;
        }
        if (exhausted || j + 1 == ncv_max) break;
        w /= b;
        basis.push_back(w);
        mbasis.push_back(prob.mass * w);
    }
    throw NonConvergent("negative-count iteration did not stabilize");
}

// ---------------------------------------------------------------------------
// External interfaces: coordinate-text matrix dump and CSV results.

inline void dump_matrix(const SparseMat& m, std::ostream& os) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%ld %ld %ld\n", long(m.rows()), long(m.cols()),
                  long(m.nonZeros()));
    os << buf;
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMat::InnerIterator it(m, k); it; ++it) {
            std::snprintf(buf, sizeof(buf), "%ld %ld %.17g\n", long(it.row()), long(it.col()),
                          it.value());
            os << buf;
        }
}

inline void dump_result_csv(const SpectralResult& r, std::ostream& os) {
    os << "index,eigenvalue,residual\n";
    char buf[128];
    for (size_t i = 0; i < r.eigenvalues.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i, r.eigenvalues[i], r.residuals[i]);
        os << buf;
    }
}

}  // namespace minlab::spectral
