#pragma once

// Rayleigh-Ritz index certificates on truncated surfaces, theorem-level
// inequality checks, and the exhaustive index-2 exclusion table.
//
// The certificate evaluates the stability form Q on explicit test fields:
// cutoff-multiplied harmonic-form fields phi_R * X_omega together with
// cutoff-multiplied coordinate multiples of the computed negative weighted
// eigenfunctions.  Negative directions of the vector-valued pencil (Q, Gram)
// bound the index of the componentwise Jacobi operator, which is three copies
// of the scalar one, so the certified scalar lower bound is ceil(raw / 3).

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "minlab/errors.hpp"
#include "minlab/forms.hpp"
#include "minlab/gallery.hpp"
#include "minlab/mesh.hpp"
#include "minlab/spectral.hpp"
#include "minlab/weierstrass.hpp"

namespace minlab::certify {

using meromorphic::Complex;
using weierstrass::ChartPoint;
using weierstrass::Vec3;
using weierstrass::WeierstrassData;

// ---------------------------------------------------------------------------
// The quadratic form Q(u, v) = int <grad u, grad v> + 2 kappa u v dA sampled
// through the same finite-element matrices as the truncated Jacobi assembly,
// kept unrestricted (all vertices) so arbitrary sampled fields can be paired.

using ScalarField = std::vector<double>;
using VectorField = std::vector<Vec3>;

struct QForm {
    spectral::SparseMat q_matrix;  // cotan stiffness + curvature potential
    spectral::SparseMat mass;      // conformal-factor mass (plain L^2 pairing)
    double truncation_radius = 0.0;

    QForm(const mesh::TruncatedMesh& mesh, const WeierstrassData& data,
          spectral::MassRule rule = spectral::MassRule::ThreePoint) {
        const int n = int(mesh.vertices.size());
        auto lam2 = [&](const ChartPoint& p) {
            return spectral::detail::eval_density(
                [&](const ChartPoint& q) { return weierstrass::metric_factor(data, q); }, p);
        };
        auto pot = [&](const ChartPoint& p) {
            return spectral::detail::eval_density(
                [&](const ChartPoint& q) {
                    return -2.0 * weierstrass::fubini_study_density(data, q);
                },
                p);
        };
        auto terms = spectral::detail::assemble_all(mesh, lam2, pot, true, rule);
        q_matrix = spectral::detail::from_triplets(n, terms.stiffness) +
                   spectral::detail::from_triplets(n, terms.potential);
        mass = spectral::detail::from_triplets(n, terms.mass);
        truncation_radius = mesh.truncation_radius;
    }

    int vertex_count() const { return int(q_matrix.rows()); }
};

namespace detail {

inline Eigen::VectorXd to_vec(const ScalarField& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.data(), long(f.size()));
}

inline Eigen::VectorXd component(const VectorField& f, int k) {
    Eigen::VectorXd out(long(f.size()));
    for (size_t i = 0; i < f.size(); ++i) out[long(i)] = f[i][k];
    return out;
}

inline void check_sizes(const QForm& q, size_t a, size_t b) {
    if (int(a) != q.vertex_count() || int(b) != q.vertex_count())
        throw MeshMismatch("field sample count does not match the mesh vertex count");
}

}  // namespace detail

inline double q_form(const QForm& q, const ScalarField& f, const ScalarField& g) {
    detail::check_sizes(q, f.size(), g.size());
    return detail::to_vec(f).dot(q.q_matrix * detail::to_vec(g));
}

inline double q_form(const QForm& q, const VectorField& f, const VectorField& g) {
    detail::check_sizes(q, f.size(), g.size());
    double s = 0.0;
    for (int k = 0; k < 3; ++k)
        s += detail::component(f, k).dot(q.q_matrix * detail::component(g, k));
    return s;
}

inline double l2_pair(const QForm& q, const ScalarField& f, const ScalarField& g) {
    detail::check_sizes(q, f.size(), g.size());
    return detail::to_vec(f).dot(q.mass * detail::to_vec(g));
}

inline double l2_pair(const QForm& q, const VectorField& f, const VectorField& g) {
    detail::check_sizes(q, f.size(), g.size());
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += detail::component(f, k).dot(q.mass * detail::component(g, k));
    return s;
}

// ---------------------------------------------------------------------------
// Index certificates.

struct IndexCertificate {
    std::vector<std::string> test_space_labels;  // fields kept in the final basis
    std::vector<std::string> dropped_labels;     // removed as Gram-dependent
    Eigen::MatrixXd q_matrix;                    // Q(F_i, F_j) on the kept basis
    Eigen::MatrixXd gram_matrix;                 // L^2 Gram on the kept basis
    int pencil_negative_count = 0;   // raw negatives of the vector pencil
    int negative_count = 0;          // certified scalar bound: ceil(raw / 3)
    int projected_form_negatives = 0;  // form fields projected off the eigenfields
    int weighted_modes_used = 0;
    double truncation_radius = 0.0;  // cutoff radius R; mesh extends to 2R

    std::string trace() const {
        std::ostringstream os;
        os << "index certificate at cutoff radius R = " << truncation_radius << "\n";
        os << "test space (" << test_space_labels.size() << " fields):\n";
        for (const auto& l : test_space_labels) os << "  " << l << "\n";
        if (!dropped_labels.empty()) {
            os << "dropped as Gram-dependent:\n";
            for (const auto& l : dropped_labels) os << "  " << l << "\n";
        }
        os << "vector pencil negatives: " << pencil_negative_count << "\n";
        os << "certified index lower bound: " << negative_count << "\n";
        os << "form-only negatives after projection: " << projected_form_negatives << "\n";
        return os.str();
    }
};

namespace detail {

inline int pencil_negatives(const Eigen::MatrixXd& q, const Eigen::MatrixXd& g) {
    if (q.rows() == 0) return 0;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(q, g);
    if (es.info() != Eigen::Success)
        throw FactorizationFailure("dense pencil eigensolve failed in certificate");
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    int c = 0;
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        if (es.eigenvalues()[i] < -1e-9 * scale) ++c;
    return c;
}

}  // namespace detail

// Assemble the certificate from an already-built mesh whose truncation radius
// covers the cutoff support [R, 2R].
inline IndexCertificate certificate(const WeierstrassData& data, const mesh::TruncatedMesh& mesh,
                                    double cutoff_radius, double delta = 0.25) {
    const QForm qf(mesh, data);
    const std::vector<double> phi = forms::cutoff_phi(mesh, cutoff_radius);
    const size_t n = mesh.vertices.size();

    std::vector<VectorField> fields;
    std::vector<std::string> labels;
    int form_count = 0;

    // Harmonic-form test fields phi_R * X_omega.
    std::vector<forms::HarmonicForm> basis;
    if (data.end_count() >= 2) basis = forms::build_end_forms(data);
    for (int k = 1; k <= 3; ++k) basis.push_back(forms::star_dx(data, k));
    for (const auto& form : basis) {
        VectorField f(n, Vec3::Zero());
        for (size_t v = 0; v < n; ++v)
            if (phi[v] != 0.0)
                f[v] = phi[v] * forms::test_field_at(form, data, mesh.vertices[v].chart);
        fields.push_back(std::move(f));
        labels.push_back("cutoff*X[" + form.label + "]");
        ++form_count;
    }

    // Coordinate multiples of the computed negative weighted eigenfunctions.
    int modes = 0;
    if (!data.is_flat()) {
        const auto prob = spectral::assemble_weighted(mesh, data, delta);
        modes = spectral::negative_count(prob);
        if (modes > 0) {
            const auto res = spectral::solve_lowest(prob, modes);
            for (int i = 0; i < modes; ++i) {
                ScalarField ef(n, 0.0);
                for (size_t d = 0; d < prob.dof_to_vertex.size(); ++d)
                    ef[prob.dof_to_vertex[d]] = res.eigenvectors[i][long(d)];
                for (int j = 0; j < 3; ++j) {
                    VectorField f(n, Vec3::Zero());
                    for (size_t v = 0; v < n; ++v) f[v][j] = phi[v] * ef[v];
                    fields.push_back(std::move(f));
                    labels.push_back("cutoff*e" + std::to_string(j + 1) + "*f" +
                                     std::to_string(i + 1));
                }
            }
        }
    }

    // Full pairing matrices, built symmetric by construction.
    const int m = int(fields.size());
    Eigen::MatrixXd q(m, m), g(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) {
            q(i, j) = q(j, i) = q_form(qf, fields[i], fields[j]);
            g(i, j) = g(j, i) = l2_pair(qf, fields[i], fields[j]);
        }

    // Normalize and greedily drop fields that make the Gram rank-deficient.
    IndexCertificate cert;
    cert.truncation_radius = cutoff_radius;
    cert.weighted_modes_used = modes;
    std::vector<int> kept;
    std::vector<double> scale(m, 0.0);
    for (int i = 0; i < m; ++i) {
        if (!(g(i, i) > 0.0)) {
            cert.dropped_labels.push_back(labels[i]);
            continue;
        }
        scale[i] = 1.0 / std::sqrt(g(i, i));
        std::vector<int> trial = kept;
        trial.push_back(i);
        Eigen::MatrixXd gs(int(trial.size()), int(trial.size()));
        for (size_t a = 0; a < trial.size(); ++a)
            for (size_t b = 0; b < trial.size(); ++b)
                gs(int(a), int(b)) = g(trial[a], trial[b]) * scale[trial[a]] * scale[trial[b]];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gs);
        if (es.eigenvalues()[0] > 1e-10)
            kept = std::move(trial);
        else
            cert.dropped_labels.push_back(labels[i]);
    }

    const int nk = int(kept.size());
    cert.q_matrix.resize(nk, nk);
    cert.gram_matrix.resize(nk, nk);
    for (int a = 0; a < nk; ++a) {
        cert.test_space_labels.push_back(labels[kept[a]]);
        for (int b = 0; b < nk; ++b) {
            cert.q_matrix(a, b) = q(kept[a], kept[b]) * scale[kept[a]] * scale[kept[b]];
            cert.gram_matrix(a, b) = g(kept[a], kept[b]) * scale[kept[a]] * scale[kept[b]];
        }
    }

    cert.pencil_negative_count = detail::pencil_negatives(cert.q_matrix, cert.gram_matrix);
    cert.negative_count = (cert.pencil_negative_count + 2) / 3;

    // Report the form block projected L^2-orthogonally off the eigenfields:
    // the finite-radius stand-in for constraining the forms to W-perp.
    std::vector<int> fidx, eidx;
    for (int a = 0; a < nk; ++a)
        (kept[a] < form_count ? fidx : eidx).push_back(a);
    if (!fidx.empty()) {
        auto sub = [&](const Eigen::MatrixXd& src, const std::vector<int>& r,
                       const std::vector<int>& c) {
            Eigen::MatrixXd out(int(r.size()), int(c.size()));
            for (size_t a = 0; a < r.size(); ++a)
                for (size_t b = 0; b < c.size(); ++b) out(int(a), int(b)) = src(r[a], c[b]);
            return out;
        };
        Eigen::MatrixXd qp = sub(cert.q_matrix, fidx, fidx);
        Eigen::MatrixXd gp = sub(cert.gram_matrix, fidx, fidx);
        if (!eidx.empty()) {
            const Eigen::MatrixXd gee = sub(cert.gram_matrix, eidx, eidx);
            const Eigen::MatrixXd gef = sub(cert.gram_matrix, eidx, fidx);
            const Eigen::MatrixXd qee = sub(cert.q_matrix, eidx, eidx);
            const Eigen::MatrixXd qef = sub(cert.q_matrix, eidx, fidx);
            const Eigen::MatrixXd c = gee.ldlt().solve(gef);  // projection coefficients
            qp = qp - qef.transpose() * c - c.transpose() * qef + c.transpose() * qee * c;
            gp = gp - gef.transpose() * c;
        }
        cert.projected_form_negatives = detail::pencil_negatives(qp, gp);
    }
    return cert;
}

// Convenience overload: builds the supporting mesh out to 2R.
inline IndexCertificate certificate(const WeierstrassData& data, double cutoff_radius,
                                    double delta = 0.25, double target_h = -1.0) {
    const double mesh_r = 2.0 * cutoff_radius;
    if (target_h <= 0.0) target_h = mesh_r / 16.0;
    const auto mesh = mesh::build_truncated_mesh(data, mesh_r, target_h, 3);
    return certificate(data, mesh, cutoff_radius, delta);
}

// ---------------------------------------------------------------------------
// Theorem-level checks.

// Branching values of the Gauss map as unit sphere points: images of the
// critical points in both charts, plus infinity for multiple poles.
inline std::vector<Vec3> gauss_branch_values(const WeierstrassData& data) {
    std::vector<Vec3> out;
    if (data.gauss.map_degree() <= 0) return out;
    auto add_chart = [&](const meromorphic::RationalMap& g) {
        const auto dg = g.derivative();
        for (const auto& root : dg.zeros()) {
            try {
                out.push_back(weierstrass::stereographic(g.eval(root.value)));
            } catch (const PoleProximity&) {
                out.push_back(Vec3(0.0, 0.0, 1.0));  // value at a multiple pole
            }
        }
        for (const auto& pole : g.poles())
            if (pole.multiplicity >= 2) out.push_back(Vec3(0.0, 0.0, 1.0));
    };
    add_chart(data.gauss);
    add_chart(data.gauss_w);
    return out;
}

// True when the branching values all lie on one great circle (rank <= 2 of
// the stacked unit vectors); vacuously true when there are none.
inline bool branch_values_on_equator(const WeierstrassData& data) {
    const auto vals = gauss_branch_values(data);
    if (vals.size() < 3) return true;
    Eigen::MatrixXd pts(int(vals.size()), 3);
    for (size_t i = 0; i < vals.size(); ++i) pts.row(long(i)) = vals[i].transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(pts);
    return svd.singularValues()[2] < 1e-8;
}

struct TheoremReport {
    std::string surface;
    int genus = 0;
    int ends = 0;
    int gauss_degree = 0;
    double total_curvature_t = 0.0;  // T = -(1/4pi) * integral of kappa
    int index = 0;
    bool embedded = false;
    bool embedded_ends = false;

    double floor_bound = 0.0;  // (2/3)(g + r) - 1
    bool pass_floor = false;
    int ends_bound = 0;  // r - 1, for embedded surfaces
    bool ends_applicable = false;
    bool pass_ends = false;
    double sandwich_lower = 0.0, sandwich_upper = 0.0;  // -1/3 + (2/3)T and 7.7*T
    bool sandwich_applicable = false;
    bool pass_sandwich = false;
    int equator_index = 0;  // 2d - 1 when the equator rule applies
    bool equator_applicable = false;
    bool pass_equator = false;

    bool all_pass() const {
        return pass_floor && (!ends_applicable || pass_ends) &&
               (!sandwich_applicable || pass_sandwich) && (!equator_applicable || pass_equator);
    }

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"surface", surface},
            {"genus", genus},
            {"ends", ends},
            {"gauss_degree", gauss_degree},
            {"total_curvature_t", total_curvature_t},
            {"index", index},
            {"embedded", embedded},
            {"embedded_ends", embedded_ends},
            {"floor",
             {{"bound", floor_bound}, {"pass", pass_floor}}},
            {"embedded_ends_floor",
             {{"bound", ends_bound}, {"applicable", ends_applicable}, {"pass", pass_ends}}},
            {"curvature_sandwich",
             {{"lower", sandwich_lower},
              {"upper", sandwich_upper},
              {"applicable", sandwich_applicable},
              {"pass", pass_sandwich}}},
            {"equator_rule",
             {{"index", equator_index},
              {"applicable", equator_applicable},
              {"pass", pass_equator}}},
            {"all_pass", all_pass()}};
    }
};

inline TheoremReport theorem_checks(const gallery::GalleryEntry& entry,
                                    const WeierstrassData& data, int index,
                                    double total_curvature_t) {
    TheoremReport rep;
    rep.surface = entry.name;
    rep.genus = entry.genus;
    rep.ends = entry.ends;
    rep.gauss_degree = entry.gauss_degree;
    rep.total_curvature_t = total_curvature_t;
    rep.index = index;
    rep.embedded = entry.embedded;
    rep.embedded_ends = entry.embedded_ends;

    const bool nonflat = !data.is_flat();
    rep.floor_bound = nonflat ? (2.0 / 3.0) * (entry.genus + entry.ends) - 1.0 : 0.0;
    rep.pass_floor = double(index) >= rep.floor_bound - 1e-9;

    rep.ends_applicable = entry.embedded;
    rep.ends_bound = entry.ends - 1;
    rep.pass_ends = index >= rep.ends_bound;

    rep.sandwich_applicable = entry.embedded_ends && nonflat;
    rep.sandwich_lower = -1.0 / 3.0 + (2.0 / 3.0) * total_curvature_t;
    rep.sandwich_upper = 7.7 * total_curvature_t;
    rep.pass_sandwich = double(index) >= rep.sandwich_lower - 1e-9 &&
                        double(index) <= rep.sandwich_upper + 1e-9;

    rep.equator_applicable = nonflat && branch_values_on_equator(data);
    rep.equator_index = 2 * entry.gauss_degree - 1;
    rep.pass_equator = index == rep.equator_index;
    return rep;
}

// ---------------------------------------------------------------------------
// The exhaustive case analysis: no complete embedded finite-total-curvature
// minimal surface has index 2.

struct CaseVerdict {
    int genus = 0;
    int ends = 0;
    bool excluded = false;
    std::string reason;
    std::vector<std::string> trace;
};

inline constexpr const char* kReasonBound = "index lower bound forces g+r <= 9/2";
inline constexpr const char* kReasonPlane = "plane, which has index 0";
inline constexpr const char* kReasonCatenoid = "catenoid, which has index 1";
inline constexpr const char* kReasonLopezRos = "Lopez-Ros genus zero";
inline constexpr const char* kReasonHoffmanMeeks = "Hoffman-Meeks family index >= 3";

inline CaseVerdict index2_case_table(int genus, int ends, bool embedded, int claimed_index = 2) {
    if (genus < 0 || ends < 1) throw DegenerateInput("index2_case_table: need genus >= 0, ends >= 1");
    CaseVerdict v;
    v.genus = genus;
    v.ends = ends;
    if (!embedded || claimed_index != 2) {
        v.excluded = false;
        v.reason = "classification covers embedded surfaces of claimed index 2 only";
        return v;
    }
    v.trace.push_back("assume a complete embedded finite-total-curvature surface of index 2");
    v.trace.push_back("index >= (2/3)(g+r) - 1, so 2 >= (2/3)(g+r) - 1 and g+r <= 9/2");
    if (genus + ends > 4) {
        v.excluded = true;
        v.reason = kReasonBound;
        v.trace.push_back("g+r = " + std::to_string(genus + ends) + " > 9/2: contradiction");
        return v;
    }
    if (ends == 1) {
        v.excluded = true;
        v.reason = kReasonPlane;
        v.trace.push_back("one embedded end of finite total curvature: the surface is a plane");
        v.trace.push_back("the plane is stable (index 0), not 2: contradiction");
        return v;
    }
    if (ends == 2) {
        v.excluded = true;
        v.reason = kReasonCatenoid;
        v.trace.push_back("two embedded ends of finite total curvature: the surface is a catenoid");
        v.trace.push_back("the catenoid has index 1, not 2: contradiction");
        return v;
    }
    if (genus == 0) {
        v.excluded = true;
        v.reason = kReasonLopezRos;
        v.trace.push_back("genus zero with " + std::to_string(ends) +
                          " ends: the only embedded genus-zero examples are the plane and catenoid");
        return v;
    }
    if (genus == 1 && ends == 3) {
        v.excluded = true;
        v.reason = kReasonHoffmanMeeks;
        v.trace.push_back("(g, r) = (1, 3): the surface lies in the genus-one three-ended family,");
        v.trace.push_back("whose members have index at least 3: contradiction");
        return v;
    }
    // g + r <= 4, r >= 3, g >= 1 leaves only (1, 3), handled above.
    v.excluded = true;
    v.reason = kReasonBound;
    v.trace.push_back("no admissible surface with these invariants exists");
    return v;
}

// The twelve embedded index-2 scenarios swept by the acceptance checks.
inline std::vector<CaseVerdict> index2_full_table() {
    std::vector<CaseVerdict> out;
    for (int g = 0; g <= 2; ++g)
        for (int r = 1; r <= 4; ++r) out.push_back(index2_case_table(g, r, true, 2));
    return out;
}

}  // namespace minlab::certify
