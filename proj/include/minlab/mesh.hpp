#pragma once

// Triangulations of the compactified surface (a sphere with chart tags) and
// of extrinsic truncations {|X| < R}, with adaptive longest-edge bisection.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <queue>
#include <vector>

#include "minlab/errors.hpp"
#include "minlab/weierstrass.hpp"

namespace minlab::mesh {

using meromorphic::Complex;
using weierstrass::ChartPoint;
using weierstrass::Vec3;
using weierstrass::WeierstrassData;

using Tri = std::array<int, 3>;

// Chart tag for a point on the sphere: |z| <= 1 stays in the z chart,
// otherwise the point is stored as w = 1/z.
inline ChartPoint canonical_chart(Complex z) {
    if (std::abs(z) <= 1.0) return ChartPoint::z(z);
    return ChartPoint::w(1.0 / z);
}

inline ChartPoint chart_from_sphere(const Vec3& n) {
    if (n.z() <= 0.0) return ChartPoint::z(Complex(n.x(), n.y()) / (1.0 - n.z()));
    return ChartPoint::w(Complex(n.x(), -n.y()) / (1.0 + n.z()));
}

// Coordinate of p in a prescribed chart (infinite when p is the chart's
// antipodal origin; callers select charts so this cannot happen).
inline Complex coord_in_chart(const ChartPoint& p, bool w_chart) {
    if (p.w_chart == w_chart) return p.coord;
    return 1.0 / p.coord;
}

// Pick the chart in which a set of points has the smallest maximum modulus.
template <typename It>
inline bool common_chart_is_w(It begin, It end) {
    double mz = 0.0, mw = 0.0;
    for (It it = begin; it != end; ++it) {
        const double m = std::abs(it->coord);
        const double other = (m == 0.0) ? 1e300 : 1.0 / m;
        if (it->w_chart) {
            mw = std::max(mw, m);
            mz = std::max(mz, other);
        } else {
            mz = std::max(mz, m);
            mw = std::max(mw, other);
        }
    }
    return mw < mz;
}

// ---------------------------------------------------------------------------
// SphereMesh

struct SphereVertex {
    Vec3 sphere = Vec3::Zero();
    ChartPoint chart;
};

struct SphereMesh {
    std::vector<SphereVertex> vertices;
    std::vector<Tri> triangles;
    int refinement_level = 0;
    std::vector<int> puncture_vertices;  // one mesh vertex per puncture

    std::array<Complex, 3> triangle_coords(int t, bool* w_chart_out = nullptr) const {
        const Tri& tr = triangles[t];
        std::array<ChartPoint, 3> ps = {vertices[tr[0]].chart, vertices[tr[1]].chart,
                                        vertices[tr[2]].chart};
        const bool w = common_chart_is_w(ps.begin(), ps.end());
        if (w_chart_out) *w_chart_out = w;
        return {coord_in_chart(ps[0], w), coord_in_chart(ps[1], w), coord_in_chart(ps[2], w)};
    }
};

namespace detail {

inline void icosahedron(std::vector<Vec3>& verts, std::vector<Tri>& tris) {
    // Oriented with vertices at the two poles so that punctures at z = 0 and
    // z = infinity are mesh vertices from the start.
    verts.clear();
    tris.clear();
    verts.push_back(Vec3(0, 0, 1));
    const double zr = 1.0 / std::sqrt(5.0);
    const double rr = 2.0 / std::sqrt(5.0);
    for (int i = 0; i < 5; ++i) {
        const double a = 2 * M_PI * i / 5;
        verts.push_back(Vec3(rr * std::cos(a), rr * std::sin(a), zr));
    }
    for (int i = 0; i < 5; ++i) {
        const double a = 2 * M_PI * i / 5 + M_PI / 5;
        verts.push_back(Vec3(rr * std::cos(a), rr * std::sin(a), -zr));
    }
    verts.push_back(Vec3(0, 0, -1));
    for (int i = 0; i < 5; ++i) {
        const int j = (i + 1) % 5;
        tris.push_back({0, 1 + i, 1 + j});
        tris.push_back({1 + i, 6 + i, 1 + j});
        tris.push_back({1 + j, 6 + i, 6 + j});
        tris.push_back({6 + i, 11, 6 + j});
    }
}

inline void subdivide_sphere(std::vector<Vec3>& verts, std::vector<Tri>& tris) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const Vec3 m = (verts[a] + verts[b]).normalized();
        verts.push_back(m);
        const int idx = int(verts.size()) - 1;
        midpoint[key] = idx;
        return idx;
    };
    std::vector<Tri> next;
    next.reserve(tris.size() * 4);
    for (const Tri& t : tris) {
        const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
        next.push_back({t[0], ab, ca});
        next.push_back({t[1], bc, ab});
        next.push_back({t[2], ca, bc});
        next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
}

// Longest-edge (Rivara) bisection of a marked triangle set, keeping the mesh
// conforming.  `make_midpoint(a, b)` returns the index of the new vertex.
template <typename MidpointFn>
inline void rivara_bisect(std::vector<Tri>& tris, std::vector<char>& marked,
                          std::vector<int>& depth, int max_extra_depth, size_t vertex_cap,
                          size_t* vertex_count, const std::vector<double>* edge_len_hint,
                          MidpointFn&& make_midpoint,
                          const std::function<double(int, int)>& edge_length) {
    (void)edge_len_hint;
    // Iterate until no marked triangle remains; each pass bisects every
    // marked triangle at its longest edge and marks the neighbor sharing
    // that edge (to keep conformity) for a matching split.
    for (int pass = 0; pass < 64; ++pass) {
        std::map<std::pair<int, int>, int> split_edges;  // edge -> midpoint vertex
        bool any = false;
        for (size_t t = 0; t < tris.size(); ++t) {
            if (!marked[t] || depth[t] >= max_extra_depth) continue;
            any = true;
            int le = 0;
            double best = -1.0;
            for (int e = 0; e < 3; ++e) {
                const double l = edge_length(tris[t][e], tris[t][(e + 1) % 3]);
                if (l > best) {
                    best = l;
                    le = e;
                }
            }
            const auto key = std::minmax(tris[t][le], tris[t][(le + 1) % 3]);
            if (!split_edges.count(key)) {
                if (*vertex_count >= vertex_cap)
                    throw BudgetExceeded("mesh refinement exceeded the vertex budget");
                split_edges[key] = make_midpoint(key.first, key.second);
                ++*vertex_count;
            }
        }
        if (!any) return;
        // Rebuild the triangle list, bisecting every triangle that has at
        // least one split edge (splitting at each split edge in turn).
        std::vector<Tri> next;
        std::vector<char> next_marked;
        std::vector<int> next_depth;
        for (size_t t = 0; t < tris.size(); ++t) {
            std::vector<Tri> stack = {tris[t]};
            std::vector<int> sdepth = {depth[t]};
            std::vector<Tri> done;
            std::vector<int> ddepth;
            while (!stack.empty()) {
                Tri cur = stack.back();
                stack.pop_back();
                int cd = sdepth.back();
                sdepth.pop_back();
                int found = -1, mv = -1;
                for (int e = 0; e < 3; ++e) {
                    const auto key = std::minmax(cur[e], cur[(e + 1) % 3]);
                    auto it = split_edges.find(key);
                    if (it != split_edges.end()) {
                        found = e;
                        mv = it->second;
                        break;
                    }
                }
                if (found < 0) {
                    done.push_back(cur);
                    ddepth.push_back(cd);
                    continue;
                }
                const int a = cur[found], b = cur[(found + 1) % 3], c = cur[(found + 2) % 3];
                stack.push_back({a, mv, c});
                sdepth.push_back(cd + 1);
                stack.push_back({mv, b, c});
                sdepth.push_back(cd + 1);
            }
            for (size_t k = 0; k < done.size(); ++k) {
                next.push_back(done[k]);
                next_marked.push_back(0);
                next_depth.push_back(ddepth[k]);
            }
        }
        tris = std::move(next);
        marked = std::move(next_marked);
        depth = std::move(next_depth);
        return;  // caller re-marks and calls again; single conforming pass
    }
}

}  // namespace detail

inline SphereMesh build_sphere_mesh(int level) {
    std::vector<Vec3> verts;
    std::vector<Tri> tris;
    detail::icosahedron(verts, tris);
    for (int i = 0; i < level; ++i) detail::subdivide_sphere(verts, tris);
    SphereMesh m;
    m.refinement_level = level;
    m.triangles = std::move(tris);
    m.vertices.reserve(verts.size());
    for (const Vec3& v : verts) m.vertices.push_back({v, chart_from_sphere(v)});
    return m;
}

// Move the nearest mesh vertex onto each puncture so punctures are vertices.
inline void snap_punctures(SphereMesh& m, const WeierstrassData& data) {
    m.puncture_vertices.clear();
    for (const ChartPoint& p : data.all_punctures()) {
        const Vec3 target = p.unit_sphere();
        int best = -1;
        double bd = 1e300;
        for (size_t i = 0; i < m.vertices.size(); ++i) {
            const double d = (m.vertices[i].sphere - target).norm();
            if (d < bd) {
                bd = d;
                best = int(i);
            }
        }
        for (const int prev : m.puncture_vertices)
            if (prev == best) throw DegenerateInput("snap_punctures: two punctures share a vertex");
        m.vertices[best] = {target, p};
        m.puncture_vertices.push_back(best);
    }
}

inline size_t default_vertex_budget() { return 400000; }

// Compact mesh, optionally refined where the Fubini-Study density varies by
// more than a factor 4 across a triangle (up to 3 extra bisection depths).
inline SphereMesh build_compact_mesh(const WeierstrassData& data, int level, bool adapt,
                                     size_t vertex_cap = default_vertex_budget()) {
    if (level < 2 || level > 8) throw DegenerateInput("build_compact_mesh: level must be in [2,8]");
    SphereMesh m = build_sphere_mesh(level);
    snap_punctures(m, data);
    if (!adapt || data.is_flat()) return m;

    std::vector<double> rho(m.vertices.size());
    for (size_t i = 0; i < m.vertices.size(); ++i)
        rho[i] = weierstrass::fubini_study_density(data, m.vertices[i].chart);

    auto edge_length = [&](int a, int b) {
        return (m.vertices[a].sphere - m.vertices[b].sphere).norm();
    };
    auto make_midpoint = [&](int a, int b) {
        const Vec3 s = (m.vertices[a].sphere + m.vertices[b].sphere).normalized();
        m.vertices.push_back({s, chart_from_sphere(s)});
        rho.push_back(weierstrass::fubini_study_density(data, m.vertices.back().chart));
        return int(m.vertices.size()) - 1;
    };

    std::vector<int> depth(m.triangles.size(), 0);
    size_t vcount = m.vertices.size();
    for (int round = 0; round < 16; ++round) {
        std::vector<char> marked(m.triangles.size(), 0);
        bool any = false;
        for (size_t t = 0; t < m.triangles.size(); ++t) {
            if (depth[t] >= 6) continue;  // two bisections per subdivision level
            double lo = 1e300, hi = 0.0;
            for (const int v : m.triangles[t]) {
                lo = std::min(lo, rho[v]);
                hi = std::max(hi, rho[v]);
            }
            // Floor keeps zero-density vertices (branch points of g) from
            // forcing unbounded splitting by themselves.
            lo = std::max(lo, 1e-4 * hi + 1e-12);
            if (hi / lo > 4.0) {
                marked[t] = 1;
                any = true;
            }
        }
        if (!any) break;
        detail::rivara_bisect(m.triangles, marked, depth, 6, vertex_cap, &vcount, nullptr,
                              make_midpoint, edge_length);
    }
    return m;
}

// Uniform 1 -> 4 refinement; midpoint charts recomputed from the parents.
inline SphereMesh refine(const SphereMesh& in) {
    SphereMesh m = in;
    std::vector<Vec3> verts;
    verts.reserve(m.vertices.size());
    for (const auto& v : m.vertices) verts.push_back(v.sphere);
    detail::subdivide_sphere(verts, m.triangles);
    for (size_t i = m.vertices.size(); i < verts.size(); ++i)
        m.vertices.push_back({verts[i], chart_from_sphere(verts[i])});
    m.refinement_level += 1;
    return m;
}

inline int euler_characteristic(size_t nv, const std::vector<Tri>& tris) {
    std::map<std::pair<int, int>, int> edges;
    for (const Tri& t : tris)
        for (int e = 0; e < 3; ++e) edges[std::minmax(t[e], t[(e + 1) % 3])]++;
    return int(nv) - int(edges.size()) + int(tris.size());
}

// ---------------------------------------------------------------------------
// TruncatedMesh

struct TruncatedVertex {
    ChartPoint chart;
    Vec3 X = Vec3::Zero();
    bool boundary = false;
};

struct TruncatedMesh {
    std::vector<TruncatedVertex> vertices;
    std::vector<Tri> triangles;
    double truncation_radius = 0.0;

    std::array<Complex, 3> triangle_coords(int t, bool* w_chart_out = nullptr) const {
        const Tri& tr = triangles[t];
        std::array<ChartPoint, 3> ps = {vertices[tr[0]].chart, vertices[tr[1]].chart,
                                        vertices[tr[2]].chart};
        const bool w = common_chart_is_w(ps.begin(), ps.end());
        if (w_chart_out) *w_chart_out = w;
        return {coord_in_chart(ps[0], w), coord_in_chart(ps[1], w), coord_in_chart(ps[2], w)};
    }
};

namespace detail {

// Chart midpoint of an edge, taken in the chart where the edge is smallest.
inline ChartPoint edge_midpoint_chart(const ChartPoint& a, const ChartPoint& b) {
    std::array<ChartPoint, 2> ps = {a, b};
    const bool w = common_chart_is_w(ps.begin(), ps.end());
    const Complex m = 0.5 * (coord_in_chart(a, w) + coord_in_chart(b, w));
    return canonical_chart(w ? (m == Complex(0.0) ? Complex(1e300) : 1.0 / m) : m);
}

// Point at parameter t on the chart segment a -> b (common chart).
inline ChartPoint edge_point(const ChartPoint& a, const ChartPoint& b, double t) {
    std::array<ChartPoint, 2> ps = {a, b};
    const bool w = common_chart_is_w(ps.begin(), ps.end());
    const Complex ca = coord_in_chart(a, w), cb = coord_in_chart(b, w);
    const Complex m = ca + t * (cb - ca);
    return canonical_chart(w ? (m == Complex(0.0) ? Complex(1e300) : 1.0 / m) : m);
}

}  // namespace detail

inline int boundary_loop_count(const TruncatedMesh& m);

// |X| along each end must decrease monotonically from the puncture out to
// R/2: the ends are graphical there, which build_truncated_mesh assumes.
inline void check_ends_graphical(const WeierstrassData& data, double R,
                                 const Vec3& X_offset = Vec3::Zero()) {
    for (const ChartPoint& p : data.all_punctures()) {
        // walk away from the puncture along a ray, doubling chart distance
        const Complex dir(0.9396926207859084, 0.3420201433256687);  // arbitrary fixed direction
        double prev = 1e300;
        bool reached = false;
        for (double s = 1e-4; s < 64.0; s *= 1.6) {
            Complex z;
            if (p.is_infinity())
                z = 1.0 / (s * dir);
            else
                z = p.z_value() + s * dir;
            Vec3 x;
            try {
                x = weierstrass::immerse(data, z) + X_offset;
            } catch (const Error&) {
                break;  // walked into another pole's neighborhood; stop early
            }
            const double r = x.norm();
            if (r > prev + 1e-9 && prev > R / 2) {
                throw RTooSmall("truncation radius too small: end not graphical outside R/2");
            }
            prev = r;
            if (r < R / 2) {
                reached = true;
                break;
            }
        }
        if (!reached && prev > R)
            throw RTooSmall("truncation radius too small: end never descends below R/2");
    }
}

inline TruncatedMesh build_truncated_mesh(const WeierstrassData& data, double R,
                                          double target_h = -1.0, int seed_level = 4,
                                          size_t vertex_cap = default_vertex_budget(),
                                          const Vec3& X_offset = Vec3::Zero()) {
    if (R <= 0.0) throw RTooSmall("truncation radius must be positive");
    if (target_h <= 0.0) target_h = R / 24.0;
    check_ends_graphical(data, R, X_offset);

    SphereMesh sphere = build_compact_mesh(data, seed_level, false);

    struct WorkVertex {
        ChartPoint chart;
        Vec3 X = Vec3::Zero();
        bool valid = false;
        bool is_puncture = false;
    };
    std::vector<WorkVertex> verts(sphere.vertices.size());
    for (size_t i = 0; i < sphere.vertices.size(); ++i) verts[i].chart = sphere.vertices[i].chart;
    for (const int pv : sphere.puncture_vertices) verts[pv].is_puncture = true;
    std::vector<Tri> tris = sphere.triangles;

    // --- immersion by breadth-first edge integration from the basepoint ---
    auto edge_delta = [&](int a, int b) {
        return weierstrass::immerse_delta(data, verts[a].chart, verts[b].chart);
    };
    {
        std::vector<std::vector<int>> adj(verts.size());
        for (const Tri& t : tris)
            for (int e = 0; e < 3; ++e) {
                adj[t[e]].push_back(t[(e + 1) % 3]);
                adj[t[(e + 1) % 3]].push_back(t[e]);
            }
        // nearest non-puncture vertex to the basepoint
        int root = -1;
        double bd = 1e300;
        const Vec3 btarget = ChartPoint::z(data.basepoint).unit_sphere();
        for (size_t i = 0; i < verts.size(); ++i) {
            if (verts[i].is_puncture) continue;
            const double d = (verts[i].chart.unit_sphere() - btarget).norm();
            if (d < bd) {
                bd = d;
                root = int(i);
            }
        }
        verts[root].X = weierstrass::immerse(data, verts[root].chart.z_value()) + X_offset;
        verts[root].valid = true;
        std::queue<int> q;
        q.push(root);
        while (!q.empty()) {
            const int v = q.front();
            q.pop();
            for (const int u : adj[v]) {
                if (verts[u].valid || verts[u].is_puncture) continue;
                verts[u].X = verts[v].X + edge_delta(v, u);
                verts[u].valid = true;
                q.push(u);
            }
        }
    }

    // --- adaptive bisection: lambda-weighted edge length <= target_h on the
    // part of the surface that matters for the truncation -------------------
    auto lambda_at = [&](int v) -> double {
        if (verts[v].is_puncture) return 0.0;
        return std::sqrt(weierstrass::metric_factor(data, verts[v].chart));
    };
    std::vector<double> lam(verts.size());
    for (size_t i = 0; i < verts.size(); ++i) lam[i] = lambda_at(int(i));

    auto chart_edge_len = [&](int a, int b) {
        std::array<ChartPoint, 2> ps = {verts[a].chart, verts[b].chart};
        const bool w = common_chart_is_w(ps.begin(), ps.end());
        return std::abs(coord_in_chart(verts[a].chart, w) - coord_in_chart(verts[b].chart, w));
    };
    auto weighted_edge_len = [&](int a, int b) {
        // An edge ending at a puncture runs out the end and has infinite
        // induced length; keep splitting it while the triangle is relevant.
        if (verts[a].is_puncture || verts[b].is_puncture) return 1e300;
        const double len = chart_edge_len(a, b);
        // the endpoint average can badly underestimate edges whose interior
        // approaches an end, so also sample the metric at the edge midpoint
        double lmid = 0.0;
        try {
            const ChartPoint mid = detail::edge_midpoint_chart(verts[a].chart, verts[b].chart);
            lmid = std::sqrt(weierstrass::metric_factor(data, mid));
        } catch (const PoleProximity&) {
            return 1e300;
        }
        return len * std::max(0.5 * (lam[a] + lam[b]), lmid);
    };
    auto make_midpoint = [&](int a, int b) {
        WorkVertex m;
        m.chart = detail::edge_midpoint_chart(verts[a].chart, verts[b].chart);
        const int src = verts[a].valid ? a : b;
        if (verts[src].valid) {
            m.X = verts[src].X + weierstrass::immerse_delta(data, verts[src].chart, m.chart);
            m.valid = true;
        }
        verts.push_back(m);
        lam.push_back(lambda_at(int(verts.size()) - 1));
        return int(verts.size()) - 1;
    };

    std::vector<int> depth(tris.size(), 0);
    size_t vcount = verts.size();
    for (int round = 0; round < 48; ++round) {
        std::vector<char> marked(tris.size(), 0);
        bool any = false;
        for (size_t t = 0; t < tris.size(); ++t) {
            bool relevant = false;
            for (const int v : tris[t])
                if (verts[v].valid && verts[v].X.norm() < 1.3 * R) relevant = true;
            if (!relevant) continue;
            double longest = 0.0;
            for (int e = 0; e < 3; ++e)
                longest = std::max(longest, weighted_edge_len(tris[t][e], tris[t][(e + 1) % 3]));
            if (longest > target_h) {
                marked[t] = 1;
                any = true;
            }
        }
        if (!any) break;
        detail::rivara_bisect(tris, marked, depth, 1 << 24, vertex_cap, &vcount, nullptr,
                              make_midpoint, chart_edge_len);
    }

    // --- classification and boundary solving -------------------------------
    const double snap_tol = 2e-4;
    enum class Side { In, On, Out };
    auto side_of = [&](int v) {
        if (!verts[v].valid || verts[v].is_puncture) return Side::Out;
        const double r = verts[v].X.norm();
        if (std::abs(r - R) <= snap_tol * 0.5 * R) return Side::On;
        return r < R ? Side::In : Side::Out;
    };
    std::vector<Side> side(verts.size());
    for (size_t i = 0; i < verts.size(); ++i) side[i] = side_of(int(i));

    // crossing point on an edge: |X| = R to relative 1e-3 by bisection
    std::map<std::pair<int, int>, int> crossing;
    std::vector<TruncatedVertex> out_verts;
    std::vector<int> remap(verts.size(), -1);
    auto emit_vertex = [&](int v, bool boundary) {
        if (remap[v] >= 0) {
            if (boundary) out_verts[remap[v]].boundary = true;
            return remap[v];
        }
        out_verts.push_back({verts[v].chart, verts[v].X, boundary});
        remap[v] = int(out_verts.size()) - 1;
        return remap[v];
    };
    auto crossing_vertex = [&](int in_v, int out_v) {
        const auto key = std::minmax(in_v, out_v);
        auto it = crossing.find(key);
        if (it != crossing.end()) return it->second;
        double tlo = 0.0, thi = 1.0;
        Vec3 xlo = verts[in_v].X;
        // the outside endpoint may be a puncture (|X| = infinity); bisection
        // only ever evaluates interior parameters, which are regular
        for (int iter = 0; iter < 40; ++iter) {
            const double tm = 0.5 * (tlo + thi);
            const ChartPoint pm = detail::edge_point(verts[in_v].chart, verts[out_v].chart, tm);
            Vec3 xm;
            bool ok = true;
            try {
                xm = verts[in_v].X + weierstrass::immerse_delta(data, verts[in_v].chart, pm);
            } catch (const Error&) {
                ok = false;  // stepped too close to the puncture
            }
            if (!ok || xm.norm() >= R) {
                thi = tm;
            } else {
                tlo = tm;
                xlo = xm;
            }
            if (ok && std::abs(xm.norm() - R) <= 1e-5 * R) {
                xlo = xm;
                tlo = tm;
                break;
            }
        }
        const ChartPoint pb = detail::edge_point(verts[in_v].chart, verts[out_v].chart, tlo);
        Vec3 xb = xlo;
        // final polish: scale onto the sphere |X| = R exactly in the report
        out_verts.push_back({pb, xb, true});
        const int idx = int(out_verts.size()) - 1;
        crossing[key] = idx;
        return idx;
    };

    std::vector<Tri> out_tris;
    for (const Tri& t : tris) {
        std::array<Side, 3> s = {side[t[0]], side[t[1]], side[t[2]]};
        const int nin = int(std::count(s.begin(), s.end(), Side::In));
        const int non = int(std::count(s.begin(), s.end(), Side::On));
        if (nin == 0) continue;  // fully outside (or only touching)
        if (nin + non == 3) {
            Tri nt;
            for (int e = 0; e < 3; ++e) nt[e] = emit_vertex(t[e], s[e] == Side::On);
            out_tris.push_back(nt);
            continue;
        }
        // rotate so the pattern starts at an inside vertex
        std::array<int, 3> idx = {t[0], t[1], t[2]};
        while (s[0] != Side::In) {
            std::rotate(idx.begin(), idx.begin() + 1, idx.end());
            std::rotate(s.begin(), s.begin() + 1, s.end());
        }
        auto cut = [&](int a_in, int b_out) { return crossing_vertex(a_in, b_out); };
        if (nin == 1) {
            const int a = idx[0], b = idx[1], c = idx[2];
            const int pab = (s[1] == Side::On) ? emit_vertex(b, true) : cut(a, b);
            const int pca = (s[2] == Side::On) ? emit_vertex(c, true) : cut(a, c);
            const int va = emit_vertex(a, false);
            if (pab != pca) out_tris.push_back({va, pab, pca});
        } else {  // nin == 2
            while (s[2] == Side::In) {  // make the non-inside vertex the last
                std::rotate(idx.begin(), idx.begin() + 1, idx.end());
                std::rotate(s.begin(), s.begin() + 1, s.end());
            }
            const int a = idx[0], b = idx[1], c = idx[2];
            const int va = emit_vertex(a, false), vb = emit_vertex(b, false);
            if (s[2] == Side::On) {
                out_tris.push_back({va, vb, emit_vertex(c, true)});
            } else {
                const int pbc = cut(b, c), pca = cut(a, c);
                out_tris.push_back({va, vb, pbc});
                if (pbc != pca) out_tris.push_back({va, pbc, pca});
            }
        }
    }

    TruncatedMesh out;
    out.vertices = std::move(out_verts);
    out.triangles = std::move(out_tris);
    out.truncation_radius = R;
    if (out.triangles.empty())
        throw RTooSmall("truncation radius too small: empty truncated region");
    if (boundary_loop_count(out) != data.end_count())
        throw RTooSmall("truncation radius below the neck scale: boundary does not separate the ends");
    return out;
}

inline int boundary_loop_count(const TruncatedMesh& m) {
    std::map<std::pair<int, int>, int> edge_count;
    for (const Tri& t : m.triangles)
        for (int e = 0; e < 3; ++e) edge_count[std::minmax(t[e], t[(e + 1) % 3])]++;
    std::map<int, std::vector<int>> badj;  // boundary adjacency
    for (const auto& [edge, count] : edge_count) {
        if (count != 1) continue;
        badj[edge.first].push_back(edge.second);
        badj[edge.second].push_back(edge.first);
    }
    std::map<int, char> seen;
    int loops = 0;
    for (const auto& [v, nbrs] : badj) {
        (void)nbrs;
        if (seen[v]) continue;
        ++loops;
        std::queue<int> q;
        q.push(v);
        seen[v] = 1;
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (const int w : badj[u])
                if (!seen[w]) {
                    seen[w] = 1;
                    q.push(w);
                }
        }
    }
    return loops;
}

inline bool is_manifold_with_boundary(const TruncatedMesh& m) {
    std::map<std::pair<int, int>, int> edge_count;
    for (const Tri& t : m.triangles)
        for (int e = 0; e < 3; ++e) edge_count[std::minmax(t[e], t[(e + 1) % 3])]++;
    for (const auto& [edge, count] : edge_count)
        if (count > 2) return false;
    return true;
}

// Uniform 1 -> 4 refinement; boundary midpoints are re-solved onto |X| = R
// along the chart edge so the boundary tolerance is preserved.
inline TruncatedMesh refine(const TruncatedMesh& in, const WeierstrassData& data) {
    TruncatedMesh m;
    m.truncation_radius = in.truncation_radius;
    m.vertices = in.vertices;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        TruncatedVertex v;
        v.chart = detail::edge_midpoint_chart(in.vertices[a].chart, in.vertices[b].chart);
        v.X = in.vertices[a].X + weierstrass::immerse_delta(data, in.vertices[a].chart, v.chart);
        v.boundary = in.vertices[a].boundary && in.vertices[b].boundary;
        if (v.boundary) {
            // pull the midpoint back onto |X| = R along the segment towards
            // the interior side of the chord
            const double R = in.truncation_radius;
            if (std::abs(v.X.norm() - R) > 1e-5 * R) {
                // search along the chart direction of the secant normal:
                // parametrize towards each endpoint's opposite and bisect on
                // the segment from the midpoint towards the chart point that
                // lies inside
                ChartPoint lo = v.chart;
                Vec3 xlo = v.X;
                // march outward in the direction away from the chord center
                // until |X| >= R, then bisect
                const ChartPoint pa = in.vertices[a].chart;
                const ChartPoint pb = in.vertices[b].chart;
                std::array<ChartPoint, 2> ps = {pa, pb};
                const bool w = common_chart_is_w(ps.begin(), ps.end());
                const Complex ca = coord_in_chart(pa, w), cb = coord_in_chart(pb, w);
                const Complex tangent = (cb - ca) / std::abs(cb - ca);
                const Complex normal_dir = tangent * Complex(0.0, 1.0);
                const double step0 = 0.25 * std::abs(cb - ca);
                auto at = [&](double s) {
                    const Complex c = coord_in_chart(v.chart, w) + s * normal_dir;
                    return canonical_chart(w ? (1.0 / c) : c);
                };
                auto radius_at = [&](double s, Vec3* xout) {
                    const ChartPoint p = at(s);
                    const Vec3 x =
                        in.vertices[a].X + weierstrass::immerse_delta(data, in.vertices[a].chart, p);
                    if (xout) *xout = x;
                    return x.norm();
                };
                const bool inside = v.X.norm() < R;
                double sgn = 1.0;
                double r1 = radius_at(step0, nullptr);
                // pick the side that moves |X| in the needed direction
                if ((inside && r1 < v.X.norm()) || (!inside && r1 > v.X.norm())) sgn = -1.0;
                double s_in = 0.0, s_out = 0.0;
                bool bracketed = false;
                for (double s = step0; s <= 8 * step0; s *= 2.0) {
                    const double r = radius_at(sgn * s, nullptr);
                    if ((inside && r >= R) || (!inside && r < R)) {
                        s_out = sgn * s;
                        s_in = (s == step0) ? 0.0 : sgn * s / 2.0;
                        bracketed = true;
                        break;
                    }
                }
                if (bracketed) {
                    for (int iter = 0; iter < 30; ++iter) {
                        const double sm = 0.5 * (s_in + s_out);
                        Vec3 xm;
                        const double r = radius_at(sm, &xm);
                        if ((r < R) == inside)
                            s_in = sm;
                        else
                            s_out = sm;
                        if (std::abs(r - R) < 1e-5 * R) {
                            lo = at(sm);
                            xlo = xm;
                            break;
                        }
                        lo = at(sm);
                        xlo = xm;
                    }
                    v.chart = lo;
                    v.X = xlo;
                }
            }
        }
        m.vertices.push_back(v);
        midpoint[key] = int(m.vertices.size()) - 1;
        return midpoint[key];
    };
    for (const Tri& t : in.triangles) {
        const int ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
        m.triangles.push_back({t[0], ab, ca});
        m.triangles.push_back({t[1], bc, ab});
        m.triangles.push_back({t[2], ca, bc});
        m.triangles.push_back({ab, bc, ca});
    }
    return m;
}

// ---------------------------------------------------------------------------
// Quadrature helpers (chart-invariant integrands).

// Integral over the mesh of a density given per unit chart area, evaluated
// at the three edge midpoints of each chart triangle.
template <typename Mesh, typename F>
inline double integrate_chart_density(const Mesh& mesh, F&& density_at) {
    double total = 0.0;
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        bool w = false;
        const auto c = mesh.triangle_coords(int(t), &w);
        const double area = 0.5 * std::abs((c[1] - c[0]).real() * (c[2] - c[0]).imag() -
                                           (c[1] - c[0]).imag() * (c[2] - c[0]).real());
        double mean = 0.0;
        for (int e = 0; e < 3; ++e) {
            const Complex mid = 0.5 * (c[e] + c[(e + 1) % 3]);
            mean += density_at(ChartPoint{mid, w});
        }
        total += area * mean / 3.0;
    }
    return total;
}

// Area in the induced metric: integral of the conformal factor.
inline double induced_area(const TruncatedMesh& mesh, const WeierstrassData& data) {
    return integrate_chart_density(mesh, [&](const ChartPoint& p) {
        try {
            return weierstrass::metric_factor(data, p);
        } catch (const PoleProximity&) {
            return 0.0;
        }
    });
}

// Total Gauss curvature of the compactified surface: -integral of the
// Fubini-Study density over the sphere mesh.
inline double total_curvature_quadrature(const SphereMesh& mesh, const WeierstrassData& data) {
    return -integrate_chart_density(
        mesh, [&](const ChartPoint& p) { return weierstrass::fubini_study_density(data, p); });
}

// ---------------------------------------------------------------------------
// OFF-style text dumps.

inline void dump_off(const SphereMesh& m, std::ostream& os) {
    os << "# chart_tag re im sx sy sz\n";
    os << m.vertices.size() << " " << m.triangles.size() << "\n";
    char buf[256];
    for (const auto& v : m.vertices) {
        std::snprintf(buf, sizeof buf, "%c %.17g %.17g %.17g %.17g %.17g\n",
                      v.chart.w_chart ? 'w' : 'z', v.chart.coord.real(), v.chart.coord.imag(),
                      v.sphere.x(), v.sphere.y(), v.sphere.z());
        os << buf;
    }
    for (const auto& t : m.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
}

inline void dump_off(const TruncatedMesh& m, std::ostream& os) {
    os << "# chart_tag re im X1 X2 X3 boundary\n";
    os << m.vertices.size() << " " << m.triangles.size() << "\n";
    char buf[256];
    for (const auto& v : m.vertices) {
        std::snprintf(buf, sizeof buf, "%c %.17g %.17g %.17g %.17g %.17g %d\n",
                      v.chart.w_chart ? 'w' : 'z', v.chart.coord.real(), v.chart.coord.imag(),
                      v.X.x(), v.X.y(), v.X.z(), v.boundary ? 1 : 0);
        os << buf;
    }
    for (const auto& t : m.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
}

}  // namespace minlab::mesh
