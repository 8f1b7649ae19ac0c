#pragma once

// Batch front end: run configuration, the five subcommands (gallery, index,
// convergence, certify, verify-theorems), and deterministic JSON/CSV/SVG
// emission.  Exit codes: 0 success, 2 validation or check failure, 3
// numerical non-convergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "minlab/certify.hpp"
#include "minlab/errors.hpp"
#include "minlab/forms.hpp"
#include "minlab/gallery.hpp"
#include "minlab/mesh.hpp"
#include "minlab/spectral.hpp"
#include "minlab/weierstrass.hpp"

namespace minlab::run {

using nlohmann::json;
using weierstrass::WeierstrassData;

inline constexpr int kSchemaVersion = 1;
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNonConvergent = 3;

// ---------------------------------------------------------------------------
// Deterministic serialization: every floating-point number is printed with
// 17 significant digits, in JSON, CSV, and SVG alike.

inline std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void dump_json(const json& j, std::ostream& os, int indent = 0) {
    const std::string pad(size_t(indent), ' ');
    const std::string pad2(size_t(indent) + 2, ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            bool first = true;
            for (const auto& [k, v] : j.items()) {
                if (!first) os << ",\n";
                first = false;
                os << pad2 << json(k).dump() << ": ";
                dump_json(v, os, indent + 2);
            }
            os << "\n" << pad << "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            os << "[\n";
            bool first = true;
            for (const auto& v : j) {
                if (!first) os << ",\n";
                first = false;
                os << pad2;
                dump_json(v, os, indent + 2);
            }
            os << "\n" << pad << "]";
            return;
        }
        case json::value_t::number_float:
            os << fmt17(j.get<double>());
            return;
        default:
            os << j.dump();
            return;
    }
}

inline std::string dump_json(const json& j) {
    std::ostringstream os;
    dump_json(j, os);
    os << "\n";
    return os.str();
}

// A minimal static line plot: axes, one polyline, corner labels.
inline std::string svg_plot(const std::vector<std::pair<double, double>>& pts,
                            const std::string& title, const std::string& xlabel,
                            const std::string& ylabel) {
    const double w = 640.0, h = 480.0, m = 60.0;
    double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (!pts.empty()) {
        x0 = x1 = pts[0].first;
        y0 = y1 = pts[0].second;
        for (const auto& p : pts) {
            x0 = std::min(x0, p.first);
            x1 = std::max(x1, p.first);
            y0 = std::min(y0, p.second);
            y1 = std::max(y1, p.second);
        }
    }
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    auto px = [&](double x) { return m + (x - x0) / (x1 - x0) * (w - 2 * m); };
    auto py = [&](double y) { return h - m - (y - y0) / (y1 - y0) * (h - 2 * m); };
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
          "viewBox=\"0 0 640 480\">\n";
    os << "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
    os << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
       << "</text>\n";
    os << "<line x1=\"" << fmt17(m) << "\" y1=\"" << fmt17(h - m) << "\" x2=\"" << fmt17(w - m)
       << "\" y2=\"" << fmt17(h - m) << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << fmt17(m) << "\" y1=\"" << fmt17(m) << "\" x2=\"" << fmt17(m)
       << "\" y2=\"" << fmt17(h - m) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"320\" y=\"470\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << " ["
       << fmt17(x0) << ", " << fmt17(x1) << "]</text>\n";
    os << "<text x=\"16\" y=\"240\" font-size=\"12\" transform=\"rotate(-90 16 240)\" "
          "text-anchor=\"middle\">"
       << ylabel << " [" << fmt17(y0) << ", " << fmt17(y1) << "]</text>\n";
    if (!pts.empty()) {
        os << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
        for (size_t i = 0; i < pts.size(); ++i) {
            if (i) os << " ";
            os << fmt17(px(pts[i].first)) << "," << fmt17(py(pts[i].second));
        }
        os << "\"/>\n";
        for (const auto& p : pts)
            os << "<circle cx=\"" << fmt17(px(p.first)) << "\" cy=\"" << fmt17(py(p.second))
               << "\" r=\"3\" fill=\"steelblue\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Run configuration.

struct RunConfig {
    std::string command;
    std::string surface;       // builtin gallery name
    std::string gallery_file;  // or an explicit Weierstrass data file
    bool all_surfaces = false; // verify-theorems over the whole gallery
    int level = 4;
    std::vector<double> radii;
    double delta = 0.25;
    double tol = 0.05;  // nullity-band half width around the threshold 2
    std::string out_dir;  // empty: no files, stdout only
    std::vector<std::string> formats = {"json", "csv", "svg"};

    void validate() const {
        static const std::vector<std::string> commands = {"gallery", "index", "convergence",
                                                          "certify", "verify-theorems"};
        if (std::find(commands.begin(), commands.end(), command) == commands.end())
            throw DegenerateInput("config: unknown command '" + command + "'");
        if (level < 2 || level > 8) throw DegenerateInput("config: level must be in [2, 8]");
        if (!(delta > 0.0 && delta < 1.0))
            throw DegenerateInput("config: delta must be in (0, 1)");
        if (!(tol > 0.0)) throw DegenerateInput("config: tol must be positive");
        for (size_t i = 0; i < radii.size(); ++i) {
            if (!(radii[i] > 0.0)) throw DegenerateInput("config: radii must be positive");
            if (i > 0 && !(radii[i] > radii[i - 1]))
                throw DegenerateInput("config: radii must be strictly ascending");
        }
        for (const auto& f : formats)
            if (f != "json" && f != "csv" && f != "svg")
                throw DegenerateInput("config: unknown format '" + f + "'");
        if (command != "gallery" && !all_surfaces && surface.empty() && gallery_file.empty())
            throw DegenerateInput("config: a surface (or gallery file) is required");
    }

    bool wants(const std::string& fmt) const {
        return std::find(formats.begin(), formats.end(), fmt) != formats.end();
    }

    json to_json() const {
        return json{{"command", command},   {"surface", surface}, {"gallery_file", gallery_file},
                    {"all", all_surfaces},  {"level", level},     {"radii", radii},
                    {"delta", delta},       {"tol", tol},         {"out", out_dir},
                    {"format", formats}};
    }

    // Overlay fields present in a JSON object onto this config.
    void apply_json(const json& j) {
        if (!j.is_object()) throw DegenerateInput("config: file must hold a JSON object");
        for (const auto& [k, v] : j.items()) {
            try {
                if (k == "command") command = v.get<std::string>();
                else if (k == "surface") surface = v.get<std::string>();
                else if (k == "gallery_file") gallery_file = v.get<std::string>();
                else if (k == "all") all_surfaces = v.get<bool>();
                else if (k == "level") level = v.get<int>();
                else if (k == "radii") radii = v.get<std::vector<double>>();
                else if (k == "delta") delta = v.get<double>();
                else if (k == "tol") tol = v.get<double>();
                else if (k == "out") out_dir = v.get<std::string>();
                else if (k == "format") formats = v.get<std::vector<std::string>>();
                else if (k != "schema_version")
                    throw DegenerateInput("config: unknown field '" + k + "'");
            } catch (const json::exception&) {
                throw DegenerateInput("config: wrong type for field '" + k + "'");
            }
        }
    }
};

namespace detail {

inline void write_file(const RunConfig& cfg, const std::string& name, const std::string& body) {
    if (cfg.out_dir.empty()) return;
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(cfg.out_dir + "/" + name, std::ios::binary);
    if (!out) throw DegenerateInput("cannot write " + cfg.out_dir + "/" + name);
    out << body;
}

inline std::string slug(const RunConfig& cfg) {
    if (!cfg.surface.empty()) return cfg.surface;
    return std::filesystem::path(cfg.gallery_file).stem().string();
}

inline WeierstrassData load_surface(const RunConfig& cfg) {
    if (!cfg.gallery_file.empty()) return gallery::load_file(cfg.gallery_file);
    return gallery::load(cfg.surface);
}

// Gallery metadata for the loaded surface; for external files the
// embeddedness flags stay conservative (checks needing them are skipped).
inline gallery::GalleryEntry entry_for(const RunConfig& cfg, const WeierstrassData& data) {
    if (!cfg.surface.empty()) return gallery::find_entry(cfg.surface);
    gallery::GalleryEntry e;
    e.name = slug(cfg);
    e.genus = data.genus;
    e.ends = data.end_count();
    e.gauss_degree = data.gauss.map_degree();
    e.embedded = false;
    e.embedded_ends = false;
    return e;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The compact (compactified-sphere) index pipeline shared by the commands.

struct IndexComputation {
    int index = 0;
    int nullity = 0;
    double margin = 0.0;
    std::vector<double> eigenvalues;
    double mesh_size = 0.0;
    int vertex_count = 0;
};

inline IndexComputation compact_index(const WeierstrassData& data, int level, double tol) {
    IndexComputation out;
    if (data.is_flat()) return out;  // flat surfaces are stable: index 0
    const auto mesh = mesh::build_compact_mesh(data, level, true);
    const auto prob = spectral::assemble_gauss_metric(mesh, data);
    const int ndof = int(prob.stiffness.rows());
    int m = std::min(ndof - 1, 8 + 2 * (data.genus + data.end_count()));
    spectral::SolveOptions opts;
    opts.dense_cutoff = 400;  // shift-invert beats the dense solver well below 3000 here
    for (;;) {
        const auto res = spectral::solve_lowest(prob, m, opts);
        if (res.eigenvalues.back() >= 2.0 + tol || m >= ndof - 1) {
            const auto count = spectral::index_count(res, 2.0, tol);
            out.index = count.index;
            out.nullity = count.nullity;
            out.margin = count.margin;
            out.eigenvalues = res.eigenvalues;
            out.mesh_size = res.mesh_size;
            out.vertex_count = int(mesh.vertices.size());
            return out;
        }
        m = std::min(ndof - 1, 2 * m);
    }
}

// ---------------------------------------------------------------------------
// Commands.  Each returns the JSON report it also writes; `pass` in the
// report decides the exit code.

inline json cmd_gallery(const RunConfig& cfg) {
    json surfaces = json::array();
    for (const auto& e : gallery::builtin_entries()) {
        json s{{"name", e.name},
               {"genus", e.genus},
               {"ends", e.ends},
               {"gauss_degree", e.gauss_degree},
               {"embedded", e.embedded},
               {"embedded_ends", e.embedded_ends}};
        if (e.known_index) s["known_index"] = *e.known_index;
        surfaces.push_back(s);
    }
    json report{{"schema_version", kSchemaVersion}, {"surfaces", surfaces}, {"pass", true}};
    if (cfg.wants("json")) detail::write_file(cfg, "gallery.json", dump_json(report));
    if (cfg.wants("csv")) {
        std::ostringstream csv;
        csv << "name,genus,ends,gauss_degree,known_index,embedded\n";
        for (const auto& e : gallery::builtin_entries())
            csv << e.name << "," << e.genus << "," << e.ends << "," << e.gauss_degree << ","
                << (e.known_index ? std::to_string(*e.known_index) : "") << ","
                << (e.embedded ? 1 : 0) << "\n";
        detail::write_file(cfg, "gallery.csv", csv.str());
    }
    return report;
}

inline json cmd_index(const RunConfig& cfg) {
    const auto data = detail::load_surface(cfg);
    const auto entry = detail::entry_for(cfg, data);
    const auto comp = compact_index(data, cfg.level, cfg.tol);

    json report{{"schema_version", kSchemaVersion},
                {"surface", entry.name},
                {"level", cfg.level},
                {"index", comp.index},
                {"nullity", comp.nullity},
                {"margin", comp.margin},
                {"mesh_size", comp.mesh_size},
                {"vertex_count", comp.vertex_count},
                {"eigenvalues", comp.eigenvalues}};
    bool pass = !entry.known_index || comp.index == *entry.known_index;
    if (entry.known_index) report["known_index"] = *entry.known_index;

    json truncated = json::array();
    std::vector<std::pair<double, double>> curve;
    int prev = 0;
    for (size_t i = 0; i < cfg.radii.size(); ++i) {
        const double r = cfg.radii[i];
        const auto tm = mesh::build_truncated_mesh(data, r, r / 16.0, 3);
        const int neg = data.is_flat()
                            ? 0
                            : spectral::negative_count(spectral::assemble_jacobi_truncated(tm, data));
        truncated.push_back(json{{"radius", r}, {"negative_count", neg}});
        curve.emplace_back(r, double(neg));
        if (i > 0 && neg < prev) pass = false;  // counts must be nondecreasing
        if (neg > comp.index) pass = false;     // and bounded by the index
        prev = neg;
    }
    report["truncated"] = truncated;
    report["pass"] = pass;

    const std::string base = detail::slug(cfg) + "-index";
    if (cfg.wants("json")) detail::write_file(cfg, base + ".json", dump_json(report));
    if (cfg.wants("csv")) {
        std::ostringstream csv;
        csv << "index,eigenvalue\n";
        for (size_t i = 0; i < comp.eigenvalues.size(); ++i)
            csv << i << "," << fmt17(comp.eigenvalues[i]) << "\n";
        detail::write_file(cfg, base + ".csv", csv.str());
    }
    if (cfg.wants("svg")) {
        std::vector<std::pair<double, double>> pts = curve;
        std::string title = entry.name + ": truncated negative count vs radius";
        std::string xl = "truncation radius", yl = "negative count";
        if (pts.empty()) {
            for (size_t i = 0; i < comp.eigenvalues.size(); ++i)
                pts.emplace_back(double(i), comp.eigenvalues[i]);
            title = entry.name + ": compactified spectrum";
            xl = "eigenvalue number";
            yl = "eigenvalue";
        }
        detail::write_file(cfg, base + ".svg", svg_plot(pts, title, xl, yl));
    }
    return report;
}

inline json cmd_convergence(const RunConfig& cfg) {
    const auto data = detail::load_surface(cfg);
    const auto entry = detail::entry_for(cfg, data);
    if (data.is_flat())
        throw DegenerateInput("convergence study needs a non-flat surface");
    const int lo = std::max(2, cfg.level - 2);
    if (cfg.level - lo < 2)
        throw DegenerateInput("convergence study needs at least three levels: raise --level to >= 4");

    json rows = json::array();
    std::vector<double> hs, drifts, tols;
    int final_index = -1;
    for (int level = lo; level <= cfg.level; ++level) {
        const auto comp = compact_index(data, level, cfg.tol);
        // Nullity-band drift: largest |eigenvalue - 2| over the band.
        double drift = 0.0;
        for (const double l : comp.eigenvalues)
            if (std::abs(l - 2.0) < cfg.tol) drift = std::max(drift, std::abs(l - 2.0));
        // Eigenvalue nearest the threshold from above (conforming elements
        // approach from above, so this gap is the discretization error).
        double above = 0.0;
        for (const double l : comp.eigenvalues)
            if (l > 2.0 && (above == 0.0 || l - 2.0 < above)) above = l - 2.0;
        rows.push_back(json{{"level", level},
                            {"mesh_size", comp.mesh_size},
                            {"index", comp.index},
                            {"nullity", comp.nullity},
                            {"band_drift", drift},
                            {"gap_above", above}});
        hs.push_back(comp.mesh_size);
        drifts.push_back(std::max(drift, 1e-16));
        tols.push_back(2.0 * std::max(drift, 1e-16));
        final_index = comp.index;
    }
    // Fitted order of the band drift in the mesh size.
    double order = 0.0;
    {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const int n = int(hs.size());
        for (int i = 0; i < n; ++i) {
            const double x = std::log(hs[i]), y = std::log(drifts[i]);
            sx += x; sy += y; sxx += x * x; sxy += x * y;
        }
        order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    bool tol_decreasing = true;
    for (size_t i = 1; i < tols.size(); ++i) tol_decreasing = tol_decreasing && tols[i] <= tols[i - 1];

    json report{{"schema_version", kSchemaVersion},
                {"surface", entry.name},
                {"levels", rows},
                {"fitted_order", order},
                {"recommended_tol", tols.back()},
                {"recommended_tol_decreasing", tol_decreasing},
                {"pass", order >= 1.0 && (!entry.known_index || final_index == *entry.known_index)}};
    const std::string base = detail::slug(cfg) + "-convergence";
    if (cfg.wants("json")) detail::write_file(cfg, base + ".json", dump_json(report));
    if (cfg.wants("csv")) {
        std::ostringstream csv;
        csv << "level,mesh_size,index,nullity,band_drift,gap_above\n";
        for (const auto& r : rows)
            csv << r["level"].get<int>() << "," << fmt17(r["mesh_size"].get<double>()) << ","
                << r["index"].get<int>() << "," << r["nullity"].get<int>() << ","
                << fmt17(r["band_drift"].get<double>()) << ","
                << fmt17(r["gap_above"].get<double>()) << "\n";
        detail::write_file(cfg, base + ".csv", csv.str());
    }
    if (cfg.wants("svg")) {
        std::vector<std::pair<double, double>> pts;
        for (size_t i = 0; i < hs.size(); ++i)
            pts.emplace_back(std::log10(hs[i]), std::log10(drifts[i]));
        detail::write_file(
            cfg, base + ".svg",
            svg_plot(pts, entry.name + ": nullity-band drift vs mesh size (log10)",
                     "log10 mesh size", "log10 band drift"));
    }
    return report;
}

inline json cmd_certify(const RunConfig& cfg) {
    const auto data = detail::load_surface(cfg);
    const auto entry = detail::entry_for(cfg, data);
    std::vector<double> radii = cfg.radii.empty() ? std::vector<double>{50.0} : cfg.radii;

    json certs = json::array();
    std::ostringstream traces;
    bool pass = true;
    int prev = 0;
    for (size_t i = 0; i < radii.size(); ++i) {
        const auto cert = certify::certificate(data, radii[i], cfg.delta);
        certs.push_back(json{{"radius", radii[i]},
                             {"certified_lower_bound", cert.negative_count},
                             {"pencil_negative_count", cert.pencil_negative_count},
                             {"projected_form_negatives", cert.projected_form_negatives},
                             {"weighted_modes", cert.weighted_modes_used},
                             {"test_space", cert.test_space_labels},
                             {"dropped", cert.dropped_labels}});
        traces << cert.trace() << "\n";
        if (entry.known_index && cert.negative_count > *entry.known_index) pass = false;
        if (i > 0 && cert.negative_count < prev) pass = false;
        prev = cert.negative_count;
    }
    json report{{"schema_version", kSchemaVersion},
                {"surface", entry.name},
                {"delta", cfg.delta},
                {"certificates", certs},
                {"pass", pass}};
    const std::string base = detail::slug(cfg) + "-certify";
    if (cfg.wants("json")) detail::write_file(cfg, base + ".json", dump_json(report));
    detail::write_file(cfg, base + "-trace.txt", traces.str());
    return report;
}

inline json cmd_verify_theorems(const RunConfig& cfg) {
    std::vector<gallery::GalleryEntry> entries;
    if (cfg.all_surfaces) {
        entries = gallery::builtin_entries();
    } else {
        const auto data = detail::load_surface(cfg);
        entries.push_back(detail::entry_for(cfg, data));
    }
    json reports = json::array();
    bool pass = true;
    for (const auto& entry : entries) {
        const auto data = entry.file.empty() ? detail::load_surface(cfg)
                                             : gallery::load(entry.name);
        int index;
        if (entry.known_index)
            index = *entry.known_index;
        else
            index = compact_index(data, cfg.level, cfg.tol).index;
        // T from the compact quadrature, not from the degree, so the check
        // exercises the numerical pipeline.
        double t = 0.0;
        if (!data.is_flat()) {
            const auto mesh = mesh::build_compact_mesh(data, std::min(cfg.level, 5), true);
            t = -mesh::total_curvature_quadrature(mesh, data) / (4.0 * M_PI);
        }
        const auto rep = certify::theorem_checks(entry, data, index, t);
        reports.push_back(rep.to_json());
        pass = pass && rep.all_pass();
    }
    json cases = json::array();
    for (const auto& v : certify::index2_full_table()) {
        cases.push_back(json{{"genus", v.genus},
                             {"ends", v.ends},
                             {"excluded", v.excluded},
                             {"reason", v.reason},
                             {"trace", v.trace}});
        pass = pass && v.excluded;
    }
    json report{{"schema_version", kSchemaVersion},
                {"theorems", reports},
                {"index2_cases", cases},
                {"pass", pass}};
    const std::string base =
        cfg.all_surfaces ? std::string("all") : detail::slug(cfg);
    if (cfg.wants("json")) detail::write_file(cfg, base + "-theorems.json", dump_json(report));
    return report;
}

inline json dispatch(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.command == "gallery") return cmd_gallery(cfg);
    if (cfg.command == "index") return cmd_index(cfg);
    if (cfg.command == "convergence") return cmd_convergence(cfg);
    if (cfg.command == "certify") return cmd_certify(cfg);
    return cmd_verify_theorems(cfg);
}

}  // namespace minlab::run
