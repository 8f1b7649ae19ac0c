#pragma once

// Built-in surface gallery: JSON data files for Weierstrass data, loaded
// with a strict schema and validated (period closure) rather than trusted.

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "minlab/errors.hpp"
#include "minlab/weierstrass.hpp"

namespace minlab::gallery {

using weierstrass::WeierstrassData;
using meromorphic::Complex;
using meromorphic::Poly;

struct GalleryEntry {
    std::string name;
    std::string file;      // path relative to the gallery root
    int genus = 0;
    int ends = 0;
    int gauss_degree = 0;
    std::optional<int> known_index;  // stated in the literature
    bool embedded = true;
    bool embedded_ends = true;  // each individual end is embedded
};

inline const std::vector<GalleryEntry>& builtin_entries() {
    static const std::vector<GalleryEntry> entries = {
        {"plane", "plane.json", 0, 1, 0, 0, true, true},
        {"catenoid", "catenoid.json", 0, 2, 1, 1, true, true},
        {"enneper", "enneper.json", 0, 1, 1, 1, false, false},
        {"jorge-meeks-3", "jorge-meeks-3.json", 0, 3, 2, 3, false, true},
        {"jorge-meeks-4", "jorge-meeks-4.json", 0, 4, 3, 5, false, true},
        {"jorge-meeks-5", "jorge-meeks-5.json", 0, 5, 4, 7, false, true},
    };
    return entries;
}

namespace detail {

inline Poly parse_poly(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw DegenerateInput("gallery: " + where + " must be a nonempty coefficient array");
    Poly p;
    for (const auto& c : j) {
        if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number())
            throw DegenerateInput("gallery: " + where + " coefficients must be [re, im] pairs");
        p.emplace_back(c[0].get<double>(), c[1].get<double>());
    }
    return p;
}

inline meromorphic::RationalMap parse_map(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw DegenerateInput("gallery: " + where + " must be an object");
    for (const auto& [key, val] : j.items()) {
        (void)val;
        if (key != "num" && key != "den")
            throw DegenerateInput("gallery: unknown field '" + key + "' in " + where);
    }
    if (!j.contains("num") || !j.contains("den"))
        throw DegenerateInput("gallery: " + where + " requires num and den");
    return meromorphic::RationalMap(parse_poly(j["num"], where + ".num"),
                                    parse_poly(j["den"], where + ".den"));
}

}  // namespace detail

// Strict-schema loader: the exact field set {name, genus, gauss, height,
// punctures, puncture_at_infinity}, anything else is rejected.
inline WeierstrassData load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DegenerateInput("gallery: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DegenerateInput("gallery: invalid JSON in " + path + ": " + e.what());
    }
    static const std::vector<std::string> allowed = {"name",      "genus",
                                                     "gauss",     "height",
                                                     "punctures", "puncture_at_infinity"};
    for (const auto& [key, val] : j.items()) {
        (void)val;
        bool ok = false;
        for (const auto& a : allowed) ok = ok || key == a;
        if (!ok) throw DegenerateInput("gallery: unknown field '" + key + "' in " + path);
    }
    for (const auto& a : allowed)
        if (!j.contains(a)) throw DegenerateInput("gallery: missing field '" + a + "' in " + path);
    if (!j["name"].is_string() || !j["genus"].is_number_integer() ||
        !j["punctures"].is_array() || !j["puncture_at_infinity"].is_boolean())
        throw DegenerateInput("gallery: wrong field types in " + path);

    std::vector<Complex> punctures;
    for (const auto& p : j["punctures"]) {
        if (!p.is_array() || p.size() != 2)
            throw DegenerateInput("gallery: punctures must be [re, im] pairs in " + path);
        punctures.emplace_back(p[0].get<double>(), p[1].get<double>());
    }
    for (size_t i = 0; i < punctures.size(); ++i)
        for (size_t k = i + 1; k < punctures.size(); ++k)
            if (std::abs(punctures[i] - punctures[k]) < 1e-12)
                throw DegenerateInput("gallery: duplicate punctures in " + path);

    WeierstrassData d = weierstrass::make_data(
        j["name"].get<std::string>(), detail::parse_map(j["gauss"], "gauss"),
        meromorphic::Differential(detail::parse_map(j["height"], "height")), std::move(punctures),
        j["puncture_at_infinity"].get<bool>(), j["genus"].get<int>());
    weierstrass::validate(d);
    return d;
}

inline std::string default_root() {
    if (const char* env = std::getenv("MINLAB_GALLERY")) return env;
    return "gallery";
}

inline const GalleryEntry& find_entry(const std::string& name) {
    for (const auto& e : builtin_entries())
        if (e.name == name) return e;
    throw DegenerateInput("gallery: unknown surface '" + name + "'");
}

inline WeierstrassData load(const std::string& name, std::string root = default_root()) {
    const GalleryEntry& e = find_entry(name);
    return load_file(root + "/" + e.file);
}

}  // namespace minlab::gallery
