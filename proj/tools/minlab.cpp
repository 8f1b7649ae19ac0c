// minlab: Morse-index laboratory for finite-total-curvature minimal surfaces.
//
// Subcommands: gallery, index, convergence, certify, verify-theorems.
// Precedence: command-line flags > --config JSON file > built-in defaults.
// Exit codes: 0 all requested checks pass, 2 validation or check failure,
// 3 numerical non-convergence.  MINLAB_THREADS caps assembly parallelism.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "minlab/run.hpp"

namespace {

struct SubState {
    minlab::run::RunConfig flags;  // values captured by CLI11
    std::string config_path;
    CLI::App* app = nullptr;
};

void add_common(CLI::App* sub, SubState& st) {
    sub->add_option("--surface", st.flags.surface, "built-in gallery surface name");
    sub->add_option("--gallery-file", st.flags.gallery_file, "Weierstrass data JSON file");
    sub->add_option("--level", st.flags.level, "compact mesh refinement level (2..8)");
    sub->add_option("--radii", st.flags.radii, "truncation radii, ascending");
    sub->add_option("--delta", st.flags.delta, "weighted-norm decay exponent in (0,1)");
    sub->add_option("--tol", st.flags.tol, "nullity-band half width");
    sub->add_option("--out", st.flags.out_dir, "output directory");
    sub->add_option("--format", st.flags.formats, "output formats: json csv svg");
    sub->add_option("--config", st.config_path, "JSON config file (same schema as the report)");
    st.app = sub;
}

// flags > config file > defaults, field by field.
minlab::run::RunConfig resolve(const SubState& st, const std::string& command, bool all_flag) {
    minlab::run::RunConfig cfg;  // defaults
    cfg.command = command;
    if (!st.config_path.empty()) {
        std::ifstream in(st.config_path);
        if (!in) throw minlab::DegenerateInput("cannot open config file " + st.config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw minlab::DegenerateInput(std::string("invalid config JSON: ") + e.what());
        }
        j.erase("command");  // the subcommand on the command line wins
        cfg.apply_json(j);
    }
    const CLI::App* a = st.app;
    if (a->count("--surface")) cfg.surface = st.flags.surface;
    if (a->count("--gallery-file")) cfg.gallery_file = st.flags.gallery_file;
    if (a->count("--level")) cfg.level = st.flags.level;
    if (a->count("--radii")) cfg.radii = st.flags.radii;
    if (a->count("--delta")) cfg.delta = st.flags.delta;
    if (a->count("--tol")) cfg.tol = st.flags.tol;
    if (a->count("--out")) cfg.out_dir = st.flags.out_dir;
    if (a->count("--format")) cfg.formats = st.flags.formats;
    if (all_flag) cfg.all_surfaces = true;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Morse-index laboratory for minimal surfaces"};
    app.require_subcommand(1);

    std::vector<std::pair<std::string, SubState>> subs;
    subs.reserve(5);
    for (const char* name : {"gallery", "index", "convergence", "certify", "verify-theorems"}) {
        subs.emplace_back(name, SubState{});
    }
    bool all_flag = false;
    for (auto& [name, st] : subs) {
        CLI::App* sub = app.add_subcommand(name);
        add_common(sub, st);
        if (name == "verify-theorems")
            sub->add_flag("--all", all_flag, "verify every built-in surface");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return minlab::run::kExitValidation;
    }

    try {
        for (auto& [name, st] : subs) {
            if (!st.app->parsed()) continue;
            const auto cfg = resolve(st, name, all_flag);
            const auto report = minlab::run::dispatch(cfg);
            std::cout << minlab::run::dump_json(report);
            const bool pass = !report.contains("pass") || report["pass"].get<bool>();
            return pass ? minlab::run::kExitOk : minlab::run::kExitValidation;
        }
        return minlab::run::kExitValidation;
    } catch (const minlab::NonConvergent& e) {
        std::cout << minlab::run::dump_json(
            {{"schema_version", minlab::run::kSchemaVersion}, {"error", e.what()}});
        return minlab::run::kExitNonConvergent;
    } catch (const minlab::FactorizationFailure& e) {
        std::cout << minlab::run::dump_json(
            {{"schema_version", minlab::run::kSchemaVersion}, {"error", e.what()}});
        return minlab::run::kExitNonConvergent;
    } catch (const minlab::Error& e) {
        std::cout << minlab::run::dump_json(
            {{"schema_version", minlab::run::kSchemaVersion}, {"error", e.what()}});
        return minlab::run::kExitValidation;
    }
}
