#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlspde/config.hpp"
#include "nlspde/error.hpp"
#include "nlspde/exec.hpp"
#include "nlspde/harness.hpp"
#include "nlspde/io.hpp"
#include "nlspde/lattice.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string report_format;
    CLI::Option* report = nullptr;
    nlspde::Overrides over;

    bool print_report() const { return report->count() > 0 || out.empty(); }
};

void add_common(CLI::App* app, Common& c, bool condition_flags) {
    app->add_option("--config", c.config, "TOML or JSON experiment file")->required()->check(CLI::ExistingFile);
    app->add_option("--out", c.out, "artifact directory");
    app->add_option("--seed", c.over.seed, "RNG seed override");
    app->add_option("--threads", c.threads, "OpenMP thread count (0 keeps the runtime default)");
    c.report = app->add_option("--report", c.report_format, "print the report to stdout (format: json)")
                   ->expected(0, 1)
                   ->check(CLI::IsMember({"json"}));
    app->add_option("--paths", c.over.paths, "Monte Carlo path count override");
    if (!condition_flags) return;
    app->add_option("--direction", c.over.direction, "forward or backward")
        ->check(CLI::IsMember({"forward", "backward"}));
    app->add_option("--kappa", c.over.kappa, "replace the condition by u(T) - kappa u(0)");
    app->add_option("--kernel", c.over.kernel, "CSV file with columns t,k0 for the time kernel");
    app->add_option("--masses", c.over.masses, "point masses as t:k,t:k");
    app->add_option("--method", c.over.method, "direct or neumann")->check(CLI::IsMember({"direct", "neumann"}));
    app->add_option("--tol", c.over.tol, "Neumann tolerance");
}

nlspde::ExperimentConfig prepare(const Common& c, const std::optional<std::string>& force_kind) {
    if (c.threads > 0) nlspde::set_threads(c.threads);
    const fs::path path(c.config);
    json doc = nlspde::load_document(path);
    if (force_kind) doc["kind"] = *force_kind;
    nlspde::apply_overrides(doc, c.over);
    return nlspde::parse_config(doc, path.parent_path());
}

std::optional<fs::path> out_dir(const Common& c) {
    if (c.out.empty()) return std::nullopt;
    return fs::path(c.out);
}

int emit(const json& report, const Common& c, const std::string& name) {
    if (auto dir = out_dir(c)) {
        fs::create_directories(*dir);
        nlspde::write_json(*dir / name, report);
    }
    if (c.print_report()) std::cout << report.dump(2) << "\n";
    return 0;
}

int run(const Common& c, const std::optional<std::string>& kind) {
    const nlspde::ExperimentConfig cfg = prepare(c, kind);
    if (!kind && (cfg.kind == nlspde::ProblemKind::Hedge || cfg.kind == nlspde::ProblemKind::Probe)) {
        throw nlspde::Error(nlspde::ErrorCode::Config, "kind: use the '" + nlspde::to_string(cfg.kind) +
                                                           "' subcommand for this problem kind");
    }
    const nlspde::RunResult r = nlspde::run_experiment(cfg, out_dir(c));
    if (c.print_report()) std::cout << r.report.dump(2) << "\n";
    const json& v = r.report.contains("solve") && r.report["solve"].contains("verdict") ? r.report["solve"]["verdict"]
                                                                                         : json();
    if (v.is_object()) std::cerr << "verdict: " << v.value("status", "") << "\n";
    std::cerr << "exit: " << r.exit_code << "\n";
    return r.exit_code;
}

int converge(const Common& c) {
    const nlspde::ExperimentConfig cfg = prepare(c, std::nullopt);
    const nlspde::ConvergenceTable t = nlspde::convergence_study(cfg.converge, cfg.theta);
    json report{{"convergence", t.to_json()}, {"config", cfg.doc}};
    json energy = json::array();
    for (const nlspde::EnergyRow& e : nlspde::energy_study(cfg.converge.levels, cfg.converge.base_n,
                                                           cfg.converge.base_steps, cfg.converge.k, cfg.theta)) {
        energy.push_back({{"n", e.n}, {"steps", e.steps}, {"first", e.first}, {"second", e.second}});
    }
    report["energy"] = energy;
    for (const nlspde::ConvergenceRow& row : t.rows) {
        std::cerr << "level " << row.level << "  n=" << row.n << "  K=" << row.steps << "  error "
                  << nlspde::format_double(row.error);
        if (row.level > 0) std::cerr << "  order " << nlspde::format_double(row.order);
        std::cerr << "\n";
    }
    return emit(report, c, "convergence.json");
}

int dump_lattice(const Common& c) {
    const nlspde::ExperimentConfig cfg = prepare(c, std::nullopt);
    const nlspde::NoiseLattice lat = nlspde::NoiseLattice::build(cfg.components, cfg.time, cfg.topology);
    return emit(nlspde::dump_lattice_json(lat), c, "lattice.json");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlocal-in-time parabolic PDE/SPDE solver"};
    app.require_subcommand(1);
    Common solve_c, hedge_c, probe_c, conv_c, dump_c;
    CLI::App* solve = app.add_subcommand("solve", "solve a PDE or SPDE with a nonlocal time condition");
    CLI::App* hedge = app.add_subcommand("hedge", "replicate a barrier-corridor claim on the price lattice");
    CLI::App* probe = app.add_subcommand("probe", "duality and Feynman-Kac martingale diagnostics");
    CLI::App* conv = app.add_subcommand("converge", "heat refinement study with observed orders");
    CLI::App* dump = app.add_subcommand("dump-lattice", "write the noise lattice as JSON");
    add_common(solve, solve_c, true);
    add_common(hedge, hedge_c, false);
    add_common(probe, probe_c, true);
    add_common(conv, conv_c, false);
    add_common(dump, dump_c, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : nlspde::kExitConfig;
    }
    try {
        if (*solve) return run(solve_c, std::nullopt);
        if (*hedge) return run(hedge_c, std::string("hedge"));
        if (*probe) return run(probe_c, std::string("probe"));
        if (*conv) return converge(conv_c);
        if (*dump) return dump_lattice(dump_c);
    } catch (const nlspde::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == nlspde::ErrorCode::Config ? nlspde::kExitConfig : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
