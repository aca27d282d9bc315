#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlspde/config.hpp"

namespace nlspde {

enum ExitStatus : int {
    kExitOk = 0,
    kExitNotGuaranteed = 2,
    kExitSingular = 3,
    kExitResidualBreach = 4,
    kExitConfig = 5,
};

struct RunResult {
    int exit_code = kExitOk;
    nlohmann::json report;
};

/// Runs one configured experiment; artifacts go to `out_dir` when given.
/// Reports carry no timings so identical inputs give identical bytes.
RunResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir = {});

struct ConvergenceRow {
    int level = 0;
    int n = 0;
    int steps = 0;
    double h = 0.0;
    double dt = 0.0;
    double error = 0.0;
    double order = 0.0;  // log2 ratio against the previous level; NaN on level 0
};

struct ConvergenceTable {
    std::string refine;
    double theta = 1.0;
    double k = 0.5;
    std::vector<ConvergenceRow> rows;

    nlohmann::json to_json() const;
};

/// Heat equation on (0, pi), T = 1, condition u(., 0) - k u(., T) = xi with
/// xi = (1 - k e^{-1}) sin x, so u = e^{-t} sin x. Errors are max over knots
/// of the H0 error against the continuum solution ("both", "space") or the
/// exact-in-time semi-discrete solution ("time").
ConvergenceTable convergence_study(const ConvergeSpec& study, double theta);

struct EnergyRow {
    int n = 0;
    int steps = 0;
    double first = 0.0;   // empirical constant of the first energy inequality
    double second = 0.0;  // of the second
};

/// Forward heat k-condition with forcing sin x and xi = sin x + sin(2x)/2 on
/// successively halved meshes.
std::vector<EnergyRow> energy_study(int levels, int base_n, int base_steps, double k, double theta);

}  // namespace nlspde
