#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlspde/coefficients.hpp"
#include "nlspde/grid.hpp"
#include "nlspde/lattice.hpp"
#include "nlspde/nonlocal.hpp"
#include "nlspde/portfolio.hpp"

namespace nlspde {

enum class ProblemKind { ForwardPde, BackwardPde, ForwardSpde, BackwardSpde, Hedge, Probe };

std::string to_string(ProblemKind k);

/// Spatial data: zero, sine, constant, csv, or random-leaf (per-leaf noise).
struct DataSpec {
    std::string kind = "zero";
    double amplitude = 1.0;
    int mode = 1;
    std::filesystem::path path;
    std::string column;
    std::uint64_t seed = 0;
};

struct ProbeSpec {
    double kappa = 0.0;
    int paths = 10000;
    int substeps = 16;
    int checkpoints = 8;
    std::optional<Point> x;  // default: domain centre
    bool nonlocal = false;   // martingale test on the kappa solve instead of the Cauchy solve
    bool bridge = true;
};

struct HedgeSpec {
    int paths = 10000;
    int substeps = 16;
    int checkpoints = 8;
    int csv_paths = 1000;
    double amplitude = 0.01;
    bool bridge = true;
    std::optional<DataSpec> random_xi;
};

struct ConvergeSpec {
    int levels = 3;
    std::string refine = "both";  // both | time | space
    double k = 0.5;
    int base_n = 7;
    int base_steps = 8;
    int space_steps = 1024;       // fixed steps for space refinement
};

struct ExperimentConfig {
    nlohmann::json doc;
    std::filesystem::path base_dir;
    ProblemKind kind = ProblemKind::ForwardPde;
    std::vector<Axis> axes;
    bool allow_small = false;
    TimeGrid time;
    double theta = 1.0;
    CoefficientSet coeffs;
    int components = 1;
    Topology topology = Topology::Recombining;
    NonlocalCondition condition;
    DataSpec xi;
    DataSpec phi;
    std::vector<DataSpec> h;
    SolveOptions solve;
    std::uint64_t seed = 1;
    ProbeSpec probe;
    MarketParams market;
    HedgeSpec hedge;
    ConvergeSpec converge;

    Grid grid() const { return Grid::build(axes, allow_small); }
};

/// Field-level diagnostics are reported as ErrorCode::Config.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Command-line overrides merged into the document before parsing.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> direction;
    std::optional<double> kappa;
    std::optional<std::string> kernel;  // csv path for k0
    std::optional<std::string> masses;  // "t:k,t:k"
    std::optional<std::string> method;
    std::optional<double> tol;
    std::optional<int> paths;
};

void apply_overrides(nlohmann::json& doc, const Overrides& o);

/// Builders shared with the harness.
Vec sample_data(const DataSpec& d, const Grid& g, const std::filesystem::path& base_dir);
Mat sample_leaf_data(const DataSpec& d, const Grid& g, int leaves, const std::filesystem::path& base_dir);
KnotForcing sample_forcing(const DataSpec& d, const Grid& g, const TimeGrid& tg,
                           const std::filesystem::path& base_dir);

}  // namespace nlspde
