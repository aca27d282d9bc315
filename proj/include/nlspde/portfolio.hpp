#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <json.hpp>

#include "nlspde/duality.hpp"
#include "nlspde/model.hpp"
#include "nlspde/nonlocal.hpp"

namespace nlspde {

/// Two-driver market under the martingale measure with zero interest:
/// dS = S (a dt + sigma dw + sigma~ dw~), corridor D = (s_lower, s_upper).
struct MarketParams {
    std::function<double(double)> sigma = [](double) { return 0.2; };
    std::function<double(double)> sigma_tilde = [](double) { return 0.2; };
    std::function<double(double)> appreciation = [](double) { return 0.0; };
    double s0 = 1.0;
    double s_lower = 0.5;
    double s_upper = 2.0;
    double horizon = 1.0;
    /// Payoff increment; must vanish at both barriers.
    std::function<double(double)> xi = [](double) { return 0.0; };

    void validate() const;
};

/// xi(x) = amplitude sin(pi (x - s_lower) / (s_upper - s_lower)).
std::function<double(double)> sine_payoff(const MarketParams& mp, double amplitude);

/// b = (sigma^2 + sigma~^2) x^2 / 2, beta_1 = sigma x, non-divergence form.
CoefficientSet hedge_coefficients(const MarketParams& mp);

struct HedgeSolution {
    Model model;
    Mat xi;  // per leaf
    NonlocalSpdeResult result;
};

/// Backward SPDE with u(., T) = u(., 0) + xi. `xi_leaves` overrides the
/// deterministic payoff with a leaf field.
HedgeSolution solve_hedge_spde(const MarketParams& mp, int grid_nodes, const NoiseLattice& lat, double theta = 1.0,
                               const Mat* xi_leaves = nullptr, const SolveOptions& opt = {});

struct MarketOptions {
    int paths = 10000;
    std::uint64_t seed = 1;
    int substeps = 16;  // barrier checks per knot interval
    bool bridge = true; // log-price bridge crossing test between substeps
    Exec exec = Exec::Parallel;
};

/// Log-Euler price paths recorded on every knot, frozen after the first
/// substep that leaves the corridor or, with `bridge`, crosses a barrier
/// under the log-price bridge test. Paths carry snapped lattice branches of w.
FkPathBatch simulate_market(const MarketParams& mp, const TimeGrid& tg, const MarketOptions& opt);

/// max over nodes and leaves of |u(., T) - u(., 0) - xi|.
double stagnation_check(const SpdeSolution& u, const NoiseLattice& lat, const Mat& xi);

struct DeltaHedgeStats {
    int rebalances_per_step = 1;
    double mean = 0.0;
    double sd = 0.0;
};

struct HedgeReport {
    MartingaleReport martingale;  // of X(t) = u(S(t ^ tau), t ^ tau)
    double stagnation_residual = 0.0;
    std::vector<DeltaHedgeStats> delta_hedge;
    CouplingBias coupling;

    nlohmann::json to_json() const;
};

/// X(t, x) per path and checkpoint, plus its martingale report.
MartingaleReport wealth_process(const HedgeSolution& hs, const NoiseLattice& lat, const FkPathBatch& paths,
                                const std::vector<int>& checkpoints);
/// X values for one path on the batch's recorded knots.
std::vector<double> wealth_path(const HedgeSolution& hs, const NoiseLattice& lat, const FkPathBatch& paths, int path);

/// Terminal P&L of the self-financing account dX = du/dx(S, t) dS against
/// u(S(T ^ tau), T ^ tau); diagnostic only.
DeltaHedgeStats delta_hedge_residual(const HedgeSolution& hs, const MarketParams& mp, const NoiseLattice& lat,
                                     const MarketOptions& opt, int rebalances_per_step);

}  // namespace nlspde
