#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "nlspde/cauchy.hpp"
#include "nlspde/lattice.hpp"
#include "nlspde/model.hpp"
#include "nlspde/spde.hpp"

namespace nlspde {

/// A* realized on every knot with its own theta-stepper.
struct AdjointContext {
    OperatorSequence a_star;
    ThetaStepper stepper;

    static AdjointContext build(const Model& m);
};

/// p(s) = rho, p_{k+1} = (I + (1-th) dt A*_{k+1}) (I - th dt A*_k)^{-1} p_k,
/// the exact discrete adjoint of the backward theta step. The returned
/// trajectory covers knots s..K. B* terms drop out of the mean.
Trajectory solve_adjoint_forward(const AdjointContext& adj, const Vec& rho, int s = 0);

/// ||Q - W^{-1} R^T W||_F / ||Q||_F for the backward kappa condition,
/// R: rho -> kappa p(., T). Zero when Q vanishes.
double duality_residual(const Model& m, const AdjointContext& adj, double kappa, Exec exec = Exec::Parallel);

struct FkOptions {
    int paths = 10000;
    std::uint64_t seed = 1;
    int substeps = 16;             // Euler steps per knot interval
    std::vector<int> record_knots; // empty: every knot from s on
    bool bridge = true;            // Brownian-bridge crossing test between substeps
    Exec exec = Exec::Parallel;
};

/// Euler paths of dy = f~ dt + sum_i beta_i dw_i + sum_j beta~_j dw~_j with
/// beta~ the symmetric square root of 2b - sum_i beta_i beta_i^T, started at
/// x at knot s. Exit is the first Euler step that leaves the closed domain
/// or, with `bridge`, crosses a wall under the Brownian-bridge test with the
/// local variance; bridge exits are placed on the crossed wall. The state and the
/// weight gamma = exp(int lambda~) freeze there; A carries +lambda~ u, so gamma
/// discounts when lambda~ <= 0.
struct FkPathBatch {
    int paths = 0;
    std::uint64_t seed = 0;
    int start_knot = 0;
    int dim = 1;
    int components = 0;
    int steps = 0;                        // knot intervals simulated
    std::vector<int> knots;               // recorded knots
    std::vector<double> y;                // [path][record][dim]
    std::vector<double> gamma;            // [path][record]
    std::vector<char> alive;              // [path][record], 1 while inside
    std::vector<double> exit_time;        // +inf when the path stays inside
    std::vector<std::uint8_t> branches;   // [path][step since s], snapped lattice branch
    std::vector<double> w_gap;            // [path], |w - snapped lattice w| summed over components at T

    int records() const { return static_cast<int>(knots.size()); }
    Point state(int path, int r) const;
    double weight(int path, int r) const { return gamma[static_cast<std::size_t>(path) * records() + r]; }
    bool inside(int path, int r) const { return alive[static_cast<std::size_t>(path) * records() + r]; }
    int branch(int path, int step) const;
    double exit_fraction() const;
};

FkPathBatch fk_simulate(const Model& m, const Point& x, int s, const FkOptions& opt);

struct MartingaleReport {
    std::vector<int> knots;
    std::vector<double> times;
    std::vector<double> m;       // estimate of E[gamma u(y)] at each checkpoint
    std::vector<double> diff;    // m(t) - m(s)
    std::vector<double> se;      // standard error of the per-path difference
    double max_deviation = 0.0;
    double worst_ratio = 0.0;    // max |diff| / (3 se)
    bool pass = false;

    nlohmann::json to_json() const;
};

/// Checkpoints must be recorded knots; the first recorded knot is s.
MartingaleReport martingale_test(const Model& m, const Trajectory& u, const FkPathBatch& batch,
                                 const std::vector<int>& checkpoints);
/// u on the lattice: each path reads u at the node reached by its snapped branches.
MartingaleReport martingale_test(const Model& m, const SpdeSolution& u, const NoiseLattice& lat,
                                 const FkPathBatch& batch, const std::vector<int>& checkpoints);

/// Lattice node reached by a path's snapped branches at knot k >= s.
int snapped_node(const NoiseLattice& lat, const FkPathBatch& batch, int path, int k);

struct CouplingBias {
    double mean_gap = 0.0;  // mean over paths of |w(T) - lattice w(T)|
    double rms_gap = 0.0;
};

CouplingBias coupling_bias(const FkPathBatch& batch);

}  // namespace nlspde
