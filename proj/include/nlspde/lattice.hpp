#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "nlspde/exec.hpp"
#include "nlspde/grid.hpp"

namespace nlspde {

/// Recombining: nodes keyed by per-component up-counts, (k+1)^N at step k;
/// needs a uniform time grid so that w is a function of the node.
/// Tree: one node per branch history, 2^{Nk} at step k; needed for
/// path-dependent payloads such as forward SPDEs with noise.
enum class Topology { Recombining, Tree };

/// Symmetric binary noise: at every step each component moves by
/// +-sqrt(dt_k) with probability 1/2, independently across components.
/// Branch b in [0, 2^N) moves component j up iff bit j of b is set.
class NoiseLattice {
public:
    static constexpr std::int64_t kNodeGuard = 1'000'000;

    static NoiseLattice build(int components, const TimeGrid& tg,
                              Topology topology = Topology::Recombining);

    int components() const { return n_; }
    int steps() const { return tg_.steps(); }
    int branches() const { return 1 << n_; }
    Topology topology() const { return topology_; }
    const TimeGrid& time_grid() const { return tg_; }

    int nodes(int k) const { return counts_[k]; }
    std::int64_t total_nodes() const;
    int child(int k, int node, int branch) const;
    double increment(int k, int branch, int j) const;
    double branch_probability() const { return 1.0 / branches(); }
    /// Probability of reaching a node from the root.
    double probability(int k, int node) const { return prob_[k][node]; }
    /// w_j at a node.
    double w(int k, int node, int j) const { return w_[k](j, node); }
    /// Per-component up-counts (recombining) or branch history (tree).
    std::vector<int> state(int k, int node) const;

private:
    int n_ = 1;
    TimeGrid tg_;
    Topology topology_ = Topology::Recombining;
    std::vector<int> counts_;
    std::vector<std::vector<double>> prob_;
    std::vector<Mat> w_;  // N x nodes(k)
};

/// Values per (step, node); step k holds an M x nodes(k) matrix, empty when
/// undefined. A value at step k is indexed only by the step-k node.
class AdaptedField {
public:
    AdaptedField() = default;
    AdaptedField(const NoiseLattice& lat, int rows);

    int rows() const { return rows_; }
    int steps() const { return static_cast<int>(values_.size()) - 1; }
    bool defined(int k) const { return values_[k].size() > 0; }
    const Mat& at(int k) const { return values_[k]; }
    Mat& at(int k) { return values_[k]; }
    auto value(int k, int node) const { return values_[k].col(node); }
    void set(int k, Mat m);
    /// Same deterministic vector at every node of step k.
    void fill(int k, const Vec& v, int nodes);

private:
    int rows_ = 0;
    std::vector<Mat> values_;
};

/// E_k[X] for X given at step k+1.
Mat step_expectation(const NoiseLattice& lat, int k, const Mat& next, Exec exec = Exec::Parallel);

/// E_{k1}[X] for X defined at step k2 > k1, exact lattice averaging with
/// compensated sums in fixed branch order.
Mat conditional_expectation(const NoiseLattice& lat, const AdaptedField& field, int k2, int k1,
                            Exec exec = Exec::Parallel);

/// Lattice mean E[X] of a field defined at step k.
Vec mean(const NoiseLattice& lat, const Mat& values, int k);

/// I_k = sum_{m<k} zeta_m dw_j(m), left-point evaluation. Steps 0..k of the
/// result are defined. On recombining lattices every merge is checked and a
/// path-dependent integral raises ErrorCode::PathDependent.
AdaptedField stochastic_integral(const NoiseLattice& lat, const AdaptedField& integrand, int j,
                                 int k);

struct MartingalePart {
    Mat mean;              // E_k[X], M x nodes(k)
    std::vector<Mat> chi;  // per component, M x nodes(k)
    double residual = 0.0; // max |X - E_k X - sum chi_j dw_j| over branches
};

/// Discrete martingale representation of X given at step k+1.
MartingalePart martingale_part(const NoiseLattice& lat, int k, const Mat& next,
                               Exec exec = Exec::Parallel);

/// Steps, nodes, parent links and probabilities.
nlohmann::json dump_lattice_json(const NoiseLattice& lat);

}  // namespace nlspde
