#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "nlspde/coefficients.hpp"
#include "nlspde/grid.hpp"

namespace nlspde {

enum class OperatorKind { A, B, AStar, BStar };

struct OperatorTag {
    OperatorKind kind = OperatorKind::A;
    int component = -1;  // noise component for B / B*
    double time = 0.0;
};

/// Sparse M x M realization of a differential operator on the interior
/// nodes. Immutable after assembly.
struct OperatorMatrix {
    SpMat matrix;
    double weight = 1.0;  // discrete H0 quadrature weight
    OperatorTag tag;
};

/// Second-order central finite differences; Dirichlet rows eliminated.
OperatorMatrix assemble_A(const CoefficientSet& c, const Grid& g, double t);

/// B_i v = beta_i . grad v + beta_bar_i v with central first differences.
/// `enforce_boundary_vanishing` checks beta_i = 0 on the boundary.
OperatorMatrix assemble_B(const CoefficientSet& c, const Grid& g, double t, int i,
                          bool enforce_boundary_vanishing = false);

struct AdjointSet {
    OperatorMatrix a_star;
    std::vector<OperatorMatrix> b_star;
};

/// A* and B_i* from their own differential formulas (not by transposition):
/// A* u = sum d_ij(b_ij u) - div(f~ u) + lambda~ u (non-divergence input) or
/// the flux form with -div(f u) (divergence input); B_i* u = -div(beta_i u) + beta_bar_i u.
AdjointSet assemble_adjoints(const CoefficientSet& c, const Grid& g, double t);

struct CoercivityReport {
    double margin = 0.0;          // exact min eigenvalue of b - 1/2 sum beta beta^T
    double sampled_margin = 0.0;  // min over basis and random unit directions
    double claimed = 0.0;
    bool pass = false;
    Point worst_point{};
    double worst_time = 0.0;
};

CoercivityReport check_coercivity(const CoefficientSet& c, const Grid& g,
                                  std::span<const double> times,
                                  int random_directions = 64, std::uint64_t seed = 12345);

/// A(.) or B_i(.) realized on every knot of a time grid. Autonomous
/// coefficients store a single matrix.
class OperatorSequence {
public:
    OperatorSequence() = default;
    OperatorSequence(std::vector<OperatorMatrix> ops, bool autonomous);

    static OperatorSequence generator(const CoefficientSet& c, const Grid& g, const TimeGrid& tg);
    static OperatorSequence noise(const CoefficientSet& c, const Grid& g, const TimeGrid& tg, int i);
    static OperatorSequence generator_adjoint(const CoefficientSet& c, const Grid& g,
                                              const TimeGrid& tg);
    static OperatorSequence noise_adjoint(const CoefficientSet& c, const Grid& g,
                                          const TimeGrid& tg, int i);

    const SpMat& at(int k) const { return ops_[autonomous_ ? 0 : k].matrix; }
    const OperatorMatrix& op(int k) const { return ops_[autonomous_ ? 0 : k]; }
    /// Identity key for factorization caching.
    int id(int k) const { return autonomous_ ? 0 : k; }
    bool autonomous() const { return autonomous_; }
    bool empty() const { return ops_.empty(); }
    int size() const { return ops_.empty() ? 0 : static_cast<int>(ops_.front().matrix.rows()); }

private:
    std::vector<OperatorMatrix> ops_;
    bool autonomous_ = true;
};

}  // namespace nlspde
