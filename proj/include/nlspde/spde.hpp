#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include <json.hpp>

#include "nlspde/cauchy.hpp"
#include "nlspde/lattice.hpp"
#include "nlspde/model.hpp"

namespace nlspde {

/// Right-hand side term that is either zero, deterministic per knot, or an
/// adapted lattice field.
class Forcing {
public:
    Forcing() = default;
    static Forcing deterministic(KnotForcing values);
    static Forcing adapted(AdaptedField field);

    bool zero() const { return knots_.empty() && !field_; }
    bool is_adapted() const { return field_.has_value(); }
    /// Value at (step k, node); requires !zero().
    Vec value(int k, int node) const;

private:
    KnotForcing knots_;
    std::optional<AdaptedField> field_;
};

struct SpdeSolution {
    AdaptedField u;
    std::vector<AdaptedField> chi;  // backward problems only, steps 0..K-1
    Direction direction = Direction::Forward;
    double reconstruction_residual = 0.0;
};

/// u_{k+1} = (I - th dt A_{k+1})^{-1} [(I + (1-th) dt A_k) u_k + dt phi_k
///           + sum_i (B_i u_k + h_{i,k}) dw_i]   per branch.
/// Recombining lattices accept only path-independent results.
SpdeSolution solve_forward_spde(const Model& m, const NoiseLattice& lat, const Vec& u0,
                                const Forcing& phi = {}, const std::vector<Forcing>& h = {},
                                Exec exec = Exec::Parallel);

/// Dynamic programming per step-k node: chi from the martingale part of
/// u_{k+1}, then
///   (I - th dt A_k) u_k = (I + (1-th) dt A_{k+1}) E_k u_{k+1} + dt phi_k + dt sum_i B_i chi_i.
SpdeSolution solve_backward_spde(const Model& m, const NoiseLattice& lat, const Mat& terminal,
                                 const Forcing& phi = {}, Exec exec = Exec::Parallel);

/// Max over paths between knots k1 < k2 of the H0 norm of the discrete
/// integral identity residual. The explicit part of backward steps is
/// evaluated at E_k u_{k+1}, as in the scheme.
double definition_residual(const SpdeSolution& sol, const Model& m, const NoiseLattice& lat,
                           int k1, int k2, const Forcing& phi = {},
                           const std::vector<Forcing>& h = {});

/// Rows: step, node, grid index, u, chi_1..chi_N.
void write_solution_csv(std::ostream& out, const SpdeSolution& sol, const NoiseLattice& lat);
nlohmann::json solution_summary(const SpdeSolution& sol, const Model& m, const NoiseLattice& lat);

}  // namespace nlspde
