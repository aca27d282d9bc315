#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlspde/cauchy.hpp"
#include "nlspde/error.hpp"
#include "nlspde/lattice.hpp"
#include "nlspde/model.hpp"
#include "nlspde/spde.hpp"

namespace nlspde {

struct PointMass {
    double t = 0.0;
    double k = 0.0;
    std::optional<Mat> kernel;  // replaces k by a discrete spatial operator
};

/// Forward:  u(.,0) - Gamma u = xi.   Backward: u(.,T) - Gamma u = xi.
/// Gamma u = E[ int k0(t) u(.,t) dt + sum_i k_i u(.,t_i) ], trapezoid in time.
/// The kappa shortcut is a mass at the opposite end (T forward, 0 backward).
struct NonlocalCondition {
    Direction direction = Direction::Forward;
    std::vector<double> k0;      // per knot; empty means zero
    std::optional<Mat> k0_kernel;
    std::vector<PointMass> masses;
    std::optional<double> kappa;

    static NonlocalCondition with_kappa(Direction direction, double kappa);
    /// int |k0| + sum |k_i| (+ |kappa|).
    double kernel_mass(const TimeGrid& tg) const;
    bool has_spatial_kernel() const;
    void validate(const TimeGrid& tg, int grid_size) const;
};

/// Gamma applied to per-knot (mean) values.
Vec apply_gamma(const NonlocalCondition& cond, const TimeGrid& tg, const std::vector<Vec>& knot_values);
Vec apply_gamma(const NonlocalCondition& cond, const Trajectory& u, const TimeGrid& tg);
/// Expectation over the lattice is taken first.
Vec apply_gamma(const NonlocalCondition& cond, const AdaptedField& u, const NoiseLattice& lat);

/// Columns: Gamma of the zero-forcing Cauchy solve from e_j.
Mat assemble_Q(const NonlocalCondition& cond, const Model& m, Exec exec = Exec::Parallel);
/// Gamma of the zero-datum solve with forcing phi.
Vec assemble_T_rhs(const NonlocalCondition& cond, const Model& m, const KnotForcing& phi);

struct NeumannResult {
    Vec x;
    int iterations = 0;
    bool converged = false;
};

/// sum_m Q^m rhs, stopped once the remaining tail is bounded by tol.
/// Throws NeumannDivergence when the spectral norm of Q is not below 1.
NeumannResult neumann_iterate(const Mat& Q, const Vec& rhs, double tol = 1e-10, int max_iter = 10000);

/// Singular values in decreasing order.
Vec singular_value_report(const Mat& Q);

enum class VerdictStatus {
    GuaranteedSmallNorm,
    GuaranteedKernelMass,
    GuaranteedKappa,
    FredholmNumeric,
    SingularDetected,
};

std::string to_string(VerdictStatus s);

struct SolveVerdict {
    VerdictStatus status = VerdictStatus::FredholmNumeric;
    std::string certificate;  // which solvability criterion certified the solve
    bool kappa_form = false;
    bool kappa_guaranteed = false;  // false with kappa_form means NotGuaranteedKappa
    double q_norm = 0.0;
    double kernel_mass = 0.0;
    std::optional<double> kappa;
    double min_sigma = 0.0;  // of I - Q
    double max_lambda = 0.0; // sampled zero-order coefficient of the relevant form
    std::vector<std::string> notes;

    bool guaranteed() const {
        return status == VerdictStatus::GuaranteedSmallNorm || status == VerdictStatus::GuaranteedKernelMass ||
               status == VerdictStatus::GuaranteedKappa;
    }
    nlohmann::json to_json() const;
};

inline constexpr double kSingularThreshold = 1e-10;

SolveVerdict verdict(const NonlocalCondition& cond, const Model& m, const Mat& Q);

class SingularError : public Error {
public:
    explicit SingularError(SolveVerdict v)
        : Error(ErrorCode::Singular, "I - Q is numerically singular (min singular value " +
                                         std::to_string(v.min_sigma) + ")"),
          verdict_(std::move(v)) {}
    const SolveVerdict& verdict() const { return verdict_; }

private:
    SolveVerdict verdict_;
};

enum class SolveMethod { Direct, Neumann };

struct SolveOptions {
    SolveMethod method = SolveMethod::Direct;
    double tol = 1e-10;
    int max_iter = 10000;
    Exec exec = Exec::Parallel;
};

struct SolveReport {
    SolveVerdict verdict;
    SolveMethod method = SolveMethod::Direct;
    int iterations = 0;
    double residual_h0 = 0.0;   // worst over leaves for stochastic data
    double residual_max = 0.0;  // worst nodal absolute value
    nlohmann::json to_json() const;
};

struct NonlocalPdeResult {
    Trajectory u;
    Vec datum;
    SolveReport report;
};

struct NonlocalSpdeResult {
    SpdeSolution u;
    Mat datum;  // per leaf (backward) or one column (forward)
    SolveReport report;
};

/// Deterministic problem: the datum solves (I - Q) datum = xi + T phi.
NonlocalPdeResult solve_nonlocal(const NonlocalCondition& cond, const Model& m, const KnotForcing& phi,
                                 const Vec& xi, const SolveOptions& opt = {});

/// Backward SPDE with a leaf field xi: datum = Phi0 + xi where
/// (I - Q) Phi0 = Gamma u^{xi, phi} and u^{xi, phi} solves with datum xi.
NonlocalSpdeResult solve_nonlocal_backward_spde(const NonlocalCondition& cond, const Model& m,
                                                const NoiseLattice& lat, const Forcing& phi,
                                                const Mat& xi, const SolveOptions& opt = {});

/// Forward SPDE with deterministic xi; Gamma sees only the lattice mean.
NonlocalSpdeResult solve_nonlocal_forward_spde(const NonlocalCondition& cond, const Model& m,
                                               const NoiseLattice& lat, const Forcing& phi,
                                               const std::vector<Forcing>& h, const Vec& xi,
                                               const SolveOptions& opt = {});

}  // namespace nlspde
