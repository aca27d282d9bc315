#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SparseLU>

#include "nlspde/exec.hpp"
#include "nlspde/grid.hpp"
#include "nlspde/operators.hpp"

namespace nlspde {

enum class Direction { Forward, Backward };

/// Forcing sampled per knot; an empty vector means zero forcing.
using KnotForcing = std::vector<Vec>;

/// Solution values on every knot of a time grid.
struct Trajectory {
    std::vector<Vec> values;
    std::vector<double> times;
    Direction direction = Direction::Forward;
    double theta = 1.0;
    std::string scheme = "theta";

    int knots() const { return static_cast<int>(values.size()); }
    const Vec& at(int k) const { return values[k]; }
    const Vec& front() const { return values.front(); }
    const Vec& back() const { return values.back(); }
};

/// theta-scheme building blocks for the step k <-> k+1 of
///   forward:  (I - th dt A_{k+1}) u_{k+1} = (I + (1-th) dt A_k) u_k + ...
///   backward: (I - th dt A_k) u_k = (I + (1-th) dt A_{k+1}) u_{k+1} + ...
/// Sparse LU factorizations are built once per distinct (operator, th*dt)
/// pair at construction and shared read-only afterwards.
class ThetaStepper {
public:
    ThetaStepper(const OperatorSequence& a, const TimeGrid& tg, double theta);

    int size() const { return size_; }
    double theta() const { return theta_; }
    const TimeGrid& time_grid() const { return tg_; }
    const OperatorSequence& generator() const { return a_; }

    Vec explicit_forward(int k, const Vec& u) const;
    Vec explicit_backward(int k, const Vec& u_next) const;
    Vec solve_forward(int k, const Vec& rhs) const;
    Vec solve_backward(int k, const Vec& rhs) const;

    std::size_t factorization_count() const { return factors_.size(); }

private:
    using Factor = Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>>;
    const Factor& factor(int op_id, double dt) const;
    void ensure_factor(int op_id, double dt, int knot);

    OperatorSequence a_;
    TimeGrid tg_;
    double theta_ = 1.0;
    int size_ = 0;
    std::map<std::pair<int, double>, std::shared_ptr<const Factor>> factors_;
};

Trajectory solve_forward_cauchy(const ThetaStepper& stepper, const KnotForcing& phi,
                                const Vec& u0);
Trajectory solve_backward_cauchy(const ThetaStepper& stepper, const KnotForcing& phi,
                                 const Vec& terminal);

/// Dense matrix of the datum-to-solution map between knots `from` and `to`
/// (forward: u(to) from u(from); backward: u(from) from u(to)), phi = 0.
Mat propagator_matrix(const ThetaStepper& stepper, Direction direction, Exec exec = Exec::Parallel,
                      int from = 0, int to = -1);

inline constexpr int kDenseGuard = 4096;

struct EnergyReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;  // empirical constant; 0 when rhs == 0
};

/// max_k ||u_k||_H0^2 + sum dt ||u_k||_H1^2  against  sum dt ||phi_k||_H-1^2 + ||datum||_H0^2.
EnergyReport energy_report_first(const Grid& g, const Trajectory& u, const KnotForcing& phi,
                                 const Vec& datum);
/// max_k ||u_k||_H1^2 + sum dt ||u_k||_H2^2  against  sum dt ||phi_k||_H0^2 + ||datum||_H1^2.
EnergyReport energy_report_second(const Grid& g, const Trajectory& u, const KnotForcing& phi,
                                  const Vec& datum);

}  // namespace nlspde
