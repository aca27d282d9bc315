#include "nlspde/cauchy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nlspde/error.hpp"

namespace nlspde {

namespace {

void check_finite(const Vec& v, int knot) {
    if (!v.allFinite()) {
        throw Error(ErrorCode::NonFinite, "non-finite solution values at knot " + std::to_string(knot));
    }
}

}  // namespace

ThetaStepper::ThetaStepper(const OperatorSequence& a, const TimeGrid& tg, double theta)
    : a_(a), tg_(tg), theta_(theta), size_(a.size()) {
    require(theta >= 0.5 && theta <= 1.0, ErrorCode::InvalidArgument,
            "theta must lie in [1/2, 1]");
    require(!a.empty(), ErrorCode::InvalidArgument, "empty operator sequence");
    for (int k = 0; k < tg_.steps(); ++k) {
        ensure_factor(a_.id(k + 1), tg_.dt(k), k + 1);
        ensure_factor(a_.id(k), tg_.dt(k), k);
    }
}

void ThetaStepper::ensure_factor(int op_id, double dt, int knot) {
    const auto key = std::make_pair(op_id, theta_ * dt);
    if (factors_.count(key)) return;
    SpMat lhs = -(theta_ * dt) * a_.at(knot);
    for (int i = 0; i < size_; ++i) lhs.coeffRef(i, i) += 1.0;
    lhs.makeCompressed();
    auto lu = std::make_shared<Factor>();
    lu->analyzePattern(lhs);
    lu->factorize(lhs);
    if (lu->info() != Eigen::Success) {
        throw Error(ErrorCode::SingularStep,
                    "singular step matrix at knot " + std::to_string(knot) + ": " + lu->lastErrorMessage());
    }
    factors_.emplace(key, std::move(lu));
}

const ThetaStepper::Factor& ThetaStepper::factor(int op_id, double dt) const {
    return *factors_.at(std::make_pair(op_id, theta_ * dt));
}

Vec ThetaStepper::explicit_forward(int k, const Vec& u) const {
    if (theta_ == 1.0) return u;
    return u + ((1.0 - theta_) * tg_.dt(k)) * (a_.at(k) * u);
}

Vec ThetaStepper::explicit_backward(int k, const Vec& u_next) const {
    if (theta_ == 1.0) return u_next;
    return u_next + ((1.0 - theta_) * tg_.dt(k)) * (a_.at(k + 1) * u_next);
}

Vec ThetaStepper::solve_forward(int k, const Vec& rhs) const {
    Vec out = factor(a_.id(k + 1), tg_.dt(k)).solve(rhs);
    check_finite(out, k + 1);
    return out;
}

Vec ThetaStepper::solve_backward(int k, const Vec& rhs) const {
    Vec out = factor(a_.id(k), tg_.dt(k)).solve(rhs);
    check_finite(out, k);
    return out;
}

namespace {

void check_forcing(const KnotForcing& phi, const ThetaStepper& s) {
    if (phi.empty()) return;
    require(static_cast<int>(phi.size()) == s.time_grid().steps() + 1, ErrorCode::InvalidArgument,
            "forcing must be sampled on every knot");
    for (const Vec& v : phi) {
        require(v.size() == s.size(), ErrorCode::InvalidArgument, "forcing has wrong length");
    }
}

Trajectory empty_trajectory(const ThetaStepper& s, Direction dir) {
    Trajectory tr;
    tr.direction = dir;
    tr.theta = s.theta();
    tr.times = s.time_grid().knots();
    tr.values.resize(tr.times.size());
    return tr;
}

}  // namespace

Trajectory solve_forward_cauchy(const ThetaStepper& s, const KnotForcing& phi, const Vec& u0) {
    require(u0.size() == s.size(), ErrorCode::InvalidArgument, "initial datum has wrong length");
    check_forcing(phi, s);
    Trajectory tr = empty_trajectory(s, Direction::Forward);
    tr.values[0] = u0;
    for (int k = 0; k < s.time_grid().steps(); ++k) {
        Vec rhs = s.explicit_forward(k, tr.values[k]);
        if (!phi.empty()) rhs += s.time_grid().dt(k) * phi[k];
        tr.values[k + 1] = s.solve_forward(k, rhs);
    }
    return tr;
}

Trajectory solve_backward_cauchy(const ThetaStepper& s, const KnotForcing& phi, const Vec& terminal) {
    require(terminal.size() == s.size(), ErrorCode::InvalidArgument, "terminal datum has wrong length");
    check_forcing(phi, s);
    Trajectory tr = empty_trajectory(s, Direction::Backward);
    const int K = s.time_grid().steps();
    tr.values[K] = terminal;
    for (int k = K - 1; k >= 0; --k) {
        Vec rhs = s.explicit_backward(k, tr.values[k + 1]);
        if (!phi.empty()) rhs += s.time_grid().dt(k) * phi[k];
        tr.values[k] = s.solve_backward(k, rhs);
    }
    return tr;
}

Mat propagator_matrix(const ThetaStepper& s, Direction direction, Exec exec, int from, int to) {
    const int M = s.size();
    require(M <= kDenseGuard, ErrorCode::Guard,
            "dense propagator needs M <= " + std::to_string(kDenseGuard));
    if (to < 0) to = s.time_grid().steps();
    require(0 <= from && from <= to && to <= s.time_grid().steps(), ErrorCode::InvalidArgument,
            "propagator knot range out of bounds");
    Mat P(M, M);
    auto column = [&](int j) {
        Vec v = Vec::Unit(M, j);
        if (direction == Direction::Forward) {
            for (int k = from; k < to; ++k) v = s.solve_forward(k, s.explicit_forward(k, v));
        } else {
            for (int k = to - 1; k >= from; --k) v = s.solve_backward(k, s.explicit_backward(k, v));
        }
        P.col(j) = v;
    };
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < M; ++j) column(j);
    } else {
        for (int j = 0; j < M; ++j) column(j);
    }
    return P;
}

namespace {

// Knots carrying the implicit (dissipative) part of each step.
std::vector<std::pair<int, double>> dissipation_knots(const Trajectory& u) {
    std::vector<std::pair<int, double>> out;
    const int K = u.knots() - 1;
    for (int k = 0; k < K; ++k) {
        const double dt = u.times[k + 1] - u.times[k];
        out.emplace_back(u.direction == Direction::Forward ? k + 1 : k, dt);
    }
    return out;
}

double forcing_energy(const Trajectory& u, const KnotForcing& phi,
                      double (*norm)(const Grid&, const Vec&), const Grid& g) {
    if (phi.empty()) return 0.0;
    double sum = 0.0;
    for (auto [k, dt] : dissipation_knots(u)) {
        const int src = u.direction == Direction::Forward ? k - 1 : k;
        const double n = norm(g, phi[src]);
        sum += dt * n * n;
    }
    return sum;
}

EnergyReport finish(double lhs, double rhs) {
    EnergyReport r;
    r.lhs = lhs;
    r.rhs = rhs;
    r.ratio = rhs > 0.0 ? lhs / rhs : 0.0;
    return r;
}

}  // namespace

EnergyReport energy_report_first(const Grid& g, const Trajectory& u, const KnotForcing& phi,
                                 const Vec& datum) {
    double peak = 0.0;
    for (const Vec& v : u.values) peak = std::max(peak, std::pow(norm_h0(g, v), 2));
    double dissipation = 0.0;
    for (auto [k, dt] : dissipation_knots(u)) dissipation += dt * std::pow(norm_h1(g, u.values[k]), 2);
    const double rhs = forcing_energy(u, phi, norm_hminus1, g) + std::pow(norm_h0(g, datum), 2);
    return finish(peak + dissipation, rhs);
}

EnergyReport energy_report_second(const Grid& g, const Trajectory& u, const KnotForcing& phi,
                                  const Vec& datum) {
    double peak = 0.0;
    for (const Vec& v : u.values) peak = std::max(peak, std::pow(norm_h1(g, v), 2));
    double dissipation = 0.0;
    for (auto [k, dt] : dissipation_knots(u)) dissipation += dt * std::pow(norm_h2(g, u.values[k]), 2);
    const double rhs = forcing_energy(u, phi, norm_h0, g) + std::pow(norm_h1(g, datum), 2);
    return finish(peak + dissipation, rhs);
}

}  // namespace nlspde
