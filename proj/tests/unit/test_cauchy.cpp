#include <cmath>
#include <numbers>

#include <doctest.h>

#include "nlspde/cauchy.hpp"
#include "nlspde/error.hpp"
#include "nlspde/model.hpp"

using namespace nlspde;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kOneStep = 0.5523124171952958;  // 1 / (1 + 8 / pi^2)

Model single_node(int steps = 1, double theta = 1.0) {
    return Model::assemble(Grid::interval(0.0, kPi, 1, true), TimeGrid::uniform(1.0, steps), heat_coefficients(1.0),
                           theta);
}

Model heat(int n, int steps, double theta) {
    return Model::assemble(Grid::interval(0.0, kPi, n), TimeGrid::uniform(1.0, steps), heat_coefficients(1.0), theta);
}

}  // namespace

TEST_CASE("zero data give the zero trajectory") {
    const Model m = heat(15, 8, 1.0);
    const Trajectory f = solve_forward_cauchy(m.stepper, {}, Vec::Zero(m.size()));
    const Trajectory b = solve_backward_cauchy(m.stepper, {}, Vec::Zero(m.size()));
    for (int k = 0; k <= 8; ++k) {
        CHECK(f.values[k].cwiseAbs().maxCoeff() == 0.0);
        CHECK(b.values[k].cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("single-node implicit step") {
    const Model m = single_node();
    const Trajectory f = solve_forward_cauchy(m.stepper, {}, Vec::Ones(1));
    CHECK(f.back()[0] == doctest::Approx(kOneStep).epsilon(1e-14));
    const Trajectory b = solve_backward_cauchy(m.stepper, {}, Vec::Ones(1));
    CHECK(b.front()[0] == doctest::Approx(kOneStep).epsilon(1e-14));
    const KnotForcing phi(2, Vec::Ones(1));
    const Trajectory bf = solve_backward_cauchy(m.stepper, phi, Vec::Zero(1));
    CHECK(bf.front()[0] == doctest::Approx(kOneStep).epsilon(1e-14));
}

TEST_CASE("mode decay matches the per-mode recursion") {
    for (double theta : {1.0, 0.5, 0.75}) {
        const int n = 31, K = 16;
        const Model m = heat(n, K, theta);
        const double h = m.grid.h(0), dt = 1.0 / K;
        const double lam = -(4.0 / (h * h)) * std::pow(std::sin(h / 2.0), 2);
        const double g = (1.0 + (1.0 - theta) * dt * lam) / (1.0 - theta * dt * lam);
        const Vec s = sample_nodes(m.grid, [](const Point& x) { return std::sin(x[0]); });
        const Trajectory u = solve_forward_cauchy(m.stepper, {}, s);
        for (int k = 0; k <= K; ++k) CHECK((u.values[k] - std::pow(g, k) * s).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("propagator matrix") {
    const Model m = heat(15, 8, 1.0);
    const Mat I = propagator_matrix(m.stepper, Direction::Forward, Exec::Serial, 3, 3);
    CHECK((I - Mat::Identity(15, 15)).cwiseAbs().maxCoeff() == 0.0);

    const Mat P = propagator_matrix(m.stepper, Direction::Forward, Exec::Serial);
    CHECK((P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    const Mat Pp = propagator_matrix(m.stepper, Direction::Forward, Exec::Parallel);
    CHECK((P - Pp).cwiseAbs().maxCoeff() == 0.0);

    const Vec x = Vec::LinSpaced(15, -1.0, 1.0);
    CHECK((P * x - solve_forward_cauchy(m.stepper, {}, x).back()).cwiseAbs().maxCoeff() <= 1e-13);

    const Model s = single_node();
    CHECK(propagator_matrix(s.stepper, Direction::Backward)(0, 0) == doctest::Approx(kOneStep).epsilon(1e-14));
}

TEST_CASE("factorizations are shared across equal steps") {
    const Model m = heat(15, 32, 1.0);
    CHECK(m.stepper.factorization_count() == 1);
    const TimeGrid tg = TimeGrid::from_knots({0.0, 0.25, 0.5, 1.0});
    const Model nu = Model::assemble(Grid::interval(0.0, kPi, 7), tg, heat_coefficients(1.0), 1.0);
    CHECK(nu.stepper.factorization_count() == 2);
}

TEST_CASE("theta outside [1/2, 1] is rejected") {
    CHECK_THROWS_AS(heat(7, 4, 0.3), Error);
    CHECK_THROWS_AS(heat(7, 4, 1.2), Error);
}

TEST_CASE("energy reports are finite and positive") {
    const Model m = heat(31, 16, 1.0);
    const Vec s = sample_nodes(m.grid, [](const Point& x) { return std::sin(x[0]); });
    const KnotForcing phi(17, s);
    const Trajectory u = solve_forward_cauchy(m.stepper, phi, s);
    const EnergyReport e1 = energy_report_first(m.grid, u, phi, s);
    const EnergyReport e2 = energy_report_second(m.grid, u, phi, s);
    CHECK(e1.ratio > 0.0);
    CHECK(std::isfinite(e1.ratio));
    CHECK(e2.ratio > 0.0);
    CHECK(e1.ratio == doctest::Approx(e1.lhs / e1.rhs));
    const EnergyReport z = energy_report_first(m.grid, solve_forward_cauchy(m.stepper, {}, Vec::Zero(31)), {},
                                               Vec::Zero(31));
    CHECK(z.ratio == 0.0);
}
