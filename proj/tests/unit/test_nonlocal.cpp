#include <cmath>
#include <numbers>

#include <doctest.h>

#include "nlspde/error.hpp"
#include "nlspde/model.hpp"
#include "nlspde/nonlocal.hpp"

using namespace nlspde;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kOneStep = 0.5523124171952958;  // 1 / (1 + 8 / pi^2)

Model heat(int n, int steps, double theta = 1.0) {
    return Model::assemble(Grid::interval(0.0, kPi, n), TimeGrid::uniform(1.0, steps), heat_coefficients(1.0), theta);
}

Model single_node() {
    CoefficientSet c = heat_coefficients(1.0);
    c.beta = {constant_vector(0.0)};
    c.beta_bar = {constant_scalar(0.0)};
    return Model::assemble(Grid::interval(0.0, kPi, 1, true), TimeGrid::uniform(1.0, 1), c, 1.0);
}

Vec sine(const Grid& g, int mode = 1) {
    return sample_nodes(g, [mode](const Point& x) { return std::sin(mode * x[0]); });
}

double boundary_residual(const NonlocalCondition& c, const Model& m, const Trajectory& u, const Vec& xi) {
    const Vec end = c.direction == Direction::Forward ? u.front() : u.back();
    return (end - apply_gamma(c, u, m.time) - xi).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("gamma quadrature") {
    const Grid g = Grid::interval(0.0, 1.0, 5);
    const TimeGrid tg = TimeGrid::uniform(2.0, 4);
    Trajectory u;
    for (int k = 0; k <= 4; ++k) {
        u.values.push_back(sample_nodes(g, [&](const Point& x) { return x[0] * tg.knot(k); }));
        u.times.push_back(tg.knot(k));
    }
    NonlocalCondition mass;
    mass.masses = {PointMass{1.5, 1.0, {}}};
    CHECK((apply_gamma(mass, u, tg) - u.values[3]).cwiseAbs().maxCoeff() == 0.0);

    NonlocalCondition kern;
    kern.k0.assign(5, 0.5);  // 1/T
    const Vec expect = sample_nodes(g, [](const Point& x) { return x[0]; });  // x T / 2
    CHECK((apply_gamma(kern, u, tg) - expect).cwiseAbs().maxCoeff() <= 1e-15);

    const NonlocalCondition neg = NonlocalCondition::with_kappa(Direction::Backward, -1.0);
    CHECK((apply_gamma(neg, u, tg) + u.values[0]).cwiseAbs().maxCoeff() == 0.0);

    NonlocalCondition twice;
    twice.masses = {PointMass{1.0, 0.25, {}}, PointMass{1.0, 0.5, {}}};
    CHECK((apply_gamma(twice, u, tg) - 0.75 * u.values[2]).cwiseAbs().maxCoeff() <= 1e-15);

    NonlocalCondition spatial;
    spatial.masses = {PointMass{2.0, 1.0, Mat::Identity(5, 5) * 2.0}};
    CHECK((apply_gamma(spatial, u, tg) - 2.0 * u.values[4]).cwiseAbs().maxCoeff() == 0.0);

    NonlocalCondition off;
    off.masses = {PointMass{0.3, 1.0, {}}};
    CHECK_THROWS_AS(off.validate(tg, 5), Error);
}

TEST_CASE("condition validation by direction") {
    const TimeGrid tg = TimeGrid::uniform(1.0, 4);
    NonlocalCondition fw;
    fw.direction = Direction::Forward;
    fw.masses = {PointMass{0.0, 0.5, {}}};
    CHECK_THROWS_AS(fw.validate(tg, 3), Error);
    fw.masses = {PointMass{1.0, 0.5, {}}};
    CHECK_NOTHROW(fw.validate(tg, 3));
    NonlocalCondition bw;
    bw.direction = Direction::Backward;
    bw.masses = {PointMass{1.0, 0.5, {}}};
    CHECK_THROWS_AS(bw.validate(tg, 3), Error);
    bw.masses = {PointMass{0.0, 0.5, {}}, PointMass{0.25, 0.1, {}}};
    CHECK_NOTHROW(bw.validate(tg, 3));
    bw.k0.assign(5, -0.2);
    CHECK(bw.kernel_mass(tg) == doctest::Approx(0.8));
}

TEST_CASE("Q and T for the scalar instance") {
    const Model m = single_node();
    const NonlocalCondition c = NonlocalCondition::with_kappa(Direction::Backward, 0.5);
    const Mat Q = assemble_Q(c, m);
    CHECK(Q(0, 0) == doctest::Approx(0.5 * kOneStep).epsilon(1e-14));
    CHECK(Q(0, 0) == doctest::Approx(0.27616).epsilon(1e-5));
    const Vec T = assemble_T_rhs(c, m, KnotForcing(2, Vec::Ones(1)));
    CHECK(T[0] == doctest::Approx(0.5 * kOneStep).epsilon(1e-14));
    CHECK(assemble_T_rhs(c, m, {}).cwiseAbs().maxCoeff() == 0.0);
    NonlocalCondition none;
    none.direction = Direction::Backward;
    CHECK(assemble_Q(none, m).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward k-condition Q is k times the propagator") {
    const Model m = heat(15, 8);
    const NonlocalCondition c = NonlocalCondition::with_kappa(Direction::Forward, 0.7);
    const Mat P = propagator_matrix(m.stepper, Direction::Forward);
    CHECK((assemble_Q(c, m, Exec::Serial) - 0.7 * P).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((assemble_Q(c, m, Exec::Serial) - assemble_Q(c, m, Exec::Parallel)).cwiseAbs().maxCoeff() == 0.0);

    // sigma_m = |k| rho_m with the eigen-oracle.
    const Vec sv = singular_value_report(assemble_Q(c, m));
    const double h = m.grid.h(0);
    std::vector<double> oracle;
    for (int j = 1; j <= 15; ++j) {
        const double lam = -(4.0 / (h * h)) * std::pow(std::sin(j * h / 2.0), 2);
        oracle.push_back(0.7 * std::pow(1.0 / (1.0 - lam / 8.0), 8));
    }
    for (int j = 0; j < 15; ++j) CHECK(std::abs(sv[j] - oracle[j]) <= 1e-8 * oracle[0]);
    CHECK(singular_value_report(Mat::Zero(4, 4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("T is linear in the forcing") {
    const Model m = heat(15, 8);
    NonlocalCondition c;
    c.direction = Direction::Forward;
    c.k0.assign(9, 0.3);
    c.masses = {PointMass{0.5, 0.4, {}}};
    const KnotForcing a(9, sine(m.grid)), b(9, sine(m.grid, 3));
    KnotForcing ab(9);
    for (int k = 0; k <= 8; ++k) ab[k] = 2.0 * a[k] - 3.0 * b[k];
    const Vec lhs = assemble_T_rhs(c, m, ab);
    const Vec rhs = 2.0 * assemble_T_rhs(c, m, a) - 3.0 * assemble_T_rhs(c, m, b);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("Neumann series") {
    NeumannResult r = neumann_iterate(Mat::Zero(3, 3), Vec::Ones(3));
    CHECK((r.x - Vec::Ones(3)).cwiseAbs().maxCoeff() == 0.0);
    Mat q(1, 1);
    q(0, 0) = 0.27616;
    r = neumann_iterate(q, Vec::Ones(1), 1e-14);
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(1.0 / 0.72384).epsilon(1e-12));
    CHECK(r.x[0] == doctest::Approx(1.38153).epsilon(1e-5));
    q(0, 0) = 1.2;
    try {
        neumann_iterate(q, Vec::Ones(1));
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NeumannDivergence);
    }
}

TEST_CASE("k = 0 reduces to the Cauchy solve") {
    const Model m = heat(31, 16);
    const Vec xi = sine(m.grid) - 0.5 * sine(m.grid, 2);
    const NonlocalPdeResult r = solve_nonlocal(NonlocalCondition::with_kappa(Direction::Forward, 0.0), m, {}, xi);
    const Trajectory c = solve_forward_cauchy(m.stepper, {}, xi);
    for (int k = 0; k <= 16; ++k) CHECK((r.u.values[k] - c.values[k]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.report.verdict.status == VerdictStatus::GuaranteedKernelMass);
}

TEST_CASE("scalar periodic backward problem with a leaf field") {
    const Model m = single_node();
    const NoiseLattice lat = NoiseLattice::build(1, m.time);
    Mat xi(1, 2);
    xi << 1.0, -1.0;
    const NonlocalSpdeResult r =
        solve_nonlocal_backward_spde(NonlocalCondition::with_kappa(Direction::Backward, 1.0), m, lat, Forcing{}, xi);
    CHECK(std::abs(r.u.u.value(0, 0)[0]) <= 1e-15);
    for (int l = 0; l < 2; ++l) {
        CHECK(r.u.u.value(1, l)[0] == xi(0, l));
        CHECK(std::abs(r.u.u.value(1, l)[0] - r.u.u.value(0, 0)[0] - xi(0, l)) <= 1e-12);
    }
    CHECK(r.report.verdict.status == VerdictStatus::GuaranteedKappa);
}

TEST_CASE("recomposition and residuals") {
    const Model m = heat(31, 16);
    const KnotForcing phi(17, 0.4 * sine(m.grid, 2));
    const Vec xi = sine(m.grid);
    for (Direction d : {Direction::Forward, Direction::Backward}) {
        NonlocalCondition c;
        c.direction = d;
        c.k0.assign(17, 0.6);
        c.masses = {PointMass{0.5, -0.7, {}}};
        const NonlocalPdeResult r = solve_nonlocal(c, m, phi, xi);
        CHECK(boundary_residual(c, m, r.u, xi) <= 1e-12);
        CHECK(r.report.residual_h0 <= 1e-8);
        const Trajectory again = d == Direction::Forward ? solve_forward_cauchy(m.stepper, phi, r.datum)
                                                         : solve_backward_cauchy(m.stepper, phi, r.datum);
        for (int k = 0; k <= 16; ++k) CHECK((again.values[k] - r.u.values[k]).cwiseAbs().maxCoeff() <= 1e-12);

        // Linearity in (phi, xi).
        KnotForcing phi2(17);
        for (int k = 0; k <= 16; ++k) phi2[k] = -2.0 * phi[k];
        const NonlocalPdeResult s = solve_nonlocal(c, m, phi2, 3.0 * xi);
        const NonlocalPdeResult a = solve_nonlocal(c, m, phi, Vec::Zero(31));
        const NonlocalPdeResult b = solve_nonlocal(c, m, {}, xi);
        for (int k = 0; k <= 16; ++k) {
            CHECK((s.u.values[k] - (-2.0 * a.u.values[k] + 3.0 * b.u.values[k])).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("heat kappa condition has norm |kappa| rho_1") {
    const Model m = heat(31, 16);
    const double h = m.grid.h(0);
    const double rho1 = std::pow(1.0 / (1.0 + (4.0 / (h * h)) * std::pow(std::sin(h / 2.0), 2) / 16.0), 16);
    for (double kappa : {-0.9, 0.3, 0.95}) {
        const NonlocalCondition c = NonlocalCondition::with_kappa(Direction::Backward, kappa);
        const SolveVerdict v = verdict(c, m, assemble_Q(c, m));
        CHECK(v.q_norm == doctest::Approx(std::abs(kappa) * rho1).epsilon(1e-10));
        CHECK(v.q_norm < 1.0);
        SolveOptions o;
        o.method = SolveMethod::Neumann;
        const NonlocalPdeResult r = solve_nonlocal(c, m, {}, sine(m.grid), o);
        CHECK(r.report.iterations > 0);
        CHECK(r.report.residual_h0 <= 10.0 * o.tol);
    }
}

TEST_CASE("verdicts") {
    const Model m = heat(15, 8);
    auto judge = [&](const NonlocalCondition& c) { return verdict(c, m, assemble_Q(c, m)); };

    const SolveVerdict k15 = judge(NonlocalCondition::with_kappa(Direction::Backward, 1.5));
    CHECK(k15.kappa_form);
    CHECK_FALSE(k15.kappa_guaranteed);
    CHECK(k15.to_json()["kappa_check"] == "NotGuaranteedKappa");
    CHECK(k15.q_norm < 1.0);
    CHECK(k15.status == VerdictStatus::GuaranteedSmallNorm);

    const SolveVerdict k1 = judge(NonlocalCondition::with_kappa(Direction::Backward, 1.0));
    CHECK(k1.status == VerdictStatus::GuaranteedKappa);

    NonlocalCondition mass;
    mass.direction = Direction::Forward;
    mass.k0.assign(9, 0.8);
    const SolveVerdict km = judge(mass);
    CHECK(km.kernel_mass == doctest::Approx(0.8));
    CHECK(km.status == VerdictStatus::GuaranteedKernelMass);

    NonlocalCondition heavy;
    heavy.direction = Direction::Forward;
    heavy.masses = {PointMass{0.5, 0.6, {}}, PointMass{1.0, 0.6, {}}};
    const SolveVerdict ks = judge(heavy);
    CHECK(ks.kernel_mass == doctest::Approx(1.2));
    CHECK(ks.q_norm < 1.0);
    CHECK(ks.status == VerdictStatus::GuaranteedSmallNorm);

    NonlocalCondition big;
    big.direction = Direction::Forward;
    big.masses = {PointMass{0.125, 3.0, {}}};
    CHECK(judge(big).status == VerdictStatus::FredholmNumeric);

    // Positive zero-order term breaks the kernel-mass certificate.
    CoefficientSet c = heat_coefficients(1.0);
    c.lambda = constant_scalar(0.5);
    const Model grow = Model::assemble(m.grid, m.time, c, 1.0);
    const SolveVerdict kg = verdict(mass, grow, assemble_Q(mass, grow));
    CHECK(kg.status != VerdictStatus::GuaranteedKernelMass);
}

TEST_CASE("singular instance is detected") {
    const Model m = heat(15, 8);
    const double h = m.grid.h(0);
    const double rho1 = std::pow(1.0 / (1.0 + (4.0 / (h * h)) * std::pow(std::sin(h / 2.0), 2) / 8.0), 8);
    CHECK(rho1 == doctest::Approx(0.3908577265737271).epsilon(1e-13));
    const NonlocalCondition c = NonlocalCondition::with_kappa(Direction::Forward, 1.0 / rho1);
    CHECK(verdict(c, m, assemble_Q(c, m)).status == VerdictStatus::SingularDetected);
    try {
        solve_nonlocal(c, m, {}, sine(m.grid));
        FAIL("expected a singular error");
    } catch (const SingularError& e) {
        CHECK(e.verdict().min_sigma < kSingularThreshold);
        CHECK(e.code() == ErrorCode::Singular);
    }
}

TEST_CASE("forward nonlocal SPDE condition holds in the mean") {
    CoefficientSet c = heat_coefficients(1.0);
    c.beta = {[](const Point& x, double) { return Vec2(0.5 * std::sin(x[0]), 0.0); }};
    c.beta_bar = {constant_scalar(0.0)};
    const Model m = Model::assemble(Grid::interval(0.0, kPi, 15), TimeGrid::uniform(1.0, 4), c, 1.0);
    const NoiseLattice lat = NoiseLattice::build(1, m.time, Topology::Tree);
    const NonlocalCondition cond = NonlocalCondition::with_kappa(Direction::Forward, 0.5);
    const Vec xi = sine(m.grid);
    const NonlocalSpdeResult r = solve_nonlocal_forward_spde(cond, m, lat, Forcing{}, {}, xi);
    const Vec gamma = apply_gamma(cond, r.u.u, lat);
    CHECK((r.u.u.value(0, 0) - gamma - xi).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.report.residual_h0 <= 1e-8);
}
