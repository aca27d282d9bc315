#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "nlspde/error.hpp"
#include "nlspde/lattice.hpp"

using namespace nlspde;

TEST_CASE("lattice shapes and probabilities") {
    const NoiseLattice one = NoiseLattice::build(1, TimeGrid::uniform(1.0, 1));
    CHECK(one.nodes(0) == 1);
    CHECK(one.nodes(1) == 2);
    CHECK(one.probability(1, 0) == 0.5);
    CHECK(one.probability(1, 1) == 0.5);

    const NoiseLattice three = NoiseLattice::build(1, TimeGrid::uniform(3.0, 3));
    REQUIRE(three.nodes(3) == 4);
    double total = 0.0;
    for (int n = 0; n < 4; ++n) total += three.probability(3, n);
    CHECK(total == 1.0);
    std::vector<double> p;
    for (int n = 0; n < 4; ++n) p.push_back(three.probability(3, n) * 8.0);
    std::sort(p.begin(), p.end());
    CHECK(p == std::vector<double>{1.0, 1.0, 3.0, 3.0});

    const NoiseLattice two = NoiseLattice::build(2, TimeGrid::uniform(1.0, 2));
    CHECK(two.nodes(2) == 9);
    CHECK(two.branches() == 4);

    const NoiseLattice tree = NoiseLattice::build(2, TimeGrid::uniform(1.0, 3), Topology::Tree);
    CHECK(tree.nodes(3) == 64);
    CHECK(tree.total_nodes() == 1 + 4 + 16 + 64);
}

TEST_CASE("lattice guards") {
    CHECK_THROWS_AS(NoiseLattice::build(8, TimeGrid::uniform(1.0, 6)), Error);
    CHECK_THROWS_AS(NoiseLattice::build(1, TimeGrid::from_knots({0.0, 0.3, 1.0})), Error);
    CHECK_NOTHROW(NoiseLattice::build(1, TimeGrid::from_knots({0.0, 0.3, 1.0}), Topology::Tree));
}

TEST_CASE("increments have exact moments") {
    const NoiseLattice lat = NoiseLattice::build(3, TimeGrid::uniform(2.0, 4));
    const double dt = 0.5;
    for (int i = 0; i < 3; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (int b = 0; b < lat.branches(); ++b) {
            m1 += lat.increment(0, b, i) * lat.branch_probability();
            m2 += lat.increment(0, b, i) * lat.increment(0, b, i) * lat.branch_probability();
        }
        CHECK(std::abs(m1) <= 1e-16);
        CHECK(m2 == doctest::Approx(dt).epsilon(1e-15));
        for (int j = i + 1; j < 3; ++j) {
            double c = 0.0;
            for (int b = 0; b < lat.branches(); ++b) {
                c += lat.increment(0, b, i) * lat.increment(0, b, j) * lat.branch_probability();
            }
            CHECK(std::abs(c) <= 1e-16);
        }
    }
}

TEST_CASE("conditional expectations") {
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 4));
    AdaptedField f(lat, 1);
    f.set(4, Mat::Constant(1, lat.nodes(4), 2.5));
    CHECK(conditional_expectation(lat, f, 4, 0)(0, 0) == 2.5);

    // Sign of the first increment.
    AdaptedField s1(lat, 1);
    Mat last(1, lat.nodes(1));
    last << -1.0, 1.0;
    s1.set(1, last);
    CHECK(conditional_expectation(lat, s1, 1, 0)(0, 0) == 0.0);

    // w(T)^2 has mean T; the brute-force sum over all leaves gives the same.
    Mat w2(1, lat.nodes(4));
    for (int n = 0; n < lat.nodes(4); ++n) w2(0, n) = lat.w(4, n, 0) * lat.w(4, n, 0);
    AdaptedField sq(lat, 1);
    sq.set(4, w2);
    CHECK(conditional_expectation(lat, sq, 4, 0)(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mean(lat, w2, 4)[0] == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(conditional_expectation(lat, sq, 2, 2), Error);
    CHECK_THROWS_AS(conditional_expectation(lat, sq, 3, 1), Error);
}

TEST_CASE("serial and parallel expectation agree bitwise") {
    const NoiseLattice lat = NoiseLattice::build(2, TimeGrid::uniform(1.0, 12));
    Mat next(17, lat.nodes(12));
    for (Eigen::Index j = 0; j < next.cols(); ++j) {
        for (Eigen::Index i = 0; i < next.rows(); ++i) next(i, j) = std::sin(0.3 * i + 1.7 * j);
    }
    const Mat a = step_expectation(lat, 11, next, Exec::Serial);
    const Mat b = step_expectation(lat, 11, next, Exec::Parallel);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    const MartingalePart pa = martingale_part(lat, 11, next, Exec::Serial);
    const MartingalePart pb = martingale_part(lat, 11, next, Exec::Parallel);
    CHECK((pa.chi[1] - pb.chi[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stochastic integrals") {
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 6));
    AdaptedField zero(lat, 1), ones(lat, 1), w(lat, 1);
    for (int m = 0; m < 6; ++m) {
        zero.set(m, Mat::Zero(1, lat.nodes(m)));
        ones.set(m, Mat::Ones(1, lat.nodes(m)));
        Mat wm(1, lat.nodes(m));
        for (int n = 0; n < lat.nodes(m); ++n) wm(0, n) = lat.w(m, n, 0);
        w.set(m, wm);
    }
    CHECK(stochastic_integral(lat, zero, 0, 6).at(6).cwiseAbs().maxCoeff() == 0.0);
    const AdaptedField I1 = stochastic_integral(lat, ones, 0, 6);
    for (int n = 0; n < lat.nodes(6); ++n) CHECK(I1.at(6)(0, n) == doctest::Approx(lat.w(6, n, 0)));

    // int w dw: mean 0 and second moment sum_m t_m dt_m.
    const AdaptedField Iw = stochastic_integral(lat, w, 0, 6);
    const Mat sq = Iw.at(6).cwiseProduct(Iw.at(6));
    CHECK(std::abs(mean(lat, Iw.at(6), 6)[0]) < 1e-15);
    double expect = 0.0;
    for (int m = 0; m < 6; ++m) expect += lat.time_grid().knot(m) * lat.time_grid().dt(m);
    CHECK(mean(lat, sq, 6)[0] == doctest::Approx(expect).epsilon(1e-14));

    // A time-varying integrand on a recombining lattice depends on the path.
    AdaptedField tv(lat, 1);
    for (int m = 0; m < 6; ++m) tv.set(m, Mat::Constant(1, lat.nodes(m), 1.0 + m));
    try {
        stochastic_integral(lat, tv, 0, 6);
        FAIL("expected a path-dependence error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::PathDependent);
    }
    const NoiseLattice tree = NoiseLattice::build(1, TimeGrid::uniform(1.0, 6), Topology::Tree);
    AdaptedField tt(tree, 1);
    for (int m = 0; m < 6; ++m) tt.set(m, Mat::Constant(1, tree.nodes(m), 1.0 + m));
    CHECK_NOTHROW(stochastic_integral(tree, tt, 0, 6));
}

TEST_CASE("martingale part") {
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 1));
    MartingalePart c = martingale_part(lat, 0, Mat::Constant(1, 2, 3.0));
    CHECK(c.chi[0](0, 0) == 0.0);
    CHECK(c.mean(0, 0) == 3.0);

    // Branch 1 is the up move.
    const int up = lat.child(0, 0, 1), down = lat.child(0, 0, 0);
    Mat leaf(1, 2);
    leaf(0, up) = 1.0;
    leaf(0, down) = -1.0;
    c = martingale_part(lat, 0, leaf);
    CHECK(c.chi[0](0, 0) == 1.0);
    CHECK(c.mean(0, 0) == 0.0);
    CHECK(c.residual == 0.0);

    const NoiseLattice two = NoiseLattice::build(2, TimeGrid::uniform(1.0, 1));
    Mat cross(1, two.nodes(1));
    for (int n = 0; n < two.nodes(1); ++n) cross(0, n) = two.w(1, n, 0) * two.w(1, n, 1);
    const MartingalePart p = martingale_part(two, 0, cross);
    CHECK(p.chi[0](0, 0) == 0.0);
    CHECK(p.chi[1](0, 0) == 0.0);
    CHECK(p.residual == doctest::Approx(1.0));
}

TEST_CASE("lattice dump") {
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 2));
    const nlohmann::json j = dump_lattice_json(lat);
    CHECK(j["topology"] == "recombining");
    CHECK(j["steps"].size() == 3);
    CHECK(j["steps"][2]["nodes"].size() == 3);
    // The middle leaf has two parents.
    int two_parents = 0;
    for (const auto& n : j["steps"][2]["nodes"]) two_parents += n["parents"].size() == 2;
    CHECK(two_parents == 1);
}
