#include <cmath>
#include <random>

#include <doctest.h>

#include "nlspde/error.hpp"
#include "nlspde/portfolio.hpp"

using namespace nlspde;

namespace {

MarketParams market(double amplitude = 0.1) {
    MarketParams mp;
    mp.sigma = [](double) { return 0.3; };
    mp.sigma_tilde = [](double) { return 0.25; };
    mp.s0 = 1.0;
    mp.s_lower = 0.6;
    mp.s_upper = 1.6;
    mp.horizon = 1.0;
    mp.xi = sine_payoff(mp, amplitude);
    return mp;
}

}  // namespace

TEST_CASE("market parameter validation") {
    MarketParams mp = market();
    CHECK_NOTHROW(mp.validate());
    mp.xi = [](double x) { return x; };
    CHECK_THROWS_AS(mp.validate(), Error);
    mp = market();
    mp.s0 = 2.0;
    CHECK_THROWS_AS(mp.validate(), Error);
    mp = market();
    CHECK(mp.xi(mp.s_lower) == 0.0);
    CHECK(mp.xi(mp.s_upper) == 0.0);
    CHECK(mp.xi(1.1) == doctest::Approx(0.1));
}

TEST_CASE("zero payoff gives zero price and wealth") {
    const MarketParams mp = market(0.0);
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 4));
    const HedgeSolution hs = solve_hedge_spde(mp, 15, lat);
    for (int k = 0; k <= 4; ++k) CHECK(hs.result.u.u.at(k).cwiseAbs().maxCoeff() == 0.0);
    MarketOptions opt;
    opt.paths = 200;
    opt.substeps = 4;
    const FkPathBatch paths = simulate_market(mp, lat.time_grid(), opt);
    for (int p = 0; p < 20; ++p) {
        for (double x : wealth_path(hs, lat, paths, p)) CHECK(x == 0.0);
    }
    const DeltaHedgeStats d = delta_hedge_residual(hs, mp, lat, opt, 2);
    CHECK(d.mean == 0.0);
    CHECK(d.sd == 0.0);
    CHECK(d.rebalances_per_step == 2);
    CHECK_THROWS_AS(delta_hedge_residual(hs, mp, lat, opt, 3), Error);
}

TEST_CASE("stagnation condition holds on every leaf") {
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 6));
    for (double theta : {1.0, 0.5}) {
        const HedgeSolution hs = solve_hedge_spde(market(), 31, lat, theta);
        CHECK(stagnation_check(hs.result.u, lat, hs.xi) <= 1e-8);
        CHECK(hs.result.report.residual_h0 <= 1e-8);
        const HedgeSolution twice = solve_hedge_spde(market(0.2), 31, lat, theta);
        CHECK((twice.result.u.u.at(0) - 2.0 * hs.result.u.u.at(0)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK_THROWS_AS(stagnation_check(solve_hedge_spde(market(), 7, lat).result.u, lat, Mat::Zero(7, 2)), Error);
}

TEST_CASE("random leaf payoff") {
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 5));
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    Mat xi(15, lat.nodes(5));
    for (Eigen::Index j = 0; j < xi.cols(); ++j) {
        for (Eigen::Index i = 0; i < xi.rows(); ++i) xi(i, j) = 0.05 * n01(rng);
    }
    const HedgeSolution hs = solve_hedge_spde(market(), 15, lat, 1.0, &xi);
    CHECK(stagnation_check(hs.result.u, lat, xi) <= 1e-8);
    const Mat bad = Mat::Zero(15, 2);
    CHECK_THROWS_AS(solve_hedge_spde(market(), 15, lat, 1.0, &bad), Error);
}

TEST_CASE("degenerate volatility is rejected") {
    MarketParams mp = market();
    mp.sigma_tilde = [](double) { return 0.0; };
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 2));
    try {
        solve_hedge_spde(mp, 15, lat);
        FAIL("expected a coercivity error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Coercivity);
    }
    const NoiseLattice two = NoiseLattice::build(2, TimeGrid::uniform(1.0, 2));
    CHECK_THROWS_AS(solve_hedge_spde(market(), 15, two), Error);
    const NoiseLattice longer = NoiseLattice::build(1, TimeGrid::uniform(2.0, 2));
    CHECK_THROWS_AS(solve_hedge_spde(market(), 15, longer), Error);
}

TEST_CASE("price paths") {
    MarketParams still = market();
    still.sigma = [](double) { return 0.0; };
    still.sigma_tilde = [](double) { return 0.0; };
    const TimeGrid tg = TimeGrid::uniform(1.0, 4);
    MarketOptions opt;
    opt.paths = 50;
    const FkPathBatch flat = simulate_market(still, tg, opt);
    CHECK(flat.exit_fraction() == 0.0);
    for (int p = 0; p < flat.paths; ++p) CHECK(flat.state(p, 4)[0] == 1.0);

    // The stopped price is a martingale.
    opt.paths = 20000;
    opt.seed = 17;
    const FkPathBatch b = simulate_market(market(), tg, opt);
    double m = 0.0, m2 = 0.0;
    for (int p = 0; p < b.paths; ++p) {
        const double s = b.state(p, 4)[0];
        m += s;
        m2 += s * s;
    }
    m /= b.paths;
    const double se = std::sqrt((m2 / b.paths - m * m) / b.paths);
    CHECK(std::abs(m - 1.0) <= 3.0 * se);
    CHECK(b.exit_fraction() > 0.0);

    opt.exec = Exec::Serial;
    const FkPathBatch s = simulate_market(market(), tg, opt);
    CHECK(s.y == b.y);
}

TEST_CASE("a wider corridor never exits earlier on coupled paths") {
    const TimeGrid tg = TimeGrid::uniform(1.0, 4);
    MarketParams narrow = market(0.0), wide = market(0.0);
    wide.s_lower = 0.5;
    wide.s_upper = 1.8;
    MarketOptions opt;
    opt.paths = 4000;
    opt.seed = 23;
    const FkPathBatch a = simulate_market(narrow, tg, opt);
    const FkPathBatch b = simulate_market(wide, tg, opt);
    CHECK(b.exit_fraction() <= a.exit_fraction());
    for (int p = 0; p < opt.paths; ++p) CHECK(b.exit_time[p] >= a.exit_time[p]);
}

TEST_CASE("wealth process report") {
    const NoiseLattice lat = NoiseLattice::build(1, TimeGrid::uniform(1.0, 4));
    const MarketParams mp = market();
    const HedgeSolution hs = solve_hedge_spde(mp, 31, lat, 0.5);
    MarketOptions opt;
    opt.paths = 2000;
    opt.substeps = 8;
    const FkPathBatch paths = simulate_market(mp, lat.time_grid(), opt);
    const MartingaleReport r = wealth_process(hs, lat, paths, {0, 2, 4});
    CHECK(r.m[0] == doctest::Approx(interpolate(hs.model.grid, hs.result.u.u.value(0, 0), {mp.s0, 0.0})));
    CHECK(r.diff.size() == 3);
    HedgeReport rep;
    rep.martingale = r;
    rep.stagnation_residual = stagnation_check(hs.result.u, lat, hs.xi);
    rep.coupling = coupling_bias(paths);
    const nlohmann::json j = rep.to_json();
    CHECK(j.contains("stagnation_residual"));
}
