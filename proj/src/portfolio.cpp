#include "nlspde/portfolio.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "nlspde/error.hpp"

namespace nlspde {

void MarketParams::validate() const {
    require(sigma && sigma_tilde && appreciation && xi, ErrorCode::InvalidArgument, "market functions missing");
    require(0.0 < s_lower && s_lower < s0 && s0 < s_upper, ErrorCode::InvalidArgument,
            "need 0 < s_lower < s0 < s_upper");
    require(horizon > 0.0, ErrorCode::InvalidArgument, "horizon must be positive");
    require(std::abs(xi(s_lower)) <= 1e-12 && std::abs(xi(s_upper)) <= 1e-12, ErrorCode::InvalidArgument,
            "payoff increment must vanish at both barriers");
}

std::function<double(double)> sine_payoff(const MarketParams& mp, double amplitude) {
    const double lo = mp.s_lower, width = mp.s_upper - mp.s_lower;
    return [=](double x) {
        // Exact zeros at the barriers rather than sin(pi) ~ 1e-16.
        if (x <= lo || x >= lo + width) return 0.0;
        return amplitude * std::sin(std::numbers::pi * (x - lo) / width);
    };
}

CoefficientSet hedge_coefficients(const MarketParams& mp) {
    CoefficientSet c;
    c.form = OperatorForm::NonDivergence;
    auto sig = mp.sigma, sigt = mp.sigma_tilde;
    c.b = [=](const Point& x, double t) {
        Mat2 m = Mat2::Zero();
        m(0, 0) = 0.5 * (sig(t) * sig(t) + sigt(t) * sigt(t)) * x[0] * x[0];
        return m;
    };
    c.f_tilde = constant_vector(0.0);
    c.lambda_tilde = constant_scalar(0.0);
    c.beta = {[=](const Point& x, double t) { return Vec2(sig(t) * x[0], 0.0); }};
    c.beta_bar = {constant_scalar(0.0)};
    double st = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 64; ++i) st = std::min(st, std::abs(sigt(mp.horizon * i / 64.0)));
    c.delta = 0.5 * st * st * mp.s_lower * mp.s_lower;
    const bool constant_vols = [&] {
        for (int i = 1; i <= 64; ++i) {
            const double t = mp.horizon * i / 64.0;
            if (sig(t) != sig(0.0) || sigt(t) != sigt(0.0)) return false;
        }
        return true;
    }();
    c.time_independent = constant_vols;
    return c;
}

HedgeSolution solve_hedge_spde(const MarketParams& mp, int grid_nodes, const NoiseLattice& lat, double theta,
                               const Mat* xi_leaves, const SolveOptions& opt) {
    mp.validate();
    require(std::abs(lat.time_grid().horizon() - mp.horizon) <= 1e-12 * mp.horizon, ErrorCode::InvalidArgument,
            "lattice horizon differs from the market horizon");
    require(lat.components() == 1, ErrorCode::InvalidArgument, "hedge lattice needs one noise component");
    const Grid g = Grid::interval(mp.s_lower, mp.s_upper, grid_nodes);
    const CoefficientSet c = hedge_coefficients(mp);
    const std::vector<double> knots = lat.time_grid().knots();
    const CoercivityReport cr = check_coercivity(c, g, knots);
    require(cr.margin > 0.0, ErrorCode::Coercivity, "hedge operator is not coercive");

    HedgeSolution hs{Model::assemble(g, lat.time_grid(), c, theta), Mat(), {}};
    const int leaves = lat.nodes(lat.steps());
    if (xi_leaves) {
        require(xi_leaves->rows() == g.size() && xi_leaves->cols() == leaves, ErrorCode::InvalidArgument,
                "leaf payoff has wrong shape");
        hs.xi = *xi_leaves;
    } else {
        const Vec v = sample_nodes(g, [&](const Point& x) { return mp.xi(x[0]); });
        hs.xi = v.replicate(1, leaves);
    }
    hs.result = solve_nonlocal_backward_spde(NonlocalCondition::with_kappa(Direction::Backward, 1.0), hs.model,
                                             lat, Forcing{}, hs.xi, opt);
    return hs;
}

namespace {

// One log-Euler price path; calls on_step(k, j, s_before, s_after) for
// every substep while inside the corridor and on_knot(k, dw, s, inside)
// after each knot interval with its w increment dw.
template <class OnStep, class OnKnot>
void market_path(const MarketParams& mp, const TimeGrid& tg, const MarketOptions& opt, int path, OnStep&& on_step,
                 OnKnot&& on_knot, double& exit_time) {
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(path), 0x5e11u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> uniform;
    const double lo = std::log(mp.s_lower), hi = std::log(mp.s_upper);
    double s = mp.s0;
    bool inside = true;
    for (int k = 0; k < tg.steps(); ++k) {
        const double h = tg.dt(k) / opt.substeps;
        const double sq = std::sqrt(h);
        double interval = 0.0;
        for (int j = 0; j < opt.substeps; ++j) {
            const double dw = sq * normal(rng);
            const double dwt = sq * normal(rng);
            interval += dw;
            if (!inside) continue;
            const double t = tg.knot(k) + j * h;
            const double sg = mp.sigma(t), st = mp.sigma_tilde(t);
            double next =
                s * std::exp((mp.appreciation(t) - 0.5 * (sg * sg + st * st)) * h + sg * dw + st * dwt);
            const double coin = opt.bridge ? uniform(rng) : 1.0;
            if (!(next > mp.s_lower && next < mp.s_upper)) {
                inside = false;
            } else if (opt.bridge) {
                // Brownian bridge in log price between two inside endpoints.
                const double a = (sg * sg + st * st) * h;
                const double x0 = std::log(s), x1 = std::log(next);
                const double ql = std::exp(-2.0 * (x0 - lo) * (x1 - lo) / a);
                const double qu = std::exp(-2.0 * (hi - x0) * (hi - x1) / a);
                if (coin >= (1.0 - ql) * (1.0 - qu)) {
                    inside = false;
                    next = ql >= qu ? mp.s_lower : mp.s_upper;
                }
            }
            on_step(k, j, s, next);
            s = next;
            if (!inside) exit_time = t + h;
        }
        on_knot(k, interval, s, inside);
    }
}

double slope(const Grid& g, const Vec& u, double x) {
    const double h = g.h(0);
    return (interpolate(g, u, {x + h, 0.0}) - interpolate(g, u, {x - h, 0.0})) / (2.0 * h);
}

}  // namespace

FkPathBatch simulate_market(const MarketParams& mp, const TimeGrid& tg, const MarketOptions& opt) {
    mp.validate();
    require(opt.paths >= 1 && opt.substeps >= 1, ErrorCode::InvalidArgument, "need paths and substeps");
    const int K = tg.steps();
    FkPathBatch b;
    b.paths = opt.paths;
    b.seed = opt.seed;
    b.start_knot = 0;
    b.dim = 1;
    b.components = 1;
    b.steps = K;
    for (int k = 0; k <= K; ++k) b.knots.push_back(k);
    const int R = K + 1;
    b.y.assign(static_cast<std::size_t>(opt.paths) * R, mp.s0);
    b.gamma.assign(static_cast<std::size_t>(opt.paths) * R, 1.0);
    b.alive.assign(static_cast<std::size_t>(opt.paths) * R, 1);
    b.exit_time.assign(opt.paths, std::numeric_limits<double>::infinity());
    b.branches.assign(static_cast<std::size_t>(opt.paths) * K, 0);
    b.w_gap.assign(opt.paths, 0.0);
    auto run = [&](int p) {
        double w_cont = 0.0, w_lat = 0.0;
        market_path(
            mp, tg, opt, p, [&](int, int, double, double) {},
            [&](int k, double dw, double s, bool inside) {
                const std::size_t idx = static_cast<std::size_t>(p) * R + k + 1;
                const bool up = dw >= 0.0;
                b.y[idx] = s;
                b.alive[idx] = inside;
                b.branches[static_cast<std::size_t>(p) * K + k] = up ? 1 : 0;
                w_cont += dw;
                w_lat += (up ? 1.0 : -1.0) * std::sqrt(tg.dt(k));
            },
            b.exit_time[p]);
        b.w_gap[p] = std::abs(w_cont - w_lat);
    };
    if (opt.exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int p = 0; p < opt.paths; ++p) run(p);
    } else {
        for (int p = 0; p < opt.paths; ++p) run(p);
    }
    return b;
}

double stagnation_check(const SpdeSolution& u, const NoiseLattice& lat, const Mat& xi) {
    const int K = lat.steps();
    require(xi.rows() == u.u.rows() && xi.cols() == lat.nodes(K), ErrorCode::InvalidArgument,
            "payoff must cover every leaf");
    const Vec u0 = u.u.value(0, 0);
    double worst = 0.0;
    for (int leaf = 0; leaf < lat.nodes(K); ++leaf) {
        worst = std::max(worst, (u.u.value(K, leaf) - u0 - xi.col(leaf)).cwiseAbs().maxCoeff());
    }
    return worst;
}

MartingaleReport wealth_process(const HedgeSolution& hs, const NoiseLattice& lat, const FkPathBatch& paths,
                                const std::vector<int>& checkpoints) {
    return martingale_test(hs.model, hs.result.u, lat, paths, checkpoints);
}

std::vector<double> wealth_path(const HedgeSolution& hs, const NoiseLattice& lat, const FkPathBatch& paths, int path) {
    std::vector<double> out;
    for (int r = 0; r < paths.records(); ++r) {
        const int k = paths.knots[r];
        const int node = snapped_node(lat, paths, path, k);
        out.push_back(paths.weight(path, r) * interpolate(hs.model.grid, hs.result.u.u.value(k, node), paths.state(path, r)));
    }
    return out;
}

DeltaHedgeStats delta_hedge_residual(const HedgeSolution& hs, const MarketParams& mp, const NoiseLattice& lat,
                                     const MarketOptions& opt, int rebalances_per_step) {
    require(rebalances_per_step >= 1 && opt.substeps % rebalances_per_step == 0, ErrorCode::InvalidArgument,
            "rebalances per step must divide the substep count");
    const TimeGrid& tg = lat.time_grid();
    const Grid& g = hs.model.grid;
    const AdaptedField& u = hs.result.u.u;
    const int every = opt.substeps / rebalances_per_step;
    std::vector<double> res(opt.paths);
    auto run = [&](int p) {
        int node = 0;
        double x = interpolate(g, u.value(0, 0), {mp.s0, 0.0});
        double delta = 0.0;
        double s_end = mp.s0;
        int k_end = 0, node_end = 0;
        bool alive = true;
        double exit_time = 0.0;
        market_path(
            mp, tg, opt, p,
            [&](int k, int j, double s, double next) {
                if (j % every == 0) delta = slope(g, u.value(k, node), s);
                x += delta * (next - s);
                s_end = next;
            },
            [&](int k, double dw, double, bool inside) {
                node = lat.child(k, node, dw >= 0.0 ? 1 : 0);
                if (alive) {
                    k_end = k + 1;
                    node_end = node;
                }
                alive = inside;
            },
            exit_time);
        // After an exit s_end lies outside the corridor, where u vanishes.
        res[p] = x - interpolate(g, u.value(k_end, node_end), {s_end, 0.0});
    };
    if (opt.exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int p = 0; p < opt.paths; ++p) run(p);
    } else {
        for (int p = 0; p < opt.paths; ++p) run(p);
    }
    DeltaHedgeStats st;
    st.rebalances_per_step = rebalances_per_step;
    double sum = 0.0, sq = 0.0;
    for (double r : res) sum += r;
    st.mean = sum / opt.paths;
    for (double r : res) sq += (r - st.mean) * (r - st.mean);
    st.sd = opt.paths > 1 ? std::sqrt(sq / (opt.paths - 1)) : 0.0;
    return st;
}

nlohmann::json HedgeReport::to_json() const {
    nlohmann::json j;
    j["martingale"] = martingale.to_json();
    j["stagnation_residual"] = stagnation_residual;
    nlohmann::json dh = nlohmann::json::array();
    for (const DeltaHedgeStats& s : delta_hedge) {
        dh.push_back({{"rebalances_per_step", s.rebalances_per_step}, {"mean", s.mean}, {"sd", s.sd}});
    }
    j["delta_hedge"] = dh;
    j["coupling"] = {{"mean_w_gap", coupling.mean_gap}, {"rms_w_gap", coupling.rms_gap}};
    return j;
}

}  // namespace nlspde
