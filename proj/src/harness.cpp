#include "nlspde/harness.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "nlspde/duality.hpp"
#include "nlspde/error.hpp"
#include "nlspde/io.hpp"
#include "nlspde/portfolio.hpp"

namespace nlspde {

using nlohmann::json;

namespace {

std::vector<int> even_checkpoints(int steps, int count) {
    std::vector<int> out;
    count = std::max(1, std::min(count, steps));
    for (int c = 0; c <= count; ++c) {
        const int k = static_cast<int>(std::lround(static_cast<double>(c) * steps / count));
        if (out.empty() || out.back() != k) out.push_back(k);
    }
    return out;
}

void write_trajectory_csv(const std::filesystem::path& path, const Grid& g, const Trajectory& u) {
    std::vector<std::string> header{"knot", "t", "node", "x"};
    if (g.dim() == 2) header.push_back("y");
    header.push_back("u");
    std::vector<std::vector<double>> rows;
    for (int k = 0; k < u.knots(); ++k) {
        for (int i = 0; i < g.size(); ++i) {
            const Point x = g.node(i);
            std::vector<double> row{double(k), u.times[k], double(i), x[0]};
            if (g.dim() == 2) row.push_back(x[1]);
            row.push_back(u.values[k][i]);
            rows.push_back(std::move(row));
        }
    }
    write_csv(path, header, rows);
}

int status_from(const SolveReport& r, const SolveOptions& opt, int current) {
    const double limit = opt.method == SolveMethod::Direct ? 1e-8 : 10.0 * opt.tol;
    if (r.residual_h0 > limit) return kExitResidualBreach;
    if (!r.verdict.guaranteed()) return std::max(current, static_cast<int>(kExitNotGuaranteed));
    return current;
}

json energy_json(const EnergyReport& e) { return {{"lhs", e.lhs}, {"rhs", e.rhs}, {"ratio", e.ratio}}; }

RunResult run_pde(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out, json& rep) {
    RunResult res;
    const Grid g = cfg.grid();
    const Model m = Model::assemble(g, cfg.time, cfg.coeffs, cfg.theta);
    const NonlocalCondition& cond = cfg.condition;
    const KnotForcing phi = sample_forcing(cfg.phi, g, cfg.time, cfg.base_dir);
    const Vec xi = sample_data(cfg.xi, g, cfg.base_dir);
    const NonlocalPdeResult r = solve_nonlocal(cond, m, phi, xi, cfg.solve);
    rep["solve"] = r.report.to_json();
    rep["energy_first"] = energy_json(energy_report_first(g, r.u, phi, xi));
    rep["energy_second"] = energy_json(energy_report_second(g, r.u, phi, xi));
    rep["datum_h0"] = norm_h0(g, r.datum);
    rep["coercivity_margin"] = check_coercivity(cfg.coeffs, g, cfg.time.knots()).margin;
    if (out) write_trajectory_csv(*out / "trajectory.csv", g, r.u);
    res.exit_code = status_from(r.report, cfg.solve, kExitOk);
    return res;
}

RunResult run_spde(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out, json& rep) {
    RunResult res;
    const Grid g = cfg.grid();
    const Model m = Model::assemble(g, cfg.time, cfg.coeffs, cfg.theta);
    const bool forward = cfg.kind == ProblemKind::ForwardSpde;
    const NoiseLattice lat = NoiseLattice::build(cfg.components, cfg.time, cfg.topology);
    NonlocalCondition cond = cfg.condition;
    cond.direction = forward ? Direction::Forward : Direction::Backward;
    const KnotForcing phi_knots = sample_forcing(cfg.phi, g, cfg.time, cfg.base_dir);
    const Forcing phi = phi_knots.empty() ? Forcing{} : Forcing::deterministic(phi_knots);
    NonlocalSpdeResult r;
    if (forward) {
        std::vector<Forcing> h;
        for (const DataSpec& d : cfg.h) {
            const KnotForcing v = sample_forcing(d, g, cfg.time, cfg.base_dir);
            h.push_back(v.empty() ? Forcing{} : Forcing::deterministic(v));
        }
        r = solve_nonlocal_forward_spde(cond, m, lat, phi, h, sample_data(cfg.xi, g, cfg.base_dir), cfg.solve);
        const double paths = std::pow(static_cast<double>(lat.branches()), lat.steps());
        if (paths <= 1e5) rep["definition_residual"] = definition_residual(r.u, m, lat, 0, lat.steps(), phi, h);
    } else {
        const Mat xi = sample_leaf_data(cfg.xi, g, lat.nodes(lat.steps()), cfg.base_dir);
        r = solve_nonlocal_backward_spde(cond, m, lat, phi, xi, cfg.solve);
        const double paths = std::pow(static_cast<double>(lat.branches()), lat.steps());
        if (paths <= 1e5) rep["definition_residual"] = definition_residual(r.u, m, lat, 0, lat.steps(), phi);
    }
    rep["solve"] = r.report.to_json();
    rep["summary"] = solution_summary(r.u, m, lat);
    if (out) {
        std::ofstream f(*out / "solution.csv");
        write_solution_csv(f, r.u, lat);
    }
    res.exit_code = status_from(r.report, cfg.solve, kExitOk);
    return res;
}

RunResult run_probe(const ExperimentConfig& cfg, json& rep) {
    RunResult res;
    const Grid g = cfg.grid();
    const Model m = Model::assemble(g, cfg.time, cfg.coeffs, cfg.theta);
    const AdjointContext adj = AdjointContext::build(m);
    const double dres = duality_residual(m, adj, cfg.probe.kappa);
    rep["duality_residual"] = dres;

    Trajectory u;
    if (cfg.probe.nonlocal) {
        const NonlocalPdeResult r = solve_nonlocal(NonlocalCondition::with_kappa(Direction::Backward, cfg.probe.kappa),
                                                   m, {}, sample_data(cfg.xi, g, cfg.base_dir), cfg.solve);
        rep["solve"] = r.report.to_json();
        u = r.u;
    } else {
        u = solve_backward_cauchy(m.stepper, {}, sample_data(cfg.xi, g, cfg.base_dir));
    }
    Point x{0.0, 0.0};
    for (int d = 0; d < g.dim(); ++d) x[d] = 0.5 * (g.axis(d).lo + g.axis(d).hi);
    if (cfg.probe.x) x = *cfg.probe.x;
    FkOptions opt;
    opt.paths = cfg.probe.paths;
    opt.seed = cfg.seed;
    opt.substeps = cfg.probe.substeps;
    opt.bridge = cfg.probe.bridge;
    opt.record_knots = even_checkpoints(m.steps(), cfg.probe.checkpoints);
    const FkPathBatch batch = fk_simulate(m, x, 0, opt);
    const MartingaleReport mr = martingale_test(m, u, batch, opt.record_knots);
    rep["martingale"] = mr.to_json();
    rep["exit_fraction"] = batch.exit_fraction();
    rep["paths"] = opt.paths;
    if (dres > 1e-10 || !mr.pass) res.exit_code = kExitResidualBreach;
    return res;
}

RunResult run_hedge(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out, json& rep) {
    RunResult res;
    const NoiseLattice lat = NoiseLattice::build(1, cfg.time, Topology::Recombining);
    const int n = cfg.axes.front().n;
    std::optional<Mat> xi_leaves;
    if (cfg.hedge.random_xi) {
        xi_leaves = sample_leaf_data(*cfg.hedge.random_xi, Grid::interval(cfg.market.s_lower, cfg.market.s_upper, n),
                                     lat.nodes(lat.steps()), cfg.base_dir);
    }
    const HedgeSolution hs =
        solve_hedge_spde(cfg.market, n, lat, cfg.theta, xi_leaves ? &*xi_leaves : nullptr, cfg.solve);
    MarketOptions mo;
    mo.paths = cfg.hedge.paths;
    mo.seed = cfg.seed;
    mo.substeps = cfg.hedge.substeps;
    mo.bridge = cfg.hedge.bridge;
    const FkPathBatch paths = simulate_market(cfg.market, cfg.time, mo);

    HedgeReport hr;
    const std::vector<int> cps = even_checkpoints(lat.steps(), cfg.hedge.checkpoints);
    hr.martingale = wealth_process(hs, lat, paths, cps);
    hr.stagnation_residual = stagnation_check(hs.result.u, lat, hs.xi);
    hr.delta_hedge.push_back(delta_hedge_residual(hs, cfg.market, lat, mo, 1));
    if (mo.substeps % 2 == 0) hr.delta_hedge.push_back(delta_hedge_residual(hs, cfg.market, lat, mo, 2));
    hr.coupling = coupling_bias(paths);
    rep["solve"] = hs.result.report.to_json();
    rep["hedge"] = hr.to_json();
    rep["exit_fraction"] = paths.exit_fraction();
    rep["u0_at_s0"] = interpolate(hs.model.grid, hs.result.u.u.value(0, 0), {cfg.market.s0, 0.0});
    if (out) {
        std::vector<std::vector<double>> rows;
        const int keep = std::min(cfg.hedge.csv_paths, paths.paths);
        for (int p = 0; p < keep; ++p) {
            const std::vector<double> X = wealth_path(hs, lat, paths, p);
            for (int r = 0; r < paths.records(); ++r) {
                rows.push_back({double(p), double(paths.knots[r]), cfg.time.knot(paths.knots[r]), paths.state(p, r)[0],
                                X[r], paths.inside(p, r) ? 1.0 : 0.0});
            }
        }
        write_csv(*out / "paths.csv", {"path", "knot", "t", "S", "X", "inside"}, rows);
    }
    res.exit_code = status_from(hs.result.report, cfg.solve, kExitOk);
    if (hr.stagnation_residual > 1e-8 || !hr.martingale.pass) res.exit_code = kExitResidualBreach;
    return res;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
    json rep;
    rep["kind"] = to_string(cfg.kind);
    rep["config"] = cfg.doc;
    if (out_dir) std::filesystem::create_directories(*out_dir);
    RunResult res;
    try {
        switch (cfg.kind) {
            case ProblemKind::ForwardPde:
            case ProblemKind::BackwardPde: res = run_pde(cfg, out_dir, rep); break;
            case ProblemKind::ForwardSpde:
            case ProblemKind::BackwardSpde: res = run_spde(cfg, out_dir, rep); break;
            case ProblemKind::Probe: res = run_probe(cfg, rep); break;
            case ProblemKind::Hedge: res = run_hedge(cfg, out_dir, rep); break;
        }
    } catch (const SingularError& e) {
        rep["solve"] = {{"verdict", e.verdict().to_json()}, {"error", e.what()}};
        res.exit_code = kExitSingular;
    }
    rep["exit_code"] = res.exit_code;
    res.report = rep;
    if (out_dir) write_json(*out_dir / "report.json", rep);
    return res;
}

json ConvergenceTable::to_json() const {
    json rows_j = json::array();
    for (const ConvergenceRow& r : rows) {
        rows_j.push_back({{"level", r.level},
                          {"n", r.n},
                          {"steps", r.steps},
                          {"h", r.h},
                          {"dt", r.dt},
                          {"error", r.error},
                          {"order", std::isnan(r.order) ? json(nullptr) : json(r.order)}});
    }
    return {{"refine", refine}, {"theta", theta}, {"k", k}, {"rows", rows_j}};
}

namespace {

NonlocalCondition heat_k_condition(double k) {
    NonlocalCondition c;
    c.direction = Direction::Forward;
    c.kappa = k;
    return c;
}

}  // namespace

ConvergenceTable convergence_study(const ConvergeSpec& study, double theta) {
    ConvergenceTable t;
    t.refine = study.refine;
    t.theta = theta;
    t.k = study.k;
    const double T = 1.0;
    const double k = study.k;
    for (int level = 0; level < study.levels; ++level) {
        const int scale = 1 << level;
        const int n = study.refine == "time" ? study.base_n : (study.base_n + 1) * scale - 1;
        const int steps = study.refine == "space" ? study.space_steps : study.base_steps * scale;
        const Grid g = Grid::interval(0.0, std::numbers::pi, n);
        const Model m = Model::assemble(g, TimeGrid::uniform(T, steps), heat_coefficients(1.0), theta);
        const Vec s = sample_nodes(g, [](const Point& x) { return std::sin(x[0]); });
        const Vec xi = (1.0 - k * std::exp(-T)) * s;
        const NonlocalPdeResult r = solve_nonlocal(heat_k_condition(k), m, {}, xi);
        // Semi-discrete oracle: sin is an exact eigenvector of the discrete Laplacian.
        const double lam = -(4.0 / (g.h(0) * g.h(0))) * std::pow(std::sin(g.h(0) / 2.0), 2);
        const double a0 = (1.0 - k * std::exp(-T)) / (1.0 - k * std::exp(lam * T));
        double err = 0.0;
        for (int kk = 0; kk <= steps; ++kk) {
            const double tk = m.time.knot(kk);
            const double amp = study.refine == "time" ? a0 * std::exp(lam * tk) : std::exp(-tk);
            err = std::max(err, norm_h0(g, r.u.values[kk] - amp * s));
        }
        ConvergenceRow row{level, n, steps, g.h(0), T / steps, err, std::numeric_limits<double>::quiet_NaN()};
        if (!t.rows.empty()) row.order = std::log2(t.rows.back().error / err);
        t.rows.push_back(row);
    }
    return t;
}

std::vector<EnergyRow> energy_study(int levels, int base_n, int base_steps, double k, double theta) {
    std::vector<EnergyRow> out;
    for (int level = 0; level < levels; ++level) {
        const int n = (base_n + 1) * (1 << level) - 1;
        const int steps = base_steps * (1 << level);
        const Grid g = Grid::interval(0.0, std::numbers::pi, n);
        const Model m = Model::assemble(g, TimeGrid::uniform(1.0, steps), heat_coefficients(1.0), theta);
        const Vec f = sample_nodes(g, [](const Point& x) { return std::sin(x[0]); });
        const Vec xi = sample_nodes(g, [](const Point& x) { return std::sin(x[0]) + 0.5 * std::sin(2.0 * x[0]); });
        const KnotForcing phi(steps + 1, f);
        const NonlocalPdeResult r = solve_nonlocal(heat_k_condition(k), m, phi, xi);
        out.push_back({n, steps, energy_report_first(g, r.u, phi, xi).ratio, energy_report_second(g, r.u, phi, xi).ratio});
    }
    return out;
}

}  // namespace nlspde
