#include "nlspde/duality.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

#include "nlspde/error.hpp"
#include "nlspde/nonlocal.hpp"

namespace nlspde {

AdjointContext AdjointContext::build(const Model& m) {
    OperatorSequence a = OperatorSequence::generator_adjoint(m.coeffs, m.grid, m.time);
    ThetaStepper s(a, m.time, m.theta);
    return AdjointContext{std::move(a), std::move(s)};
}

Trajectory solve_adjoint_forward(const AdjointContext& adj, const Vec& rho, int s) {
    const ThetaStepper& st = adj.stepper;
    const int K = st.time_grid().steps();
    require(0 <= s && s <= K, ErrorCode::NotAKnot, "start knot out of range");
    require(rho.size() == st.size(), ErrorCode::InvalidArgument, "rho has wrong length");
    Trajectory tr;
    tr.direction = Direction::Forward;
    tr.theta = st.theta();
    tr.scheme = "theta-adjoint";
    tr.values.push_back(rho);
    tr.times.push_back(st.time_grid().knot(s));
    for (int k = s; k < K; ++k) {
        tr.values.push_back(st.explicit_backward(k, st.solve_backward(k, tr.values.back())));
        tr.times.push_back(st.time_grid().knot(k + 1));
    }
    return tr;
}

double duality_residual(const Model& m, const AdjointContext& adj, double kappa, Exec exec) {
    const Mat Q = assemble_Q(NonlocalCondition::with_kappa(Direction::Backward, kappa), m, exec);
    const int M = m.size();
    Mat R(M, M);
    auto column = [&](int j) { R.col(j) = kappa * solve_adjoint_forward(adj, Vec::Unit(M, j)).back(); };
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < M; ++j) column(j);
    } else {
        for (int j = 0; j < M; ++j) column(j);
    }
    const Vec w = Vec::Constant(M, m.grid.weight());
    const Mat adjoint = w.cwiseInverse().asDiagonal() * R.transpose() * w.asDiagonal();
    const double qn = Q.norm();
    const double diff = (Q - adjoint).norm();
    return qn > 0.0 ? diff / qn : diff;
}

Point FkPathBatch::state(int path, int r) const {
    const std::size_t base = (static_cast<std::size_t>(path) * records() + r) * dim;
    Point p{0.0, 0.0};
    for (int d = 0; d < dim; ++d) p[d] = y[base + d];
    return p;
}

int FkPathBatch::branch(int path, int step) const {
    return branches[static_cast<std::size_t>(path) * steps + step];
}

double FkPathBatch::exit_fraction() const {
    int n = 0;
    for (double t : exit_time) n += std::isfinite(t) ? 1 : 0;
    return paths ? static_cast<double>(n) / paths : 0.0;
}

namespace {

// Symmetric square root of 2b - sum beta beta^T on the leading dim x dim block.
Mat2 completion(const CoefficientSet& c, int dim, const Point& y, double t) {
    Mat2 P = 2.0 * c.b(y, t);
    for (const VectorField& beta : c.beta) {
        const Vec2 v = beta(y, t);
        P -= v * v.transpose();
    }
    Mat2 S = Mat2::Zero();
    if (dim == 1) {
        require(P(0, 0) >= -1e-12, ErrorCode::Coercivity, "2b - sum beta beta^T is not PSD");
        S(0, 0) = std::sqrt(std::max(P(0, 0), 0.0));
        return S;
    }
    Eigen::SelfAdjointEigenSolver<Mat2> es(P);
    const Vec2 ev = es.eigenvalues();
    require(ev.minCoeff() >= -1e-12, ErrorCode::Coercivity, "2b - sum beta beta^T is not PSD");
    return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

FkPathBatch fk_simulate(const Model& m, const Point& x, int s, const FkOptions& opt) {
    const int K = m.steps();
    require(0 <= s && s <= K, ErrorCode::NotAKnot, "start knot out of range");
    require(opt.paths >= 1 && opt.substeps >= 1, ErrorCode::InvalidArgument,
            "need at least one path and one substep");
    require(inside_closed(m.grid, x), ErrorCode::InvalidArgument, "start point outside the domain");
    const CoefficientSet& c = m.coeffs;
    const Grid& g = m.grid;
    const int dim = g.dim();
    const int N = c.noise_count();

    FkPathBatch batch;
    batch.paths = opt.paths;
    batch.seed = opt.seed;
    batch.start_knot = s;
    batch.dim = dim;
    batch.components = N;
    batch.knots = opt.record_knots;
    if (batch.knots.empty()) {
        for (int k = s; k <= K; ++k) batch.knots.push_back(k);
    }
    for (std::size_t r = 0; r < batch.knots.size(); ++r) {
        require(batch.knots[r] >= s && batch.knots[r] <= K && (r == 0 || batch.knots[r] > batch.knots[r - 1]),
                ErrorCode::NotAKnot, "recorded knots must increase within [s, K]");
    }
    const int R = batch.records();
    const int steps = K - s;
    batch.steps = steps;
    batch.y.assign(static_cast<std::size_t>(opt.paths) * R * dim, 0.0);
    batch.gamma.assign(static_cast<std::size_t>(opt.paths) * R, 1.0);
    batch.alive.assign(static_cast<std::size_t>(opt.paths) * R, 1);
    batch.exit_time.assign(opt.paths, std::numeric_limits<double>::infinity());
    batch.branches.assign(static_cast<std::size_t>(opt.paths) * steps, 0);
    batch.w_gap.assign(opt.paths, 0.0);

    auto run = [&](int path) {
        std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                          static_cast<std::uint32_t>(path), 0x6b4fu};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal;
        std::uniform_real_distribution<double> uniform;
        Point y = x;
        double integral = 0.0;
        bool inside = true;
        std::vector<double> w_cont(N, 0.0), w_lat(N, 0.0);
        int r = 0;
        auto record = [&](int k) {
            while (r < R && batch.knots[r] == k) {
                const std::size_t idx = static_cast<std::size_t>(path) * R + r;
                for (int d = 0; d < dim; ++d) batch.y[idx * dim + d] = y[d];
                batch.gamma[idx] = std::exp(integral);
                batch.alive[idx] = inside;
                ++r;
            }
        };
        record(s);
        std::vector<double> dw(N), dwt(dim);
        for (int k = s; k < K; ++k) {
            const double h = m.time.dt(k) / opt.substeps;
            const double sq = std::sqrt(h);
            std::vector<double> interval(N, 0.0);
            for (int j = 0; j < opt.substeps; ++j) {
                for (int i = 0; i < N; ++i) dw[i] = sq * normal(rng);
                for (int d = 0; d < dim; ++d) dwt[d] = sq * normal(rng);
                for (int i = 0; i < N; ++i) interval[i] += dw[i];
                if (!inside) continue;
                const double t = m.time.knot(k) + j * h;
                const Vec2 drift = drift_nondivergence(c, g, y, t);
                const Mat2 S = completion(c, dim, y, t);
                integral += zero_order_nondivergence(c, g, y, t) * h;
                Vec2 step = drift * h;
                for (int i = 0; i < N; ++i) step += c.beta[i](y, t) * dw[i];
                for (int d = 0; d < dim; ++d) step += S.col(d) * dwt[d];
                const Mat2 cov = 2.0 * c.b(y, t);
                const Point y0 = y;
                for (int d = 0; d < dim; ++d) y[d] += step[d];
                const double coin = opt.bridge ? uniform(rng) : 1.0;
                if (!inside_closed(g, y)) {
                    inside = false;
                    batch.exit_time[path] = t + h;
                    continue;
                }
                if (!opt.bridge) continue;
                // Brownian bridge: chance of a crossing between the two inside endpoints.
                double survive = 1.0, worst = 0.0;
                int face_axis = -1;
                double face = 0.0;
                for (int d = 0; d < dim; ++d) {
                    const double a = cov(d, d) * h;
                    if (a <= 0.0) continue;
                    const Axis& ax = g.axis(d);
                    for (double wall : {ax.lo, ax.hi}) {
                        const double q = std::exp(-2.0 * (y0[d] - wall) * (y[d] - wall) / a);
                        survive *= 1.0 - q;
                        if (q > worst) {
                            worst = q;
                            face_axis = d;
                            face = wall;
                        }
                    }
                }
                if (coin >= survive && face_axis >= 0) {
                    y[face_axis] = face;
                    inside = false;
                    batch.exit_time[path] = t + h;
                }
            }
            int b = 0;
            for (int i = 0; i < N; ++i) {
                const bool up = interval[i] >= 0.0;
                b |= up ? (1 << i) : 0;
                w_cont[i] += interval[i];
                w_lat[i] += (up ? 1.0 : -1.0) * std::sqrt(m.time.dt(k));
            }
            batch.branches[static_cast<std::size_t>(path) * steps + (k - s)] = static_cast<std::uint8_t>(b);
            record(k + 1);
        }
        double gap = 0.0;
        for (int i = 0; i < N; ++i) gap += std::abs(w_cont[i] - w_lat[i]);
        batch.w_gap[path] = gap;
    };

    if (opt.exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int p = 0; p < opt.paths; ++p) run(p);
    } else {
        for (int p = 0; p < opt.paths; ++p) run(p);
    }
    return batch;
}

int snapped_node(const NoiseLattice& lat, const FkPathBatch& batch, int path, int k) {
    require(batch.start_knot == 0, ErrorCode::InvalidArgument, "lattice coupling needs paths started at 0");
    int node = 0;
    for (int m = 0; m < k; ++m) node = lat.child(m, node, batch.branch(path, m));
    return node;
}

namespace {

template <class Eval>
MartingaleReport martingale_report(const Model& m, const FkPathBatch& batch, const std::vector<int>& checkpoints,
                                   Eval&& eval) {
    std::vector<int> rec;
    for (int k : checkpoints) {
        int r = -1;
        for (int i = 0; i < batch.records(); ++i) {
            if (batch.knots[i] == k) r = i;
        }
        if (r < 0) throw Error(ErrorCode::NotAKnot, "checkpoint " + std::to_string(k) + " was not recorded");
        rec.push_back(r);
    }
    require(batch.records() > 0 && batch.knots[0] == batch.start_knot, ErrorCode::InvalidArgument,
            "the start knot must be recorded");
    const int P = batch.paths;
    std::vector<double> base(P);
    for (int p = 0; p < P; ++p) base[p] = batch.weight(p, 0) * eval(p, batch.knots[0], batch.state(p, 0));

    MartingaleReport rep;
    rep.pass = true;
    for (int r : rec) {
        const int k = batch.knots[r];
        double sum = 0.0, dsum = 0.0, dsq = 0.0;
        for (int p = 0; p < P; ++p) {
            const double v = batch.weight(p, r) * eval(p, k, batch.state(p, r));
            const double d = v - base[p];
            sum += v;
            dsum += d;
            dsq += d * d;
        }
        const double dmean = dsum / P;
        const double var = P > 1 ? std::max(dsq - P * dmean * dmean, 0.0) / (P - 1) : 0.0;
        const double se = std::sqrt(var / P);
        rep.knots.push_back(k);
        rep.times.push_back(m.time.knot(k));
        rep.m.push_back(sum / P);
        rep.diff.push_back(dmean);
        rep.se.push_back(se);
        rep.max_deviation = std::max(rep.max_deviation, std::abs(dmean));
        const double band = 3.0 * se + 1e-12;
        rep.worst_ratio = std::max(rep.worst_ratio, std::abs(dmean) / band);
        if (std::abs(dmean) > band) rep.pass = false;
    }
    return rep;
}

}  // namespace

MartingaleReport martingale_test(const Model& m, const Trajectory& u, const FkPathBatch& batch,
                                 const std::vector<int>& checkpoints) {
    require(u.knots() == m.steps() + 1, ErrorCode::InvalidArgument, "u must cover every knot");
    return martingale_report(m, batch, checkpoints,
                             [&](int, int k, const Point& y) { return interpolate(m.grid, u.values[k], y); });
}

MartingaleReport martingale_test(const Model& m, const SpdeSolution& u, const NoiseLattice& lat,
                                 const FkPathBatch& batch, const std::vector<int>& checkpoints) {
    require(lat.components() == batch.components, ErrorCode::InvalidArgument,
            "lattice and paths have different noise dimensions");
    return martingale_report(m, batch, checkpoints, [&](int p, int k, const Point& y) {
        const int node = snapped_node(lat, batch, p, k);
        return interpolate(m.grid, u.u.value(k, node), y);
    });
}

nlohmann::json MartingaleReport::to_json() const {
    nlohmann::json j;
    j["knots"] = knots;
    j["times"] = times;
    j["m"] = m;
    j["diff"] = diff;
    j["se"] = se;
    j["max_deviation"] = max_deviation;
    j["worst_ratio_to_3se"] = worst_ratio;
    j["pass"] = pass;
    return j;
}

CouplingBias coupling_bias(const FkPathBatch& batch) {
    CouplingBias b;
    if (batch.paths == 0) return b;
    double sq = 0.0;
    for (double g : batch.w_gap) {
        b.mean_gap += g;
        sq += g * g;
    }
    b.mean_gap /= batch.paths;
    b.rms_gap = std::sqrt(sq / batch.paths);
    return b;
}

}  // namespace nlspde
