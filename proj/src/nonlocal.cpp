#include "nlspde/nonlocal.hpp"

#include <cmath>
#include <map>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace nlspde {

NonlocalCondition NonlocalCondition::with_kappa(Direction direction, double kappa) {
    NonlocalCondition c;
    c.direction = direction;
    c.kappa = kappa;
    return c;
}

double NonlocalCondition::kernel_mass(const TimeGrid& tg) const {
    double mu = 0.0;
    if (!k0.empty()) {
        const auto w = tg.trapezoid_weights();
        for (std::size_t k = 0; k < k0.size(); ++k) mu += w[k] * std::abs(k0[k]);
    }
    for (const PointMass& p : masses) mu += std::abs(p.k);
    if (kappa) mu += std::abs(*kappa);
    return mu;
}

bool NonlocalCondition::has_spatial_kernel() const {
    if (k0_kernel) return true;
    for (const PointMass& p : masses) {
        if (p.kernel) return true;
    }
    return false;
}

void NonlocalCondition::validate(const TimeGrid& tg, int grid_size) const {
    require(k0.empty() || static_cast<int>(k0.size()) == tg.steps() + 1, ErrorCode::InvalidArgument,
            "k0 must be sampled on every knot");
    for (double v : k0) require(std::isfinite(v), ErrorCode::InvalidArgument, "k0 is not finite");
    auto check_kernel = [&](const std::optional<Mat>& K) {
        require(!K || (K->rows() == grid_size && K->cols() == grid_size), ErrorCode::InvalidArgument,
                "spatial kernel must be M x M");
    };
    check_kernel(k0_kernel);
    const double T = tg.horizon();
    for (const PointMass& p : masses) {
        check_kernel(p.kernel);
        require(std::isfinite(p.k) && std::isfinite(p.t), ErrorCode::InvalidArgument, "mass is not finite");
        require(0.0 <= p.t && p.t <= T * (1 + 1e-12), ErrorCode::InvalidArgument,
                "mass time outside [0, T]");
        if (direction == Direction::Forward) {
            require(p.t > 1e-12 * T, ErrorCode::InvalidArgument,
                    "forward condition needs mass times in (0, T]");
        } else {
            require(p.t < T * (1 - 1e-12), ErrorCode::InvalidArgument,
                    "backward condition needs mass times in [0, T)");
        }
        if (!tg.find_knot(p.t)) {
            throw Error(ErrorCode::NotAKnot, "mass time " + std::to_string(p.t) + " is not a knot");
        }
    }
    if (kappa) require(std::isfinite(*kappa), ErrorCode::InvalidArgument, "kappa is not finite");
}

namespace {

struct ResolvedMass {
    double weight = 0.0;
    std::optional<Mat> kernel;
};

// Point masses keyed by knot, duplicates summed (kernel masses kept apart).
std::vector<std::pair<int, ResolvedMass>> resolve(const NonlocalCondition& cond, const TimeGrid& tg) {
    std::map<int, double> scalar;
    std::vector<std::pair<int, ResolvedMass>> out;
    for (const PointMass& p : cond.masses) {
        const int k = *tg.find_knot(p.t);
        if (p.kernel) {
            out.push_back({k, ResolvedMass{p.k, p.kernel}});
        } else {
            scalar[k] += p.k;
        }
    }
    if (cond.kappa) scalar[cond.direction == Direction::Forward ? tg.steps() : 0] += *cond.kappa;
    for (auto [k, w] : scalar) out.push_back({k, ResolvedMass{w, std::nullopt}});
    return out;
}

}  // namespace

Vec apply_gamma(const NonlocalCondition& cond, const TimeGrid& tg, const std::vector<Vec>& v) {
    require(static_cast<int>(v.size()) == tg.steps() + 1, ErrorCode::InvalidArgument,
            "gamma needs values on every knot");
    Vec out = Vec::Zero(v.front().size());
    if (!cond.k0.empty()) {
        const auto w = tg.trapezoid_weights();
        Vec integral = Vec::Zero(out.size());
        for (int k = 0; k <= tg.steps(); ++k) {
            if (cond.k0[k] != 0.0) integral += (w[k] * cond.k0[k]) * v[k];
        }
        out += cond.k0_kernel ? Vec(*cond.k0_kernel * integral) : integral;
    }
    for (const auto& [k, mass] : resolve(cond, tg)) {
        out += mass.kernel ? Vec(mass.weight * (*mass.kernel * v[k])) : Vec(mass.weight * v[k]);
    }
    return out;
}

Vec apply_gamma(const NonlocalCondition& cond, const Trajectory& u, const TimeGrid& tg) {
    return apply_gamma(cond, tg, u.values);
}

Vec apply_gamma(const NonlocalCondition& cond, const AdaptedField& u, const NoiseLattice& lat) {
    std::vector<Vec> means(lat.steps() + 1);
    for (int k = 0; k <= lat.steps(); ++k) means[k] = mean(lat, u.at(k), k);
    return apply_gamma(cond, lat.time_grid(), means);
}

namespace {

Trajectory propagate(const NonlocalCondition& cond, const Model& m, const KnotForcing& phi, const Vec& datum) {
    return cond.direction == Direction::Forward ? solve_forward_cauchy(m.stepper, phi, datum)
                                                : solve_backward_cauchy(m.stepper, phi, datum);
}

}  // namespace

Mat assemble_Q(const NonlocalCondition& cond, const Model& m, Exec exec) {
    const int M = m.size();
    require(M <= kDenseGuard, ErrorCode::Guard, "Q needs M <= " + std::to_string(kDenseGuard));
    cond.validate(m.time, M);
    Mat Q(M, M);
    auto column = [&](int j) { Q.col(j) = apply_gamma(cond, propagate(cond, m, {}, Vec::Unit(M, j)), m.time); };
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int j = 0; j < M; ++j) column(j);
    } else {
        for (int j = 0; j < M; ++j) column(j);
    }
    return Q;
}

Vec assemble_T_rhs(const NonlocalCondition& cond, const Model& m, const KnotForcing& phi) {
    cond.validate(m.time, m.size());
    if (phi.empty()) return Vec::Zero(m.size());
    return apply_gamma(cond, propagate(cond, m, phi, Vec::Zero(m.size())), m.time);
}

Vec singular_value_report(const Mat& Q) {
    if (Q.size() == 0) return Vec();
    Eigen::BDCSVD<Mat> svd(Q);
    return svd.singularValues();
}

NeumannResult neumann_iterate(const Mat& Q, const Vec& rhs, double tol, int max_iter) {
    const double q = Q.size() ? singular_value_report(Q)(0) : 0.0;
    if (!(q < 1.0)) {
        throw Error(ErrorCode::NeumannDivergence,
                    "Neumann series needs ||Q|| < 1, got " + std::to_string(q));
    }
    NeumannResult r;
    r.x = rhs;
    Vec term = rhs;
    // Remaining tail after adding `term` is at most q/(1-q) ||term||.
    const double factor = q > 0.0 ? q / (1.0 - q) : 0.0;
    while (r.iterations < max_iter) {
        if (factor * term.norm() <= tol) {
            r.converged = true;
            break;
        }
        term = Q * term;
        r.x += term;
        ++r.iterations;
    }
    return r;
}

std::string to_string(VerdictStatus s) {
    switch (s) {
        case VerdictStatus::GuaranteedSmallNorm: return "GuaranteedSmallNorm";
        case VerdictStatus::GuaranteedKernelMass: return "GuaranteedKernelMass";
        case VerdictStatus::GuaranteedKappa: return "GuaranteedKappa";
        case VerdictStatus::FredholmNumeric: return "FredholmNumeric";
        case VerdictStatus::SingularDetected: return "SingularDetected";
    }
    return "unknown";
}

nlohmann::json SolveVerdict::to_json() const {
    nlohmann::json j;
    j["status"] = to_string(status);
    j["certificate"] = certificate;
    j["guaranteed"] = guaranteed();
    if (kappa_form) j["kappa_check"] = kappa_guaranteed ? "GuaranteedKappa" : "NotGuaranteedKappa";
    j["q_norm"] = q_norm;
    j["kernel_mass"] = kernel_mass;
    if (kappa) j["kappa"] = *kappa;
    j["min_sigma_I_minus_Q"] = min_sigma;
    j["max_zero_order"] = max_lambda;
    j["notes"] = notes;
    return j;
}

SolveVerdict verdict(const NonlocalCondition& cond, const Model& m, const Mat& Q) {
    SolveVerdict v;
    v.kernel_mass = cond.kernel_mass(m.time);
    v.kappa = cond.kappa;
    const Vec sq = singular_value_report(Q);
    v.q_norm = sq.size() ? sq(0) : 0.0;
    const Vec si = singular_value_report(Mat::Identity(Q.rows(), Q.cols()) - Q);
    v.min_sigma = si.size() ? si(si.size() - 1) : 1.0;

    // Zero-order coefficient of the representation each criterion is stated in.
    const bool forward = cond.direction == Direction::Forward;
    double lam = -INFINITY;
    bool bar_zero = true;
    for (int k = 0; k <= m.steps(); ++k) {
        const double t = m.time.knot(k);
        for (int i = 0; i < m.size(); ++i) {
            const Point x = m.grid.node(i);
            lam = std::max(lam, forward ? zero_order_adjoint_form(m.coeffs, m.grid, x, t)
                                        : zero_order_nondivergence(m.coeffs, m.grid, x, t));
            for (const ScalarField& bb : m.coeffs.beta_bar) {
                if (bb && std::abs(bb(x, t)) > 1e-12) bar_zero = false;
            }
        }
    }
    v.max_lambda = lam;
    const bool lam_ok = lam <= 1e-10;

    const bool pure_kappa = cond.kappa && cond.k0.empty() && cond.masses.empty();
    if (!forward && pure_kappa) {
        v.kappa_form = true;
        const double kap = *cond.kappa;
        v.kappa_guaranteed = kap >= -1.0 && kap <= 1.0 && lam_ok && bar_zero;
        if (!(kap >= -1.0 && kap <= 1.0)) v.notes.push_back("kappa outside [-1, 1]");
        if (!lam_ok) v.notes.push_back("zero-order coefficient is positive somewhere");
        if (!bar_zero) v.notes.push_back("noise zero-order coefficient does not vanish");
    }

    if (v.min_sigma < kSingularThreshold) {
        v.status = VerdictStatus::SingularDetected;
        v.certificate = "none";
        v.notes.push_back("I - Q has a numerically nontrivial kernel");
    } else if (v.kappa_guaranteed) {
        v.status = VerdictStatus::GuaranteedKappa;
        v.certificate = "quasi-periodic condition with |kappa| <= 1";
    } else if (forward && !cond.has_spatial_kernel() && v.kernel_mass <= 1.0 && lam_ok) {
        v.status = VerdictStatus::GuaranteedKernelMass;
        v.certificate = "kernel mass <= 1 with nonpositive zero-order coefficient";
    } else if (v.q_norm < 1.0) {
        v.status = VerdictStatus::GuaranteedSmallNorm;
        v.certificate = "||Q|| < 1";
    } else {
        v.status = VerdictStatus::FredholmNumeric;
        v.certificate = "none; I - Q numerically invertible";
    }
    return v;
}

nlohmann::json SolveReport::to_json() const {
    nlohmann::json j;
    j["verdict"] = verdict.to_json();
    j["method"] = method == SolveMethod::Direct ? "direct" : "neumann";
    j["iterations"] = iterations;
    j["residual_h0"] = residual_h0;
    j["residual_max"] = residual_max;
    return j;
}

namespace {

// Solves (I - Q) x = rhs after screening Q; fills verdict and iteration count.
Vec solve_datum(const NonlocalCondition& cond, const Model& m, const Mat& Q, const Vec& rhs,
                const SolveOptions& opt, SolveReport& report) {
    report.verdict = verdict(cond, m, Q);
    report.method = opt.method;
    if (report.verdict.status == VerdictStatus::SingularDetected) throw SingularError(report.verdict);
    if (opt.method == SolveMethod::Neumann) {
        NeumannResult r = neumann_iterate(Q, rhs, opt.tol, opt.max_iter);
        report.iterations = r.iterations;
        if (!r.converged) {
            throw Error(ErrorCode::NeumannDivergence,
                        "Neumann series did not converge in " + std::to_string(opt.max_iter) + " terms");
        }
        return r.x;
    }
    report.iterations = 1;
    const Mat I = Mat::Identity(Q.rows(), Q.cols());
    return Eigen::PartialPivLU<Mat>(I - Q).solve(rhs);
}

void record_residual(SolveReport& report, const Grid& g, const Vec& r) {
    report.residual_h0 = std::max(report.residual_h0, norm_h0(g, r));
    if (r.size()) report.residual_max = std::max(report.residual_max, r.cwiseAbs().maxCoeff());
}

}  // namespace

NonlocalPdeResult solve_nonlocal(const NonlocalCondition& cond, const Model& m, const KnotForcing& phi,
                                 const Vec& xi, const SolveOptions& opt) {
    require(xi.size() == m.size(), ErrorCode::InvalidArgument, "xi has wrong length");
    const Mat Q = assemble_Q(cond, m, opt.exec);
    const Vec rhs = xi + assemble_T_rhs(cond, m, phi);
    NonlocalPdeResult out;
    out.datum = solve_datum(cond, m, Q, rhs, opt, out.report);
    out.u = propagate(cond, m, phi, out.datum);
    const Vec& end = cond.direction == Direction::Forward ? out.u.front() : out.u.back();
    record_residual(out.report, m.grid, end - apply_gamma(cond, out.u, m.time) - xi);
    return out;
}

NonlocalSpdeResult solve_nonlocal_backward_spde(const NonlocalCondition& cond, const Model& m,
                                                const NoiseLattice& lat, const Forcing& phi,
                                                const Mat& xi, const SolveOptions& opt) {
    require(cond.direction == Direction::Backward, ErrorCode::InvalidArgument,
            "backward SPDE needs a backward condition");
    const int K = lat.steps();
    require(xi.rows() == m.size() && xi.cols() == lat.nodes(K), ErrorCode::InvalidArgument,
            "xi must give a grid vector on every leaf");
    const Mat Q = assemble_Q(cond, m, opt.exec);
    const SpdeSolution particular = solve_backward_spde(m, lat, xi, phi, opt.exec);
    const Vec rhs = apply_gamma(cond, particular.u, lat);

    NonlocalSpdeResult out;
    const Vec phi0 = solve_datum(cond, m, Q, rhs, opt, out.report);
    out.datum = xi.colwise() + phi0;
    out.u = solve_backward_spde(m, lat, out.datum, phi, opt.exec);
    const Vec g = apply_gamma(cond, out.u.u, lat);
    for (int leaf = 0; leaf < lat.nodes(K); ++leaf) {
        record_residual(out.report, m.grid, out.u.u.at(K).col(leaf) - g - xi.col(leaf));
    }
    return out;
}

NonlocalSpdeResult solve_nonlocal_forward_spde(const NonlocalCondition& cond, const Model& m,
                                               const NoiseLattice& lat, const Forcing& phi,
                                               const std::vector<Forcing>& h, const Vec& xi,
                                               const SolveOptions& opt) {
    require(cond.direction == Direction::Forward, ErrorCode::InvalidArgument,
            "forward SPDE needs a forward condition");
    require(xi.size() == m.size(), ErrorCode::InvalidArgument, "xi has wrong length");
    const Mat Q = assemble_Q(cond, m, opt.exec);
    // Noise terms are mean zero given the past, so Gamma sees the mean forcing only.
    KnotForcing mean_phi;
    if (!phi.zero()) {
        for (int k = 0; k <= lat.steps(); ++k) {
            if (phi.is_adapted()) {
                if (k == lat.steps()) {
                    mean_phi.push_back(mean_phi.back());
                    continue;
                }
                Mat vals(m.size(), lat.nodes(k));
                for (int node = 0; node < lat.nodes(k); ++node) vals.col(node) = phi.value(k, node);
                mean_phi.push_back(mean(lat, vals, k));
            } else {
                mean_phi.push_back(phi.value(k, 0));
            }
        }
    }
    const Vec rhs = xi + assemble_T_rhs(cond, m, mean_phi);

    NonlocalSpdeResult out;
    const Vec datum = solve_datum(cond, m, Q, rhs, opt, out.report);
    out.datum = datum;
    out.u = solve_forward_spde(m, lat, datum, phi, h, opt.exec);
    record_residual(out.report, m.grid, datum - apply_gamma(cond, out.u.u, lat) - xi);
    return out;
}

}  // namespace nlspde
