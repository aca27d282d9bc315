#include "nlspde/spde.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <string>

#include "nlspde/error.hpp"
#include "nlspde/io.hpp"

namespace nlspde {

Forcing Forcing::deterministic(KnotForcing values) {
    Forcing f;
    f.knots_ = std::move(values);
    return f;
}

Forcing Forcing::adapted(AdaptedField field) {
    Forcing f;
    f.field_ = std::move(field);
    return f;
}

Vec Forcing::value(int k, int node) const {
    if (field_) {
        require(field_->defined(k), ErrorCode::InvalidArgument,
                "forcing undefined at step " + std::to_string(k));
        return field_->value(k, node);
    }
    return knots_.at(k);
}

namespace {

void check_noise(const Model& m, const NoiseLattice& lat, const std::vector<Forcing>& h) {
    require(m.noise_count() == 0 || m.noise_count() == lat.components(), ErrorCode::InvalidArgument,
            "coefficient noise count differs from the lattice component count");
    require(static_cast<int>(h.size()) <= lat.components(), ErrorCode::InvalidArgument,
            "more h terms than noise components");
    require(lat.steps() == m.steps(), ErrorCode::InvalidArgument,
            "lattice and model have different time grids");
}

template <class F>
void for_nodes(int count, Exec exec, F&& body) {
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < count; ++i) body(i);
    } else {
        for (int i = 0; i < count; ++i) body(i);
    }
}

}  // namespace

SpdeSolution solve_forward_spde(const Model& m, const NoiseLattice& lat, const Vec& u0,
                                const Forcing& phi, const std::vector<Forcing>& h, Exec exec) {
    check_noise(m, lat, h);
    const int M = m.size();
    require(u0.size() == M, ErrorCode::InvalidArgument, "initial datum has wrong length");
    const ThetaStepper& s = m.stepper;
    const int B = lat.branches();
    const int N = lat.components();

    SpdeSolution sol;
    sol.direction = Direction::Forward;
    sol.u = AdaptedField(lat, M);
    sol.u.set(0, u0);
    for (int k = 0; k < lat.steps(); ++k) {
        const double dt = m.time.dt(k);
        const Mat& cur = sol.u.at(k);
        const int nodes = lat.nodes(k);
        std::vector<Vec> cand(static_cast<std::size_t>(nodes) * B);
        for_nodes(nodes, exec, [&](int node) {
            const Vec u = cur.col(node);
            Vec base = s.explicit_forward(k, u);
            if (!phi.zero()) base += dt * phi.value(k, node);
            std::vector<Vec> diffusion(N, Vec::Zero(M));
            for (int i = 0; i < N; ++i) {
                if (i < m.noise_count()) diffusion[i] += m.B[i].at(k) * u;
                if (i < static_cast<int>(h.size()) && !h[i].zero()) diffusion[i] += h[i].value(k, node);
            }
            for (int b = 0; b < B; ++b) {
                Vec rhs = base;
                for (int i = 0; i < N; ++i) rhs += diffusion[i] * lat.increment(k, b, i);
                cand[static_cast<std::size_t>(node) * B + b] = s.solve_forward(k, rhs);
            }
        });
        Mat next(M, lat.nodes(k + 1));
        std::vector<char> seen(lat.nodes(k + 1), 0);
        for (int node = 0; node < nodes; ++node) {
            for (int b = 0; b < B; ++b) {
                const int c = lat.child(k, node, b);
                const Vec& v = cand[static_cast<std::size_t>(node) * B + b];
                if (!seen[c]) {
                    next.col(c) = v;
                    seen[c] = 1;
                    continue;
                }
                const double scale = 1.0 + std::max(v.cwiseAbs().maxCoeff(), next.col(c).cwiseAbs().maxCoeff());
                if ((v - next.col(c)).cwiseAbs().maxCoeff() > 1e-12 * scale) {
                    throw Error(ErrorCode::PathDependent,
                                "forward solution is path-dependent at step " + std::to_string(k + 1) +
                                    "; use a tree lattice");
                }
            }
        }
        sol.u.set(k + 1, std::move(next));
    }
    return sol;
}

SpdeSolution solve_backward_spde(const Model& m, const NoiseLattice& lat, const Mat& terminal,
                                 const Forcing& phi, Exec exec) {
    check_noise(m, lat, {});
    const int M = m.size();
    const int K = lat.steps();
    require(terminal.rows() == M && terminal.cols() == lat.nodes(K), ErrorCode::InvalidArgument,
            "terminal datum must give a grid vector on every leaf");
    const ThetaStepper& s = m.stepper;
    const int N = lat.components();

    SpdeSolution sol;
    sol.direction = Direction::Backward;
    sol.u = AdaptedField(lat, M);
    sol.chi.assign(N, AdaptedField(lat, M));
    sol.u.set(K, terminal);
    for (int k = K - 1; k >= 0; --k) {
        const double dt = m.time.dt(k);
        MartingalePart mp = martingale_part(lat, k, sol.u.at(k + 1), exec);
        sol.reconstruction_residual = std::max(sol.reconstruction_residual, mp.residual);
        const int nodes = lat.nodes(k);
        Mat cur(M, nodes);
        for_nodes(nodes, exec, [&](int node) {
            Vec rhs = s.explicit_backward(k, mp.mean.col(node));
            if (!phi.zero()) rhs += dt * phi.value(k, node);
            for (int i = 0; i < m.noise_count(); ++i) {
                rhs += dt * (m.B[i].at(k) * mp.chi[i].col(node));
            }
            cur.col(node) = s.solve_backward(k, rhs);
        });
        sol.u.set(k, std::move(cur));
        for (int i = 0; i < N; ++i) sol.chi[i].set(k, std::move(mp.chi[i]));
    }
    return sol;
}

double definition_residual(const SpdeSolution& sol, const Model& m, const NoiseLattice& lat,
                           int k1, int k2, const Forcing& phi, const std::vector<Forcing>& h) {
    require(0 <= k1 && k1 < k2 && k2 <= lat.steps(), ErrorCode::InvalidArgument,
            "definition residual needs 0 <= k1 < k2 <= K");
    const double paths = lat.nodes(k1) * std::pow(static_cast<double>(lat.branches()), k2 - k1);
    require(paths <= 1e7, ErrorCode::Guard, "too many paths for the definition residual");
    const bool backward = sol.direction == Direction::Backward;
    const int N = lat.components();
    const double th = m.theta;

    std::vector<Mat> expect(k2);
    if (backward) {
        for (int k = k1; k < k2; ++k) expect[k] = step_expectation(lat, k, sol.u.at(k + 1), Exec::Serial);
    }

    // Per-step increment of the identity along the branch taken.
    auto step_term = [&](int k, int node, int b, int c) {
        const double dt = m.time.dt(k);
        const Vec uk = sol.u.value(k, node);
        const Vec un = sol.u.value(k + 1, c);
        Vec term(uk.size());
        if (backward) {
            term = dt * (th * (m.A.at(k) * uk) + (1.0 - th) * (m.A.at(k + 1) * expect[k].col(node)));
            for (int i = 0; i < N; ++i) {
                const Vec chi = sol.chi[i].value(k, node);
                if (i < m.noise_count()) term += dt * (m.B[i].at(k) * chi);
                term -= chi * lat.increment(k, b, i);
            }
        } else {
            term = dt * (th * (m.A.at(k + 1) * un) + (1.0 - th) * (m.A.at(k) * uk));
            for (int i = 0; i < N; ++i) {
                Vec d = Vec::Zero(uk.size());
                if (i < m.noise_count()) d += m.B[i].at(k) * uk;
                if (i < static_cast<int>(h.size()) && !h[i].zero()) d += h[i].value(k, node);
                term += d * lat.increment(k, b, i);
            }
        }
        if (!phi.zero()) term += dt * phi.value(k, node);
        return term;
    };

    double worst = 0.0;
    std::function<void(int, int, int, const Vec&)> walk = [&](int k, int start, int node, const Vec& acc) {
        if (k == k2) {
            const Vec diff = backward ? Vec(sol.u.value(k1, start) - sol.u.value(k2, node) - acc)
                                      : Vec(sol.u.value(k2, node) - sol.u.value(k1, start) - acc);
            worst = std::max(worst, norm_h0(m.grid, diff));
            return;
        }
        for (int b = 0; b < lat.branches(); ++b) {
            const int c = lat.child(k, node, b);
            walk(k + 1, start, c, acc + step_term(k, node, b, c));
        }
    };
    for (int node = 0; node < lat.nodes(k1); ++node) walk(k1, node, node, Vec::Zero(m.size()));
    return worst;
}

void write_solution_csv(std::ostream& out, const SpdeSolution& sol, const NoiseLattice& lat) {
    out << "step,node,grid_index,u";
    for (std::size_t i = 0; i < sol.chi.size(); ++i) out << ",chi_" << (i + 1);
    out << '\n';
    for (int k = 0; k <= lat.steps(); ++k) {
        if (!sol.u.defined(k)) continue;
        for (int node = 0; node < lat.nodes(k); ++node) {
            for (int g = 0; g < sol.u.rows(); ++g) {
                out << k << ',' << node << ',' << g << ',' << format_double(sol.u.at(k)(g, node));
                for (const AdaptedField& chi : sol.chi) {
                    out << ',' << (chi.defined(k) ? format_double(chi.at(k)(g, node)) : "");
                }
                out << '\n';
            }
        }
    }
}

nlohmann::json solution_summary(const SpdeSolution& sol, const Model& m, const NoiseLattice& lat) {
    nlohmann::json j;
    j["direction"] = sol.direction == Direction::Forward ? "forward" : "backward";
    j["steps"] = lat.steps();
    j["components"] = lat.components();
    j["lattice_nodes"] = lat.total_nodes();
    j["grid_size"] = m.size();
    double peak = 0.0;
    for (int k = 0; k <= lat.steps(); ++k) {
        if (sol.u.defined(k)) peak = std::max(peak, sol.u.at(k).cwiseAbs().maxCoeff());
    }
    j["max_abs_u"] = peak;
    j["mean_u0_h0"] = norm_h0(m.grid, mean(lat, sol.u.at(0), 0));
    j["mean_uT_h0"] = norm_h0(m.grid, mean(lat, sol.u.at(lat.steps()), lat.steps()));
    j["reconstruction_residual"] = sol.reconstruction_residual;
    return j;
}

}  // namespace nlspde
