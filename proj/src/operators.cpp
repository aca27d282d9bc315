#include "nlspde/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "nlspde/error.hpp"

namespace nlspde {

namespace {

constexpr double kSymmetryTol = 1e-12;

std::string where(const Point& x, double t) {
    return "(x=" + std::to_string(x[0]) + "," + std::to_string(x[1]) +
           ", t=" + std::to_string(t) + ")";
}

void check_finite(double v, const char* name, const Point& x, double t) {
    if (!std::isfinite(v)) {
        throw Error(ErrorCode::Coefficient,
                    std::string("non-finite coefficient ") + name + " at " + where(x, t));
    }
}

Mat2 sample_b(const CoefficientSet& c, const Grid& g, const Point& x, double t) {
    require(static_cast<bool>(c.b), ErrorCode::Coefficient, "coefficient b is not sampled");
    Mat2 b = c.b(x, t);
    for (int i = 0; i < g.dim(); ++i) {
        for (int j = 0; j < g.dim(); ++j) check_finite(b(i, j), "b", x, t);
    }
    if (g.dim() == 2 && std::abs(b(0, 1) - b(1, 0)) > kSymmetryTol) {
        throw Error(ErrorCode::Coefficient, "b is not symmetric at " + where(x, t));
    }
    return b;
}

Vec2 sample_vec(const VectorField& f, const char* name, const Grid& g, const Point& x, double t) {
    require(static_cast<bool>(f), ErrorCode::Coefficient,
            std::string("coefficient ") + name + " is not sampled");
    Vec2 v = f(x, t);
    for (int d = 0; d < g.dim(); ++d) check_finite(v[d], name, x, t);
    return v;
}

double sample_scalar(const ScalarField& f, const char* name, const Point& x, double t) {
    require(static_cast<bool>(f), ErrorCode::Coefficient,
            std::string("coefficient ") + name + " is not sampled");
    const double v = f(x, t);
    check_finite(v, name, x, t);
    return v;
}

// Accumulates one row of a stencil; contributions landing on boundary
// nodes are dropped (homogeneous Dirichlet data).
class StencilBuilder {
public:
    explicit StencilBuilder(const Grid& g) : g_(g) {
        trip_.reserve(static_cast<std::size_t>(g.size()) * (g.dim() == 2 ? 9 : 3));
    }

    void row(int idx) {
        idx_ = idx;
        ij_ = g_.multi_index(idx);
    }

    void add(int di, int dj, double value) {
        const int col = g_.flat(ij_[0] + di, ij_[1] + dj);
        if (col >= 0 && value != 0.0) trip_.emplace_back(idx_, col, value);
    }

    Point at(int di, int dj) const {
        Point x{g_.coord(0, ij_[0] + di), 0.0};
        if (g_.dim() == 2) x[1] = g_.coord(1, ij_[1] + dj);
        return x;
    }

    Point half(int d, double s) const {
        Point x = at(0, 0);
        x[d] += s * g_.h(d);
        return x;
    }

    SpMat finish() {
        SpMat m(g_.size(), g_.size());
        m.setFromTriplets(trip_.begin(), trip_.end());
        m.makeCompressed();
        return m;
    }

private:
    const Grid& g_;
    std::vector<Eigen::Triplet<double>> trip_;
    int idx_ = 0;
    std::array<int, 2> ij_{};
};

// Unit offset along axis d.
constexpr std::array<int, 2> unit(int d, int s) { return d == 0 ? std::array{s, 0} : std::array{0, s}; }

void add_flux_diffusion(StencilBuilder& sb, const CoefficientSet& c, const Grid& g, double t) {
    for (int d = 0; d < g.dim(); ++d) {
        const double inv = 1.0 / (g.h(d) * g.h(d));
        const double bp = sample_b(c, g, sb.half(d, 0.5), t)(d, d);
        const double bm = sample_b(c, g, sb.half(d, -0.5), t)(d, d);
        const auto p = unit(d, 1);
        const auto m = unit(d, -1);
        sb.add(p[0], p[1], bp * inv);
        sb.add(m[0], m[1], bm * inv);
        sb.add(0, 0, -(bp + bm) * inv);
    }
    if (g.dim() == 2) {
        // d_d(b_de d_e v) for (d, e) = (0, 1) and (1, 0); b_de sampled at the
        // neighbor where the outer difference lands.
        const double cc = 1.0 / (4 * g.h(0) * g.h(1));
        for (int d = 0; d < 2; ++d) {
            const int e = 1 - d;
            for (int s : {1, -1}) {
                const auto od = unit(d, s);
                const double bde = sample_b(c, g, sb.at(od[0], od[1]), t)(d, e);
                const auto pe = unit(e, 1);
                const auto me = unit(e, -1);
                sb.add(od[0] + pe[0], od[1] + pe[1], s * bde * cc);
                sb.add(od[0] + me[0], od[1] + me[1], -s * bde * cc);
            }
        }
    }
}

void add_first_order(StencilBuilder& sb, const Grid& g, const Vec2& coef) {
    for (int d = 0; d < g.dim(); ++d) {
        const double s = coef[d] / (2 * g.h(d));
        const auto p = unit(d, 1);
        const auto m = unit(d, -1);
        sb.add(p[0], p[1], s);
        sb.add(m[0], m[1], -s);
    }
}

// -div(f u) with f sampled at the neighbors.
void add_first_order_adjoint(StencilBuilder& sb, const Grid& g,
                             const std::function<Vec2(const Point&)>& field) {
    for (int d = 0; d < g.dim(); ++d) {
        const auto p = unit(d, 1);
        const auto m = unit(d, -1);
        const double fp = field(sb.at(p[0], p[1]))[d];
        const double fm = field(sb.at(m[0], m[1]))[d];
        sb.add(p[0], p[1], -fp / (2 * g.h(d)));
        sb.add(m[0], m[1], fm / (2 * g.h(d)));
    }
}

Vec2 drift_of(const CoefficientSet& c, const Grid& g, const Point& x, double t) {
    return c.form == OperatorForm::Divergence ? sample_vec(c.f, "f", g, x, t)
                                               : sample_vec(c.f_tilde, "f~", g, x, t);
}

double zero_order_of(const CoefficientSet& c, const Point& x, double t) {
    return c.form == OperatorForm::Divergence ? sample_scalar(c.lambda, "lambda", x, t)
                                               : sample_scalar(c.lambda_tilde, "lambda~", x, t);
}

void check_component(const CoefficientSet& c, int i) {
    require(i >= 0 && i < c.noise_count(), ErrorCode::InvalidArgument,
            "noise component " + std::to_string(i) + " out of range [0," +
                std::to_string(c.noise_count()) + ")");
    require(static_cast<std::size_t>(c.noise_count()) == c.beta_bar.size(),
            ErrorCode::Coefficient, "beta and beta_bar have different lengths");
}

}  // namespace

OperatorMatrix assemble_A(const CoefficientSet& c, const Grid& g, double t) {
    StencilBuilder sb(g);
    const double cross = g.dim() == 2 ? 1.0 / (4 * g.h(0) * g.h(1)) : 0.0;
    for (int idx = 0; idx < g.size(); ++idx) {
        sb.row(idx);
        const Point x = sb.at(0, 0);
        if (c.form == OperatorForm::Divergence) {
            add_flux_diffusion(sb, c, g, t);
        } else {
            const Mat2 b = sample_b(c, g, x, t);
            for (int d = 0; d < g.dim(); ++d) {
                const double inv = 1.0 / (g.h(d) * g.h(d));
                const auto p = unit(d, 1);
                const auto m = unit(d, -1);
                sb.add(p[0], p[1], b(d, d) * inv);
                sb.add(m[0], m[1], b(d, d) * inv);
                sb.add(0, 0, -2 * b(d, d) * inv);
            }
            if (g.dim() == 2) {
                const double w = 2 * b(0, 1) * cross;
                sb.add(1, 1, w);
                sb.add(-1, -1, w);
                sb.add(1, -1, -w);
                sb.add(-1, 1, -w);
            }
        }
        add_first_order(sb, g, drift_of(c, g, x, t));
        sb.add(0, 0, zero_order_of(c, x, t));
    }
    return OperatorMatrix{sb.finish(), g.weight(), {OperatorKind::A, -1, t}};
}

OperatorMatrix assemble_B(const CoefficientSet& c, const Grid& g, double t, int i,
                          bool enforce_boundary_vanishing) {
    check_component(c, i);
    if (enforce_boundary_vanishing) {
        auto check = [&](const Point& x) {
            const Vec2 v = sample_vec(c.beta[i], "beta", g, x, t);
            for (int d = 0; d < g.dim(); ++d) {
                if (std::abs(v[d]) > 1e-12) {
                    throw Error(ErrorCode::Coefficient,
                                "beta_" + std::to_string(i) + " does not vanish on the boundary at " +
                                    where(x, t));
                }
            }
        };
        if (g.dim() == 1) {
            check({g.axis(0).lo, 0.0});
            check({g.axis(0).hi, 0.0});
        } else {
            for (int a = -1; a <= g.n(0); ++a) {
                check({g.coord(0, a), g.axis(1).lo});
                check({g.coord(0, a), g.axis(1).hi});
            }
            for (int b2 = -1; b2 <= g.n(1); ++b2) {
                check({g.axis(0).lo, g.coord(1, b2)});
                check({g.axis(0).hi, g.coord(1, b2)});
            }
        }
    }
    StencilBuilder sb(g);
    for (int idx = 0; idx < g.size(); ++idx) {
        sb.row(idx);
        const Point x = sb.at(0, 0);
        add_first_order(sb, g, sample_vec(c.beta[i], "beta", g, x, t));
        sb.add(0, 0, sample_scalar(c.beta_bar[i], "beta_bar", x, t));
    }
    return OperatorMatrix{sb.finish(), g.weight(), {OperatorKind::B, i, t}};
}

AdjointSet assemble_adjoints(const CoefficientSet& c, const Grid& g, double t) {
    StencilBuilder sb(g);
    const double cross = g.dim() == 2 ? 1.0 / (4 * g.h(0) * g.h(1)) : 0.0;
    for (int idx = 0; idx < g.size(); ++idx) {
        sb.row(idx);
        const Point x = sb.at(0, 0);
        if (c.form == OperatorForm::Divergence) {
            add_flux_diffusion(sb, c, g, t);
        } else {
            // sum d_dd(b_dd u) + 2 d_01(b_01 u), b sampled where u is.
            for (int d = 0; d < g.dim(); ++d) {
                const double inv = 1.0 / (g.h(d) * g.h(d));
                const auto p = unit(d, 1);
                const auto m = unit(d, -1);
                sb.add(p[0], p[1], sample_b(c, g, sb.at(p[0], p[1]), t)(d, d) * inv);
                sb.add(m[0], m[1], sample_b(c, g, sb.at(m[0], m[1]), t)(d, d) * inv);
                sb.add(0, 0, -2 * sample_b(c, g, x, t)(d, d) * inv);
            }
            if (g.dim() == 2) {
                for (auto [di, dj, sgn] : {std::array{1, 1, 1}, std::array{-1, -1, 1},
                                           std::array{1, -1, -1}, std::array{-1, 1, -1}}) {
                    const double b01 = sample_b(c, g, sb.at(di, dj), t)(0, 1);
                    sb.add(di, dj, sgn * 2 * b01 * cross);
                }
            }
        }
        add_first_order_adjoint(sb, g, [&](const Point& y) { return drift_of(c, g, y, t); });
        sb.add(0, 0, zero_order_of(c, x, t));
    }
    AdjointSet out;
    out.a_star = OperatorMatrix{sb.finish(), g.weight(), {OperatorKind::AStar, -1, t}};

    for (int i = 0; i < c.noise_count(); ++i) {
        check_component(c, i);
        StencilBuilder bb(g);
        for (int idx = 0; idx < g.size(); ++idx) {
            bb.row(idx);
            const Point x = bb.at(0, 0);
            add_first_order_adjoint(bb, g, [&](const Point& y) {
                return sample_vec(c.beta[i], "beta", g, y, t);
            });
            bb.add(0, 0, sample_scalar(c.beta_bar[i], "beta_bar", x, t));
        }
        out.b_star.push_back(OperatorMatrix{bb.finish(), g.weight(), {OperatorKind::BStar, i, t}});
    }
    return out;
}

CoercivityReport check_coercivity(const CoefficientSet& c, const Grid& g,
                                  std::span<const double> times, int random_directions,
                                  std::uint64_t seed) {
    CoercivityReport rep;
    rep.claimed = c.delta;
    rep.margin = std::numeric_limits<double>::infinity();
    rep.sampled_margin = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2 * M_PI);
    std::vector<Vec2> dirs;
    dirs.emplace_back(1.0, 0.0);
    if (g.dim() == 2) {
        dirs.emplace_back(0.0, 1.0);
    }
    for (int r = 0; r < random_directions; ++r) {
        if (g.dim() == 1) {
            dirs.emplace_back(r % 2 == 0 ? 1.0 : -1.0, 0.0);
        } else {
            const double a = angle(rng);
            dirs.emplace_back(std::cos(a), std::sin(a));
        }
    }

    for (double t : times) {
        for (int idx = 0; idx < g.size(); ++idx) {
            const Point x = g.node(idx);
            Mat2 s = sample_b(c, g, x, t);
            for (int i = 0; i < c.noise_count(); ++i) {
                const Vec2 beta = sample_vec(c.beta[i], "beta", g, x, t);
                s -= 0.5 * beta * beta.transpose();
            }
            double exact = 0.0;
            if (g.dim() == 1) {
                exact = s(0, 0);
            } else {
                const double tr = s(0, 0) + s(1, 1);
                const double diff = s(0, 0) - s(1, 1);
                const double off = 0.5 * (s(0, 1) + s(1, 0));
                exact = 0.5 * tr - 0.5 * std::sqrt(diff * diff + 4 * off * off);
            }
            if (exact < rep.margin) {
                rep.margin = exact;
                rep.worst_point = x;
                rep.worst_time = t;
            }
            for (const Vec2& y : dirs) {
                const double q = g.dim() == 1 ? s(0, 0) * y[0] * y[0] : y.dot(s * y);
                rep.sampled_margin = std::min(rep.sampled_margin, q);
            }
        }
    }
    rep.pass = rep.margin > 0.0 && rep.margin >= rep.claimed - 1e-12;
    return rep;
}

OperatorSequence::OperatorSequence(std::vector<OperatorMatrix> ops, bool autonomous)
    : ops_(std::move(ops)), autonomous_(autonomous) {}

namespace {

template <class Make>
OperatorSequence build_sequence(const CoefficientSet& c, const TimeGrid& tg, Make&& make) {
    std::vector<OperatorMatrix> ops;
    if (c.time_independent) {
        ops.push_back(make(0.0));
        return OperatorSequence(std::move(ops), true);
    }
    ops.reserve(tg.knots().size());
    for (double t : tg.knots()) ops.push_back(make(t));
    return OperatorSequence(std::move(ops), false);
}

}  // namespace

OperatorSequence OperatorSequence::generator(const CoefficientSet& c, const Grid& g,
                                             const TimeGrid& tg) {
    return build_sequence(c, tg, [&](double t) { return assemble_A(c, g, t); });
}

OperatorSequence OperatorSequence::noise(const CoefficientSet& c, const Grid& g,
                                         const TimeGrid& tg, int i) {
    return build_sequence(c, tg, [&](double t) { return assemble_B(c, g, t, i); });
}

OperatorSequence OperatorSequence::generator_adjoint(const CoefficientSet& c, const Grid& g,
                                                     const TimeGrid& tg) {
    CoefficientSet no_noise = c;
    no_noise.beta.clear();
    no_noise.beta_bar.clear();
    return build_sequence(c, tg, [&](double t) { return assemble_adjoints(no_noise, g, t).a_star; });
}

OperatorSequence OperatorSequence::noise_adjoint(const CoefficientSet& c, const Grid& g,
                                                 const TimeGrid& tg, int i) {
    return build_sequence(c, tg, [&](double t) { return assemble_adjoints(c, g, t).b_star.at(i); });
}

}  // namespace nlspde
