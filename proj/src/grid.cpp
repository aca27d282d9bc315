#include "nlspde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SparseCholesky>

#include "nlspde/error.hpp"

namespace nlspde {

Grid Grid::build(std::span<const Axis> axes, bool allow_small) {
    require(axes.size() == 1 || axes.size() == 2, ErrorCode::InvalidArgument,
            "grid dimension must be 1 or 2");
    Grid g;
    g.dim_ = static_cast<int>(axes.size());
    g.size_ = 1;
    g.weight_ = 1.0;
    const int min_n = allow_small ? 1 : 3;
    for (int d = 0; d < g.dim_; ++d) {
        const Axis& a = axes[d];
        require(std::isfinite(a.lo) && std::isfinite(a.hi) && a.lo < a.hi,
                ErrorCode::InvalidArgument,
                "degenerate interval on axis " + std::to_string(d));
        require(a.n >= min_n, ErrorCode::InvalidArgument,
                "axis " + std::to_string(d) + " needs at least " +
                    std::to_string(min_n) + " interior nodes, got " +
                    std::to_string(a.n));
        g.axes_[d] = a;
        g.h_[d] = (a.hi - a.lo) / (a.n + 1);
        g.size_ *= a.n;
        g.weight_ *= g.h_[d];
    }
    if (g.dim_ == 1) {
        g.axes_[1] = Axis{0.0, 1.0, 1};
        g.h_[1] = 1.0;
    }
    return g;
}

Grid Grid::interval(double lo, double hi, int n, bool allow_small) {
    const Axis a{lo, hi, n};
    return build(std::span<const Axis>(&a, 1), allow_small);
}

std::array<int, 2> Grid::multi_index(int idx) const {
    if (dim_ == 1) return {idx, 0};
    return {idx % axes_[0].n, idx / axes_[0].n};
}

Point Grid::node(int idx) const {
    const auto [i, j] = multi_index(idx);
    if (dim_ == 1) return {coord(0, i), 0.0};
    return {coord(0, i), coord(1, j)};
}

int Grid::flat(int i, int j) const {
    if (i < 0 || i >= axes_[0].n) return -1;
    if (dim_ == 1) return j == 0 ? i : -1;
    if (j < 0 || j >= axes_[1].n) return -1;
    return i + axes_[0].n * j;
}

TimeGrid TimeGrid::uniform(double horizon, int steps) {
    require(horizon > 0 && std::isfinite(horizon), ErrorCode::InvalidArgument,
            "horizon must be positive");
    require(steps >= 1, ErrorCode::InvalidArgument, "need at least one time step");
    std::vector<double> knots(steps + 1);
    for (int k = 0; k <= steps; ++k) knots[k] = horizon * k / steps;
    knots.back() = horizon;
    TimeGrid tg;
    tg.knots_ = std::move(knots);
    return tg;
}

TimeGrid TimeGrid::from_knots(std::vector<double> knots) {
    require(knots.size() >= 2, ErrorCode::InvalidArgument, "need at least two knots");
    require(knots.front() == 0.0, ErrorCode::InvalidArgument, "first knot must be 0");
    for (std::size_t k = 1; k < knots.size(); ++k) {
        require(knots[k] > knots[k - 1], ErrorCode::InvalidArgument,
                "knots must be strictly increasing");
    }
    TimeGrid tg;
    tg.knots_ = std::move(knots);
    return tg;
}

bool TimeGrid::is_uniform(double rel_tol) const {
    const double d0 = dt(0);
    for (int k = 1; k < steps(); ++k) {
        if (std::abs(dt(k) - d0) > rel_tol * d0) return false;
    }
    return true;
}

std::optional<int> TimeGrid::find_knot(double t, double rel_tol) const {
    const double tol = rel_tol * horizon();
    auto it = std::lower_bound(knots_.begin(), knots_.end(), t - tol);
    if (it != knots_.end() && std::abs(*it - t) <= tol) {
        return static_cast<int>(it - knots_.begin());
    }
    return std::nullopt;
}

std::vector<double> TimeGrid::trapezoid_weights() const {
    std::vector<double> w(knots_.size(), 0.0);
    for (int k = 0; k < steps(); ++k) {
        w[k] += 0.5 * dt(k);
        w[k + 1] += 0.5 * dt(k);
    }
    return w;
}

double inner_h0(const Grid& g, const Vec& u, const Vec& v) {
    return g.weight() * u.dot(v);
}

double norm_h0(const Grid& g, const Vec& u) {
    return std::sqrt(g.weight() * u.squaredNorm());
}

namespace {

// Value at full index (i, j), boundary included.
double at(const Grid& g, const Vec& u, int i, int j) {
    const int idx = g.flat(i, j);
    return idx < 0 ? 0.0 : u[idx];
}

double gradient_energy(const Grid& g, const Vec& u) {
    double sum = 0.0;
    const int n0 = g.n(0);
    const int n1 = g.dim() == 2 ? g.n(1) : 1;
    for (int j = 0; j < n1; ++j) {
        for (int i = -1; i < n0; ++i) {
            const double d = (at(g, u, i + 1, j) - at(g, u, i, j)) / g.h(0);
            sum += d * d;
        }
    }
    if (g.dim() == 2) {
        for (int i = 0; i < n0; ++i) {
            for (int j = -1; j < n1; ++j) {
                const double d = (at(g, u, i, j + 1) - at(g, u, i, j)) / g.h(1);
                sum += d * d;
            }
        }
    }
    return g.weight() * sum;
}

double hessian_energy(const Grid& g, const Vec& u) {
    double sum = 0.0;
    for (int idx = 0; idx < g.size(); ++idx) {
        const auto [i, j] = g.multi_index(idx);
        const double c = u[idx];
        const double dxx = (at(g, u, i + 1, j) - 2 * c + at(g, u, i - 1, j)) / (g.h(0) * g.h(0));
        sum += dxx * dxx;
        if (g.dim() == 2) {
            const double dyy = (at(g, u, i, j + 1) - 2 * c + at(g, u, i, j - 1)) / (g.h(1) * g.h(1));
            sum += dyy * dyy;
        }
    }
    if (g.dim() == 2) {
        for (int i = -1; i < g.n(0); ++i) {
            for (int j = -1; j < g.n(1); ++j) {
                const double dxy = (at(g, u, i + 1, j + 1) - at(g, u, i + 1, j) -
                                    at(g, u, i, j + 1) + at(g, u, i, j)) /
                                   (g.h(0) * g.h(1));
                sum += 2 * dxy * dxy;
            }
        }
    }
    return g.weight() * sum;
}

}  // namespace

double norm_h1(const Grid& g, const Vec& u) {
    return std::sqrt(g.weight() * u.squaredNorm() + gradient_energy(g, u));
}

double norm_h2(const Grid& g, const Vec& u) {
    return std::sqrt(g.weight() * u.squaredNorm() + gradient_energy(g, u) +
                     hessian_energy(g, u));
}

SpMat laplacian(const Grid& g) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(g.size()) * 5);
    for (int idx = 0; idx < g.size(); ++idx) {
        const auto [i, j] = g.multi_index(idx);
        for (int d = 0; d < g.dim(); ++d) {
            const double c = 1.0 / (g.h(d) * g.h(d));
            trip.emplace_back(idx, idx, -2 * c);
            const int lo = d == 0 ? g.flat(i - 1, j) : g.flat(i, j - 1);
            const int hi = d == 0 ? g.flat(i + 1, j) : g.flat(i, j + 1);
            if (lo >= 0) trip.emplace_back(idx, lo, c);
            if (hi >= 0) trip.emplace_back(idx, hi, c);
        }
    }
    SpMat m(g.size(), g.size());
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

double norm_hminus1(const Grid& g, const Vec& u) {
    SpMat op = -laplacian(g);
    for (int i = 0; i < g.size(); ++i) op.coeffRef(i, i) += 1.0;
    Eigen::SimplicialLDLT<SpMat> ldlt(op);
    require(ldlt.info() == Eigen::Success, ErrorCode::SingularStep,
            "H^-1 norm: factorization failed");
    const Vec y = ldlt.solve(u);
    return std::sqrt(std::max(0.0, g.weight() * u.dot(y)));
}

bool inside_closed(const Grid& g, const Point& x) {
    for (int d = 0; d < g.dim(); ++d) {
        if (!(x[d] >= g.axis(d).lo && x[d] <= g.axis(d).hi)) return false;
    }
    return true;
}

double interpolate(const Grid& g, const Vec& u, const Point& x) {
    if (!inside_closed(g, x)) return 0.0;
    // Full index p in [0, n+1] where 0 and n+1 are boundary nodes.
    auto locate = [&](int d, int& p, double& frac) {
        const double t = (x[d] - g.axis(d).lo) / g.h(d);
        p = std::min(static_cast<int>(std::floor(t)), g.n(d));
        p = std::max(p, 0);
        frac = t - p;
    };
    int p0 = 0;
    double f0 = 0.0;
    locate(0, p0, f0);
    if (g.dim() == 1) {
        return (1 - f0) * at(g, u, p0 - 1, 0) + f0 * at(g, u, p0, 0);
    }
    int p1 = 0;
    double f1 = 0.0;
    locate(1, p1, f1);
    const double v00 = at(g, u, p0 - 1, p1 - 1);
    const double v10 = at(g, u, p0, p1 - 1);
    const double v01 = at(g, u, p0 - 1, p1);
    const double v11 = at(g, u, p0, p1);
    return (1 - f0) * (1 - f1) * v00 + f0 * (1 - f1) * v10 + (1 - f0) * f1 * v01 +
           f0 * f1 * v11;
}

}  // namespace nlspde
