#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "nlspde/exec.hpp"

namespace nlspde {

using Point = std::array<double, 2>;

struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    int n = 3;  // interior nodes
};

/// Uniform tensor grid over an interval or an axis-aligned rectangle with
/// homogeneous Dirichlet boundary. Only interior nodes are unknowns; node
/// index runs fastest along axis 0.
class Grid {
public:
    /// `allow_small` admits n >= 1 per axis (single-node scalar instances).
    static Grid build(std::span<const Axis> axes, bool allow_small = false);
    static Grid interval(double lo, double hi, int n, bool allow_small = false);

    int dim() const { return dim_; }
    int size() const { return size_; }
    const Axis& axis(int d) const { return axes_[d]; }
    int n(int d) const { return axes_[d].n; }
    double h(int d) const { return h_[d]; }
    /// Quadrature weight of one node (product of spacings).
    double weight() const { return weight_; }

    /// Coordinate of index i along axis d; i = -1 and i = n are boundary.
    double coord(int d, int i) const { return axes_[d].lo + (i + 1) * h_[d]; }
    Point node(int idx) const;
    std::array<int, 2> multi_index(int idx) const;
    /// Flat index, or -1 when (i, j) lies on the boundary.
    int flat(int i, int j = 0) const;

private:
    int dim_ = 1;
    std::array<Axis, 2> axes_{};
    std::array<double, 2> h_{1.0, 1.0};
    int size_ = 0;
    double weight_ = 1.0;
};

/// Strictly increasing time knots 0 = t_0 < ... < t_K = T.
class TimeGrid {
public:
    static TimeGrid uniform(double horizon, int steps);
    static TimeGrid from_knots(std::vector<double> knots);

    int steps() const { return static_cast<int>(knots_.size()) - 1; }
    double horizon() const { return knots_.back(); }
    double knot(int k) const { return knots_[k]; }
    double dt(int k) const { return knots_[k + 1] - knots_[k]; }
    const std::vector<double>& knots() const { return knots_; }
    bool is_uniform(double rel_tol = 1e-12) const;
    std::optional<int> find_knot(double t, double rel_tol = 1e-12) const;
    /// Trapezoid weights for integrals over [0, T] sampled on knots.
    std::vector<double> trapezoid_weights() const;

private:
    std::vector<double> knots_;
};

// Discrete function-space norms on interior vectors (boundary values are 0).
double inner_h0(const Grid& g, const Vec& u, const Vec& v);
double norm_h0(const Grid& g, const Vec& u);
/// H0 plus forward-difference energy over every edge, boundary edges included.
double norm_h1(const Grid& g, const Vec& u);
/// H1 plus second-difference quotients (pure and mixed).
double norm_h2(const Grid& g, const Vec& u);
/// Approximated as ||(I - Lap_h)^{-1/2} u||_{H0}.
double norm_hminus1(const Grid& g, const Vec& u);

/// Discrete Dirichlet Laplacian on the grid (unit coefficient).
SpMat laplacian(const Grid& g);

/// Piecewise (bi)linear interpolation with zero boundary values; points
/// outside the closed domain evaluate to 0.
double interpolate(const Grid& g, const Vec& u, const Point& x);
bool inside_closed(const Grid& g, const Point& x);

/// Samples f at every interior node.
template <class F>
Vec sample_nodes(const Grid& g, F&& f) {
    Vec out(g.size());
    for (int i = 0; i < g.size(); ++i) out[i] = f(g.node(i));
    return out;
}

}  // namespace nlspde
