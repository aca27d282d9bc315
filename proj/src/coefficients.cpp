#include "nlspde/coefficients.hpp"

#include "nlspde/error.hpp"

namespace nlspde {

ScalarField constant_scalar(double c) {
    return [c](const Point&, double) { return c; };
}

VectorField constant_vector(double c0, double c1) {
    return [c0, c1](const Point&, double) { return Vec2(c0, c1); };
}

MatrixField constant_matrix(double b00, double b01, double b11) {
    return [=](const Point&, double) {
        Mat2 m;
        m << b00, b01, b01, b11;
        return m;
    };
}

MatrixField isotropic(double c) { return constant_matrix(c, 0.0, c); }

CoefficientSet heat_coefficients(double c) {
    CoefficientSet s;
    s.form = OperatorForm::Divergence;
    s.b = isotropic(c);
    s.f = constant_vector(0.0);
    s.lambda = constant_scalar(0.0);
    s.delta = c;
    s.time_independent = true;
    return s;
}

namespace {

double fd_step(const Grid& g, int d) { return 1e-4 * (g.axis(d).hi - g.axis(d).lo); }

Point shifted(Point x, int d, double s) {
    x[d] += s;
    return x;
}

}  // namespace

Vec2 drift_nondivergence(const CoefficientSet& c, const Grid& g, const Point& x, double t) {
    if (c.form == OperatorForm::NonDivergence || c.f_tilde) {
        require(static_cast<bool>(c.f_tilde), ErrorCode::Coefficient,
                "non-divergence drift f~ is not sampled");
        return c.f_tilde(x, t);
    }
    require(c.b && c.f, ErrorCode::Coefficient, "divergence-form coefficients b, f not sampled");
    Vec2 out = c.f(x, t);
    for (int j = 0; j < g.dim(); ++j) {
        for (int i = 0; i < g.dim(); ++i) {
            const double s = fd_step(g, i);
            out[j] += (c.b(shifted(x, i, s), t)(i, j) - c.b(shifted(x, i, -s), t)(i, j)) / (2 * s);
        }
    }
    if (g.dim() == 1) out[1] = 0.0;
    return out;
}

double zero_order_nondivergence(const CoefficientSet& c, const Grid&, const Point& x, double t) {
    if (c.form == OperatorForm::NonDivergence || c.lambda_tilde) {
        require(static_cast<bool>(c.lambda_tilde), ErrorCode::Coefficient,
                "non-divergence zero-order lambda~ is not sampled");
        return c.lambda_tilde(x, t);
    }
    require(static_cast<bool>(c.lambda), ErrorCode::Coefficient, "lambda is not sampled");
    return c.lambda(x, t);
}

double zero_order_adjoint_form(const CoefficientSet& c, const Grid& g, const Point& x, double t) {
    double out = zero_order_nondivergence(c, g, x, t);
    for (int i = 0; i < g.dim(); ++i) {
        const double si = 10 * fd_step(g, i);
        for (int j = 0; j < g.dim(); ++j) {
            const double sj = 10 * fd_step(g, j);
            double second = 0.0;
            if (i == j) {
                second = (c.b(shifted(x, i, si), t)(i, i) - 2 * c.b(x, t)(i, i) +
                          c.b(shifted(x, i, -si), t)(i, i)) /
                         (si * si);
            } else {
                auto bij = [&](double a, double b2) {
                    return c.b(shifted(shifted(x, i, a), j, b2), t)(i, j);
                };
                second = (bij(si, sj) - bij(si, -sj) - bij(-si, sj) + bij(-si, -sj)) / (4 * si * sj);
            }
            out += second;
        }
        const double s = fd_step(g, i);
        out -= (drift_nondivergence(c, g, shifted(x, i, s), t)[i] -
                drift_nondivergence(c, g, shifted(x, i, -s), t)[i]) /
               (2 * s);
    }
    return out;
}

}  // namespace nlspde
