#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "nlspde/grid.hpp"

namespace nlspde {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

using ScalarField = std::function<double(const Point&, double)>;
using VectorField = std::function<Vec2(const Point&, double)>;
using MatrixField = std::function<Mat2(const Point&, double)>;

/// Divergence:     sum_i d_i(b_ij d_j v) + f . grad v + lambda v
/// NonDivergence:  sum_ij b_ij d_ij v + f~ . grad v + lambda~ v
enum class OperatorForm { Divergence, NonDivergence };

/// Coefficients of the generator A and the noise operators
/// B_i v = beta_i . grad v + beta_bar_i v. Only the leading `dim` entries of
/// vectors and matrices are read.
struct CoefficientSet {
    OperatorForm form = OperatorForm::Divergence;
    MatrixField b;
    VectorField f;
    ScalarField lambda;
    // Non-divergence representation; required when form == NonDivergence.
    VectorField f_tilde;
    ScalarField lambda_tilde;
    std::vector<VectorField> beta;
    std::vector<ScalarField> beta_bar;
    double delta = 0.0;  // claimed coercivity margin
    bool time_independent = false;

    int noise_count() const { return static_cast<int>(beta.size()); }
};

// Builders for common fields.
ScalarField constant_scalar(double c);
VectorField constant_vector(double c0, double c1 = 0.0);
MatrixField constant_matrix(double b00, double b01 = 0.0, double b11 = 0.0);
/// b = c I (1-D: b = c).
MatrixField isotropic(double c);
/// Zero-order, drift and noise-free heat operator with diffusion c.
CoefficientSet heat_coefficients(double c = 1.0);

/// Non-divergence representation (f~, lambda~) of the generator, either as
/// given or converted from divergence form (f~ = f + div b, lambda~ = lambda)
/// by centered finite differences of the samplers.
Vec2 drift_nondivergence(const CoefficientSet& c, const Grid& g, const Point& x, double t);
double zero_order_nondivergence(const CoefficientSet& c, const Grid& g, const Point& x, double t);

/// Zero-order coefficient of the representation
/// sum d_ij(b_ij v) + sum d_i(f~_i v) + lambda~ v, i.e.
/// lambda~_nd + sum d_ij b_ij - div f~_nd.
double zero_order_adjoint_form(const CoefficientSet& c, const Grid& g, const Point& x, double t);

}  // namespace nlspde
