#pragma once

// Execution policy shared by the data-parallel kernels. Every kernel that
// takes an Exec has a serial reference path and an OpenMP path that must
// produce bitwise-identical results (work is partitioned, never reduced
// in thread-dependent order).

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace nlspde {

enum class Exec { Serial, Parallel };

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

int max_threads();
void set_threads(int n);

}  // namespace nlspde
