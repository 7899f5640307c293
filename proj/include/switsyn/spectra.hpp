#pragma once

// Self-contained symmetric eigensolver used by residual certification.
// Deliberately separate from any factorization the optimizer relies on.

#include <Eigen/Dense>

namespace switsyn::spectra {

struct SymmetricEigen {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // columns match values
};

// Cyclic Jacobi iteration. The input must be symmetric; only the average of
// M and its transpose is read.
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& M);

double min_eigenvalue(const Eigen::MatrixXd& M);
double max_eigenvalue(const Eigen::MatrixXd& M);

}  // namespace switsyn::spectra
