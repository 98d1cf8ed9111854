#pragma once

#include <Eigen/Dense>

// Cyclic Jacobi eigensolver for small dense symmetric matrices.
//
// The pipeline subproblems diagonalize matrices of order <= 6 thousands of
// times per run; a self-contained Jacobi sweep is exact to machine precision
// at these sizes, deterministic across platforms, and keeps the dual solver
// free of any iterative-solver tuning.

namespace oef {

struct EigenSystem {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // orthonormal columns, A = V diag(values) V^T
};

// `a` must be symmetric; asymmetry beyond 1e-12 * scale is an error.
EigenSystem jacobi_eigen(const Eigen::MatrixXd& a);

double min_eigenvalue(const Eigen::MatrixXd& a);

}  // namespace oef
