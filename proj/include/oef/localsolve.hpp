#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

// Convex subproblem solvers for the coordination sweep: separable box QPs
// (the x update), equality-constrained QPs (power-node y blocks), and small
// dense convex QCQPs (gas-node y blocks), solved by a logarithmic-barrier
// interior method with a feasibility phase.
//
// Multiplier convention throughout: minimize F0(y) subject to Ay = b (mult
// nu, free sign) and f_i(y) <= 0 (mult mu_i >= 0); stationarity is
// grad F0 + A' nu + sum mu_i grad f_i = 0.

namespace oef {

struct BoxQp {
  Eigen::VectorXd quad;  // coefficient of x^2 (so the gradient is 2*quad*x)
  Eigen::VectorXd lin;
  Eigen::VectorXd lo, hi;
};

// Exact coordinate-wise minimizer: clamp the stationary point into the box.
Eigen::VectorXd solve_box(const BoxQp& p);

struct EqQp {
  Eigen::VectorXd h;  // diagonal of H (> 0): objective 1/2 y'Hy + g'y
  Eigen::VectorXd g;
  Eigen::MatrixXd A;  // equality rows A y = b (may have zero rows)
  Eigen::VectorXd b;
};

struct EqQpSolution {
  Eigen::VectorXd y;
  Eigen::VectorXd mult;  // one per row of A (zero rows get multiplier 0)
};

// Exact minimizer via the Schur complement of the KKT system. Throws on
// rank-deficient (after zero-row removal) or inconsistent rows.
EqQpSolution solve_eq_qp(const EqQp& p);

struct LinIneq {
  Eigen::VectorXd a;
  double b = 0;  // a'y <= b
};

struct QuadIneq {
  Eigen::MatrixXd Q;  // PSD: 1/2 y'Qy + q'y + c <= 0
  Eigen::VectorXd q;
  double c = 0;
};

struct ConvexQcqp {
  Eigen::VectorXd h;  // diagonal of H (> 0)
  Eigen::VectorXd g;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<LinIneq> lin_ineq;
  std::vector<QuadIneq> quad_ineq;
};

struct ConvexQcqpSolution {
  Eigen::VectorXd y;
  Eigen::VectorXd eq_mult;
  Eigen::VectorXd lin_mult;   // >= 0, complementary to the linear rows
  Eigen::VectorXd quad_mult;  // >= 0, complementary to the quadratic rows
  bool feasible = true;
  std::string infeasible_row;   // which row blocked feasibility
  double infeasible_amount = 0; // its violation at the best point found
};

ConvexQcqpSolution solve_convex_qcqp(const ConvexQcqp& p);

// Max of stationarity, primal feasibility, complementarity, and multiplier
// negativity at the candidate solution; used by tests and diagnostics.
double qcqp_kkt_residual(const ConvexQcqp& p, const ConvexQcqpSolution& s);

}  // namespace oef
