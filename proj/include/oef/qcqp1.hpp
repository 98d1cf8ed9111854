#pragma once

#include <Eigen/Dense>

#include "oef/formulation.hpp"

// Exact solver for the pipeline subproblems: minimize a strictly convex
// quadratic subject to ONE (generally indefinite) quadratic inequality,
//
//     min  1/2 y'A0 y + b0'y + c0   s.t.   1/2 y'A1 y + b1'y + c1 <= 0.
//
// Such problems have no duality gap: the Lagrangian dual is a concave
// one-dimensional maximization over the interval where A0 + v A1 stays
// positive semidefinite, and the primal minimizer is recovered from the dual
// maximizer in closed form. The degenerate ("hard") case — the maximizer
// sits at the interval endpoint where A0 + v A1 is singular — is completed
// by a null-space step, as in trust-region subproblem solvers.
//
// The constraint constant c1 is zero for plain pressure-drop constraints
// and nonzero for the shifted direction-indicator splits (e.g. 1 - u^2 <= 0),
// whose feasible set excludes the origin.

namespace oef {

struct Qcqp1Problem {
  Eigen::MatrixXd A0;  // symmetric positive definite (d times identity here)
  Eigen::VectorXd b0;
  double c0 = 0;
  Eigen::MatrixXd A1;  // symmetric, indefinite in the nonconvex cases
  Eigen::VectorXd b1;
  double c1 = 0;
};

struct DualSolution {
  double v = 0;           // optimal multiplier, >= 0
  double gamma = 0;       // dual objective value q(v)
  bool hard_case = false; // primal needs the null-space completion
  double min_eig = 0;     // smallest eigenvalue of A0 + v A1
};

// Assembles the pipeline agent's subproblem from its consensus targets and
// multipliers: objective sum_i d/2 (y_i - t_i)^2 - lambda_i (y_i - t_i),
// constraint taken from the agent's single quadratic row.
Qcqp1Problem build_pipe_subproblem(const Agent& agent, const Eigen::VectorXd& targets,
                                   const Eigen::VectorXd& multipliers, double d);

DualSolution solve_dual(const Qcqp1Problem& p);

// Global minimizer of the primal; satisfies the constraint to ~1e-8.
Eigen::VectorXd recover_primal(const Qcqp1Problem& p, const DualSolution& sol);

// primal(y) - gamma for a feasible y; nonnegative up to roundoff, and ~0 at
// the recovered primal. Throws if y violates the constraint.
double duality_gap(const Qcqp1Problem& p, const Eigen::VectorXd& y, const DualSolution& sol);

double primal_value(const Qcqp1Problem& p, const Eigen::VectorXd& y);
double constraint_value(const Qcqp1Problem& p, const Eigen::VectorXd& y);

// Smallest eigenvalue of the (n+1) x (n+1) dual feasibility block
//   [ A0 + v A1       b0 + v b1          ]
//   [ (b0 + v b1)'    2 (c0 + v c1 - g) ]
// which is PSD exactly when (v, g) is dual feasible; at the dual optimum it
// certifies gamma as a valid bound.
double certificate_min_eigenvalue(const Qcqp1Problem& p, double v, double gamma);

}  // namespace oef
