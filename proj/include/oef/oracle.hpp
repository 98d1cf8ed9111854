#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oef/formulation.hpp"
#include "oef/qcqp1.hpp"

// Centralized nonconvex reference solver at desk scale: multistart penalty
// homotopy over the quadratic equality rows, each stage minimized by a
// box-projected damped-Newton descent on the penalized objective, then a
// Gauss-Newton restoration plus an active-set Newton polish to drive
// feasibility to roundoff. Used as ground truth for optimality-gap and
// feasibility reporting. Also hosts a grid-scan oracle for the
// single-constraint pipeline subproblems.

namespace oef {

struct OracleConfig {
  int multistart = 32;  // deterministic low-discrepancy starts
  std::vector<double> penalty_weights = {1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6};
  double tol = 1e-9;        // per-stage step tolerance
  int direction_cap = 64;   // max flow-sign patterns enumerated (bidirectional)
};

struct ReferenceSolution {
  Eigen::VectorXd z;  // centralized variables (lifted space)
  double objective = 0;
  double max_violation = 0;
  bool feasible = false;           // max_violation <= 1e-6
  std::vector<int> directions;     // per-pipe flow sign (bidirectional only)
};

// Best feasible point found across multistarts; in bidirectional mode the
// flow-sign patterns are enumerated (each solved with the direction
// indicators pinned) and the best feasible pattern wins. When nothing
// feasible is found, the least-infeasible point is reported with
// feasible = false.
ReferenceSolution solve_reference(const CentralizedProblem& central, const OracleConfig& cfg);

// Exhaustive grid scan over the box (dimension <= 4): keep the best point
// satisfying the quadratic constraint at coarse_step resolution, then
// rescan a shrinking neighborhood of the incumbent at coarse_step/10 and
// coarse_step/100. Returns the best point and its objective value; throws
// when no grid point is feasible.
std::pair<Eigen::VectorXd, double> brute_force_qcqp1(const Qcqp1Problem& p,
                                                     const Eigen::VectorXd& lo,
                                                     const Eigen::VectorXd& hi,
                                                     double coarse_step);

}  // namespace oef
