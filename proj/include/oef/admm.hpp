#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "oef/formulation.hpp"

// Consensus coordination across the node and pipeline agents: alternate an
// exact x sweep (separable box QPs over the originals), a y sweep (each
// agent's small subproblem, solved exactly — including the nonconvex
// pipeline blocks via their one-dimensional dual), and a multiplier step,
// until the consensus residuals fall below tolerance. A converged point is
// certified a posteriori by re-deriving multipliers for the centralized
// nonconvex program and reporting the worst KKT residual.

namespace oef {

struct AdmmConfig {
  double d = 1.0;          // penalty weight on consensus mismatch (> 0)
  double eps_pri = 1e-4;   // primal residual tolerance
  double eps_dual = 1e-4;  // dual residual tolerance
  int max_iter = 5000;
  // Stop as soon as either residual passes instead of requiring both.
  bool stop_on_either = false;
  // Fixed sweep and reduction order (the only implemented mode; the flag
  // records the contract for future parallel backends).
  bool deterministic = true;
  // Fill TraceRow.wall_time_ms; keeping it off makes traces bit-identical
  // across runs.
  bool record_timing = false;
};

struct AdmmState {
  Eigen::VectorXd x;       // originals
  Eigen::VectorXd y;       // agent copies
  Eigen::VectorXd lambda;  // one multiplier per consensus row
  Eigen::VectorXd y_prev;  // previous sweep's copies (drives the dual residual)
  double d = 1.0;          // penalty that produced this state
  int k = 0;               // completed sweeps
};

struct TraceRow {
  int k = 0;
  double pri_res = 0;
  double dual_res = 0;
  double objective = 0;     // generation cost at the current x
  double wall_time_ms = 0;  // 0 unless timing was requested
};

enum class AdmmStatus { Converged, MaxIter, SubproblemFailure };

std::string to_string(AdmmStatus s);

struct AdmmResult {
  AdmmState state;
  std::vector<TraceRow> trace;
  AdmmStatus status = AdmmStatus::MaxIter;
  double kkt_residual = 0;  // NaN when a subproblem failure aborted the run
  // Max over sweeps of | ||lambda' - lambda|| - d ||Ax - By|| |. The
  // multiplier step makes the two sides identical, so this is zero up to
  // roundoff; recorded as a self-check.
  double update_identity_gap = 0;
  std::string failure_agent;  // set when status == SubproblemFailure
  int failure_iter = -1;
  std::string failure_reason;
};

AdmmResult run(const DecomposedProblem& dec, const AdmmConfig& cfg);

// (pri, dual) = (||Ax - By||_2, d ||A'B (y - y_prev)||_2) at the state,
// where A selects each copy's original and B is the identity.
std::pair<double, double> residuals(const DecomposedProblem& dec, const AdmmState& s);

// Worst-case KKT residual components of the centralized program at the
// state's x: row multipliers are recovered by re-solving every agent
// subproblem at (x, lambda) and summing each row's instances, and box
// multipliers are read off the projected cost gradient.
struct KktReport {
  double stationarity = 0;
  double feasibility = 0;
  double complementarity = 0;
  double multiplier_sign = 0;
  double value() const;
};

KktReport kkt_report(const DecomposedProblem& dec, const AdmmState& s,
                     const CentralizedProblem& central);
double kkt_residual(const DecomposedProblem& dec, const AdmmState& s,
                    const CentralizedProblem& central);

// Generation cost sum_j (cost_quad x^2 + cost_lin x) + cost_const at x.
double layout_objective(const VarLayout& layout, const Eigen::VectorXd& x);

// Embed the originals into the centralized space, assigning each lifted
// cost variable its exact value s = p^2.
Eigen::VectorXd lifted_point(const CentralizedProblem& central, const Eigen::VectorXd& x);

// Rescale every pipeline flow (and direction indicator) so the pressure-drop
// relation holds exactly at the given squared pressures; used to report a
// physics-exact objective next to the raw one.
Eigen::VectorXd project_pipe_flows(const NetworkSpec& spec, const VarLayout& layout,
                                   Eigen::VectorXd x);

}  // namespace oef
