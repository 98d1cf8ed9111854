#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "oef/model.hpp"

// Problem assembly: the centralized optimal-energy-flow program over one
// flat variable vector, and its node-wise decomposition into per-agent
// subproblems tied together by consensus rows.
//
// Variable spaces:
//  - x: the "original" variables, each owned by exactly one node agent
//    (unit outputs, line/pipe/compressor flows, angles, squared pressures,
//    and in bidirectional mode one direction indicator per pipe).
//  - y: the "pseudo" variables — agent-local copies of x entries. Every y
//    entry is anchored to exactly one x entry by one consensus row, and the
//    rows are emitted in y order, so the y-side consensus matrix is the
//    identity and the x-side matrix A is a 0/1 selection.
//
// The centralized program carries a *linear* objective: quadratic generation
// costs are lifted through one auxiliary variable s per unit with a quadratic
// equality row s = p². Pipeline physics (Weymouth) and, in bidirectional
// mode, the direction indicators contribute the remaining quadratic rows.

namespace oef {

enum class FlowMode { Unidirectional, Bidirectional };

// Identifies which physical constraint a row encodes; `entity` indexes the
// corresponding list in NetworkSpec (lines, pipelines, ...). Used to match
// agent-local row instantiations with centralized rows when assembling KKT
// multipliers, and for diagnostics.
struct RowTag {
  enum class Kind {
    DcFlow,           // line flow = angle difference / reactance
    PowerBalance,     // entity = power node
    GasBalance,       // entity = gas node
    CompressorRatio,  // downstream psq <= ratio * upstream psq
    WeymouthEq,       // centralized: g^2 = W^2 (pi_m - pi_n)
    WeymouthLe,       // agent split: g^2 - W^2 dpi <= 0 (gas-node side)
    WeymouthGe,       // agent split: W^2 dpi - g^2 <= 0 (pipeline agent)
    DeltaPiSign,      // pi_n - pi_m <= 0 alongside WeymouthLe
    CostLift,         // centralized: s = p^2, entity = unit
    Weymouth17aEq,    // centralized bidirectional: g^2 = W^2 (pi_m - pi_n) u
    Weymouth17aLe,    // agent split: g^2 - W^2 (pi_m - pi_n) u <= 0
    Weymouth17aGe,    // agent split: W^2 (pi_m - pi_n) u - g^2 <= 0
    Direction17bEq,   // centralized bidirectional: u^2 = 1
    Direction17bLe,   // agent split: u^2 - 1 <= 0
    Direction17bGe,   // agent split: 1 - u^2 <= 0
    Cap17cLo,         // -cap * (u + 1) <= g   (rewritten g - cap*u <= cap ...)
    Cap17cHi,         // g <= cap * (u + 1)
  };
  Kind kind;
  int entity = -1;
};

std::string to_string(RowTag tag);

// value(z) = sum coeff * z[idx] - rhs; equality rows require 0, inequality
// rows require <= 0.
struct LinRow {
  std::vector<std::pair<int, double>> terms;
  double rhs = 0;
  RowTag tag;
  double value(const Eigen::VectorXd& z) const;
};

// value(z) = 1/2 z'Qz + q'z + c, with Q given as symmetric entries (i, j,
// coeff) listed once per unordered pair (diagonal included). Equality rows
// require 0, inequality rows <= 0.
struct QuadRow {
  std::vector<std::tuple<int, int, double>> quad;
  std::vector<std::pair<int, double>> lin;
  double constant = 0;
  RowTag tag;
  double value(const Eigen::VectorXd& z) const;
  void add_gradient(const Eigen::VectorXd& z, double weight, Eigen::VectorXd& grad) const;
  // Dense (Q, q, c) over `dim` coordinates, for the small per-agent solvers.
  void densify(int dim, Eigen::MatrixXd& Q, Eigen::VectorXd& q, double& c) const;
};

// The original-variable layout shared by the centralized problem (as its
// natural prefix) and the decomposition (as the x space).
struct VarLayout {
  int dim = 0;
  std::vector<std::string> names;
  Eigen::VectorXd lo, hi;
  // Objective sum_j (cost_quad[j] x_j^2 + cost_lin[j] x_j) + cost_const.
  Eigen::VectorXd cost_quad, cost_lin;
  double cost_const = 0;
  // Typed indices into the x vector, aligned with the NetworkSpec lists.
  std::vector<int> unit_x, line_x, theta_x, well_x, pipe_x, comp_x, pi_x;
  std::vector<int> u_x;  // bidirectional only, per pipeline
};

VarLayout build_layout(const NetworkSpec& spec, FlowMode mode);

// Centralized program: min f'z + objective_const subject to boxes lo/hi,
// linear equality rows, linear inequality rows, and quadratic equality rows.
// z = [natural x variables | lifted cost variables s].
struct CentralizedProblem {
  FlowMode mode = FlowMode::Unidirectional;
  int dim = 0;
  int natural_dim = 0;  // prefix of z that is the VarLayout
  std::vector<std::string> names;
  Eigen::VectorXd f;
  double objective_const = 0;
  Eigen::VectorXd lo, hi;  // +-inf where unbounded (lift variables)
  std::vector<LinRow> eq_rows;
  std::vector<LinRow> ineq_rows;
  std::vector<QuadRow> quad_rows;  // all equality rows (= 0)
  std::vector<int> lift_of_unit;   // unit index -> z index of s, or -1
  VarLayout layout;

  double objective(const Eigen::VectorXd& z) const;
  // Largest violation over boxes and all rows at z.
  double max_violation(const Eigen::VectorXd& z) const;
};

CentralizedProblem assemble_centralized(const NetworkSpec& spec, FlowMode mode);

enum class AgentKind { PowerNode, GasNode, PipelineIneq };

// One subproblem of the decomposition. The agent owns a contiguous slice of
// the y vector (its pseudo copies) and a set of x entries (the originals it
// updates in the x sweep). Row indices inside eq/ineq/quad rows are *local*
// to the y slice.
struct Agent {
  AgentKind kind = AgentKind::PowerNode;
  std::string name;
  std::vector<int> x_owned;
  double cost_const = 0;  // this agent's share of constant objective terms
  int y_offset = 0;
  int y_dim = 0;
  std::vector<LinRow> eq_rows;
  std::vector<LinRow> ineq_rows;
  std::vector<QuadRow> quad_rows;  // inequalities <= 0; convex except for
                                   // the single pipeline-agent constraint
};

// Consensus rows in y order: row i couples x[owner[i]] with y[i], so
// A (rows x xdim) selects owner entries and B = identity.
struct ConsensusMap {
  std::vector<int> owner;           // y index -> x index
  std::vector<std::string> labels;  // human-readable coupling description
  int rows() const { return static_cast<int>(owner.size()); }
};

struct DecomposedProblem {
  FlowMode mode = FlowMode::Unidirectional;
  NetworkSpec spec;
  VarLayout layout;  // x space
  int y_dim = 0;
  std::vector<std::string> y_names;
  std::vector<Agent> agents;
  ConsensusMap consensus;
  std::vector<std::vector<int>> copies_of;  // x index -> consensus rows
};

struct DecomposeOptions {
  // Mirror the pipeline inequality into one agent per pipe *end* (two per
  // split) instead of the default single agent per split inequality.
  bool duplicate_pipe_agents = false;
};

DecomposedProblem decompose(const NetworkSpec& spec, FlowMode mode,
                            const DecomposeOptions& opts = {});

// Violation report for a candidate (x, y) pair: every consensus row's
// mismatch plus every centralized (natural-variable) constraint evaluated at
// x. A consensus-consistent feasible point reports all zeros.
struct LiftEntry {
  std::string label;
  double violation = 0;
};

struct LiftReport {
  std::vector<LiftEntry> entries;
  double max_violation = 0;
};

LiftReport lift_to_feasibility(const DecomposedProblem& dec, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& y);

// Local agent objective (its share of the centralized cost), evaluated at x.
double agent_objective(const DecomposedProblem& dec, const Agent& agent,
                       const Eigen::VectorXd& x);

// Debug dump of agents, rows, and consensus structure.
nlohmann::json dump_decomposition(const DecomposedProblem& dec);

}  // namespace oef
