#include "oef/formulation.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace oef {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string to_string(RowTag tag) {
  const char* kind = nullptr;
  switch (tag.kind) {
    case RowTag::Kind::DcFlow: kind = "dc-flow"; break;
    case RowTag::Kind::PowerBalance: kind = "power-balance"; break;
    case RowTag::Kind::GasBalance: kind = "gas-balance"; break;
    case RowTag::Kind::CompressorRatio: kind = "compressor-ratio"; break;
    case RowTag::Kind::WeymouthEq: kind = "weymouth"; break;
    case RowTag::Kind::WeymouthLe: kind = "weymouth-le"; break;
    case RowTag::Kind::WeymouthGe: kind = "weymouth-ge"; break;
    case RowTag::Kind::DeltaPiSign: kind = "dpi-sign"; break;
    case RowTag::Kind::CostLift: kind = "cost-lift"; break;
    case RowTag::Kind::Weymouth17aEq: kind = "weymouth-dir"; break;
    case RowTag::Kind::Weymouth17aLe: kind = "weymouth-dir-le"; break;
    case RowTag::Kind::Weymouth17aGe: kind = "weymouth-dir-ge"; break;
    case RowTag::Kind::Direction17bEq: kind = "direction"; break;
    case RowTag::Kind::Direction17bLe: kind = "direction-le"; break;
    case RowTag::Kind::Direction17bGe: kind = "direction-ge"; break;
    case RowTag::Kind::Cap17cLo: kind = "dir-cap-lo"; break;
    case RowTag::Kind::Cap17cHi: kind = "dir-cap-hi"; break;
  }
  return std::string(kind) + ":" + std::to_string(tag.entity);
}

double LinRow::value(const Eigen::VectorXd& z) const {
  double s = -rhs;
  for (auto [i, c] : terms) s += c * z[i];
  return s;
}

double QuadRow::value(const Eigen::VectorXd& z) const {
  double s = constant;
  for (auto [i, j, c] : quad) s += (i == j) ? 0.5 * c * z[i] * z[i] : c * z[i] * z[j];
  for (auto [i, c] : lin) s += c * z[i];
  return s;
}

void QuadRow::add_gradient(const Eigen::VectorXd& z, double w, Eigen::VectorXd& grad) const {
  for (auto [i, j, c] : quad) {
    if (i == j) {
      grad[i] += w * c * z[i];
    } else {
      grad[i] += w * c * z[j];
      grad[j] += w * c * z[i];
    }
  }
  for (auto [i, c] : lin) grad[i] += w * c;
}

void QuadRow::densify(int dim, Eigen::MatrixXd& Q, Eigen::VectorXd& q, double& c) const {
  Q = Eigen::MatrixXd::Zero(dim, dim);
  q = Eigen::VectorXd::Zero(dim);
  c = constant;
  for (auto [i, j, v] : quad) {
    if (i == j) {
      Q(i, i) += v;
    } else {
      Q(i, j) += v;
      Q(j, i) += v;
    }
  }
  for (auto [i, v] : lin) q[i] += v;
}

namespace {

// Per-node incidence lists, all in spec index order so every construction
// below is deterministic.
struct Incidence {
  std::vector<std::vector<int>> units_at, lines_at;   // per power node
  std::vector<std::vector<int>> wells_at, pipes_at, comps_at, fuel_units_at;  // per gas node
};

Incidence build_incidence(const NetworkSpec& spec) {
  Incidence inc;
  inc.units_at.resize(spec.power_nodes.size());
  inc.lines_at.resize(spec.power_nodes.size());
  inc.wells_at.resize(spec.gas_nodes.size());
  inc.pipes_at.resize(spec.gas_nodes.size());
  inc.comps_at.resize(spec.gas_nodes.size());
  inc.fuel_units_at.resize(spec.gas_nodes.size());
  for (size_t i = 0; i < spec.units.size(); ++i) {
    inc.units_at[spec.power_node_index(spec.units[i].at_power_node)].push_back(i);
    if (spec.units[i].kind == UnitKind::GasFired)
      inc.fuel_units_at[spec.gas_node_index(*spec.units[i].gas_node)].push_back(i);
  }
  for (size_t i = 0; i < spec.lines.size(); ++i) {
    inc.lines_at[spec.power_node_index(spec.lines[i].from)].push_back(i);
    inc.lines_at[spec.power_node_index(spec.lines[i].to)].push_back(i);
  }
  for (size_t i = 0; i < spec.wells.size(); ++i)
    inc.wells_at[spec.gas_node_index(spec.wells[i].at_gas_node)].push_back(i);
  for (size_t i = 0; i < spec.pipelines.size(); ++i) {
    inc.pipes_at[spec.gas_node_index(spec.pipelines[i].from)].push_back(i);
    inc.pipes_at[spec.gas_node_index(spec.pipelines[i].to)].push_back(i);
  }
  for (size_t i = 0; i < spec.compressors.size(); ++i) {
    inc.comps_at[spec.gas_node_index(spec.compressors[i].from)].push_back(i);
    inc.comps_at[spec.gas_node_index(spec.compressors[i].to)].push_back(i);
  }
  return inc;
}

double sum(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

void require_valid(const NetworkSpec& spec) {
  ValidationReport report = validate(spec);
  if (report.ok()) return;
  std::ostringstream msg;
  msg << "invalid network:";
  for (const Violation& viol : report.violations) msg << " [" << viol.where << ": " << viol.message << "]";
  throw std::invalid_argument(msg.str());
}

// All physical constraints of the centralized problem over the natural
// variables (no cost lifting). Shared by assembly, the lift check, and the
// KKT certification.
struct NaturalRows {
  std::vector<LinRow> eq, ineq;
  std::vector<QuadRow> quad;  // equality rows
};

NaturalRows build_natural_rows(const NetworkSpec& spec, const VarLayout& L, FlowMode mode) {
  NaturalRows rows;
  const Incidence inc = build_incidence(spec);

  for (size_t l = 0; l < spec.lines.size(); ++l) {
    const TransmissionLine& line = spec.lines[l];
    int m = spec.power_node_index(line.from), n = spec.power_node_index(line.to);
    rows.eq.push_back({{{L.line_x[l], line.reactance}, {L.theta_x[m], -1.0}, {L.theta_x[n], 1.0}},
                       0.0,
                       {RowTag::Kind::DcFlow, static_cast<int>(l)}});
  }

  for (size_t n = 0; n < spec.power_nodes.size(); ++n) {
    LinRow row;
    row.tag = {RowTag::Kind::PowerBalance, static_cast<int>(n)};
    for (int u : inc.units_at[n]) row.terms.push_back({L.unit_x[u], 1.0});
    for (int l : inc.lines_at[n]) {
      bool inbound = spec.power_node_index(spec.lines[l].to) == static_cast<int>(n);
      row.terms.push_back({L.line_x[l], inbound ? 1.0 : -1.0});
    }
    row.rhs = sum(spec.power_nodes[n].loads);
    rows.eq.push_back(std::move(row));
  }

  for (size_t n = 0; n < spec.gas_nodes.size(); ++n) {
    LinRow row;
    row.tag = {RowTag::Kind::GasBalance, static_cast<int>(n)};
    for (int w : inc.wells_at[n]) row.terms.push_back({L.well_x[w], 1.0});
    for (int p : inc.pipes_at[n]) {
      bool inbound = spec.gas_node_index(spec.pipelines[p].to) == static_cast<int>(n);
      row.terms.push_back({L.pipe_x[p], inbound ? 1.0 : -1.0});
    }
    for (int k : inc.comps_at[n]) {
      bool inbound = spec.gas_node_index(spec.compressors[k].to) == static_cast<int>(n);
      row.terms.push_back({L.comp_x[k], inbound ? 1.0 : -1.0});
    }
    for (int u : inc.fuel_units_at[n])
      row.terms.push_back({L.unit_x[u], -*spec.units[u].conversion});
    row.rhs = sum(spec.gas_nodes[n].loads);
    rows.eq.push_back(std::move(row));
  }

  for (size_t k = 0; k < spec.compressors.size(); ++k) {
    const Compressor& comp = spec.compressors[k];
    int a = spec.gas_node_index(comp.from), b = spec.gas_node_index(comp.to);
    rows.ineq.push_back({{{L.pi_x[b], 1.0}, {L.pi_x[a], -comp.ratio}},
                         0.0,
                         {RowTag::Kind::CompressorRatio, static_cast<int>(k)}});
  }

  for (size_t p = 0; p < spec.pipelines.size(); ++p) {
    const Pipeline& pipe = spec.pipelines[p];
    const double W2 = pipe.weymouth;
    int m = spec.gas_node_index(pipe.from), n = spec.gas_node_index(pipe.to);
    int g = L.pipe_x[p], pim = L.pi_x[m], pin = L.pi_x[n];
    if (mode == FlowMode::Unidirectional) {
      QuadRow row;
      row.tag = {RowTag::Kind::WeymouthEq, static_cast<int>(p)};
      row.quad = {{g, g, 2.0}};
      row.lin = {{pim, -W2}, {pin, W2}};
      rows.quad.push_back(std::move(row));
    } else {
      int u = L.u_x[p];
      QuadRow flow;
      flow.tag = {RowTag::Kind::Weymouth17aEq, static_cast<int>(p)};
      flow.quad = {{g, g, 2.0}, {pim, u, -W2}, {pin, u, W2}};
      rows.quad.push_back(std::move(flow));

      QuadRow dir;
      dir.tag = {RowTag::Kind::Direction17bEq, static_cast<int>(p)};
      dir.quad = {{u, u, 2.0}};
      dir.constant = -1.0;
      rows.quad.push_back(std::move(dir));

      const double cap = pipe.capacity;
      rows.ineq.push_back({{{g, 1.0}, {u, -cap}}, cap, {RowTag::Kind::Cap17cHi, static_cast<int>(p)}});
      rows.ineq.push_back({{{g, -1.0}, {u, cap}}, cap, {RowTag::Kind::Cap17cLo, static_cast<int>(p)}});
    }
  }

  return rows;
}

}  // namespace

VarLayout build_layout(const NetworkSpec& spec, FlowMode mode) {
  VarLayout L;
  const Incidence inc = build_incidence(spec);
  std::vector<double> lo, hi, cq, cl;
  auto add = [&](const std::string& name, double l, double h, double q, double c) {
    L.names.push_back(name);
    lo.push_back(l);
    hi.push_back(h);
    cq.push_back(q);
    cl.push_back(c);
    return L.dim++;
  };

  L.unit_x.assign(spec.units.size(), -1);
  L.line_x.assign(spec.lines.size(), -1);
  L.theta_x.assign(spec.power_nodes.size(), -1);
  L.well_x.assign(spec.wells.size(), -1);
  L.pipe_x.assign(spec.pipelines.size(), -1);
  L.comp_x.assign(spec.compressors.size(), -1);
  L.pi_x.assign(spec.gas_nodes.size(), -1);
  if (mode == FlowMode::Bidirectional) L.u_x.assign(spec.pipelines.size(), -1);

  for (size_t n = 0; n < spec.power_nodes.size(); ++n) {
    const PowerNode& node = spec.power_nodes[n];
    for (int u : inc.units_at[n]) {
      const Unit& unit = spec.units[u];
      // Gas-fired units buy fuel through the gas network; they carry no
      // direct production cost in the objective.
      bool costed = unit.kind == UnitKind::CoalFired;
      L.unit_x[u] = add("p:" + unit.id, unit.p_min, unit.p_max, costed ? unit.cost_quad : 0.0,
                        costed ? unit.cost_lin : 0.0);
      if (costed) L.cost_const += unit.cost_const;
    }
    for (int l : inc.lines_at[n]) {
      if (spec.power_node_index(spec.lines[l].to) != static_cast<int>(n)) continue;  // owned by head
      const TransmissionLine& line = spec.lines[l];
      L.line_x[l] = add("f:" + line.id, -line.capacity, line.capacity, 0, 0);
    }
    // Reference angle is pinned by a degenerate box so the DC system keeps
    // full rank without a dedicated gauge row.
    double alo = node.is_reference ? 0.0 : node.angle_min;
    double ahi = node.is_reference ? 0.0 : node.angle_max;
    L.theta_x[n] = add("theta:" + node.id, alo, ahi, 0, 0);
  }

  for (size_t n = 0; n < spec.gas_nodes.size(); ++n) {
    const GasNode& node = spec.gas_nodes[n];
    for (int w : inc.wells_at[n]) {
      const GasWell& well = spec.wells[w];
      L.well_x[w] = add("gw:" + well.id, well.g_min, well.g_max, 0, well.cost);
    }
    for (int p : inc.pipes_at[n]) {
      if (spec.gas_node_index(spec.pipelines[p].to) != static_cast<int>(n)) continue;
      const Pipeline& pipe = spec.pipelines[p];
      double glo = (mode == FlowMode::Bidirectional) ? -pipe.capacity : 0.0;
      L.pipe_x[p] = add("g:" + pipe.id, glo, pipe.capacity, 0, 0);
    }
    for (int k : inc.comps_at[n]) {
      if (spec.gas_node_index(spec.compressors[k].to) != static_cast<int>(n)) continue;
      const Compressor& comp = spec.compressors[k];
      L.comp_x[k] = add("c:" + comp.id, 0, comp.capacity, 0, 0);
    }
    L.pi_x[n] = add("pi:" + node.id, node.psq_min, node.psq_max, 0, 0);
    if (mode == FlowMode::Bidirectional) {
      for (int p : inc.pipes_at[n]) {
        if (spec.gas_node_index(spec.pipelines[p].to) != static_cast<int>(n)) continue;
        L.u_x[p] = add("u:" + spec.pipelines[p].id, -1.0, 1.0, 0, 0);
      }
    }
  }

  L.lo = Eigen::Map<Eigen::VectorXd>(lo.data(), lo.size());
  L.hi = Eigen::Map<Eigen::VectorXd>(hi.data(), hi.size());
  L.cost_quad = Eigen::Map<Eigen::VectorXd>(cq.data(), cq.size());
  L.cost_lin = Eigen::Map<Eigen::VectorXd>(cl.data(), cl.size());
  return L;
}

double CentralizedProblem::objective(const Eigen::VectorXd& z) const {
  return f.dot(z) + objective_const;
}

double CentralizedProblem::max_violation(const Eigen::VectorXd& z) const {
  double worst = 0;
  for (int i = 0; i < dim; ++i) {
    if (std::isfinite(lo[i])) worst = std::max(worst, lo[i] - z[i]);
    if (std::isfinite(hi[i])) worst = std::max(worst, z[i] - hi[i]);
  }
  for (const LinRow& row : eq_rows) worst = std::max(worst, std::abs(row.value(z)));
  for (const LinRow& row : ineq_rows) worst = std::max(worst, row.value(z));
  for (const QuadRow& row : quad_rows) worst = std::max(worst, std::abs(row.value(z)));
  return worst;
}

CentralizedProblem assemble_centralized(const NetworkSpec& spec, FlowMode mode) {
  require_valid(spec);
  CentralizedProblem prob;
  prob.mode = mode;
  prob.layout = build_layout(spec, mode);
  const VarLayout& L = prob.layout;
  prob.natural_dim = L.dim;

  NaturalRows rows = build_natural_rows(spec, L, mode);
  prob.eq_rows = std::move(rows.eq);
  prob.ineq_rows = std::move(rows.ineq);
  prob.quad_rows = std::move(rows.quad);

  // Lift quadratic generation costs: one auxiliary s per costed unit with
  // s = p^2 keeps the objective vector linear.
  prob.lift_of_unit.assign(spec.units.size(), -1);
  int lifted = 0;
  for (size_t u = 0; u < spec.units.size(); ++u)
    if (L.unit_x[u] >= 0 && L.cost_quad[L.unit_x[u]] > 0) ++lifted;

  prob.dim = L.dim + lifted;
  prob.names = L.names;
  prob.f = Eigen::VectorXd::Zero(prob.dim);
  prob.f.head(L.dim) = L.cost_lin;
  prob.objective_const = L.cost_const;
  prob.lo = Eigen::VectorXd::Constant(prob.dim, -kInf);
  prob.hi = Eigen::VectorXd::Constant(prob.dim, kInf);
  prob.lo.head(L.dim) = L.lo;
  prob.hi.head(L.dim) = L.hi;

  int next = L.dim;
  for (size_t u = 0; u < spec.units.size(); ++u) {
    int p = L.unit_x[u];
    if (p < 0 || L.cost_quad[p] <= 0) continue;
    prob.lift_of_unit[u] = next;
    prob.names.push_back("s:" + spec.units[u].id);
    prob.f[next] = L.cost_quad[p];
    prob.lo[next] = L.lo[p] * L.lo[p];
    prob.hi[next] = L.hi[p] * L.hi[p];
    QuadRow lift;
    lift.tag = {RowTag::Kind::CostLift, static_cast<int>(u)};
    lift.quad = {{p, p, 2.0}};
    lift.lin = {{next, -1.0}};
    prob.quad_rows.push_back(std::move(lift));
    ++next;
  }
  return prob;
}

namespace {

// Accumulates one agent's pseudo-variable block. copy() is idempotent per x
// index, so e.g. an angle referenced by several incident lines materializes
// once; consensus rows are appended in y order, which is what makes the
// y-side consensus matrix the identity.
class AgentBuilder {
 public:
  AgentBuilder(DecomposedProblem& dec, AgentKind kind, std::string name) : dec_(dec) {
    agent_.kind = kind;
    agent_.name = std::move(name);
    agent_.y_offset = dec.y_dim;
  }

  int copy(int x_index) {
    auto [it, fresh] = local_.try_emplace(x_index, agent_.y_dim);
    if (fresh) {
      std::string y_name = agent_.name + "/" + dec_.layout.names[x_index];
      dec_.y_names.push_back(y_name);
      dec_.consensus.owner.push_back(x_index);
      dec_.consensus.labels.push_back(y_name + " = " + dec_.layout.names[x_index]);
      ++agent_.y_dim;
    }
    return it->second;
  }

  Agent& agent() { return agent_; }

  void finish() {
    dec_.y_dim += agent_.y_dim;
    dec_.agents.push_back(std::move(agent_));
  }

 private:
  DecomposedProblem& dec_;
  Agent agent_;
  std::unordered_map<int, int> local_;
};

void add_pipe_agent_uni(DecomposedProblem& dec, const NetworkSpec& spec, int p,
                        const std::string& name) {
  const Pipeline& pipe = spec.pipelines[p];
  const VarLayout& L = dec.layout;
  AgentBuilder b(dec, AgentKind::PipelineIneq, name);
  int g = b.copy(L.pipe_x[p]);
  int pim = b.copy(L.pi_x[spec.gas_node_index(pipe.from)]);
  int pin = b.copy(L.pi_x[spec.gas_node_index(pipe.to)]);
  QuadRow row;  // W^2 (pi_m - pi_n) - g^2 <= 0, the nonconvex side
  row.tag = {RowTag::Kind::WeymouthGe, p};
  row.quad = {{g, g, -2.0}};
  row.lin = {{pim, pipe.weymouth}, {pin, -pipe.weymouth}};
  b.agent().quad_rows.push_back(std::move(row));
  b.finish();
}

void add_pipe_agents_bidir(DecomposedProblem& dec, const NetworkSpec& spec, int p,
                           const std::string& suffix) {
  const Pipeline& pipe = spec.pipelines[p];
  const VarLayout& L = dec.layout;
  const double W2 = pipe.weymouth;
  int xg = L.pipe_x[p];
  int xm = L.pi_x[spec.gas_node_index(pipe.from)];
  int xn = L.pi_x[spec.gas_node_index(pipe.to)];
  int xu = L.u_x[p];

  {  // g^2 - W^2 (pi_m - pi_n) u <= 0
    AgentBuilder b(dec, AgentKind::PipelineIneq, "pipe:" + pipe.id + suffix + "#le");
    int g = b.copy(xg), pim = b.copy(xm), pin = b.copy(xn), u = b.copy(xu);
    QuadRow row;
    row.tag = {RowTag::Kind::Weymouth17aLe, p};
    row.quad = {{g, g, 2.0}, {pim, u, -W2}, {pin, u, W2}};
    b.agent().quad_rows.push_back(std::move(row));
    b.finish();
  }
  {  // W^2 (pi_m - pi_n) u - g^2 <= 0
    AgentBuilder b(dec, AgentKind::PipelineIneq, "pipe:" + pipe.id + suffix + "#ge");
    int g = b.copy(xg), pim = b.copy(xm), pin = b.copy(xn), u = b.copy(xu);
    QuadRow row;
    row.tag = {RowTag::Kind::Weymouth17aGe, p};
    row.quad = {{g, g, -2.0}, {pim, u, W2}, {pin, u, -W2}};
    b.agent().quad_rows.push_back(std::move(row));
    b.finish();
  }
  {  // u^2 - 1 <= 0 (convex half of the +-1 indicator)
    AgentBuilder b(dec, AgentKind::PipelineIneq, "pipe:" + pipe.id + suffix + "#ule");
    int u = b.copy(xu);
    QuadRow row;
    row.tag = {RowTag::Kind::Direction17bLe, p};
    row.quad = {{u, u, 2.0}};
    row.constant = -1.0;
    b.agent().quad_rows.push_back(std::move(row));
    b.finish();
  }
  {  // 1 - u^2 <= 0 (nonconvex half)
    AgentBuilder b(dec, AgentKind::PipelineIneq, "pipe:" + pipe.id + suffix + "#uge");
    int u = b.copy(xu);
    QuadRow row;
    row.tag = {RowTag::Kind::Direction17bGe, p};
    row.quad = {{u, u, -2.0}};
    row.constant = 1.0;
    b.agent().quad_rows.push_back(std::move(row));
    b.finish();
  }
}

}  // namespace

DecomposedProblem decompose(const NetworkSpec& spec, FlowMode mode, const DecomposeOptions& opts) {
  require_valid(spec);
  DecomposedProblem dec;
  dec.mode = mode;
  dec.spec = spec;
  dec.layout = build_layout(spec, mode);
  const VarLayout& L = dec.layout;
  const Incidence inc = build_incidence(spec);

  for (size_t n = 0; n < spec.power_nodes.size(); ++n) {
    const PowerNode& node = spec.power_nodes[n];
    AgentBuilder b(dec, AgentKind::PowerNode, "power:" + node.id);
    Agent& a = b.agent();

    for (int u : inc.units_at[n]) {
      a.x_owned.push_back(L.unit_x[u]);
      if (spec.units[u].kind == UnitKind::CoalFired) a.cost_const += spec.units[u].cost_const;
      b.copy(L.unit_x[u]);
    }
    for (int l : inc.lines_at[n])
      if (spec.power_node_index(spec.lines[l].to) == static_cast<int>(n))
        a.x_owned.push_back(L.line_x[l]);
    a.x_owned.push_back(L.theta_x[n]);

    for (int l : inc.lines_at[n]) b.copy(L.line_x[l]);
    b.copy(L.theta_x[n]);
    for (int l : inc.lines_at[n]) {
      b.copy(L.theta_x[spec.power_node_index(spec.lines[l].from)]);
      b.copy(L.theta_x[spec.power_node_index(spec.lines[l].to)]);
    }

    for (int l : inc.lines_at[n]) {
      const TransmissionLine& line = spec.lines[l];
      LinRow row;
      row.tag = {RowTag::Kind::DcFlow, l};
      row.terms = {{b.copy(L.line_x[l]), line.reactance},
                   {b.copy(L.theta_x[spec.power_node_index(line.from)]), -1.0},
                   {b.copy(L.theta_x[spec.power_node_index(line.to)]), 1.0}};
      a.eq_rows.push_back(std::move(row));
    }
    {
      LinRow row;
      row.tag = {RowTag::Kind::PowerBalance, static_cast<int>(n)};
      for (int u : inc.units_at[n]) row.terms.push_back({b.copy(L.unit_x[u]), 1.0});
      for (int l : inc.lines_at[n]) {
        bool inbound = spec.power_node_index(spec.lines[l].to) == static_cast<int>(n);
        row.terms.push_back({b.copy(L.line_x[l]), inbound ? 1.0 : -1.0});
      }
      row.rhs = sum(node.loads);
      a.eq_rows.push_back(std::move(row));
    }
    b.finish();
  }

  for (size_t n = 0; n < spec.gas_nodes.size(); ++n) {
    const GasNode& node = spec.gas_nodes[n];
    AgentBuilder b(dec, AgentKind::GasNode, "gas:" + node.id);
    Agent& a = b.agent();

    for (int w : inc.wells_at[n]) {
      a.x_owned.push_back(L.well_x[w]);
      b.copy(L.well_x[w]);
    }
    for (int p : inc.pipes_at[n])
      if (spec.gas_node_index(spec.pipelines[p].to) == static_cast<int>(n))
        a.x_owned.push_back(L.pipe_x[p]);
    for (int k : inc.comps_at[n])
      if (spec.gas_node_index(spec.compressors[k].to) == static_cast<int>(n))
        a.x_owned.push_back(L.comp_x[k]);
    a.x_owned.push_back(L.pi_x[n]);
    if (mode == FlowMode::Bidirectional)
      for (int p : inc.pipes_at[n])
        if (spec.gas_node_index(spec.pipelines[p].to) == static_cast<int>(n))
          a.x_owned.push_back(L.u_x[p]);

    for (int p : inc.pipes_at[n]) b.copy(L.pipe_x[p]);
    for (int k : inc.comps_at[n]) b.copy(L.comp_x[k]);
    b.copy(L.pi_x[n]);
    for (int p : inc.pipes_at[n]) {
      b.copy(L.pi_x[spec.gas_node_index(spec.pipelines[p].from)]);
      b.copy(L.pi_x[spec.gas_node_index(spec.pipelines[p].to)]);
    }
    for (int k : inc.comps_at[n]) {
      b.copy(L.pi_x[spec.gas_node_index(spec.compressors[k].from)]);
      b.copy(L.pi_x[spec.gas_node_index(spec.compressors[k].to)]);
    }
    for (int u : inc.fuel_units_at[n]) b.copy(L.unit_x[u]);
    if (mode == FlowMode::Bidirectional)
      for (int p : inc.pipes_at[n]) b.copy(L.u_x[p]);

    for (int k : inc.comps_at[n]) {
      const Compressor& comp = spec.compressors[k];
      LinRow row;  // downstream squared pressure limited to ratio x upstream
      row.tag = {RowTag::Kind::CompressorRatio, k};
      row.terms = {{b.copy(L.pi_x[spec.gas_node_index(comp.to)]), 1.0},
                   {b.copy(L.pi_x[spec.gas_node_index(comp.from)]), -comp.ratio}};
      a.ineq_rows.push_back(std::move(row));
    }
    {
      LinRow row;
      row.tag = {RowTag::Kind::GasBalance, static_cast<int>(n)};
      for (int w : inc.wells_at[n]) row.terms.push_back({b.copy(L.well_x[w]), 1.0});
      for (int p : inc.pipes_at[n]) {
        bool inbound = spec.gas_node_index(spec.pipelines[p].to) == static_cast<int>(n);
        row.terms.push_back({b.copy(L.pipe_x[p]), inbound ? 1.0 : -1.0});
      }
      for (int k : inc.comps_at[n]) {
        bool inbound = spec.gas_node_index(spec.compressors[k].to) == static_cast<int>(n);
        row.terms.push_back({b.copy(L.comp_x[k]), inbound ? 1.0 : -1.0});
      }
      for (int u : inc.fuel_units_at[n])
        row.terms.push_back({b.copy(L.unit_x[u]), -*spec.units[u].conversion});
      row.rhs = sum(node.loads);
      a.eq_rows.push_back(std::move(row));
    }

    for (int p : inc.pipes_at[n]) {
      const Pipeline& pipe = spec.pipelines[p];
      int pim = b.copy(L.pi_x[spec.gas_node_index(pipe.from)]);
      int pin = b.copy(L.pi_x[spec.gas_node_index(pipe.to)]);
      int g = b.copy(L.pipe_x[p]);
      if (mode == FlowMode::Unidirectional) {
        QuadRow row;  // convex side: g^2 <= W^2 (pi_m - pi_n)
        row.tag = {RowTag::Kind::WeymouthLe, p};
        row.quad = {{g, g, 2.0}};
        row.lin = {{pim, -pipe.weymouth}, {pin, pipe.weymouth}};
        a.quad_rows.push_back(std::move(row));
        LinRow sign;  // the pressure drop the convex side presumes
        sign.tag = {RowTag::Kind::DeltaPiSign, p};
        sign.terms = {{pin, 1.0}, {pim, -1.0}};
        a.ineq_rows.push_back(std::move(sign));
      } else if (spec.gas_node_index(pipe.to) == static_cast<int>(n)) {
        // Direction-linked capacity, in the agent owning the pipe.
        int u = b.copy(L.u_x[p]);
        const double cap = pipe.capacity;
        a.ineq_rows.push_back({{{g, 1.0}, {u, -cap}}, cap, {RowTag::Kind::Cap17cHi, p}});
        a.ineq_rows.push_back({{{g, -1.0}, {u, cap}}, cap, {RowTag::Kind::Cap17cLo, p}});
      }
    }
    b.finish();
  }

  for (size_t p = 0; p < spec.pipelines.size(); ++p) {
    const Pipeline& pipe = spec.pipelines[p];
    if (mode == FlowMode::Unidirectional) {
      if (opts.duplicate_pipe_agents) {
        add_pipe_agent_uni(dec, spec, p, "pipe:" + pipe.id + "@" + pipe.from);
        add_pipe_agent_uni(dec, spec, p, "pipe:" + pipe.id + "@" + pipe.to);
      } else {
        add_pipe_agent_uni(dec, spec, p, "pipe:" + pipe.id);
      }
    } else {
      if (opts.duplicate_pipe_agents) {
        add_pipe_agents_bidir(dec, spec, p, "@" + pipe.from);
        add_pipe_agents_bidir(dec, spec, p, "@" + pipe.to);
      } else {
        add_pipe_agents_bidir(dec, spec, p, "");
      }
    }
  }

  dec.copies_of.assign(L.dim, {});
  for (int i = 0; i < dec.consensus.rows(); ++i) dec.copies_of[dec.consensus.owner[i]].push_back(i);

  return dec;
}

double agent_objective(const DecomposedProblem& dec, const Agent& agent,
                       const Eigen::VectorXd& x) {
  double obj = agent.cost_const;
  for (int j : agent.x_owned)
    obj += dec.layout.cost_quad[j] * x[j] * x[j] + dec.layout.cost_lin[j] * x[j];
  return obj;
}

LiftReport lift_to_feasibility(const DecomposedProblem& dec, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& y) {
  if (x.size() != dec.layout.dim || y.size() != dec.y_dim)
    throw std::invalid_argument("lift_to_feasibility: dimension mismatch");

  LiftReport report;
  auto push = [&](std::string label, double violation) {
    report.entries.push_back({std::move(label), violation});
    report.max_violation = std::max(report.max_violation, violation);
  };

  for (int i = 0; i < dec.consensus.rows(); ++i)
    push(dec.consensus.labels[i], std::abs(x[dec.consensus.owner[i]] - y[i]));

  const NaturalRows rows = build_natural_rows(dec.spec, dec.layout, dec.mode);
  for (const LinRow& row : rows.eq) push(to_string(row.tag), std::abs(row.value(x)));
  for (const LinRow& row : rows.ineq) push(to_string(row.tag), std::max(0.0, row.value(x)));
  for (const QuadRow& row : rows.quad) push(to_string(row.tag), std::abs(row.value(x)));
  for (int j = 0; j < dec.layout.dim; ++j) {
    double v = std::max(0.0, std::max(dec.layout.lo[j] - x[j], x[j] - dec.layout.hi[j]));
    push("box:" + dec.layout.names[j], v);
  }
  return report;
}

namespace {

nlohmann::json rows_to_json(const std::vector<LinRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const LinRow& row : rows) {
    nlohmann::json terms = nlohmann::json::array();
    for (auto [i, c] : row.terms) terms.push_back({i, c});
    out.push_back({{"tag", to_string(row.tag)}, {"terms", terms}, {"rhs", row.rhs}});
  }
  return out;
}

nlohmann::json quad_rows_to_json(const std::vector<QuadRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const QuadRow& row : rows) {
    nlohmann::json quad = nlohmann::json::array();
    for (auto [i, j, c] : row.quad) quad.push_back({i, j, c});
    nlohmann::json lin = nlohmann::json::array();
    for (auto [i, c] : row.lin) lin.push_back({i, c});
    out.push_back({{"tag", to_string(row.tag)},
                   {"quad", quad},
                   {"lin", lin},
                   {"constant", row.constant}});
  }
  return out;
}

}  // namespace

nlohmann::json dump_decomposition(const DecomposedProblem& dec) {
  nlohmann::json j;
  j["mode"] = dec.mode == FlowMode::Unidirectional ? "unidirectional" : "bidirectional";
  j["x_names"] = dec.layout.names;
  j["y_names"] = dec.y_names;

  nlohmann::json agents = nlohmann::json::array();
  for (const Agent& a : dec.agents) {
    const char* kind = a.kind == AgentKind::PowerNode   ? "power-node"
                       : a.kind == AgentKind::GasNode   ? "gas-node"
                                                        : "pipeline-ineq";
    nlohmann::json x_owned = nlohmann::json::array();
    for (int v : a.x_owned) x_owned.push_back(dec.layout.names[v]);
    agents.push_back({{"name", a.name},
                      {"kind", kind},
                      {"y_offset", a.y_offset},
                      {"y_dim", a.y_dim},
                      {"x_owned", x_owned},
                      {"eq_rows", rows_to_json(a.eq_rows)},
                      {"ineq_rows", rows_to_json(a.ineq_rows)},
                      {"quad_rows", quad_rows_to_json(a.quad_rows)}});
  }
  j["agents"] = agents;

  nlohmann::json consensus = nlohmann::json::array();
  for (int i = 0; i < dec.consensus.rows(); ++i)
    consensus.push_back({{"row", i},
                         {"x", dec.layout.names[dec.consensus.owner[i]]},
                         {"label", dec.consensus.labels[i]}});
  j["consensus"] = consensus;
  return j;
}

}  // namespace oef
