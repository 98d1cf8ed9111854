#include "oef/admm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "oef/localsolve.hpp"
#include "oef/qcqp1.hpp"
#include "oef/smalleig.hpp"

namespace oef {
namespace {

enum class SolveKind { EqualityQp, ConvexBarrier, PipelineDual };

// Per-agent constraint structure in dense form, fixed across sweeps; only
// the objective's linear term changes with (x, lambda).
struct AgentPlan {
  SolveKind kind = SolveKind::EqualityQp;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<LinIneq> lin;
  std::vector<QuadIneq> quad;
};

AgentPlan make_plan(const Agent& a) {
  AgentPlan plan;
  const int n = a.y_dim;
  const int me = static_cast<int>(a.eq_rows.size());
  plan.A = Eigen::MatrixXd::Zero(me, n);
  plan.b = Eigen::VectorXd::Zero(me);
  for (int r = 0; r < me; ++r) {
    for (const auto& [idx, coef] : a.eq_rows[r].terms) plan.A(r, idx) += coef;
    plan.b[r] = a.eq_rows[r].rhs;
  }
  for (const auto& row : a.ineq_rows) {
    LinIneq li;
    li.a = Eigen::VectorXd::Zero(n);
    for (const auto& [idx, coef] : row.terms) li.a[idx] += coef;
    li.b = row.rhs;
    plan.lin.push_back(std::move(li));
  }
  bool convex = true;
  for (const auto& row : a.quad_rows) {
    QuadIneq qi;
    row.densify(n, qi.Q, qi.q, qi.c);
    const double scale = std::max(1.0, qi.Q.cwiseAbs().maxCoeff());
    if (min_eigenvalue(qi.Q) < -1e-9 * scale) convex = false;
    plan.quad.push_back(std::move(qi));
  }
  if (a.quad_rows.empty() && a.ineq_rows.empty()) {
    plan.kind = SolveKind::EqualityQp;
  } else if (convex) {
    plan.kind = SolveKind::ConvexBarrier;
  } else {
    if (a.quad_rows.size() != 1 || !a.eq_rows.empty() || !a.ineq_rows.empty())
      throw std::logic_error("admm: agent '" + a.name +
                             "' mixes a nonconvex row with other constraints");
    plan.kind = SolveKind::PipelineDual;
  }
  return plan;
}

struct AgentSolve {
  Eigen::VectorXd y;
  Eigen::VectorXd eq_mult;    // per agent equality row
  Eigen::VectorXd lin_mult;   // per agent linear inequality row
  Eigen::VectorXd quad_mult;  // per agent quadratic row
};

// Exact block minimizer of d/2 ||y - t||^2 - lambda'(y - t) over the
// agent's constraint set, with the row multipliers it certifies.
AgentSolve solve_agent(const Agent& a, const AgentPlan& plan, const Eigen::VectorXd& targets,
                       const Eigen::VectorXd& lam, double d) {
  AgentSolve out;
  const int n = a.y_dim;
  const Eigen::VectorXd g = -(d * targets + lam);
  switch (plan.kind) {
    case SolveKind::EqualityQp: {
      EqQp p{Eigen::VectorXd::Constant(n, d), g, plan.A, plan.b};
      EqQpSolution sol = solve_eq_qp(p);
      out.y = sol.y;
      out.eq_mult = sol.mult;
      out.lin_mult.resize(0);
      out.quad_mult.resize(0);
      break;
    }
    case SolveKind::ConvexBarrier: {
      ConvexQcqp p{Eigen::VectorXd::Constant(n, d), g, plan.A, plan.b, plan.lin, plan.quad};
      ConvexQcqpSolution sol = solve_convex_qcqp(p);
      if (!sol.feasible)
        throw std::runtime_error("infeasible block, row " + sol.infeasible_row +
                                 " short by " + std::to_string(sol.infeasible_amount));
      out.y = sol.y;
      out.eq_mult = sol.eq_mult;
      out.lin_mult = sol.lin_mult;
      out.quad_mult = sol.quad_mult;
      break;
    }
    case SolveKind::PipelineDual: {
      const Qcqp1Problem p = build_pipe_subproblem(a, targets, lam, d);
      const DualSolution dual = solve_dual(p);
      out.y = recover_primal(p, dual);
      out.eq_mult.resize(0);
      out.lin_mult.resize(0);
      out.quad_mult = Eigen::VectorXd::Constant(1, dual.v);
      break;
    }
  }
  return out;
}

// Midpoint of the box, 0 where a side is missing, clamped inside.
double box_midpoint(double lo, double hi) {
  if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
  double v = 0;
  if (std::isfinite(lo)) v = std::max(v, lo);
  if (std::isfinite(hi)) v = std::min(v, hi);
  return v;
}

}  // namespace

std::string to_string(AdmmStatus s) {
  switch (s) {
    case AdmmStatus::Converged: return "converged";
    case AdmmStatus::MaxIter: return "max_iter";
    case AdmmStatus::SubproblemFailure: return "subproblem_failure";
  }
  return "unknown";
}

double KktReport::value() const {
  return std::max({stationarity, feasibility, complementarity, multiplier_sign});
}

double layout_objective(const VarLayout& layout, const Eigen::VectorXd& x) {
  double v = layout.cost_const;
  for (int j = 0; j < layout.dim; ++j)
    v += layout.cost_quad[j] * x[j] * x[j] + layout.cost_lin[j] * x[j];
  return v;
}

AdmmResult run(const DecomposedProblem& dec, const AdmmConfig& cfg) {
  if (!(cfg.d > 0)) throw std::invalid_argument("admm: penalty d must be positive");
  if (!(cfg.eps_pri > 0) || !(cfg.eps_dual > 0))
    throw std::invalid_argument("admm: tolerances must be positive");
  if (cfg.max_iter <= 0) throw std::invalid_argument("admm: max_iter must be positive");
  const VarLayout& L = dec.layout;
  const int nx = L.dim;
  const int ny = dec.y_dim;
  if (dec.consensus.rows() != ny)
    throw std::invalid_argument("admm: consensus rows do not match the copy count");

  std::vector<AgentPlan> plans;
  plans.reserve(dec.agents.size());
  for (const Agent& a : dec.agents) plans.push_back(make_plan(a));

  Eigen::VectorXd copies = Eigen::VectorXd::Zero(nx);
  for (int j = 0; j < nx; ++j) {
    copies[j] = static_cast<double>(dec.copies_of[j].size());
    if (copies[j] == 0)
      throw std::invalid_argument("admm: original '" + L.names[j] + "' has no agent copy");
  }

  AdmmResult res;
  res.state.d = cfg.d;
  Eigen::VectorXd& x = res.state.x;
  Eigen::VectorXd& y = res.state.y;
  Eigen::VectorXd& lam = res.state.lambda;
  Eigen::VectorXd& y_prev = res.state.y_prev;
  x.resize(nx);
  for (int j = 0; j < nx; ++j) x[j] = box_midpoint(L.lo[j], L.hi[j]);
  y.resize(ny);
  for (int i = 0; i < ny; ++i) y[i] = x[dec.consensus.owner[i]];
  lam = Eigen::VectorXd::Zero(ny);
  y_prev = y;

  BoxQp bq;
  bq.lo = L.lo;
  bq.hi = L.hi;
  const auto t0 = std::chrono::steady_clock::now();

  for (int k = 1; k <= cfg.max_iter; ++k) {
    // Phase 1: every original solves its box QP against the current copies.
    Eigen::VectorXd sum_y = Eigen::VectorXd::Zero(nx);
    Eigen::VectorXd sum_lam = Eigen::VectorXd::Zero(nx);
    for (int i = 0; i < ny; ++i) {
      sum_y[dec.consensus.owner[i]] += y[i];
      sum_lam[dec.consensus.owner[i]] += lam[i];
    }
    bq.quad = L.cost_quad + 0.5 * cfg.d * copies;
    bq.lin = L.cost_lin + sum_lam - cfg.d * sum_y;
    x = solve_box(bq);

    // Phase 2: every agent solves its copy block at the fresh originals.
    for (size_t ai = 0; ai < dec.agents.size(); ++ai) {
      const Agent& a = dec.agents[ai];
      Eigen::VectorXd t(a.y_dim), lamb(a.y_dim);
      for (int i = 0; i < a.y_dim; ++i) {
        t[i] = x[dec.consensus.owner[a.y_offset + i]];
        lamb[i] = lam[a.y_offset + i];
      }
      try {
        y.segment(a.y_offset, a.y_dim) = solve_agent(a, plans[ai], t, lamb, cfg.d).y;
      } catch (const std::exception& e) {
        res.status = AdmmStatus::SubproblemFailure;
        res.failure_agent = a.name;
        res.failure_iter = k;
        res.failure_reason = e.what();
        res.state.k = k;
        res.kkt_residual = std::numeric_limits<double>::quiet_NaN();
        return res;
      }
    }

    // Phase 3: multiplier step, then residuals at the new iterate.
    double pri_sq = 0, dlam_sq = 0;
    for (int i = 0; i < ny; ++i) {
      const double r = x[dec.consensus.owner[i]] - y[i];
      pri_sq += r * r;
      const double step = cfg.d * r;
      lam[i] += step;
      dlam_sq += step * step;
    }
    const double pri = std::sqrt(pri_sq);
    res.update_identity_gap =
        std::max(res.update_identity_gap, std::abs(std::sqrt(dlam_sq) - cfg.d * pri));
    Eigen::VectorXd at_dy = Eigen::VectorXd::Zero(nx);
    for (int i = 0; i < ny; ++i) at_dy[dec.consensus.owner[i]] += y[i] - y_prev[i];
    const double dual = cfg.d * at_dy.norm();

    TraceRow row;
    row.k = k;
    row.pri_res = pri;
    row.dual_res = dual;
    row.objective = layout_objective(L, x);
    if (cfg.record_timing)
      row.wall_time_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count();
    res.trace.push_back(row);
    y_prev = y;
    res.state.k = k;

    const bool pri_ok = pri <= cfg.eps_pri;
    const bool dual_ok = dual <= cfg.eps_dual;
    if (cfg.stop_on_either ? (pri_ok || dual_ok) : (pri_ok && dual_ok)) {
      res.status = AdmmStatus::Converged;
      break;
    }
  }

  const CentralizedProblem central = assemble_centralized(dec.spec, dec.mode);
  res.kkt_residual = kkt_residual(dec, res.state, central);
  return res;
}

std::pair<double, double> residuals(const DecomposedProblem& dec, const AdmmState& s) {
  const int ny = dec.y_dim;
  double pri_sq = 0;
  Eigen::VectorXd at_dy = Eigen::VectorXd::Zero(dec.layout.dim);
  const bool have_prev = s.y_prev.size() == ny;
  for (int i = 0; i < ny; ++i) {
    const double r = s.x[dec.consensus.owner[i]] - s.y[i];
    pri_sq += r * r;
    at_dy[dec.consensus.owner[i]] += s.y[i] - (have_prev ? s.y_prev[i] : 0.0);
  }
  return {std::sqrt(pri_sq), s.d * at_dy.norm()};
}

KktReport kkt_report(const DecomposedProblem& dec, const AdmmState& s,
                     const CentralizedProblem& central) {
  const VarLayout& L = dec.layout;
  KktReport rep;
  Eigen::VectorXd grad = 2.0 * L.cost_quad.cwiseProduct(s.x) + L.cost_lin;

  for (const Agent& a : dec.agents) {
    const AgentPlan plan = make_plan(a);
    Eigen::VectorXd t(a.y_dim), lamb(a.y_dim);
    for (int i = 0; i < a.y_dim; ++i) {
      t[i] = s.x[dec.consensus.owner[a.y_offset + i]];
      lamb[i] = s.lambda[a.y_offset + i];
    }
    const AgentSolve sol = solve_agent(a, plan, t, lamb, s.d);

    // Weighted gradient of this agent's rows at the consensus point; fold
    // it into the originals so row instances sum up across agents.
    Eigen::VectorXd gl = Eigen::VectorXd::Zero(a.y_dim);
    for (size_t r = 0; r < a.eq_rows.size(); ++r)
      for (const auto& [idx, coef] : a.eq_rows[r].terms) gl[idx] += sol.eq_mult[r] * coef;
    for (size_t r = 0; r < a.ineq_rows.size(); ++r) {
      const double mu = sol.lin_mult[r];
      rep.multiplier_sign = std::max(rep.multiplier_sign, -mu);
      rep.complementarity =
          std::max(rep.complementarity, std::abs(mu * a.ineq_rows[r].value(t)));
      for (const auto& [idx, coef] : a.ineq_rows[r].terms) gl[idx] += mu * coef;
    }
    for (size_t r = 0; r < a.quad_rows.size(); ++r) {
      const double eta = sol.quad_mult[r];
      rep.multiplier_sign = std::max(rep.multiplier_sign, -eta);
      rep.complementarity =
          std::max(rep.complementarity, std::abs(eta * a.quad_rows[r].value(t)));
      a.quad_rows[r].add_gradient(t, eta, gl);
    }
    for (int i = 0; i < a.y_dim; ++i) grad[dec.consensus.owner[a.y_offset + i]] += gl[i];
  }

  for (int j = 0; j < L.dim; ++j) {
    if (L.hi[j] - L.lo[j] <= 0) continue;  // pinned original: free multiplier
    const bool at_lo =
        std::isfinite(L.lo[j]) && s.x[j] - L.lo[j] <= 1e-9 * (1 + std::abs(L.lo[j]));
    const bool at_hi =
        std::isfinite(L.hi[j]) && L.hi[j] - s.x[j] <= 1e-9 * (1 + std::abs(L.hi[j]));
    const double r = grad[j];
    double resid = 0;
    if (at_lo && at_hi)
      resid = 0;
    else if (at_lo)
      resid = std::max(0.0, -r);
    else if (at_hi)
      resid = std::max(0.0, r);
    else
      resid = std::abs(r);
    rep.stationarity = std::max(rep.stationarity, resid);
  }

  rep.feasibility = central.max_violation(lifted_point(central, s.x));
  return rep;
}

double kkt_residual(const DecomposedProblem& dec, const AdmmState& s,
                    const CentralizedProblem& central) {
  return kkt_report(dec, s, central).value();
}

Eigen::VectorXd lifted_point(const CentralizedProblem& central, const Eigen::VectorXd& x) {
  if (static_cast<int>(x.size()) != central.natural_dim)
    throw std::invalid_argument("lifted_point: dimension mismatch");
  Eigen::VectorXd z = Eigen::VectorXd::Zero(central.dim);
  z.head(central.natural_dim) = x;
  for (size_t u = 0; u < central.lift_of_unit.size(); ++u) {
    const int s_idx = central.lift_of_unit[u];
    if (s_idx < 0) continue;
    const double p = x[central.layout.unit_x[u]];
    z[s_idx] = p * p;
  }
  return z;
}

Eigen::VectorXd project_pipe_flows(const NetworkSpec& spec, const VarLayout& layout,
                                   Eigen::VectorXd x) {
  const bool bidirectional = !layout.u_x.empty();
  for (size_t p = 0; p < spec.pipelines.size(); ++p) {
    const Pipeline& pipe = spec.pipelines[p];
    const double pi_m = x[layout.pi_x[spec.gas_node_index(pipe.from)]];
    const double pi_n = x[layout.pi_x[spec.gas_node_index(pipe.to)]];
    const double dpi = pi_m - pi_n;
    if (bidirectional) {
      double u = dpi > 0 ? 1.0 : (dpi < 0 ? -1.0 : (x[layout.u_x[p]] < 0 ? -1.0 : 1.0));
      x[layout.u_x[p]] = u;
      x[layout.pipe_x[p]] = u * std::sqrt(pipe.weymouth * std::abs(dpi));
    } else {
      x[layout.pipe_x[p]] = std::sqrt(pipe.weymouth * std::max(dpi, 0.0));
    }
  }
  return x;
}

}  // namespace oef
