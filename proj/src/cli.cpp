#include "oef/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "oef/admm.hpp"
#include "oef/formulation.hpp"
#include "oef/model.hpp"
#include "oef/oracle.hpp"

namespace oef {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int fail_input(const std::string& msg) {
  std::cerr << "error: " << msg << "\n";
  return 1;
}

FlowMode parse_weymouth(const std::string& w) {
  if (w == "uni") return FlowMode::Unidirectional;
  if (w == "bi") return FlowMode::Bidirectional;
  throw std::invalid_argument("unknown flow handling '" + w + "' (use uni|bi)");
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

bool write_trace(const std::string& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path);
  if (!out) return false;
  out << "iter,pri_res,dual_res,objective,wall_time_ms\n";
  char buf[192];
  for (const TraceRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.k, r.pri_res, r.dual_res,
                  r.objective, r.wall_time_ms);
    out << buf;
  }
  return static_cast<bool>(out);
}

int emit_summary(const json& summary, const CliOptions& o) {
  const std::string text = summary.dump(2) + "\n";
  std::cout << text;
  if (!o.summary_path.empty()) {
    std::ofstream out(o.summary_path);
    if (!out || !(out << text)) return fail_input("cannot write summary to " + o.summary_path);
  }
  return 0;
}

// |obj_d - obj_o| / |obj_o|, absolute when the reference objective is zero.
double optimality_gap(double obj_d, double obj_o) {
  const double diff = std::abs(obj_d - obj_o);
  return std::abs(obj_o) < 1e-12 ? diff : diff / std::abs(obj_o);
}

bool load_and_validate(const CliOptions& o, NetworkSpec& spec, int& rc) {
  try {
    spec = load_network(o.network);
  } catch (const NetworkError& e) {
    rc = fail_input(e.kind() == NetworkError::Kind::Parse &&
                            std::string(e.what()).find("cannot open") != std::string::npos
                        ? "file not found: " + o.network
                        : std::string(e.what()));
    return false;
  } catch (const std::exception& e) {
    rc = fail_input(e.what());
    return false;
  }
  const ValidationReport rep = validate(spec);
  if (!rep.ok()) {
    for (const Violation& v : rep.violations)
      std::cerr << "invalid network: " << v.where << ": " << v.message << "\n";
    rc = 1;
    return false;
  }
  return true;
}

struct DistributedOutcome {
  DecomposedProblem dec;
  CentralizedProblem central;
  AdmmResult res;
  double obj_raw = 0;
  double obj_proj = 0;
  double viol_proj = 0;
};

DistributedOutcome run_distributed(const NetworkSpec& spec, FlowMode fm, const CliOptions& o) {
  DistributedOutcome out;
  out.dec = decompose(spec, fm);
  out.central = assemble_centralized(spec, fm);
  AdmmConfig cfg;
  cfg.d = o.penalty;
  cfg.eps_pri = o.tol_pri;
  cfg.eps_dual = o.tol_dual;
  cfg.max_iter = o.max_iter;
  cfg.stop_on_either = o.stop_either;
  cfg.record_timing = o.timing;
  out.res = run(out.dec, cfg);
  out.obj_raw = layout_objective(out.dec.layout, out.res.state.x);
  const Eigen::VectorXd xp = project_pipe_flows(spec, out.dec.layout, out.res.state.x);
  out.obj_proj = layout_objective(out.dec.layout, xp);
  out.viol_proj = out.central.max_violation(lifted_point(out.central, xp));
  return out;
}

json base_summary(const std::string& mode) {
  json s;
  s["schema_version"] = 1;
  s["mode"] = mode;
  s["status"] = nullptr;
  s["iterations"] = nullptr;
  s["objective_raw"] = nullptr;
  s["objective_projected"] = nullptr;
  s["oracle_objective"] = nullptr;
  s["opt_gap"] = nullptr;
  s["max_violation"] = nullptr;
  s["kkt_residual"] = nullptr;
  s["wall_time_ms"] = nullptr;
  return s;
}

}  // namespace

int cmd_solve(const CliOptions& o) {
  const auto t0 = Clock::now();
  NetworkSpec spec;
  int rc = 0;
  if (!load_and_validate(o, spec, rc)) return rc;
  FlowMode fm;
  try {
    fm = parse_weymouth(o.weymouth);
  } catch (const std::exception& e) {
    return fail_input(e.what());
  }

  try {
    if (o.mode == "central") {
      const CentralizedProblem central = assemble_centralized(spec, fm);
      const ReferenceSolution ref = solve_reference(central, OracleConfig{});
      json s = base_summary("central");
      s["status"] = ref.feasible ? "solved" : "infeasible";
      s["objective_raw"] = ref.objective;
      s["objective_projected"] = ref.objective;
      s["oracle_objective"] = ref.objective;
      s["max_violation"] = ref.max_violation;
      if (o.timing) s["wall_time_ms"] = elapsed_ms(t0);
      if (!o.trace_path.empty() && !write_trace(o.trace_path, {}))
        return fail_input("cannot write trace to " + o.trace_path);
      if (int erc = emit_summary(s, o)) return erc;
      return ref.feasible ? 0 : 2;
    }
    if (o.mode != "distributed")
      return fail_input("unknown mode '" + o.mode + "' (use central|distributed)");

    const DistributedOutcome d = run_distributed(spec, fm, o);
    json s = base_summary("distributed");
    s["status"] = to_string(d.res.status);
    s["iterations"] = d.res.state.k;
    s["objective_raw"] = d.obj_raw;
    s["objective_projected"] = d.obj_proj;
    s["max_violation"] = d.viol_proj;
    s["kkt_residual"] = num_or_null(d.res.kkt_residual);
    if (o.timing) s["wall_time_ms"] = elapsed_ms(t0);
    if (!o.trace_path.empty() && !write_trace(o.trace_path, d.res.trace))
      return fail_input("cannot write trace to " + o.trace_path);
    if (int erc = emit_summary(s, o)) return erc;
    if (d.res.status == AdmmStatus::SubproblemFailure)
      std::cerr << "subproblem failure in agent '" << d.res.failure_agent << "' at sweep "
                << d.res.failure_iter << ": " << d.res.failure_reason << "\n";
    return d.res.status == AdmmStatus::Converged ? 0 : 2;
  } catch (const std::exception& e) {
    return fail_input(e.what());
  }
}

int cmd_compare(const CliOptions& o) {
  const auto t0 = Clock::now();
  NetworkSpec spec;
  int rc = 0;
  if (!load_and_validate(o, spec, rc)) return rc;
  FlowMode fm;
  try {
    fm = parse_weymouth(o.weymouth);
  } catch (const std::exception& e) {
    return fail_input(e.what());
  }

  try {
    const DistributedOutcome d = run_distributed(spec, fm, o);
    const ReferenceSolution ref = solve_reference(d.central, OracleConfig{});
    json s = base_summary("compare");
    s["status"] = ref.feasible ? json(to_string(d.res.status)) : json("oracle_infeasible");
    s["iterations"] = d.res.state.k;
    s["objective_raw"] = d.obj_raw;
    s["objective_projected"] = d.obj_proj;
    s["oracle_objective"] = ref.objective;
    if (ref.feasible) s["opt_gap"] = optimality_gap(d.obj_proj, ref.objective);
    s["max_violation"] = d.viol_proj;
    s["kkt_residual"] = num_or_null(d.res.kkt_residual);
    if (o.timing) s["wall_time_ms"] = elapsed_ms(t0);
    if (!o.trace_path.empty() && !write_trace(o.trace_path, d.res.trace))
      return fail_input("cannot write trace to " + o.trace_path);
    if (int erc = emit_summary(s, o)) return erc;
    return d.res.status == AdmmStatus::Converged && ref.feasible ? 0 : 2;
  } catch (const std::exception& e) {
    return fail_input(e.what());
  }
}

}  // namespace oef
