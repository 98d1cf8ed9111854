// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the exit status is the number of failed criteria.
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oef/admm.hpp"
#include "oef/formulation.hpp"
#include "oef/model.hpp"
#include "oef/oracle.hpp"
#include "oef/qcqp1.hpp"

using namespace oef;
using Clock = std::chrono::steady_clock;

namespace {

int g_failed = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail = "") {
  std::printf("%s criterion %d: %s%s%s%s\n", ok ? "PASS" : "FAIL", idx, name.c_str(),
              detail.empty() ? "" : " [", detail.c_str(), detail.empty() ? "" : "]");
  std::fflush(stdout);
  if (!ok) ++g_failed;
}

std::string fixture(const std::string& name) {
  return std::string(OEF_FIXTURE_DIR) + "/" + name;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Agent make_pipe_agent(double wsq) {
  Agent a;
  a.kind = AgentKind::PipelineIneq;
  a.name = "pipe:test";
  a.y_dim = 3;
  QuadRow row;
  row.quad = {{0, 0, -2.0}};
  row.lin = {{1, wsq}, {2, -wsq}};
  row.tag = {RowTag::Kind::WeymouthGe, 0};
  a.quad_rows.push_back(row);
  return a;
}

// Coarse sweep over a generous box, then two shrinking sweeps around the
// incumbent, tight enough to certify a 1e-3 objective match.
double staged_grid_value(const Qcqp1Problem& p) {
  const auto [y1, v1] = brute_force_qcqp1(p, Eigen::VectorXd::Constant(3, -8),
                                          Eigen::VectorXd::Constant(3, 8), 0.2);
  const Eigen::VectorXd lo2 = y1.array() - 0.2;
  const Eigen::VectorXd hi2 = y1.array() + 0.2;
  const auto [y2, v2] = brute_force_qcqp1(p, lo2, hi2, 4e-3);
  const Eigen::VectorXd lo3 = y2.array() - 0.03;
  const Eigen::VectorXd hi3 = y2.array() + 0.03;
  const auto [y3, v3] = brute_force_qcqp1(p, lo3, hi3, 6e-4);
  return v3;
}

struct FixtureRun {
  const char* file;
  FlowMode mode;
  const char* tag;
};

const std::vector<FixtureRun>& oracle_pairs() {
  static const std::vector<FixtureRun> pairs = {
      {"two_node_gas.json", FlowMode::Unidirectional, "two_node/uni"},
      {"zero_load.json", FlowMode::Unidirectional, "zero_load/uni"},
      {"iegs_6_7.json", FlowMode::Unidirectional, "iegs/uni"},
      {"two_node_gas.json", FlowMode::Bidirectional, "two_node/bi"},
      {"two_node_gas_reversed.json", FlowMode::Bidirectional, "reversed/bi"},
      {"zero_load.json", FlowMode::Bidirectional, "zero_load/bi"},
      {"iegs_6_7.json", FlowMode::Bidirectional, "iegs/bi"},
  };
  return pairs;
}

struct OracleCase {
  NetworkSpec spec;
  CentralizedProblem central;
  ReferenceSolution ref;
};

// The iegs fixture in bidirectional mode enumerates 2^5 direction masks; a
// trimmed restart/homotopy schedule lands on the same optimum in a fraction
// of the time (verified against the full schedule).
OracleConfig config_for(const FixtureRun& fr) {
  OracleConfig cfg;
  if (std::string(fr.tag) == "iegs/bi") {
    cfg.multistart = 6;
    cfg.penalty_weights = {1e0, 1e2, 1e4, 1e6};
  }
  return cfg;
}

const std::map<std::string, OracleCase>& solved_pairs() {
  static const std::map<std::string, OracleCase> cases = [] {
    std::map<std::string, OracleCase> out;
    for (const FixtureRun& fr : oracle_pairs()) {
      OracleCase c;
      c.spec = load_network(fixture(fr.file));
      c.central = assemble_centralized(c.spec, fr.mode);
      c.ref = solve_reference(c.central, config_for(fr));
      out.emplace(fr.tag, std::move(c));
    }
    return out;
  }();
  return cases;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// 1+2: exactness and the matching bound certificate on random subproblems.
static void criteria_1_and_2() {
  const auto t0 = Clock::now();
  std::mt19937 rng(20260815);
  std::uniform_real_distribution<double> u(0, 1);
  const int n = 1000;
  int gap_fail = 0, grid_fail = 0, cert_fail = 0, threw = 0;
  for (int trial = 0; trial < n; ++trial) {
    const double w = 0.5 + 1.5 * u(rng);
    const double d = 0.1 + 9.9 * u(rng);
    Eigen::VectorXd t(3);
    t << 10 * u(rng) - 5, 10 * u(rng) - 5, 10 * u(rng) - 5;
    const Agent pipe = make_pipe_agent(w * w);
    try {
      const Qcqp1Problem p = build_pipe_subproblem(pipe, t, Eigen::VectorXd::Zero(3), d);
      const DualSolution s = solve_dual(p);
      const Eigen::VectorXd y = recover_primal(p, s);
      if (duality_gap(p, y, s) > 1e-6 * (1 + std::abs(s.gamma))) ++gap_fail;
      if (std::abs(staged_grid_value(p) - primal_value(p, y)) > 1e-3) ++grid_fail;
      if (certificate_min_eigenvalue(p, s.v, s.gamma) < -1e-8) ++cert_fail;
    } catch (const std::exception&) {
      ++threw;
    }
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d subproblems, %d gap / %d grid / %d error, %.1f s",
                n, gap_fail, grid_fail, threw, secs);
  report(1, "pipe subproblems solve exactly and match exhaustive grids",
         gap_fail == 0 && grid_fail == 0 && threw == 0 && secs <= 30.0, buf);
  std::snprintf(buf, sizeof buf, "%d certificate failures", cert_fail + threw);
  report(2, "every dual value carries a nonnegative-definite bound certificate",
         cert_fail == 0 && threw == 0, buf);
}

struct RunOutcome {
  AdmmResult res;
  double obj_proj = 0;
  double viol_proj = 0;
  double secs = 0;
};

static RunOutcome run_fixture(const char* file, FlowMode mode, AdmmConfig cfg,
                              std::vector<double>& identity_gaps) {
  const auto t0 = Clock::now();
  const NetworkSpec spec = load_network(fixture(file));
  const DecomposedProblem dec = decompose(spec, mode);
  RunOutcome out;
  out.res = run(dec, cfg);
  out.secs = seconds_since(t0);
  const Eigen::VectorXd xp = project_pipe_flows(spec, dec.layout, out.res.state.x);
  out.obj_proj = layout_objective(dec.layout, xp);
  const CentralizedProblem central = assemble_centralized(spec, mode);
  out.viol_proj = central.max_violation(lifted_point(central, xp));
  identity_gaps.push_back(out.res.update_identity_gap);
  return out;
}

int main() {
  criteria_1_and_2();
  std::vector<double> identity_gaps;

  // 3: two-node network end to end.
  {
    const RunOutcome r = run_fixture("two_node_gas.json", FlowMode::Unidirectional,
                                     AdmmConfig{}, identity_gaps);
    const bool conv = r.res.status == AdmmStatus::Converged;
    const bool resid = conv && r.res.trace.back().pri_res <= 1e-4 &&
                       r.res.trace.back().dual_res <= 1e-4;
    char buf[160];
    std::snprintf(buf, sizeof buf, "status %s, objective %.6f, kkt %.2e",
                  to_string(r.res.status).c_str(), r.obj_proj, r.res.kkt_residual);
    report(3, "two-node network converges to the analytic dispatch",
           conv && resid && std::abs(r.obj_proj - 2.0) <= 2e-3 &&
               r.res.kkt_residual <= 1e-3,
           buf);
  }

  // 4: coupled 6-bus / 7-node benchmark against the reference.
  {
    const RunOutcome r = run_fixture("iegs_6_7.json", FlowMode::Unidirectional,
                                     AdmmConfig{}, identity_gaps);
    const OracleCase& oc = solved_pairs().at("iegs/uni");
    const bool conv = r.res.status == AdmmStatus::Converged && r.res.state.k <= 5000;
    const double gap = std::abs(r.obj_proj - oc.ref.objective) / std::abs(oc.ref.objective);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d sweeps, %.1f s, gap %.2e, violation %.2e",
                  r.res.state.k, r.secs, gap, r.viol_proj);
    report(4, "coupled benchmark closes the optimality gap",
           conv && r.secs <= 120.0 && oc.ref.feasible && gap <= 5e-3 &&
               r.viol_proj <= 1e-4,
           buf);
  }

  // 5: reversed flow is picked up, and flow signs track pressure drops.
  {
    bool ok = true;
    std::string detail;
    const OracleCase& rev = solved_pairs().at("reversed/bi");
    const VarLayout& L = rev.central.layout;
    if (!rev.ref.feasible || rev.ref.directions.size() != 1 ||
        rev.ref.directions[0] != -1 ||
        std::abs(rev.ref.z[L.u_x[0]] + 1.0) > 1e-3 ||
        std::abs(rev.ref.z[L.pipe_x[0]] + 2.0) > 1e-3) {
      ok = false;
      detail = "reversed fixture did not pick the backward direction";
    }
    int checked = 0;
    for (const auto& [tag, oc] : solved_pairs()) {
      if (!oc.ref.feasible) continue;
      const VarLayout& lay = oc.central.layout;
      for (size_t i = 0; i < oc.spec.pipelines.size(); ++i) {
        const Pipeline& pipe = oc.spec.pipelines[i];
        const double g = oc.ref.z[lay.pipe_x[i]];
        const double drop = oc.ref.z[lay.pi_x[oc.spec.gas_node_index(pipe.from)]] -
                            oc.ref.z[lay.pi_x[oc.spec.gas_node_index(pipe.to)]];
        if (std::abs(drop) <= 1e-4) continue;
        ++checked;
        if ((g > 0) != (drop > 0)) {
          ok = false;
          detail = "sign mismatch on " + tag + " pipe " + pipe.id;
        }
      }
    }
    if (detail.empty())
      detail = "backward flow -2 recovered; " + std::to_string(checked) +
               " pipe signs consistent";
    report(5, "flow direction machinery picks the true orientation", ok, detail);
  }

  // 6: the multiplier step always equals the scaled consensus mismatch,
  // including on a run that hits its iteration cap.
  {
    AdmmConfig capped;
    capped.max_iter = 300;
    const RunOutcome r = run_fixture("two_node_gas.json", FlowMode::Bidirectional,
                                     capped, identity_gaps);
    run_fixture("zero_load.json", FlowMode::Unidirectional, AdmmConfig{}, identity_gaps);
    double worst = 0;
    for (double g : identity_gaps) worst = std::max(worst, g);
    char buf[160];
    std::snprintf(buf, sizeof buf, "worst gap %.2e over %zu runs (capped run: %s)", worst,
                  identity_gaps.size(), to_string(r.res.status).c_str());
    report(6, "multiplier steps equal the scaled mismatch on every run",
           worst <= 1e-12, buf);
  }

  // 7: reference optima expand into exactly consistent agent copies.
  {
    bool ok = true;
    std::string detail;
    double worst_lift = 0, worst_cost = 0;
    for (const FixtureRun& fr : oracle_pairs()) {
      const OracleCase& oc = solved_pairs().at(fr.tag);
      if (!oc.ref.feasible) {
        ok = false;
        detail = std::string("infeasible reference on ") + fr.tag;
        break;
      }
      const DecomposedProblem dec = decompose(oc.spec, fr.mode);
      const Eigen::VectorXd x = oc.ref.z.head(dec.layout.dim);
      Eigen::VectorXd y(dec.y_dim);
      for (int i = 0; i < dec.y_dim; ++i) y[i] = x[dec.consensus.owner[i]];
      const LiftReport lift = lift_to_feasibility(dec, x, y);
      double cost = 0;
      for (const Agent& a : dec.agents) cost += agent_objective(dec, a, x);
      const double cost_diff = std::abs(cost - oc.central.objective(oc.ref.z));
      worst_lift = std::max(worst_lift, lift.max_violation);
      worst_cost = std::max(worst_cost, cost_diff);
      if (lift.max_violation > 1e-10 || cost_diff > 1e-10) {
        ok = false;
        detail = std::string("mismatch on ") + fr.tag;
      }
    }
    if (detail.empty()) {
      char buf[120];
      std::snprintf(buf, sizeof buf, "7 cases, worst lift %.1e, worst cost gap %.1e",
                    worst_lift, worst_cost);
      detail = buf;
    }
    report(7, "reference optima lift into consistent agent copies", ok, detail);
  }

  // 8: repeated comparisons are byte-identical.
  {
    bool ok = true;
    std::string detail;
    std::string sums[2];
    for (int i = 0; i < 2 && ok; ++i) {
      const std::string sum =
          "/tmp/oef_acc_" + std::to_string(getpid()) + "_" + std::to_string(i) + ".json";
      const std::string cmd = std::string(OEF_CLI_PATH) + " compare --network " +
                              fixture("two_node_gas.json") + " --summary " + sum +
                              " > /dev/null 2>&1";
      const int rc = std::system(cmd.c_str());
      if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0) {
        ok = false;
        detail = "comparison run failed";
      } else {
        sums[i] = slurp(sum);
      }
    }
    if (ok && (sums[0].empty() || sums[0] != sums[1])) {
      ok = false;
      detail = "summaries differ across runs";
    }
    if (ok) detail = std::to_string(sums[0].size()) + " bytes, identical";
    report(8, "repeated comparisons reproduce byte-identically", ok, detail);
  }

  std::printf("%d/8 criteria passed\n", 8 - g_failed);
  return g_failed;
}
