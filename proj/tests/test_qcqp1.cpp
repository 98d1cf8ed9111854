#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "oef/formulation.hpp"
#include "oef/model.hpp"
#include "oef/oracle.hpp"
#include "oef/qcqp1.hpp"

#include "test_util.hpp"

using namespace oef;

namespace {

// Pipe agent of the two-node fixture: copies (flow, pressure_m, pressure_n),
// constraint (pressure drop) - flow^2 <= 0 with unit pipe constant.
const Agent& fixture_pipe_agent(const DecomposedProblem& dec) {
  for (const Agent& a : dec.agents)
    if (a.kind == AgentKind::PipelineIneq) return a;
  throw std::logic_error("no pipe agent");
}

// Free-standing pipe agent with an arbitrary squared pipe constant.
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

Qcqp1Problem make_problem(const Agent& agent, const Eigen::VectorXd& t, double d) {
  return build_pipe_subproblem(agent, t, Eigen::VectorXd::Zero(t.size()), d);
}

double dual_value(const Qcqp1Problem& p, double v) {
  const Eigen::VectorXd b = p.b0 + v * p.b1;
  const Eigen::MatrixXd m = p.A0 + v * p.A1;
  return -0.5 * b.dot(m.llt().solve(b)) + p.c0 + v * p.c1;
}

Eigen::VectorXd vec3(double a, double b, double c) {
  Eigen::VectorXd v(3);
  v << a, b, c;
  return v;
}

}  // namespace

TEST_CASE("pipe subproblem assembly expands the penalized distance") {
  const DecomposedProblem dec =
      decompose(load_network(fixture("two_node_gas.json")), FlowMode::Unidirectional);
  const Agent& pipe = fixture_pipe_agent(dec);

  Qcqp1Problem p = make_problem(pipe, vec3(1, 4, 0), 1.0);
  CHECK((p.A0 - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
  CHECK((p.b0 - vec3(-1, -4, 0)).norm() == 0.0);
  CHECK(p.c0 == doctest::Approx(8.5).epsilon(1e-15));
  Eigen::MatrixXd a1 = Eigen::MatrixXd::Zero(3, 3);
  a1(0, 0) = -2;
  CHECK((p.A1 - a1).norm() == 0.0);
  CHECK((p.b1 - vec3(0, 1, -1)).norm() == 0.0);
  CHECK(p.c1 == 0.0);

  // multipliers shift the linear term and the constant
  Eigen::VectorXd lam = vec3(1, 0, 0);
  Qcqp1Problem q = build_pipe_subproblem(pipe, vec3(1, 4, 0), lam, 1.0);
  CHECK((q.b0 - vec3(-2, -4, 0)).norm() == 0.0);
  CHECK(q.c0 == doctest::Approx(9.5).epsilon(1e-15));

  // scaled penalty shows up in every quadratic term
  Qcqp1Problem r = make_problem(pipe, vec3(1, 4, 0), 2.5);
  CHECK((r.A0 - 2.5 * Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
  CHECK((r.b0 - 2.5 * vec3(-1, -4, 0)).norm() == 0.0);

  Qcqp1Problem z = make_problem(pipe, Eigen::VectorXd::Zero(3), 1.0);
  CHECK(z.b0.norm() == 0.0);
  CHECK(z.c0 == 0.0);
}

TEST_CASE("oriented-physics split agents carry the mixed pressure-direction terms") {
  const DecomposedProblem dec =
      decompose(load_network(fixture("two_node_gas.json")), FlowMode::Bidirectional);
  const Agent* le = nullptr;
  const Agent* ge = nullptr;
  const Agent* ule = nullptr;
  const Agent* uge = nullptr;
  for (const Agent& a : dec.agents) {
    if (a.kind != AgentKind::PipelineIneq) continue;
    switch (a.quad_rows.at(0).tag.kind) {
      case RowTag::Kind::Weymouth17aLe: le = &a; break;
      case RowTag::Kind::Weymouth17aGe: ge = &a; break;
      case RowTag::Kind::Direction17bLe: ule = &a; break;
      case RowTag::Kind::Direction17bGe: uge = &a; break;
      default: break;
    }
  }
  REQUIRE(le);
  REQUIRE(ge);
  REQUIRE(ule);
  REQUIRE(uge);

  // flow^2 - drop * direction <= 0 over copies (flow, p_m, p_n, direction)
  Qcqp1Problem pl = make_problem(*le, Eigen::VectorXd::Zero(4), 1.0);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(4, 4);
  expect(0, 0) = 2;
  expect(1, 3) = expect(3, 1) = -1;
  expect(2, 3) = expect(3, 2) = 1;
  CHECK((pl.A1 - expect).norm() == 0.0);
  CHECK(pl.b1.norm() == 0.0);
  CHECK(pl.c1 == 0.0);

  // the mirror split is the exact negation
  Qcqp1Problem pg = make_problem(*ge, Eigen::VectorXd::Zero(4), 1.0);
  CHECK((pg.A1 + pl.A1).norm() == 0.0);

  // direction^2 <= 1 and >= 1, the latter with a shifted constant
  Qcqp1Problem ul = make_problem(*ule, Eigen::VectorXd::Zero(1), 1.0);
  CHECK(ul.A1(0, 0) == 2.0);
  CHECK(ul.c1 == -1.0);
  Qcqp1Problem ug = make_problem(*uge, Eigen::VectorXd::Zero(1), 1.0);
  CHECK(ug.A1(0, 0) == -2.0);
  CHECK(ug.c1 == 1.0);
}

TEST_CASE("active constraint: the multiplier solves its scalar optimality equation") {
  const Agent pipe = make_pipe_agent(1.0);
  const Qcqp1Problem p = make_problem(pipe, vec3(1, 4, 0), 1.0);
  const DualSolution s = solve_dual(p);
  CHECK_FALSE(s.hard_case);
  CHECK(s.v == doctest::Approx(0.234).epsilon(2e-3));
  const double lhs = 1.0 / ((1 - 2 * s.v) * (1 - 2 * s.v));
  CHECK(lhs == doctest::Approx(4 - 2 * s.v).epsilon(1e-9));
  CHECK(s.min_eig == doctest::Approx(1 - 2 * s.v).epsilon(1e-9));

  const Eigen::VectorXd y = recover_primal(p, s);
  CHECK(y[0] == doctest::Approx(1.880).epsilon(1e-3));
  CHECK(y[1] == doctest::Approx(3.766).epsilon(1e-3));
  CHECK(y[2] == doctest::Approx(0.234).epsilon(1e-3));
  CHECK(std::abs(y[0] * y[0] - (y[1] - y[2])) <= 1e-6);  // active physics
  CHECK(duality_gap(p, y, s) <= 1e-6);
}

TEST_CASE("satisfied constraint: zero multiplier and the unconstrained point") {
  const Agent pipe = make_pipe_agent(1.0);
  const Qcqp1Problem p = make_problem(pipe, vec3(2, 1, 0), 1.0);
  const DualSolution s = solve_dual(p);
  CHECK(s.v == 0.0);
  const Eigen::VectorXd y = recover_primal(p, s);
  CHECK((y - vec3(2, 1, 0)).norm() <= 1e-12);
  CHECK(duality_gap(p, y, s) <= 1e-12);
  CHECK(s.gamma == doctest::Approx(primal_value(p, y)).epsilon(1e-14));
}

TEST_CASE("zero targets stay at the origin") {
  const Agent pipe = make_pipe_agent(1.0);
  const Qcqp1Problem p = make_problem(pipe, Eigen::VectorXd::Zero(3), 1.0);
  const DualSolution s = solve_dual(p);
  CHECK(s.v == 0.0);
  CHECK(recover_primal(p, s).norm() == 0.0);
}

TEST_CASE("degenerate maximizer is completed through the null space") {
  // zero flow target with a large pressure-drop pull: the dual maximizer
  // sits where the shifted matrix loses rank and the flow is free.
  const Agent pipe = make_pipe_agent(1.0);
  const Qcqp1Problem p = make_problem(pipe, vec3(0, 4, 0), 1.0);
  const DualSolution s = solve_dual(p);
  CHECK(s.hard_case);
  CHECK(s.v == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(std::abs(s.min_eig) <= 1e-9);

  const Eigen::VectorXd y = recover_primal(p, s);
  CHECK(y[0] == doctest::Approx(std::sqrt(3.0)).epsilon(1e-8));
  CHECK(y[1] == doctest::Approx(3.5).epsilon(1e-8));
  CHECK(y[2] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(duality_gap(p, y, s) <= 1e-9);

  // the mirrored completion is equally optimal; ties break to the larger
  // first coordinate
  Eigen::VectorXd mirror = y;
  mirror[0] = -mirror[0];
  CHECK(primal_value(p, mirror) == doctest::Approx(primal_value(p, y)).epsilon(1e-12));
  CHECK(y[0] > 0);
}

TEST_CASE("gap accounting: suboptimal points, optimal points, infeasible points") {
  const Agent pipe = make_pipe_agent(1.0);
  const Qcqp1Problem p = make_problem(pipe, vec3(1, 4, 0), 1.0);
  const DualSolution s = solve_dual(p);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  const double gap0 = duality_gap(p, zero, s);
  CHECK(gap0 == doctest::Approx(primal_value(p, zero) - s.gamma).epsilon(1e-14));
  CHECK(gap0 > 1.0);
  CHECK_THROWS((void)duality_gap(p, vec3(0, 5, 0), s));  // violates the constraint
}

TEST_CASE("bound certificate flips sign exactly at the dual value") {
  const Agent pipe = make_pipe_agent(1.0);
  const Qcqp1Problem p = make_problem(pipe, vec3(1, 4, 0), 1.0);
  const DualSolution s = solve_dual(p);
  CHECK(certificate_min_eigenvalue(p, s.v, s.gamma) >= -1e-8);
  CHECK(certificate_min_eigenvalue(p, s.v, s.gamma - 0.1) > 1e-4);
  CHECK(certificate_min_eigenvalue(p, s.v, s.gamma + 0.1) < -1e-4);
}

TEST_CASE("dual function is concave along the feasible interval") {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> u(0, 1);
  const Agent pipe = make_pipe_agent(1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double d = 0.1 + 9.9 * u(rng);
    const Eigen::VectorXd t = vec3(10 * u(rng) - 5, 10 * u(rng) - 5, 10 * u(rng) - 5);
    const Qcqp1Problem p = make_problem(pipe, t, d);
    const double vmax = d / 2;  // where the flow diagonal hits zero
    double v1 = vmax * 0.98 * u(rng);
    double v3 = vmax * 0.98 * u(rng);
    if (v1 > v3) std::swap(v1, v3);
    const double mid = 0.5 * (v1 + v3);
    CHECK(dual_value(p, mid) >= 0.5 * (dual_value(p, v1) + dual_value(p, v3)) - 1e-9);
  }
}

TEST_CASE("randomized subproblems: no gap, tight certificates, clean KKT") {
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    const double w = 0.5 + 1.5 * u(rng);
    const Agent pipe = make_pipe_agent(w * w);
    const double d = 0.1 + 9.9 * u(rng);
    const Eigen::VectorXd t = vec3(10 * u(rng) - 5, 10 * u(rng) - 5, 10 * u(rng) - 5);
    const Qcqp1Problem p = make_problem(pipe, t, d);

    const DualSolution s = solve_dual(p);
    const Eigen::VectorXd y = recover_primal(p, s);
    CHECK(duality_gap(p, y, s) <= 1e-6 * (1 + std::abs(s.gamma)));
    CHECK(std::abs(s.v * constraint_value(p, y)) <= 1e-6);
    if (!s.hard_case)
      CHECK(((p.A0 + s.v * p.A1) * y + p.b0 + s.v * p.b1).norm() <= 1e-8);
    CHECK(certificate_min_eigenvalue(p, s.v, s.gamma) >= -1e-8);
  }
}

TEST_CASE("three-variable subproblem matches an exhaustive scan") {
  const Agent pipe = make_pipe_agent(1.0);
  const Qcqp1Problem p = make_problem(pipe, vec3(1, 4, 0), 1.0);
  const DualSolution s = solve_dual(p);
  const Eigen::VectorXd y = recover_primal(p, s);
  const auto [gy, gv] = brute_force_qcqp1(p, Eigen::VectorXd::Constant(3, -6),
                                          Eigen::VectorXd::Constant(3, 6), 0.05);
  CHECK(std::abs(gv - primal_value(p, y)) <= 1e-3);
  CHECK(std::abs(gv - s.gamma) <= 1e-3);
}

TEST_CASE("four-variable subproblem matches an exhaustive scan") {
  const DecomposedProblem dec =
      decompose(load_network(fixture("two_node_gas.json")), FlowMode::Bidirectional);
  const Agent* le = nullptr;
  for (const Agent& a : dec.agents)
    if (a.kind == AgentKind::PipelineIneq &&
        a.quad_rows.at(0).tag.kind == RowTag::Kind::Weymouth17aLe)
      le = &a;
  REQUIRE(le);
  Eigen::VectorXd t(4);
  t << 2, 1, 0, 0.2;  // violated at the target, so the constraint binds
  const Qcqp1Problem p = make_problem(*le, t, 1.0);
  const DualSolution s = solve_dual(p);
  const Eigen::VectorXd y = recover_primal(p, s);
  CHECK(duality_gap(p, y, s) <= 1e-6);
  const auto [gy, gv] = brute_force_qcqp1(p, Eigen::VectorXd::Constant(4, -4),
                                          Eigen::VectorXd::Constant(4, 4), 0.05);
  CHECK(std::abs(gv - primal_value(p, y)) <= 1e-3);
}
