#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "oef/localsolve.hpp"

using namespace oef;

namespace {

double box_objective(const BoxQp& p, const Eigen::VectorXd& x) {
  return (p.quad.array() * x.array().square() + p.lin.array() * x.array()).sum();
}

double qcqp_objective(const ConvexQcqp& p, const Eigen::VectorXd& y) {
  return 0.5 * y.dot(p.h.cwiseProduct(y)) + p.g.dot(y);
}

}  // namespace

TEST_CASE("box update matches the scalar stationary point") {
  // one original with cost p^2, one copy targeting 3, multiplier 0, weight 1:
  // minimize p^2 + 1/2 (p - 3)^2  =>  p = 3 / (2 + 1) = 1
  BoxQp p;
  p.quad = Eigen::VectorXd::Constant(1, 1.5);  // cost curvature 1 + weight/2
  p.lin = Eigen::VectorXd::Constant(1, -3.0);  // -weight * target
  p.lo = Eigen::VectorXd::Constant(1, 0.0);
  p.hi = Eigen::VectorXd::Constant(1, 10.0);
  CHECK(solve_box(p)[0] == doctest::Approx(1.0).epsilon(1e-14));

  p.lo[0] = 2.0;  // same objective, tighter box: clamps
  CHECK(solve_box(p)[0] == doctest::Approx(2.0).epsilon(1e-14));

  p.lo[0] = 0.0;
  p.lin[0] = 0.0;  // no pull: stays at the origin
  CHECK(solve_box(p)[0] == 0.0);
}

TEST_CASE("box update rejects crossed bounds") {
  BoxQp p;
  p.quad = Eigen::VectorXd::Constant(1, 1.0);
  p.lin = Eigen::VectorXd::Zero(1);
  p.lo = Eigen::VectorXd::Constant(1, 2.0);
  p.hi = Eigen::VectorXd::Constant(1, 1.0);
  CHECK_THROWS_AS((void)solve_box(p), std::invalid_argument);
}

TEST_CASE("box update beats a dense scan on random coordinates") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    BoxQp p;
    p.quad = Eigen::VectorXd::Constant(1, std::abs(u(rng)) + 0.1);
    p.lin = Eigen::VectorXd::Constant(1, u(rng));
    p.lo = Eigen::VectorXd::Constant(1, -2.0);
    p.hi = Eigen::VectorXd::Constant(1, 2.0);
    const Eigen::VectorXd x = solve_box(p);
    double best = 1e300, bx = 0;
    for (double t = -2; t <= 2; t += 1e-4) {
      Eigen::VectorXd z = Eigen::VectorXd::Constant(1, t);
      if (double v = box_objective(p, z); v < best) {
        best = v;
        bx = t;
      }
    }
    CHECK(std::abs(x[0] - bx) <= 1e-4 + 1e-9);
    CHECK(box_objective(p, x) <= best + 1e-9);
  }
}

TEST_CASE("line agent equality QP solves its KKT system exactly") {
  // copies (flow, angle_m, angle_n), targets 0, weight 1; the flow tracks
  // twice the angle difference and is pinned to 1 by the balance row.
  EqQp p;
  p.h = Eigen::VectorXd::Ones(3);
  p.g = Eigen::VectorXd::Zero(3);
  p.A = Eigen::MatrixXd(2, 3);
  p.A << 1, -2, 2, 1, 0, 0;
  p.b = Eigen::VectorXd(2);
  p.b << 0, 1;
  const EqQpSolution s = solve_eq_qp(p);
  CHECK(s.y[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.y[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s.y[2] == doctest::Approx(-0.25).epsilon(1e-12));
  const Eigen::VectorXd stat = p.h.cwiseProduct(s.y) + p.g + p.A.transpose() * s.mult;
  CHECK(stat.norm() <= 1e-10);
  CHECK((p.A * s.y - p.b).norm() <= 1e-10);
}

TEST_CASE("homogeneous equality QP returns zero") {
  EqQp p;
  p.h = Eigen::VectorXd::Constant(4, 2.0);
  p.g = Eigen::VectorXd::Zero(4);
  p.A = Eigen::MatrixXd::Random(2, 4);
  p.b = Eigen::VectorXd::Zero(2);
  CHECK(solve_eq_qp(p).y.norm() == 0.0);
}

TEST_CASE("duplicated equality row is a rank-deficiency error") {
  EqQp p;
  p.h = Eigen::VectorXd::Ones(3);
  p.g = Eigen::VectorXd::Zero(3);
  p.A = Eigen::MatrixXd(2, 3);
  p.A << 1, -2, 2, 1, -2, 2;
  p.b = Eigen::VectorXd(2);
  p.b << 0, 0;
  try {
    solve_eq_qp(p);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("rank") != std::string::npos);
  }
}

TEST_CASE("zero equality rows are inert unless inconsistent") {
  EqQp p;
  p.h = Eigen::VectorXd::Ones(2);
  p.g = Eigen::VectorXd(2);
  p.g << 1, -1;
  p.A = Eigen::MatrixXd::Zero(1, 2);
  p.b = Eigen::VectorXd::Zero(1);
  const EqQpSolution s = solve_eq_qp(p);
  CHECK(s.y[0] == doctest::Approx(-1.0));
  CHECK(s.mult[0] == 0.0);
  p.b[0] = 1.0;  // 0 = 1: an impossible balance
  CHECK_THROWS(solve_eq_qp(p));
}

TEST_CASE("gas-node update matches an exhaustive reduction") {
  // copies (supply, flow, pressure_m, pressure_n), targets 0, weight 1;
  // balance supply - flow = 2 and physics flow^2 <= pressure drop.
  ConvexQcqp p;
  p.h = Eigen::VectorXd::Ones(4);
  p.g = Eigen::VectorXd::Zero(4);
  p.A = Eigen::MatrixXd(1, 4);
  p.A << 1, -1, 0, 0;
  p.b = Eigen::VectorXd::Constant(1, 2.0);
  QuadIneq w;
  w.Q = Eigen::MatrixXd::Zero(4, 4);
  w.Q(1, 1) = 2.0;
  w.q = Eigen::VectorXd(4);
  w.q << 0, 0, -1, 1;
  w.c = 0;
  p.quad_ineq.push_back(w);

  const ConvexQcqpSolution s = solve_convex_qcqp(p);
  REQUIRE(s.feasible);
  CHECK(qcqp_kkt_residual(p, s) <= 1e-6);

  // reduction: fix the flow g, then supply = g + 2 and the cheapest
  // pressures sit symmetrically at +-g^2/2, leaving a one-variable scan.
  double best = 1e300, bg = 0;
  for (double g = -2; g <= 0; g += 1e-5) {
    const double v = 0.5 * (g + 2) * (g + 2) + 0.5 * g * g + g * g * g * g / 4;
    if (v < best) {
      best = v;
      bg = g;
    }
  }
  CHECK(s.y[1] == doctest::Approx(bg).epsilon(1e-4));
  CHECK(s.y[0] == doctest::Approx(bg + 2).epsilon(1e-4));
  CHECK(s.y[2] == doctest::Approx(bg * bg / 2).epsilon(1e-3));
  CHECK(s.y[3] == doctest::Approx(-bg * bg / 2).epsilon(1e-3));
  CHECK(qcqp_objective(p, s.y) <= best + 1e-6);

  // the same multiplier also solves the scalar optimality equation
  const double mu = s.quad_mult[0];
  CHECK(2 * mu * (1 + mu) * (1 + mu) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("update with no inequalities reduces to the equality solver") {
  ConvexQcqp p;
  p.h = Eigen::VectorXd::Constant(3, 2.0);
  p.g = Eigen::VectorXd(3);
  p.g << 1, -2, 0.5;
  p.A = Eigen::MatrixXd(1, 3);
  p.A << 1, 1, 1;
  p.b = Eigen::VectorXd::Constant(1, 1.5);
  const ConvexQcqpSolution s = solve_convex_qcqp(p);
  const EqQpSolution e = solve_eq_qp({p.h, p.g, p.A, p.b});
  CHECK((s.y - e.y).norm() <= 1e-8);
  CHECK((s.eq_mult - e.mult).norm() <= 1e-8);
}

TEST_CASE("box and equality solvers agree without rows") {
  BoxQp b;
  b.quad = Eigen::VectorXd::Constant(2, 1.5);
  b.lin = Eigen::VectorXd(2);
  b.lin << -3, 2;
  b.lo = Eigen::VectorXd::Constant(2, -100.0);
  b.hi = Eigen::VectorXd::Constant(2, 100.0);
  EqQp e;
  e.h = 2 * b.quad;  // same curvature, different convention
  e.g = b.lin;
  e.A = Eigen::MatrixXd::Zero(0, 2);
  e.b = Eigen::VectorXd::Zero(0);
  CHECK((solve_box(b) - solve_eq_qp(e).y).norm() <= 1e-12);
}

TEST_CASE("pressure-ratio row that is inactive gets multiplier zero") {
  // minimize (pm - 4)^2 + (pn - 1)^2 subject to pn <= 1.5 pm
  ConvexQcqp p;
  p.h = Eigen::VectorXd::Constant(2, 2.0);
  p.g = Eigen::VectorXd(2);
  p.g << -8, -2;
  p.A = Eigen::MatrixXd::Zero(0, 2);
  p.b = Eigen::VectorXd::Zero(0);
  LinIneq ratio;
  ratio.a = Eigen::VectorXd(2);
  ratio.a << -1.5, 1;
  ratio.b = 0;
  p.lin_ineq.push_back(ratio);

  const ConvexQcqpSolution s = solve_convex_qcqp(p);
  REQUIRE(s.feasible);
  CHECK(s.y[0] == doctest::Approx(4.0).epsilon(1e-7));
  CHECK(s.y[1] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(s.lin_mult[0] <= 1e-9);

  // tightening an inactive row must not move the solution
  ConvexQcqp shifted = p;
  shifted.lin_ineq[0].b = -0.5;
  CHECK((solve_convex_qcqp(shifted).y - s.y).norm() <= 1e-7);
}

TEST_CASE("infeasible update is reported with the blocking row") {
  ConvexQcqp p;
  p.h = Eigen::VectorXd::Ones(1);
  p.g = Eigen::VectorXd::Zero(1);
  p.A = Eigen::MatrixXd::Zero(0, 1);
  p.b = Eigen::VectorXd::Zero(0);
  LinIneq lo, hi;
  lo.a = Eigen::VectorXd::Constant(1, 1.0);
  lo.b = -1.0;  // y <= -1
  hi.a = Eigen::VectorXd::Constant(1, -1.0);
  hi.b = -1.0;  // y >= 1
  p.lin_ineq.push_back(lo);
  p.lin_ineq.push_back(hi);
  const ConvexQcqpSolution s = solve_convex_qcqp(p);
  CHECK_FALSE(s.feasible);
  CHECK_FALSE(s.infeasible_row.empty());
  CHECK(s.infeasible_amount > 0.1);
}

TEST_CASE("random convex updates satisfy their optimality conditions") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 2 + trial % 5;
    ConvexQcqp p;
    p.h = Eigen::VectorXd::NullaryExpr(n, [&] { return 0.5 + std::abs(u(rng)) * 2; });
    p.g = Eigen::VectorXd::NullaryExpr(n, [&] { return 2 * u(rng); });
    const Eigen::VectorXd y0 = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
    const bool with_eq = trial % 3 == 0;
    p.A = Eigen::MatrixXd::Zero(with_eq ? 1 : 0, n);
    p.b = Eigen::VectorXd::Zero(with_eq ? 1 : 0);
    if (with_eq) {
      for (int j = 0; j < n; ++j) p.A(0, j) = u(rng);
      p.b[0] = p.A.row(0).dot(y0);
    }
    for (int k = 0; k < 2; ++k) {  // linear rows through y0 with slack
      LinIneq row;
      row.a = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
      row.b = row.a.dot(y0) + 0.2 + std::abs(u(rng));
      p.lin_ineq.push_back(row);
    }
    QuadIneq q;  // ball of radius ~1 around y0
    q.Q = 2 * Eigen::MatrixXd::Identity(n, n);
    q.q = -2 * y0;
    q.c = y0.squaredNorm() - (1.0 + std::abs(u(rng)));
    p.quad_ineq.push_back(q);

    const ConvexQcqpSolution s = solve_convex_qcqp(p);
    REQUIRE(s.feasible);
    CHECK(qcqp_kkt_residual(p, s) <= 1e-6);

    // no sampled feasible point may beat the reported solution
    const double obj = qcqp_objective(p, s.y);
    for (int m = 0; m < 200; ++m) {
      Eigen::VectorXd z =
          y0 + 0.5 * Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
      if (with_eq) z += p.A.row(0).transpose() * (p.b[0] - p.A.row(0).dot(z)) /
                        p.A.row(0).squaredNorm();
      bool ok = true;
      for (const LinIneq& r : p.lin_ineq) ok = ok && r.a.dot(z) - r.b <= 0;
      ok = ok && 0.5 * z.dot(q.Q * z) + q.q.dot(z) + q.c <= 0;
      if (ok) CHECK(obj <= qcqp_objective(p, z) + 1e-6);
    }
  }
}
