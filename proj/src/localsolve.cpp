#include "oef/localsolve.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace oef {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Eigen::VectorXd solve_box(const BoxQp& p) {
  const int n = static_cast<int>(p.quad.size());
  Eigen::VectorXd x(n);
  for (int j = 0; j < n; ++j) {
    if (p.lo[j] > p.hi[j]) throw std::invalid_argument("solve_box: lo > hi");
    double stat;
    if (p.quad[j] > 0) {
      stat = -p.lin[j] / (2 * p.quad[j]);
    } else if (p.lin[j] > 0) {
      stat = -kInf;
    } else if (p.lin[j] < 0) {
      stat = kInf;
    } else {
      stat = 0;
    }
    x[j] = std::min(std::max(stat, p.lo[j]), p.hi[j]);
    if (!std::isfinite(x[j]))
      throw std::runtime_error("solve_box: unbounded coordinate without finite bound");
  }
  return x;
}

EqQpSolution solve_eq_qp(const EqQp& p) {
  const int n = static_cast<int>(p.h.size());
  const int m = static_cast<int>(p.A.rows());
  if ((p.h.array() <= 0).any()) throw std::invalid_argument("solve_eq_qp: H must be PD");

  // Zero rows carry no constraint; an inconsistent zero row (0 = b, b != 0)
  // is an infeasible model, e.g. a balance row at a node with no devices.
  std::vector<int> live;
  live.reserve(m);
  for (int i = 0; i < m; ++i) {
    if (p.A.row(i).cwiseAbs().maxCoeff() > 1e-14) {
      live.push_back(i);
    } else if (std::abs(p.b[i]) > 1e-9) {
      throw std::runtime_error("solve_eq_qp: inconsistent empty row " + std::to_string(i));
    }
  }

  EqQpSolution sol;
  sol.mult = Eigen::VectorXd::Zero(m);
  const Eigen::VectorXd hinv = p.h.cwiseInverse();
  if (live.empty()) {
    sol.y = -hinv.cwiseProduct(p.g);
    return sol;
  }

  Eigen::MatrixXd A(live.size(), n);
  Eigen::VectorXd b(live.size());
  for (size_t i = 0; i < live.size(); ++i) {
    A.row(i) = p.A.row(live[i]);
    b[i] = p.b[live[i]];
  }

  // nu solves (A H^-1 A') nu = -(A H^-1 g + b); then y = -H^-1 (g + A' nu).
  const Eigen::MatrixXd S = A * hinv.asDiagonal() * A.transpose();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible())
    throw std::runtime_error("solve_eq_qp: rank-deficient equality rows");
  const Eigen::VectorXd nu = lu.solve(-(A * hinv.cwiseProduct(p.g) + b));
  sol.y = -hinv.cwiseProduct(p.g + A.transpose() * nu);
  for (size_t i = 0; i < live.size(); ++i) sol.mult[live[i]] = nu[i];
  return sol;
}

namespace {

// Shared row evaluation for the barrier method. Rows are the linear
// inequalities followed by the quadratic ones.
struct IneqRows {
  const ConvexQcqp& p;
  int count() const { return static_cast<int>(p.lin_ineq.size() + p.quad_ineq.size()); }

  double value(int i, const Eigen::VectorXd& y) const {
    const int nl = static_cast<int>(p.lin_ineq.size());
    if (i < nl) return p.lin_ineq[i].a.dot(y) - p.lin_ineq[i].b;
    const QuadIneq& r = p.quad_ineq[i - nl];
    return 0.5 * y.dot(r.Q * y) + r.q.dot(y) + r.c;
  }

  Eigen::VectorXd gradient(int i, const Eigen::VectorXd& y) const {
    const int nl = static_cast<int>(p.lin_ineq.size());
    if (i < nl) return p.lin_ineq[i].a;
    const QuadIneq& r = p.quad_ineq[i - nl];
    return r.Q * y + r.q;
  }

  const Eigen::MatrixXd* hessian(int i) const {  // nullptr for linear rows
    const int nl = static_cast<int>(p.lin_ineq.size());
    return i < nl ? nullptr : &p.quad_ineq[i - nl].Q;
  }

  std::string name(int i) const {
    const int nl = static_cast<int>(p.lin_ineq.size());
    return i < nl ? "lin[" + std::to_string(i) + "]"
                  : "quad[" + std::to_string(i - nl) + "]";
  }

  // Rough magnitude of the row's coefficients, for relative tolerances.
  double scale(int i) const {
    const int nl = static_cast<int>(p.lin_ineq.size());
    if (i < nl) return 1 + p.lin_ineq[i].a.cwiseAbs().maxCoeff() + std::abs(p.lin_ineq[i].b);
    const QuadIneq& r = p.quad_ineq[i - nl];
    double q = r.Q.size() ? r.Q.cwiseAbs().maxCoeff() : 0;
    double l = r.q.size() ? r.q.cwiseAbs().maxCoeff() : 0;
    return 1 + q + l + std::abs(r.c);
  }
};

// One Newton step of min F(y) s.t. Ay = 0-residual; assumes the iterate is
// already equality-feasible so only dy in null(A) is produced.
// Returns false when the KKT system is singular beyond repair.
bool newton_step(const Eigen::MatrixXd& H, const Eigen::VectorXd& grad, const Eigen::MatrixXd& A,
                 Eigen::VectorXd& dy, Eigen::VectorXd& nu) {
  const int n = static_cast<int>(H.rows());
  const int m = static_cast<int>(A.rows());
  Eigen::MatrixXd K(n + m, n + m);
  K.setZero();
  K.topLeftCorner(n, n) = H + 1e-13 * Eigen::MatrixXd::Identity(n, n);
  if (m) {
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
  }
  Eigen::VectorXd rhs(n + m);
  rhs.head(n) = -grad;
  rhs.tail(m).setZero();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  lu.setThreshold(1e-12);
  Eigen::VectorXd step;
  if (lu.isInvertible()) {
    step = lu.solve(rhs);
  } else {
    // Flat directions (no curvature, no gradient) make K singular but leave
    // the system consistent; take the minimum-norm step and stay put along
    // them. Genuinely inconsistent systems are reported as failure.
    step = K.completeOrthogonalDecomposition().solve(rhs);
    if ((K * step - rhs).cwiseAbs().maxCoeff() > 1e-6 * (1 + rhs.cwiseAbs().maxCoeff()))
      return false;
  }
  dy = step.head(n);
  nu = step.tail(m);
  return true;
}

}  // namespace

ConvexQcqpSolution solve_convex_qcqp(const ConvexQcqp& p) {
  const int n = static_cast<int>(p.h.size());
  const IneqRows rows{p};
  const int m = rows.count();
  ConvexQcqpSolution sol;
  sol.eq_mult = Eigen::VectorXd::Zero(p.A.rows());
  sol.lin_mult = Eigen::VectorXd::Zero(p.lin_ineq.size());
  sol.quad_mult = Eigen::VectorXd::Zero(p.quad_ineq.size());

  // The equality-constrained relaxation is exact whenever its minimizer
  // already satisfies every inequality (their multipliers are then zero).
  {
    EqQpSolution eq = solve_eq_qp({p.h, p.g, p.A, p.b});
    bool inside = true;
    for (int i = 0; i < m && inside; ++i) inside = rows.value(i, eq.y) <= 0;
    if (inside) {
      sol.y = eq.y;
      sol.eq_mult = eq.mult;
      return sol;
    }
  }

  // Equality-consistent start: minimum-norm solution of Ay = b.
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  if (p.A.rows() > 0) {
    y = p.A.completeOrthogonalDecomposition().solve(p.b);
    if ((p.A * y - p.b).cwiseAbs().maxCoeff() > 1e-8 * (1 + p.b.cwiseAbs().maxCoeff())) {
      sol.feasible = false;
      sol.infeasible_row = "equality rows inconsistent";
      sol.infeasible_amount = (p.A * y - p.b).cwiseAbs().maxCoeff();
      sol.y = y;
      return sol;
    }
  }

  auto strictly_feasible = [&](const Eigen::VectorXd& cand) {
    for (int i = 0; i < m; ++i)
      if (rows.value(i, cand) > -1e-10 * rows.scale(i)) return false;
    return true;
  };

  // Phase I: minimize the extra slack s with f_i(y) <= s until s < 0.
  // A proximal pull toward the start point keeps the barrier subproblem
  // strictly convex and bounded; blocks with unbounded variables would
  // otherwise yield singular Newton systems along their flat directions.
  if (!strictly_feasible(y)) {
    double s = 0;
    for (int i = 0; i < m; ++i) s = std::max(s, rows.value(i, y));
    s += 1.0;
    const double delta = 1e-6 * (1 + y.cwiseAbs().maxCoeff() + std::abs(s));
    Eigen::VectorXd z0(n + 1);
    z0.head(n) = y;
    z0[n] = s;
    Eigen::MatrixXd Aext(p.A.rows(), n + 1);
    if (p.A.rows()) {
      Aext.leftCols(n) = p.A;
      Aext.col(n).setZero();
    }
    bool found = false;
    for (double t = 1; t <= 1e10 && !found; t *= 5) {
      for (int it = 0; it < 60; ++it) {
        Eigen::VectorXd z(n + 1);
        z.head(n) = y;
        z[n] = s;
        Eigen::VectorXd grad = delta * (z - z0);
        Eigen::MatrixXd H = delta * Eigen::MatrixXd::Identity(n + 1, n + 1);
        grad[n] += t;
        for (int i = 0; i < m; ++i) {
          const double r = s - rows.value(i, y);
          Eigen::VectorXd gi(n + 1);
          gi.head(n) = rows.gradient(i, y);
          gi[n] = -1;
          grad -= gi / (-r);  // d/dx of -log(r) with r = s - f_i
          H += gi * gi.transpose() / (r * r);
          if (const Eigen::MatrixXd* Q = rows.hessian(i))
            H.topLeftCorner(n, n) += *Q / r;
        }
        Eigen::VectorXd dy, nu;
        if (!newton_step(H, grad, Aext, dy, nu)) break;
        const double decrement = -grad.dot(dy) / 2;
        double alpha = 1;
        while (alpha > 1e-14) {
          const Eigen::VectorXd yc = y + alpha * dy.head(n);
          const double sc = s + alpha * dy[n];
          bool domain = true;
          for (int i = 0; i < m && domain; ++i) domain = sc - rows.value(i, yc) > 0;
          if (domain) break;
          alpha *= 0.6;
        }
        y += alpha * dy.head(n);
        s += alpha * dy[n];
        if (strictly_feasible(y)) {
          found = true;
          break;
        }
        if (decrement < 1e-12 * (1 + std::abs(s))) break;
      }
    }
    if (!found) {
      int worst = 0;
      for (int i = 1; i < m; ++i)
        if (rows.value(i, y) / rows.scale(i) > rows.value(worst, y) / rows.scale(worst)) worst = i;
      sol.feasible = false;
      sol.infeasible_row = rows.name(worst);
      sol.infeasible_amount = rows.value(worst, y);
      sol.y = y;
      return sol;
    }
  }

  // Phase II: barrier path following on the true objective.
  const double mu_min = 1e-9;
  double mu = 1.0;
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(p.A.rows());
  for (int outer = 0; outer < 50; ++outer) {
    for (int it = 0; it < 60; ++it) {
      Eigen::VectorXd grad = p.h.cwiseProduct(y) + p.g;
      Eigen::MatrixXd H = Eigen::MatrixXd(p.h.asDiagonal());
      for (int i = 0; i < m; ++i) {
        const double fi = rows.value(i, y);  // < 0
        const Eigen::VectorXd gi = rows.gradient(i, y);
        grad += mu * gi / (-fi);
        H += mu * gi * gi.transpose() / (fi * fi);
        if (const Eigen::MatrixXd* Q = rows.hessian(i)) H += mu * (*Q) / (-fi);
      }
      Eigen::VectorXd dy;
      if (!newton_step(H, grad, p.A, dy, nu)) break;
      const double decrement = -grad.dot(dy) / 2;
      if (decrement < 1e-10) break;

      auto barrier_value = [&](const Eigen::VectorXd& cand) {
        double v = 0.5 * cand.dot(p.h.cwiseProduct(cand)) + p.g.dot(cand);
        for (int i = 0; i < m; ++i) {
          const double fi = rows.value(i, cand);
          if (fi >= 0) return kInf;
          v -= mu * std::log(-fi);
        }
        return v;
      };
      const double base = barrier_value(y);
      double alpha = 1;
      while (alpha > 1e-14 && barrier_value(y + alpha * dy) > base - 1e-4 * alpha * 2 * decrement)
        alpha *= 0.6;
      y += alpha * dy;
      if (alpha <= 1e-14) break;
    }
    if (mu <= mu_min) break;
    mu = std::max(mu * 0.2, mu_min);
  }

  sol.y = y;
  sol.eq_mult = nu;

  // The on-path estimate mu/(-f_i) degrades once mu reaches the line-search
  // noise floor, so refit multipliers by least squares on the stationarity
  // condition: start from a generous near-active set and drop rows whose
  // fitted multiplier comes out negative until the remainder is nonnegative.
  std::vector<int> active;
  for (int i = 0; i < m; ++i)
    if (rows.value(i, y) > -1e-3 * rows.scale(i)) active.push_back(i);
  const int me = static_cast<int>(p.A.rows());
  const int nl = static_cast<int>(p.lin_ineq.size());
  while (true) {
    const int na = static_cast<int>(active.size());
    if (me + na == 0) break;
    Eigen::MatrixXd M(n, me + na);
    if (me) M.leftCols(me) = p.A.transpose();
    for (int i = 0; i < na; ++i) M.col(me + i) = rows.gradient(active[i], y);
    const Eigen::VectorXd fit =
        M.completeOrthogonalDecomposition().solve(-(p.h.cwiseProduct(y) + p.g));
    int worst = -1;
    double most_negative = -1e-12;
    for (int i = 0; i < na; ++i)
      if (fit[me + i] < most_negative) {
        most_negative = fit[me + i];
        worst = i;
      }
    if (worst >= 0) {
      active.erase(active.begin() + worst);
      continue;
    }
    sol.eq_mult = fit.head(me);
    for (int i = 0; i < na; ++i) {
      const double dual = std::max(0.0, fit[me + i]);
      if (active[i] < nl)
        sol.lin_mult[active[i]] = dual;
      else
        sol.quad_mult[active[i] - nl] = dual;
    }
    break;
  }
  return sol;
}

double qcqp_kkt_residual(const ConvexQcqp& p, const ConvexQcqpSolution& s) {
  const IneqRows rows{p};
  const int m = rows.count();
  const int nl = static_cast<int>(p.lin_ineq.size());
  Eigen::VectorXd stat = p.h.cwiseProduct(s.y) + p.g;
  if (p.A.rows()) stat += p.A.transpose() * s.eq_mult;
  double worst = 0;
  for (int i = 0; i < m; ++i) {
    const double mult = i < nl ? s.lin_mult[i] : s.quad_mult[i - nl];
    const double fi = rows.value(i, s.y);
    stat += mult * rows.gradient(i, s.y);
    worst = std::max(worst, fi);                   // primal feasibility
    worst = std::max(worst, -mult);                // dual feasibility
    worst = std::max(worst, std::abs(mult * fi));  // complementarity
  }
  if (p.A.rows()) worst = std::max(worst, (p.A * s.y - p.b).cwiseAbs().maxCoeff());
  worst = std::max(worst, stat.cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace oef
