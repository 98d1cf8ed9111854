#include "oef/qcqp1.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "oef/smalleig.hpp"

namespace oef {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Everything happens in the whitened eigenbasis: with A0 = LL' and
// L^-1 A1 L^-T = V diag(lam) V', substituting y = L^-T V u turns the problem
// into
//   min  1/2 ||u||^2 + p'u + c0   s.t.  1/2 sum lam_i u_i^2 + r'u + c1 <= 0,
// so the dual q(v) and its derivatives are plain sums over coordinates:
//   q(v)   = -1/2 sum (p_i + v r_i)^2 / (1 + v lam_i) + c0 + v c1
//   q'(v)  =  constraint value at u(v) = -(p + v r) ./ (1 + v lam)
//   q''(v) = -sum (r_i - lam_i p_i)^2 / (1 + v lam_i)^3  <= 0.
struct WhitenedProblem {
  Eigen::MatrixXd Lt;      // L^T, for mapping u back to y
  Eigen::MatrixXd V;
  Eigen::VectorXd lam;     // ascending
  Eigen::VectorXd p, r;
  double c0, c1;
  double v_max;            // sup of the PSD interval (inf if lam_min >= 0)

  int dim() const { return static_cast<int>(lam.size()); }

  double q(double v) const {
    double s = 0;
    for (int i = 0; i < dim(); ++i) {
      const double num = p[i] + v * r[i];
      s += num * num / (1 + v * lam[i]);
    }
    return -0.5 * s + c0 + v * c1;
  }

  double qprime(double v) const {
    double s = c1;
    for (int i = 0; i < dim(); ++i) {
      const double den = 1 + v * lam[i];
      const double num = p[i] + v * r[i];
      s += 0.5 * lam[i] * num * num / (den * den) - r[i] * num / den;
    }
    return s;
  }

  double qsecond(double v) const {
    double s = 0;
    for (int i = 0; i < dim(); ++i) {
      const double den = 1 + v * lam[i];
      const double num = r[i] - lam[i] * p[i];
      s -= num * num / (den * den * den);
    }
    return s;
  }

  Eigen::VectorXd primal_at(double v) const {
    Eigen::VectorXd u(dim());
    for (int i = 0; i < dim(); ++i) u[i] = -(p[i] + v * r[i]) / (1 + v * lam[i]);
    return to_y(u);
  }

  Eigen::VectorXd to_y(const Eigen::VectorXd& u) const {
    return Lt.triangularView<Eigen::Upper>().solve(V * u);
  }
};

WhitenedProblem whiten(const Qcqp1Problem& p) {
  const int n = static_cast<int>(p.b0.size());
  if (p.A0.rows() != n || p.A1.rows() != n || p.b1.size() != n)
    throw std::invalid_argument("qcqp1: inconsistent dimensions");
  const double scale = std::max(1.0, p.A0.cwiseAbs().maxCoeff());
  if ((p.A0 - p.A0.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("qcqp1: A0 must be symmetric");

  Eigen::LLT<Eigen::MatrixXd> llt(p.A0);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("qcqp1: A0 must be positive definite");
  const Eigen::MatrixXd L = llt.matrixL();

  // L^-1 A1 L^-T via two triangular solves.
  Eigen::MatrixXd T = L.triangularView<Eigen::Lower>().solve(p.A1);
  Eigen::MatrixXd A1w = L.triangularView<Eigen::Lower>().solve(T.transpose()).transpose();
  EigenSystem es = jacobi_eigen(0.5 * (A1w + A1w.transpose()));

  WhitenedProblem w;
  w.Lt = L.transpose();
  w.V = es.vectors;
  w.lam = es.values;
  w.p = es.vectors.transpose() * L.triangularView<Eigen::Lower>().solve(p.b0);
  w.r = es.vectors.transpose() * L.triangularView<Eigen::Lower>().solve(p.b1);
  w.c0 = p.c0;
  w.c1 = p.c1;
  const double lam_min = w.lam[0];
  w.v_max = lam_min < -1e-14 * std::max(1.0, w.lam.cwiseAbs().maxCoeff()) ? -1.0 / lam_min : kInf;
  return w;
}

// Indices of the lam_min eigenvalue group (a prefix, since lam is sorted).
int min_group_size(const WhitenedProblem& w) {
  const double tol = 1e-9 * std::max(1.0, std::abs(w.lam[0]));
  int k = 1;
  while (k < w.dim() && std::abs(w.lam[k] - w.lam[0]) <= tol) ++k;
  return k;
}

// q'(v_max) with the singular coordinates replaced by their limit value
// -r_i^2 / (2 lam_min), valid when p + v_max r vanishes on the group.
double qprime_at_vmax(const WhitenedProblem& w, int group) {
  double s = w.c1;
  for (int i = group; i < w.dim(); ++i) {
    const double den = 1 + w.v_max * w.lam[i];
    const double num = w.p[i] + w.v_max * w.r[i];
    s += 0.5 * w.lam[i] * num * num / (den * den) - w.r[i] * num / den;
  }
  for (int i = 0; i < group; ++i) s -= 0.5 * w.r[i] * w.r[i] / w.lam[0];
  return s;
}

double q_at_vmax(const WhitenedProblem& w, int group) {
  double s = 0;
  for (int i = group; i < w.dim(); ++i) {
    const double num = w.p[i] + w.v_max * w.r[i];
    s += num * num / (1 + w.v_max * w.lam[i]);
  }
  return -0.5 * s + w.c0 + w.v_max * w.c1;
}

}  // namespace

Qcqp1Problem build_pipe_subproblem(const Agent& agent, const Eigen::VectorXd& targets,
                                   const Eigen::VectorXd& multipliers, double d) {
  if (!(d > 0)) throw std::invalid_argument("build_pipe_subproblem: d must be positive");
  if (agent.quad_rows.size() != 1)
    throw std::invalid_argument("build_pipe_subproblem: agent must carry exactly one quadratic row");
  const int n = agent.y_dim;
  if (targets.size() != n || multipliers.size() != n)
    throw std::invalid_argument("build_pipe_subproblem: dimension mismatch");

  Qcqp1Problem p;
  p.A0 = d * Eigen::MatrixXd::Identity(n, n);
  p.b0 = -(d * targets + multipliers);
  p.c0 = 0.5 * d * targets.squaredNorm() + multipliers.dot(targets);
  agent.quad_rows[0].densify(n, p.A1, p.b1, p.c1);
  return p;
}

double primal_value(const Qcqp1Problem& p, const Eigen::VectorXd& y) {
  return 0.5 * y.dot(p.A0 * y) + p.b0.dot(y) + p.c0;
}

double constraint_value(const Qcqp1Problem& p, const Eigen::VectorXd& y) {
  return 0.5 * y.dot(p.A1 * y) + p.b1.dot(y) + p.c1;
}

DualSolution solve_dual(const Qcqp1Problem& prob) {
  const WhitenedProblem w = whiten(prob);
  DualSolution sol;

  // Inactive constraint: the unconstrained minimizer is feasible.
  if (w.qprime(0) <= 0) {
    sol.v = 0;
    sol.gamma = w.q(0);
    sol.min_eig = min_eigenvalue(prob.A0);
    return sol;
  }

  const int group = min_group_size(w);
  double hi = w.v_max;

  if (std::isfinite(w.v_max)) {
    // Size of b0 + v_max b1 along the null space of A0 + v_max A1 decides
    // between an interior root (q' -> -inf) and the hard case.
    double null_part = 0, total = 0;
    for (int i = 0; i < w.dim(); ++i) {
      const double num = w.p[i] + w.v_max * w.r[i];
      total += num * num;
      if (i < group) null_part += num * num;
    }
    if (std::sqrt(null_part) <= 1e-8 * (1 + std::sqrt(total)) &&
        qprime_at_vmax(w, group) > 0) {
      sol.v = w.v_max;
      sol.gamma = q_at_vmax(w, group);
      sol.hard_case = true;
      sol.min_eig = min_eigenvalue(prob.A0 + sol.v * prob.A1);
      return sol;
    }
    // Bracket the root by stepping toward v_max until q' flips sign.
    bool flipped = false;
    for (int k = 1; k <= 60; ++k) {
      const double cand = w.v_max * (1 - std::pow(0.5, k));
      if (cand <= 0) continue;
      if (w.qprime(cand) < 0) {
        hi = cand;
        flipped = true;
        break;
      }
    }
    if (!flipped) {
      // The root is within roundoff of v_max; treat as (numerically) hard.
      sol.v = w.v_max;
      sol.gamma = q_at_vmax(w, group);
      sol.hard_case = true;
      sol.min_eig = min_eigenvalue(prob.A0 + sol.v * prob.A1);
      return sol;
    }
  } else {
    hi = 1;
    while (w.qprime(hi) > 0) {
      hi *= 2;
      if (hi > 1e16) throw std::runtime_error("qcqp1: dual root not bracketable");
    }
  }

  // Safeguarded Newton on q' over the bracket [lo, hi] with q'(lo) > 0 >
  // q'(hi). The residual target matters more than the step size: the duality
  // gap of the recovered primal is |v q'(v)|, and q'(v) is also exactly the
  // constraint violation at that primal.
  const double cscale = 1 + std::abs(w.c1) + w.p.norm() + w.r.norm();
  double lo = 0;
  double v = 0.5 * (lo + hi);
  double dq = w.qprime(v);
  for (int it = 0; it < 300 && std::abs(dq) > 1e-10 * cscale; ++it) {
    if (dq > 0) {
      lo = v;
    } else {
      hi = v;
    }
    if (hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, hi)) break;
    const double d2q = w.qsecond(v);
    double next = (d2q < -1e-300) ? v - dq / d2q : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    v = next;
    dq = w.qprime(v);
  }

  if (std::isfinite(w.v_max) && std::abs(dq) > 1e-8 * cscale) {
    // The bracket collapsed with q' still jumping across zero: the root is
    // indistinguishable from v_max and the null-space completion is the
    // accurate way out.
    sol.v = w.v_max;
    sol.gamma = q_at_vmax(w, group);
    sol.hard_case = true;
    sol.min_eig = min_eigenvalue(prob.A0 + sol.v * prob.A1);
    return sol;
  }

  sol.v = v;
  sol.gamma = w.q(v);
  sol.min_eig = min_eigenvalue(prob.A0 + v * prob.A1);
  return sol;
}

Eigen::VectorXd recover_primal(const Qcqp1Problem& prob, const DualSolution& sol) {
  const WhitenedProblem w = whiten(prob);
  if (!sol.hard_case) return w.primal_at(sol.v);

  // Particular solution: the limit of the regular recovery as v approaches
  // v_max — v_max * r_i on the singular group, the plain solve elsewhere.
  // Then march along the null direction until the constraint is tight. The
  // quadratic in tau has two real roots whenever the particular point still
  // violates the constraint, because the leading coefficient lam_min/2 is
  // negative.
  const int group = min_group_size(w);
  Eigen::VectorXd u(w.dim());
  for (int i = 0; i < w.dim(); ++i)
    u[i] = (i < group) ? w.v_max * w.r[i]
                       : -(w.p[i] + w.v_max * w.r[i]) / (1 + w.v_max * w.lam[i]);

  double cval = w.c1;
  for (int i = 0; i < w.dim(); ++i) cval += 0.5 * w.lam[i] * u[i] * u[i] + w.r[i] * u[i];
  if (cval <= 0) return w.to_y(u);  // already feasible; no completion needed

  const double a = 0.5 * w.lam[0];
  const double b = w.lam[0] * u[0] + w.r[0];
  const double disc = b * b - 4 * a * cval;
  if (disc < 0 || !(a < 0))
    throw std::runtime_error("qcqp1: hard-case completion has no real step");
  double tau1, tau2;
  if (std::abs(b) < 1e-300) {
    tau1 = std::sqrt(-cval / a);
    tau2 = -tau1;
  } else {
    const double qq = -0.5 * (b + (b > 0 ? 1 : -1) * std::sqrt(disc));
    tau1 = qq / a;
    tau2 = cval / qq;
  }

  Eigen::VectorXd cand1 = u, cand2 = u;
  cand1[0] += tau1;
  cand2[0] += tau2;
  const Eigen::VectorXd y1 = w.to_y(cand1), y2 = w.to_y(cand2);
  // Deterministic tie-break between the two completions: lexicographic max.
  for (int i = 0; i < y1.size(); ++i) {
    if (y1[i] > y2[i] + 1e-12) return y1;
    if (y2[i] > y1[i] + 1e-12) return y2;
  }
  return y1;
}

double duality_gap(const Qcqp1Problem& p, const Eigen::VectorXd& y, const DualSolution& sol) {
  const double scale =
      1 + std::abs(p.c1) + p.b1.cwiseAbs().sum() + p.A1.cwiseAbs().sum();
  if (constraint_value(p, y) > 1e-6 * scale)
    throw std::invalid_argument("duality_gap: y is infeasible");
  return primal_value(p, y) - sol.gamma;
}

double certificate_min_eigenvalue(const Qcqp1Problem& p, double v, double gamma) {
  const int n = static_cast<int>(p.b0.size());
  Eigen::MatrixXd block(n + 1, n + 1);
  block.topLeftCorner(n, n) = p.A0 + v * p.A1;
  block.topRightCorner(n, 1) = p.b0 + v * p.b1;
  block.bottomLeftCorner(1, n) = (p.b0 + v * p.b1).transpose();
  block(n, n) = 2 * (p.c0 + v * p.c1 - gamma);
  return min_eigenvalue(block);
}

}  // namespace oef
