#include "oef/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace oef {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-6;

Eigen::VectorXd clamp_box(const CentralizedProblem& c, Eigen::VectorXd z) {
  for (int j = 0; j < c.dim; ++j) z[j] = std::min(std::max(z[j], c.lo[j]), c.hi[j]);
  return z;
}

// Penalized objective f'z + w (sum eq^2 + sum quad^2 + sum max(0, ineq)^2);
// boxes are handled by projection in the descent, not penalized.
double penalty_value(const CentralizedProblem& c, double w, const Eigen::VectorXd& z,
                     Eigen::VectorXd* grad) {
  double val = c.f.dot(z) + c.objective_const;
  if (grad) *grad = c.f;
  for (const LinRow& row : c.eq_rows) {
    const double v = row.value(z);
    val += w * v * v;
    if (grad)
      for (const auto& [idx, coef] : row.terms) (*grad)[idx] += 2 * w * v * coef;
  }
  for (const LinRow& row : c.ineq_rows) {
    const double v = row.value(z);
    if (v > 0) {
      val += w * v * v;
      if (grad)
        for (const auto& [idx, coef] : row.terms) (*grad)[idx] += 2 * w * v * coef;
    }
  }
  for (const QuadRow& row : c.quad_rows) {
    const double v = row.value(z);
    val += w * v * v;
    if (grad) row.add_gradient(z, 2 * w * v, *grad);
  }
  return val;
}

// One penalty stage: damped Newton with box handling by pinning. The exact
// penalized Hessian lets the iterates ride the narrow valleys that first
// -order steps cannot traverse once the weight is large.
Eigen::VectorXd descend(const CentralizedProblem& c, Eigen::VectorXd z, double w, double tol) {
  constexpr int kMaxIter = 120;
  const int n = c.dim;

  std::vector<Eigen::MatrixXd> Qs(c.quad_rows.size());
  std::vector<Eigen::VectorXd> qs(c.quad_rows.size());
  std::vector<double> cs(c.quad_rows.size());
  for (size_t r = 0; r < c.quad_rows.size(); ++r) c.quad_rows[r].densify(n, Qs[r], qs[r], cs[r]);

  // Constant curvature of the linear equality penalties.
  Eigen::MatrixXd Heq = Eigen::MatrixXd::Zero(n, n);
  for (const LinRow& row : c.eq_rows)
    for (const auto& [i, ci] : row.terms)
      for (const auto& [j, cj] : row.terms) Heq(i, j) += 2 * w * ci * cj;

  double lm = 1e-8;
  for (int it = 0; it < kMaxIter; ++it) {
    Eigen::VectorXd g(n);
    double val = penalty_value(c, w, z, &g);
    Eigen::MatrixXd H = Heq;
    for (const LinRow& row : c.ineq_rows) {
      if (row.value(z) <= 0) continue;
      for (const auto& [i, ci] : row.terms)
        for (const auto& [j, cj] : row.terms) H(i, j) += 2 * w * ci * cj;
    }
    for (size_t r = 0; r < c.quad_rows.size(); ++r) {
      const double v = 0.5 * z.dot(Qs[r] * z) + qs[r].dot(z) + cs[r];
      const Eigen::VectorXd gr = Qs[r] * z + qs[r];
      H += 2 * w * (gr * gr.transpose() + v * Qs[r]);
    }

    std::vector<int> freev;
    for (int j = 0; j < n; ++j) {
      const bool at_lo = std::isfinite(c.lo[j]) && z[j] - c.lo[j] <= 0;
      const bool at_hi = std::isfinite(c.hi[j]) && c.hi[j] - z[j] <= 0;
      if (!((at_lo && g[j] > 0) || (at_hi && g[j] < 0) || c.hi[j] - c.lo[j] <= 0))
        freev.push_back(j);
    }
    const int nf = static_cast<int>(freev.size());
    if (nf == 0) break;
    Eigen::MatrixXd Hf(nf, nf);
    Eigen::VectorXd gf(nf);
    for (int a = 0; a < nf; ++a) {
      gf[a] = g[freev[a]];
      for (int b = 0; b < nf; ++b) Hf(a, b) = H(freev[a], freev[b]);
    }
    const double hscale = 1 + Hf.cwiseAbs().maxCoeff();

    bool accepted = false;
    for (; lm <= 1e14; lm *= 10) {
      Eigen::MatrixXd Hd = Hf + lm * hscale * Eigen::MatrixXd::Identity(nf, nf);
      Eigen::LLT<Eigen::MatrixXd> llt(Hd);
      if (llt.info() != Eigen::Success) continue;
      const Eigen::VectorXd d = llt.solve(-gf);
      Eigen::VectorXd trial = z;
      for (int a = 0; a < nf; ++a) trial[freev[a]] += d[a];
      trial = clamp_box(c, trial);
      const double pred = -g.dot(trial - z);  // positive along a descent step
      if (pred <= 0) continue;
      const double tval = penalty_value(c, w, trial, nullptr);
      if (tval <= val - 1e-4 * pred) {
        const double move = (trial - z).norm();
        z = trial;
        lm = std::max(lm * 0.2, 1e-12);
        accepted = true;
        if (move <= tol * (1 + z.norm())) it = kMaxIter;  // converged
        break;
      }
    }
    if (!accepted) break;  // stationary to line-search resolution
  }
  return z;
}

// Minimal-norm Gauss-Newton restoration: zero the equality, quadratic, and
// violated inequality residuals while holding box-active coordinates. Run
// from a near-feasible point it converges to roundoff in a few steps and
// moves the objective only O(residual).
Eigen::VectorXd restore(const CentralizedProblem& c, Eigen::VectorXd z) {
  const int n = c.dim;
  std::vector<Eigen::MatrixXd> Qs(c.quad_rows.size());
  std::vector<Eigen::VectorXd> qs(c.quad_rows.size());
  std::vector<double> cs(c.quad_rows.size());
  for (size_t r = 0; r < c.quad_rows.size(); ++r) c.quad_rows[r].densify(n, Qs[r], qs[r], cs[r]);

  Eigen::VectorXd best = clamp_box(c, z);
  double best_viol = c.max_violation(best);
  z = best;
  for (int it = 0; it < 40; ++it) {
    std::vector<int> freev;
    for (int j = 0; j < n; ++j)
      if (c.hi[j] - c.lo[j] > 0 && (!std::isfinite(c.lo[j]) || z[j] - c.lo[j] > 1e-12 * (1 + std::abs(c.lo[j]))) &&
          (!std::isfinite(c.hi[j]) || c.hi[j] - z[j] > 1e-12 * (1 + std::abs(c.hi[j]))))
        freev.push_back(j);
    const int nf = static_cast<int>(freev.size());
    if (nf == 0) break;

    std::vector<Eigen::VectorXd> rows;
    std::vector<double> res;
    auto push_lin = [&](const LinRow& row, double v) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(nf);
      for (const auto& [idx, coef] : row.terms)
        for (int k = 0; k < nf; ++k)
          if (freev[k] == idx) a[k] += coef;
      rows.push_back(std::move(a));
      res.push_back(v);
    };
    for (const LinRow& row : c.eq_rows) push_lin(row, row.value(z));
    for (const LinRow& row : c.ineq_rows) {
      const double v = row.value(z);
      if (v > 0) push_lin(row, v);
    }
    for (size_t r = 0; r < c.quad_rows.size(); ++r) {
      const double v = 0.5 * z.dot(Qs[r] * z) + qs[r].dot(z) + cs[r];
      const Eigen::VectorXd gr = Qs[r] * z + qs[r];
      Eigen::VectorXd a(nf);
      for (int k = 0; k < nf; ++k) a[k] = gr[freev[k]];
      rows.push_back(std::move(a));
      res.push_back(v);
    }
    const int m = static_cast<int>(rows.size());
    double worst = 0;
    for (double v : res) worst = std::max(worst, std::abs(v));
    if (worst <= 1e-13) break;
    Eigen::MatrixXd J(m, nf);
    Eigen::VectorXd r(m);
    for (int i = 0; i < m; ++i) {
      J.row(i) = rows[i];
      r[i] = res[i];
    }
    const Eigen::VectorXd d = J.completeOrthogonalDecomposition().solve(-r);
    for (int k = 0; k < nf; ++k) z[freev[k]] += d[k];
    z = clamp_box(c, z);
    const double viol = c.max_violation(z);
    if (viol < best_viol) {
      best = z;
      best_viol = viol;
    }
  }
  return best;
}

// Active-set Newton on the KKT system of the equality rows, the quadratic
// rows, the near-active inequalities, and the pinned box coordinates.
// Returns the best-feasibility iterate seen; multiplier or bound signs that
// come out wrong trigger an active-set change and another Newton pass.
Eigen::VectorXd polish(const CentralizedProblem& c, Eigen::VectorXd z) {
  const int n = c.dim;
  const int me = static_cast<int>(c.eq_rows.size());
  const int mq = static_cast<int>(c.quad_rows.size());
  const int mi = static_cast<int>(c.ineq_rows.size());

  std::vector<Eigen::MatrixXd> Qs(mq);
  std::vector<Eigen::VectorXd> qs(mq);
  std::vector<double> cs(mq);
  for (int r = 0; r < mq; ++r) c.quad_rows[r].densify(n, Qs[r], qs[r], cs[r]);
  Eigen::MatrixXd Aeq = Eigen::MatrixXd::Zero(me, n);
  Eigen::VectorXd beq = Eigen::VectorXd::Zero(me);
  for (int r = 0; r < me; ++r) {
    for (const auto& [idx, coef] : c.eq_rows[r].terms) Aeq(r, idx) += coef;
    beq[r] = c.eq_rows[r].rhs;
  }
  Eigen::MatrixXd Ain = Eigen::MatrixXd::Zero(mi, n);
  Eigen::VectorXd bin = Eigen::VectorXd::Zero(mi);
  for (int r = 0; r < mi; ++r) {
    for (const auto& [idx, coef] : c.ineq_rows[r].terms) Ain(r, idx) += coef;
    bin[r] = c.ineq_rows[r].rhs;
  }
  const double fscale = 1 + c.f.cwiseAbs().maxCoeff();

  Eigen::VectorXd best = z;
  double best_viol = c.max_violation(z);
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(mq);
  std::vector<char> banned(mi, 0);  // rows dropped for a negative multiplier
  std::vector<char> released(n, 0); // bounds released for a wrong-sign multiplier

  for (int round = 0; round < 12; ++round) {
    std::vector<int> pin, act, freev;
    for (int j = 0; j < n; ++j) {
      const bool degenerate = c.hi[j] - c.lo[j] <= 0;
      const bool at_lo =
          std::isfinite(c.lo[j]) && z[j] - c.lo[j] <= 1e-7 * (1 + std::abs(c.lo[j]));
      const bool at_hi =
          std::isfinite(c.hi[j]) && c.hi[j] - z[j] <= 1e-7 * (1 + std::abs(c.hi[j]));
      if (degenerate || ((at_lo || at_hi) && !released[j]))
        pin.push_back(j);
      else
        freev.push_back(j);
    }
    for (int r = 0; r < mi; ++r)
      if (!banned[r] && Ain.row(r).dot(z) - bin[r] >= -1e-7 * (1 + std::abs(bin[r])))
        act.push_back(r);
    const int nf = static_cast<int>(freev.size());
    const int na = static_cast<int>(act.size());
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(na);

    // Full stationarity vector at the current multipliers.
    auto stationarity = [&](const Eigen::VectorXd& zz, const Eigen::VectorXd& nn,
                            const Eigen::VectorXd& ee, const Eigen::VectorXd& mm) {
      Eigen::VectorXd r = c.f;
      r += Aeq.transpose() * nn;
      for (int q = 0; q < mq; ++q) r += ee[q] * (Qs[q] * zz + qs[q]);
      for (int a = 0; a < na; ++a) r += mm[a] * Ain.row(act[a]).transpose();
      return r;
    };
    auto residual_norm = [&](const Eigen::VectorXd& zz, const Eigen::VectorXd& nn,
                             const Eigen::VectorXd& ee, const Eigen::VectorXd& mm) {
      const Eigen::VectorXd rs = stationarity(zz, nn, ee, mm);
      double worst = 0;
      for (int j : freev) worst = std::max(worst, std::abs(rs[j]));
      for (int r = 0; r < me; ++r) worst = std::max(worst, std::abs(Aeq.row(r).dot(zz) - beq[r]));
      for (int q = 0; q < mq; ++q)
        worst = std::max(worst, std::abs(0.5 * zz.dot(Qs[q] * zz) + qs[q].dot(zz) + cs[q]));
      for (int a = 0; a < na; ++a)
        worst = std::max(worst, std::abs(Ain.row(act[a]).dot(zz) - bin[act[a]]));
      return worst;
    };

    for (int step = 0; step < 40; ++step) {
      const double worst = residual_norm(z, nu, eta, mu);
      if (worst <= 1e-13 * fscale) break;
      const int m = me + mq + na;
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nf + m, nf + m);
      Eigen::VectorXd rhs(nf + m);
      double eta_scale = 1;
      for (int q = 0; q < mq; ++q) eta_scale = std::max(eta_scale, std::abs(eta[q]));
      for (int a = 0; a < nf; ++a)
        for (int b = 0; b < nf; ++b) {
          double h = a == b ? 1e-12 * eta_scale : 0;
          for (int q = 0; q < mq; ++q) h += eta[q] * Qs[q](freev[a], freev[b]);
          K(a, b) = h;
        }
      Eigen::MatrixXd M(m, nf);
      Eigen::VectorXd feas(m);
      for (int r = 0; r < me; ++r) {
        for (int a = 0; a < nf; ++a) M(r, a) = Aeq(r, freev[a]);
        feas[r] = Aeq.row(r).dot(z) - beq[r];
      }
      for (int q = 0; q < mq; ++q) {
        const Eigen::VectorXd gq = Qs[q] * z + qs[q];
        for (int a = 0; a < nf; ++a) M(me + q, a) = gq[freev[a]];
        feas[me + q] = 0.5 * z.dot(Qs[q] * z) + qs[q].dot(z) + cs[q];
      }
      for (int a2 = 0; a2 < na; ++a2) {
        for (int a = 0; a < nf; ++a) M(me + mq + a2, a) = Ain(act[a2], freev[a]);
        feas[me + mq + a2] = Ain.row(act[a2]).dot(z) - bin[act[a2]];
      }
      K.block(0, nf, nf, m) = M.transpose();
      K.block(nf, 0, m, nf) = M;
      const Eigen::VectorXd rs = stationarity(z, nu, eta, mu);
      for (int a = 0; a < nf; ++a) rhs[a] = -rs[freev[a]];
      rhs.segment(nf, m) = -feas;
      const Eigen::VectorXd delta =
          Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(K).solve(rhs);

      double astep = 1;
      for (int bt = 0; bt < 25; ++bt) {
        Eigen::VectorXd zt = z;
        for (int a = 0; a < nf; ++a) zt[freev[a]] += astep * delta[a];
        const Eigen::VectorXd nt = nu + astep * delta.segment(nf, me);
        const Eigen::VectorXd et = eta + astep * delta.segment(nf + me, mq);
        const Eigen::VectorXd mt = mu + astep * delta.segment(nf + me + mq, na);
        if (residual_norm(zt, nt, et, mt) <= (1 - 1e-4 * astep) * worst || bt == 24) {
          z = zt;
          nu = nt;
          eta = et;
          mu = mt;
          break;
        }
        astep *= 0.5;
      }
    }

    z = clamp_box(c, z);
    const double viol = c.max_violation(z);
    if (viol < best_viol) {
      best = z;
      best_viol = viol;
    }

    // Multiplier sign corrections: drop the worst negative inequality row,
    // else release the worst wrong-sign pinned bound, else done.
    int worst_row = -1;
    double worst_mu = -1e-8;
    for (int a = 0; a < na; ++a)
      if (mu[a] < worst_mu) {
        worst_mu = mu[a];
        worst_row = act[a];
      }
    if (worst_row >= 0) {
      banned[worst_row] = 1;
      continue;
    }
    const Eigen::VectorXd rs = stationarity(z, nu, eta, mu);
    int worst_pin = -1;
    double worst_sigma = 1e-8 * fscale;
    for (int j : pin) {
      if (c.hi[j] - c.lo[j] <= 0) continue;  // genuinely fixed coordinate
      const bool at_lo = z[j] - c.lo[j] <= 1e-7 * (1 + std::abs(c.lo[j]));
      const double bad = at_lo ? -rs[j] : rs[j];
      if (bad > worst_sigma) {
        worst_sigma = bad;
        worst_pin = j;
      }
    }
    if (worst_pin >= 0) {
      released[worst_pin] = 1;
      continue;
    }
    break;
  }
  return best;
}

void set_lift_values(const CentralizedProblem& c, Eigen::VectorXd& z) {
  for (size_t u = 0; u < c.lift_of_unit.size(); ++u) {
    const int si = c.lift_of_unit[u];
    if (si < 0) continue;
    const double p = z[c.layout.unit_x[u]];
    z[si] = p * p;
  }
}

double halton(int index, int base) {
  double f = 1, r = 0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

std::vector<Eigen::VectorXd> make_starts(const CentralizedProblem& c, int count) {
  static constexpr int kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                    31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
  std::vector<Eigen::VectorXd> starts;
  Eigen::VectorXd mid(c.dim);
  for (int j = 0; j < c.dim; ++j) {
    if (std::isfinite(c.lo[j]) && std::isfinite(c.hi[j]))
      mid[j] = 0.5 * (c.lo[j] + c.hi[j]);
    else
      mid[j] = std::min(std::max(0.0, c.lo[j]), c.hi[j]);
  }
  set_lift_values(c, mid);
  starts.push_back(mid);
  for (int s = 1; s < count; ++s) {
    Eigen::VectorXd z(c.dim);
    for (int j = 0; j < c.dim; ++j) {
      const double u = halton(s + j / 20, kPrimes[j % 20]);
      if (std::isfinite(c.lo[j]) && std::isfinite(c.hi[j]))
        z[j] = c.lo[j] + u * (c.hi[j] - c.lo[j]);
      else
        z[j] = std::min(std::max(2 * u - 1, c.lo[j]), c.hi[j]);
    }
    set_lift_values(c, z);
    starts.push_back(z);
  }
  return starts;
}

// Prefer feasible over infeasible; among feasible, lower objective; among
// infeasible, lower violation. Strict comparisons keep the first find on
// ties, so the multistart order decides deterministically.
bool better_than(const ReferenceSolution& cand, const ReferenceSolution& best, bool have) {
  if (!have) return true;
  if (cand.feasible != best.feasible) return cand.feasible;
  return cand.feasible ? cand.objective < best.objective - 1e-12
                       : cand.max_violation < best.max_violation;
}

// Multistart homotopy on a fixed problem (direction indicators, if any,
// already pinned through their boxes).
ReferenceSolution solve_pinned(const CentralizedProblem& c, const OracleConfig& cfg) {
  ReferenceSolution best;
  bool have = false;
  for (const Eigen::VectorXd& z0 : make_starts(c, cfg.multistart)) {
    Eigen::VectorXd z = clamp_box(c, z0);
    for (double w : cfg.penalty_weights) z = descend(c, z, w, cfg.tol);
    for (const Eigen::VectorXd& zc : {restore(c, z), restore(c, polish(c, z))}) {
      ReferenceSolution cand;
      cand.z = zc;
      cand.objective = c.objective(zc);
      cand.max_violation = c.max_violation(zc);
      cand.feasible = cand.max_violation <= kFeasTol;
      if (better_than(cand, best, have)) {
        best = cand;
        have = true;
      }
    }
  }
  return best;
}

}  // namespace

ReferenceSolution solve_reference(const CentralizedProblem& central, const OracleConfig& cfg) {
  if (cfg.multistart <= 0 || cfg.penalty_weights.empty() || !(cfg.tol > 0) ||
      cfg.direction_cap <= 0)
    throw std::invalid_argument("oracle: config fields must be positive");
  for (double w : cfg.penalty_weights)
    if (!(w > 0)) throw std::invalid_argument("oracle: penalty weights must be positive");

  const std::vector<int>& ux = central.layout.u_x;
  if (ux.empty()) return solve_pinned(central, cfg);

  const int npipes = static_cast<int>(ux.size());
  if (npipes > 30 || (1L << npipes) > cfg.direction_cap)
    throw std::invalid_argument("oracle: flow-sign patterns exceed the enumeration cap");

  ReferenceSolution best;
  bool have = false;
  for (long mask = 0; mask < (1L << npipes); ++mask) {
    CentralizedProblem pinned = central;
    std::vector<int> dirs(npipes);
    for (int p = 0; p < npipes; ++p) {
      dirs[p] = (mask >> p) & 1 ? -1 : 1;
      pinned.lo[ux[p]] = pinned.hi[ux[p]] = dirs[p];
    }
    ReferenceSolution cand = solve_pinned(pinned, cfg);
    cand.max_violation = central.max_violation(cand.z);  // original boxes
    cand.feasible = cand.max_violation <= kFeasTol;
    cand.directions = dirs;
    if (better_than(cand, best, have)) {
      best = cand;
      have = true;
    }
  }
  return best;
}

std::pair<Eigen::VectorXd, double> brute_force_qcqp1(const Qcqp1Problem& p,
                                                     const Eigen::VectorXd& lo,
                                                     const Eigen::VectorXd& hi,
                                                     double coarse_step) {
  const int n = static_cast<int>(lo.size());
  if (n < 1 || n > 4) throw std::invalid_argument("brute_force_qcqp1: dimension must be 1..4");
  if (hi.size() != n || p.A0.rows() != n || p.A1.rows() != n || p.b0.size() != n ||
      p.b1.size() != n)
    throw std::invalid_argument("brute_force_qcqp1: dimension mismatch");
  if (!(coarse_step > 0)) throw std::invalid_argument("brute_force_qcqp1: step must be positive");
  for (int j = 0; j < n; ++j)
    if (!(lo[j] <= hi[j])) throw std::invalid_argument("brute_force_qcqp1: empty box");

  const double ctol =
      1e-9 * (1 + p.A1.cwiseAbs().maxCoeff() + p.b1.cwiseAbs().maxCoeff() + std::abs(p.c1));
  bool found = false;
  Eigen::VectorXd besty = lo;
  double bestval = kInf;

  // Lexicographic sweep; the last axis runs innermost with the two
  // quadratics reduced to polynomials in that coordinate alone.
  auto scan = [&](const Eigen::VectorXd& slo, const Eigen::VectorXd& shi, double step) {
    const int z = n - 1;
    std::vector<int> counts(n);
    for (int k = 0; k < n; ++k)
      counts[k] = static_cast<int>(std::floor((shi[k] - slo[k]) / step + 1e-9)) + 1;
    std::vector<int> idx(n, 0);
    Eigen::VectorXd y = slo;
    while (true) {
      for (int k = 0; k < z; ++k) y[k] = slo[k] + idx[k] * step;
      double base0 = p.c0, lin0 = p.b0[z], base1 = p.c1, lin1 = p.b1[z];
      for (int a = 0; a < z; ++a) {
        base0 += p.b0[a] * y[a];
        base1 += p.b1[a] * y[a];
        lin0 += p.A0(z, a) * y[a];
        lin1 += p.A1(z, a) * y[a];
        for (int b = 0; b < z; ++b) {
          base0 += 0.5 * p.A0(a, b) * y[a] * y[b];
          base1 += 0.5 * p.A1(a, b) * y[a] * y[b];
        }
      }
      const double q0 = 0.5 * p.A0(z, z), q1 = 0.5 * p.A1(z, z);
      for (int i = 0; i < counts[z]; ++i) {
        const double t = slo[z] + i * step;
        const double v1 = (q1 * t + lin1) * t + base1;
        if (v1 <= ctol) {
          const double v0 = (q0 * t + lin0) * t + base0;
          if (v0 < bestval) {
            bestval = v0;
            besty = y;
            besty[z] = t;
            found = true;
          }
        }
      }
      int k = z - 1;
      while (k >= 0 && ++idx[k] >= counts[k]) {
        idx[k] = 0;
        --k;
      }
      if (k < 0) break;
    }
  };

  scan(lo, hi, coarse_step);
  if (!found) throw std::runtime_error("brute_force_qcqp1: no feasible grid point in the box");
  for (double step : {coarse_step / 10, coarse_step / 100}) {
    const Eigen::VectorXd rlo = (besty.array() - 20 * step).cwiseMax(lo.array()).matrix();
    const Eigen::VectorXd rhi = (besty.array() + 20 * step).cwiseMin(hi.array()).matrix();
    scan(rlo, rhi, step);
  }
  return {besty, bestval};
}

}  // namespace oef
