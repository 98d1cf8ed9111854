#include "oef/smalleig.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oef {

namespace {

double off_diagonal_norm(const Eigen::MatrixXd& a) {
  double s = 0;
  for (int p = 0; p < a.rows(); ++p)
    for (int q = p + 1; q < a.cols(); ++q) s += a(p, q) * a(p, q);
  return std::sqrt(2 * s);
}

}  // namespace

EigenSystem jacobi_eigen(const Eigen::MatrixXd& a_in) {
  const int n = static_cast<int>(a_in.rows());
  if (a_in.cols() != n) throw std::invalid_argument("jacobi_eigen: matrix must be square");
  const double scale = std::max(1.0, a_in.cwiseAbs().maxCoeff());
  if ((a_in - a_in.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("jacobi_eigen: matrix must be symmetric");

  Eigen::MatrixXd a = 0.5 * (a_in + a_in.transpose());  // kill rounding asymmetry
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  const double tol = 1e-15 * scale;
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps && off_diagonal_norm(a) > tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= tol * 1e-2) continue;
        // Rotation angle that zeroes a(p,q); the stable tangent formula.
        const double tau = (a(q, q) - a(p, p)) / (2 * apq);
        const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1 + tau * tau));
        const double c = 1.0 / std::sqrt(1 + t * t);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  EigenSystem sys;
  sys.values.resize(n);
  for (int i = 0; i < n; ++i) sys.values[i] = a(i, i);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return sys.values[i] < sys.values[j]; });

  EigenSystem sorted;
  sorted.values.resize(n);
  sorted.vectors.resize(n, n);
  for (int i = 0; i < n; ++i) {
    sorted.values[i] = sys.values[order[i]];
    sorted.vectors.col(i) = v.col(order[i]);
  }
  return sorted;
}

double min_eigenvalue(const Eigen::MatrixXd& a) { return jacobi_eigen(a).values[0]; }

}  // namespace oef
