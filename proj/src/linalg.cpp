#include "levsim/linalg.hpp"

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

namespace levsim {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;

double spectral_radius(const MatrixXd& m) {
  return m.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_hurwitz(const MatrixXd& m, double margin) {
  return m.eigenvalues().real().maxCoeff() < -margin;
}

MatrixXd solve_lyapunov_continuous(const MatrixXd& a, const MatrixXd& q) {
  const auto n = a.rows();
  const MatrixXd eye = MatrixXd::Identity(n, n);
  // vec(A'X + XA) = (I (x) A' + A' (x) I) vec(X)
  const MatrixXd lhs = Eigen::kroneckerProduct(eye, a.transpose()).eval() +
                       Eigen::kroneckerProduct(a.transpose(), eye).eval();
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(q.data(), n * n);
  Eigen::VectorXd x = lhs.colPivHouseholderQr().solve(-rhs);
  MatrixXd result = Eigen::Map<MatrixXd>(x.data(), n, n);
  return 0.5 * (result + result.transpose());
}

MatrixXd solve_lyapunov_discrete(const MatrixXd& a, const MatrixXd& q) {
  if (spectral_radius(a) >= 1.0) {
    throw SynthesisError("discrete Lyapunov: matrix is not Schur stable");
  }
  // Doubling: X_{k+1} = X_k + A_k X_k A_k', A_{k+1} = A_k^2.
  MatrixXd x = 0.5 * (q + q.transpose());
  MatrixXd ak = a;
  for (int it = 0; it < 128; ++it) {
    const MatrixXd incr = ak * x * ak.transpose();
    x += incr;
    ak = (ak * ak).eval();
    if (incr.norm() <= 1e-16 * std::max(1.0, x.norm()) && it > 2) break;
  }
  return 0.5 * (x + x.transpose());
}

double care_residual(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q,
                     const MatrixXd& r, const MatrixXd& p) {
  const MatrixXd s = b * r.llt().solve(b.transpose());
  const MatrixXd t1 = a.transpose() * p;
  const MatrixXd t2 = p * s * p;
  const MatrixXd res = t1 + t1.transpose() - t2 + q;
  // Normalize by the magnitude of the equation's terms so the residual is
  // meaningful even when they cancel at many times ||P||.
  const double scale =
      std::max(2.0 * t1.norm() + t2.norm() + q.norm(), 1e-300);
  return res.norm() / scale;
}

namespace {

// Diagonal similarity balancing (Parlett-Reinsch, powers of two), applied
// in place: on return m holds D^-1 M D and the result holds diag(D).  An
// eigenvector v' of the balanced matrix maps back as v = D v'.
Eigen::VectorXd balance_in_place(MatrixXd& m) {
  const auto n = m.rows();
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  bool converged = false;
  while (!converged) {
    converged = true;
    for (Eigen::Index i = 0; i < n; ++i) {
      double c = 0.0, r = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        c += std::abs(m(j, i));
        r += std::abs(m(i, j));
      }
      if (c == 0.0 || r == 0.0 || !std::isfinite(c) || !std::isfinite(r)) {
        continue;
      }
      double f = 1.0;
      const double s = c + r;
      while (c < r / 2.0) {
        c *= 2.0;
        r /= 2.0;
        f *= 2.0;
      }
      while (c >= r * 2.0) {
        c /= 2.0;
        r *= 2.0;
        f /= 2.0;
      }
      if (c + r < 0.95 * s) {
        converged = false;
        d(i) *= f;
        m.col(i) *= f;
        m.row(i) /= f;
      }
    }
  }
  return d;
}

// One Newton (Kleinman) step: given stabilizing P, solve the closed-loop
// Lyapunov equation for the refined P.
MatrixXd kleinman_step(const MatrixXd& a, const MatrixXd& s, const MatrixXd& q,
                       const MatrixXd& p) {
  const MatrixXd acl = a - s * p;
  return solve_lyapunov_continuous(acl, q + p * s * p);
}

}  // namespace

MatrixXd solve_care(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q,
                    const MatrixXd& r, double residual_tol) {
  const auto n = a.rows();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n ||
      r.rows() != b.cols() || r.cols() != b.cols()) {
    throw std::invalid_argument("care: inconsistent dimensions");
  }
  Eigen::LLT<MatrixXd> rchol(r);
  if (rchol.info() != Eigen::Success) {
    throw SynthesisError("care: R is not positive definite");
  }
  const MatrixXd s = b * rchol.solve(b.transpose());

  MatrixXd ham(2 * n, 2 * n);
  ham << a, -s, -q, -a.transpose();

  // Balancing keeps the eigensolve accurate when the problem mixes widely
  // different physical scales (the Hamiltonian is solved as a general
  // matrix, so a diagonal similarity is admissible).
  const Eigen::VectorXd dscale = balance_in_place(ham);

  Eigen::ComplexEigenSolver<MatrixXd> eig(ham);
  if (eig.info() != Eigen::Success) {
    throw SynthesisError("care: Hamiltonian eigendecomposition failed");
  }

  // The spectrum is symmetric about the imaginary axis; the stabilizing
  // solution spans the eigenvectors of the n eigenvalues with the most
  // negative real parts, which must be separated from the rest by a sign
  // change (axis eigenvalues mean no stabilizing solution exists).
  std::vector<Eigen::Index> order(static_cast<std::size_t>(2 * n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return eig.eigenvalues()(i).real() < eig.eigenvalues()(j).real();
  });
  if (!(eig.eigenvalues()(order[static_cast<std::size_t>(n) - 1]).real() <
            0.0 &&
        eig.eigenvalues()(order[static_cast<std::size_t>(n)]).real() > 0.0)) {
    throw SynthesisError(
        "care: pair is not stabilizable/detectable (stable invariant "
        "subspace has wrong dimension)");
  }
  MatrixXcd basis(2 * n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    basis.col(i) = dscale.asDiagonal() *
                   eig.eigenvectors().col(order[static_cast<std::size_t>(i)]);
    const double nrm = basis.col(i).norm();
    if (nrm > 0.0) basis.col(i) /= nrm;
  }

  const MatrixXcd x1 = basis.topRows(n);
  const MatrixXcd x2 = basis.bottomRows(n);
  // P = x2 x1^-1, computed as the solution of x1' P' = x2'.
  Eigen::FullPivLU<MatrixXcd> lu(x1.transpose().eval());
  if (!lu.isInvertible()) {
    throw SynthesisError("care: singular subspace basis (no solution)");
  }
  MatrixXd p = lu.solve(x2.transpose()).real();
  p = 0.5 * (p + p.transpose()).eval();

  // Newton refinement squeezes the residual toward machine precision and
  // guards against a poorly conditioned eigenbasis.
  double best = care_residual(a, b, q, r, p);
  for (int it = 0; it < 4 && best > 1e-14; ++it) {
    if (!is_hurwitz(a - s * p)) break;
    const MatrixXd refined = kleinman_step(a, s, q, p);
    const double res = care_residual(a, b, q, r, refined);
    if (!std::isfinite(res) || res >= best) break;
    p = refined;
    best = res;
  }

  if (!(best <= residual_tol)) {
    throw SynthesisError("care: residual " + std::to_string(best) +
                         " exceeds tolerance");
  }
  if (!is_hurwitz(a - s * p)) {
    throw SynthesisError("care: computed solution is not stabilizing");
  }
  return p;
}

MatrixXd solve_dare(const MatrixXd& a, const MatrixXd& b, const MatrixXd& q,
                    const MatrixXd& r) {
  const auto n = a.rows();
  Eigen::LLT<MatrixXd> rchol(r);
  if (rchol.info() != Eigen::Success) {
    throw SynthesisError("dare: R is not positive definite");
  }
  // Structure-preserving doubling on (A_k, G_k, H_k); H_k converges to the
  // stabilizing solution quadratically.
  MatrixXd ak = a;
  MatrixXd g = b * rchol.solve(b.transpose());
  MatrixXd h = 0.5 * (q + q.transpose());
  const MatrixXd eye = MatrixXd::Identity(n, n);
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<MatrixXd> w(eye + g * h);
    const MatrixXd winv_a = w.solve(ak);
    const MatrixXd winv_g = w.solve(g);
    const MatrixXd a_next = ak * winv_a;
    const MatrixXd g_next = g + ak * winv_g * ak.transpose();
    const MatrixXd h_incr = ak.transpose() * h * winv_a;
    const MatrixXd h_next = h + 0.5 * (h_incr + h_incr.transpose());
    const double delta = (h_next - h).norm();
    ak = a_next;
    g = g_next;
    h = h_next;
    if (!h.allFinite()) {
      throw SynthesisError("dare: doubling iteration diverged");
    }
    if (delta <= 1e-15 * std::max(1.0, h.norm())) {
      return 0.5 * (h + h.transpose());
    }
  }
  throw SynthesisError("dare: doubling iteration did not converge");
}

Discretized discretize_van_loan(const MatrixXd& a, const MatrixXd& b,
                                const MatrixXd& qc, double dt_s) {
  const auto n = a.rows();
  const auto m = b.cols();
  Discretized d;
  d.dt_s = dt_s;

  // [Ad Bd; 0 I] = exp([A B; 0 0] dt)
  MatrixXd ab = MatrixXd::Zero(n + m, n + m);
  ab.topLeftCorner(n, n) = a * dt_s;
  ab.topRightCorner(n, m) = b * dt_s;
  const MatrixXd eab = ab.exp();
  d.ad = eab.topLeftCorner(n, n);
  d.bd = eab.topRightCorner(n, m);

  // Van Loan: exp([-A Qc; 0 A'] dt) = [* Ad^-1 Qd; 0 Ad'] => Qd = F22' F12.
  MatrixXd aq = MatrixXd::Zero(2 * n, 2 * n);
  aq.topLeftCorner(n, n) = -a * dt_s;
  aq.topRightCorner(n, n) = qc * dt_s;
  aq.bottomRightCorner(n, n) = a.transpose() * dt_s;
  const MatrixXd eaq = aq.exp();
  const MatrixXd qd = eaq.bottomRightCorner(n, n).transpose() *
                      eaq.topRightCorner(n, n);
  d.qd = 0.5 * (qd + qd.transpose());
  return d;
}

}  // namespace levsim
