// Matrix-equation solvers used by estimator/regulator synthesis:
// continuous- and discrete-time algebraic Riccati equations, Lyapunov
// equations, and exact zero-order-hold discretization of a linear
// stochastic system (Van Loan block-exponential method).
#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace levsim {

/// Thrown when gain synthesis cannot produce a stabilizing solution
/// (non-stabilizable pair, undetectable pair, singular subspace, ...).
struct SynthesisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Largest |eigenvalue| of a (real, square) matrix.
double spectral_radius(const Eigen::MatrixXd& m);

/// True when all eigenvalues have strictly negative real part.
bool is_hurwitz(const Eigen::MatrixXd& m, double margin = 0.0);

/// Solves A'X + XA + Q = 0 for symmetric X (continuous Lyapunov).
/// Requires A Hurwitz for a positive-semidefinite result; the solve itself
/// only requires that A has no eigenvalue pair summing to zero.
Eigen::MatrixXd solve_lyapunov_continuous(const Eigen::MatrixXd& a,
                                          const Eigen::MatrixXd& q);

/// Solves X = A X A' + Q for symmetric X (discrete Lyapunov) by doubling.
/// Requires spectral_radius(A) < 1.
Eigen::MatrixXd solve_lyapunov_discrete(const Eigen::MatrixXd& a,
                                        const Eigen::MatrixXd& q);

/// Solves A'P + PA - P B R^-1 B' P + Q = 0 for the unique stabilizing
/// symmetric P >= 0.
///
/// Method: eigen-decomposition of the 2n x 2n Hamiltonian matrix and
/// extraction of its stable invariant subspace, followed by a few
/// Newton (Kleinman) refinement steps, each of which solves one Lyapunov
/// equation.  Throws SynthesisError when (A, B) is not stabilizable,
/// (Q, A) hides unstable modes from the cost, or the relative residual
/// exceeds `residual_tol`.
Eigen::MatrixXd solve_care(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const Eigen::MatrixXd& q, const Eigen::MatrixXd& r,
                           double residual_tol = 1e-10);

/// Relative residual ||A'P + PA - PBR^-1B'P + Q|| / max(||P||, ||Q||, eps).
double care_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                     const Eigen::MatrixXd& q, const Eigen::MatrixXd& r,
                     const Eigen::MatrixXd& p);

/// Solves A'XA - X - A'XB (R + B'XB)^-1 B'XA + Q = 0 for the stabilizing
/// X >= 0 (discrete Riccati) with the structure-preserving doubling
/// algorithm.  Throws SynthesisError on breakdown or non-convergence.
Eigen::MatrixXd solve_dare(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                           const Eigen::MatrixXd& q, const Eigen::MatrixXd& r);

/// Exact zero-order-hold discretization of dx = A x dt + B u dt + noise,
/// where the continuous process noise has intensity Qc (E[w w'] = Qc δ):
///   Ad = exp(A dt),   Bd = ∫ exp(A s) B ds,   Qd = ∫ exp(A s) Qc exp(A' s) ds,
/// integrals over one sample period, evaluated with Van Loan's
/// block-exponential construction.
struct Discretized {
  Eigen::MatrixXd ad;
  Eigen::MatrixXd bd;
  Eigen::MatrixXd qd;
  double dt_s = 0.0;
};
Discretized discretize_van_loan(const Eigen::MatrixXd& a,
                                const Eigen::MatrixXd& b,
                                const Eigen::MatrixXd& qc, double dt_s);

}  // namespace levsim
