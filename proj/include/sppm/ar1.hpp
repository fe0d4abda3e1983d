#pragma once

#include <Eigen/Dense>

#include "sppm/rng.hpp"

namespace sppm {

/// phi is kept a guard band away from {0, 1} to protect the 1/(1-phi^2)
/// stationary-variance factor.
inline constexpr double kPhiGuard = 1e-8;

/// Stationary AR(1) parameters: w_t = phi w_{t-1} + N(0, tau2), with
/// stationary covariance [R]_{t,t'} = tau2 / (1 - phi^2) * phi^|t-t'|.
struct Ar1Params {
  double phi = 0.5;
  double tau2 = 1.0;

  void validate() const;
};

/// Symmetric tridiagonal matrix stored as its diagonal and off-diagonal.
struct SymTridiag {
  Eigen::VectorXd diag;  // length T
  Eigen::VectorXd off;   // length T-1

  int dim() const { return static_cast<int>(diag.size()); }
};

/// Lower bidiagonal Cholesky factor of a SymTridiag.
struct TridiagChol {
  Eigen::VectorXd diag;  // length T
  Eigen::VectorXd off;   // length T-1, subdiagonal of L
};

/// Cholesky of a symmetric tridiagonal SPD matrix; throws
/// std::runtime_error on breakdown (non-positive pivot).
TridiagChol tridiag_cholesky(const SymTridiag& m);

Eigen::VectorXd tridiag_forward_solve(const TridiagChol& l, const Eigen::Ref<const Eigen::VectorXd>& b);
Eigen::VectorXd tridiag_backward_solve(const TridiagChol& l, const Eigen::Ref<const Eigen::VectorXd>& b);
Eigen::VectorXd tridiag_matvec(const SymTridiag& m, const Eigen::Ref<const Eigen::VectorXd>& v);

/// Solves m x = b through the tridiagonal Cholesky factorization.
Eigen::VectorXd tridiag_solve(const SymTridiag& m, const Eigen::Ref<const Eigen::VectorXd>& b);

/// R(theta)^{-1}: corners 1/tau2, interior (1+phi^2)/tau2, off-diagonal
/// -phi/tau2. For T = 1 the stationary marginal precision (1-phi^2)/tau2
/// is used, since the banded pattern degenerates.
SymTridiag ar1_precision(int t_len, const Ar1Params& p);

/// w' R(theta)^{-1} w in O(T), without materializing the matrix.
double quad_form(const Eigen::Ref<const Eigen::VectorXd>& w, const Ar1Params& p);

/// log |R(theta)^{-1}| via the delta recursion
///   delta_1 = 1/tau2,
///   delta_t = (1+phi^2)/tau2 - phi^2/tau2^2 / delta_{t-1}   (interior),
///   delta_T = 1/tau2 - phi^2/tau2^2 / delta_{T-1},
/// summed in log space. Throws std::runtime_error if any delta_t <= 0.
double log_det_precision(int t_len, const Ar1Params& p);

/// N_T(0, R(theta)) log-density of w: -(T/2) log(2 pi)
/// + log_det_precision / 2 - quad_form / 2.
double loglik_w(const Eigen::Ref<const Eigen::VectorXd>& w, const Ar1Params& p);

/// Exact draw from N(V mu_raw, V) with V^{-1} = I/sigma2 + R(theta)^{-1},
/// the full conditional of the latent series. Tridiagonal Cholesky, one
/// forward and one backward substitution: O(T) per draw.
Eigen::VectorXd sample_w(const Eigen::Ref<const Eigen::VectorXd>& mu_raw, double sigma2,
                         const Ar1Params& p, Rng& rng);

/// Q^{-1} v for Q = sigma2 I + R(theta), in O(T) via the factorization
/// Q = R (sigma2 R^{-1} + I): apply R^{-1}, then solve the tridiagonal
/// system (sigma2 R^{-1} + I) x = R^{-1} v.
Eigen::VectorXd marginal_solve(const Eigen::Ref<const Eigen::VectorXd>& v, double sigma2,
                               const Ar1Params& p);

}  // namespace sppm
