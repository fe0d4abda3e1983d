#include "sppm/ar1.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sppm {

void Ar1Params::validate() const {
  if (!(phi >= kPhiGuard) || !(phi <= 1.0 - kPhiGuard))
    throw std::invalid_argument("Ar1Params: phi must lie in [1e-8, 1-1e-8]");
  if (!(tau2 > 0.0) || !std::isfinite(tau2))
    throw std::invalid_argument("Ar1Params: tau2 must be positive and finite");
}

TridiagChol tridiag_cholesky(const SymTridiag& m) {
  const int t_len = m.dim();
  TridiagChol l;
  l.diag.resize(t_len);
  l.off.resize(std::max(t_len - 1, 0));
  double pivot = m.diag(0);
  if (!(pivot > 0.0)) throw std::runtime_error("tridiag_cholesky: non-positive pivot");
  l.diag(0) = std::sqrt(pivot);
  for (int t = 1; t < t_len; ++t) {
    l.off(t - 1) = m.off(t - 1) / l.diag(t - 1);
    pivot = m.diag(t) - l.off(t - 1) * l.off(t - 1);
    if (!(pivot > 0.0)) throw std::runtime_error("tridiag_cholesky: non-positive pivot");
    l.diag(t) = std::sqrt(pivot);
  }
  return l;
}

Eigen::VectorXd tridiag_forward_solve(const TridiagChol& l, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const int t_len = static_cast<int>(l.diag.size());
  Eigen::VectorXd x(t_len);
  x(0) = b(0) / l.diag(0);
  for (int t = 1; t < t_len; ++t) x(t) = (b(t) - l.off(t - 1) * x(t - 1)) / l.diag(t);
  return x;
}

Eigen::VectorXd tridiag_backward_solve(const TridiagChol& l, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const int t_len = static_cast<int>(l.diag.size());
  Eigen::VectorXd x(t_len);
  x(t_len - 1) = b(t_len - 1) / l.diag(t_len - 1);
  for (int t = t_len - 2; t >= 0; --t) x(t) = (b(t) - l.off(t) * x(t + 1)) / l.diag(t);
  return x;
}

Eigen::VectorXd tridiag_matvec(const SymTridiag& m, const Eigen::Ref<const Eigen::VectorXd>& v) {
  const int t_len = m.dim();
  Eigen::VectorXd out(t_len);
  for (int t = 0; t < t_len; ++t) {
    double acc = m.diag(t) * v(t);
    if (t > 0) acc += m.off(t - 1) * v(t - 1);
    if (t + 1 < t_len) acc += m.off(t) * v(t + 1);
    out(t) = acc;
  }
  return out;
}

Eigen::VectorXd tridiag_solve(const SymTridiag& m, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const TridiagChol l = tridiag_cholesky(m);
  return tridiag_backward_solve(l, tridiag_forward_solve(l, b));
}

SymTridiag ar1_precision(int t_len, const Ar1Params& p) {
  p.validate();
  if (t_len < 1) throw std::invalid_argument("ar1_precision: T must be at least 1");
  SymTridiag m;
  if (t_len == 1) {
    m.diag = Eigen::VectorXd::Constant(1, (1.0 - p.phi * p.phi) / p.tau2);
    m.off.resize(0);
    return m;
  }
  m.diag = Eigen::VectorXd::Constant(t_len, (1.0 + p.phi * p.phi) / p.tau2);
  m.diag(0) = 1.0 / p.tau2;
  m.diag(t_len - 1) = 1.0 / p.tau2;
  m.off = Eigen::VectorXd::Constant(t_len - 1, -p.phi / p.tau2);
  return m;
}

double quad_form(const Eigen::Ref<const Eigen::VectorXd>& w, const Ar1Params& p) {
  p.validate();
  const int t_len = static_cast<int>(w.size());
  if (t_len < 1) throw std::invalid_argument("quad_form: empty vector");
  if (!w.allFinite()) throw std::invalid_argument("quad_form: non-finite input");
  if (t_len == 1) return (1.0 - p.phi * p.phi) / p.tau2 * w(0) * w(0);
  double interior = 0.0;
  for (int t = 1; t + 1 < t_len; ++t) interior += w(t) * w(t);
  double cross = 0.0;
  for (int t = 0; t + 1 < t_len; ++t) cross += w(t) * w(t + 1);
  return (w(0) * w(0) + w(t_len - 1) * w(t_len - 1)) / p.tau2 +
         (1.0 + p.phi * p.phi) / p.tau2 * interior - 2.0 * p.phi / p.tau2 * cross;
}

double log_det_precision(int t_len, const Ar1Params& p) {
  p.validate();
  if (t_len < 1) throw std::invalid_argument("log_det_precision: T must be at least 1");
  const double inv_tau2 = 1.0 / p.tau2;
  if (t_len == 1) return std::log((1.0 - p.phi * p.phi) * inv_tau2);
  const double ratio = p.phi * p.phi * inv_tau2 * inv_tau2;
  double delta = inv_tau2;  // delta_1
  double log_det = std::log(delta);
  for (int t = 1; t + 1 < t_len; ++t) {
    delta = (1.0 + p.phi * p.phi) * inv_tau2 - ratio / delta;
    if (!(delta > 0.0)) throw std::runtime_error("log_det_precision: recursion breakdown");
    log_det += std::log(delta);
  }
  delta = inv_tau2 - ratio / delta;
  if (!(delta > 0.0)) throw std::runtime_error("log_det_precision: recursion breakdown");
  log_det += std::log(delta);
  return log_det;
}

double loglik_w(const Eigen::Ref<const Eigen::VectorXd>& w, const Ar1Params& p) {
  const int t_len = static_cast<int>(w.size());
  return -0.5 * t_len * std::log(2.0 * std::numbers::pi) + 0.5 * log_det_precision(t_len, p) -
         0.5 * quad_form(w, p);
}

Eigen::VectorXd sample_w(const Eigen::Ref<const Eigen::VectorXd>& mu_raw, double sigma2,
                         const Ar1Params& p, Rng& rng) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sample_w: sigma2 must be positive");
  const int t_len = static_cast<int>(mu_raw.size());
  SymTridiag prec = ar1_precision(t_len, p);
  prec.diag.array() += 1.0 / sigma2;
  const TridiagChol l = tridiag_cholesky(prec);
  Eigen::VectorXd a = tridiag_forward_solve(l, mu_raw);
  for (int t = 0; t < t_len; ++t) a(t) += rng.normal();
  return tridiag_backward_solve(l, a);
}

Eigen::VectorXd marginal_solve(const Eigen::Ref<const Eigen::VectorXd>& v, double sigma2,
                               const Ar1Params& p) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("marginal_solve: sigma2 must be positive");
  if (!v.allFinite()) throw std::invalid_argument("marginal_solve: non-finite input");
  const SymTridiag rinv = ar1_precision(static_cast<int>(v.size()), p);
  const Eigen::VectorXd u = tridiag_matvec(rinv, v);
  SymTridiag lhs = rinv;
  lhs.diag *= sigma2;
  lhs.diag.array() += 1.0;
  lhs.off *= sigma2;
  return tridiag_solve(lhs, u);
}

}  // namespace sppm
