#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "sppm/ar1.hpp"
#include "sppm/core.hpp"
#include "sppm/rng.hpp"

namespace sppm::testing {

/// Dense stationary AR(1) covariance: tau2/(1-phi^2) * phi^|t-t'|.
inline Eigen::MatrixXd dense_ar1_covariance(int t_len, const Ar1Params& p) {
  Eigen::MatrixXd r(t_len, t_len);
  const double scale = p.tau2 / (1.0 - p.phi * p.phi);
  for (int a = 0; a < t_len; ++a)
    for (int b = 0; b < t_len; ++b) r(a, b) = scale * std::pow(p.phi, std::abs(a - b));
  return r;
}

/// All set partitions of {0..n-1} as allocation vectors in restricted
/// growth string form (labels 1-based to match canonical storage).
inline std::vector<std::vector<int>> all_set_partitions(int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> rgs(static_cast<std::size_t>(n), 1);
  std::function<void(int, int)> rec = [&](int i, int max_label) {
    if (i == n) {
      out.push_back(rgs);
      return;
    }
    for (int lab = 1; lab <= max_label + 1; ++lab) {
      rgs[static_cast<std::size_t>(i)] = lab;
      rec(i + 1, std::max(max_label, lab));
    }
  };
  rec(0, 0);
  return out;
}

/// Kolmogorov-Smirnov p-value (asymptotic series) for samples against an
/// analytic CDF.
inline double ks_p_value(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

/// Regularized lower incomplete gamma P(a, x) by series/continued fraction.
inline double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  const double log_norm = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    double term = 1.0 / a, sum = term;
    for (int k = 1; k < 500; ++k) {
      term *= x / (a + k);
      sum += term;
      if (term < sum * 1e-16) break;
    }
    return std::exp(log_norm) * sum;
  }
  // Lentz continued fraction for Q(a, x)
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int k = 1; k < 500; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return 1.0 - std::exp(log_norm) * h;
}

inline double chi2_cdf(double x, double df) { return gamma_p(0.5 * df, 0.5 * x); }

/// Gamma(shape, rate) CDF.
inline double gamma_cdf(double x, double shape, double rate) { return gamma_p(shape, rate * x); }

/// Inverse-gamma IG(shape, b) CDF.
inline double inv_gamma_cdf(double x, double shape, double b) {
  return x <= 0.0 ? 0.0 : 1.0 - gamma_p(shape, b / x);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Adjusted Rand index between two allocation vectors.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  const int n = static_cast<int>(a.size());
  const int ka = *std::max_element(a.begin(), a.end());
  const int kb = *std::max_element(b.begin(), b.end());
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ka, kb);
  for (int i = 0; i < n; ++i) table(a[i] - 1, b[i] - 1) += 1.0;
  const auto choose2 = [](double m) { return 0.5 * m * (m - 1.0); };
  double sum_ij = 0.0;
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) sum_ij += choose2(table(i, j));
  double sum_a = 0.0, sum_b = 0.0;
  for (int i = 0; i < ka; ++i) sum_a += choose2(table.row(i).sum());
  for (int j = 0; j < kb; ++j) sum_b += choose2(table.col(j).sum());
  const double total = choose2(static_cast<double>(n));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;
  return (sum_ij - expected) / (max_index - expected);
}

inline double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double variance_of(std::span<const double> xs) {
  const double m = mean_of(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

/// Standard error of the mean of an autocorrelated chain via batch means.
inline double batch_means_se(std::span<const double> xs, int n_batches = 100) {
  const int len = static_cast<int>(xs.size());
  const int batch = len / n_batches;
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(n_batches));
  for (int b = 0; b < n_batches; ++b) {
    double acc = 0.0;
    for (int i = b * batch; i < (b + 1) * batch; ++i) acc += xs[static_cast<std::size_t>(i)];
    means.push_back(acc / batch);
  }
  return std::sqrt(variance_of(means) / n_batches);
}

/// Gauss-Legendre nodes/weights on [0, 1].
inline void gauss_legendre_unit(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.resize(static_cast<std::size_t>(n));
  weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[static_cast<std::size_t>(i)] = 0.5 * (1.0 - x);
    weights[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - x * x) * pp * pp);
  }
}

}  // namespace sppm::testing
