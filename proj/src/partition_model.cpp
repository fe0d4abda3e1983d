#include "sppm/partition_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace sppm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Cap for the singular D_k -> 0 limit of g1.
constexpr double kG1Cap = 27.631021115928547;  // log(1e12)

double det2(const Eigen::Matrix2d& m) { return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0); }

double log_det_spd2(const Eigen::Matrix2d& m) {
  const double d = det2(m);
  if (!(d > 0.0) || !(m(0, 0) > 0.0))
    throw std::runtime_error("partition_model: 2x2 scale matrix lost positive-definiteness");
  return std::log(d);
}

struct NiwPosterior {
  Eigen::Vector2d mu;
  double kappa;
  double nu;
  Eigen::Matrix2d lambda;
};

NiwPosterior niw_update(const Eigen::Vector2d& mu0, double kappa0, double nu0,
                        const Eigen::Matrix2d& lambda0, const ClusterSuffStats& stats) {
  const double n_k = static_cast<double>(stats.count);
  const Eigen::Vector2d sbar = stats.centroid();
  const Eigen::Vector2d dev = sbar - mu0;
  NiwPosterior post;
  post.kappa = kappa0 + n_k;
  post.nu = nu0 + n_k;
  post.mu = (kappa0 * mu0 + n_k * sbar) / post.kappa;
  post.lambda = lambda0 + stats.scatter() + (kappa0 * n_k / post.kappa) * (dev * dev.transpose());
  return post;
}

// Shared core of g3/g4: the marginal with "prior" (mu, kappa, nu, lambda).
double niw_log_marginal(const Eigen::Vector2d& mu, double kappa, double nu,
                        const Eigen::Matrix2d& lambda, const ClusterSuffStats& stats) {
  const NiwPosterior post = niw_update(mu, kappa, nu, lambda, stats);
  return -stats.count * std::log(std::numbers::pi) + std::log(kappa) - std::log(post.kappa) +
         0.5 * nu * log_det_spd2(lambda) - 0.5 * post.nu * log_det_spd2(post.lambda) +
         log_mvgamma2(0.5 * post.nu) - log_mvgamma2(0.5 * nu);
}

}  // namespace

double log_cohesion_dp(int n_k, double alpha) {
  if (n_k < 1) throw std::invalid_argument("log_cohesion_dp: empty cluster");
  return std::log(alpha) + std::lgamma(static_cast<double>(n_k));
}

double log_cohesion_finite_dirichlet(int n_k, double alpha_tilde) {
  if (n_k < 1) throw std::invalid_argument("log_cohesion_finite_dirichlet: empty cluster");
  return std::lgamma(alpha_tilde) - std::lgamma(alpha_tilde + n_k);
}

double log_eppf_dp(std::span<const int> sizes, double alpha) {
  if (sizes.empty()) throw std::invalid_argument("log_eppf_dp: empty size vector");
  int n = 0;
  double log_p = 0.0;
  for (int n_k : sizes) {
    if (n_k < 1) throw std::invalid_argument("log_eppf_dp: non-positive block size");
    n += n_k;
    log_p += std::log(alpha) + std::lgamma(static_cast<double>(n_k));
  }
  return log_p + std::lgamma(alpha) - std::lgamma(alpha + n);
}

double log_mvgamma2(double a) {
  return 0.5 * std::log(std::numbers::pi) + std::lgamma(a) + std::lgamma(a - 0.5);
}

double log_similarity_g1(std::span<const Eigen::Vector2d> members, double omega,
                         const Eigen::Vector2d* extra) {
  const int n_k = static_cast<int>(members.size()) + (extra ? 1 : 0);
  if (n_k < 1) throw std::invalid_argument("log_similarity_g1: empty cluster");
  if (n_k == 1) return 0.0;
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& s : members) centroid += s;
  if (extra) centroid += *extra;
  centroid /= n_k;
  double dist_sum = 0.0;
  for (const auto& s : members) dist_sum += (s - centroid).norm();
  if (extra) dist_sum += (*extra - centroid).norm();
  if (dist_sum >= 1.0) return -std::lgamma(omega * dist_sum);
  if (dist_sum == 0.0) return kG1Cap;
  return std::min(-std::log(dist_sum), kG1Cap);
}

double log_similarity_g2(std::span<const Eigen::Vector2d> members, double a_threshold,
                         const Eigen::Vector2d* extra) {
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      if ((members[i] - members[j]).norm() > a_threshold) return kNegInf;
    }
    if (extra && (members[i] - *extra).norm() > a_threshold) return kNegInf;
  }
  return 0.0;
}

double log_similarity_g3(const ClusterSuffStats& stats, const NiwParams& niw) {
  if (stats.count < 1) throw std::invalid_argument("log_similarity_g3: empty cluster");
  return niw_log_marginal(niw.mu0, niw.kappa0, niw.nu0, niw.lambda0, stats);
}

double log_similarity_g4(const ClusterSuffStats& stats, const NiwParams& niw) {
  if (stats.count < 1) throw std::invalid_argument("log_similarity_g4: empty cluster");
  const NiwPosterior post = niw_update(niw.mu0, niw.kappa0, niw.nu0, niw.lambda0, stats);
  return niw_log_marginal(post.mu, post.kappa, post.nu, post.lambda, stats);
}

double log_cohesion(const PartitionPrior& prior, int n_k) {
  return prior.cohesion == CohesionKind::Dp ? log_cohesion_dp(n_k, prior.alpha)
                                            : log_cohesion_finite_dirichlet(n_k, prior.alpha_tilde);
}

double log_similarity(const PartitionPrior& prior, const ClusterSuffStats& stats,
                      std::span<const Eigen::Vector2d> members) {
  switch (prior.similarity) {
    case SimilarityKind::None:
      return 0.0;
    case SimilarityKind::G1:
      return log_similarity_g1(members, prior.g1_omega);
    case SimilarityKind::G2:
      return log_similarity_g2(members, prior.g2_threshold);
    case SimilarityKind::G3:
      return log_similarity_g3(stats, prior.niw);
    case SimilarityKind::G4:
      return log_similarity_g4(stats, prior.niw);
  }
  throw std::logic_error("log_similarity: unknown similarity kind");
}

double log_similarity_singleton(const PartitionPrior& prior, const Eigen::Vector2d& s) {
  ClusterSuffStats stats;
  stats.add(s);
  return log_similarity(prior, stats, {&s, 1});
}

double alloc_log_weight_existing(double loglik, const PartitionPrior& prior,
                                 const ClusterSuffStats& stats_without,
                                 std::span<const Eigen::Vector2d> members_without,
                                 const Eigen::Vector2d& s_i) {
  const int n_without = static_cast<int>(members_without.size());
  if (n_without < 1)
    throw std::invalid_argument("alloc_log_weight_existing: cluster empty after removal");
  double lw = loglik + log_cohesion(prior, n_without + 1) - log_cohesion(prior, n_without);
  switch (prior.similarity) {
    case SimilarityKind::None:
      break;
    case SimilarityKind::G1:
      lw += log_similarity_g1(members_without, prior.g1_omega, &s_i) -
            log_similarity_g1(members_without, prior.g1_omega);
      break;
    case SimilarityKind::G2:
      // current members are mutually within the threshold by construction
      for (const auto& s : members_without) {
        if ((s - s_i).norm() > prior.g2_threshold) return kNegInf;
      }
      break;
    case SimilarityKind::G3:
    case SimilarityKind::G4: {
      ClusterSuffStats with = stats_without;
      with.add(s_i);
      const auto eval = prior.similarity == SimilarityKind::G3 ? log_similarity_g3 : log_similarity_g4;
      lw += eval(with, prior.niw) - eval(stats_without, prior.niw);
      break;
    }
  }
  return lw;
}

double alloc_log_weight_new(double loglik, const PartitionPrior& prior,
                            const Eigen::Vector2d& s_i, int k_aux) {
  if (k_aux < 1) throw std::invalid_argument("alloc_log_weight_new: k_aux must be at least 1");
  return loglik + log_cohesion(prior, 1) + log_similarity_singleton(prior, s_i) -
         std::log(static_cast<double>(k_aux));
}

Partition sample_prior_partition(int n, double alpha, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_prior_partition: n must be at least 1");
  if (!(alpha > 0.0)) throw std::invalid_argument("sample_prior_partition: alpha must be positive");
  std::vector<int> alloc(static_cast<std::size_t>(n));
  std::vector<double> sizes;
  alloc[0] = 1;
  sizes.push_back(1.0);
  for (int i = 1; i < n; ++i) {
    const double total = static_cast<double>(i) + alpha;
    double u = rng.uniform() * total;
    int label = static_cast<int>(sizes.size()) + 1;  // new table unless a seat wins
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      u -= sizes[k];
      if (u <= 0.0) {
        label = static_cast<int>(k) + 1;
        break;
      }
    }
    alloc[static_cast<std::size_t>(i)] = label;
    if (label == static_cast<int>(sizes.size()) + 1) {
      sizes.push_back(1.0);
    } else {
      sizes[static_cast<std::size_t>(label - 1)] += 1.0;
    }
  }
  return canonicalize(alloc);
}

}  // namespace sppm
