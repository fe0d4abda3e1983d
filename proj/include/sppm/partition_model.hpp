#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "sppm/core.hpp"
#include "sppm/rng.hpp"

namespace sppm {

/// DP cohesion: log(alpha * Gamma(n_k)).
double log_cohesion_dp(int n_k, double alpha);

/// Finite-Dirichlet cohesion, unnormalized (the V(n,K) constant is not
/// computed): log(Gamma(alpha_tilde) / Gamma(alpha_tilde + n_k)). Exact in
/// allocation ratios only while K is unchanged; K-changing moves are
/// approximate under this cohesion.
double log_cohesion_finite_dirichlet(int n_k, double alpha_tilde);

/// log EPPF of the DP: log Gamma(alpha) - log Gamma(alpha + n)
/// + K log alpha + sum_k log Gamma(n_k).
double log_eppf_dp(std::span<const int> sizes, double alpha);

/// Running count, coordinate sum and coordinate outer-product sum of a
/// cluster's member locations; enough to recover the centroid and the
/// centered scatter matrix Delta_k in O(1).
struct ClusterSuffStats {
  int count = 0;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  Eigen::Matrix2d outer = Eigen::Matrix2d::Zero();

  void add(const Eigen::Vector2d& s) {
    ++count;
    sum += s;
    outer += s * s.transpose();
  }
  void remove(const Eigen::Vector2d& s) {
    --count;
    sum -= s;
    outer -= s * s.transpose();
  }
  Eigen::Vector2d centroid() const { return sum / count; }
  /// Delta_k = sum_j (s_j - sbar)(s_j - sbar)'.
  Eigen::Matrix2d scatter() const {
    const Eigen::Vector2d c = centroid();
    return outer - static_cast<double>(count) * (c * c.transpose());
  }
};

/// log Gamma_2(a), the bivariate multivariate gamma function.
double log_mvgamma2(double a);

/// Centroid-distance similarity: 0 for singletons, otherwise
/// -log Gamma(omega D_k) when D_k >= 1 and -log D_k when D_k < 1, where
/// D_k sums the Euclidean distances from the centroid to the members.
/// Coincident points (D_k = 0 with n_k > 1) are capped at log(1e12).
/// `extra`, when non-null, is treated as an additional member.
double log_similarity_g1(std::span<const Eigen::Vector2d> members, double omega,
                         const Eigen::Vector2d* extra = nullptr);

/// Pairwise-threshold similarity: 0 when every pairwise distance is at most
/// a_threshold, -infinity otherwise.
double log_similarity_g2(std::span<const Eigen::Vector2d> members, double a_threshold,
                         const Eigen::Vector2d* extra = nullptr);

/// NIW prior-predictive marginal of the cluster coordinates (closed form):
/// with kappa_k = kappa0 + n_k, nu_k = nu0 + n_k and
/// Lambda_k = Lambda0 + Delta_k
///          + kappa0 n_k / (kappa0 + n_k) (sbar - mu0)(sbar - mu0)',
/// log g3 = -n_k log pi + log kappa0 - log kappa_k
///        + (nu0/2) log |Lambda0| - (nu_k/2) log |Lambda_k|
///        + log Gamma_2(nu_k/2) - log Gamma_2(nu0/2).
double log_similarity_g3(const ClusterSuffStats& stats, const NiwParams& niw);

/// Posterior-predictive variant: the g3 formula evaluated with the prior
/// replaced by the once-updated posterior (mu_k, kappa_k, nu_k, Lambda_k).
double log_similarity_g4(const ClusterSuffStats& stats, const NiwParams& niw);

/// Cohesion/similarity settings bound to a concrete concentration value.
struct PartitionPrior {
  CohesionKind cohesion = CohesionKind::Dp;
  double alpha = 1.0;
  double alpha_tilde = 1.0;
  SimilarityKind similarity = SimilarityKind::None;
  double g1_omega = 1.0;
  double g2_threshold = 1.0;
  NiwParams niw;

  static PartitionPrior from(const Hyperparams& h, double alpha_value) {
    return PartitionPrior{h.cohesion, alpha_value, h.alpha_tilde, h.similarity,
                          h.g1_omega,  h.g2_threshold, h.niw};
  }
};

double log_cohesion(const PartitionPrior& prior, int n_k);

/// Whole-cluster log similarity under the configured function (0 when None).
double log_similarity(const PartitionPrior& prior, const ClusterSuffStats& stats,
                      std::span<const Eigen::Vector2d> members);

double log_similarity_singleton(const PartitionPrior& prior, const Eigen::Vector2d& s);

/// Allocation log weight for joining an existing cluster: the w log-density
/// term plus the cohesion and similarity ratios of Algorithm 1's allocation
/// step, computed incrementally from the cluster's sufficient statistics
/// (stats and members exclude the unit being placed). For G2 the existing
/// cluster is assumed internally valid, so only the new unit's distances
/// are checked.
double alloc_log_weight_existing(double loglik, const PartitionPrior& prior,
                                 const ClusterSuffStats& stats_without,
                                 std::span<const Eigen::Vector2d> members_without,
                                 const Eigen::Vector2d& s_i);

/// Allocation log weight for opening a new cluster seeded by one auxiliary
/// atom: loglik + log C({i}) + log g({s_i}) - log k_aux (each of the k_aux
/// auxiliaries carries 1/k_aux of the new-cluster prior mass).
double alloc_log_weight_new(double loglik, const PartitionPrior& prior,
                            const Eigen::Vector2d& s_i, int k_aux);

/// Sequential CRP draw from the DP partition prior.
Partition sample_prior_partition(int n, double alpha, Rng& rng);

}  // namespace sppm
