#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "sppm/core.hpp"
#include "sppm/sampler.hpp"

namespace sppm {

/// Pairwise posterior co-membership probabilities; symmetric, unit
/// diagonal, entries in [0, 1] by construction.
struct CoclusterMatrix {
  Eigen::MatrixXd p;
  int n() const { return static_cast<int>(p.rows()); }
};

/// Entry (i, j) = fraction of draws in which i and j share a cluster.
/// Throws on an empty draw list.
CoclusterMatrix cocluster(std::span<const Partition> draws);

/// Fraction of discordant unordered pairs, in [0, 1].
double binder_loss(const Partition& p1, const Partition& p2);

/// Variation of information in nats: H(p1) + H(p2) - 2 I(p1, p2).
double vi_loss(const Partition& p1, const Partition& p2);

/// Posterior expected Binder loss of a candidate partition, computed
/// exactly from the co-clustering matrix.
double expected_binder(const Partition& candidate, const CoclusterMatrix& cc);

/// Jensen lower bound on the posterior expected VI computed from pairwise
/// co-clustering probabilities (the salso-style search objective).
double vi_lower_bound(const Partition& candidate, const CoclusterMatrix& cc);

/// Exact posterior expected VI, averaged over the draws. Slow verification
/// mode; the search itself optimizes vi_lower_bound.
double expected_vi_exact(const Partition& candidate, std::span<const Partition> draws);

enum class LossKind { Binder, Vi };

struct SearchConfig {
  int restarts = 16;
  int max_sweeps = 50;
  std::uint64_t seed = 0;
};

struct PointEstimate {
  Partition partition;
  LossKind loss = LossKind::Vi;
  double expected_loss = 0.0;
  int restarts = 0;
  int total_sweeps = 0;
};

/// Greedy stochastic minimization of the posterior expected loss: multiple
/// restarts (one all-singletons initialization, the rest seeded from random
/// posterior draws), item-by-item reassignment sweeps including moves to a
/// new singleton, best result over restarts. Every distinct draw partition
/// is also evaluated as a candidate, so the result is never worse than the
/// best single draw. Deterministic given the seed; ties break toward the
/// lexicographically smallest canonical allocation.
PointEstimate search_point_estimate(std::span<const Partition> draws, const CoclusterMatrix& cc,
                                    LossKind loss, const SearchConfig& config);

struct ClusterParamSummary {
  int size = 0;
  double phi_mean = 0.0, phi_lo = 0.0, phi_hi = 0.0;
  double tau2_mean = 0.0, tau2_lo = 0.0, tau2_hi = 0.0;
};

struct ConditionalEstimate {
  Partition partition;
  std::vector<ClusterParamSummary> clusters;  // aligned with partition labels
  Eigen::MatrixXd beta_mean;                  // p x n
  Eigen::VectorXd sigma2_mean;                // n
  double phi_accept_rate = 0.0;
};

/// Re-runs the sampler with the allocation frozen at the supplied partition
/// and summarizes each cluster's (phi, tau2) with posterior means and
/// central 95% credible intervals.
ConditionalEstimate conditional_reestimate(const Dataset& data, const DesignMatrix& design,
                                           const Hyperparams& hyper, const Partition& partition,
                                           const ChainConfig& config);

struct ClusterAtomAverage {
  int size = 0;
  double phi = 0.0;
  double tau2 = 0.0;
};

/// Cheap alternative to conditional re-estimation: station-level posterior
/// means of (phi_i, tau2_i) averaged within the blocks of the point
/// estimate.
std::vector<ClusterAtomAverage> average_within_clusters(const PosteriorDraws& draws,
                                                        const Partition& partition);

/// The final retained draw, as-is. A convergence-dependent snapshot of the
/// clustering, not an averaged summary; prefer conditional_reestimate for
/// reportable numbers.
const DrawRecord& last_draw_snapshot(const PosteriorDraws& draws);

/// Quantile by linear interpolation between order statistics (type 7);
/// input must be sorted ascending.
double quantile_sorted(std::span<const double> sorted, double prob);

}  // namespace sppm
