#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <vector>

#include "sppm/ar1.hpp"
#include "sppm/core.hpp"
#include "sppm/partition_model.hpp"
#include "sppm/rng.hpp"

namespace sppm {

struct ChainConfig {
  int n_iter = 15000;
  int burn_in = 10000;
  int thin = 1;
  std::uint64_t seed = 1;
  double mh_step_phi = 1.0;       // random-walk scale on logit(phi)
  bool adapt_mh = true;           // Robbins-Monro tuning during burn-in only
  bool parallel_station_updates = false;
  bool likelihood_disabled = false;  // test hook: f(w | theta) == 1 everywhere
  int stats_refresh_every = 500;     // from-scratch refresh of cluster statistics

  void validate() const;
};

/// One retained posterior draw: the canonical partition, its atoms, the
/// concentration, and compact summaries of the station-level parameters.
struct DrawRecord {
  int iteration = 0;
  Partition partition;
  std::vector<Ar1Params> atoms;
  double alpha = 1.0;
  Eigen::VectorXd beta_mean;  // p, mean over stations
  Eigen::VectorXd zeta2;      // p
  double sigma2_mean = 0.0;
};

struct PosteriorDraws {
  std::vector<DrawRecord> draws;
  int n = 0, t_len = 0, p = 0;
  double phi_accept_rate = 0.0;
  double seconds_per_iter = 0.0;
};

/// Full parameter state of one chain; owned by a single sampler and never
/// shared mutably.
struct ChainState {
  Eigen::MatrixXd beta;   // p x n
  Eigen::MatrixXd w;      // T x n
  Eigen::VectorXd sigma2; // n
  Eigen::VectorXd zeta2;  // p
  std::vector<int> alloc; // n labels in 1..K, canonical between sweeps
  std::vector<Ar1Params> atoms;  // K
  double alpha = 1.0;
  Rng rng{0};
};

// --- closed-form full conditionals (pure helpers, unit-testable) ---

struct IgParams {
  double shape;
  double scale;
};

inline IgParams sigma2_full_conditional(const Eigen::Ref<const Eigen::VectorXd>& resid,
                                        double a_sigma, double b_sigma) {
  return {a_sigma + 0.5 * static_cast<double>(resid.size()), b_sigma + 0.5 * resid.squaredNorm()};
}

inline IgParams zeta2_full_conditional(const Eigen::Ref<const Eigen::VectorXd>& beta_row,
                                       double a_zeta, double b_zeta) {
  return {a_zeta + 0.5 * static_cast<double>(beta_row.size()), b_zeta + 0.5 * beta_row.squaredNorm()};
}

inline IgParams tau2_full_conditional(double quad_sum_unit_tau, int n_k, int t_len,
                                      double a_tau, double b_tau) {
  return {a_tau + 0.5 * static_cast<double>(n_k) * t_len, b_tau + 0.5 * quad_sum_unit_tau};
}

struct MvnParams {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// N_p(V Z' Q^{-1} y, V) with Q = sigma2 I + R(theta) and
/// V = (Z' Q^{-1} Z + diag(zeta2)^{-1})^{-1}.
MvnParams beta_full_conditional(const Eigen::Ref<const Eigen::VectorXd>& y_i,
                                const Eigen::MatrixXd& z, double sigma2, const Ar1Params& atom,
                                const Eigen::Ref<const Eigen::VectorXd>& zeta2);

/// V_w^{-1} = I/sigma2 + R(theta)^{-1}.
SymTridiag w_full_conditional_precision(int t_len, double sigma2, const Ar1Params& atom);

/// Beta prior density plus the logit-transform Jacobian, as a function of
/// logit(phi); the w log-likelihood terms are added by the caller.
double phi_logit_log_target(double logit_phi, double a_phi, double b_phi);

enum class PartitionMode { Sample, Fixed, Singletons };

/// The collapsed Gibbs sampler: conjugate station-level updates, the
/// auxiliary-atom allocation sweep, MH on each cluster's phi, conjugate
/// tau2 updates, and the two-Gamma-mixture concentration update.
class GibbsSampler {
 public:
  GibbsSampler(Dataset data, DesignMatrix design, Hyperparams hyper, ChainConfig config);

  /// Freezes the allocation at the supplied partition (conditional
  /// re-estimation mode); atoms are re-initialized from P0.
  void fix_partition(const Partition& partition);
  /// Freezes every station in its own cluster (no-clustering mode).
  void fix_singletons();

  PosteriorDraws run();
  PosteriorDraws run(const std::function<void(const ChainState&, int)>& on_draw);

  /// One full pass over Algorithm 1's steps.
  void sweep(int iteration);

  // individual steps, public so each conditional can be exercised alone
  void update_beta(int i, Rng& rng);
  void update_w(int i, Rng& rng);
  void update_sigma2(int i, Rng& rng);
  void update_zeta2(int l);
  void update_allocations();
  bool update_phi(int k);   // returns acceptance
  void update_tau2(int k);
  /// Two-component Gamma mixture update of alpha; throws std::logic_error
  /// when a similarity function is active (alpha is fixed in that case).
  void update_alpha();

  /// Redraws y from N(Z beta_i + w_i, sigma2_i I) under the current state.
  void resample_observations();

  const ChainState& state() const { return state_; }
  ChainState& state() { return state_; }
  const Dataset& data() const { return data_; }
  const DesignMatrix& design() const { return design_; }
  const Hyperparams& hyper() const { return hyper_; }
  PartitionMode mode() const { return mode_; }
  Partition current_partition() const;
  PartitionPrior partition_prior() const { return PartitionPrior::from(hyper_, state_.alpha); }
  double phi_acceptance_rate() const;
  double phi_step() const { return std::exp(log_step_); }

  /// Rebuilds member lists and sufficient statistics from the allocation
  /// vector; call after mutating state().alloc or atoms externally.
  void rebuild_cluster_index();

  Ar1Params draw_atom_from_p0(Rng& rng) const;

 private:
  void canonicalize_state();
  void check_state_finite(int iteration) const;
  double safe_loglik(const Eigen::Ref<const Eigen::VectorXd>& w_i, const Ar1Params& atom) const;
  Eigen::Vector2d coord(int i) const { return data_.coords.row(i).transpose(); }
  void station_steps(int iteration);
  DrawRecord make_record(int iteration) const;

  Dataset data_;
  DesignMatrix design_;
  Hyperparams hyper_;
  ChainConfig config_;
  ChainState state_;
  PartitionMode mode_ = PartitionMode::Sample;

  std::vector<std::vector<int>> members_;               // station indices per cluster
  std::vector<std::vector<Eigen::Vector2d>> member_xy_; // coordinates per cluster
  std::vector<ClusterSuffStats> stats_;

  double log_step_ = 0.0;
  long phi_proposed_ = 0;
  long phi_accepted_ = 0;
  long adapt_count_ = 0;
  bool adapting_ = false;
};

}  // namespace sppm
