#pragma once

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string>
#include <vector>

namespace sppm {

/// n point-referenced series of length T. Column i of y holds the series
/// observed at station i; coords row i is its (lon, lat) pair, used as given
/// (no projection is applied).
struct Dataset {
  Eigen::MatrixXd y;                      // T x n
  Eigen::MatrixX2d coords;                // n x 2
  std::vector<std::string> station_ids;   // n, unique
  std::vector<std::string> time_index;    // T, ordered ISO dates or labels

  int n() const { return static_cast<int>(y.cols()); }
  int t_len() const { return static_cast<int>(y.rows()); }

  /// Throws std::invalid_argument on missing values, n < 2, T < 2,
  /// non-finite coordinates, or duplicate station ids.
  void validate() const;
};

/// T x p regression design, first column all ones.
struct DesignMatrix {
  Eigen::MatrixXd Z;
  int p() const { return static_cast<int>(Z.cols()); }
  int t_len() const { return static_cast<int>(Z.rows()); }
};

struct YearMonthDay {
  int year, month, day;
};

/// Parses "YYYY-MM-DD"; throws std::invalid_argument otherwise.
YearMonthDay parse_date(const std::string& iso);

/// Season index of a calendar month under the meteorological convention:
/// 0 = winter (Dec-Feb), 1 = spring (Mar-May), 2 = summer (Jun-Aug),
/// 3 = autumn (Sep-Nov).
int meteorological_season(int month);

/// Intercept plus three seasonal dummies per row: (1,0,0,0) winter,
/// (1,1,0,0) spring, (1,0,1,0) summer, (1,0,0,1) autumn.
DesignMatrix build_seasonal_design(std::span<const std::string> dates);

/// Variant with a caller-supplied month -> season table (entries in 0..3),
/// for season conventions other than the meteorological default.
DesignMatrix build_seasonal_design(std::span<const std::string> dates,
                                   const std::array<int, 12>& season_of_month);

/// A set partition of {1..n} stored as an allocation vector with canonical
/// labels: unit 1 carries label 1 and every new block takes the smallest
/// unused integer. Canonical storage removes label switching from
/// comparisons and posterior summaries.
struct Partition {
  std::vector<int> alloc;  // n labels in 1..K
  std::vector<int> sizes;  // K block sizes, sum n

  int size() const { return static_cast<int>(alloc.size()); }
  int num_blocks() const { return static_cast<int>(sizes.size()); }
  bool same_block(int i, int j) const { return alloc[i] == alloc[j]; }
  bool operator==(const Partition&) const = default;
};

/// Order-of-first-appearance relabeling of an arbitrary integer labeling.
/// Idempotent; throws on empty input.
Partition canonicalize(std::span<const int> labels);

/// Normal-Inverse-Wishart hyperparameters over a bivariate Gaussian mean
/// and covariance (D = 2 throughout).
struct NiwParams {
  Eigen::Vector2d mu0 = Eigen::Vector2d::Zero();
  double kappa0 = 1.0;
  double nu0 = 4.0;
  Eigen::Matrix2d lambda0 = Eigen::Matrix2d::Identity();

  /// kappa0 > 0, nu0 > 1 (bivariate gamma arguments stay valid), lambda0 SPD.
  void validate() const;
};

enum class CohesionKind { Dp, FiniteDirichlet };
enum class SimilarityKind { None, G1, G2, G3, G4 };

/// Fixed prior constants shared by the sampler and the partition prior.
/// Defaults follow the data-analysis setup: IG(2,1) variance priors,
/// uniform Beta(1,1) on phi, Gamma(2, 0.5) hyperprior on a random alpha.
struct Hyperparams {
  double a_sigma = 2.0, b_sigma = 1.0;
  double a_zeta = 2.0, b_zeta = 1.0;
  double a_phi = 1.0, b_phi = 1.0;
  double a_tau = 2.0, b_tau = 1.0;
  double a_alpha = 2.0, b_alpha = 0.5;  // used only when alpha_random
  double alpha = 1.0;                   // used when alpha is fixed
  bool alpha_random = false;
  int k_aux = 3;                        // auxiliary atoms per allocation move

  CohesionKind cohesion = CohesionKind::Dp;
  double alpha_tilde = 1.0;             // FiniteDirichlet cohesion parameter

  SimilarityKind similarity = SimilarityKind::None;
  double g1_omega = 1.0;
  double g2_threshold = 1.0;
  NiwParams niw;

  /// Throws std::invalid_argument when any scale/shape parameter is not
  /// strictly positive, k_aux < 1, or the NIW block is invalid.
  void validate() const;
};

}  // namespace sppm
