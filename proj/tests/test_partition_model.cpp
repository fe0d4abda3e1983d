#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>

#include <map>
#include <vector>

#include "helpers.hpp"
#include "sppm/partition_model.hpp"

using namespace sppm;
using sppm::testing::all_set_partitions;

namespace {

ClusterSuffStats stats_of(std::span<const Eigen::Vector2d> pts) {
  ClusterSuffStats stats;
  for (const auto& s : pts) stats.add(s);
  return stats;
}

// Bartlett draw of V ~ IW(nu, lambda) for D = 2, then m ~ N(mu0, V / kappa).
struct NiwDraw {
  Eigen::Vector2d m;
  Eigen::Matrix2d v;
};

NiwDraw draw_niw(const Eigen::Vector2d& mu0, double kappa, double nu,
                 const Eigen::Matrix2d& lambda, Rng& rng) {
  const Eigen::Matrix2d lambda_inv = lambda.inverse();
  const Eigen::LLT<Eigen::Matrix2d> llt(lambda_inv);
  const Eigen::Matrix2d l = llt.matrixL();
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  a(0, 0) = std::sqrt(2.0 * rng.gamma(0.5 * nu));
  a(1, 1) = std::sqrt(2.0 * rng.gamma(0.5 * (nu - 1.0)));
  a(1, 0) = rng.normal();
  const Eigen::Matrix2d wishart = (l * a) * (l * a).transpose();
  NiwDraw draw;
  draw.v = wishart.inverse();
  const Eigen::LLT<Eigen::Matrix2d> vllt(draw.v / kappa);
  const Eigen::Matrix2d vl = vllt.matrixL();
  draw.m = mu0 + vl * Eigen::Vector2d(rng.normal(), rng.normal());
  return draw;
}

double log_mvn2(const Eigen::Vector2d& x, const Eigen::Vector2d& m, const Eigen::Matrix2d& v) {
  const Eigen::Matrix2d vinv = v.inverse();
  const Eigen::Vector2d d = x - m;
  return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(v.determinant()) -
         0.5 * d.dot(vinv * d);
}

// chain-rule oracle: product of bivariate Student-t posterior predictives
double student_t_chain_log_marginal(std::span<const Eigen::Vector2d> pts, const NiwParams& niw) {
  Eigen::Vector2d mu = niw.mu0;
  double kappa = niw.kappa0;
  double nu = niw.nu0;
  Eigen::Matrix2d lambda = niw.lambda0;
  double log_m = 0.0;
  for (const auto& s : pts) {
    const double df = nu - 1.0;  // nu - D + 1 with D = 2
    const Eigen::Matrix2d scale = lambda * (kappa + 1.0) / (kappa * df);
    const Eigen::Vector2d d = s - mu;
    const double quad = d.dot(scale.inverse() * d);
    log_m += std::lgamma(0.5 * (df + 2.0)) - std::lgamma(0.5 * df) - std::log(df) -
             std::log(std::numbers::pi) - 0.5 * std::log(scale.determinant()) -
             0.5 * (df + 2.0) * std::log1p(quad / df);
    lambda += kappa / (kappa + 1.0) * (d * d.transpose());
    mu = (kappa * mu + s) / (kappa + 1.0);
    kappa += 1.0;
    nu += 1.0;
  }
  return log_m;
}

std::vector<Eigen::Vector2d> random_cluster(int n_k, Rng& rng, double spread = 1.0) {
  std::vector<Eigen::Vector2d> pts;
  for (int i = 0; i < n_k; ++i)
    pts.emplace_back(spread * rng.normal(), spread * rng.normal());
  return pts;
}

}  // namespace

TEST_CASE("DP cohesion examples and ratio identity") {
  CHECK(log_cohesion_dp(1, 1.0) == doctest::Approx(0.0));
  CHECK(log_cohesion_dp(3, 2.0) == doctest::Approx(std::log(4.0)));
  for (int n_k = 1; n_k <= 20; ++n_k) {
    CHECK(log_cohesion_dp(n_k + 1, 1.7) - log_cohesion_dp(n_k, 1.7) ==
          doctest::Approx(std::log(static_cast<double>(n_k))).epsilon(1e-12));
  }
  CHECK_THROWS_AS(log_cohesion_dp(0, 1.0), std::invalid_argument);
}

TEST_CASE("finite-Dirichlet cohesion examples") {
  CHECK(log_cohesion_finite_dirichlet(1, 1.0) == doctest::Approx(0.0));
  CHECK(log_cohesion_finite_dirichlet(2, 1.0) == doctest::Approx(std::log(0.5)));
  CHECK(log_cohesion_finite_dirichlet(2, 2.0) == doctest::Approx(std::log(1.0 / 6.0)));
}

TEST_CASE("DP EPPF examples") {
  const std::vector<int> one_block{3};
  CHECK(log_eppf_dp(one_block, 1.0) == doctest::Approx(std::log(1.0 / 3.0)));
  const std::vector<int> single{1};
  CHECK(log_eppf_dp(single, 0.37) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(log_eppf_dp(single, 4.2) == doctest::Approx(0.0).epsilon(1e-12));
  const std::vector<int> singletons{1, 1, 1};
  CHECK(log_eppf_dp(singletons, 1.0) == doctest::Approx(std::log(1.0 / 6.0)));
}

TEST_CASE("EPPF normalizes over all set partitions for n <= 8") {
  for (const double alpha : {0.5, 1.0, 2.0}) {
    for (int n = 2; n <= 8; ++n) {
      double total = 0.0;
      for (const auto& alloc : all_set_partitions(n)) {
        const Partition part = canonicalize(alloc);
        total += std::exp(log_eppf_dp(part.sizes, alpha));
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("g1 worked examples") {
  const Eigen::Vector2d origin(0.0, 0.0);
  CHECK(log_similarity_g1({&origin, 1}, 1.0) == doctest::Approx(0.0));

  std::vector<Eigen::Vector2d> pair{{0.0, 0.0}, {0.5, 0.0}};  // D_k = 0.5
  CHECK(log_similarity_g1(pair, 1.0) == doctest::Approx(std::log(2.0)));

  std::vector<Eigen::Vector2d> far{{0.0, 0.0}, {4.0, 0.0}};  // D_k = 4
  CHECK(log_similarity_g1(far, 1.0) == doctest::Approx(-std::lgamma(4.0)));

  std::vector<Eigen::Vector2d> coincident{{1.0, 2.0}, {1.0, 2.0}};
  CHECK(log_similarity_g1(coincident, 1.0) == doctest::Approx(std::log(1e12)));
}

TEST_CASE("g2 worked examples") {
  std::vector<Eigen::Vector2d> close{{0.0, 0.0}, {0.5, 0.0}};
  CHECK(log_similarity_g2(close, 1.0) == 0.0);
  std::vector<Eigen::Vector2d> apart{{0.0, 0.0}, {2.0, 0.0}};
  CHECK(log_similarity_g2(apart, 1.0) == -std::numeric_limits<double>::infinity());
  const Eigen::Vector2d single(3.0, 4.0);
  CHECK(log_similarity_g2({&single, 1}, 1.0) == 0.0);
}

TEST_CASE("g3 singleton at the prior mean keeps |Lambda| fixed") {
  NiwParams niw;
  niw.mu0 = Eigen::Vector2d(1.5, -2.0);
  niw.lambda0 << 2.0, 0.3, 0.3, 1.0;
  ClusterSuffStats stats;
  stats.add(niw.mu0);
  // rank-one terms vanish, so only the constants remain
  const double expected = -std::log(std::numbers::pi) + std::log(niw.kappa0) -
                          std::log(niw.kappa0 + 1.0) +
                          0.5 * niw.nu0 * std::log(niw.lambda0.determinant()) -
                          0.5 * (niw.nu0 + 1.0) * std::log(niw.lambda0.determinant()) +
                          log_mvgamma2(0.5 * (niw.nu0 + 1.0)) - log_mvgamma2(0.5 * niw.nu0);
  CHECK(log_similarity_g3(stats, niw) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("g3 matches the sequential Student-t predictive oracle") {
  Rng rng(2024);
  NiwParams niw;
  niw.mu0 = Eigen::Vector2d(0.2, -0.1);
  niw.kappa0 = 1.3;
  niw.nu0 = 4.5;
  niw.lambda0 << 1.4, 0.2, 0.2, 0.9;
  for (int rep = 0; rep < 25; ++rep) {
    const int n_k = 1 + static_cast<int>(rng.uniform() * 6);
    const auto pts = random_cluster(n_k, rng);
    const double via_closed_form = log_similarity_g3(stats_of(pts), niw);
    const double via_chain_rule = student_t_chain_log_marginal(pts, niw);
    CHECK(via_closed_form == doctest::Approx(via_chain_rule).epsilon(1e-8));
  }
}

TEST_CASE("g3 matches Monte-Carlo integration over the NIW prior") {
  Rng rng(77);
  NiwParams niw;
  niw.mu0 = Eigen::Vector2d(0.0, 0.0);
  niw.kappa0 = 1.0;
  niw.nu0 = 4.0;
  niw.lambda0 = Eigen::Matrix2d::Identity();
  const auto pts = random_cluster(3, rng, 0.8);
  const int n_draws = 200000;
  double acc = 0.0, acc2 = 0.0;
  for (int rep = 0; rep < n_draws; ++rep) {
    const NiwDraw draw = draw_niw(niw.mu0, niw.kappa0, niw.nu0, niw.lambda0, rng);
    double log_prod = 0.0;
    for (const auto& s : pts) log_prod += log_mvn2(s, draw.m, draw.v);
    const double prod = std::exp(log_prod);
    acc += prod;
    acc2 += prod * prod;
  }
  const double mc_mean = acc / n_draws;
  const double mc_se = std::sqrt((acc2 / n_draws - mc_mean * mc_mean) / n_draws);
  const double exact = std::exp(log_similarity_g3(stats_of(pts), niw));
  CHECK(std::abs(mc_mean - exact) < 3.0 * mc_se);
}

TEST_CASE("g4 matches Monte-Carlo integration over the NIW posterior") {
  Rng rng(78);
  NiwParams niw;
  niw.mu0 = Eigen::Vector2d(0.5, 0.5);
  niw.kappa0 = 2.0;
  niw.nu0 = 5.0;
  niw.lambda0 << 1.0, -0.2, -0.2, 1.5;
  const auto pts = random_cluster(4, rng, 0.7);
  const ClusterSuffStats stats = stats_of(pts);

  // posterior hyperparameters, recomputed here from first principles
  const double n_k = static_cast<double>(stats.count);
  const Eigen::Vector2d sbar = stats.centroid();
  const double kappa_n = niw.kappa0 + n_k;
  const double nu_n = niw.nu0 + n_k;
  const Eigen::Vector2d mu_n = (niw.kappa0 * niw.mu0 + n_k * sbar) / kappa_n;
  const Eigen::Vector2d dev = sbar - niw.mu0;
  const Eigen::Matrix2d lambda_n =
      niw.lambda0 + stats.scatter() + (niw.kappa0 * n_k / kappa_n) * (dev * dev.transpose());

  const int n_draws = 200000;
  double acc = 0.0, acc2 = 0.0;
  for (int rep = 0; rep < n_draws; ++rep) {
    const NiwDraw draw = draw_niw(mu_n, kappa_n, nu_n, lambda_n, rng);
    double log_prod = 0.0;
    for (const auto& s : pts) log_prod += log_mvn2(s, draw.m, draw.v);
    const double prod = std::exp(log_prod);
    acc += prod;
    acc2 += prod * prod;
  }
  const double mc_mean = acc / n_draws;
  const double mc_se = std::sqrt((acc2 / n_draws - mc_mean * mc_mean) / n_draws);
  const double exact = std::exp(log_similarity_g4(stats, niw));
  CHECK(std::abs(mc_mean - exact) < 3.0 * mc_se);
}

TEST_CASE("g4 equals the closed-form recomputation with updated hyperparameters") {
  Rng rng(79);
  NiwParams niw;
  niw.mu0 = Eigen::Vector2d(-1.0, 2.0);
  niw.kappa0 = 1.5;
  niw.nu0 = 6.0;
  niw.lambda0 << 2.0, 0.4, 0.4, 3.0;
  for (int rep = 0; rep < 25; ++rep) {
    const auto pts = random_cluster(1 + static_cast<int>(rng.uniform() * 6), rng);
    const ClusterSuffStats stats = stats_of(pts);
    const double n_k = stats.count;
    const Eigen::Vector2d sbar = stats.centroid();
    const Eigen::Vector2d dev = sbar - niw.mu0;
    NiwParams posterior;
    posterior.kappa0 = niw.kappa0 + n_k;
    posterior.nu0 = niw.nu0 + n_k;
    posterior.mu0 = (niw.kappa0 * niw.mu0 + n_k * sbar) / posterior.kappa0;
    posterior.lambda0 = niw.lambda0 + stats.scatter() +
                        (niw.kappa0 * n_k / posterior.kappa0) * (dev * dev.transpose());
    CHECK(log_similarity_g4(stats, niw) ==
          doctest::Approx(log_similarity_g3(stats, posterior)).epsilon(1e-12));
  }
}

TEST_CASE("sufficient statistics are reversible and similarity is exchangeable") {
  Rng rng(11);
  auto pts = random_cluster(5, rng);
  ClusterSuffStats stats = stats_of(pts);
  const ClusterSuffStats before = stats;
  const Eigen::Vector2d extra(0.3, -0.7);
  stats.add(extra);
  stats.remove(extra);
  CHECK(stats.count == before.count);
  CHECK((stats.sum - before.sum).norm() < 1e-12);
  CHECK((stats.outer - before.outer).norm() < 1e-12 * (1.0 + before.outer.norm()));

  NiwParams niw;
  const double g3_forward = log_similarity_g3(stats_of(pts), niw);
  const double g4_forward = log_similarity_g4(stats_of(pts), niw);
  std::reverse(pts.begin(), pts.end());
  std::swap(pts[0], pts[2]);
  CHECK(log_similarity_g3(stats_of(pts), niw) == doctest::Approx(g3_forward).epsilon(1e-12));
  CHECK(log_similarity_g4(stats_of(pts), niw) == doctest::Approx(g4_forward).epsilon(1e-12));
}

TEST_CASE("allocation weights reduce to CRP form without similarity") {
  PartitionPrior prior;
  prior.alpha = 1.9;
  Rng rng(3);
  const auto pts = random_cluster(4, rng);
  const ClusterSuffStats stats = stats_of(pts);
  const Eigen::Vector2d s_i(0.1, 0.1);
  const double loglik = -3.21;
  CHECK(alloc_log_weight_existing(loglik, prior, stats, pts, s_i) ==
        doctest::Approx(loglik + std::log(4.0)).epsilon(1e-12));
  CHECK(alloc_log_weight_new(loglik, prior, s_i, 3) ==
        doctest::Approx(loglik + std::log(1.9) - std::log(3.0)).epsilon(1e-12));
  // K_aux = 1: no correction term
  CHECK(alloc_log_weight_new(loglik, prior, s_i, 1) ==
        doctest::Approx(loglik + std::log(1.9)).epsilon(1e-12));
}

TEST_CASE("allocation weight is -inf past the g2 threshold") {
  PartitionPrior prior;
  prior.similarity = SimilarityKind::G2;
  prior.g2_threshold = 1.0;
  std::vector<Eigen::Vector2d> pts{{0.0, 0.0}, {0.5, 0.0}};
  const ClusterSuffStats stats = stats_of(pts);
  const Eigen::Vector2d far(5.0, 0.0);
  CHECK(alloc_log_weight_existing(0.0, prior, stats, pts, far) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("allocation weights match from-scratch recomputation for every similarity") {
  Rng rng(1234);
  NiwParams niw;
  niw.mu0 = Eigen::Vector2d(0.1, 0.1);
  for (const SimilarityKind kind : {SimilarityKind::None, SimilarityKind::G1, SimilarityKind::G2,
                                    SimilarityKind::G3, SimilarityKind::G4}) {
    for (const CohesionKind cohesion : {CohesionKind::Dp, CohesionKind::FiniteDirichlet}) {
      PartitionPrior prior;
      prior.cohesion = cohesion;
      prior.alpha = 0.8;
      prior.alpha_tilde = 1.4;
      prior.similarity = kind;
      prior.g1_omega = 1.2;
      prior.g2_threshold = 10.0;  // keep clusters feasible
      prior.niw = niw;
      for (int rep = 0; rep < 20; ++rep) {
        auto pts = random_cluster(1 + static_cast<int>(rng.uniform() * 5), rng, 0.5);
        const Eigen::Vector2d s_i(0.5 * rng.normal(), 0.5 * rng.normal());
        const ClusterSuffStats without = stats_of(pts);
        auto with_pts = pts;
        with_pts.push_back(s_i);
        const ClusterSuffStats with = stats_of(with_pts);
        const double expected =
            log_cohesion(prior, with.count) + log_similarity(prior, with, with_pts) -
            log_cohesion(prior, without.count) - log_similarity(prior, without, pts);
        const double got = alloc_log_weight_existing(0.0, prior, without, pts, s_i);
        CHECK(got == doctest::Approx(expected).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("CRP prior draws: base cases") {
  Rng rng(42);
  const Partition one = sample_prior_partition(1, 1.0, rng);
  CHECK(one.alloc == std::vector<int>{1});
  CHECK(one.sizes == std::vector<int>{1});

  int together = 0;
  const int n_draws = 100000;
  for (int rep = 0; rep < n_draws; ++rep) {
    const Partition p = sample_prior_partition(2, 1.0, rng);
    if (p.num_blocks() == 1) ++together;
  }
  const double freq = static_cast<double>(together) / n_draws;
  CHECK(std::abs(freq - 0.5) < 3.0 * std::sqrt(0.25 / n_draws));
}

TEST_CASE("CRP prior matches the EPPF over all partitions of n = 5") {
  Rng rng(4242);
  const int n = 5;
  const int n_draws = 100000;
  std::map<std::vector<int>, int> counts;
  for (int rep = 0; rep < n_draws; ++rep) counts[sample_prior_partition(n, 1.0, rng).alloc]++;

  double stat = 0.0;
  int cells = 0;
  for (const auto& alloc : all_set_partitions(n)) {
    const Partition part = canonicalize(alloc);
    const double expected = n_draws * std::exp(log_eppf_dp(part.sizes, 1.0));
    const auto it = counts.find(part.alloc);
    const double observed = it == counts.end() ? 0.0 : it->second;
    stat += (observed - expected) * (observed - expected) / expected;
    ++cells;
  }
  const double p_value = 1.0 - sppm::testing::chi2_cdf(stat, cells - 1);
  CHECK(p_value > 0.01);
}
