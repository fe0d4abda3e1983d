#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "helpers.hpp"
#include "sppm/io.hpp"
#include "sppm/summary.hpp"

using namespace sppm;
namespace ht = sppm::testing;

namespace {

Partition part(std::initializer_list<int> alloc) { return canonicalize(std::vector<int>(alloc)); }

std::vector<Partition> crp_draws(int n, int count, double alpha, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Partition> draws;
  draws.reserve(static_cast<std::size_t>(count));
  for (int d = 0; d < count; ++d) draws.push_back(sample_prior_partition(n, alpha, rng));
  return draws;
}

double brute_force_min(const std::vector<Partition>& draws, const CoclusterMatrix& cc,
                       LossKind loss) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& alloc : ht::all_set_partitions(cc.n())) {
    const Partition candidate = canonicalize(alloc);
    const double value = loss == LossKind::Binder ? expected_binder(candidate, cc)
                                                  : vi_lower_bound(candidate, cc);
    best = std::min(best, value);
  }
  (void)draws;
  return best;
}

}  // namespace

TEST_CASE("cocluster worked examples") {
  SUBCASE("two draws average the membership indicators") {
    const std::vector<Partition> draws{part({1, 1, 2}), part({1, 2, 2})};
    const CoclusterMatrix cc = cocluster(draws);
    CHECK(cc.p(0, 1) == doctest::Approx(0.5));
    CHECK(cc.p(1, 2) == doctest::Approx(0.5));
    CHECK(cc.p(0, 2) == doctest::Approx(0.0));
    CHECK(cc.p(0, 0) == 1.0);
    CHECK(cc.p == cc.p.transpose().eval());
  }
  SUBCASE("a single draw gives a 0/1 matrix") {
    const std::vector<Partition> draws{part({1, 1, 2, 2})};
    const CoclusterMatrix cc = cocluster(draws);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(cc.p(i, j) == (draws[0].same_block(i, j) ? 1.0 : 0.0));
  }
  CHECK_THROWS_AS(cocluster(std::vector<Partition>{}), std::invalid_argument);
}

TEST_CASE("binder loss worked examples") {
  CHECK(binder_loss(part({1, 1, 2}), part({1, 1, 2})) == 0.0);
  CHECK(binder_loss(part({1, 1}), part({1, 2})) == doctest::Approx(1.0));
  CHECK(binder_loss(part({1, 1, 2, 2}), part({1, 2, 1, 2})) == doctest::Approx(4.0 / 6.0));
  CHECK_THROWS_AS(binder_loss(part({1, 1}), part({1, 1, 2})), std::invalid_argument);
}

TEST_CASE("VI loss worked examples and metric property") {
  CHECK(vi_loss(part({1, 2, 1}), part({1, 2, 1})) == 0.0);
  CHECK(vi_loss(part({1, 1}), part({1, 2})) == doctest::Approx(std::log(2.0)));

  // triangle inequality over all partition triples for n <= 5
  for (int n = 3; n <= 5; ++n) {
    std::vector<Partition> parts;
    for (const auto& alloc : ht::all_set_partitions(n)) parts.push_back(canonicalize(alloc));
    const std::size_t m = parts.size();
    Eigen::MatrixXd d(m, m);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) d(a, b) = vi_loss(parts[a], parts[b]);
    for (std::size_t a = 0; a < m; ++a) {
      CHECK(d(a, a) == 0.0);
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t c = 0; c < m; ++c)
          CHECK(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
    }
  }
}

TEST_CASE("losses are zero iff equal and invariant to label permutation") {
  const Partition a = part({1, 2, 2, 3});
  const Partition b = canonicalize(std::vector<int>{7, 4, 4, 9});  // same blocks, other labels
  CHECK(binder_loss(a, b) == 0.0);
  CHECK(vi_loss(a, b) == 0.0);
  const Partition c = part({1, 2, 2, 2});
  CHECK(binder_loss(a, c) > 0.0);
  CHECK(vi_loss(a, c) > 0.0);
}

TEST_CASE("expected Binder from the cocluster matrix equals the draw average") {
  const std::vector<Partition> draws = crp_draws(7, 40, 1.5, 3);
  const CoclusterMatrix cc = cocluster(draws);
  for (const auto& alloc : ht::all_set_partitions(7)) {
    const Partition candidate = canonicalize(alloc);
    double direct = 0.0;
    for (const auto& d : draws) direct += binder_loss(candidate, d);
    direct /= static_cast<double>(draws.size());
    CHECK(expected_binder(candidate, cc) == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("search returns the shared partition when all draws agree") {
  std::vector<Partition> draws(25, part({1, 1, 2, 2, 3}));
  const CoclusterMatrix cc = cocluster(draws);
  for (const LossKind loss : {LossKind::Binder, LossKind::Vi}) {
    const PointEstimate est = search_point_estimate(draws, cc, loss, SearchConfig{});
    CHECK(est.partition == draws[0]);
    CHECK(est.expected_loss == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("search matches exhaustive minimization for small n") {
  Rng seed_rng(40);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 4 + static_cast<int>(seed_rng.uniform() * 3);  // 4..6
    const auto draws = crp_draws(n, 30, 0.5 + 2.0 * seed_rng.uniform(), 100 + rep);
    const CoclusterMatrix cc = cocluster(draws);
    for (const LossKind loss : {LossKind::Binder, LossKind::Vi}) {
      SearchConfig config;
      config.seed = 17 + rep;
      const PointEstimate est = search_point_estimate(draws, cc, loss, config);
      const double best = brute_force_min(draws, cc, loss);
      CHECK(est.expected_loss == doctest::Approx(best).epsilon(1e-10));
    }
  }
}

TEST_CASE("search never loses to the best single posterior draw") {
  const auto draws = crp_draws(12, 60, 1.0, 55);
  const CoclusterMatrix cc = cocluster(draws);
  for (const LossKind loss : {LossKind::Binder, LossKind::Vi}) {
    const PointEstimate est = search_point_estimate(draws, cc, loss, SearchConfig{});
    for (const auto& d : draws) {
      const double value =
          loss == LossKind::Binder ? expected_binder(d, cc) : vi_lower_bound(d, cc);
      CHECK(est.expected_loss <= value + 1e-12);
    }
  }
}

TEST_CASE("search recovers two well-separated blocks") {
  // noisy draws around a clean 2-block truth
  const Partition truth = part({1, 1, 1, 1, 2, 2, 2, 2});
  Rng rng(60);
  std::vector<Partition> draws;
  for (int d = 0; d < 200; ++d) {
    std::vector<int> alloc = truth.alloc;
    if (rng.uniform() < 0.3) {  // perturb one item
      const int i = static_cast<int>(rng.uniform() * 8);
      alloc[static_cast<std::size_t>(i)] = 1 + static_cast<int>(rng.uniform() * 3);
    }
    draws.push_back(canonicalize(alloc));
  }
  const CoclusterMatrix cc = cocluster(draws);
  for (const LossKind loss : {LossKind::Binder, LossKind::Vi}) {
    const PointEstimate est = search_point_estimate(draws, cc, loss, SearchConfig{});
    CHECK(est.partition == truth);
  }
}

TEST_CASE("exact expected VI agrees with the bound's ordering on identical draws") {
  const std::vector<Partition> draws(10, part({1, 1, 2}));
  CHECK(expected_vi_exact(part({1, 1, 2}), draws) == doctest::Approx(0.0));
  CHECK(expected_vi_exact(part({1, 1, 1}), draws) > 0.0);
}

TEST_CASE("quantile interpolation") {
  const std::vector<double> two{1.0, 3.0};
  CHECK(quantile_sorted(two, 0.25) == doctest::Approx(1.5));
  CHECK(quantile_sorted(two, 0.75) == doctest::Approx(2.5));
  CHECK(quantile_sorted(two, 0.0) == doctest::Approx(1.0));
  CHECK(quantile_sorted(two, 1.0) == doctest::Approx(3.0));
  const std::vector<double> one{4.2};
  CHECK(quantile_sorted(one, 0.9) == doctest::Approx(4.2));
}

TEST_CASE("conditional re-estimation recovers a single shared atom") {
  SyntheticSpec spec;
  spec.t_len = 500;
  spec.seed = 9;
  spec.clusters = {SyntheticCluster{6, 0.7, 0.8, Eigen::Vector2d(9.0, 45.0), 0.2}};
  spec.beta = Eigen::VectorXd::Zero(4);
  spec.sigma2 = 0.5;
  const SyntheticData synth = generate_synthetic(spec);
  const DesignMatrix design = build_seasonal_design(synth.data.time_index);

  Hyperparams hyper;
  ChainConfig config;
  config.n_iter = 1500;
  config.burn_in = 500;
  config.seed = 12;
  const ConditionalEstimate est =
      conditional_reestimate(synth.data, design, hyper, synth.truth, config);
  REQUIRE(est.clusters.size() == 1);
  CHECK(est.clusters[0].size == 6);
  CHECK(est.clusters[0].phi_lo <= 0.7);
  CHECK(est.clusters[0].phi_hi >= 0.7);
  CHECK(est.clusters[0].tau2_lo <= 0.8);
  CHECK(est.clusters[0].tau2_hi >= 0.8);
  CHECK(std::abs(est.clusters[0].phi_mean - 0.7) < 0.1);
}

TEST_CASE("conditional re-estimation on singletons mirrors the no-clustering model") {
  SyntheticSpec spec;
  spec.t_len = 60;
  spec.seed = 10;
  spec.clusters = {SyntheticCluster{4, 0.5, 1.0, Eigen::Vector2d(0.0, 0.0), 0.3}};
  const SyntheticData synth = generate_synthetic(spec);
  const DesignMatrix design = build_seasonal_design(synth.data.time_index);
  std::vector<int> singles{1, 2, 3, 4};
  Hyperparams hyper;
  ChainConfig config;
  config.n_iter = 200;
  config.burn_in = 100;
  const ConditionalEstimate est =
      conditional_reestimate(synth.data, design, hyper, canonicalize(singles), config);
  CHECK(est.clusters.size() == 4);  // atoms count equals K of the supplied partition
  for (const auto& cl : est.clusters) CHECK(cl.size == 1);
}

TEST_CASE("within-cluster averaging and the last-draw snapshot") {
  SyntheticSpec spec;
  spec.t_len = 40;
  spec.seed = 11;
  spec.clusters = {SyntheticCluster{2, 0.6, 1.0, Eigen::Vector2d(0.0, 0.0), 0.2},
                   SyntheticCluster{2, 0.3, 0.5, Eigen::Vector2d(3.0, 3.0), 0.2}};
  const SyntheticData synth = generate_synthetic(spec);
  const DesignMatrix design = build_seasonal_design(synth.data.time_index);
  Hyperparams hyper;
  ChainConfig config;
  config.n_iter = 300;
  config.burn_in = 100;
  GibbsSampler sampler(synth.data, design, hyper, config);
  const PosteriorDraws draws = sampler.run();

  const auto averages = average_within_clusters(draws, synth.truth);
  REQUIRE(averages.size() == 2);
  CHECK(averages[0].size == 2);
  for (const auto& cell : averages) {
    CHECK(cell.phi > 0.0);
    CHECK(cell.phi < 1.0);
    CHECK(cell.tau2 > 0.0);
  }

  const DrawRecord& last = last_draw_snapshot(draws);
  CHECK(last.iteration == config.n_iter - 1);
}
