#include "sppm/summary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace sppm {

namespace {

// contingency counts n_ij between two partitions
Eigen::MatrixXi contingency(const Partition& p1, const Partition& p2) {
  Eigen::MatrixXi table = Eigen::MatrixXi::Zero(p1.num_blocks(), p2.num_blocks());
  for (int i = 0; i < p1.size(); ++i) ++table(p1.alloc[i] - 1, p2.alloc[i] - 1);
  return table;
}

double pairs_of(double m) { return 0.5 * m * (m - 1.0); }

void require_same_n(const Partition& p1, const Partition& p2) {
  if (p1.size() != p2.size())
    throw std::invalid_argument("partition loss: size mismatch");
  if (p1.size() == 0) throw std::invalid_argument("partition loss: empty partitions");
}

}  // namespace

CoclusterMatrix cocluster(std::span<const Partition> draws) {
  if (draws.empty()) throw std::invalid_argument("cocluster: empty draw list");
  const int n = draws.front().size();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  std::vector<std::vector<int>> blocks;
  for (const Partition& part : draws) {
    if (part.size() != n) throw std::invalid_argument("cocluster: inconsistent draw sizes");
    blocks.assign(static_cast<std::size_t>(part.num_blocks()), {});
    for (int i = 0; i < n; ++i) blocks[static_cast<std::size_t>(part.alloc[i] - 1)].push_back(i);
    for (const auto& block : blocks) {
      for (std::size_t a = 0; a < block.size(); ++a) {
        for (std::size_t b = a + 1; b < block.size(); ++b) {
          acc(block[a], block[b]) += 1.0;
          acc(block[b], block[a]) += 1.0;
        }
      }
    }
  }
  CoclusterMatrix cc;
  cc.p = acc / static_cast<double>(draws.size());
  cc.p.diagonal().setOnes();
  return cc;
}

double binder_loss(const Partition& p1, const Partition& p2) {
  require_same_n(p1, p2);
  const double n = p1.size();
  if (n < 2) return 0.0;
  const Eigen::MatrixXi table = contingency(p1, p2);
  double together1 = 0.0, together2 = 0.0, together_both = 0.0;
  for (int s : p1.sizes) together1 += pairs_of(s);
  for (int s : p2.sizes) together2 += pairs_of(s);
  for (int a = 0; a < table.rows(); ++a)
    for (int b = 0; b < table.cols(); ++b) together_both += pairs_of(table(a, b));
  // discordant pairs: together in exactly one of the two partitions
  const double discordant = together1 + together2 - 2.0 * together_both;
  return discordant / pairs_of(n);
}

double vi_loss(const Partition& p1, const Partition& p2) {
  require_same_n(p1, p2);
  const double n = p1.size();
  const Eigen::MatrixXi table = contingency(p1, p2);
  double h1 = 0.0, h2 = 0.0, mi = 0.0;
  for (int s : p1.sizes) h1 -= s / n * std::log(s / n);
  for (int s : p2.sizes) h2 -= s / n * std::log(s / n);
  for (int a = 0; a < table.rows(); ++a) {
    for (int b = 0; b < table.cols(); ++b) {
      const double nab = table(a, b);
      if (nab > 0.0)
        mi += nab / n * std::log(nab * n / (static_cast<double>(p1.sizes[a]) * p2.sizes[b]));
    }
  }
  return std::max(0.0, h1 + h2 - 2.0 * mi);
}

double expected_binder(const Partition& candidate, const CoclusterMatrix& cc) {
  const int n = candidate.size();
  if (cc.n() != n) throw std::invalid_argument("expected_binder: size mismatch");
  if (n < 2) return 0.0;
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double pij = cc.p(i, j);
      loss += candidate.same_block(i, j) ? (1.0 - pij) : pij;
    }
  }
  return loss / pairs_of(static_cast<double>(n));
}

double vi_lower_bound(const Partition& candidate, const CoclusterMatrix& cc) {
  const int n = candidate.size();
  if (cc.n() != n) throw std::invalid_argument("vi_lower_bound: size mismatch");
  double value = 0.0;
  for (int i = 0; i < n; ++i) {
    double in_block = 0.0;
    for (int j = 0; j < n; ++j) {
      if (candidate.alloc[j] == candidate.alloc[i]) in_block += cc.p(i, j);
    }
    value += std::log(static_cast<double>(candidate.sizes[candidate.alloc[i] - 1])) +
             std::log(cc.p.row(i).sum()) - 2.0 * std::log(in_block);
  }
  return value / n;
}

double expected_vi_exact(const Partition& candidate, std::span<const Partition> draws) {
  if (draws.empty()) throw std::invalid_argument("expected_vi_exact: empty draw list");
  double acc = 0.0;
  for (const Partition& d : draws) acc += vi_loss(candidate, d);
  return acc / static_cast<double>(draws.size());
}

namespace {

// Greedy reassignment state over the co-clustering matrix. Blocks are kept
// as index lists; block_of uses -1-free compact ids. For the VI bound the
// within-block probability sums r_i are maintained incrementally.
class GreedyState {
 public:
  GreedyState(const Eigen::MatrixXd& p, LossKind loss, std::vector<int> block_of_init)
      : p_(p), loss_(loss), n_(static_cast<int>(p.rows())), block_of_(std::move(block_of_init)) {
    const int k = 1 + *std::max_element(block_of_.begin(), block_of_.end());
    blocks_.assign(static_cast<std::size_t>(k), {});
    for (int i = 0; i < n_; ++i) blocks_[static_cast<std::size_t>(block_of_[i])].push_back(i);
    if (loss_ == LossKind::Vi) {
      r_.assign(static_cast<std::size_t>(n_), 0.0);
      for (int i = 0; i < n_; ++i) {
        double acc = 0.0;
        for (int j : blocks_[static_cast<std::size_t>(block_of_[i])]) acc += p_(i, j);
        r_[static_cast<std::size_t>(i)] = acc;
      }
    }
  }

  // objective delta of moving item i to `target` (block id, or -1 for a new
  // singleton); returns 0 for a no-op move
  double move_delta(int i, int target) const {
    const int source = block_of_[i];
    if (target == source) return 0.0;
    if (loss_ == LossKind::Binder) {
      double delta = 0.0;
      if (target >= 0) {
        for (int j : blocks_[static_cast<std::size_t>(target)]) delta += 1.0 - 2.0 * p_(i, j);
      }
      for (int j : blocks_[static_cast<std::size_t>(source)]) {
        if (j != i) delta -= 1.0 - 2.0 * p_(i, j);
      }
      return delta / pairs_of(static_cast<double>(n_));
    }
    // VI lower bound
    const auto& src = blocks_[static_cast<std::size_t>(source)];
    const double a = static_cast<double>(src.size());
    if (a == 1.0 && target < 0) return 0.0;  // singleton to singleton
    double delta = 0.0;
    for (int j : src) {
      if (j == i) continue;
      delta += std::log(a - 1.0) - std::log(a) -
               2.0 * (std::log(r_[static_cast<std::size_t>(j)] - p_(i, j)) -
                      std::log(r_[static_cast<std::size_t>(j)]));
    }
    double b = 0.0;
    double r_i_new = p_(i, i);
    if (target >= 0) {
      const auto& dst = blocks_[static_cast<std::size_t>(target)];
      b = static_cast<double>(dst.size());
      for (int j : dst) {
        delta += std::log(b + 1.0) - std::log(b) -
                 2.0 * (std::log(r_[static_cast<std::size_t>(j)] + p_(i, j)) -
                        std::log(r_[static_cast<std::size_t>(j)]));
        r_i_new += p_(i, j);
      }
    }
    delta += std::log(b + 1.0) - std::log(a);
    delta -= 2.0 * (std::log(r_i_new) - std::log(r_[static_cast<std::size_t>(i)]));
    return delta / n_;
  }

  void commit_move(int i, int target) {
    const int source = block_of_[i];
    if (target == source) return;
    auto& src = blocks_[static_cast<std::size_t>(source)];
    src.erase(std::find(src.begin(), src.end(), i));
    if (loss_ == LossKind::Vi) {
      for (int j : src) r_[static_cast<std::size_t>(j)] -= p_(i, j);
    }
    if (target < 0) {
      target = static_cast<int>(blocks_.size());
      blocks_.emplace_back();
    }
    auto& dst = blocks_[static_cast<std::size_t>(target)];
    if (loss_ == LossKind::Vi) {
      double r_i = p_(i, i);
      for (int j : dst) {
        r_[static_cast<std::size_t>(j)] += p_(i, j);
        r_i += p_(i, j);
      }
      r_[static_cast<std::size_t>(i)] = r_i;
    }
    dst.push_back(i);
    block_of_[i] = target;
    if (src.empty()) drop_block(source);
  }

  int num_blocks() const {
    int k = 0;
    for (const auto& blk : blocks_) k += blk.empty() ? 0 : 1;
    return k;
  }
  const std::vector<std::vector<int>>& blocks() const { return blocks_; }
  const std::vector<int>& block_of() const { return block_of_; }

  Partition to_partition() const { return canonicalize(block_of_); }

 private:
  void drop_block(int dead) {
    const int last = static_cast<int>(blocks_.size()) - 1;
    if (dead != last) {
      blocks_[static_cast<std::size_t>(dead)] = std::move(blocks_[static_cast<std::size_t>(last)]);
      for (int j : blocks_[static_cast<std::size_t>(dead)]) block_of_[j] = dead;
    }
    blocks_.pop_back();
  }

  const Eigen::MatrixXd& p_;
  LossKind loss_;
  int n_;
  std::vector<int> block_of_;
  std::vector<std::vector<int>> blocks_;
  std::vector<double> r_;
};

double evaluate(const Partition& part, const CoclusterMatrix& cc, LossKind loss) {
  return loss == LossKind::Binder ? expected_binder(part, cc) : vi_lower_bound(part, cc);
}

void shuffle_order(std::vector<int>& order, Rng& rng) {
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(std::min(j, i))]);
  }
}

}  // namespace

PointEstimate search_point_estimate(std::span<const Partition> draws, const CoclusterMatrix& cc,
                                    LossKind loss, const SearchConfig& config) {
  if (draws.empty()) throw std::invalid_argument("search_point_estimate: empty draw list");
  const int n = cc.n();
  Rng rng(Rng::derive_seed(config.seed, 0x5ea7c4, 0));

  PointEstimate best;
  best.loss = loss;
  best.expected_loss = std::numeric_limits<double>::infinity();
  const auto offer = [&](const Partition& part, double value) {
    if (value < best.expected_loss - 1e-12 ||
        (std::abs(value - best.expected_loss) <= 1e-12 && part.alloc < best.partition.alloc)) {
      best.partition = part;
      best.expected_loss = value;
    }
  };

  // every distinct posterior draw is a candidate as-is
  std::map<std::vector<int>, double> seen;
  for (const Partition& d : draws) {
    auto [it, inserted] = seen.try_emplace(d.alloc, 0.0);
    if (inserted) {
      it->second = evaluate(d, cc, loss);
      offer(d, it->second);
    }
  }

  int total_sweeps = 0;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int restart = 0; restart < config.restarts; ++restart) {
    std::vector<int> init(static_cast<std::size_t>(n), 0);
    if (restart == 0) {
      std::iota(init.begin(), init.end(), 0);  // all singletons
    } else {
      const auto& seed_draw = draws[static_cast<std::size_t>(rng.uniform() * draws.size())];
      for (int i = 0; i < n; ++i) init[static_cast<std::size_t>(i)] = seed_draw.alloc[i] - 1;
    }
    GreedyState gs(cc.p, loss, std::move(init));
    for (int s = 0; s < config.max_sweeps; ++s) {
      ++total_sweeps;
      bool moved = false;
      shuffle_order(order, rng);
      for (int i : order) {
        const int n_blocks = static_cast<int>(gs.blocks().size());
        int best_target = gs.block_of()[static_cast<std::size_t>(i)];
        double best_delta = 0.0;
        for (int b = -1; b < n_blocks; ++b) {
          if (b >= 0 && gs.blocks()[static_cast<std::size_t>(b)].empty()) continue;
          const double delta = gs.move_delta(i, b);
          if (delta < best_delta - 1e-12) {
            best_delta = delta;
            best_target = b;
          }
        }
        if (best_target != gs.block_of()[static_cast<std::size_t>(i)]) {
          gs.commit_move(i, best_target);
          moved = true;
        }
      }
      if (!moved) break;
    }
    const Partition result = gs.to_partition();
    offer(result, evaluate(result, cc, loss));
  }

  best.restarts = config.restarts;
  best.total_sweeps = total_sweeps;
  return best;
}

ConditionalEstimate conditional_reestimate(const Dataset& data, const DesignMatrix& design,
                                           const Hyperparams& hyper, const Partition& partition,
                                           const ChainConfig& config) {
  GibbsSampler sampler(data, design, hyper, config);
  sampler.fix_partition(partition);
  const Partition canon = sampler.current_partition();
  const int k_count = canon.num_blocks();

  std::vector<std::vector<double>> phi_draws(static_cast<std::size_t>(k_count));
  std::vector<std::vector<double>> tau2_draws(static_cast<std::size_t>(k_count));
  Eigen::MatrixXd beta_acc = Eigen::MatrixXd::Zero(design.p(), data.n());
  Eigen::VectorXd sigma2_acc = Eigen::VectorXd::Zero(data.n());
  long retained = 0;

  sampler.run([&](const ChainState& st, int) {
    for (int k = 0; k < k_count; ++k) {
      phi_draws[static_cast<std::size_t>(k)].push_back(st.atoms[static_cast<std::size_t>(k)].phi);
      tau2_draws[static_cast<std::size_t>(k)].push_back(st.atoms[static_cast<std::size_t>(k)].tau2);
    }
    beta_acc += st.beta;
    sigma2_acc += st.sigma2;
    ++retained;
  });

  ConditionalEstimate out;
  out.partition = canon;
  out.beta_mean = beta_acc / static_cast<double>(retained);
  out.sigma2_mean = sigma2_acc / static_cast<double>(retained);
  out.phi_accept_rate = sampler.phi_acceptance_rate();
  out.clusters.resize(static_cast<std::size_t>(k_count));
  for (int k = 0; k < k_count; ++k) {
    auto& summary = out.clusters[static_cast<std::size_t>(k)];
    summary.size = canon.sizes[static_cast<std::size_t>(k)];
    auto& phis = phi_draws[static_cast<std::size_t>(k)];
    auto& tau2s = tau2_draws[static_cast<std::size_t>(k)];
    std::sort(phis.begin(), phis.end());
    std::sort(tau2s.begin(), tau2s.end());
    summary.phi_mean = std::accumulate(phis.begin(), phis.end(), 0.0) / phis.size();
    summary.tau2_mean = std::accumulate(tau2s.begin(), tau2s.end(), 0.0) / tau2s.size();
    summary.phi_lo = quantile_sorted(phis, 0.025);
    summary.phi_hi = quantile_sorted(phis, 0.975);
    summary.tau2_lo = quantile_sorted(tau2s, 0.025);
    summary.tau2_hi = quantile_sorted(tau2s, 0.975);
  }
  return out;
}

std::vector<ClusterAtomAverage> average_within_clusters(const PosteriorDraws& draws,
                                                        const Partition& partition) {
  if (draws.draws.empty()) throw std::invalid_argument("average_within_clusters: no draws");
  const int n = partition.size();
  Eigen::VectorXd phi_mean = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd tau2_mean = Eigen::VectorXd::Zero(n);
  for (const DrawRecord& rec : draws.draws) {
    for (int i = 0; i < n; ++i) {
      const Ar1Params& atom = rec.atoms[static_cast<std::size_t>(rec.partition.alloc[i] - 1)];
      phi_mean(i) += atom.phi;
      tau2_mean(i) += atom.tau2;
    }
  }
  phi_mean /= static_cast<double>(draws.draws.size());
  tau2_mean /= static_cast<double>(draws.draws.size());

  std::vector<ClusterAtomAverage> out(static_cast<std::size_t>(partition.num_blocks()));
  for (int i = 0; i < n; ++i) {
    auto& cell = out[static_cast<std::size_t>(partition.alloc[i] - 1)];
    ++cell.size;
    cell.phi += phi_mean(i);
    cell.tau2 += tau2_mean(i);
  }
  for (auto& cell : out) {
    cell.phi /= cell.size;
    cell.tau2 /= cell.size;
  }
  return out;
}

const DrawRecord& last_draw_snapshot(const PosteriorDraws& draws) {
  if (draws.draws.empty()) throw std::invalid_argument("last_draw_snapshot: no draws");
  return draws.draws.back();
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile_sorted: empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}

}  // namespace sppm
