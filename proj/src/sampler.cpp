#include "sppm/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <thread>

namespace sppm {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kMhTargetAcceptance = 0.3;
}  // namespace

void ChainConfig::validate() const {
  if (n_iter < 1) throw std::invalid_argument("ChainConfig: n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter)
    throw std::invalid_argument("ChainConfig: burn_in must satisfy 0 <= burn_in < n_iter");
  if (thin < 1) throw std::invalid_argument("ChainConfig: thin must be at least 1");
  if (!(mh_step_phi > 0.0)) throw std::invalid_argument("ChainConfig: mh_step_phi must be positive");
}

MvnParams beta_full_conditional(const Eigen::Ref<const Eigen::VectorXd>& y_i,
                                const Eigen::MatrixXd& z, double sigma2, const Ar1Params& atom,
                                const Eigen::Ref<const Eigen::VectorXd>& zeta2) {
  const int p = static_cast<int>(z.cols());
  Eigen::MatrixXd qinv_z(z.rows(), p);
  for (int j = 0; j < p; ++j) qinv_z.col(j) = marginal_solve(z.col(j), sigma2, atom);
  Eigen::MatrixXd v_inv = z.transpose() * qinv_z;
  v_inv = 0.5 * (v_inv + v_inv.transpose()).eval();
  for (int j = 0; j < p; ++j) v_inv(j, j) += 1.0 / zeta2(j);
  const Eigen::VectorXd rhs = z.transpose() * marginal_solve(y_i, sigma2, atom);
  const Eigen::LLT<Eigen::MatrixXd> llt(v_inv);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("beta_full_conditional: precision not positive-definite");
  MvnParams out;
  out.mean = llt.solve(rhs);
  out.cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  return out;
}

SymTridiag w_full_conditional_precision(int t_len, double sigma2, const Ar1Params& atom) {
  SymTridiag prec = ar1_precision(t_len, atom);
  prec.diag.array() += 1.0 / sigma2;
  return prec;
}

double phi_logit_log_target(double logit_phi, double a_phi, double b_phi) {
  // (a-1) log phi + (b-1) log(1-phi) plus the Jacobian log phi + log(1-phi)
  const double log_phi = -std::log1p(std::exp(-logit_phi));
  const double log_1mphi = -std::log1p(std::exp(logit_phi));
  return a_phi * log_phi + b_phi * log_1mphi;
}

GibbsSampler::GibbsSampler(Dataset data, DesignMatrix design, Hyperparams hyper, ChainConfig config)
    : data_(std::move(data)),
      design_(std::move(design)),
      hyper_(hyper),
      config_(config),
      state_{} {
  data_.validate();
  hyper_.validate();
  config_.validate();
  if (design_.t_len() != data_.t_len())
    throw std::invalid_argument("GibbsSampler: design matrix rows must match series length");
  const int n = data_.n();
  const int t_len = data_.t_len();
  const int p = design_.p();

  state_.rng = Rng(Rng::derive_seed(config_.seed, 0, 0));
  state_.beta = Eigen::MatrixXd::Zero(p, n);
  state_.w = Eigen::MatrixXd::Zero(t_len, n);
  state_.sigma2 = Eigen::VectorXd::Ones(n);
  state_.zeta2 = Eigen::VectorXd::Ones(p);
  state_.alpha = hyper_.alpha_random ? hyper_.a_alpha / hyper_.b_alpha : hyper_.alpha;
  state_.alloc.resize(n);
  state_.atoms.resize(n);
  for (int i = 0; i < n; ++i) {
    state_.alloc[i] = i + 1;
    state_.atoms[i] = draw_atom_from_p0(state_.rng);
  }
  log_step_ = std::log(config_.mh_step_phi);
  rebuild_cluster_index();
}

Ar1Params GibbsSampler::draw_atom_from_p0(Rng& rng) const {
  Ar1Params atom;
  do {
    atom.phi = rng.beta(hyper_.a_phi, hyper_.b_phi);
  } while (atom.phi < kPhiGuard || atom.phi > 1.0 - kPhiGuard);
  atom.tau2 = rng.inv_gamma(hyper_.a_tau, hyper_.b_tau);
  return atom;
}

void GibbsSampler::fix_partition(const Partition& partition) {
  if (partition.size() != data_.n())
    throw std::invalid_argument("fix_partition: partition size must match station count");
  const Partition canon = canonicalize(partition.alloc);
  state_.alloc = canon.alloc;
  state_.atoms.resize(canon.num_blocks());
  for (auto& atom : state_.atoms) atom = draw_atom_from_p0(state_.rng);
  mode_ = PartitionMode::Fixed;
  rebuild_cluster_index();
}

void GibbsSampler::fix_singletons() {
  const int n = data_.n();
  state_.alloc.resize(n);
  state_.atoms.resize(n);
  for (int i = 0; i < n; ++i) {
    state_.alloc[i] = i + 1;
    state_.atoms[i] = draw_atom_from_p0(state_.rng);
  }
  mode_ = PartitionMode::Singletons;
  rebuild_cluster_index();
}

void GibbsSampler::rebuild_cluster_index() {
  const int n = data_.n();
  const int k_count = static_cast<int>(state_.atoms.size());
  members_.assign(k_count, {});
  member_xy_.assign(k_count, {});
  stats_.assign(k_count, ClusterSuffStats{});
  for (int i = 0; i < n; ++i) {
    const int k = state_.alloc[i] - 1;
    if (k < 0 || k >= k_count)
      throw std::runtime_error("rebuild_cluster_index: allocation label without an atom");
    members_[k].push_back(i);
    member_xy_[k].push_back(coord(i));
    stats_[k].add(coord(i));
  }
  for (int k = 0; k < k_count; ++k) {
    if (members_[k].empty()) throw std::runtime_error("rebuild_cluster_index: empty cluster");
  }
}

Partition GibbsSampler::current_partition() const {
  Partition part;
  part.alloc = state_.alloc;
  part.sizes.resize(members_.size());
  for (std::size_t k = 0; k < members_.size(); ++k)
    part.sizes[k] = static_cast<int>(members_[k].size());
  return part;
}

double GibbsSampler::safe_loglik(const Eigen::Ref<const Eigen::VectorXd>& w_i,
                                 const Ar1Params& atom) const {
  const double ll = loglik_w(w_i, atom);
  if (!std::isfinite(ll)) {
    std::cerr << "sppm: non-finite allocation likelihood (phi=" << atom.phi
              << ", tau2=" << atom.tau2 << "), weight dropped\n";
    return kNegInf;
  }
  return ll;
}

void GibbsSampler::update_beta(int i, Rng& rng) {
  const Ar1Params atom = state_.atoms[static_cast<std::size_t>(state_.alloc[i] - 1)];
  const Eigen::MatrixXd& z = design_.Z;
  const int p = design_.p();
  Eigen::MatrixXd qinv_z(z.rows(), p);
  for (int j = 0; j < p; ++j) qinv_z.col(j) = marginal_solve(z.col(j), state_.sigma2(i), atom);
  Eigen::MatrixXd v_inv = z.transpose() * qinv_z;
  v_inv = 0.5 * (v_inv + v_inv.transpose()).eval();
  for (int j = 0; j < p; ++j) v_inv(j, j) += 1.0 / state_.zeta2(j);
  const Eigen::VectorXd rhs = z.transpose() * marginal_solve(data_.y.col(i), state_.sigma2(i), atom);
  const Eigen::LLT<Eigen::MatrixXd> llt(v_inv);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("update_beta: precision not positive-definite");
  Eigen::VectorXd noise(p);
  for (int j = 0; j < p; ++j) noise(j) = rng.normal();
  state_.beta.col(i) =
      llt.solve(rhs) + llt.matrixU().solve(noise);  // mean + L^{-T} z
}

void GibbsSampler::update_w(int i, Rng& rng) {
  const Ar1Params atom = state_.atoms[static_cast<std::size_t>(state_.alloc[i] - 1)];
  const Eigen::VectorXd mu_raw =
      (data_.y.col(i) - design_.Z * state_.beta.col(i)) / state_.sigma2(i);
  state_.w.col(i) = sample_w(mu_raw, state_.sigma2(i), atom, rng);
}

void GibbsSampler::update_sigma2(int i, Rng& rng) {
  const Eigen::VectorXd resid = data_.y.col(i) - design_.Z * state_.beta.col(i) - state_.w.col(i);
  const IgParams ig = sigma2_full_conditional(resid, hyper_.a_sigma, hyper_.b_sigma);
  state_.sigma2(i) = rng.inv_gamma(ig.shape, ig.scale);
}

void GibbsSampler::update_zeta2(int l) {
  const IgParams ig = zeta2_full_conditional(state_.beta.row(l), hyper_.a_zeta, hyper_.b_zeta);
  state_.zeta2(l) = state_.rng.inv_gamma(ig.shape, ig.scale);
}

void GibbsSampler::update_allocations() {
  const int n = data_.n();
  const int k_aux = hyper_.k_aux;
  const PartitionPrior prior = partition_prior();
  std::vector<Ar1Params> aux(static_cast<std::size_t>(k_aux));
  std::vector<double> logw;

  for (int i = 0; i < n; ++i) {
    const int k_i = state_.alloc[i] - 1;
    const Eigen::Vector2d s_i = coord(i);
    const bool was_singleton = members_[static_cast<std::size_t>(k_i)].size() == 1;

    if (was_singleton) {
      // the vacated atom is recycled as the first auxiliary
      aux[0] = state_.atoms[static_cast<std::size_t>(k_i)];
      for (int m = 1; m < k_aux; ++m) aux[static_cast<std::size_t>(m)] = draw_atom_from_p0(state_.rng);
      state_.atoms.erase(state_.atoms.begin() + k_i);
      members_.erase(members_.begin() + k_i);
      member_xy_.erase(member_xy_.begin() + k_i);
      stats_.erase(stats_.begin() + k_i);
      for (int j = 0; j < n; ++j) {
        if (state_.alloc[j] > k_i + 1) --state_.alloc[j];
      }
    } else {
      auto& mem = members_[static_cast<std::size_t>(k_i)];
      const auto pos = std::find(mem.begin(), mem.end(), i);
      const auto offset = pos - mem.begin();
      mem.erase(pos);
      auto& xy = member_xy_[static_cast<std::size_t>(k_i)];
      xy.erase(xy.begin() + offset);
      stats_[static_cast<std::size_t>(k_i)].remove(s_i);
      for (int m = 0; m < k_aux; ++m) aux[static_cast<std::size_t>(m)] = draw_atom_from_p0(state_.rng);
    }
    state_.alloc[i] = 0;

    const int k_existing = static_cast<int>(state_.atoms.size());
    logw.resize(static_cast<std::size_t>(k_existing + k_aux));
    for (int k = 0; k < k_existing; ++k) {
      const double ll =
          config_.likelihood_disabled ? 0.0 : safe_loglik(state_.w.col(i), state_.atoms[static_cast<std::size_t>(k)]);
      logw[static_cast<std::size_t>(k)] =
          alloc_log_weight_existing(ll, prior, stats_[static_cast<std::size_t>(k)],
                                    member_xy_[static_cast<std::size_t>(k)], s_i);
    }
    for (int m = 0; m < k_aux; ++m) {
      const double ll =
          config_.likelihood_disabled ? 0.0 : safe_loglik(state_.w.col(i), aux[static_cast<std::size_t>(m)]);
      logw[static_cast<std::size_t>(k_existing + m)] = alloc_log_weight_new(ll, prior, s_i, k_aux);
    }

    const int pick = state_.rng.categorical_from_log_weights(logw);
    if (pick < k_existing) {
      state_.alloc[i] = pick + 1;
      members_[static_cast<std::size_t>(pick)].push_back(i);
      member_xy_[static_cast<std::size_t>(pick)].push_back(s_i);
      stats_[static_cast<std::size_t>(pick)].add(s_i);
    } else {
      state_.atoms.push_back(aux[static_cast<std::size_t>(pick - k_existing)]);
      members_.push_back({i});
      member_xy_.push_back({s_i});
      ClusterSuffStats stats;
      stats.add(s_i);
      stats_.push_back(stats);
      state_.alloc[i] = static_cast<int>(state_.atoms.size());
    }
  }

  canonicalize_state();
  std::size_t total = 0;
  for (const auto& mem : members_) {
    if (mem.empty()) throw std::runtime_error("update_allocations: empty cluster after sweep");
    total += mem.size();
  }
  if (total != static_cast<std::size_t>(n))
    throw std::runtime_error("update_allocations: membership count mismatch");
}

bool GibbsSampler::update_phi(int k) {
  const auto ku = static_cast<std::size_t>(k);
  const double phi = state_.atoms[ku].phi;
  const double tau2 = state_.atoms[ku].tau2;
  const double eta = std::log(phi) - std::log1p(-phi);
  const double eta_prop = eta + std::exp(log_step_) * state_.rng.normal();
  const double phi_prop = 1.0 / (1.0 + std::exp(-eta_prop));
  ++phi_proposed_;
  bool accepted = false;
  if (phi_prop >= kPhiGuard && phi_prop <= 1.0 - kPhiGuard) {
    double log_target = phi_logit_log_target(eta, hyper_.a_phi, hyper_.b_phi);
    double log_target_prop = phi_logit_log_target(eta_prop, hyper_.a_phi, hyper_.b_phi);
    if (!config_.likelihood_disabled) {
      const Ar1Params current{phi, tau2};
      const Ar1Params proposal{phi_prop, tau2};
      for (int i : members_[ku]) {
        log_target += loglik_w(state_.w.col(i), current);
        log_target_prop += loglik_w(state_.w.col(i), proposal);
      }
    }
    const double log_ratio = log_target_prop - log_target;
    if (log_ratio >= 0.0 || std::log(state_.rng.uniform()) < log_ratio) {
      state_.atoms[ku].phi = phi_prop;
      accepted = true;
    }
  }
  if (accepted) ++phi_accepted_;
  if (adapting_) {
    ++adapt_count_;
    const double gain = 1.0 / std::pow(static_cast<double>(adapt_count_), 0.6);
    log_step_ += gain * ((accepted ? 1.0 : 0.0) - kMhTargetAcceptance);
    log_step_ = std::clamp(log_step_, std::log(1e-3), std::log(50.0));
  }
  return accepted;
}

void GibbsSampler::update_tau2(int k) {
  const auto ku = static_cast<std::size_t>(k);
  if (config_.likelihood_disabled) {
    state_.atoms[ku].tau2 = state_.rng.inv_gamma(hyper_.a_tau, hyper_.b_tau);
    return;
  }
  const Ar1Params unit_tau{state_.atoms[ku].phi, 1.0};
  double quad_sum = 0.0;
  for (int i : members_[ku]) quad_sum += quad_form(state_.w.col(i), unit_tau);
  const IgParams ig = tau2_full_conditional(quad_sum, static_cast<int>(members_[ku].size()),
                                            data_.t_len(), hyper_.a_tau, hyper_.b_tau);
  state_.atoms[ku].tau2 = state_.rng.inv_gamma(ig.shape, ig.scale);
}

void GibbsSampler::update_alpha() {
  if (hyper_.similarity != SimilarityKind::None)
    throw std::logic_error("update_alpha: alpha is fixed when a similarity function is active");
  const double n = static_cast<double>(data_.n());
  const double k_count = static_cast<double>(state_.atoms.size());
  // auxiliary eta ~ Beta(alpha + 1, n), then the two-Gamma mixture
  const double eta = state_.rng.beta(state_.alpha + 1.0, n);
  const double rate = hyper_.b_alpha - std::log(eta);
  const double odds_num = hyper_.a_alpha + k_count - 1.0;
  const double w1 = odds_num / (odds_num + n * rate);
  const double shape =
      state_.rng.uniform() < w1 ? hyper_.a_alpha + k_count : hyper_.a_alpha + k_count - 1.0;
  state_.alpha = state_.rng.gamma_rate(shape, rate);
}

void GibbsSampler::resample_observations() {
  const int n = data_.n();
  const int t_len = data_.t_len();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd mean = design_.Z * state_.beta.col(i) + state_.w.col(i);
    const double sd = std::sqrt(state_.sigma2(i));
    for (int t = 0; t < t_len; ++t) data_.y(t, i) = mean(t) + sd * state_.rng.normal();
  }
}

void GibbsSampler::canonicalize_state() {
  const int n = data_.n();
  const int k_count = static_cast<int>(state_.atoms.size());
  std::vector<int> new_of_old(static_cast<std::size_t>(k_count), 0);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    int& slot = new_of_old[static_cast<std::size_t>(state_.alloc[i] - 1)];
    if (slot == 0) slot = ++next;
  }
  if (next != k_count) throw std::runtime_error("canonicalize_state: unreferenced atom");
  std::vector<Ar1Params> atoms(static_cast<std::size_t>(k_count));
  std::vector<std::vector<int>> members(static_cast<std::size_t>(k_count));
  std::vector<std::vector<Eigen::Vector2d>> member_xy(static_cast<std::size_t>(k_count));
  std::vector<ClusterSuffStats> stats(static_cast<std::size_t>(k_count));
  for (int old = 0; old < k_count; ++old) {
    const auto nu = static_cast<std::size_t>(new_of_old[static_cast<std::size_t>(old)] - 1);
    atoms[nu] = state_.atoms[static_cast<std::size_t>(old)];
    members[nu] = std::move(members_[static_cast<std::size_t>(old)]);
    member_xy[nu] = std::move(member_xy_[static_cast<std::size_t>(old)]);
    stats[nu] = stats_[static_cast<std::size_t>(old)];
  }
  state_.atoms = std::move(atoms);
  members_ = std::move(members);
  member_xy_ = std::move(member_xy);
  stats_ = std::move(stats);
  for (int i = 0; i < n; ++i)
    state_.alloc[i] = new_of_old[static_cast<std::size_t>(state_.alloc[i] - 1)];
}

void GibbsSampler::check_state_finite(int iteration) const {
  const auto fail = [iteration](const char* what) {
    throw std::runtime_error("chain aborted at iteration " + std::to_string(iteration) +
                             ": non-finite " + what);
  };
  if (!state_.beta.allFinite()) fail("beta");
  if (!state_.w.allFinite()) fail("w");
  if (!state_.sigma2.allFinite() || (state_.sigma2.array() <= 0.0).any()) fail("sigma2");
  if (!state_.zeta2.allFinite() || (state_.zeta2.array() <= 0.0).any()) fail("zeta2");
  if (!std::isfinite(state_.alpha) || state_.alpha <= 0.0) fail("alpha");
  for (const auto& atom : state_.atoms) {
    if (!std::isfinite(atom.phi) || !std::isfinite(atom.tau2) || atom.tau2 <= 0.0) fail("atom");
  }
}

void GibbsSampler::station_steps(int iteration) {
  const int n = data_.n();
  const auto run_station = [this, iteration](int i) {
    Rng rng(Rng::derive_seed(config_.seed, static_cast<std::uint64_t>(iteration) + 1,
                             static_cast<std::uint64_t>(i) + 1));
    update_beta(i, rng);
    update_w(i, rng);
    update_sigma2(i, rng);
  };
  if (config_.parallel_station_updates && n >= 16) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const int n_threads = static_cast<int>(std::min<unsigned>(hw, 8));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        for (int i = t; i < n; i += n_threads) run_station(i);
      });
    }
    for (auto& th : pool) th.join();
  } else {
    for (int i = 0; i < n; ++i) run_station(i);
  }
}

void GibbsSampler::sweep(int iteration) {
  adapting_ = config_.adapt_mh && iteration < config_.burn_in;
  station_steps(iteration);
  for (int l = 0; l < design_.p(); ++l) update_zeta2(l);
  if (mode_ == PartitionMode::Sample) update_allocations();
  const int k_count = static_cast<int>(state_.atoms.size());
  for (int k = 0; k < k_count; ++k) update_phi(k);
  for (int k = 0; k < k_count; ++k) update_tau2(k);
  if (mode_ == PartitionMode::Sample && hyper_.alpha_random &&
      hyper_.similarity == SimilarityKind::None) {
    update_alpha();
  }
  if (config_.stats_refresh_every > 0 && (iteration + 1) % config_.stats_refresh_every == 0)
    rebuild_cluster_index();
  check_state_finite(iteration);
}

DrawRecord GibbsSampler::make_record(int iteration) const {
  DrawRecord rec;
  rec.iteration = iteration;
  rec.partition = current_partition();
  rec.atoms = state_.atoms;
  rec.alpha = state_.alpha;
  rec.beta_mean = state_.beta.rowwise().mean();
  rec.zeta2 = state_.zeta2;
  rec.sigma2_mean = state_.sigma2.mean();
  return rec;
}

PosteriorDraws GibbsSampler::run() {
  return run([](const ChainState&, int) {});
}

PosteriorDraws GibbsSampler::run(const std::function<void(const ChainState&, int)>& on_draw) {
  PosteriorDraws out;
  out.n = data_.n();
  out.t_len = data_.t_len();
  out.p = design_.p();
  const auto start = std::chrono::steady_clock::now();
  for (int iter = 0; iter < config_.n_iter; ++iter) {
    sweep(iter);
    if (iter >= config_.burn_in && (iter - config_.burn_in) % config_.thin == 0) {
      out.draws.push_back(make_record(iter));
      on_draw(state_, iter);
    }
  }
  const auto stop = std::chrono::steady_clock::now();
  out.seconds_per_iter =
      std::chrono::duration<double>(stop - start).count() / config_.n_iter;
  out.phi_accept_rate = phi_acceptance_rate();
  return out;
}

double GibbsSampler::phi_acceptance_rate() const {
  return phi_proposed_ == 0 ? 0.0
                            : static_cast<double>(phi_accepted_) / static_cast<double>(phi_proposed_);
}

}  // namespace sppm
