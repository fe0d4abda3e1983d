#include "sppm/core.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace sppm {

void Dataset::validate() const {
  const int num_stations = n();
  const int num_times = t_len();
  if (num_stations < 2) throw std::invalid_argument("Dataset: need at least 2 stations");
  if (num_times < 2) throw std::invalid_argument("Dataset: need at least 2 time points");
  if (!y.allFinite()) throw std::invalid_argument("Dataset: missing or non-finite measurements");
  if (coords.rows() != num_stations) throw std::invalid_argument("Dataset: coords/series size mismatch");
  if (!coords.allFinite()) throw std::invalid_argument("Dataset: non-finite coordinates");
  if (static_cast<int>(station_ids.size()) != num_stations)
    throw std::invalid_argument("Dataset: station_ids/series size mismatch");
  if (static_cast<int>(time_index.size()) != num_times)
    throw std::invalid_argument("Dataset: time_index/series size mismatch");
  std::unordered_set<std::string> seen;
  for (const auto& id : station_ids) {
    if (!seen.insert(id).second)
      throw std::invalid_argument("Dataset: duplicate station id '" + id + "'");
  }
}

YearMonthDay parse_date(const std::string& iso) {
  const auto fail = [&] { throw std::invalid_argument("unparseable date '" + iso + "', expected YYYY-MM-DD"); };
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') fail();
  for (int k : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (!std::isdigit(static_cast<unsigned char>(iso[k]))) fail();
  }
  YearMonthDay d{};
  d.year = std::stoi(iso.substr(0, 4));
  d.month = std::stoi(iso.substr(5, 2));
  d.day = std::stoi(iso.substr(8, 2));
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) fail();
  return d;
}

int meteorological_season(int month) {
  if (month == 12 || month == 1 || month == 2) return 0;
  if (month >= 3 && month <= 5) return 1;
  if (month >= 6 && month <= 8) return 2;
  if (month >= 9 && month <= 11) return 3;
  throw std::invalid_argument("meteorological_season: month out of range");
}

DesignMatrix build_seasonal_design(std::span<const std::string> dates,
                                   const std::array<int, 12>& season_of_month) {
  if (dates.empty()) throw std::invalid_argument("build_seasonal_design: empty date list");
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dates.size()), 4);
  for (std::size_t t = 0; t < dates.size(); ++t) {
    const YearMonthDay d = parse_date(dates[t]);
    const int season = season_of_month[static_cast<std::size_t>(d.month - 1)];
    if (season < 0 || season > 3)
      throw std::invalid_argument("build_seasonal_design: season index out of range");
    z(static_cast<Eigen::Index>(t), 0) = 1.0;
    if (season > 0) z(static_cast<Eigen::Index>(t), season) = 1.0;
  }
  return DesignMatrix{std::move(z)};
}

DesignMatrix build_seasonal_design(std::span<const std::string> dates) {
  std::array<int, 12> table{};
  for (int m = 1; m <= 12; ++m) table[static_cast<std::size_t>(m - 1)] = meteorological_season(m);
  return build_seasonal_design(dates, table);
}

Partition canonicalize(std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("canonicalize: empty allocation vector");
  Partition out;
  out.alloc.resize(labels.size());
  std::unordered_map<int, int> relabel;
  relabel.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = relabel.try_emplace(labels[i], static_cast<int>(relabel.size()) + 1);
    const int lab = it->second;
    out.alloc[i] = lab;
    if (inserted) {
      out.sizes.push_back(1);
    } else {
      ++out.sizes[static_cast<std::size_t>(lab - 1)];
    }
  }
  return out;
}

void NiwParams::validate() const {
  if (!(kappa0 > 0.0)) throw std::invalid_argument("NiwParams: kappa0 must be positive");
  if (!(nu0 > 1.0)) throw std::invalid_argument("NiwParams: nu0 must exceed 1");
  if (!mu0.allFinite() || !lambda0.allFinite())
    throw std::invalid_argument("NiwParams: non-finite hyperparameters");
  if (std::abs(lambda0(0, 1) - lambda0(1, 0)) > 1e-12 * (1.0 + std::abs(lambda0(0, 1))))
    throw std::invalid_argument("NiwParams: lambda0 must be symmetric");
  const double det = lambda0(0, 0) * lambda0(1, 1) - lambda0(0, 1) * lambda0(1, 0);
  if (!(lambda0(0, 0) > 0.0) || !(det > 0.0))
    throw std::invalid_argument("NiwParams: lambda0 must be positive-definite");
}

void Hyperparams::validate() const {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string("Hyperparams: ") + name + " must be positive");
  };
  positive(a_sigma, "a_sigma");
  positive(b_sigma, "b_sigma");
  positive(a_zeta, "a_zeta");
  positive(b_zeta, "b_zeta");
  positive(a_phi, "a_phi");
  positive(b_phi, "b_phi");
  positive(a_tau, "a_tau");
  positive(b_tau, "b_tau");
  positive(a_alpha, "a_alpha");
  positive(b_alpha, "b_alpha");
  if (!alpha_random) positive(alpha, "alpha");
  if (k_aux < 1) throw std::invalid_argument("Hyperparams: k_aux must be at least 1");
  if (cohesion == CohesionKind::FiniteDirichlet) positive(alpha_tilde, "alpha_tilde");
  if (similarity == SimilarityKind::G1) positive(g1_omega, "g1_omega");
  if (similarity == SimilarityKind::G2) positive(g2_threshold, "g2_threshold");
  if (similarity == SimilarityKind::G3 || similarity == SimilarityKind::G4) niw.validate();
}

}  // namespace sppm
