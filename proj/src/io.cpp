#include "sppm/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "sppm/log.hpp"

namespace sppm {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) ++start;
  return s.substr(start);
}

double parse_double(const std::string& field, const char* what, long line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument("trailing characters");
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("line ") + std::to_string(line_no) + ": bad " + what +
                                " '" + field + "'");
  }
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream create_or_throw(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Howard Hinnant's civil-date algorithms.
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

void civil_from_days(long z, int& y, int& m, int& d) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<int>(yoe) + static_cast<int>(era) * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  y += m <= 2;
}

json atom_to_json(const Ar1Params& atom) { return json{{"phi", atom.phi}, {"tau2", atom.tau2}}; }

}  // namespace

std::string add_days(const std::string& start, int days) {
  const YearMonthDay ymd = parse_date(start);
  long z = days_from_civil(ymd.year, ymd.month, ymd.day) + days;
  int y, m, d;
  civil_from_days(z, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  return buf;
}

ModelMode parse_model_mode(const std::string& name) {
  if (name == "no-clustering") return ModelMode::NoClustering;
  if (name == "ppm") return ModelMode::Ppm;
  if (name == "sppm-g1") return ModelMode::SppmG1;
  if (name == "sppm-g2") return ModelMode::SppmG2;
  if (name == "sppm-g3") return ModelMode::SppmG3;
  if (name == "sppm-g4") return ModelMode::SppmG4;
  throw std::invalid_argument("unknown model mode '" + name + "'");
}

std::string to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::NoClustering: return "no-clustering";
    case ModelMode::Ppm: return "ppm";
    case ModelMode::SppmG1: return "sppm-g1";
    case ModelMode::SppmG2: return "sppm-g2";
    case ModelMode::SppmG3: return "sppm-g3";
    case ModelMode::SppmG4: return "sppm-g4";
  }
  throw std::logic_error("to_string: unknown mode");
}

SimilarityKind similarity_of(ModelMode mode) {
  switch (mode) {
    case ModelMode::NoClustering:
    case ModelMode::Ppm: return SimilarityKind::None;
    case ModelMode::SppmG1: return SimilarityKind::G1;
    case ModelMode::SppmG2: return SimilarityKind::G2;
    case ModelMode::SppmG3: return SimilarityKind::G3;
    case ModelMode::SppmG4: return SimilarityKind::G4;
  }
  throw std::logic_error("similarity_of: unknown mode");
}

void RunConfig::validate() const {
  chain.validate();
  if (chains < 1) throw std::invalid_argument("RunConfig: chains must be at least 1");
  const bool spatial = similarity_of(mode) != SimilarityKind::None;
  if (spatial && hyper.alpha_random)
    throw std::invalid_argument("RunConfig: alpha must be fixed under a spatial similarity");
  if (mode == ModelMode::NoClustering && hyper.alpha_random)
    throw std::invalid_argument("RunConfig: alpha hyperprior is meaningless without clustering");
}

Dataset ingest(const std::filesystem::path& series_path,
               const std::filesystem::path& stations_path) {
  // stations: station_id,lon,lat
  std::ifstream st_in = open_or_throw(stations_path);
  std::string line;
  if (!std::getline(st_in, line))
    throw std::invalid_argument(stations_path.string() + ": empty file");
  {
    auto header = split_csv_line(strip(line));
    if (header.size() != 3 || strip(header[0]) != "station_id" || strip(header[1]) != "lon" ||
        strip(header[2]) != "lat")
      throw std::invalid_argument(stations_path.string() + ": expected header station_id,lon,lat");
  }
  std::vector<std::string> ids;
  std::vector<std::pair<double, double>> lonlat;
  std::unordered_map<std::string, int> index_of;
  long line_no = 1;
  while (std::getline(st_in, line)) {
    ++line_no;
    const std::string row = strip(line);
    if (row.empty()) continue;
    auto fields = split_csv_line(row);
    if (fields.size() != 3)
      throw std::invalid_argument(stations_path.string() + ": line " + std::to_string(line_no) +
                                  ": expected 3 fields");
    const std::string id = strip(fields[0]);
    if (index_of.count(id))
      throw std::invalid_argument(stations_path.string() + ": line " + std::to_string(line_no) +
                                  ": duplicate station '" + id + "'");
    index_of[id] = static_cast<int>(ids.size());
    ids.push_back(id);
    lonlat.emplace_back(parse_double(strip(fields[1]), "lon", line_no),
                        parse_double(strip(fields[2]), "lat", line_no));
  }
  const int n = static_cast<int>(ids.size());
  if (n < 2) throw std::invalid_argument(stations_path.string() + ": need at least 2 stations");

  // series: station_id,date,value (long format)
  std::ifstream se_in = open_or_throw(series_path);
  if (!std::getline(se_in, line))
    throw std::invalid_argument(series_path.string() + ": empty file");
  {
    auto header = split_csv_line(strip(line));
    if (header.size() != 3 || strip(header[0]) != "station_id" || strip(header[1]) != "date" ||
        strip(header[2]) != "value")
      throw std::invalid_argument(series_path.string() + ": expected header station_id,date,value");
  }
  std::map<std::string, std::vector<std::pair<int, double>>> by_date;  // date -> (station, value)
  line_no = 1;
  while (std::getline(se_in, line)) {
    ++line_no;
    const std::string row = strip(line);
    if (row.empty()) continue;
    auto fields = split_csv_line(row);
    if (fields.size() != 3)
      throw std::invalid_argument(series_path.string() + ": line " + std::to_string(line_no) +
                                  ": expected 3 fields");
    const std::string id = strip(fields[0]);
    const auto it = index_of.find(id);
    if (it == index_of.end())
      throw std::invalid_argument(series_path.string() + ": line " + std::to_string(line_no) +
                                  ": unknown station '" + id + "'");
    const std::string date = strip(fields[1]);
    parse_date(date);  // must be ISO
    const double value = parse_double(strip(fields[2]), "value", line_no);
    auto& cell = by_date[date];
    for (const auto& [station, v] : cell) {
      if (station == it->second)
        throw std::invalid_argument(series_path.string() + ": line " + std::to_string(line_no) +
                                    ": duplicate observation for (" + id + ", " + date + ")");
    }
    cell.emplace_back(it->second, value);
  }
  const int t_len = static_cast<int>(by_date.size());
  if (t_len < 2) throw std::invalid_argument(series_path.string() + ": need at least 2 dates");

  Dataset data;
  data.station_ids = ids;
  data.coords.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    data.coords(i, 0) = lonlat[static_cast<std::size_t>(i)].first;
    data.coords(i, 1) = lonlat[static_cast<std::size_t>(i)].second;
  }
  data.y.setConstant(t_len, n, std::numeric_limits<double>::quiet_NaN());
  data.time_index.reserve(static_cast<std::size_t>(t_len));
  int t = 0;
  for (const auto& [date, cells] : by_date) {  // std::map: dates ascending
    data.time_index.push_back(date);
    for (const auto& [station, value] : cells) data.y(t, station) = value;
    ++t;
  }
  std::vector<std::string> gappy;
  for (int i = 0; i < n; ++i) {
    if (!data.y.col(i).allFinite()) gappy.push_back(ids[static_cast<std::size_t>(i)]);
  }
  if (!gappy.empty()) {
    std::string msg = series_path.string() + ": date gaps for station(s):";
    for (const auto& id : gappy) msg += " " + id;
    throw std::invalid_argument(msg);
  }
  data.validate();
  return data;
}

void emit_dataset(const Dataset& data, const std::filesystem::path& series_path,
                  const std::filesystem::path& stations_path) {
  std::ofstream st = create_or_throw(stations_path);
  st << "station_id,lon,lat\n";
  for (int i = 0; i < data.n(); ++i) {
    st << data.station_ids[static_cast<std::size_t>(i)] << "," << fmt17(data.coords(i, 0)) << ","
       << fmt17(data.coords(i, 1)) << "\n";
  }
  std::ofstream se = create_or_throw(series_path);
  se << "station_id,date,value\n";
  for (int i = 0; i < data.n(); ++i) {
    for (int t = 0; t < data.t_len(); ++t) {
      se << data.station_ids[static_cast<std::size_t>(i)] << ","
         << data.time_index[static_cast<std::size_t>(t)] << "," << fmt17(data.y(t, i)) << "\n";
    }
  }
}

void emit_wide(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out = create_or_throw(path);
  out << "date";
  for (const auto& id : data.station_ids) out << "," << id;
  out << "\n";
  for (int t = 0; t < data.t_len(); ++t) {
    out << data.time_index[static_cast<std::size_t>(t)];
    for (int i = 0; i < data.n(); ++i) out << "," << fmt17(data.y(t, i));
    out << "\n";
  }
}

int SyntheticSpec::n() const {
  int total = 0;
  for (const auto& c : clusters) total += c.size;
  return total;
}

void SyntheticSpec::validate() const {
  if (clusters.empty()) throw std::invalid_argument("SyntheticSpec: no clusters");
  if (t_len < 2) throw std::invalid_argument("SyntheticSpec: t must be at least 2");
  if (n() < 2) throw std::invalid_argument("SyntheticSpec: need at least 2 stations");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("SyntheticSpec: sigma2 must be positive");
  for (const auto& c : clusters) {
    if (c.size < 1) throw std::invalid_argument("SyntheticSpec: empty cluster");
    Ar1Params{c.phi, c.tau2}.validate();
    if (!(c.spread >= 0.0)) throw std::invalid_argument("SyntheticSpec: negative spread");
  }
  parse_date(start_date);
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  json j = json::parse(in);
  SyntheticSpec spec;
  spec.t_len = j.value("t", 200);
  spec.seed = j.value("seed", 1ULL);
  spec.start_date = j.value("start_date", std::string("2019-01-01"));
  spec.sigma2 = j.value("sigma2", 1.0);
  spec.station_prefix = j.value("station_prefix", std::string("S"));
  if (j.contains("beta")) {
    const auto& b = j.at("beta");
    spec.beta.resize(static_cast<Eigen::Index>(b.size()));
    for (std::size_t k = 0; k < b.size(); ++k)
      spec.beta(static_cast<Eigen::Index>(k)) = b[k].get<double>();
  }
  for (const auto& c : j.at("clusters")) {
    SyntheticCluster sc;
    sc.size = c.at("size").get<int>();
    sc.phi = c.at("phi").get<double>();
    sc.tau2 = c.at("tau2").get<double>();
    sc.center = Eigen::Vector2d(c.at("center")[0].get<double>(), c.at("center")[1].get<double>());
    sc.spread = c.value("spread", 0.1);
    spec.clusters.push_back(sc);
  }
  spec.validate();
  return spec;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const int n = spec.n();
  const int t_len = spec.t_len;
  Rng rng(Rng::derive_seed(spec.seed, 0x5f1d, 0));

  SyntheticData out;
  out.data.y.resize(t_len, n);
  out.data.coords.resize(n, 2);
  out.data.station_ids.resize(static_cast<std::size_t>(n));
  out.data.time_index.resize(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t)
    out.data.time_index[static_cast<std::size_t>(t)] = add_days(spec.start_date, t);

  const DesignMatrix design = build_seasonal_design(out.data.time_index);
  Eigen::VectorXd beta = spec.beta;
  if (beta.size() != design.p()) {
    if (beta.size() == 0) beta = Eigen::VectorXd::Zero(design.p());
    else throw std::invalid_argument("SyntheticSpec: beta length must match the design (p=4)");
  }
  const Eigen::VectorXd mean_curve = design.Z * beta;

  std::vector<int> alloc(static_cast<std::size_t>(n));
  int station = 0;
  for (std::size_t c = 0; c < spec.clusters.size(); ++c) {
    const auto& cl = spec.clusters[c];
    out.atoms.push_back(Ar1Params{cl.phi, cl.tau2});
    for (int m = 0; m < cl.size; ++m, ++station) {
      alloc[static_cast<std::size_t>(station)] = static_cast<int>(c) + 1;
      out.data.station_ids[static_cast<std::size_t>(station)] =
          spec.station_prefix + std::to_string(station + 1);
      out.data.coords(station, 0) = cl.center(0) + cl.spread * rng.normal();
      out.data.coords(station, 1) = cl.center(1) + cl.spread * rng.normal();
      // stationary AR(1) path
      const double stat_sd = std::sqrt(cl.tau2 / (1.0 - cl.phi * cl.phi));
      double w = stat_sd * rng.normal();
      const double innov_sd = std::sqrt(cl.tau2);
      for (int t = 0; t < t_len; ++t) {
        if (t > 0) w = cl.phi * w + innov_sd * rng.normal();
        out.data.y(t, station) = mean_curve(t) + w + std::sqrt(spec.sigma2) * rng.normal();
      }
    }
  }
  out.truth = canonicalize(alloc);
  out.data.validate();
  return out;
}

void emit_synthetic(const SyntheticData& synth, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  emit_dataset(synth.data, out_dir / "series.csv", out_dir / "stations.csv");
  json truth;
  truth["alloc"] = synth.truth.alloc;
  truth["sizes"] = synth.truth.sizes;
  json atoms = json::array();
  for (const auto& atom : synth.atoms) atoms.push_back(atom_to_json(atom));
  truth["atoms"] = atoms;
  create_or_throw(out_dir / "truth.json") << truth.dump(2) << "\n";
}

void write_draws_jsonl(const std::filesystem::path& path,
                       const std::vector<PosteriorDraws>& per_chain) {
  std::ofstream out = create_or_throw(path);
  for (std::size_t c = 0; c < per_chain.size(); ++c) {
    for (const DrawRecord& rec : per_chain[c].draws) {
      json j;
      j["chain"] = c;
      j["iter"] = rec.iteration;
      j["alloc"] = rec.partition.alloc;
      j["sizes"] = rec.partition.sizes;
      json atoms = json::array();
      for (const auto& atom : rec.atoms) atoms.push_back(atom_to_json(atom));
      j["atoms"] = atoms;
      j["alpha"] = rec.alpha;
      j["beta_mean"] = std::vector<double>(rec.beta_mean.begin(), rec.beta_mean.end());
      j["zeta2"] = std::vector<double>(rec.zeta2.begin(), rec.zeta2.end());
      j["sigma2_mean"] = rec.sigma2_mean;
      out << j.dump() << "\n";
    }
  }
}

PosteriorDraws read_draws_jsonl(const std::filesystem::path& path) {
  std::ifstream in = open_or_throw(path);
  PosteriorDraws out;
  std::string line;
  while (std::getline(in, line)) {
    if (strip(line).empty()) continue;
    const json j = json::parse(line);
    DrawRecord rec;
    rec.iteration = j.value("iter", 0);
    rec.partition.alloc = j.at("alloc").get<std::vector<int>>();
    rec.partition.sizes = j.at("sizes").get<std::vector<int>>();
    for (const auto& atom : j.at("atoms"))
      rec.atoms.push_back(Ar1Params{atom.at("phi").get<double>(), atom.at("tau2").get<double>()});
    rec.alpha = j.value("alpha", 1.0);
    if (j.contains("beta_mean")) {
      const auto v = j.at("beta_mean").get<std::vector<double>>();
      rec.beta_mean = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (j.contains("zeta2")) {
      const auto v = j.at("zeta2").get<std::vector<double>>();
      rec.zeta2 = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    rec.sigma2_mean = j.value("sigma2_mean", 0.0);
    out.draws.push_back(std::move(rec));
  }
  if (out.draws.empty()) throw std::invalid_argument("read_draws_jsonl: no draws in " + path.string());
  out.n = out.draws.front().partition.size();
  return out;
}

void write_cocluster_csv(const std::filesystem::path& path,
                         const std::vector<std::string>& station_ids, const CoclusterMatrix& cc) {
  std::ofstream out = create_or_throw(path);
  out << "station_id";
  for (const auto& id : station_ids) out << "," << id;
  out << "\n";
  for (int i = 0; i < cc.n(); ++i) {
    out << station_ids[static_cast<std::size_t>(i)];
    for (int j = 0; j < cc.n(); ++j) out << "," << fmt17(cc.p(i, j));
    out << "\n";
  }
}

void write_partition_csv(const std::filesystem::path& path,
                         const std::vector<std::string>& station_ids, const Partition& partition,
                         const std::vector<ClusterParamSummary>& clusters) {
  std::ofstream out = create_or_throw(path);
  out << "station_id,cluster,phi_mean,phi_lo,phi_hi,tau2_mean,tau2_lo,tau2_hi\n";
  for (int i = 0; i < partition.size(); ++i) {
    const auto& cl = clusters[static_cast<std::size_t>(partition.alloc[i] - 1)];
    out << station_ids[static_cast<std::size_t>(i)] << "," << partition.alloc[i] << ","
        << fmt17(cl.phi_mean) << "," << fmt17(cl.phi_lo) << "," << fmt17(cl.phi_hi) << ","
        << fmt17(cl.tau2_mean) << "," << fmt17(cl.tau2_lo) << "," << fmt17(cl.tau2_hi) << "\n";
  }
}

void write_geojson(const std::filesystem::path& path, const Dataset& data,
                   const Partition& partition, const std::vector<ClusterParamSummary>& clusters) {
  json features = json::array();
  for (int i = 0; i < data.n(); ++i) {
    const auto& cl = clusters[static_cast<std::size_t>(partition.alloc[i] - 1)];
    json feature;
    feature["type"] = "Feature";
    feature["geometry"] = {{"type", "Point"},
                           {"coordinates", {data.coords(i, 0), data.coords(i, 1)}}};
    feature["properties"] = {{"station_id", data.station_ids[static_cast<std::size_t>(i)]},
                             {"cluster", partition.alloc[i]},
                             {"phi", cl.phi_mean},
                             {"tau2", cl.tau2_mean}};
    features.push_back(feature);
  }
  json collection = {{"type", "FeatureCollection"}, {"features", features}};
  create_or_throw(path) << collection.dump(2) << "\n";
}

std::vector<BandsRow> emit_bands(const Dataset& data, const Partition& partition) {
  if (partition.size() != data.n()) throw std::invalid_argument("emit_bands: partition size mismatch");
  std::vector<std::vector<int>> blocks(static_cast<std::size_t>(partition.num_blocks()));
  for (int i = 0; i < data.n(); ++i)
    blocks[static_cast<std::size_t>(partition.alloc[i] - 1)].push_back(i);
  std::vector<BandsRow> rows;
  rows.reserve(blocks.size() * static_cast<std::size_t>(data.t_len()));
  std::vector<double> values;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    for (int t = 0; t < data.t_len(); ++t) {
      values.clear();
      for (int i : blocks[k]) values.push_back(data.y(t, i));
      std::sort(values.begin(), values.end());
      BandsRow row;
      row.cluster = static_cast<int>(k) + 1;
      row.time = data.time_index[static_cast<std::size_t>(t)];
      row.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
      row.q05 = quantile_sorted(values, 0.05);
      row.q25 = quantile_sorted(values, 0.25);
      row.q75 = quantile_sorted(values, 0.75);
      row.q95 = quantile_sorted(values, 0.95);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_bands_csv(const std::filesystem::path& path, std::span<const BandsRow> rows) {
  std::ofstream out = create_or_throw(path);
  out << "cluster,time,mean,q05,q25,q75,q95\n";
  for (const auto& row : rows) {
    out << row.cluster << "," << row.time << "," << fmt17(row.mean) << "," << fmt17(row.q05) << ","
        << fmt17(row.q25) << "," << fmt17(row.q75) << "," << fmt17(row.q95) << "\n";
  }
}

RunResult run_with_dataset(const RunConfig& config, const Dataset& data) {
  config.validate();
  data.validate();
  std::filesystem::create_directories(config.out_dir);

  const DesignMatrix design = build_seasonal_design(data.time_index);

  Hyperparams hyper = config.hyper;
  hyper.similarity = similarity_of(config.mode);
  if (config.niw_from_data &&
      (hyper.similarity == SimilarityKind::G3 || hyper.similarity == SimilarityKind::G4)) {
    hyper.niw.mu0 = data.coords.colwise().mean().transpose();
    const Eigen::MatrixX2d centered = data.coords.rowwise() - data.coords.colwise().mean();
    Eigen::Matrix2d cov = centered.transpose() * centered / static_cast<double>(data.n() - 1);
    const double ridge = 1e-8 * std::max(1.0, cov.trace());
    if (cov.determinant() <= ridge) cov += ridge * Eigen::Matrix2d::Identity();
    hyper.niw.lambda0 = cov;
  }
  hyper.validate();

  // one sampler per chain, seeds offset by the chain index
  std::vector<PosteriorDraws> per_chain(static_cast<std::size_t>(config.chains));
  {
    std::vector<std::thread> pool;
    for (int c = 0; c < config.chains; ++c) {
      pool.emplace_back([&, c] {
        ChainConfig chain_cfg = config.chain;
        chain_cfg.seed = config.chain.seed + static_cast<std::uint64_t>(c);
        GibbsSampler sampler(data, design, hyper, chain_cfg);
        if (config.mode == ModelMode::NoClustering) sampler.fix_singletons();
        per_chain[static_cast<std::size_t>(c)] = sampler.run();
      });
    }
    for (auto& th : pool) th.join();
  }

  if (config.emit.draws) write_draws_jsonl(config.out_dir / "draws.jsonl", per_chain);

  std::vector<Partition> partitions;
  for (const auto& chain : per_chain)
    for (const auto& rec : chain.draws) partitions.push_back(rec.partition);
  const CoclusterMatrix cc = cocluster(partitions);
  if (config.emit.cocluster) write_cocluster_csv(config.out_dir / "cocluster.csv", data.station_ids, cc);

  SearchConfig search;
  search.seed = config.chain.seed;
  const PointEstimate estimate = search_point_estimate(partitions, cc, config.loss, search);
  log_info("point estimate: " + std::to_string(estimate.partition.num_blocks()) + " clusters, expected loss " +
           std::to_string(estimate.expected_loss));

  // cluster parameters conditional on the estimated partition
  Hyperparams re_hyper = hyper;
  re_hyper.alpha_random = false;
  ChainConfig re_cfg = config.chain;
  re_cfg.seed = config.chain.seed + 7919;
  const ConditionalEstimate cond =
      conditional_reestimate(data, design, re_hyper, estimate.partition, re_cfg);

  write_partition_csv(config.out_dir / "partition.csv", data.station_ids, cond.partition,
                      cond.clusters);
  if (config.emit.geojson)
    write_geojson(config.out_dir / "clusters.geojson", data, cond.partition, cond.clusters);
  if (config.emit.bands) {
    const auto rows = emit_bands(data, cond.partition);
    write_bands_csv(config.out_dir / "bands.csv", rows);
  }

  double mean_spi = 0.0;
  for (const auto& chain : per_chain) mean_spi += chain.seconds_per_iter;
  mean_spi /= static_cast<double>(config.chains);

  json meta;
  meta["mode"] = to_string(config.mode);
  meta["loss"] = config.loss == LossKind::Vi ? "vi" : "binder";
  meta["seed"] = config.chain.seed;
  meta["chains"] = config.chains;
  meta["n_iter"] = config.chain.n_iter;
  meta["burn_in"] = config.chain.burn_in;
  meta["thin"] = config.chain.thin;
  meta["n"] = data.n();
  meta["t"] = data.t_len();
  meta["p"] = design.p();
  meta["k_aux"] = hyper.k_aux;
  meta["alpha_random"] = hyper.alpha_random;
  meta["alpha"] = hyper.alpha;
  meta["k_point_estimate"] = estimate.partition.num_blocks();
  meta["expected_loss"] = estimate.expected_loss;
  json spi = json::array(), acc = json::array();
  for (const auto& chain : per_chain) {
    spi.push_back(chain.seconds_per_iter);
    acc.push_back(chain.phi_accept_rate);
  }
  meta["seconds_per_iter"] = spi;
  meta["phi_accept_rate"] = acc;
  meta["reestimate_phi_accept_rate"] = cond.phi_accept_rate;
  create_or_throw(config.out_dir / "run_meta.json") << meta.dump(2) << "\n";

  RunResult result;
  result.point_estimate = estimate.partition;
  result.expected_loss = estimate.expected_loss;
  result.clusters = cond.clusters;
  result.seconds_per_iter = mean_spi;
  return result;
}

RunResult run(const RunConfig& config) {
  const Dataset data = ingest(config.series_path, config.stations_path);
  return run_with_dataset(config, data);
}

void summarize_draws(const std::filesystem::path& draws_path, LossKind loss,
                     const std::filesystem::path& out_dir, std::uint64_t seed) {
  const PosteriorDraws draws = read_draws_jsonl(draws_path);
  std::filesystem::create_directories(out_dir);
  std::vector<Partition> partitions;
  partitions.reserve(draws.draws.size());
  for (const auto& rec : draws.draws) partitions.push_back(rec.partition);
  const CoclusterMatrix cc = cocluster(partitions);

  std::vector<std::string> ids(static_cast<std::size_t>(draws.n));
  for (int i = 0; i < draws.n; ++i) ids[static_cast<std::size_t>(i)] = std::to_string(i + 1);
  write_cocluster_csv(out_dir / "cocluster.csv", ids, cc);

  SearchConfig search;
  search.seed = seed;
  const PointEstimate estimate = search_point_estimate(partitions, cc, loss, search);
  // station-level posterior means averaged within the estimated blocks
  const auto averages = average_within_clusters(draws, estimate.partition);
  std::vector<ClusterParamSummary> clusters(averages.size());
  for (std::size_t k = 0; k < averages.size(); ++k) {
    clusters[k].size = averages[k].size;
    clusters[k].phi_mean = clusters[k].phi_lo = clusters[k].phi_hi = averages[k].phi;
    clusters[k].tau2_mean = clusters[k].tau2_lo = clusters[k].tau2_hi = averages[k].tau2;
  }
  write_partition_csv(out_dir / "partition.csv", ids, estimate.partition, clusters);

  json meta;
  meta["loss"] = loss == LossKind::Vi ? "vi" : "binder";
  meta["draws"] = draws.draws.size();
  meta["k_point_estimate"] = estimate.partition.num_blocks();
  meta["expected_loss"] = estimate.expected_loss;
  create_or_throw(out_dir / "summary_meta.json") << meta.dump(2) << "\n";
}

}  // namespace sppm
