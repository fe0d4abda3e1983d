#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include "sppm/io.hpp"
#include "sppm/log.hpp"

namespace {

struct FitOptions {
  std::string series, stations, out;
  std::string mode = "ppm";
  std::string loss = "vi";
  int iters = 15000, burnin = 10000, thin = 1;
  std::uint64_t seed = 1;
  int chains = 1;
  int kaux = 3;
  double alpha = 1.0;
  bool alpha_fixed = false;
  double omega = 1.0;
  double a_threshold = 1.0;
  double mh_step = 1.0;
  bool no_adapt = false;
  bool parallel = false;
  bool no_draws = false, no_cocluster = false, no_geojson = false, no_bands = false;
};

sppm::LossKind parse_loss(const std::string& name) {
  if (name == "vi") return sppm::LossKind::Vi;
  if (name == "binder") return sppm::LossKind::Binder;
  throw CLI::ValidationError("--loss", "expected 'vi' or 'binder'");
}

int run_fit(const FitOptions& opt) {
  sppm::RunConfig config;
  config.series_path = opt.series;
  config.stations_path = opt.stations;
  config.out_dir = opt.out;
  config.mode = sppm::parse_model_mode(opt.mode);
  config.loss = parse_loss(opt.loss);
  config.chain.n_iter = opt.iters;
  config.chain.burn_in = opt.burnin;
  config.chain.thin = opt.thin;
  config.chain.seed = opt.seed;
  config.chain.mh_step_phi = opt.mh_step;
  config.chain.adapt_mh = !opt.no_adapt;
  config.chain.parallel_station_updates = opt.parallel;
  config.chains = opt.chains;
  config.hyper.k_aux = opt.kaux;
  config.hyper.alpha = opt.alpha;
  // PPM uses the Escobar-West hyperprior on alpha unless pinned; the
  // spatial modes require a fixed alpha.
  config.hyper.alpha_random =
      config.mode == sppm::ModelMode::Ppm ? !opt.alpha_fixed : false;
  config.hyper.g1_omega = opt.omega;
  config.hyper.g2_threshold = opt.a_threshold;
  config.emit.draws = !opt.no_draws;
  config.emit.cocluster = !opt.no_cocluster;
  config.emit.geojson = !opt.no_geojson;
  config.emit.bands = !opt.no_bands;

  const sppm::RunResult result = sppm::run(config);
  std::cout << "clusters: " << result.point_estimate.num_blocks()
            << "  expected_loss: " << result.expected_loss
            << "  s/iter: " << result.seconds_per_iter << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial product partition clustering for point-referenced time series"};
  app.require_subcommand(1);

  FitOptions fit;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a chain and emit all analysis artifacts");
  fit_cmd->add_option("--series", fit.series, "long-format series CSV (station_id,date,value)")
      ->required();
  fit_cmd->add_option("--stations", fit.stations, "stations CSV (station_id,lon,lat)")->required();
  fit_cmd->add_option("--out", fit.out, "output directory")->required();
  fit_cmd->add_option("--mode", fit.mode,
                      "no-clustering | ppm | sppm-g1 | sppm-g2 | sppm-g3 | sppm-g4");
  fit_cmd->add_option("--loss", fit.loss, "vi | binder");
  fit_cmd->add_option("--iters", fit.iters, "total iterations");
  fit_cmd->add_option("--burnin", fit.burnin, "burn-in iterations");
  fit_cmd->add_option("--thin", fit.thin, "thinning interval");
  fit_cmd->add_option("--seed", fit.seed, "rng seed");
  fit_cmd->add_option("--chains", fit.chains, "independent chains run in parallel");
  fit_cmd->add_option("--kaux", fit.kaux, "auxiliary atoms per allocation move");
  fit_cmd->add_option("--alpha", fit.alpha, "DP concentration (fixed modes)");
  fit_cmd->add_flag("--alpha-fixed", fit.alpha_fixed, "pin alpha in ppm mode too");
  fit_cmd->add_option("--omega", fit.omega, "g1 spread penalty");
  fit_cmd->add_option("--a-threshold", fit.a_threshold, "g2 pairwise distance threshold");
  fit_cmd->add_option("--mh-step", fit.mh_step, "initial MH step on logit(phi)");
  fit_cmd->add_flag("--no-adapt", fit.no_adapt, "disable burn-in step adaptation");
  fit_cmd->add_flag("--parallel", fit.parallel, "parallel station-level updates");
  fit_cmd->add_flag("--no-draws", fit.no_draws, "skip draws.jsonl");
  fit_cmd->add_flag("--no-cocluster", fit.no_cocluster, "skip cocluster.csv");
  fit_cmd->add_flag("--no-geojson", fit.no_geojson, "skip clusters.geojson");
  fit_cmd->add_flag("--no-bands", fit.no_bands, "skip bands.csv");

  std::string synth_spec, synth_out;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset from a spec");
  synth_cmd->add_option("--spec", synth_spec, "JSON synthetic spec")->required();
  synth_cmd->add_option("--out", synth_out, "output directory")->required();

  std::string sum_draws, sum_loss = "vi", sum_out;
  std::uint64_t sum_seed = 1;
  CLI::App* sum_cmd = app.add_subcommand("summarize", "point estimate from a stored draws.jsonl");
  sum_cmd->add_option("--draws", sum_draws, "draws.jsonl path")->required();
  sum_cmd->add_option("--loss", sum_loss, "vi | binder");
  sum_cmd->add_option("--out", sum_out, "output directory")->required();
  sum_cmd->add_option("--seed", sum_seed, "search seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit_cmd->parsed()) return run_fit(fit);
    if (synth_cmd->parsed()) {
      const sppm::SyntheticSpec spec = sppm::load_synthetic_spec(synth_spec);
      const sppm::SyntheticData synth = sppm::generate_synthetic(spec);
      sppm::emit_synthetic(synth, synth_out);
      std::cout << "wrote " << synth.data.n() << " stations x " << synth.data.t_len()
                << " days to " << synth_out << "\n";
      return 0;
    }
    if (sum_cmd->parsed()) {
      sppm::summarize_draws(sum_draws, parse_loss(sum_loss), sum_out, sum_seed);
      return 0;
    }
  } catch (const std::exception& err) {
    sppm::log_error(err.what());
    return 1;
  }
  return 0;
}
