// pogvins: simulate datasets, run the estimators, evaluate and plot.
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "pogvins/dataset_io.hpp"
#include "pogvins/errors.hpp"
#include "pogvins/outputs.hpp"
#include "pogvins/pipeline.hpp"

namespace {

using namespace pogvins;

int cmd_simulate(const std::string& config_path, const std::string& out_dir, long seed) {
  KvConfig kv = KvConfig::load(config_path);
  if (seed >= 0) kv.set("seed", std::to_string(seed));
  const ScenarioConfig cfg = scenario_config_from_kv(kv);
  const ScenarioDataset ds = generate(cfg);
  write_dataset(ds, out_dir);
  std::cout << "wrote " << ds.imu.size() << " imu, " << ds.frames.size() << " frames, "
            << ds.gnss_rover.size() << " gnss epochs to " << out_dir << "\n";
  return 0;
}

int cmd_run(const std::string& run_config, const std::string& mode, const std::string& dataset,
            const std::string& output_dir) {
  KvConfig kv = KvConfig::load(run_config);
  if (!mode.empty()) kv.set("mode", mode);
  if (!dataset.empty()) kv.set("dataset", dataset);
  if (!output_dir.empty()) kv.set("output_dir", output_dir);
  RunConfig cfg = RunConfig::from_kv(kv);
  // Relative dataset/output paths are taken relative to the config file.
  const std::filesystem::path base = std::filesystem::path(run_config).parent_path();
  auto resolve = [&](std::string& p, bool from_cli) {
    if (!from_cli && !p.empty() && std::filesystem::path(p).is_relative()) {
      p = (base / p).string();
    }
  };
  resolve(cfg.dataset_path, !dataset.empty());
  resolve(cfg.output_dir, !output_dir.empty());
  if (cfg.output_dir.empty()) throw Error(ErrorCode::kConfigInvalid, "output_dir not set");

  const ScenarioDataset ds = read_dataset(cfg.dataset_path);
  const PipelineResult res = run_pipeline(ds, cfg);
  KvConfig extra;
  extra.add("mode", to_string(cfg.mode));
  extra.add("dataset", cfg.dataset_path);
  extra.add("camera_updates", std::to_string(res.stats.camera_updates));
  extra.add("visual_tracks_used", std::to_string(res.stats.visual_tracks_used));
  extra.add("visual_tracks_rejected", std::to_string(res.stats.visual_tracks_rejected));
  extra.add("gnss_updates", std::to_string(res.stats.gnss_updates));
  extra.add("gnss_rows_rejected", std::to_string(res.stats.gnss_rows_rejected));
  extra.add("fix_attempts", std::to_string(res.stats.fix_attempts));
  extra.add("fixes_accepted", std::to_string(res.stats.fixes_accepted));
  extra.add("update_failures", std::to_string(res.stats.update_failures));
  emit_outputs(cfg.output_dir, res.trajectory, to_trajectory(ds.truth), res.report, extra);
  std::cout << extra.to_string() << report_to_kv(res.report).to_string();
  return 0;
}

int cmd_evaluate(const std::string& est, const std::string& truth, bool align, bool normalize,
                 const std::string& out_dir) {
  MetricsOptions mo;
  mo.align_first_pose = align;
  mo.normalize_by_length = normalize;
  const auto e = read_trajectory_csv(est);
  const auto t = read_trajectory_csv(truth);
  const ErrorReport rep = compute_metrics(e, t, mo);
  if (!out_dir.empty()) emit_outputs(out_dir, e, t, rep);
  std::cout << report_to_kv(rep).to_string();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PO-GVINS GNSS/IMU/camera estimator toolkit"};
  app.require_subcommand(1);

  std::string sim_config, sim_out;
  long sim_seed = -1;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim->add_option("config", sim_config, "Scenario key = value file")->required();
  sim->add_option("out_dir", sim_out, "Output dataset directory")->required();
  sim->add_option("--seed", sim_seed, "Override the scenario seed");

  std::string run_config, run_mode, run_dataset, run_out;
  auto* run = app.add_subcommand("run", "Run an estimator on a dataset");
  run->add_option("run_config", run_config, "Run key = value file")->required();
  run->add_option("--mode", run_mode, "PO-VINS | MSCKF | GI | M-GVINS | PO-GVINS");
  run->add_option("--dataset", run_dataset, "Dataset directory");
  run->add_option("--output-dir", run_out, "Output directory");

  std::string ev_est, ev_truth, ev_out;
  bool ev_align = false;
  bool ev_norm = false;
  auto* ev = app.add_subcommand("evaluate", "Compare an estimate CSV with truth");
  ev->add_option("estimate", ev_est, "Estimated trajectory CSV")->required();
  ev->add_option("truth", ev_truth, "Ground-truth trajectory CSV")->required();
  ev->add_flag("--align", ev_align, "Align the first matched pose");
  ev->add_flag("--normalize", ev_norm, "Also report errors per trajectory length");
  ev->add_option("--output-dir", ev_out, "Write errors/cdf/plot here");

  std::string plot_dir;
  auto* plot = app.add_subcommand("plot", "Regenerate plot.svg for an output directory");
  plot->add_option("report_dir", plot_dir, "Directory written by run or evaluate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc != 0) std::cerr << "error code=ParseError message=\"command line\"\n";
    return rc;
  }

  try {
    if (*sim) return cmd_simulate(sim_config, sim_out, sim_seed);
    if (*run) return cmd_run(run_config, run_mode, run_dataset, run_out);
    if (*ev) return cmd_evaluate(ev_est, ev_truth, ev_align, ev_norm, ev_out);
    if (*plot) {
      plot_directory(plot_dir);
      std::cout << "wrote " << (std::filesystem::path(plot_dir) / "plot.svg").string() << "\n";
      return 0;
    }
  } catch (const pogvins::Error& e) {
    std::cerr << "error code=" << pogvins::to_string(e.code()) << " message=\"" << e.what()
              << "\"\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error code=Internal message=\"" << e.what() << "\"\n";
    return 3;
  }
  return 1;
}
