// depthnet command-line driver: train, eval, infer, probe.
//
// Diagnostics go to stderr; artifacts (checkpoints, reports, predictions,
// resolved-config echoes) go to files under --out. Every command is
// deterministic given its flags and --seed.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "depthnet/checkpoint.hpp"
#include "depthnet/probes.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace depthnet;

namespace {

struct ModelFlags {
  int size = 64;
  int channels = 16;
  int bins = 32;
  double dmin = 1e-3;
  double dmax = 10.0;
  std::string glkam = "on";
  std::string gbpm = "on";
  uint64_t seed = 1;
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--size", f.size, "Input extent (square, divisible by 32)");
  cmd->add_option("--channels", f.channels, "Base channel count C");
  cmd->add_option("--bins", f.bins, "Number of depth bins");
  cmd->add_option("--dmin", f.dmin, "Lower depth bound (meters)");
  cmd->add_option("--dmax", f.dmax, "Upper depth bound (meters)");
  cmd->add_option("--glkam", f.glkam, "Attention blocks between encoder stages")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--gbpm", f.gbpm, "Learned global bins (off = uniform bins)")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--seed", f.seed, "Seed for init, scenes and augmentation");
}

ModelConfig make_config(const ModelFlags& f) {
  ModelConfig cfg;
  cfg.base_channels = f.channels;
  cfg.n_bins = f.bins;
  cfg.d_min = f.dmin;
  cfg.d_max = f.dmax;
  cfg.use_glkam = f.glkam == "on";
  cfg.use_gbpm = f.gbpm == "on";
  cfg.ppm_grids = fit_ppm_grids({1, 2, 3, 6}, f.size, f.size);
  cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

json config_json(const ModelConfig& cfg) {
  return json{{"channels", cfg.base_channels}, {"bins", cfg.n_bins},
              {"dmin", cfg.d_min},             {"dmax", cfg.d_max},
              {"glkam", cfg.use_glkam},        {"gbpm", cfg.use_gbpm},
              {"ppm_grids", cfg.ppm_grids},    {"seed", cfg.seed}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
}

void write_config_echo(const fs::path& out_dir, const json& j) {
  write_text(out_dir / "config.json", j.dump(2) + "\n");
}

std::vector<DepthSample> make_scenes(int count, uint64_t seed, int size, double dmin,
                                     double dmax) {
  std::vector<DepthSample> scenes;
  scenes.reserve(size_t(count));
  for (int i = 0; i < count; ++i)
    scenes.push_back(generate_scene(seed + uint64_t(i), size, size, dmin, dmax));
  return scenes;
}

json report_json(const MetricReport& r) {
  return json{{"abs_rel", r.abs_rel}, {"rmse", r.rmse},     {"log10", r.log10},
              {"sq_rel", r.sq_rel},   {"delta1", r.delta1}, {"delta2", r.delta2},
              {"delta3", r.delta3},   {"n_valid", r.n_valid}};
}

int cmd_train(const ModelFlags& mf, int scenes_n, int steps, int batch, double lr_start,
              double lr_end, const std::string& out) {
  ModelConfig cfg = make_config(mf);
  fs::create_directories(out);
  DepthNet model(cfg);
  auto scenes = make_scenes(scenes_n, mf.seed, mf.size, cfg.d_min, cfg.d_max);

  TrainOptions opts;
  opts.steps = steps;
  opts.batch_size = std::min(batch, scenes_n);
  opts.lr_start = lr_start;
  opts.lr_end = lr_end;
  opts.seed = mf.seed;

  std::ostringstream csv;
  csv << "step,lr,loss\n";
  char line[96];
  auto log = train(model, scenes, opts, [&](const TrainLogEntry& e) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g\n", e.step, e.lr, e.loss);
    csv << line;
    if (e.step % 50 == 0 || e.step + 1 == steps)
      std::cerr << "step " << e.step << " lr " << e.lr << " loss " << e.loss << "\n";
  });

  save_checkpoint((fs::path(out) / "checkpoint.dten").string(), model);
  write_text(fs::path(out) / "loss_log.csv", csv.str());
  json echo = config_json(cfg);
  echo["command"] = "train";
  echo["size"] = mf.size;
  echo["scenes"] = scenes_n;
  echo["steps"] = steps;
  echo["batch"] = opts.batch_size;
  echo["lr_start"] = lr_start;
  echo["lr_end"] = lr_end;
  echo["augment"] = opts.use_augment;
  write_config_echo(out, echo);
  std::cerr << "wrote " << out << "/checkpoint.dten (" << model.params().count()
            << " tensors)\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const ModelFlags& mf, int scenes_n,
             bool flip_average, bool oracle, const std::string& out) {
  fs::create_directories(out);
  std::vector<MetricReport> reports;
  json echo{{"command", "eval"}, {"scenes", scenes_n},          {"seed", mf.seed},
            {"size", mf.size},   {"flip_average", flip_average}, {"oracle", oracle}};

  if (oracle) {
    auto scenes = make_scenes(scenes_n, mf.seed, mf.size, mf.dmin, mf.dmax);
    for (const auto& s : scenes) reports.push_back(compute_metrics(s.depth, s.depth, s.mask));
    echo["dmin"] = mf.dmin;
    echo["dmax"] = mf.dmax;
  } else {
    if (checkpoint.empty()) throw ValueError("eval requires --checkpoint (or --oracle)");
    DepthNet model = load_checkpoint(checkpoint);
    const ModelConfig& cfg = model.config();
    auto scenes = make_scenes(scenes_n, mf.seed, mf.size, cfg.d_min, cfg.d_max);
    for (const auto& s : scenes) {
      Tensor pred = flip_average ? model.infer_flip_averaged(s.rgb) : model.predict(s.rgb);
      reports.push_back(compute_metrics(pred, s.depth, s.mask));
    }
    echo["checkpoint"] = checkpoint;
    echo["model"] = config_json(cfg);
  }
  MetricReport avg = average_reports(reports);
  write_text(fs::path(out) / "report.txt", avg.to_kv_text());
  json jr = report_json(avg);
  jr["per_scene"] = json::array();
  for (const auto& r : reports) jr["per_scene"].push_back(report_json(r));
  write_text(fs::path(out) / "report.json", jr.dump(2) + "\n");
  write_config_echo(out, echo);
  std::cerr << "eval over " << scenes_n << " scenes: delta1 " << avg.delta1 << ", abs_rel "
            << avg.abs_rel << "\n";
  return 0;
}

int cmd_infer(const std::string& checkpoint, const std::string& input, const ModelFlags& mf,
              bool flip_average, const std::string& out) {
  fs::create_directories(out);
  DepthNet model = load_checkpoint(checkpoint);
  DepthSample sample;
  if (!input.empty()) {
    sample = load_sample(input);
  } else {
    sample = generate_scene(mf.seed, mf.size, mf.size, model.config().d_min,
                            model.config().d_max);
  }
  Tensor pred =
      flip_average ? model.infer_flip_averaged(sample.rgb) : model.predict(sample.rgb);
  Container c;
  c.add("depth", pred.shape(), pred.values());
  c.write((fs::path(out) / "prediction.dten").string());
  json echo{{"command", "infer"},    {"checkpoint", checkpoint},
            {"input", input},        {"seed", mf.seed},
            {"size", mf.size},       {"flip_average", flip_average},
            {"model", config_json(model.config())}};
  write_config_echo(out, echo);
  std::cerr << "wrote " << out << "/prediction.dten\n";
  return 0;
}

int probe_gradcheck() {
  const char* precision = std::getenv("DEPTHNET_PRECISION");
  const bool use32 = precision && std::string(precision) == "32";
  const double tol = use32 ? 5e-2 : 1e-4;
  std::cerr << "gradcheck precision: " << (use32 ? 32 : 64) << "-bit, tolerance " << tol
            << "\n";
  auto checks =
      use32 ? gradcheck_suite<float>(1e-2, 6, false) : gradcheck_suite<double>(1e-5, 6);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : checks) {
    std::cerr << "  " << c.name << ": max rel err " << c.max_rel_err << "\n";
    if (c.max_rel_err > worst) {
      worst = c.max_rel_err;
      worst_name = c.name;
    }
  }
  std::cerr << "worst: " << worst << " (" << worst_name << ")\n";
  if (worst > tol) {
    std::cerr << "FAILED: " << worst_name << " above tolerance " << tol << "\n";
    return 1;
  }
  return 0;
}

int probe_erf() {
  auto extents = measure_lka_extents();
  std::cerr << "group0: " << extents[0] << ", group1: " << extents[1]
            << ", group2: " << extents[2] << "\n";
  for (size_t i = 0; i < 3; ++i) {
    const int expected = lka_groups()[i].support_extent();
    if (extents[i] != expected) {
      std::cerr << "FAILED: group" << i << " extent " << extents[i] << ", expected "
                << expected << "\n";
      return 1;
    }
  }
  return 0;
}

int probe_bins(const ModelFlags& mf) {
  ModelFlags f = mf;
  f.channels = 8;
  ModelConfig cfg = make_config(f);
  DepthNet model(cfg);
  auto scene = generate_scene(mf.seed, f.size, f.size, cfg.d_min, cfg.d_max);
  BinSpec spec = model.bin_spec_for(scene.rgb);
  spec.validate();  // monotone centers inside the depth range, widths sum to 1
  double wmin = spec.widths[0], wmax = spec.widths[0];
  for (double w : spec.widths) {
    wmin = std::min(wmin, w);
    wmax = std::max(wmax, w);
  }
  std::cerr << "bins: " << spec.widths.size() << ", width min " << wmin << " max " << wmax
            << ", centers [" << spec.centers.front() << ", " << spec.centers.back()
            << "] within (" << cfg.d_min << ", " << cfg.d_max << ")\n";
  return 0;
}

int probe_ablate(const ModelFlags& mf) {
  auto results = run_ablation_matrix(mf.size, 8, 16, mf.seed);
  bool ok = true;
  for (const auto& r : results) {
    const bool fine = std::isfinite(r.loss) && r.depth_in_range;
    std::cerr << "glkam=" << (r.use_glkam ? "on" : "off")
              << " gbpm=" << (r.use_gbpm ? "on" : "off") << ": loss " << r.loss << ", delta1 "
              << r.metrics.delta1 << ", depth in range: " << (r.depth_in_range ? "yes" : "no")
              << "\n";
    ok = ok && fine;
  }
  if (!ok) {
    std::cerr << "FAILED: ablation produced a non-finite loss or out-of-range depth\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular depth estimation with gated large-kernel attention and global bins"};
  app.require_subcommand(1);

  ModelFlags train_mf, eval_mf, infer_mf, probe_mf;
  int scenes_n = 8, steps = 100, batch = 8;
  double lr_start = 4e-5, lr_end = 4e-6;
  std::string train_out = "run";

  auto* train_cmd = app.add_subcommand("train", "Train on generated scenes");
  add_model_flags(train_cmd, train_mf);
  train_cmd->add_option("--scenes", scenes_n, "Number of scenes");
  train_cmd->add_option("--steps", steps, "Optimizer steps");
  train_cmd->add_option("--batch", batch, "Batch size");
  train_cmd->add_option("--lr-start", lr_start, "Initial learning rate");
  train_cmd->add_option("--lr-end", lr_end, "Final learning rate");
  train_cmd->add_option("--out", train_out, "Output directory");

  std::string eval_checkpoint, eval_out = "eval";
  int eval_scenes = 8;
  bool flip_average = false, oracle = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on generated scenes");
  add_model_flags(eval_cmd, eval_mf);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file (.dten)");
  eval_cmd->add_option("--scenes", eval_scenes, "Number of scenes");
  eval_cmd->add_flag("--flip-average", flip_average, "Average with the mirrored pass");
  eval_cmd->add_flag("--oracle", oracle, "Score ground truth against itself");
  eval_cmd->add_option("--out", eval_out, "Output directory");

  std::string infer_checkpoint, infer_input, infer_out = "infer";
  bool infer_flip = false;
  auto* infer_cmd = app.add_subcommand("infer", "Predict a depth map and export it");
  add_model_flags(infer_cmd, infer_mf);
  infer_cmd->add_option("--checkpoint", infer_checkpoint, "Checkpoint file (.dten)")
      ->required();
  infer_cmd->add_option("--input", infer_input, "Input sample (.dten); generated if absent");
  infer_cmd->add_flag("--flip-average", infer_flip, "Average with the mirrored pass");
  infer_cmd->add_option("--out", infer_out, "Output directory");

  auto* probe_cmd = app.add_subcommand("probe", "Verification probes");
  probe_cmd->require_subcommand(1);
  auto* pg = probe_cmd->add_subcommand("gradcheck", "Finite-difference check of every op");
  auto* pe = probe_cmd->add_subcommand("erf", "Attention cascade receptive-field extents");
  auto* pb = probe_cmd->add_subcommand("bins", "Print and validate a predicted bin spec");
  add_model_flags(pb, probe_mf);
  auto* pa = probe_cmd->add_subcommand("ablate", "Run all four module-toggle configurations");
  add_model_flags(pa, probe_mf);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed())
      return cmd_train(train_mf, scenes_n, steps, batch, lr_start, lr_end, train_out);
    if (eval_cmd->parsed())
      return cmd_eval(eval_checkpoint, eval_mf, eval_scenes, flip_average, oracle, eval_out);
    if (infer_cmd->parsed())
      return cmd_infer(infer_checkpoint, infer_input, infer_mf, infer_flip, infer_out);
    if (probe_cmd->parsed()) {
      if (pg->parsed()) return probe_gradcheck();
      if (pe->parsed()) return probe_erf();
      if (pb->parsed()) return probe_bins(probe_mf);
      if (pa->parsed()) return probe_ablate(probe_mf);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
