// uqdepth command-line front end: dataset generation, training, evaluation,
// prediction, sparsification analysis, and point-cloud reconstruction.

#include <CLI11.hpp>

#include <ATen/Parallel.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "uqdepth/common.hpp"
#include "uqdepth/datasets.hpp"
#include "uqdepth/geometry.hpp"
#include "uqdepth/image_io.hpp"
#include "uqdepth/metrics.hpp"
#include "uqdepth/sparsification.hpp"
#include "uqdepth/trainer.hpp"

namespace fs = std::filesystem;
using namespace uqdepth;

namespace {

struct GenToyArgs {
  int count = 100;
  int size = 64;
  uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string data, out, config_file;
  std::string mode = "uncertainty-fusion";
  int64_t epochs = 25, pretrain_epochs = 5, batch_size = 10;
  double lr = 1e-4, gamma = 0.9;
  double lambda_global = 0.1, lambda_local = 0.1, lambda_depth = 1.0, lambda_edge = 1.0,
         lambda_b = 0.1;
  uint64_t seed = 0;
  int input_size = 0;  // 0: take the dataset's native size
  bool no_map = false, no_augment = false, crop_borders = false;
};

struct EvalArgs {
  std::string ckpt, data, out;
  bool median_scale = false;
  bool crop_borders = false;
};

struct SparsifyArgs {
  std::string ckpt, data, out;
  bool median_scale = false;
  bool plot = false;
};

struct ReconstructArgs {
  std::string ckpt, data, out;
  double fx = 0, fy = 0, cx = -1, cy = -1;
};

std::vector<Sample> load_for_model(const std::string& data_dir, int64_t input_size,
                                   bool require_depth, bool crop_borders,
                                   DatasetMeta* meta_out) {
  DatasetOptions opts;
  opts.target_size = static_cast<int>(input_size);
  opts.require_depth = require_depth;
  opts.crop_borders = crop_borders;
  DiskDataset ds(data_dir, opts);
  if (meta_out != nullptr) *meta_out = ds.meta();
  return ds.load_all();
}

void write_metrics_csv(const fs::path& path, const std::vector<std::string>& names,
                       const std::vector<MetricReport>& reports) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "image";
  for (const auto& c : MetricReport::column_names()) out << "," << c;
  out << ",n_pixels\n";
  for (size_t i = 0; i < reports.size(); ++i) {
    out << names[i] << "," << reports[i].csv_row() << "\n";
  }
  const auto agg = aggregate_reports(reports);
  out << "mean," << agg.mean.csv_row() << "\n";
  out << "stddev," << agg.stddev.csv_row() << "\n";
}

int run_gen_toy(const GenToyArgs& args) {
  ToyColonOptions opts;
  opts.count = args.count;
  opts.size = args.size;
  opts.seed = args.seed;
  write_toy_dataset(args.out, opts);
  std::cout << "wrote " << args.count << " samples (" << args.size << "x" << args.size
            << ") under " << args.out << "\n";
  return 0;
}

int run_train(TrainArgs& args, const CLI::App& cmd) {
  TrainConfig cfg;
  if (!args.config_file.empty()) {
    cfg = parse_train_config(read_key_value_file(args.config_file));
  }
  // flags override the config file only when given on the command line
  auto given = [&](const std::string& f) { return cmd.count(f) > 0; };
  if (given("--epochs") || args.config_file.empty()) cfg.epochs = args.epochs;
  if (given("--pretrain-epochs") || args.config_file.empty()) cfg.pretrain_epochs = args.pretrain_epochs;
  if (given("--batch-size") || args.config_file.empty()) cfg.batch_size = args.batch_size;
  if (given("--lr") || args.config_file.empty()) cfg.learning_rate = args.lr;
  if (given("--gamma") || args.config_file.empty()) cfg.lr_decay_gamma = args.gamma;
  if (given("--seed") || args.config_file.empty()) cfg.seed = args.seed;
  if (given("--mode") || args.config_file.empty()) cfg.fusion_mode = fusion_mode_from_string(args.mode);
  if (given("--lambda-global")) cfg.loss_weights.lambda_global = args.lambda_global;
  if (given("--lambda-local")) cfg.loss_weights.lambda_local = args.lambda_local;
  if (given("--lambda-depth")) cfg.loss_weights.lambda_depth = args.lambda_depth;
  if (given("--lambda-edge")) cfg.loss_weights.lambda_edge = args.lambda_edge;
  if (given("--lambda-b")) cfg.loss_weights.lambda_b_reg = args.lambda_b;
  if (args.no_map) cfg.disable_map_terms = true;
  if (args.no_augment) cfg.augment_training = false;

  fs::create_directories(args.out);
  cfg.log_dir = (fs::path(args.out) / "logs").string();

  DatasetOptions dopts;
  dopts.target_size = args.input_size;
  dopts.require_depth = true;
  dopts.crop_borders = args.crop_borders;
  DiskDataset ds(args.data, dopts);
  auto data = ds.load_all();
  if (data.empty()) throw std::runtime_error("dataset is empty: " + args.data);

  ModelConfig model_cfg;
  model_cfg.mode = cfg.fusion_mode;
  const int64_t size = data.front().image.size(1);
  model_cfg.local.input_size = size;
  model_cfg.global.input_size = size;
  model_cfg.local.d_max = ds.meta().d_max;
  model_cfg.global.d_max = ds.meta().d_max;

  const FusionMode m = cfg.fusion_mode;
  const bool wants_local_conv =
      m != FusionMode::kGlobalOnly && m != FusionMode::kTransformerTransformer;
  const bool wants_global_attn = m != FusionMode::kLocalOnly && m != FusionMode::kCnnCnn;

  std::optional<Checkpoint> local_ckpt, global_ckpt;
  if (cfg.pretrain_epochs > 0 && wants_local_conv) {
    std::cout << "pre-training local branch (" << cfg.pretrain_epochs << " epochs)\n";
    auto r = pretrain_branch(BranchKind::kLocal, model_cfg, data, cfg);
    save_checkpoint(r.checkpoint, fs::path(args.out) / "pretrain_local.uqck");
    local_ckpt = std::move(r.checkpoint);
  }
  if (cfg.pretrain_epochs > 0 && wants_global_attn) {
    std::cout << "pre-training global branch (" << cfg.pretrain_epochs << " epochs)\n";
    auto r = pretrain_branch(BranchKind::kGlobal, model_cfg, data, cfg);
    save_checkpoint(r.checkpoint, fs::path(args.out) / "pretrain_global.uqck");
    global_ckpt = std::move(r.checkpoint);
  }

  std::cout << "fine-tuning (" << cfg.epochs << " epochs, mode " << to_string(m) << ")\n";
  auto result = finetune(model_cfg, data, cfg, local_ckpt ? &*local_ckpt : nullptr,
                         global_ckpt ? &*global_ckpt : nullptr);
  save_checkpoint(result.checkpoint, fs::path(args.out) / "model.uqck");

  for (const auto& e : result.epochs) {
    std::cout << "epoch " << e.epoch << ": loss " << e.mean_total << " (lr " << e.lr << ")\n";
  }
  if (!result.validation.empty()) {
    const auto& v = result.validation.back();
    std::cout << "validation delta1 " << v.delta1 << ", rmse " << v.rmse << "\n";
  }
  std::cout << "checkpoint: " << (fs::path(args.out) / "model.uqck").string() << "\n";
  return 0;
}

int run_eval(const EvalArgs& args) {
  auto [model, ckpt] = load_model(args.ckpt);
  const auto cfg = ModelConfig::from_json(ckpt.model_config_json);
  auto data = load_for_model(args.data, cfg.local.input_size, /*require_depth=*/true,
                             args.crop_borders, nullptr);
  if (data.empty()) throw std::runtime_error("dataset is empty: " + args.data);
  auto reports = evaluate_model(model, data, args.median_scale);

  fs::create_directories(args.out);
  std::vector<std::string> names;
  names.reserve(data.size());
  for (const auto& s : data) names.push_back(s.source_id);
  write_metrics_csv(fs::path(args.out) / "metrics.csv", names, reports);

  const auto agg = aggregate_reports(reports);
  std::ofstream js(fs::path(args.out) / "metrics.json");
  js << "{\"mean\":" << agg.mean.to_json() << ",\"stddev\":" << agg.stddev.to_json()
     << ",\"n_images\":" << agg.n_images << "}\n";

  const auto cols = MetricReport::column_names();
  const auto mean = agg.mean.values();
  const auto sd = agg.stddev.values();
  for (size_t i = 0; i < cols.size(); ++i) {
    std::cout << cols[i] << ": " << mean[i] << " +/- " << sd[i] << "\n";
  }
  return 0;
}

int run_predict(const EvalArgs& args) {
  auto [model, ckpt] = load_model(args.ckpt);
  const auto cfg = ModelConfig::from_json(ckpt.model_config_json);
  DatasetMeta meta;
  auto data = load_for_model(args.data, cfg.local.input_size, /*require_depth=*/false,
                             args.crop_borders, &meta);
  fs::create_directories(args.out);
  const double png_scale = meta.d_max / 65535.0;

  torch::NoGradGuard no_grad;
  for (const auto& s : data) {
    auto out = model->forward(s.image.unsqueeze(0));
    const fs::path base = fs::path(args.out) / s.source_id;
    write_depth_png(base.string() + "_depth.png", out.depth_fused.squeeze(0), png_scale);

    std::vector<torch::Tensor> panels = {s.image,
                                         colorize(out.depth_fused.squeeze(0), 0.0, meta.d_max)};
    if (out.sigma_local.defined()) {
      write_sigma_grid(base.string() + "_sigma_local.uqdp", out.sigma_local.squeeze(0));
      panels.push_back(colorize(out.sigma_local.squeeze(0)));
    }
    if (out.sigma_global.defined()) {
      write_sigma_grid(base.string() + "_sigma_global.uqdp", out.sigma_global.squeeze(0));
      panels.push_back(colorize(out.sigma_global.squeeze(0)));
    }
    write_rgb_png(base.string() + "_viz.png", hstack_panels(panels));
  }
  std::cout << "wrote predictions for " << data.size() << " images under " << args.out << "\n";
  return 0;
}

int run_sparsify(const SparsifyArgs& args) {
  auto [model, ckpt] = load_model(args.ckpt);
  const auto cfg = ModelConfig::from_json(ckpt.model_config_json);
  auto data = load_for_model(args.data, cfg.local.input_size, /*require_depth=*/true, false,
                             nullptr);
  if (data.empty()) throw std::runtime_error("dataset is empty: " + args.data);
  fs::create_directories(args.out);

  const auto fractions = default_fractions();
  struct BranchCurves {
    std::vector<SparsificationCurve> curves, oracles;
  };
  BranchCurves local, global;

  torch::NoGradGuard no_grad;
  auto accumulate = [&](BranchCurves& bc, const torch::Tensor& depth,
                        const torch::Tensor& sigma, const torch::Tensor& gt) {
    auto pred = depth;
    if (args.median_scale) pred = median_scale(pred, gt).first;
    auto err = (pred - gt).abs().flatten().to(torch::kFloat64).contiguous();
    auto rank = sigma.flatten().to(torch::kFloat64).contiguous();
    std::vector<double> errors(err.data_ptr<double>(), err.data_ptr<double>() + err.numel());
    std::vector<double> ranking(rank.data_ptr<double>(), rank.data_ptr<double>() + rank.numel());
    bc.curves.push_back(sparsification_curve(errors, ranking, fractions));
    bc.oracles.push_back(oracle_curve(errors, fractions));
  };
  for (const auto& s : data) {
    auto out = model->forward(s.image.unsqueeze(0));
    if (out.sigma_local.defined()) {
      accumulate(local, out.depth_local.squeeze(0), out.sigma_local.squeeze(0), s.depth);
    }
    if (out.sigma_global.defined()) {
      accumulate(global, out.depth_global.squeeze(0), out.sigma_global.squeeze(0), s.depth);
    }
  }

  auto emit = [&](const std::string& branch, const BranchCurves& bc) {
    if (bc.curves.empty()) return;
    const auto curve = average_curves(bc.curves);
    const auto oracle = average_curves(bc.oracles);
    const auto gap = sparsification_error(curve, oracle);
    const fs::path csv = fs::path(args.out) / ("sparsification_" + branch + ".csv");
    std::ofstream out(csv);
    out << "fraction,rmse_sparsification,rmse_oracle,difference\n";
    for (size_t i = 0; i < curve.fractions.size(); ++i) {
      out << curve.fractions[i] << "," << curve.rmse_values[i] << "," << oracle.rmse_values[i]
          << "," << gap.difference.rmse_values[i] << "\n";
    }
    std::cout << branch << " sparsification error area: " << gap.area << "\n";
    if (args.plot) {
      auto img = render_line_plot({curve.fractions, oracle.fractions},
                                  {curve.rmse_values, oracle.rmse_values},
                                  {"sparsification", "oracle"});
      write_rgb_png(fs::path(args.out) / ("sparsification_" + branch + ".png"), img);
    }
  };
  emit("local", local);
  emit("global", global);
  return 0;
}

int run_reconstruct(const ReconstructArgs& args) {
  auto [model, ckpt] = load_model(args.ckpt);
  const auto cfg = ModelConfig::from_json(ckpt.model_config_json);
  DatasetMeta meta;
  auto data = load_for_model(args.data, cfg.local.input_size, /*require_depth=*/false, false,
                             &meta);
  fs::create_directories(args.out);

  torch::NoGradGuard no_grad;
  for (const auto& s : data) {
    auto out = model->forward(s.image.unsqueeze(0));
    auto depth = out.depth_fused.squeeze(0);
    CameraIntrinsics k = CameraIntrinsics::default_for(depth.size(-1), depth.size(-2));
    if (meta.intrinsics) {
      k.fx = (*meta.intrinsics)[0];
      k.fy = (*meta.intrinsics)[1];
      k.cx = (*meta.intrinsics)[2];
      k.cy = (*meta.intrinsics)[3];
    }
    if (args.fx > 0) k.fx = args.fx;
    if (args.fy > 0) k.fy = args.fy;
    if (args.cx >= 0) k.cx = args.cx;
    if (args.cy >= 0) k.cy = args.cy;
    write_ply(backproject(depth, s.image, k), fs::path(args.out) / (s.source_id + ".ply"));
  }
  std::cout << "wrote " << data.size() << " point clouds under " << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  at::set_num_threads(thread_cap_from_env(at::get_num_threads()));

  CLI::App app{"uncertainty-fused two-branch depth estimation"};
  app.require_subcommand(1);

  GenToyArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-toy", "generate a procedural toy dataset");
  cmd_gen->add_option("--count", gen.count, "number of samples")->default_val(100);
  cmd_gen->add_option("--size", gen.size, "image size (pixels)")->default_val(64);
  cmd_gen->add_option("--seed", gen.seed, "random seed")->default_val(0);
  cmd_gen->add_option("--out", gen.out, "output directory")->required();

  TrainArgs tr;
  auto* cmd_train = app.add_subcommand("train", "pre-train both branches, then fine-tune");
  cmd_train->add_option("--data", tr.data, "dataset directory")->required();
  cmd_train->add_option("--out", tr.out, "output directory")->required();
  cmd_train->add_option("--config", tr.config_file, "key=value config file");
  cmd_train->add_option("--epochs", tr.epochs, "fine-tuning epochs");
  cmd_train->add_option("--pretrain-epochs", tr.pretrain_epochs, "per-branch pre-training epochs");
  cmd_train->add_option("--batch-size", tr.batch_size, "batch size");
  cmd_train->add_option("--lr", tr.lr, "initial learning rate");
  cmd_train->add_option("--gamma", tr.gamma, "per-epoch lr decay");
  cmd_train->add_option("--seed", tr.seed, "random seed");
  cmd_train->add_option("--mode", tr.mode,
                        "fusion mode: uncertainty-fusion|concat|merge-equally|local-only|"
                        "global-only|cnn+cnn|transformer+transformer");
  cmd_train->add_option("--size", tr.input_size, "resize inputs to this resolution");
  cmd_train->add_option("--lambda-global", tr.lambda_global, "global MAP loss weight");
  cmd_train->add_option("--lambda-local", tr.lambda_local, "local MAP loss weight");
  cmd_train->add_option("--lambda-depth", tr.lambda_depth, "fused L1 weight");
  cmd_train->add_option("--lambda-edge", tr.lambda_edge, "fused edge-loss weight");
  cmd_train->add_option("--lambda-b", tr.lambda_b, "log-sigma weight inside the MAP loss");
  cmd_train->add_flag("--no-map", tr.no_map, "drop the MAP terms (w/o MAP ablation)");
  cmd_train->add_flag("--no-augment", tr.no_augment, "disable training augmentation");
  cmd_train->add_flag("--crop-borders", tr.crop_borders, "crop black borders at load");

  EvalArgs ev;
  auto* cmd_eval = app.add_subcommand("eval", "compute the nine depth metrics");
  cmd_eval->add_option("--ckpt", ev.ckpt, "checkpoint file")->required();
  cmd_eval->add_option("--data", ev.data, "dataset directory")->required();
  cmd_eval->add_option("--out", ev.out, "output directory")->required();
  cmd_eval->add_flag("--median-scale", ev.median_scale, "median-scale predictions first");
  cmd_eval->add_flag("--crop-borders", ev.crop_borders, "crop black borders at load");

  EvalArgs pr;
  auto* cmd_predict = app.add_subcommand("predict", "write depth maps, sigma grids, and viz");
  cmd_predict->add_option("--ckpt", pr.ckpt, "checkpoint file")->required();
  cmd_predict->add_option("--data", pr.data, "dataset directory")->required();
  cmd_predict->add_option("--out", pr.out, "output directory")->required();
  cmd_predict->add_flag("--crop-borders", pr.crop_borders, "crop black borders at load");

  SparsifyArgs sp;
  auto* cmd_sparsify = app.add_subcommand("sparsify", "sparsification / oracle curves");
  cmd_sparsify->add_option("--ckpt", sp.ckpt, "checkpoint file")->required();
  cmd_sparsify->add_option("--data", sp.data, "dataset directory")->required();
  cmd_sparsify->add_option("--out", sp.out, "output directory")->required();
  cmd_sparsify->add_flag("--median-scale", sp.median_scale, "median-scale before errors");
  cmd_sparsify->add_flag("--plot", sp.plot, "render curve plots as PNG");

  ReconstructArgs rc;
  auto* cmd_rec = app.add_subcommand("reconstruct", "back-project predictions to PLY clouds");
  cmd_rec->add_option("--ckpt", rc.ckpt, "checkpoint file")->required();
  cmd_rec->add_option("--data", rc.data, "dataset directory")->required();
  cmd_rec->add_option("--out", rc.out, "output directory")->required();
  cmd_rec->add_option("--fx", rc.fx, "focal length x (pixels)");
  cmd_rec->add_option("--fy", rc.fy, "focal length y (pixels)");
  cmd_rec->add_option("--cx", rc.cx, "principal point x");
  cmd_rec->add_option("--cy", rc.cy, "principal point y");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
      return app.exit(e);
    }
    app.exit(e);
    return 2;
  }

  try {
    if (cmd_gen->parsed()) return run_gen_toy(gen);
    if (cmd_train->parsed()) return run_train(tr, *cmd_train);
    if (cmd_eval->parsed()) return run_eval(ev);
    if (cmd_predict->parsed()) return run_predict(pr);
    if (cmd_sparsify->parsed()) return run_sparsify(sp);
    if (cmd_rec->parsed()) return run_reconstruct(rc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
