#include "uqdepth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace uqdepth {

void TrainConfig::validate() const {
  if (epochs < 0 || pretrain_epochs < 0) throw std::invalid_argument("epoch counts must be >= 0");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (lr_decay_gamma <= 0.0 || lr_decay_gamma > 1.0) {
    throw std::invalid_argument("lr_decay_gamma must lie in (0,1]");
  }
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    throw std::invalid_argument("validation_fraction must lie in [0,1)");
  }
  loss_weights.validate();
  augmentation.validate();
}

std::map<std::string, std::string> read_key_value_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected key = value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

TrainConfig parse_train_config(const std::map<std::string, std::string>& kv, TrainConfig base) {
  TrainConfig cfg = base;
  for (const auto& [key, value] : kv) {
    try {
      if (key == "epochs") cfg.epochs = std::stoll(value);
      else if (key == "pretrain_epochs") cfg.pretrain_epochs = std::stoll(value);
      else if (key == "batch_size") cfg.batch_size = std::stoll(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "lr_decay_gamma") cfg.lr_decay_gamma = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "fusion_mode") cfg.fusion_mode = fusion_mode_from_string(value);
      else if (key == "disable_map_terms") cfg.disable_map_terms = (value == "true" || value == "1");
      else if (key == "validation_fraction") cfg.validation_fraction = std::stod(value);
      else if (key == "augment_training") cfg.augment_training = (value == "true" || value == "1");
      else if (key == "median_scale_validation") cfg.median_scale_validation = (value == "true" || value == "1");
      else if (key == "lambda_global") cfg.loss_weights.lambda_global = std::stod(value);
      else if (key == "lambda_local") cfg.loss_weights.lambda_local = std::stod(value);
      else if (key == "lambda_depth") cfg.loss_weights.lambda_depth = std::stod(value);
      else if (key == "lambda_edge") cfg.loss_weights.lambda_edge = std::stod(value);
      else if (key == "lambda_b") cfg.loss_weights.lambda_b_reg = std::stod(value);
      else if (key == "p_vflip") cfg.augmentation.p_vflip = std::stod(value);
      else if (key == "p_rotate") cfg.augmentation.p_rotate = std::stod(value);
      else if (key == "p_channel_permute") cfg.augmentation.p_channel_permute = std::stod(value);
      else throw std::runtime_error("unknown config key \"" + key + "\"");
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("bad value for config key \"" + key + "\": " + value);
    }
  }
  cfg.validate();
  return cfg;
}

double lr_at_epoch(double lr0, double gamma, int64_t completed_epochs) {
  return lr0 * std::pow(gamma, static_cast<double>(completed_epochs));
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_validation(
    const std::vector<Sample>& data, double validation_fraction) {
  std::vector<Sample> train, val;
  const auto threshold = static_cast<uint64_t>(validation_fraction * 1000.0);
  for (const auto& s : data) {
    const uint64_t bucket =
        std::stoull(fnv1a_hex(s.source_id).substr(8), nullptr, 16) % 1000;
    (bucket < threshold ? val : train).push_back(s);
  }
  return {std::move(train), std::move(val)};
}

namespace {

void set_adam_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

std::pair<torch::Tensor, torch::Tensor> make_batch(const std::vector<Sample>& data,
                                                   const std::vector<size_t>& order,
                                                   size_t begin, size_t end, bool do_augment,
                                                   const AugmentationConfig& aug,
                                                   uint64_t epoch_stream) {
  std::vector<torch::Tensor> images, depths;
  images.reserve(end - begin);
  depths.reserve(end - begin);
  for (size_t i = begin; i < end; ++i) {
    const size_t idx = order[i];
    const Sample& s = data[idx];
    if (do_augment) {
      // per-sample stream keyed by dataset index: order-independent
      Rng rng = Rng::for_stream(epoch_stream, static_cast<uint64_t>(idx));
      Sample a = augment(s, aug, rng);
      images.push_back(a.image);
      depths.push_back(a.depth);
    } else {
      images.push_back(s.image);
      depths.push_back(s.depth);
    }
  }
  return {torch::stack(images), torch::stack(depths)};
}

struct StepLogger {
  std::ofstream file;

  explicit StepLogger(const std::string& path) {
    if (path.empty()) return;
    file.open(path, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open log file: " + path);
    file << "epoch,step,total,map_global,map_local,depth,edge\n";
  }
  void log(int64_t epoch, int64_t step, double total, double mg, double ml, double d,
           double e) {
    if (!file.is_open()) return;
    file << epoch << "," << step << "," << total << "," << mg << "," << ml << "," << d << ","
         << e << "\n";
  }
};

struct StepLoss {
  torch::Tensor total;
  double map_global = 0, map_local = 0, depth = 0, edge = 0;
};

/// Mode-aware loss assembly. Dual-branch modes use the full weighted total;
/// single-branch modes apply the branch MAP term plus depth/edge on the
/// (identical) fused map.
StepLoss assemble_loss(const ModelOutput& out, const torch::Tensor& gt, LossWeights w,
                       FusionMode mode, bool disable_map_terms) {
  if (disable_map_terms) {
    w.lambda_global = 0.0;
    w.lambda_local = 0.0;
  }
  StepLoss s;
  if (is_dual_branch(mode)) {
    auto b = total_loss(out, gt, w);
    s.total = b.total;
    s.map_global = b.map_global.item<double>();
    s.map_local = b.map_local.item<double>();
    s.depth = b.depth.item<double>();
    s.edge = b.edge.item<double>();
    return s;
  }
  auto d = depth_loss(out.depth_fused, gt);
  auto e = edge_loss(out.depth_fused, gt);
  s.total = w.lambda_depth * d + w.lambda_edge * e;
  if (out.has_local()) {
    auto m = map_loss(out.depth_local, gt, out.sigma_local, w.lambda_b_reg);
    s.total = s.total + w.lambda_local * m;
    s.map_local = m.item<double>();
  }
  if (out.has_global()) {
    auto m = map_loss(out.depth_global, gt, out.sigma_global, w.lambda_b_reg);
    s.total = s.total + w.lambda_global * m;
    s.map_global = m.item<double>();
  }
  s.depth = d.item<double>();
  s.edge = e.item<double>();
  return s;
}

TrainResult run_training(DepthEstimator model, const std::vector<Sample>& train_data,
                         const std::vector<Sample>& val_data, const TrainConfig& cfg,
                         int64_t n_epochs, bool pretrain_objective,
                         const std::string& step_log_path, const std::string& val_log_path,
                         const std::string& model_config_json, const std::string& digest,
                         uint64_t shuffle_salt) {
  torch::optim::Adam optimizer(model->parameters(),
                               torch::optim::AdamOptions(cfg.learning_rate));
  StepLogger step_log(step_log_path);
  std::ofstream val_log;
  if (!val_log_path.empty() && !val_data.empty()) {
    val_log.open(val_log_path, std::ios::trunc);
    val_log << "epoch";
    for (const auto& c : MetricReport::column_names()) val_log << "," << c;
    val_log << "\n";
  }

  TrainResult result;
  std::vector<size_t> order(train_data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int64_t epoch = 1; epoch <= n_epochs; ++epoch) {
    model->train();
    set_adam_lr(optimizer, lr_at_epoch(cfg.learning_rate, cfg.lr_decay_gamma, epoch - 1));

    // deterministic per-epoch shuffle
    Rng shuffle_rng = Rng::for_stream(mix64(cfg.seed ^ shuffle_salt), static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(shuffle_rng.uniform_int(static_cast<int>(i)))]);
    }
    const uint64_t aug_stream = mix64(cfg.seed ^ shuffle_salt) + static_cast<uint64_t>(epoch);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_at_epoch(cfg.learning_rate, cfg.lr_decay_gamma, epoch - 1);
    int64_t steps = 0;
    for (size_t begin = 0; begin < train_data.size(); begin += cfg.batch_size) {
      const size_t end = std::min(begin + static_cast<size_t>(cfg.batch_size), train_data.size());
      auto [images, depths] = make_batch(train_data, order, begin, end,
                                         cfg.augment_training, cfg.augmentation, aug_stream);
      optimizer.zero_grad();
      auto out = model->forward(images);
      StepLoss loss;
      if (pretrain_objective) {
        // branch-only pre-training: depth + edge on this branch's prediction
        auto d = depth_loss(out.depth_fused, depths);
        auto e = edge_loss(out.depth_fused, depths);
        loss.total = d + e;
        loss.depth = d.item<double>();
        loss.edge = e.item<double>();
      } else {
        loss = assemble_loss(out, depths, cfg.loss_weights, cfg.fusion_mode,
                             cfg.disable_map_terms);
      }
      loss.total.backward();
      optimizer.step();

      ++steps;
      const double total = loss.total.item<double>();
      log.mean_total += total;
      log.mean_map_global += loss.map_global;
      log.mean_map_local += loss.map_local;
      log.mean_depth += loss.depth;
      log.mean_edge += loss.edge;
      step_log.log(epoch, steps, total, loss.map_global, loss.map_local, loss.depth, loss.edge);
    }
    if (steps > 0) {
      log.mean_total /= steps;
      log.mean_map_global /= steps;
      log.mean_map_local /= steps;
      log.mean_depth /= steps;
      log.mean_edge /= steps;
    }
    result.epochs.push_back(log);

    if (!val_data.empty()) {
      auto reports = evaluate_model(model, val_data, cfg.median_scale_validation);
      const auto agg = aggregate_reports(reports);
      result.validation.push_back(agg.mean);
      if (val_log.is_open()) {
        val_log << epoch;
        for (double v : agg.mean.values()) val_log << "," << v;
        val_log << "\n";
        val_log.flush();
      }
    }
  }

  result.checkpoint = snapshot(*model, &optimizer, n_epochs, digest, model_config_json);
  return result;
}

std::string log_path(const TrainConfig& cfg, const std::string& name) {
  if (cfg.log_dir.empty()) return {};
  fs::create_directories(cfg.log_dir);
  return (fs::path(cfg.log_dir) / name).string();
}

}  // namespace

TrainResult pretrain_branch(BranchKind kind, const ModelConfig& model_cfg,
                            const std::vector<Sample>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw std::runtime_error("pretrain_branch: empty dataset");

  ModelConfig branch_cfg = model_cfg;
  branch_cfg.mode = kind == BranchKind::kLocal ? FusionMode::kLocalOnly : FusionMode::kGlobalOnly;

  torch::manual_seed(static_cast<int64_t>(mix64(cfg.seed + (kind == BranchKind::kLocal ? 1 : 2))));
  DepthEstimator model(branch_cfg);

  auto [train_data, val_data] = split_train_validation(data, cfg.validation_fraction);
  if (train_data.empty()) throw std::runtime_error("pretrain_branch: no training samples after split");

  const std::string branch = kind == BranchKind::kLocal ? "local" : "global";
  return run_training(model, train_data, /*val=*/{}, cfg, cfg.pretrain_epochs,
                      /*pretrain_objective=*/true, log_path(cfg, "pretrain_" + branch + ".csv"),
                      {}, branch_cfg.to_json(), branch_cfg.digest(),
                      /*shuffle_salt=*/kind == BranchKind::kLocal ? 0x10c41ull : 0x910ba1ull);
}

TrainResult finetune(const ModelConfig& model_cfg, const std::vector<Sample>& data,
                     const TrainConfig& cfg, const Checkpoint* local_ckpt,
                     const Checkpoint* global_ckpt) {
  cfg.validate();
  if (data.empty()) throw std::runtime_error("finetune: empty dataset");

  ModelConfig joint_cfg = model_cfg;
  joint_cfg.mode = cfg.fusion_mode;

  torch::manual_seed(static_cast<int64_t>(mix64(cfg.seed)));
  DepthEstimator model(joint_cfg);
  if (local_ckpt != nullptr) apply_to(*local_ckpt, *model, /*strict=*/false);
  if (global_ckpt != nullptr) apply_to(*global_ckpt, *model, /*strict=*/false);

  auto [train_data, val_data] = split_train_validation(data, cfg.validation_fraction);
  if (cfg.epochs > 0 && train_data.empty()) {
    throw std::runtime_error("finetune: no training samples after split");
  }

  return run_training(model, train_data, val_data, cfg, cfg.epochs,
                      /*pretrain_objective=*/false, log_path(cfg, "finetune.csv"),
                      log_path(cfg, "validation.csv"), joint_cfg.to_json(), joint_cfg.digest(),
                      /*shuffle_salt=*/0xf17e7ull);
}

std::vector<MetricReport> evaluate_model(DepthEstimator& model,
                                         const std::vector<Sample>& samples,
                                         bool median_scaling) {
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  std::vector<MetricReport> reports;
  reports.reserve(samples.size());
  for (const auto& s : samples) {
    TORCH_CHECK(s.has_depth(), "evaluate_model: sample ", s.source_id, " lacks depth");
    auto out = model->forward(s.image.unsqueeze(0));
    reports.push_back(compute_metrics(out.depth_fused.squeeze(0), s.depth, median_scaling));
  }
  if (was_training) model->train();
  return reports;
}

std::pair<DepthEstimator, Checkpoint> load_model(const fs::path& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  ModelConfig cfg = ModelConfig::from_json(ckpt.model_config_json);
  DepthEstimator model(cfg);
  apply_to(ckpt, *model, /*strict=*/true);
  model->eval();
  return {std::move(model), std::move(ckpt)};
}

}  // namespace uqdepth
