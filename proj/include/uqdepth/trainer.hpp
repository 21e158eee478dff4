#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uqdepth/checkpoint.hpp"
#include "uqdepth/datasets.hpp"
#include "uqdepth/fusion.hpp"
#include "uqdepth/losses.hpp"
#include "uqdepth/metrics.hpp"

namespace uqdepth {

enum class BranchKind { kLocal, kGlobal };

struct TrainConfig {
  int64_t epochs = 25;           // joint fine-tuning epochs
  int64_t pretrain_epochs = 5;   // per-branch pre-training epochs
  int64_t batch_size = 10;
  double learning_rate = 1e-4;
  double lr_decay_gamma = 0.9;   // per-epoch multiplicative decay
  LossWeights loss_weights;
  uint64_t seed = 0;
  FusionMode fusion_mode = FusionMode::kUncertainty;
  bool disable_map_terms = false;  // "w/o MAP loss" ablation: keeps the fusion path
  double validation_fraction = 0.1;
  AugmentationConfig augmentation;
  bool augment_training = true;
  bool median_scale_validation = true;
  std::string log_dir;  // CSV logs are written here when non-empty

  void validate() const;
};

/// Flat key-value config text ("epochs = 25" per line, '#' comments). Keys
/// mirror the TrainConfig fields; unknown keys are an error.
TrainConfig parse_train_config(const std::map<std::string, std::string>& kv,
                               TrainConfig base = {});
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

/// lr0 * gamma^completed_epochs, the exact schedule.
double lr_at_epoch(double lr0, double gamma, int64_t completed_epochs);

/// Deterministic 10%-style holdout: a sample validates when the FNV hash of
/// its source_id falls below the fraction. Independent of sample order.
std::pair<std::vector<Sample>, std::vector<Sample>> split_train_validation(
    const std::vector<Sample>& data, double validation_fraction);

struct EpochLog {
  int64_t epoch = 0;
  double mean_total = 0, mean_map_global = 0, mean_map_local = 0, mean_depth = 0,
         mean_edge = 0;
  double lr = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> epochs;
  std::vector<MetricReport> validation;  // per finetune epoch, when a holdout exists
};

/// Independent branch pre-training with L_depth + L_edge on the branch's own
/// prediction. The branch lives inside a single-branch estimator so tensor
/// names line up with the joint model for merging.
TrainResult pretrain_branch(BranchKind kind, const ModelConfig& model_cfg,
                            const std::vector<Sample>& data, const TrainConfig& cfg);

/// Joint fine-tuning of both branches and the uncertainty heads under the
/// configured fusion mode. Pretraining checkpoints, when given, are merged
/// in by name before training; epochs == 0 returns the merged state.
TrainResult finetune(const ModelConfig& model_cfg, const std::vector<Sample>& data,
                     const TrainConfig& cfg, const Checkpoint* local_ckpt = nullptr,
                     const Checkpoint* global_ckpt = nullptr);

/// Per-image metric reports (eval mode, no grad, fused prediction).
std::vector<MetricReport> evaluate_model(DepthEstimator& model,
                                         const std::vector<Sample>& samples,
                                         bool median_scaling);

/// Rebuilds the model a checkpoint was trained with and loads it strictly.
std::pair<DepthEstimator, Checkpoint> load_model(const std::filesystem::path& ckpt_path);

}  // namespace uqdepth
