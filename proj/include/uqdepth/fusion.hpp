#pragma once

#include <torch/torch.h>

#include <string>
#include <tuple>

#include "uqdepth/global_branch.hpp"
#include "uqdepth/local_branch.hpp"

namespace uqdepth {

/// Uncertainty floor. The MAP loss contains log(sigma) and 1/sigma, so sigma
/// must stay away from zero; the floor barely moves the confidence
/// (C(1e-3) = 0.73086 vs C(0) = 0.73106).
inline constexpr double kSigmaMin = 1e-3;

enum class FusionMode {
  kUncertainty,     // confidence-softmax weighting of local + global
  kConcat,          // channel concat of the two depth maps + 3x3 conv head
  kMergeEqually,    // plain average of the two depth maps
  kLocalOnly,
  kGlobalOnly,
  kCnnCnn,          // two convolutional branches under uncertainty fusion
  kTransformerTransformer,
};

FusionMode fusion_mode_from_string(const std::string& name);
std::string to_string(FusionMode mode);
bool is_dual_branch(FusionMode mode);
/// True when fused = confidence-softmax combination of the two branches.
bool uses_confidence_weights(FusionMode mode);

/// Everything one forward pass produces. Absent fields (single-branch modes,
/// weight-free fusion ops) are left undefined; check has_*().
struct ModelOutput {
  torch::Tensor depth_local, depth_global, depth_fused;
  torch::Tensor sigma_local, sigma_global;
  torch::Tensor w_local, w_global;

  bool has_local() const { return depth_local.defined(); }
  bool has_global() const { return depth_global.defined(); }
  bool has_weights() const { return w_local.defined() && w_global.defined(); }
};

/// 3x3 conv + ReLU + sigma floor on a branch's final decoder features; the
/// two branches own independent heads. Output is bilinearly upsampled to
/// out_hw when the feature resolution differs.
struct UncertaintyHeadImpl : torch::nn::Module {
  explicit UncertaintyHeadImpl(int64_t in_channels, double sigma_min = kSigmaMin);
  torch::Tensor forward(const torch::Tensor& features,
                        torch::IntArrayRef out_hw = {});

  torch::nn::Conv2d conv{nullptr};
  double sigma_min_;
};
TORCH_MODULE(UncertaintyHead);

/// C = Sigmoid(exp(-sigma)); strictly decreasing, range (0.5, sigmoid(1)].
torch::Tensor confidence(const torch::Tensor& sigma);

/// Natural-base softmax over the two confidences, then the per-pixel convex
/// combination of the branch depths. Returns (fused, w_global, w_local).
std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> fuse(const torch::Tensor& depth_global,
                                                             const torch::Tensor& depth_local,
                                                             const torch::Tensor& c_global,
                                                             const torch::Tensor& c_local);

struct ModelConfig {
  BranchConfig local;
  GlobalBranchConfig global;
  FusionMode mode = FusionMode::kUncertainty;
  double sigma_min = kSigmaMin;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& json_text);
  /// Digest of the canonical JSON form; stored in checkpoints.
  std::string digest() const;
};

/// The full two-branch estimator. The "local" slot normally carries the
/// convolutional branch and the "global" slot the attention branch; the
/// branch-ablation modes (cnn+cnn, transformer+transformer) put a second
/// instance of one family into the other slot instead.
struct DepthEstimatorImpl : torch::nn::Module {
  explicit DepthEstimatorImpl(ModelConfig config);

  ModelOutput forward(const torch::Tensor& image);

  /// Depth + features of one slot; undefined tensors when the slot is empty.
  std::pair<torch::Tensor, torch::Tensor> run_local(const torch::Tensor& image);
  std::pair<torch::Tensor, torch::Tensor> run_global(const torch::Tensor& image);

  ModelConfig cfg;
  // per slot, at most one branch module is defined (depends on mode)
  LocalBranch local_conv{nullptr};    // "local"
  GlobalBranch local_attn{nullptr};   // "local_attn" (transformer+transformer)
  GlobalBranch global_attn{nullptr};  // "global"
  LocalBranch global_conv{nullptr};   // "global_conv" (cnn+cnn)
  UncertaintyHead sigma_head_local{nullptr}, sigma_head_global{nullptr};
  torch::nn::Conv2d concat_fuse{nullptr};
};
TORCH_MODULE(DepthEstimator);

}  // namespace uqdepth
