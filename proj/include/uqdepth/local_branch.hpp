#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

namespace uqdepth {

/// Convolutional branch layout. The defaults are the desk-scale topology:
/// 5 stages, /32 bottleneck, densely connected blocks. full_scale() returns
/// a configuration with DenseNet-169-like widths.
struct BranchConfig {
  std::vector<int64_t> stage_channels = {16, 32, 64, 128, 256};
  int64_t growth_rate = 16;
  int64_t block_layers = 2;  // conv layers per dense block
  int64_t input_size = 256;
  double d_max = 1.0;

  static BranchConfig full_scale();

  void validate() const;
  int64_t num_stages() const { return static_cast<int64_t>(stage_channels.size()); }
  /// Total spatial reduction at the bottleneck (2 per stage).
  int64_t downsample_factor() const { return int64_t{1} << num_stages(); }
};

/// BN + ReLU + 3x3 conv producing growth_rate channels, concatenated onto
/// its input (dense connectivity).
struct DenseLayerImpl : torch::nn::Module {
  DenseLayerImpl(int64_t in_channels, int64_t growth);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::BatchNorm2d norm{nullptr};
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(DenseLayer);

struct DenseBlockImpl : torch::nn::Module {
  DenseBlockImpl(int64_t in_channels, int64_t growth, int64_t layers);
  torch::Tensor forward(torch::Tensor x);
  int64_t out_channels() const { return out_channels_; }

  torch::nn::ModuleList layers;
  int64_t out_channels_ = 0;
};
TORCH_MODULE(DenseBlock);

/// Decoder stage: bilinear 2x upsampling, skip concatenation, then two 3x3
/// convolutions.
struct UpStageImpl : torch::nn::Module {
  UpStageImpl(int64_t in_channels, int64_t skip_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip);

  torch::nn::Conv2d conv_a{nullptr}, conv_b{nullptr};
};
TORCH_MODULE(UpStage);

/// Dense convolutional encoder-decoder. forward() returns the depth map in
/// (0, d_max] and the final decoder feature map at input resolution.
struct LocalBranchImpl : torch::nn::Module {
  explicit LocalBranchImpl(BranchConfig config);

  /// Per-stage encoder features, finest (1/2) first, bottleneck (1/2^n) last.
  std::vector<torch::Tensor> encode(const torch::Tensor& image);

  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& image);

  int64_t feature_channels() const { return cfg.stage_channels.front(); }

  BranchConfig cfg;
  torch::nn::Conv2d stem{nullptr};
  torch::nn::BatchNorm2d stem_norm{nullptr};
  torch::nn::ModuleList blocks;       // DenseBlock per stage >= 1
  torch::nn::ModuleList transitions;  // 1x1 conv after each block
  torch::nn::ModuleList up_stages;    // UpStage per decoder level
  torch::nn::Conv2d depth_head{nullptr};
};
TORCH_MODULE(LocalBranch);

}  // namespace uqdepth
