#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <utility>
#include <vector>

namespace uqdepth {

/// Attention branch layout. Defaults are the desk-scale topology: 4 stages
/// at strides 4,2,2,2 with spatially reduced attention.
struct GlobalBranchConfig {
  std::vector<int64_t> embed_dims = {16, 32, 64, 128};
  std::vector<int64_t> num_heads = {1, 1, 2, 4};
  std::vector<int64_t> reduction_ratios = {8, 4, 2, 1};
  double mlp_dropout = 0.5;
  int64_t input_size = 256;
  double d_max = 1.0;

  static GlobalBranchConfig full_scale();

  void validate() const;
  int64_t num_stages() const { return static_cast<int64_t>(embed_dims.size()); }
  /// Overall stride at the deepest stage: 4 * 2^(stages-1).
  int64_t downsample_factor() const { return int64_t{4} << (num_stages() - 1); }
};

/// Overlapping convolutional patch embedding; positional information comes
/// from the overlap, there are no explicit positional encodings.
struct OverlapPatchEmbedImpl : torch::nn::Module {
  OverlapPatchEmbedImpl(int64_t in_channels, int64_t dim, int64_t kernel, int64_t stride);
  /// Returns tokens [B, N, C] plus the token grid size (h, w).
  std::tuple<torch::Tensor, int64_t, int64_t> forward(const torch::Tensor& x);

  torch::nn::Conv2d proj{nullptr};
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(OverlapPatchEmbed);

/// Self-attention with keys/values spatially subsampled by sr_ratio, so the
/// cost stays linear-ish in token count at high resolutions.
struct EfficientSelfAttentionImpl : torch::nn::Module {
  EfficientSelfAttentionImpl(int64_t dim, int64_t heads, int64_t sr_ratio);

  torch::Tensor forward(const torch::Tensor& tokens, int64_t h, int64_t w);
  /// Also returns the post-softmax attention map [B, heads, N, N_kv].
  std::pair<torch::Tensor, torch::Tensor> forward_with_weights(const torch::Tensor& tokens,
                                                               int64_t h, int64_t w);

  int64_t heads_;
  int64_t sr_ratio_;
  torch::nn::Linear q{nullptr}, kv{nullptr}, out{nullptr};
  torch::nn::Conv2d sr{nullptr};
  torch::nn::LayerNorm sr_norm{nullptr};
};
TORCH_MODULE(EfficientSelfAttention);

/// Pre-norm transformer block with the dropout-regularized MLP.
struct TransformerBlockImpl : torch::nn::Module {
  TransformerBlockImpl(int64_t dim, int64_t heads, int64_t sr_ratio, double dropout);
  torch::Tensor forward(const torch::Tensor& tokens, int64_t h, int64_t w);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  EfficientSelfAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(TransformerBlock);

/// 3x3 conv + batch norm + ReLU decoder block.
struct ConvBnReluImpl : torch::nn::Module {
  ConvBnReluImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d norm{nullptr};
};
TORCH_MODULE(ConvBnRelu);

/// Attention encoder-decoder. forward() returns the depth map in (0, d_max]
/// and the final decoder feature map at input resolution.
struct GlobalBranchImpl : torch::nn::Module {
  explicit GlobalBranchImpl(GlobalBranchConfig config);

  /// Per-stage encoder features [B,C,h,w], finest (1/4) first.
  std::vector<torch::Tensor> encode(const torch::Tensor& image);

  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& image);

  int64_t feature_channels() const { return dec_channels_; }

  GlobalBranchConfig cfg;
  int64_t dec_channels_ = 0;
  torch::nn::ModuleList embeds;       // OverlapPatchEmbed per stage
  torch::nn::ModuleList stage_blocks; // TransformerBlock per stage
  torch::nn::ModuleList stage_norms;  // LayerNorm per stage
  torch::nn::ModuleList laterals;     // 1x1 conv per stage -> dec_channels
  torch::nn::ModuleList merges;       // ConvBnRelu after each top-down merge
  torch::nn::ModuleList final_ups;    // ConvBnRelu for 1/4 -> 1/2 -> 1/1
  torch::nn::Conv2d depth_head{nullptr};
};
TORCH_MODULE(GlobalBranch);

}  // namespace uqdepth
