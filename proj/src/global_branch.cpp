#include "uqdepth/global_branch.hpp"

#include <cmath>
#include <stdexcept>

namespace uqdepth {

namespace F = torch::nn::functional;

GlobalBranchConfig GlobalBranchConfig::full_scale() {
  GlobalBranchConfig cfg;
  cfg.embed_dims = {64, 128, 320, 512};
  cfg.num_heads = {1, 2, 5, 8};
  cfg.reduction_ratios = {8, 4, 2, 1};
  cfg.input_size = 256;
  return cfg;
}

void GlobalBranchConfig::validate() const {
  const size_t n = embed_dims.size();
  if (n < 2) throw std::invalid_argument("global branch needs at least 2 stages");
  if (num_heads.size() != n || reduction_ratios.size() != n) {
    throw std::invalid_argument("embed_dims/num_heads/reduction_ratios lengths differ");
  }
  for (size_t i = 0; i < n; ++i) {
    if (embed_dims[i] <= 0 || num_heads[i] <= 0 || reduction_ratios[i] <= 0) {
      throw std::invalid_argument("global branch config values must be positive");
    }
    if (embed_dims[i] % num_heads[i] != 0) {
      throw std::invalid_argument("embed dim must be divisible by head count");
    }
  }
  if (mlp_dropout < 0.0 || mlp_dropout >= 1.0) {
    throw std::invalid_argument("mlp_dropout must lie in [0,1)");
  }
  if (d_max <= 0.0) throw std::invalid_argument("d_max must be positive");
  if (input_size <= 0 || input_size % downsample_factor() != 0) {
    throw std::invalid_argument("input size must be a positive multiple of " +
                                std::to_string(downsample_factor()));
  }
}

OverlapPatchEmbedImpl::OverlapPatchEmbedImpl(int64_t in_channels, int64_t dim, int64_t kernel,
                                             int64_t stride) {
  proj = register_module("proj",
                         torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, dim, kernel)
                                               .stride(stride)
                                               .padding(kernel / 2)));
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
}

std::tuple<torch::Tensor, int64_t, int64_t> OverlapPatchEmbedImpl::forward(
    const torch::Tensor& x) {
  auto y = proj->forward(x);
  const int64_t h = y.size(2), w = y.size(3);
  auto tokens = y.flatten(2).transpose(1, 2);  // [B, N, C]
  return {norm->forward(tokens), h, w};
}

EfficientSelfAttentionImpl::EfficientSelfAttentionImpl(int64_t dim, int64_t heads,
                                                       int64_t sr_ratio)
    : heads_(heads), sr_ratio_(sr_ratio) {
  q = register_module("q", torch::nn::Linear(dim, dim));
  kv = register_module("kv", torch::nn::Linear(dim, 2 * dim));
  out = register_module("out", torch::nn::Linear(dim, dim));
  if (sr_ratio_ > 1) {
    sr = register_module(
        "sr", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, sr_ratio).stride(sr_ratio)));
    sr_norm = register_module("sr_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  }
}

std::pair<torch::Tensor, torch::Tensor> EfficientSelfAttentionImpl::forward_with_weights(
    const torch::Tensor& tokens, int64_t h, int64_t w) {
  const int64_t b = tokens.size(0), n = tokens.size(1), c = tokens.size(2);
  const int64_t head_dim = c / heads_;

  auto queries = q->forward(tokens).reshape({b, n, heads_, head_dim}).permute({0, 2, 1, 3});

  auto kv_src = tokens;
  if (sr_ratio_ > 1) {
    auto grid = tokens.transpose(1, 2).reshape({b, c, h, w});
    grid = sr->forward(grid);
    kv_src = sr_norm->forward(grid.flatten(2).transpose(1, 2));
  }
  const int64_t n_kv = kv_src.size(1);
  auto kv_proj = kv->forward(kv_src).reshape({b, n_kv, 2, heads_, head_dim}).permute({2, 0, 3, 1, 4});
  auto keys = kv_proj[0];    // [B, heads, N_kv, head_dim]
  auto values = kv_proj[1];

  auto scores = torch::matmul(queries, keys.transpose(-2, -1)) /
                std::sqrt(static_cast<double>(head_dim));
  auto attn = torch::softmax(scores, -1);  // [B, heads, N, N_kv]
  auto mixed = torch::matmul(attn, values)
                   .permute({0, 2, 1, 3})
                   .reshape({b, n, c});
  return {out->forward(mixed), attn};
}

torch::Tensor EfficientSelfAttentionImpl::forward(const torch::Tensor& tokens, int64_t h,
                                                  int64_t w) {
  return forward_with_weights(tokens, h, w).first;
}

TransformerBlockImpl::TransformerBlockImpl(int64_t dim, int64_t heads, int64_t sr_ratio,
                                           double dropout) {
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn = register_module("attn", EfficientSelfAttention(dim, heads, sr_ratio));
  fc1 = register_module("fc1", torch::nn::Linear(dim, 4 * dim));
  fc2 = register_module("fc2", torch::nn::Linear(4 * dim, dim));
  drop = register_module("drop", torch::nn::Dropout(dropout));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& tokens, int64_t h, int64_t w) {
  auto x = tokens + attn->forward(norm1->forward(tokens), h, w);
  auto mlp = drop->forward(fc2->forward(drop->forward(torch::gelu(fc1->forward(norm2->forward(x))))));
  return x + mlp;
}

ConvBnReluImpl::ConvBnReluImpl(int64_t in_channels, int64_t out_channels) {
  conv = register_module(
      "conv",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 3).padding(1)));
  norm = register_module("norm", torch::nn::BatchNorm2d(out_channels));
}

torch::Tensor ConvBnReluImpl::forward(const torch::Tensor& x) {
  return torch::relu(norm->forward(conv->forward(x)));
}

GlobalBranchImpl::GlobalBranchImpl(GlobalBranchConfig config) : cfg(std::move(config)) {
  cfg.validate();
  const auto& dims = cfg.embed_dims;
  dec_channels_ = dims.size() > 1 ? dims[1] : dims[0];

  embeds = register_module("embeds", torch::nn::ModuleList());
  stage_blocks = register_module("stage_blocks", torch::nn::ModuleList());
  stage_norms = register_module("stage_norms", torch::nn::ModuleList());
  laterals = register_module("laterals", torch::nn::ModuleList());
  merges = register_module("merges", torch::nn::ModuleList());
  for (size_t i = 0; i < dims.size(); ++i) {
    // one 7x7 stride-4 stem, then 3x3 stride-2 embeddings
    const int64_t in_ch = i == 0 ? 3 : dims[i - 1];
    const int64_t kernel = i == 0 ? 7 : 3;
    const int64_t stride = i == 0 ? 4 : 2;
    embeds->push_back(OverlapPatchEmbed(in_ch, dims[i], kernel, stride));
    stage_blocks->push_back(
        TransformerBlock(dims[i], cfg.num_heads[i], cfg.reduction_ratios[i], cfg.mlp_dropout));
    stage_norms->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({dims[i]})));
    laterals->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(dims[i], dec_channels_, 1)));
    if (i + 1 < dims.size()) merges->push_back(ConvBnRelu(dec_channels_, dec_channels_));
  }

  final_ups = register_module("final_ups", torch::nn::ModuleList());
  final_ups->push_back(ConvBnRelu(dec_channels_, dec_channels_));
  final_ups->push_back(ConvBnRelu(dec_channels_, dec_channels_));

  depth_head = register_module(
      "depth_head",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(dec_channels_, 1, 3).padding(1)));
}

std::vector<torch::Tensor> GlobalBranchImpl::encode(const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 4 && image.size(1) == 3, "expected [B,3,H,W] batch, got ",
              image.sizes());
  TORCH_CHECK(image.size(2) == cfg.input_size && image.size(3) == cfg.input_size,
              "input spatial size ", image.size(2), "x", image.size(3),
              " does not match configured input_size ", cfg.input_size);
  std::vector<torch::Tensor> feats;
  auto x = image;
  for (size_t i = 0; i < embeds->size(); ++i) {
    auto [tokens, h, w] = embeds[i]->as<OverlapPatchEmbedImpl>()->forward(x);
    tokens = stage_blocks[i]->as<TransformerBlockImpl>()->forward(tokens, h, w);
    tokens = stage_norms[i]->as<torch::nn::LayerNormImpl>()->forward(tokens);
    x = tokens.transpose(1, 2).reshape({image.size(0), cfg.embed_dims[i], h, w});
    feats.push_back(x);
  }
  return feats;
}

std::pair<torch::Tensor, torch::Tensor> GlobalBranchImpl::forward(const torch::Tensor& image) {
  auto feats = encode(image);
  // top-down: project everything to dec_channels, upsample, add, fuse
  auto x = laterals[feats.size() - 1]->as<torch::nn::Conv2dImpl>()->forward(feats.back());
  for (size_t i = feats.size() - 1; i-- > 0;) {
    auto lateral = laterals[i]->as<torch::nn::Conv2dImpl>()->forward(feats[i]);
    auto up = F::interpolate(x, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{lateral.size(2), lateral.size(3)})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
    x = merges[i]->as<ConvBnReluImpl>()->forward(up + lateral);
  }
  // 1/4 -> 1/2 -> 1/1
  for (size_t i = 0; i < final_ups->size(); ++i) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{x.size(2) * 2, x.size(3) * 2})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    x = final_ups[i]->as<ConvBnReluImpl>()->forward(x);
  }
  auto depth = torch::sigmoid(depth_head->forward(x)) * cfg.d_max;
  return {depth, x};
}

}  // namespace uqdepth
