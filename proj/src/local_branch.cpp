#include "uqdepth/local_branch.hpp"

#include <stdexcept>

namespace uqdepth {

namespace F = torch::nn::functional;

BranchConfig BranchConfig::full_scale() {
  BranchConfig cfg;
  cfg.stage_channels = {64, 256, 512, 1280, 1664};
  cfg.growth_rate = 32;
  cfg.block_layers = 4;
  cfg.input_size = 256;
  return cfg;
}

void BranchConfig::validate() const {
  if (stage_channels.size() < 2) throw std::invalid_argument("branch needs at least 2 stages");
  for (int64_t c : stage_channels) {
    if (c <= 0) throw std::invalid_argument("stage channels must be positive");
  }
  if (growth_rate <= 0) throw std::invalid_argument("growth rate must be positive");
  if (block_layers <= 0) throw std::invalid_argument("block layers must be positive");
  if (d_max <= 0.0) throw std::invalid_argument("d_max must be positive");
  if (input_size <= 0 || input_size % downsample_factor() != 0) {
    throw std::invalid_argument("input size must be a positive multiple of " +
                                std::to_string(downsample_factor()));
  }
}

DenseLayerImpl::DenseLayerImpl(int64_t in_channels, int64_t growth) {
  norm = register_module("norm", torch::nn::BatchNorm2d(in_channels));
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, growth, 3).padding(1)));
}

torch::Tensor DenseLayerImpl::forward(const torch::Tensor& x) {
  return conv->forward(torch::relu(norm->forward(x)));
}

DenseBlockImpl::DenseBlockImpl(int64_t in_channels, int64_t growth, int64_t n_layers) {
  layers = register_module("layers", torch::nn::ModuleList());
  int64_t channels = in_channels;
  for (int64_t i = 0; i < n_layers; ++i) {
    layers->push_back(DenseLayer(channels, growth));
    channels += growth;
  }
  out_channels_ = channels;
}

torch::Tensor DenseBlockImpl::forward(torch::Tensor x) {
  for (auto& layer : *layers) {
    auto grown = layer->as<DenseLayerImpl>()->forward(x);
    x = torch::cat({x, grown}, 1);
  }
  return x;
}

UpStageImpl::UpStageImpl(int64_t in_channels, int64_t skip_channels, int64_t out_channels) {
  conv_a = register_module(
      "conv_a", torch::nn::Conv2d(
                    torch::nn::Conv2dOptions(in_channels + skip_channels, out_channels, 3)
                        .padding(1)));
  conv_b = register_module(
      "conv_b",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(out_channels, out_channels, 3).padding(1)));
}

torch::Tensor UpStageImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
  std::vector<int64_t> target = skip.defined()
                                    ? std::vector<int64_t>{skip.size(2), skip.size(3)}
                                    : std::vector<int64_t>{x.size(2) * 2, x.size(3) * 2};
  auto up = F::interpolate(
      x, F::InterpolateFuncOptions().size(target).mode(torch::kBilinear).align_corners(false));
  if (skip.defined()) up = torch::cat({up, skip}, 1);
  up = torch::relu(conv_a->forward(up));
  return torch::relu(conv_b->forward(up));
}

LocalBranchImpl::LocalBranchImpl(BranchConfig config) : cfg(std::move(config)) {
  cfg.validate();
  const auto& ch = cfg.stage_channels;

  stem = register_module(
      "stem", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, ch[0], 7).stride(2).padding(3)));
  stem_norm = register_module("stem_norm", torch::nn::BatchNorm2d(ch[0]));

  blocks = register_module("blocks", torch::nn::ModuleList());
  transitions = register_module("transitions", torch::nn::ModuleList());
  for (size_t i = 1; i < ch.size(); ++i) {
    DenseBlock block(ch[i - 1], cfg.growth_rate, cfg.block_layers);
    blocks->push_back(block);
    transitions->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(block->out_channels(), ch[i], 1)));
  }

  up_stages = register_module("up_stages", torch::nn::ModuleList());
  // mirror the encoder widths on the way up; the last stage reaches full
  // resolution without a skip partner
  int64_t carried = ch.back();
  for (size_t i = ch.size() - 1; i-- > 0;) {
    up_stages->push_back(UpStage(carried, ch[i], ch[i]));
    carried = ch[i];
  }
  up_stages->push_back(UpStage(carried, 0, ch.front()));

  depth_head = register_module(
      "depth_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch.front(), 1, 3).padding(1)));
}

std::vector<torch::Tensor> LocalBranchImpl::encode(const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 4 && image.size(1) == 3, "expected [B,3,H,W] batch, got ",
              image.sizes());
  TORCH_CHECK(image.size(2) == cfg.input_size && image.size(3) == cfg.input_size,
              "input spatial size ", image.size(2), "x", image.size(3),
              " does not match configured input_size ", cfg.input_size);
  std::vector<torch::Tensor> feats;
  auto x = torch::relu(stem_norm->forward(stem->forward(image)));
  feats.push_back(x);
  for (size_t i = 0; i < blocks->size(); ++i) {
    x = F::max_pool2d(x, F::MaxPool2dFuncOptions(2));
    x = blocks[i]->as<DenseBlockImpl>()->forward(x);
    x = transitions[i]->as<torch::nn::Conv2dImpl>()->forward(x);
    x = torch::relu(x);
    feats.push_back(x);
  }
  return feats;
}

std::pair<torch::Tensor, torch::Tensor> LocalBranchImpl::forward(const torch::Tensor& image) {
  auto feats = encode(image);
  auto x = feats.back();
  // walk back up through the skips, then one skip-free stage to full size
  for (size_t i = 0; i + 1 < up_stages->size(); ++i) {
    const auto& skip = feats[feats.size() - 2 - i];
    x = up_stages[i]->as<UpStageImpl>()->forward(x, skip);
  }
  x = up_stages[up_stages->size() - 1]->as<UpStageImpl>()->forward(x, torch::Tensor());
  auto depth = torch::sigmoid(depth_head->forward(x)) * cfg.d_max;
  return {depth, x};
}

}  // namespace uqdepth
