#include "uqdepth/fusion.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

#include "uqdepth/common.hpp"

namespace uqdepth {

namespace F = torch::nn::functional;
using json = nlohmann::json;

FusionMode fusion_mode_from_string(const std::string& name) {
  if (name == "uncertainty-fusion") return FusionMode::kUncertainty;
  if (name == "concat") return FusionMode::kConcat;
  if (name == "merge-equally") return FusionMode::kMergeEqually;
  if (name == "local-only") return FusionMode::kLocalOnly;
  if (name == "global-only") return FusionMode::kGlobalOnly;
  if (name == "cnn+cnn") return FusionMode::kCnnCnn;
  if (name == "transformer+transformer") return FusionMode::kTransformerTransformer;
  throw std::invalid_argument(
      "unknown fusion mode \"" + name +
      "\" (expected one of uncertainty-fusion, concat, merge-equally, local-only, "
      "global-only, cnn+cnn, transformer+transformer)");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kUncertainty: return "uncertainty-fusion";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kMergeEqually: return "merge-equally";
    case FusionMode::kLocalOnly: return "local-only";
    case FusionMode::kGlobalOnly: return "global-only";
    case FusionMode::kCnnCnn: return "cnn+cnn";
    case FusionMode::kTransformerTransformer: return "transformer+transformer";
  }
  throw std::logic_error("unhandled fusion mode");
}

bool is_dual_branch(FusionMode mode) {
  return mode != FusionMode::kLocalOnly && mode != FusionMode::kGlobalOnly;
}

bool uses_confidence_weights(FusionMode mode) {
  return mode == FusionMode::kUncertainty || mode == FusionMode::kCnnCnn ||
         mode == FusionMode::kTransformerTransformer;
}

UncertaintyHeadImpl::UncertaintyHeadImpl(int64_t in_channels, double sigma_min)
    : sigma_min_(sigma_min) {
  TORCH_CHECK(sigma_min > 0.0, "sigma floor must be positive");
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, 1, 3).padding(1)));
}

torch::Tensor UncertaintyHeadImpl::forward(const torch::Tensor& features,
                                           torch::IntArrayRef out_hw) {
  auto sigma = torch::relu(conv->forward(features)).clamp_min(sigma_min_);
  if (!out_hw.empty() && (sigma.size(2) != out_hw[0] || sigma.size(3) != out_hw[1])) {
    sigma = F::interpolate(sigma, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{out_hw[0], out_hw[1]})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
  }
  return sigma;
}

torch::Tensor confidence(const torch::Tensor& sigma) {
  return torch::sigmoid(torch::exp(-sigma));
}

std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> fuse(const torch::Tensor& depth_global,
                                                             const torch::Tensor& depth_local,
                                                             const torch::Tensor& c_global,
                                                             const torch::Tensor& c_local) {
  TORCH_CHECK(depth_global.sizes() == depth_local.sizes() &&
                  depth_global.sizes() == c_global.sizes() &&
                  depth_global.sizes() == c_local.sizes(),
              "fuse: shape mismatch between depths and confidences");
  // natural-base softmax over the pair of confidences, per pixel
  auto exp_g = torch::exp(c_global);
  auto exp_l = torch::exp(c_local);
  auto denom = exp_g + exp_l;
  auto w_global = exp_g / denom;
  auto w_local = exp_l / denom;
  auto fused = w_global * depth_global + w_local * depth_local;
  return {fused, w_global, w_local};
}

void ModelConfig::validate() const {
  local.validate();
  global.validate();
  if (sigma_min <= 0.0) throw std::invalid_argument("sigma_min must be positive");
  if (local.input_size != global.input_size) {
    throw std::invalid_argument("local/global input sizes differ");
  }
  if (local.d_max != global.d_max) throw std::invalid_argument("local/global d_max differ");
}

std::string ModelConfig::to_json() const {
  json j;
  j["local"] = {{"stage_channels", local.stage_channels},
                {"growth_rate", local.growth_rate},
                {"block_layers", local.block_layers},
                {"input_size", local.input_size},
                {"d_max", local.d_max}};
  j["global"] = {{"embed_dims", global.embed_dims},
                 {"num_heads", global.num_heads},
                 {"reduction_ratios", global.reduction_ratios},
                 {"mlp_dropout", global.mlp_dropout},
                 {"input_size", global.input_size},
                 {"d_max", global.d_max}};
  j["mode"] = uqdepth::to_string(mode);
  j["sigma_min"] = sigma_min;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  ModelConfig cfg;
  const auto& l = j.at("local");
  cfg.local.stage_channels = l.at("stage_channels").get<std::vector<int64_t>>();
  cfg.local.growth_rate = l.at("growth_rate").get<int64_t>();
  cfg.local.block_layers = l.at("block_layers").get<int64_t>();
  cfg.local.input_size = l.at("input_size").get<int64_t>();
  cfg.local.d_max = l.at("d_max").get<double>();
  const auto& g = j.at("global");
  cfg.global.embed_dims = g.at("embed_dims").get<std::vector<int64_t>>();
  cfg.global.num_heads = g.at("num_heads").get<std::vector<int64_t>>();
  cfg.global.reduction_ratios = g.at("reduction_ratios").get<std::vector<int64_t>>();
  cfg.global.mlp_dropout = g.at("mlp_dropout").get<double>();
  cfg.global.input_size = g.at("input_size").get<int64_t>();
  cfg.global.d_max = g.at("d_max").get<double>();
  cfg.mode = fusion_mode_from_string(j.at("mode").get<std::string>());
  cfg.sigma_min = j.at("sigma_min").get<double>();
  return cfg;
}

std::string ModelConfig::digest() const { return fnv1a_hex(to_json()); }

DepthEstimatorImpl::DepthEstimatorImpl(ModelConfig config) : cfg(std::move(config)) {
  cfg.validate();
  const FusionMode m = cfg.mode;

  const bool local_slot_used = m != FusionMode::kGlobalOnly;
  const bool global_slot_used = m != FusionMode::kLocalOnly;

  int64_t local_feat_ch = 0, global_feat_ch = 0;
  if (local_slot_used) {
    if (m == FusionMode::kTransformerTransformer) {
      local_attn = register_module("local_attn", GlobalBranch(cfg.global));
      local_feat_ch = local_attn->feature_channels();
    } else {
      local_conv = register_module("local", LocalBranch(cfg.local));
      local_feat_ch = local_conv->feature_channels();
    }
    sigma_head_local =
        register_module("sigma_head_local", UncertaintyHead(local_feat_ch, cfg.sigma_min));
  }
  if (global_slot_used) {
    if (m == FusionMode::kCnnCnn) {
      global_conv = register_module("global_conv", LocalBranch(cfg.local));
      global_feat_ch = global_conv->feature_channels();
    } else {
      global_attn = register_module("global", GlobalBranch(cfg.global));
      global_feat_ch = global_attn->feature_channels();
    }
    sigma_head_global =
        register_module("sigma_head_global", UncertaintyHead(global_feat_ch, cfg.sigma_min));
  }
  if (m == FusionMode::kConcat) {
    concat_fuse = register_module(
        "concat_fuse", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, 3).padding(1)));
  }
}

std::pair<torch::Tensor, torch::Tensor> DepthEstimatorImpl::run_local(
    const torch::Tensor& image) {
  if (local_conv) return local_conv->forward(image);
  if (local_attn) return local_attn->forward(image);
  return {torch::Tensor(), torch::Tensor()};
}

std::pair<torch::Tensor, torch::Tensor> DepthEstimatorImpl::run_global(
    const torch::Tensor& image) {
  if (global_attn) return global_attn->forward(image);
  if (global_conv) return global_conv->forward(image);
  return {torch::Tensor(), torch::Tensor()};
}

ModelOutput DepthEstimatorImpl::forward(const torch::Tensor& image) {
  ModelOutput out;
  const auto hw = std::array<int64_t, 2>{image.size(2), image.size(3)};

  auto [depth_l, feat_l] = run_local(image);
  if (depth_l.defined()) {
    out.depth_local = depth_l;
    out.sigma_local = sigma_head_local->forward(feat_l, hw);
  }
  auto [depth_g, feat_g] = run_global(image);
  if (depth_g.defined()) {
    out.depth_global = depth_g;
    out.sigma_global = sigma_head_global->forward(feat_g, hw);
  }

  switch (cfg.mode) {
    case FusionMode::kUncertainty:
    case FusionMode::kCnnCnn:
    case FusionMode::kTransformerTransformer: {
      auto [fused, w_g, w_l] =
          fuse(out.depth_global, out.depth_local, confidence(out.sigma_global),
               confidence(out.sigma_local));
      out.depth_fused = fused;
      out.w_global = w_g;
      out.w_local = w_l;
      break;
    }
    case FusionMode::kConcat: {
      auto stacked = torch::cat({out.depth_global, out.depth_local}, 1);
      // bounded head keeps the fused map inside (0, d_max]
      out.depth_fused = torch::sigmoid(concat_fuse->forward(stacked)) * cfg.local.d_max;
      break;
    }
    case FusionMode::kMergeEqually: {
      out.depth_fused = 0.5 * (out.depth_global + out.depth_local);
      out.w_global = torch::full_like(out.depth_global, 0.5);
      out.w_local = torch::full_like(out.depth_local, 0.5);
      break;
    }
    case FusionMode::kLocalOnly:
      out.depth_fused = out.depth_local;
      break;
    case FusionMode::kGlobalOnly:
      out.depth_fused = out.depth_global;
      break;
  }
  return out;
}

}  // namespace uqdepth
