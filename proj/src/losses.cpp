#include "uqdepth/losses.hpp"

#include <stdexcept>

namespace uqdepth {

void LossWeights::validate() const {
  for (double v : {lambda_global, lambda_local, lambda_depth, lambda_edge, lambda_b_reg}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("loss weights must be finite and non-negative");
    }
  }
}

namespace {

void check_shapes(const torch::Tensor& pred, const torch::Tensor& gt) {
  TORCH_CHECK(pred.sizes() == gt.sizes(), "loss: shape mismatch ", pred.sizes(), " vs ",
              gt.sizes());
}

}  // namespace

torch::Tensor map_loss(const torch::Tensor& pred, const torch::Tensor& gt,
                       const torch::Tensor& sigma, double lambda_b) {
  check_shapes(pred, gt);
  TORCH_CHECK(pred.sizes() == sigma.sizes(), "loss: sigma shape mismatch");
  TORCH_CHECK(sigma.min().item<double>() >= kSigmaMin - 1e-12,
              "map_loss: sigma below the kSigmaMin floor");
  return (torch::abs(pred - gt) / sigma + lambda_b * torch::log(sigma)).mean();
}

torch::Tensor gaussian_map_objective(const torch::Tensor& pred, const torch::Tensor& gt,
                                     const torch::Tensor& sigma) {
  check_shapes(pred, gt);
  TORCH_CHECK(pred.sizes() == sigma.sizes(), "loss: sigma shape mismatch");
  TORCH_CHECK(sigma.min().item<double>() >= kSigmaMin - 1e-12,
              "gaussian_map_objective: sigma below the kSigmaMin floor");
  return (2.0 * torch::log(sigma) + torch::square(pred - gt) / (2.0 * torch::square(sigma)))
      .mean();
}

torch::Tensor depth_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  check_shapes(pred, gt);
  return torch::abs(pred - gt).mean();
}

torch::Tensor edge_loss(const torch::Tensor& pred, const torch::Tensor& gt) {
  check_shapes(pred, gt);
  const int64_t h = pred.size(-2), w = pred.size(-1);
  TORCH_CHECK(h >= 2 || w >= 2, "edge_loss: map smaller than 2x2 has no gradients");
  auto residual = gt - pred;
  auto loss = torch::zeros({}, pred.options());
  if (w >= 2) {
    auto gx = residual.narrow(-1, 1, w - 1) - residual.narrow(-1, 0, w - 1);
    loss = loss + gx.abs().mean();
  }
  if (h >= 2) {
    auto gy = residual.narrow(-2, 1, h - 1) - residual.narrow(-2, 0, h - 1);
    loss = loss + gy.abs().mean();
  }
  return loss;
}

LossBreakdown total_loss(const ModelOutput& output, const torch::Tensor& gt,
                         const LossWeights& w) {
  w.validate();
  if (!output.has_local() || !output.has_global()) {
    throw std::invalid_argument(
        "total_loss requires a dual-branch output; for single-branch modes combine "
        "map_loss/depth_loss/edge_loss on that branch directly");
  }
  TORCH_CHECK(output.depth_fused.defined(), "total_loss: fused depth missing");
  LossBreakdown b;
  b.map_global = map_loss(output.depth_global, gt, output.sigma_global, w.lambda_b_reg);
  b.map_local = map_loss(output.depth_local, gt, output.sigma_local, w.lambda_b_reg);
  b.depth = depth_loss(output.depth_fused, gt);
  b.edge = edge_loss(output.depth_fused, gt);
  b.total = w.lambda_global * b.map_global + w.lambda_local * b.map_local +
            w.lambda_depth * b.depth + w.lambda_edge * b.edge;
  return b;
}

}  // namespace uqdepth
