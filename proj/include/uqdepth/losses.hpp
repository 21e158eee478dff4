#pragma once

#include <torch/torch.h>

#include "uqdepth/fusion.hpp"

namespace uqdepth {

struct LossWeights {
  double lambda_global = 0.1;
  double lambda_local = 0.1;
  double lambda_depth = 1.0;
  double lambda_edge = 1.0;
  double lambda_b_reg = 0.1;  // log-sigma regularizer inside the per-branch MAP loss

  void validate() const;
};

/// Per-branch MAP training loss:
///   mean_j( |pred_j - gt_j| / sigma_j + lambda_b * log(sigma_j) ).
/// Natural log. sigma must respect the kSigmaMin floor.
torch::Tensor map_loss(const torch::Tensor& pred, const torch::Tensor& gt,
                       const torch::Tensor& sigma, double lambda_b);

/// Gaussian-likelihood form, kept for analysis (training uses map_loss):
///   mean_j( 2*log(sigma_j) + (pred_j - gt_j)^2 / (2*sigma_j^2) ).
torch::Tensor gaussian_map_objective(const torch::Tensor& pred, const torch::Tensor& gt,
                                     const torch::Tensor& sigma);

/// Point-wise L1: mean_j |pred_j - gt_j|.
torch::Tensor depth_loss(const torch::Tensor& pred, const torch::Tensor& gt);

/// Gradient-matching loss on forward differences of (gt - pred):
/// mean|g_x| + mean|g_y|, each mean over its own valid region. A map with
/// fewer than 2 pixels along both axes has no differences and is rejected.
torch::Tensor edge_loss(const torch::Tensor& pred, const torch::Tensor& gt);

struct LossBreakdown {
  torch::Tensor total;
  torch::Tensor map_global, map_local, depth, edge;
};

/// Weighted total over a dual-branch ModelOutput:
///   lambda_global*L_MAP(global) + lambda_local*L_MAP(local)
///   + lambda_depth*L1(fused) + lambda_edge*L_edge(fused).
/// Single-branch outputs are rejected; assemble per-branch losses directly.
LossBreakdown total_loss(const ModelOutput& output, const torch::Tensor& gt,
                         const LossWeights& w);

}  // namespace uqdepth
