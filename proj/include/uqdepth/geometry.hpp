#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace uqdepth {

struct CameraIntrinsics {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels

  /// fx = fy = W (about 53 degrees horizontal FOV), principal point at the
  /// image center. Used when a dataset declares no intrinsics.
  static CameraIntrinsics default_for(int64_t width, int64_t height);
};

struct PointCloud {
  std::vector<std::array<float, 3>> points;   // x, y, z with z > 0
  std::vector<std::array<uint8_t, 3>> colors;  // r, g, b
};

/// Pinhole back-projection: pixel (u,v) with depth z maps to
/// ((u-cx)z/fx, (v-cy)z/fy, z), colored from the image.
PointCloud backproject(const torch::Tensor& depth, const torch::Tensor& image,
                       const CameraIntrinsics& k);

/// ASCII PLY 1.0 with float x/y/z and uchar red/green/blue properties.
void write_ply(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace uqdepth
