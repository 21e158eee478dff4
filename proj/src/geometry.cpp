#include "uqdepth/geometry.hpp"

#include <cstdio>
#include <stdexcept>

namespace uqdepth {

CameraIntrinsics CameraIntrinsics::default_for(int64_t width, int64_t height) {
  CameraIntrinsics k;
  k.fx = k.fy = static_cast<double>(width);
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  return k;
}

PointCloud backproject(const torch::Tensor& depth, const torch::Tensor& image,
                       const CameraIntrinsics& k) {
  TORCH_CHECK(k.fx > 0 && k.fy > 0, "focal lengths must be positive");
  auto d = depth.detach().to(torch::kFloat32);
  if (d.dim() == 3) d = d.squeeze(0);
  TORCH_CHECK(d.dim() == 2, "backproject expects [H,W] or [1,H,W] depth");
  auto img = image.detach().to(torch::kFloat32);
  TORCH_CHECK(img.dim() == 3 && img.size(0) == 3 && img.size(1) == d.size(0) &&
                  img.size(2) == d.size(1),
              "backproject: image/depth dimensions differ");
  d = d.contiguous();
  img = img.clamp(0.0, 1.0).contiguous();
  const auto da = d.accessor<float, 2>();
  const auto ia = img.accessor<float, 3>();
  const int64_t h = d.size(0), w = d.size(1);

  PointCloud cloud;
  cloud.points.reserve(static_cast<size_t>(h * w));
  cloud.colors.reserve(static_cast<size_t>(h * w));
  for (int64_t v = 0; v < h; ++v) {
    for (int64_t u = 0; u < w; ++u) {
      const float z = da[v][u];
      cloud.points.push_back({static_cast<float>((u - k.cx) * z / k.fx),
                              static_cast<float>((v - k.cy) * z / k.fy), z});
      cloud.colors.push_back({static_cast<uint8_t>(ia[0][v][u] * 255.0f + 0.5f),
                              static_cast<uint8_t>(ia[1][v][u] * 255.0f + 0.5f),
                              static_cast<uint8_t>(ia[2][v][u] * 255.0f + 0.5f)});
    }
  }
  return cloud;
}

void write_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  if (cloud.points.size() != cloud.colors.size()) {
    throw std::invalid_argument("write_ply: point/color count mismatch");
  }
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw std::runtime_error("cannot open for writing: " + path.string());
  std::fprintf(f,
               "ply\n"
               "format ascii 1.0\n"
               "element vertex %zu\n"
               "property float x\n"
               "property float y\n"
               "property float z\n"
               "property uchar red\n"
               "property uchar green\n"
               "property uchar blue\n"
               "end_header\n",
               cloud.points.size());
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    const auto& c = cloud.colors[i];
    std::fprintf(f, "%.9g %.9g %.9g %u %u %u\n", p[0], p[1], p[2], c[0], c[1], c[2]);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace uqdepth
