#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

namespace uqdepth {

/// 8-bit RGB PNG -> float tensor [3,H,W] in [0,1]. Throws on unreadable files.
torch::Tensor read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const torch::Tensor& image);

/// 16-bit grayscale PNG -> depth tensor [1,H,W]; depth = stored * depth_scale,
/// clamped to >= 1e-6 so the strictly-positive depth invariant holds.
torch::Tensor read_depth_png(const std::filesystem::path& path, double depth_scale);
void write_depth_png(const std::filesystem::path& path, const torch::Tensor& depth,
                     double depth_scale);

/// Float32 grid with an 8-byte header: magic "UQDP", u16 height, u16 width
/// (little endian), then height*width row-major float32 values.
void write_sigma_grid(const std::filesystem::path& path, const torch::Tensor& sigma);
torch::Tensor read_sigma_grid(const std::filesystem::path& path);

/// Resize a [C,H,W] tensor. Bilinear is for intensity images, nearest for
/// depth (interpolating across depth discontinuities invents surfaces).
torch::Tensor resize_bilinear(const torch::Tensor& chw, int64_t out_h, int64_t out_w);
torch::Tensor resize_nearest(const torch::Tensor& chw, int64_t out_h, int64_t out_w);

/// Render a scalar field [H,W] or [1,H,W] to an inferno-style heatmap [3,H,W].
/// vmin == vmax falls back to the field's own range.
torch::Tensor colorize(const torch::Tensor& field, double vmin = 0.0, double vmax = 0.0);

/// Concatenate same-height [3,H,W] panels left to right with a 2px divider.
torch::Tensor hstack_panels(const std::vector<torch::Tensor>& panels);

/// Simple line plot (one polyline per series) rendered to [3,H,W], used by the
/// sparsify --plot output.
torch::Tensor render_line_plot(const std::vector<std::vector<double>>& xs,
                               const std::vector<std::vector<double>>& ys,
                               const std::vector<std::string>& labels, int width = 640,
                               int height = 480);

}  // namespace uqdepth
