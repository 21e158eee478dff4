#include "uqdepth/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace uqdepth {

namespace {

cv::Mat imread_checked(const std::filesystem::path& path, int flags) {
  cv::Mat m = cv::imread(path.string(), flags);
  if (m.empty()) {
    throw std::runtime_error("unreadable image file: " + path.string());
  }
  return m;
}

void imwrite_checked(const std::filesystem::path& path, const cv::Mat& m) {
  if (!cv::imwrite(path.string(), m)) {
    throw std::runtime_error("failed to write image: " + path.string());
  }
}

torch::Tensor contiguous_hw(const torch::Tensor& t) {
  auto x = t;
  if (x.dim() == 3 && x.size(0) == 1) x = x.squeeze(0);
  TORCH_CHECK(x.dim() == 2, "expected [H,W] or [1,H,W] tensor, got ", t.sizes());
  return x.to(torch::kFloat32).contiguous();
}

}  // namespace

torch::Tensor read_rgb_png(const std::filesystem::path& path) {
  cv::Mat bgr = imread_checked(path, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).contiguous();
}

void write_rgb_png(const std::filesystem::path& path, const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 3 && image.size(0) == 3, "write_rgb_png expects [3,H,W], got ",
              image.sizes());
  auto hwc = image.detach()
                 .to(torch::kFloat32)
                 .clamp(0.0, 1.0)
                 .mul(255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3,
              hwc.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  imwrite_checked(path, bgr);
}

torch::Tensor read_depth_png(const std::filesystem::path& path, double depth_scale) {
  cv::Mat raw = imread_checked(path, cv::IMREAD_UNCHANGED);
  if (raw.channels() != 1) {
    throw std::runtime_error("depth image must be single-channel: " + path.string());
  }
  cv::Mat raw16;
  if (raw.depth() == CV_16U) {
    raw16 = raw;
  } else if (raw.depth() == CV_8U) {
    raw.convertTo(raw16, CV_16U);  // tolerate 8-bit depth files
  } else {
    throw std::runtime_error("unsupported depth image type: " + path.string());
  }
  auto t = torch::from_blob(raw16.data, {raw16.rows, raw16.cols}, torch::kUInt16)
               .to(torch::kFloat32)
               .mul(depth_scale)
               .clamp_min(1e-6)
               .unsqueeze(0);
  return t.contiguous();
}

void write_depth_png(const std::filesystem::path& path, const torch::Tensor& depth,
                     double depth_scale) {
  TORCH_CHECK(depth_scale > 0.0, "depth_scale must be positive");
  auto hw = contiguous_hw(depth.detach());
  auto stored = hw.div(depth_scale).round().clamp(0.0, 65535.0).to(torch::kInt32).contiguous();
  cv::Mat out(static_cast<int>(stored.size(0)), static_cast<int>(stored.size(1)), CV_16UC1);
  const int32_t* src = stored.data_ptr<int32_t>();
  auto* dst = reinterpret_cast<uint16_t*>(out.data);
  for (int64_t i = 0; i < stored.numel(); ++i) dst[i] = static_cast<uint16_t>(src[i]);
  imwrite_checked(path, out);
}

void write_sigma_grid(const std::filesystem::path& path, const torch::Tensor& sigma) {
  auto hw = contiguous_hw(sigma.detach());
  const int64_t h = hw.size(0), w = hw.size(1);
  TORCH_CHECK(h > 0 && w > 0 && h <= 65535 && w <= 65535,
              "sigma grid dimensions must fit in u16, got ", h, "x", w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  const char magic[4] = {'U', 'Q', 'D', 'P'};
  const uint16_t h16 = static_cast<uint16_t>(h), w16 = static_cast<uint16_t>(w);
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&h16), 2);
  out.write(reinterpret_cast<const char*>(&w16), 2);
  out.write(reinterpret_cast<const char*>(hw.data_ptr<float>()),
            static_cast<std::streamsize>(sizeof(float) * h * w));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

torch::Tensor read_sigma_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  uint16_t h16 = 0, w16 = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&h16), 2);
  in.read(reinterpret_cast<char*>(&w16), 2);
  if (!in || std::memcmp(magic, "UQDP", 4) != 0) {
    throw std::runtime_error("not a UQDP sigma grid: " + path.string());
  }
  auto t = torch::empty({1, h16, w16}, torch::kFloat32);
  in.read(reinterpret_cast<char*>(t.data_ptr<float>()),
          static_cast<std::streamsize>(sizeof(float) * h16 * w16));
  if (!in) throw std::runtime_error("truncated sigma grid: " + path.string());
  return t;
}

torch::Tensor resize_bilinear(const torch::Tensor& chw, int64_t out_h, int64_t out_w) {
  TORCH_CHECK(chw.dim() == 3, "resize expects [C,H,W]");
  namespace F = torch::nn::functional;
  return F::interpolate(chw.unsqueeze(0).to(torch::kFloat32),
                        F::InterpolateFuncOptions()
                            .size(std::vector<int64_t>{out_h, out_w})
                            .mode(torch::kBilinear)
                            .align_corners(false))
      .squeeze(0);
}

torch::Tensor resize_nearest(const torch::Tensor& chw, int64_t out_h, int64_t out_w) {
  TORCH_CHECK(chw.dim() == 3, "resize expects [C,H,W]");
  namespace F = torch::nn::functional;
  return F::interpolate(
             chw.unsqueeze(0).to(torch::kFloat32),
             F::InterpolateFuncOptions().size(std::vector<int64_t>{out_h, out_w}).mode(torch::kNearest))
      .squeeze(0);
}

torch::Tensor colorize(const torch::Tensor& field, double vmin, double vmax) {
  auto hw = contiguous_hw(field.detach());
  if (vmin == vmax) {
    vmin = hw.min().item<double>();
    vmax = hw.max().item<double>();
    if (vmin == vmax) vmax = vmin + 1.0;
  }
  auto norm = hw.sub(vmin).div(vmax - vmin).clamp(0.0, 1.0).mul(255.0).to(torch::kUInt8).contiguous();
  cv::Mat gray(static_cast<int>(norm.size(0)), static_cast<int>(norm.size(1)), CV_8UC1,
               norm.data_ptr<uint8_t>());
  cv::Mat heat;
  cv::applyColorMap(gray, heat, cv::COLORMAP_INFERNO);
  cv::Mat rgb;
  cv::cvtColor(heat, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).clone();
}

torch::Tensor hstack_panels(const std::vector<torch::Tensor>& panels) {
  TORCH_CHECK(!panels.empty(), "hstack_panels: no panels");
  const int64_t h = panels.front().size(1);
  std::vector<torch::Tensor> parts;
  auto divider = torch::ones({3, h, 2}, torch::kFloat32);
  for (size_t i = 0; i < panels.size(); ++i) {
    TORCH_CHECK(panels[i].dim() == 3 && panels[i].size(0) == 3 && panels[i].size(1) == h,
                "hstack_panels: panel ", i, " has shape ", panels[i].sizes());
    if (i > 0) parts.push_back(divider);
    parts.push_back(panels[i].to(torch::kFloat32));
  }
  return torch::cat(parts, 2);
}

torch::Tensor render_line_plot(const std::vector<std::vector<double>>& xs,
                               const std::vector<std::vector<double>>& ys,
                               const std::vector<std::string>& labels, int width, int height) {
  TORCH_CHECK(xs.size() == ys.size(), "render_line_plot: xs/ys series count mismatch");
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int ml = 60, mr = 15, mt = 15, mb = 40;  // margins
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (size_t s = 0; s < xs.size(); ++s) {
    for (size_t i = 0; i < xs[s].size(); ++i) {
      if (first) {
        xmin = xmax = xs[s][i];
        ymin = ymax = ys[s][i];
        first = false;
      }
      xmin = std::min(xmin, xs[s][i]);
      xmax = std::max(xmax, xs[s][i]);
      ymin = std::min(ymin, ys[s][i]);
      ymax = std::max(ymax, ys[s][i]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) {
    return ml + static_cast<int>((x - xmin) / (xmax - xmin) * (width - ml - mr));
  };
  auto py = [&](double y) {
    return height - mb - static_cast<int>((y - ymin) / (ymax - ymin) * (height - mt - mb));
  };
  cv::rectangle(canvas, {ml, mt}, {width - mr, height - mb}, cv::Scalar(0, 0, 0));
  const cv::Scalar palette[] = {{180, 60, 30}, {30, 120, 200}, {40, 160, 40}, {140, 40, 160}};
  for (size_t s = 0; s < xs.size(); ++s) {
    const auto color = palette[s % 4];
    for (size_t i = 1; i < xs[s].size(); ++i) {
      cv::line(canvas, {px(xs[s][i - 1]), py(ys[s][i - 1])}, {px(xs[s][i]), py(ys[s][i])}, color,
               2, cv::LINE_AA);
    }
    if (s < labels.size()) {
      cv::putText(canvas, labels[s], {ml + 10, mt + 20 + 18 * static_cast<int>(s)},
                  cv::FONT_HERSHEY_SIMPLEX, 0.5, color, 1, cv::LINE_AA);
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", xmin);
  cv::putText(canvas, buf, {ml - 10, height - mb + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
              {0, 0, 0}, 1, cv::LINE_AA);
  std::snprintf(buf, sizeof(buf), "%.2f", xmax);
  cv::putText(canvas, buf, {width - mr - 30, height - mb + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
              {0, 0, 0}, 1, cv::LINE_AA);
  std::snprintf(buf, sizeof(buf), "%.3g", ymin);
  cv::putText(canvas, buf, {5, height - mb}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1,
              cv::LINE_AA);
  std::snprintf(buf, sizeof(buf), "%.3g", ymax);
  cv::putText(canvas, buf, {5, mt + 10}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1, cv::LINE_AA);
  cv::Mat rgb;
  cv::cvtColor(canvas, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0).clone();
}

}  // namespace uqdepth
