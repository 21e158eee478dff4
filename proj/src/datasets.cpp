#include "uqdepth/datasets.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "uqdepth/image_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace uqdepth {

DatasetMeta read_meta(const fs::path& dir) {
  const fs::path path = dir / "meta.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing dataset metadata: " + path.string());
  json j;
  in >> j;
  DatasetMeta meta;
  meta.depth_scale = j.at("depth_scale").get<double>();
  meta.d_max = j.at("d_max").get<double>();
  if (j.contains("intrinsics")) {
    const auto& k = j.at("intrinsics");
    meta.intrinsics = {{k.at("fx").get<double>(), k.at("fy").get<double>(),
                        k.at("cx").get<double>(), k.at("cy").get<double>()}};
  }
  return meta;
}

void write_meta(const fs::path& dir, const DatasetMeta& meta) {
  json j{{"depth_scale", meta.depth_scale}, {"d_max", meta.d_max}};
  if (meta.intrinsics) {
    const auto& k = *meta.intrinsics;
    j["intrinsics"] = {{"fx", k[0]}, {"fy", k[1]}, {"cx", k[2]}, {"cy", k[3]}};
  }
  std::ofstream out(dir / "meta.json");
  if (!out) throw std::runtime_error("cannot write meta.json under " + dir.string());
  out << j.dump(2) << "\n";
}

std::array<int64_t, 4> find_content_rect(const torch::Tensor& image, double threshold) {
  TORCH_CHECK(image.dim() == 3 && image.size(0) == 3, "expected [3,H,W] image, got ",
              image.sizes());
  // mean over channels -> [H,W]
  auto gray = image.to(torch::kFloat32).mean(0).contiguous();
  auto g = gray.accessor<float, 2>();
  int64_t top = 0, bottom = image.size(1) - 1, left = 0, right = image.size(2) - 1;
  auto row_mean = [&](int64_t r) {
    double s = 0.0;
    for (int64_t c = left; c <= right; ++c) s += g[r][c];
    return s / static_cast<double>(right - left + 1);
  };
  auto col_mean = [&](int64_t c) {
    double s = 0.0;
    for (int64_t r = top; r <= bottom; ++r) s += g[r][c];
    return s / static_cast<double>(bottom - top + 1);
  };
  // Border-line means are taken within the current rectangle; trimming one
  // side can expose another, so sweep to a fixpoint. The result is the
  // maximal rectangle whose own border lines all clear the threshold, which
  // makes the crop idempotent.
  bool changed = true;
  while (changed && top <= bottom && left <= right) {
    changed = false;
    while (top <= bottom && row_mean(top) < threshold) ++top, changed = true;
    while (bottom >= top && row_mean(bottom) < threshold) --bottom, changed = true;
    if (top > bottom) break;
    while (left <= right && col_mean(left) < threshold) ++left, changed = true;
    while (right >= left && col_mean(right) < threshold) --right, changed = true;
  }
  if (top > bottom || left > right) throw std::runtime_error("all-black image");
  return {top, left, bottom - top + 1, right - left + 1};
}

Sample crop_black_border(const torch::Tensor& image, const torch::Tensor& depth,
                         double threshold) {
  const auto rect = find_content_rect(image, threshold);
  const auto [top, left, h, w] = std::tuple{rect[0], rect[1], rect[2], rect[3]};
  Sample out;
  out.image = image.index({torch::indexing::Slice(), torch::indexing::Slice(top, top + h),
                           torch::indexing::Slice(left, left + w)})
                  .contiguous();
  if (depth.defined()) {
    TORCH_CHECK(depth.size(-2) == image.size(1) && depth.size(-1) == image.size(2),
                "depth/image spatial mismatch: ", depth.sizes(), " vs ", image.sizes());
    out.depth = depth.index({torch::indexing::Slice(), torch::indexing::Slice(top, top + h),
                             torch::indexing::Slice(left, left + w)})
                    .contiguous();
  }
  return out;
}

void AugmentationConfig::validate() const {
  for (double p : {p_vflip, p_rotate, p_channel_permute}) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("augmentation probability outside [0,1]");
  }
  for (int a : rotation_angles) {
    if (a != 90 && a != 180 && a != 270) {
      throw std::invalid_argument("rotation angles restricted to {90,180,270}");
    }
  }
}

Sample augment(const Sample& sample, const AugmentationConfig& config, Rng& rng) {
  TORCH_CHECK(sample.has_depth(), "augment is a training-time transform; sample lacks depth");
  config.validate();
  auto image = sample.image;
  auto depth = sample.depth;
  const bool square = image.size(1) == image.size(2);

  if (rng.uniform() < config.p_vflip) {
    image = image.flip(1);
    depth = depth.flip(1);
  }
  if (!config.rotation_angles.empty() && rng.uniform() < config.p_rotate) {
    const int angle = config.rotation_angles[rng.uniform_int(
        static_cast<int>(config.rotation_angles.size()))];
    if (angle == 180 || square) {
      const int64_t k = angle / 90;
      image = torch::rot90(image, k, {1, 2});
      depth = torch::rot90(depth, k, {1, 2});
    }
  }
  if (rng.uniform() < config.p_channel_permute) {
    // uniform over all 3! channel orders
    static const int64_t perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                        {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    const auto& p = perms[rng.uniform_int(6)];
    image = image.index_select(0, torch::tensor({p[0], p[1], p[2]}, torch::kLong));
  }
  return Sample{image.contiguous(), depth.contiguous(), sample.source_id};
}

std::vector<ToySample> generate_toy_colon(const ToyColonOptions& opts) {
  if (opts.size < 16) throw std::invalid_argument("toy colon size must be >= 16");
  if (opts.count <= 0) throw std::invalid_argument("toy colon count must be positive");
  const int n = opts.size;
  const double half_diag = 0.5 * std::sqrt(2.0) * n;

  std::vector<ToySample> out;
  out.reserve(opts.count);
  for (int idx = 0; idx < opts.count; ++idx) {
    Rng rng = Rng::for_stream(opts.seed, static_cast<uint64_t>(idx));
    // tube center within the central third of the frame
    const double cx = rng.uniform(n / 3.0, 2.0 * n / 3.0);
    const double cy = rng.uniform(n / 3.0, 2.0 * n / 3.0);

    std::vector<float> depth(static_cast<size_t>(n) * n);
    std::vector<double> inv_sq(static_cast<size_t>(n) * n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const double r =
            std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) / half_diag;
        const double d = opts.d_far - (opts.d_far - opts.d_near) * std::min(r, 1.0);
        depth[static_cast<size_t>(y) * n + x] = static_cast<float>(d);
        inv_sq[static_cast<size_t>(y) * n + x] = 1.0 / (d * d);
      }
    }
    // gain k such that the 90th-percentile intensity lands at 0.9
    std::vector<double> sorted(inv_sq);
    const size_t q_idx = static_cast<size_t>(0.9 * (sorted.size() - 1));
    std::nth_element(sorted.begin(), sorted.begin() + q_idx, sorted.end());
    const double k = 0.9 / sorted[q_idx];

    const double jitter[3] = {rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2),
                              rng.uniform(0.8, 1.2)};

    // specular blobs, saturated at the core
    const int n_blobs = 1 + rng.uniform_int(3);
    std::vector<float> blob(static_cast<size_t>(n) * n, 0.0f);
    std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
    for (int b = 0; b < n_blobs; ++b) {
      const double bx = rng.uniform(0.0, n);
      const double by = rng.uniform(0.0, n);
      const double bs = rng.uniform(n / 40.0, n / 14.0);
      const double reach = 3.0 * bs;
      const int x0 = std::max(0, static_cast<int>(bx - reach));
      const int x1 = std::min(n - 1, static_cast<int>(bx + reach));
      const int y0 = std::max(0, static_cast<int>(by - reach));
      const int y1 = std::min(n - 1, static_cast<int>(by + reach));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double r2 = (x - bx) * (x - bx) + (y - by) * (y - by);
          if (r2 > reach * reach) continue;
          const double v = 1.5 * std::exp(-r2 / (2.0 * bs * bs));
          auto& cell = blob[static_cast<size_t>(y) * n + x];
          cell = std::max(cell, static_cast<float>(v));
          mask[static_cast<size_t>(y) * n + x] = 1;
        }
      }
    }

    std::vector<float> image(3 * static_cast<size_t>(n) * n);
    for (int c = 0; c < 3; ++c) {
      for (size_t i = 0; i < inv_sq.size(); ++i) {
        const double base = std::clamp(k * inv_sq[i] * jitter[c], 0.0, 1.0);
        image[static_cast<size_t>(c) * n * n + i] =
            static_cast<float>(std::clamp(base + blob[i], 0.0, 1.0));
      }
    }

    ToySample ts;
    char name[16];
    std::snprintf(name, sizeof(name), "%04d", idx);
    ts.sample.source_id = name;
    ts.sample.image = torch::from_blob(image.data(), {3, n, n}, torch::kFloat32).clone();
    ts.sample.depth = torch::from_blob(depth.data(), {1, n, n}, torch::kFloat32).clone();
    ts.specular_mask =
        torch::from_blob(mask.data(), {n, n}, torch::kUInt8).clone().to(torch::kBool);
    out.push_back(std::move(ts));
  }
  return out;
}

void write_toy_dataset(const fs::path& dir, const ToyColonOptions& opts) {
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  DatasetMeta meta;
  meta.d_max = opts.d_far;
  meta.depth_scale = opts.d_far / 65535.0;
  write_meta(dir, meta);
  for (const auto& ts : generate_toy_colon(opts)) {
    write_rgb_png(dir / "rgb" / (ts.sample.source_id + ".png"), ts.sample.image);
    write_depth_png(dir / "depth" / (ts.sample.source_id + ".png"), ts.sample.depth,
                    meta.depth_scale);
  }
}

DiskDataset::DiskDataset(const fs::path& dir, DatasetOptions opts)
    : dir_(dir), opts_(opts) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory missing: " + dir.string());
  meta_ = read_meta(dir);

  std::set<std::string> depth_stems;
  if (fs::is_directory(dir / "depth")) {
    for (const auto& e : fs::directory_iterator(dir / "depth")) {
      if (e.path().extension() == ".png") depth_stems.insert(e.path().stem().string());
    }
  }
  if (fs::is_directory(dir / "rgb")) {
    for (const auto& e : fs::directory_iterator(dir / "rgb")) {
      if (e.path().extension() == ".png") names_.push_back(e.path().stem().string());
    }
  }
  std::sort(names_.begin(), names_.end());
  has_depth_.reserve(names_.size());
  for (const auto& stem : names_) {
    const bool paired = depth_stems.count(stem) > 0;
    if (!paired && opts_.require_depth) {
      throw std::runtime_error("missing depth pair for rgb/" + stem + ".png");
    }
    has_depth_.push_back(paired);
  }
}

Sample DiskDataset::get(int64_t index) const {
  TORCH_CHECK(index >= 0 && index < size(), "dataset index out of range: ", index);
  const std::string& stem = names_[static_cast<size_t>(index)];
  Sample s;
  s.source_id = stem;
  s.image = read_rgb_png(dir_ / "rgb" / (stem + ".png"));
  if (has_depth_[static_cast<size_t>(index)]) {
    s.depth = read_depth_png(dir_ / "depth" / (stem + ".png"), meta_.depth_scale);
    TORCH_CHECK(s.depth.size(1) == s.image.size(1) && s.depth.size(2) == s.image.size(2),
                "rgb/depth size mismatch for sample ", stem);
  }
  if (opts_.crop_borders) {
    Sample cropped = crop_black_border(s.image, s.depth);
    s.image = cropped.image;
    s.depth = cropped.depth;
  }
  if (opts_.target_size > 0 &&
      (s.image.size(1) != opts_.target_size || s.image.size(2) != opts_.target_size)) {
    s.image = resize_bilinear(s.image, opts_.target_size, opts_.target_size);
    if (s.has_depth()) s.depth = resize_nearest(s.depth, opts_.target_size, opts_.target_size);
  }
  return s;
}

std::vector<Sample> DiskDataset::load_all() const {
  std::vector<Sample> all;
  all.reserve(static_cast<size_t>(size()));
  for (int64_t i = 0; i < size(); ++i) all.push_back(get(i));
  return all;
}

}  // namespace uqdepth
