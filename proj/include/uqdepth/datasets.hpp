#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uqdepth/common.hpp"

namespace uqdepth {

/// One image (optionally with ground-truth depth). image is [3,H,W] float32
/// in [0,1]; depth is [1,H,W] float32, strictly positive, or undefined for
/// inference-only data.
struct Sample {
  torch::Tensor image;
  torch::Tensor depth;
  std::string source_id;

  bool has_depth() const { return depth.defined(); }
};

struct DatasetMeta {
  double depth_scale = 1.0 / 65535.0;  // stored PNG value -> depth
  double d_max = 1.0;
  std::optional<std::array<double, 4>> intrinsics;  // fx, fy, cx, cy when known
};

DatasetMeta read_meta(const std::filesystem::path& dir);
void write_meta(const std::filesystem::path& dir, const DatasetMeta& meta);

/// A row/column is "black" when its mean intensity falls below this; matches
/// typical endoscope mask intensity with JPEG noise headroom.
inline constexpr double kBlackBorderThreshold = 10.0 / 255.0;

/// Retained region (top, left, height, width) after trimming black border
/// rows/columns. Throws "all-black image" when nothing remains.
std::array<int64_t, 4> find_content_rect(const torch::Tensor& image,
                                         double threshold = kBlackBorderThreshold);

/// Crop black borders off an image (and the same rectangle off depth when
/// present). Idempotent.
Sample crop_black_border(const torch::Tensor& image, const torch::Tensor& depth = {},
                         double threshold = kBlackBorderThreshold);

struct AugmentationConfig {
  double p_vflip = 0.5;
  double p_rotate = 0.5;
  double p_channel_permute = 0.5;
  std::vector<int> rotation_angles = {90, 180, 270};  // subset of {90,180,270}

  void validate() const;
};

/// Training-time augmentation: vertical flip and right-angle rotation applied
/// identically to image and depth, channel permutation to the image only.
/// Each transform fires independently with its configured probability.
/// 90/270 rotations are skipped for non-square samples (they would swap H/W).
Sample augment(const Sample& sample, const AugmentationConfig& config, Rng& rng);

struct ToyColonOptions {
  int count = 100;
  int size = 64;  // >= 16
  uint64_t seed = 0;
  double d_near = 0.1;
  double d_far = 1.0;
};

/// Generated sample plus the specular-blob mask (true inside a blob), kept so
/// evaluations can exclude saturated highlights.
struct ToySample {
  Sample sample;
  torch::Tensor specular_mask;  // [H,W] bool
};

/// Procedural tube-view dataset: depth falls off radially from a far tube
/// center, intensity follows an inverse-square falloff with per-channel gain
/// jitter and a few saturated specular blobs. Deterministic per (seed, index).
std::vector<ToySample> generate_toy_colon(const ToyColonOptions& opts);

/// Writes the generated dataset in the standard on-disk layout:
/// dir/rgb/NNNN.png, dir/depth/NNNN.png (16-bit), dir/meta.json.
void write_toy_dataset(const std::filesystem::path& dir, const ToyColonOptions& opts);

struct DatasetOptions {
  int target_size = 0;        // 0 keeps native resolution
  bool require_depth = true;  // orphan rgb files are an error in training mode
  bool crop_borders = false;
};

/// Paired rgb/depth directory reader. Files pair by stem, samples come back
/// in lexicographic stem order, images load lazily per index.
class DiskDataset {
 public:
  explicit DiskDataset(const std::filesystem::path& dir, DatasetOptions opts = {});

  int64_t size() const { return static_cast<int64_t>(names_.size()); }
  Sample get(int64_t index) const;
  std::vector<Sample> load_all() const;
  const DatasetMeta& meta() const { return meta_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::filesystem::path dir_;
  DatasetOptions opts_;
  DatasetMeta meta_;
  std::vector<std::string> names_;
  std::vector<bool> has_depth_;
};

}  // namespace uqdepth
