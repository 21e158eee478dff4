#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace uqdepth {

/// The nine depth-evaluation indicators. deltas are accuracy fractions in
/// [0,1] with delta1 <= delta2 <= delta3; the remaining terms are errors.
struct MetricReport {
  double delta1 = 0, delta2 = 0, delta3 = 0;
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0, log10 = 0, silog = 0;
  int64_t n_pixels = 0;

  static const std::vector<std::string>& column_names();
  std::vector<double> values() const;
  std::string csv_row() const;
  std::string to_json() const;
};

/// Median over all pixels; even counts average the two middle values.
double median_of(const torch::Tensor& map);

/// scale = median(gt) / median(pred); returns (pred * scale, scale).
/// Throws when either median is non-positive.
std::pair<torch::Tensor, double> median_scale(const torch::Tensor& pred,
                                              const torch::Tensor& gt);

/// Computes the nine indicators between strictly-positive maps of equal
/// shape, optionally after median scaling.
MetricReport compute_metrics(const torch::Tensor& pred, const torch::Tensor& gt,
                             bool apply_median_scaling);

struct MetricAggregate {
  MetricReport mean;
  MetricReport stddev;  // population standard deviation over images
  int64_t n_images = 0;
};

MetricAggregate aggregate_reports(const std::vector<MetricReport>& reports);

}  // namespace uqdepth
