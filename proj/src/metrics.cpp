#include "uqdepth/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace uqdepth {

const std::vector<std::string>& MetricReport::column_names() {
  static const std::vector<std::string> names = {"delta1",   "delta2", "delta3",
                                                 "abs_rel",  "sq_rel", "rmse",
                                                 "rmse_log", "log10",  "silog"};
  return names;
}

std::vector<double> MetricReport::values() const {
  return {delta1, delta2, delta3, abs_rel, sq_rel, rmse, rmse_log, log10, silog};
}

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os.precision(9);
  bool first = true;
  for (double v : values()) {
    if (!first) os << ",";
    os << v;
    first = false;
  }
  os << "," << n_pixels;
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  const auto& names = column_names();
  const auto vals = values();
  for (size_t i = 0; i < names.size(); ++i) j[names[i]] = vals[i];
  j["n_pixels"] = n_pixels;
  return j.dump();
}

double median_of(const torch::Tensor& map) {
  auto flat = map.detach().to(torch::kFloat64).flatten().contiguous();
  const int64_t n = flat.numel();
  TORCH_CHECK(n > 0, "median of empty map");
  std::vector<double> v(flat.data_ptr<double>(), flat.data_ptr<double>() + n);
  const auto mid = v.begin() + n / 2;
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

std::pair<torch::Tensor, double> median_scale(const torch::Tensor& pred,
                                              const torch::Tensor& gt) {
  const double med_pred = median_of(pred);
  const double med_gt = median_of(gt);
  if (med_pred <= 0.0 || med_gt <= 0.0) {
    throw std::runtime_error("median_scale: non-positive median");
  }
  const double scale = med_gt / med_pred;
  return {pred * scale, scale};
}

MetricReport compute_metrics(const torch::Tensor& pred_in, const torch::Tensor& gt_in,
                             bool apply_median_scaling) {
  TORCH_CHECK(pred_in.sizes() == gt_in.sizes(), "compute_metrics: shape mismatch ",
              pred_in.sizes(), " vs ", gt_in.sizes());
  auto pred = pred_in.detach().to(torch::kFloat64);
  auto gt = gt_in.detach().to(torch::kFloat64);
  if ((pred.min().item<double>() <= 0.0) || (gt.min().item<double>() <= 0.0)) {
    throw std::runtime_error("compute_metrics: maps must be strictly positive");
  }
  if (apply_median_scaling) pred = median_scale(pred, gt).first;

  const auto ratio = pred / gt;
  const auto ratio_max = torch::maximum(ratio, 1.0 / ratio);
  const auto diff = pred - gt;
  const auto log_diff = torch::log(pred) - torch::log(gt);

  MetricReport r;
  r.n_pixels = pred.numel();
  r.delta1 = (ratio_max < 1.25).to(torch::kFloat64).mean().item<double>();
  r.delta2 = (ratio_max < 1.25 * 1.25).to(torch::kFloat64).mean().item<double>();
  r.delta3 = (ratio_max < 1.25 * 1.25 * 1.25).to(torch::kFloat64).mean().item<double>();
  r.abs_rel = (diff.abs() / gt).mean().item<double>();
  r.sq_rel = (diff.square() / gt).mean().item<double>();
  r.rmse = diff.square().mean().sqrt().item<double>();
  r.rmse_log = log_diff.square().mean().sqrt().item<double>();
  r.log10 = (torch::log10(pred) - torch::log10(gt)).abs().mean().item<double>();
  const double mean_l = log_diff.mean().item<double>();
  const double mean_l2 = log_diff.square().mean().item<double>();
  r.silog = 100.0 * std::sqrt(std::max(0.0, mean_l2 - mean_l * mean_l));
  return r;
}

MetricAggregate aggregate_reports(const std::vector<MetricReport>& reports) {
  TORCH_CHECK(!reports.empty(), "aggregate_reports: no reports");
  MetricAggregate agg;
  agg.n_images = static_cast<int64_t>(reports.size());
  const size_t k = MetricReport::column_names().size();
  std::vector<double> mean(k, 0.0), var(k, 0.0);
  for (const auto& r : reports) {
    const auto v = r.values();
    for (size_t i = 0; i < k; ++i) mean[i] += v[i];
    agg.mean.n_pixels += r.n_pixels;
  }
  for (size_t i = 0; i < k; ++i) mean[i] /= static_cast<double>(reports.size());
  for (const auto& r : reports) {
    const auto v = r.values();
    for (size_t i = 0; i < k; ++i) var[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
  }
  for (size_t i = 0; i < k; ++i) var[i] = std::sqrt(var[i] / static_cast<double>(reports.size()));
  auto assign = [](MetricReport& r, const std::vector<double>& v) {
    r.delta1 = v[0];
    r.delta2 = v[1];
    r.delta3 = v[2];
    r.abs_rel = v[3];
    r.sq_rel = v[4];
    r.rmse = v[5];
    r.rmse_log = v[6];
    r.log10 = v[7];
    r.silog = v[8];
  };
  assign(agg.mean, mean);
  assign(agg.stddev, var);
  return agg;
}

}  // namespace uqdepth
