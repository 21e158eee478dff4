#include "uqdepth/sparsification.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uqdepth {

std::vector<double> default_fractions() {
  std::vector<double> f;
  f.reserve(50);
  for (int i = 0; i < 50; ++i) f.push_back(i * 0.02);
  return f;
}

namespace {

void check_fractions(const std::vector<double>& fractions) {
  if (fractions.empty()) throw std::invalid_argument("sparsification: no fractions");
  for (size_t i = 0; i < fractions.size(); ++i) {
    if (fractions[i] < 0.0 || fractions[i] >= 1.0) {
      throw std::invalid_argument("sparsification: fractions must lie in [0,1)");
    }
    if (i > 0 && fractions[i] <= fractions[i - 1]) {
      throw std::invalid_argument("sparsification: fractions must be strictly increasing");
    }
  }
}

}  // namespace

SparsificationCurve sparsification_curve(const std::vector<double>& errors,
                                         const std::vector<double>& ranking,
                                         const std::vector<double>& fractions) {
  if (errors.size() != ranking.size()) {
    throw std::invalid_argument("sparsification: errors/ranking size mismatch");
  }
  if (errors.empty()) throw std::invalid_argument("sparsification: empty error field");
  check_fractions(fractions);

  const size_t n = errors.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // descending score, pixel index breaks ties deterministically
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return ranking[a] > ranking[b]; });

  // suffix sums of squared error over the removal order: removing the k
  // highest-ranked pixels leaves the tail [k, n)
  std::vector<double> suffix_sq(n + 1, 0.0);
  for (size_t i = n; i-- > 0;) {
    const double e = errors[order[i]];
    suffix_sq[i] = suffix_sq[i + 1] + e * e;
  }

  SparsificationCurve curve;
  curve.fractions = fractions;
  curve.rmse_values.reserve(fractions.size());
  for (double f : fractions) {
    const size_t removed = static_cast<size_t>(std::floor(f * static_cast<double>(n)));
    const size_t kept = n - removed;
    curve.rmse_values.push_back(std::sqrt(suffix_sq[removed] / static_cast<double>(kept)));
  }
  return curve;
}

SparsificationCurve oracle_curve(const std::vector<double>& errors,
                                 const std::vector<double>& fractions) {
  return sparsification_curve(errors, errors, fractions);
}

SparsificationGap sparsification_error(const SparsificationCurve& curve,
                                       const SparsificationCurve& oracle) {
  if (curve.fractions != oracle.fractions) {
    throw std::invalid_argument("sparsification_error: fraction grids differ");
  }
  SparsificationGap gap;
  gap.difference.fractions = curve.fractions;
  gap.difference.rmse_values.resize(curve.rmse_values.size());
  for (size_t i = 0; i < curve.rmse_values.size(); ++i) {
    gap.difference.rmse_values[i] = curve.rmse_values[i] - oracle.rmse_values[i];
  }
  for (size_t i = 1; i < curve.fractions.size(); ++i) {
    const double df = curve.fractions[i] - curve.fractions[i - 1];
    gap.area += 0.5 * df * (gap.difference.rmse_values[i] + gap.difference.rmse_values[i - 1]);
  }
  return gap;
}

SparsificationCurve average_curves(const std::vector<SparsificationCurve>& curves) {
  if (curves.empty()) throw std::invalid_argument("average_curves: no curves");
  SparsificationCurve avg = curves.front();
  for (size_t c = 1; c < curves.size(); ++c) {
    if (curves[c].fractions != avg.fractions) {
      throw std::invalid_argument("average_curves: fraction grids differ");
    }
    for (size_t i = 0; i < avg.rmse_values.size(); ++i) {
      avg.rmse_values[i] += curves[c].rmse_values[i];
    }
  }
  for (auto& v : avg.rmse_values) v /= static_cast<double>(curves.size());
  return avg;
}

}  // namespace uqdepth
