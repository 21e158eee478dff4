#pragma once

#include <vector>

namespace uqdepth {

/// RMSE of the retained pixels as a function of the removed fraction.
struct SparsificationCurve {
  std::vector<double> fractions;    // strictly increasing, starting at 0, all < 1
  std::vector<double> rmse_values;  // same length
};

/// 0.00, 0.02, ..., 0.98
std::vector<double> default_fractions();

/// For each fraction f, drop the floor(f*n) pixels with the highest ranking
/// score (ties broken by pixel index) and report the RMSE of the remainder.
SparsificationCurve sparsification_curve(const std::vector<double>& errors,
                                         const std::vector<double>& ranking,
                                         const std::vector<double>& fractions);

/// Sparsification with the true error as the ranking score.
SparsificationCurve oracle_curve(const std::vector<double>& errors,
                                 const std::vector<double>& fractions);

struct SparsificationGap {
  SparsificationCurve difference;  // curve minus oracle, pointwise
  double area = 0.0;               // signed trapezoidal integral over f
};

SparsificationGap sparsification_error(const SparsificationCurve& curve,
                                       const SparsificationCurve& oracle);

/// Pointwise mean of per-image curves sharing the same fractions.
SparsificationCurve average_curves(const std::vector<SparsificationCurve>& curves);

}  // namespace uqdepth
