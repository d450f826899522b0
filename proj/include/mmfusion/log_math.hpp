#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace mmfusion {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(v))) with max-shift. Returns -inf for an empty span or when
/// every entry is -inf. A single finite entry is returned bit-exactly.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) {
    return kNegInf;
  }
  const double max_value = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(max_value)) {
    // -inf: nothing to sum; +inf/NaN propagate as-is
    return max_value;
  }
  double sum = 0.0;
  for (const double x : v) {
    sum += std::exp(x - max_value);
  }
  return max_value + std::log(sum);
}

}  // namespace mmfusion
