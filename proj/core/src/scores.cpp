#include "stabconf/scores.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stabconf {

ScoreSet::ScoreSet(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("ScoreSet: size >= 1 required");
  for (double v : values_) {
    if (std::isnan(v)) throw std::invalid_argument("ScoreSet: NaN rejected");
    if (v == -kInf) throw std::invalid_argument("ScoreSet: -inf rejected");
  }
  std::sort(values_.begin(), values_.end());
}

double ScoreSet::kth_smallest(std::size_t k) const {
  if (k < 1 || k > values_.size())
    throw std::out_of_range("ScoreSet::kth_smallest: rank out of range");
  return values_[k - 1];
}

double abs_residual_score(double prediction, double y) {
  if (!std::isfinite(prediction) || !std::isfinite(y))
    throw std::invalid_argument("abs_residual_score: non-finite input");
  return std::abs(y - prediction);
}

namespace {

// q*count carries a couple of ulps of rounding error; without the snap,
// alpha=0.2 with count=5 would ceil to 5 instead of the exact-arithmetic 4.
double snapped_product(double q, long count) {
  double v = q * static_cast<double>(count);
  const double r = std::nearbyint(v);
  if (std::abs(v - r) <= 1e-9 * std::max(1.0, std::abs(v))) v = r;
  return v;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("alpha must lie in (0,1)");
}

}  // namespace

long quantile_rank_ceil(double q, long count) {
  return static_cast<long>(std::ceil(snapped_product(q, count)));
}

long quantile_rank_floor(double q, long count) {
  return static_cast<long>(std::floor(snapped_product(q, count)));
}

double upper_quantile_plus(const ScoreSet& values, double alpha) {
  check_alpha(alpha);
  const long m = static_cast<long>(values.size());
  const long k = quantile_rank_ceil(1.0 - alpha, m + 1);
  if (k >= m + 1) return kInf;
  return values.kth_smallest(static_cast<std::size_t>(k));
}

double lower_quantile_minus(const ScoreSet& values, double alpha) {
  check_alpha(alpha);
  const long m = static_cast<long>(values.size());
  const long k = quantile_rank_floor(alpha, m + 1);
  if (k <= 0) return -kInf;
  return values.kth_smallest(static_cast<std::size_t>(k));
}

double empirical_cdf(const ScoreSet& values, double t) {
  if (values.has_infinite())
    throw std::invalid_argument("empirical_cdf: +inf sentinel not allowed");
  const auto& v = values.sorted();
  const auto it = std::upper_bound(v.begin(), v.end(), t);
  return static_cast<double>(it - v.begin()) / static_cast<double>(v.size());
}

double empirical_quantile_threshold(const ScoreSet& scores, double alpha,
                                    bool augment_with_infinity) {
  check_alpha(alpha);
  const long n = static_cast<long>(scores.size());
  if (augment_with_infinity) {
    const long k = quantile_rank_ceil(1.0 - alpha, n + 1);
    if (k >= n + 1) return kInf;
    return scores.kth_smallest(static_cast<std::size_t>(k));
  }
  long k = quantile_rank_ceil(1.0 - alpha, n);
  if (k < 1) k = 1;
  return scores.kth_smallest(static_cast<std::size_t>(k));
}

}  // namespace stabconf
