#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace stabconf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Finite multiset of nonconformity scores, kept sorted ascending.
/// Duplicates keep their multiplicity. +inf sentinels are allowed and sort
/// last; -inf and NaN are rejected at construction.
class ScoreSet {
 public:
  explicit ScoreSet(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  const std::vector<double>& sorted() const { return values_; }

  /// 1-based order statistic. k in [1, size()].
  double kth_smallest(std::size_t k) const;

  bool has_infinite() const {
    return !values_.empty() && values_.back() == kInf;
  }

 private:
  std::vector<double> values_;
};

/// |y - prediction|. Both inputs must be finite.
double abs_residual_score(double prediction, double y);

// Rank arithmetic for the order-statistic quantile conventions. Values of
// q*count within a few ulps of an integer are snapped to it before taking
// ceil/floor, so that e.g. alpha=0.2 with count=5 lands on the integer rank
// the exact rational arithmetic would give.
long quantile_rank_ceil(double q, long count);
long quantile_rank_floor(double q, long count);

/// q-hat-plus: the ceil((1-alpha)(|A|+1))-th smallest element of A, or +inf
/// when that rank exceeds |A| (equivalently alpha < 1/(|A|+1)).
double upper_quantile_plus(const ScoreSet& values, double alpha);

/// q-hat-minus: the floor(alpha(|A|+1))-th smallest element of A, or -inf
/// when the rank is 0 (mirror of the +inf convention).
double lower_quantile_minus(const ScoreSet& values, double alpha);

/// Fraction of values <= t. Rejects score sets holding a +inf sentinel.
double empirical_cdf(const ScoreSet& values, double t);

/// Split-conformal calibration threshold. With augmentation, the
/// ceil((1-alpha)(n+1))-th smallest of scores ∪ {+inf}; without, the
/// ceil((1-alpha) n)-th smallest of the scores alone.
double empirical_quantile_threshold(const ScoreSet& scores, double alpha,
                                    bool augment_with_infinity);

}  // namespace stabconf
