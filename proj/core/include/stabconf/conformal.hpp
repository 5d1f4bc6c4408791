#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "stabconf/dataset.hpp"
#include "stabconf/ridge.hpp"
#include "stabconf/scores.hpp"
#include "stabconf/trainer.hpp"

namespace stabconf::conformal {

/// Closed interval with extended-real endpoints, plus a distinguished empty
/// value. [c, c] is a valid degenerate region.
class IntervalRegion {
 public:
  IntervalRegion(double lo, double hi);
  static IntervalRegion empty_region();

  bool is_empty() const { return empty_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  bool contains(double y) const { return !empty_ && lo_ <= y && y <= hi_; }
  bool is_entire() const { return !empty_ && lo_ == -kInf && hi_ == kInf; }

  /// Inflated copy [lo - eps, hi + eps]; eps >= 0.
  IntervalRegion inflated(double eps) const;

 private:
  IntervalRegion() : lo_(0), hi_(0), empty_(true) {}
  double lo_, hi_;
  bool empty_;
};

/// Uniform candidate grid for full-conformal scans.
struct GridSpec {
  double lo = -1.0;
  double hi = 1.0;
  std::size_t count = 2001;

  /// Default grid [-B - margin, B + margin]; margin is typically 4 sigma of
  /// the noise so the grid covers every response the generator can emit.
  static GridSpec around(double B, double margin, std::size_t count = 2001);

  std::vector<double> points() const;
  double step() const;
  void validate() const;
};

/// Full-conformal output: per-grid-point acceptance flags.
struct GridRegion {
  std::vector<double> grid;     ///< strictly increasing, >= 2 points
  std::vector<char> accepted;   ///< same length

  /// Membership of an arbitrary y via its nearest grid point. Callers are
  /// expected to keep |y - nearest| <= step/2 (the resolution guard).
  bool contains_nearest(double y) const;
  double resolution() const;
};

/// Finite union of disjoint closed intervals, ordered by lo.
class RegionUnion {
 public:
  explicit RegionUnion(std::vector<IntervalRegion> parts);
  const std::vector<IntervalRegion>& parts() const { return parts_; }
  bool contains(double y) const;
  bool is_empty() const { return parts_.empty(); }

 private:
  std::vector<IntervalRegion> parts_;
};

// ---------------------------------------------------------------------------
// Prepared predictors: train once, evaluate regions at many test points.
// ---------------------------------------------------------------------------

/// Split conformal: model from the proper training set, threshold from the
/// augmented empirical quantile of the calibration scores.
class SplitPredictor {
 public:
  SplitPredictor(const Dataset& train, const Dataset& cal, const Trainer& trainer);
  IntervalRegion region(const std::vector<double>& x, double alpha) const;

 private:
  Predictor model_;
  ScoreSet cal_scores_;
};

/// Jackknife family: leave-one-out models and their residuals, plus the
/// full-data model for the plain jackknife baseline.
class LooPredictor {
 public:
  LooPredictor(const Dataset& data, const Trainer& trainer);

  IntervalRegion plus_region(const std::vector<double>& x, double alpha) const;
  IntervalRegion plus_inflated_region(const std::vector<double>& x, double alpha,
                                      double epsilon) const;
  IntervalRegion baseline_region(const std::vector<double>& x, double alpha) const;

  std::size_t size() const { return loo_models_.size(); }

 private:
  std::vector<Predictor> loo_models_;
  std::vector<double> loo_residuals_;
  Predictor full_model_;
};

/// CV+: fold-removed models stand in for the LOO models. K must divide n.
class CvPredictor {
 public:
  CvPredictor(const Dataset& data, std::size_t K, const Trainer& trainer);
  IntervalRegion region(const std::vector<double>& x, double alpha) const;

 private:
  std::vector<Predictor> fold_models_;   // one per fold
  std::vector<std::size_t> fold_of_;     // point index -> fold index
  std::vector<double> residuals_;        // fold-removed residual per point
};

/// Exact full-conformal machinery for ridge, prepared once per dataset.
/// Ridge trained on D u (x, y) is affine in y, so single-candidate
/// acceptance costs O(p^3 + n p) and the whole acceptance set is a finite
/// union of closed intervals.
class RidgeFullConformal {
 public:
  RidgeFullConformal(const Dataset& data, const ridge::Config& config);

  /// Would y be accepted into the region at x?
  bool accepts(const std::vector<double>& x, double y, double alpha) const;

  /// The exact acceptance set at x.
  RegionUnion region(const std::vector<double>& x, double alpha) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

// ---------------------------------------------------------------------------
// One-shot constructions.
// ---------------------------------------------------------------------------

IntervalRegion split_conformal(const Dataset& train, const Dataset& cal,
                               const std::vector<double>& x, double alpha,
                               const Trainer& trainer);

/// Retrains on D u (x, y) for every grid candidate y; accepts y iff its score
/// is <= the ceil((1-alpha)(n+1))-th smallest of the n+1 scores.
GridRegion full_conformal(const Dataset& data, const std::vector<double>& x,
                          double alpha, const Trainer& trainer,
                          const GridSpec& grid);

/// Exact full-conformal acceptance set for ridge: predictions are affine in
/// the candidate y, every score is piecewise linear, and the acceptance set
/// is a finite union of closed intervals computed from the breakpoints.
RegionUnion full_conformal_ridge_exact(const Dataset& data,
                                       const std::vector<double>& x,
                                       double alpha,
                                       const ridge::Config& config);

IntervalRegion jackknife_plus(const Dataset& data, const std::vector<double>& x,
                              double alpha, const Trainer& trainer);

IntervalRegion jackknife_plus_inflated(const Dataset& data,
                                       const std::vector<double>& x,
                                       double alpha, double epsilon,
                                       const Trainer& trainer);

IntervalRegion jackknife_baseline(const Dataset& data,
                                  const std::vector<double>& x, double alpha,
                                  const Trainer& trainer);

IntervalRegion cv_plus(const Dataset& data, const std::vector<double>& x,
                       double alpha, std::size_t K, const Trainer& trainer);

// JSON serialization. Infinite endpoints render as "inf"/"-inf" strings.
std::string to_json(const IntervalRegion& region, const std::string& method,
                    double alpha);
std::string to_json(const GridRegion& region, const std::string& method,
                    double alpha);
std::string to_json(const RegionUnion& region, const std::string& method,
                    double alpha);

}  // namespace stabconf::conformal
