#include "stabconf/conformal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace stabconf::conformal {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("alpha must lie in (0,1)");
}

std::string fmt17(double v) {
  if (v == kInf) return "\"inf\"";
  if (v == -kInf) return "\"-inf\"";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

IntervalRegion::IntervalRegion(double lo, double hi)
    : lo_(lo), hi_(hi), empty_(false) {
  if (std::isnan(lo) || std::isnan(hi))
    throw std::invalid_argument("IntervalRegion: NaN endpoint");
  if (lo > hi) throw std::invalid_argument("IntervalRegion: lo <= hi required");
}

IntervalRegion IntervalRegion::empty_region() { return IntervalRegion(); }

IntervalRegion IntervalRegion::inflated(double eps) const {
  if (eps < 0.0 || std::isnan(eps))
    throw std::invalid_argument("IntervalRegion::inflated: eps >= 0 required");
  if (empty_) return *this;
  return IntervalRegion(lo_ - eps, hi_ + eps);
}

GridSpec GridSpec::around(double B, double margin, std::size_t count) {
  if (!(B > 0.0) || margin < 0.0)
    throw std::invalid_argument("GridSpec::around: bad bounds");
  GridSpec g;
  g.lo = -B - margin;
  g.hi = B + margin;
  g.count = count;
  g.validate();
  return g;
}

void GridSpec::validate() const {
  if (!(lo < hi) || count < 2)
    throw std::invalid_argument("GridSpec: lo < hi and count >= 2 required");
}

std::vector<double> GridSpec::points() const {
  validate();
  std::vector<double> pts(count);
  const double h = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i)
    pts[i] = lo + h * static_cast<double>(i);
  pts.back() = hi;
  return pts;
}

double GridSpec::step() const {
  return (hi - lo) / static_cast<double>(count - 1);
}

bool GridRegion::contains_nearest(double y) const {
  if (grid.empty()) return false;
  const auto it = std::lower_bound(grid.begin(), grid.end(), y);
  std::size_t idx;
  if (it == grid.begin()) {
    idx = 0;
  } else if (it == grid.end()) {
    idx = grid.size() - 1;
  } else {
    const std::size_t hi_idx = static_cast<std::size_t>(it - grid.begin());
    idx = (y - grid[hi_idx - 1] <= grid[hi_idx] - y) ? hi_idx - 1 : hi_idx;
  }
  return accepted[idx] != 0;
}

double GridRegion::resolution() const {
  return grid.size() > 1 ? grid[1] - grid[0] : 0.0;
}

RegionUnion::RegionUnion(std::vector<IntervalRegion> parts) {
  for (const auto& part : parts) {
    if (part.is_empty())
      throw std::invalid_argument("RegionUnion: empty member interval");
  }
  std::sort(parts.begin(), parts.end(),
            [](const IntervalRegion& a, const IntervalRegion& b) {
              return a.lo() < b.lo();
            });
  // Touching or overlapping members coalesce.
  for (auto& part : parts) {
    if (!parts_.empty() && part.lo() <= parts_.back().hi()) {
      const double hi = std::max(parts_.back().hi(), part.hi());
      parts_.back() = IntervalRegion(parts_.back().lo(), hi);
    } else {
      parts_.push_back(part);
    }
  }
}

bool RegionUnion::contains(double y) const {
  for (const auto& part : parts_) {
    if (y < part.lo()) return false;
    if (y <= part.hi()) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Split conformal
// ---------------------------------------------------------------------------

namespace {

ScoreSet residual_scores(const Predictor& model, const Dataset& data) {
  std::vector<double> scores;
  scores.reserve(data.size());
  for (const auto& pt : data)
    scores.push_back(abs_residual_score(model(pt.x()), pt.y()));
  return ScoreSet(std::move(scores));
}

IntervalRegion ball_around(double center, double radius) {
  if (radius == kInf) return IntervalRegion(-kInf, kInf);
  return IntervalRegion(center - radius, center + radius);
}

}  // namespace

SplitPredictor::SplitPredictor(const Dataset& train, const Dataset& cal,
                               const Trainer& trainer)
    : model_(trainer(train)), cal_scores_(residual_scores(model_, cal)) {}

IntervalRegion SplitPredictor::region(const std::vector<double>& x,
                                      double alpha) const {
  check_alpha(alpha);
  const double tau = empirical_quantile_threshold(cal_scores_, alpha, true);
  return ball_around(model_(x), tau);
}

IntervalRegion split_conformal(const Dataset& train, const Dataset& cal,
                               const std::vector<double>& x, double alpha,
                               const Trainer& trainer) {
  return SplitPredictor(train, cal, trainer).region(x, alpha);
}

// ---------------------------------------------------------------------------
// Jackknife family
// ---------------------------------------------------------------------------

LooPredictor::LooPredictor(const Dataset& data, const Trainer& trainer)
    : full_model_(trainer(data)) {
  const std::size_t n = data.size();
  loo_models_.reserve(n);
  loo_residuals_.reserve(n);
  if (n == 1) {
    // T on the empty set is undefined; with a single point the only LOO
    // quantile ranks are the infinite conventions, so any finite placeholder
    // score yields the same (-inf, +inf) region. Use the full model.
    loo_models_.push_back(full_model_);
    loo_residuals_.push_back(
        abs_residual_score(full_model_(data[0].x()), data[0].y()));
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    Predictor m = trainer(data.without(i));
    loo_residuals_.push_back(abs_residual_score(m(data[i].x()), data[i].y()));
    loo_models_.push_back(std::move(m));
  }
}

IntervalRegion LooPredictor::plus_region(const std::vector<double>& x,
                                         double alpha) const {
  check_alpha(alpha);
  const std::size_t n = loo_models_.size();
  std::vector<double> lower(n), upper(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = loo_models_[i](x);
    lower[i] = mu - loo_residuals_[i];
    upper[i] = mu + loo_residuals_[i];
  }
  const double lo = lower_quantile_minus(ScoreSet(std::move(lower)), alpha);
  const double hi = upper_quantile_plus(ScoreSet(std::move(upper)), alpha);
  // Endpoint quantiles can cross for alpha > 1/2; that is the empty region.
  if (lo > hi) return IntervalRegion::empty_region();
  return IntervalRegion(lo, hi);
}

IntervalRegion LooPredictor::plus_inflated_region(const std::vector<double>& x,
                                                  double alpha,
                                                  double epsilon) const {
  return plus_region(x, alpha).inflated(epsilon);
}

IntervalRegion LooPredictor::baseline_region(const std::vector<double>& x,
                                             double alpha) const {
  check_alpha(alpha);
  const double radius = empirical_quantile_threshold(
      ScoreSet(loo_residuals_), alpha, true);
  return ball_around(full_model_(x), radius);
}

IntervalRegion jackknife_plus(const Dataset& data, const std::vector<double>& x,
                              double alpha, const Trainer& trainer) {
  return LooPredictor(data, trainer).plus_region(x, alpha);
}

IntervalRegion jackknife_plus_inflated(const Dataset& data,
                                       const std::vector<double>& x,
                                       double alpha, double epsilon,
                                       const Trainer& trainer) {
  return LooPredictor(data, trainer).plus_inflated_region(x, alpha, epsilon);
}

IntervalRegion jackknife_baseline(const Dataset& data,
                                  const std::vector<double>& x, double alpha,
                                  const Trainer& trainer) {
  return LooPredictor(data, trainer).baseline_region(x, alpha);
}

// ---------------------------------------------------------------------------
// CV+
// ---------------------------------------------------------------------------

CvPredictor::CvPredictor(const Dataset& data, std::size_t K,
                         const Trainer& trainer) {
  const std::size_t n = data.size();
  if (K < 2) throw std::invalid_argument("cv_plus: K >= 2 required");
  if (K > n || n % K != 0)
    throw std::invalid_argument("cv_plus: K must divide n (equal folds)");
  const std::size_t m = n / K;

  fold_of_.resize(n);
  for (std::size_t i = 0; i < n; ++i) fold_of_[i] = i / m;

  fold_models_.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<DataPoint> rest;
    rest.reserve(n - m);
    for (std::size_t i = 0; i < n; ++i)
      if (fold_of_[i] != k) rest.push_back(data[i]);
    fold_models_.push_back(trainer(Dataset(std::move(rest))));
  }

  residuals_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& model = fold_models_[fold_of_[i]];
    residuals_[i] = abs_residual_score(model(data[i].x()), data[i].y());
  }
}

IntervalRegion CvPredictor::region(const std::vector<double>& x,
                                   double alpha) const {
  check_alpha(alpha);
  const std::size_t n = residuals_.size();
  std::vector<double> fold_pred(fold_models_.size());
  for (std::size_t k = 0; k < fold_models_.size(); ++k)
    fold_pred[k] = fold_models_[k](x);
  std::vector<double> lower(n), upper(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = fold_pred[fold_of_[i]];
    lower[i] = mu - residuals_[i];
    upper[i] = mu + residuals_[i];
  }
  const double lo = lower_quantile_minus(ScoreSet(std::move(lower)), alpha);
  const double hi = upper_quantile_plus(ScoreSet(std::move(upper)), alpha);
  if (lo > hi) return IntervalRegion::empty_region();
  return IntervalRegion(lo, hi);
}

IntervalRegion cv_plus(const Dataset& data, const std::vector<double>& x,
                       double alpha, std::size_t K, const Trainer& trainer) {
  return CvPredictor(data, K, trainer).region(x, alpha);
}

// ---------------------------------------------------------------------------
// Full conformal
// ---------------------------------------------------------------------------

GridRegion full_conformal(const Dataset& data, const std::vector<double>& x,
                          double alpha, const Trainer& trainer,
                          const GridSpec& grid) {
  check_alpha(alpha);
  grid.validate();
  if (x.size() != data.dim())
    throw std::invalid_argument("full_conformal: dimension mismatch");

  const std::size_t n = data.size();
  const long k = quantile_rank_ceil(1.0 - alpha, static_cast<long>(n) + 1);

  GridRegion region;
  region.grid = grid.points();
  region.accepted.resize(region.grid.size(), 0);

  std::vector<double> scores(n + 1);
  for (std::size_t g = 0; g < region.grid.size(); ++g) {
    const double y = region.grid[g];
    Predictor model;
    try {
      model = trainer(data.with_point(DataPoint(x, y)));
    } catch (const std::exception& e) {
      throw std::runtime_error("full_conformal: trainer failed at y = " +
                               std::to_string(y) + ": " + e.what());
    }
    for (std::size_t i = 0; i < n; ++i)
      scores[i] = abs_residual_score(model(data[i].x()), data[i].y());
    const double cand = abs_residual_score(model(x), y);
    scores[n] = cand;
    // accept iff cand <= k-th smallest of all n+1 scores, i.e. fewer than k
    // scores lie strictly below the candidate's.
    long below = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (scores[i] < cand) ++below;
    region.accepted[g] = (below <= k - 1) ? 1 : 0;
  }
  return region;
}

struct RidgeFullConformal::Impl {
  ridge::Config config;
  std::size_t n = 0;
  std::size_t p = 0;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd gram;  // X'X
  Eigen::VectorXd Xty;

  // Scores after training on D u (x, cand) are |a_i + b_i cand| for the data
  // and |ac + bc cand| for the candidate: ridge solutions are affine in cand.
  struct Coeffs {
    std::vector<double> a, b;
    double ac = 0.0, bc = 0.0;
  };

  Coeffs coefficients(const std::vector<double>& x) const {
    Eigen::VectorXd xt(static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j) xt(static_cast<Eigen::Index>(j)) = x[j];

    const double weight = config.penalty == ridge::Penalty::PerSample
                              ? config.lambda * static_cast<double>(n + 1)
                              : config.lambda;
    Eigen::MatrixXd A = gram + xt * xt.transpose();
    A.diagonal().array() += weight;
    const Eigen::LDLT<Eigen::MatrixXd> factor(A);
    const Eigen::VectorXd beta0 = factor.solve(Xty);
    const Eigen::VectorXd w = factor.solve(xt);

    Coeffs co;
    co.a.resize(n);
    co.b.resize(n);
    const Eigen::VectorXd pred0 = X * beta0;
    const Eigen::VectorXd slope = X * w;
    for (std::size_t i = 0; i < n; ++i) {
      co.a[i] = y(static_cast<Eigen::Index>(i)) - pred0(static_cast<Eigen::Index>(i));
      co.b[i] = -slope(static_cast<Eigen::Index>(i));
    }
    co.ac = -xt.dot(beta0);
    co.bc = 1.0 - xt.dot(w);  // > 0 since x'A^-1 x < 1
    return co;
  }

  static bool accepted_at(const Coeffs& co, long k, double cand) {
    const double sc = std::abs(co.ac + co.bc * cand);
    long below = 0;
    for (std::size_t i = 0; i < co.a.size(); ++i)
      if (std::abs(co.a[i] + co.b[i] * cand) < sc) ++below;
    return below <= k - 1;
  }
};

RidgeFullConformal::RidgeFullConformal(const Dataset& data,
                                       const ridge::Config& config) {
  if (!(config.lambda > 0.0))
    throw std::invalid_argument("RidgeFullConformal: lambda > 0 required");
  auto impl = std::make_shared<Impl>();
  impl->config = config;
  impl->n = data.size();
  impl->p = data.dim();
  impl->X.resize(static_cast<Eigen::Index>(impl->n),
                 static_cast<Eigen::Index>(impl->p));
  impl->y.resize(static_cast<Eigen::Index>(impl->n));
  for (std::size_t i = 0; i < impl->n; ++i) {
    for (std::size_t j = 0; j < impl->p; ++j)
      impl->X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          data[i].x()[j];
    impl->y(static_cast<Eigen::Index>(i)) = data[i].y();
  }
  impl->gram = impl->X.transpose() * impl->X;
  impl->Xty = impl->X.transpose() * impl->y;
  impl_ = std::move(impl);
}

bool RidgeFullConformal::accepts(const std::vector<double>& x, double y,
                                 double alpha) const {
  check_alpha(alpha);
  if (x.size() != impl_->p)
    throw std::invalid_argument("RidgeFullConformal: dimension mismatch");
  const auto co = impl_->coefficients(x);
  const long k =
      quantile_rank_ceil(1.0 - alpha, static_cast<long>(impl_->n) + 1);
  return Impl::accepted_at(co, k, y);
}

RegionUnion RidgeFullConformal::region(const std::vector<double>& x,
                                       double alpha) const {
  check_alpha(alpha);
  if (x.size() != impl_->p)
    throw std::invalid_argument("RidgeFullConformal: dimension mismatch");
  const auto co = impl_->coefficients(x);
  const std::size_t n = impl_->n;
  const long k = quantile_rank_ceil(1.0 - alpha, static_cast<long>(n) + 1);

  // Acceptance flips only where some score equals the candidate's:
  // (a_i - ac) + (b_i - bc) y = 0  or  (a_i + ac) + (b_i + bc) y = 0.
  std::vector<double> cuts;
  cuts.reserve(2 * n);
  const auto add_root = [&cuts](double da, double db) {
    if (db != 0.0) {
      const double r = -da / db;
      if (std::isfinite(r)) cuts.push_back(r);
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    add_root(co.a[i] - co.ac, co.b[i] - co.bc);
    add_root(co.a[i] + co.ac, co.b[i] + co.bc);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  // Elementary pieces: open intervals between cuts plus the cut points,
  // merged into maximal closed intervals.
  struct Piece {
    double lo, hi;
    bool accept;
  };
  std::vector<Piece> pieces;
  if (cuts.empty()) {
    pieces.push_back({-kInf, kInf, Impl::accepted_at(co, k, 0.0)});
  } else {
    const double span =
        std::max(1.0, std::abs(cuts.front()) + std::abs(cuts.back()));
    pieces.push_back(
        {-kInf, cuts.front(), Impl::accepted_at(co, k, cuts.front() - span)});
    for (std::size_t i = 0; i < cuts.size(); ++i) {
      pieces.push_back({cuts[i], cuts[i], Impl::accepted_at(co, k, cuts[i])});
      const double next = (i + 1 < cuts.size()) ? cuts[i + 1] : kInf;
      const double probe = (i + 1 < cuts.size())
                               ? 0.5 * (cuts[i] + cuts[i + 1])
                               : cuts[i] + span;
      pieces.push_back({cuts[i], next, Impl::accepted_at(co, k, probe)});
    }
  }

  std::vector<IntervalRegion> parts;
  std::size_t idx = 0;
  while (idx < pieces.size()) {
    if (!pieces[idx].accept) {
      ++idx;
      continue;
    }
    const double lo = pieces[idx].lo;
    double hi = pieces[idx].hi;
    while (idx + 1 < pieces.size() && pieces[idx + 1].accept &&
           pieces[idx + 1].lo <= hi) {
      ++idx;
      hi = pieces[idx].hi;
    }
    parts.emplace_back(lo, hi);
    ++idx;
  }
  return RegionUnion(std::move(parts));
}

RegionUnion full_conformal_ridge_exact(const Dataset& data,
                                       const std::vector<double>& x,
                                       double alpha,
                                       const ridge::Config& config) {
  return RidgeFullConformal(data, config).region(x, alpha);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string to_json(const IntervalRegion& region, const std::string& method,
                    double alpha) {
  std::ostringstream out;
  out << "{\"method\":\"" << method << "\",\"alpha\":" << fmt17(alpha);
  if (region.is_empty()) {
    out << ",\"empty\":true}";
  } else {
    out << ",\"lo\":" << fmt17(region.lo()) << ",\"hi\":" << fmt17(region.hi())
        << "}";
  }
  return out.str();
}

std::string to_json(const GridRegion& region, const std::string& method,
                    double alpha) {
  std::ostringstream out;
  out << "{\"method\":\"" << method << "\",\"alpha\":" << fmt17(alpha)
      << ",\"grid\":[";
  for (std::size_t i = 0; i < region.grid.size(); ++i)
    out << (i ? "," : "") << fmt17(region.grid[i]);
  out << "],\"accepted\":[";
  for (std::size_t i = 0; i < region.accepted.size(); ++i)
    out << (i ? "," : "") << (region.accepted[i] ? "true" : "false");
  out << "]}";
  return out.str();
}

std::string to_json(const RegionUnion& region, const std::string& method,
                    double alpha) {
  std::ostringstream out;
  out << "{\"method\":\"" << method << "\",\"alpha\":" << fmt17(alpha)
      << ",\"intervals\":[";
  for (std::size_t i = 0; i < region.parts().size(); ++i) {
    const auto& part = region.parts()[i];
    out << (i ? "," : "") << "[" << fmt17(part.lo()) << "," << fmt17(part.hi())
        << "]";
  }
  out << "]}";
  return out.str();
}

}  // namespace stabconf::conformal
