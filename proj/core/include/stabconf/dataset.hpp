#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stabconf {

/// Malformed or out-of-contract input data: unreadable files, bad CSV rows,
/// ball/box constraint violations. The CLI maps this to exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Domain constraints: feature vectors live in the Euclidean ball of radius
/// b, responses in [-B, B].
struct DomainBounds {
  double b = 1.0;
  double B = 1.0;
};

double squared_norm(const std::vector<double>& v);
double euclidean_norm(const std::vector<double>& v);

/// One (x, y) observation. Entries are always finite; the bounded
/// constructor additionally enforces ||x||_2 <= dom.b and |y| <= dom.B.
class DataPoint {
 public:
  DataPoint(std::vector<double> x, double y);
  DataPoint(std::vector<double> x, double y, const DomainBounds& dom);

  const std::vector<double>& x() const { return x_; }
  double y() const { return y_; }
  std::size_t dim() const { return x_.size(); }

 private:
  std::vector<double> x_;
  double y_;
};

/// Ordered tuple of observations sharing one feature dimension. n >= 1.
class Dataset {
 public:
  explicit Dataset(std::vector<DataPoint> points);

  std::size_t size() const { return points_.size(); }
  std::size_t dim() const { return points_.front().dim(); }
  const DataPoint& operator[](std::size_t i) const { return points_[i]; }

  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  /// Copy with point i removed (leave-one-out refits). Requires n >= 2.
  Dataset without(std::size_t i) const;
  /// Copy with one point appended (full-conformal augmentation).
  Dataset with_point(DataPoint point) const;
  /// Copy restricted to the index range [first, last).
  Dataset slice(std::size_t first, std::size_t last) const;

 private:
  std::vector<DataPoint> points_;
};

/// Reads a dataset from CSV with header "x1,...,xp,y". Every row is checked
/// against dom; violations raise DataError naming the offending row.
Dataset load_csv(const std::string& path, const DomainBounds& dom);

/// Writes the matching CSV (17 significant digits, round-trip safe).
void save_csv(const std::string& path, const Dataset& data);

}  // namespace stabconf
