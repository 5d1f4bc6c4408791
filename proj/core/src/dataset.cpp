#include "stabconf/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

namespace stabconf {

namespace {

bool all_finite(const std::vector<double>& v) {
  for (double e : v) {
    if (!std::isfinite(e)) return false;
  }
  return true;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

double squared_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return s;
}

double euclidean_norm(const std::vector<double>& v) {
  return std::sqrt(squared_norm(v));
}

DataPoint::DataPoint(std::vector<double> x, double y)
    : x_(std::move(x)), y_(y) {
  if (x_.empty()) throw std::invalid_argument("DataPoint: empty feature vector");
  if (!all_finite(x_) || !std::isfinite(y_))
    throw std::invalid_argument("DataPoint: non-finite entry");
}

DataPoint::DataPoint(std::vector<double> x, double y, const DomainBounds& dom)
    : DataPoint(std::move(x), y) {
  // Norm comparison uses a one-ulp-scale slack so that points generated to
  // sit exactly on the ball boundary survive a round trip through CSV.
  const double norm = euclidean_norm(x_);
  if (norm > dom.b * (1.0 + 1e-12))
    throw DataError("DataPoint: ||x||_2 = " + std::to_string(norm) +
                    " exceeds ball radius b = " + std::to_string(dom.b));
  if (std::abs(y_) > dom.B * (1.0 + 1e-12))
    throw DataError("DataPoint: |y| = " + std::to_string(std::abs(y_)) +
                    " exceeds box bound B = " + std::to_string(dom.B));
}

Dataset::Dataset(std::vector<DataPoint> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("Dataset: n >= 1 required");
  const std::size_t p = points_.front().dim();
  for (const auto& pt : points_) {
    if (pt.dim() != p)
      throw std::invalid_argument("Dataset: inconsistent feature dimensions");
  }
}

Dataset Dataset::without(std::size_t i) const {
  if (size() < 2) throw std::invalid_argument("Dataset::without: n >= 2 required");
  if (i >= size()) throw std::out_of_range("Dataset::without: index out of range");
  std::vector<DataPoint> pts;
  pts.reserve(size() - 1);
  for (std::size_t j = 0; j < size(); ++j) {
    if (j != i) pts.push_back(points_[j]);
  }
  return Dataset(std::move(pts));
}

Dataset Dataset::with_point(DataPoint point) const {
  if (point.dim() != dim())
    throw std::invalid_argument("Dataset::with_point: dimension mismatch");
  std::vector<DataPoint> pts = points_;
  pts.push_back(std::move(point));
  return Dataset(std::move(pts));
}

Dataset Dataset::slice(std::size_t first, std::size_t last) const {
  if (first >= last || last > size())
    throw std::invalid_argument("Dataset::slice: bad range");
  return Dataset(std::vector<DataPoint>(points_.begin() + first,
                                        points_.begin() + last));
}

Dataset load_csv(const std::string& path, const DomainBounds& dom) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_line(line);
  if (header.size() < 2 || header.back() != "y")
    throw DataError("load_csv: expected header 'x1,...,xp,y' in '" + path + "'");
  const std::size_t p = header.size() - 1;
  for (std::size_t j = 0; j < p; ++j) {
    if (header[j] != "x" + std::to_string(j + 1))
      throw DataError("load_csv: bad header column '" + header[j] + "' in '" +
                      path + "'");
  }

  std::vector<DataPoint> points;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != p + 1)
      throw DataError("load_csv: row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(p + 1));
    std::vector<double> x(p);
    double y = 0.0;
    try {
      for (std::size_t j = 0; j < p; ++j) x[j] = std::stod(fields[j]);
      y = std::stod(fields[p]);
    } catch (const std::exception&) {
      throw DataError("load_csv: row " + std::to_string(row) +
                      " holds a non-numeric field");
    }
    try {
      points.emplace_back(std::move(x), y, dom);
    } catch (const DataError& e) {
      throw DataError("load_csv: row " + std::to_string(row) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError("load_csv: row " + std::to_string(row) + ": " + e.what());
    }
  }
  if (points.empty()) throw DataError("load_csv: no data rows in '" + path + "'");
  return Dataset(std::move(points));
}

void save_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("save_csv: cannot open '" + path + "' for writing");
  const std::size_t p = data.dim();
  for (std::size_t j = 0; j < p; ++j) out << "x" << (j + 1) << ",";
  out << "y\n";
  char buf[64];
  for (const auto& pt : data) {
    for (std::size_t j = 0; j < p; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", pt.x()[j]);
      out << buf << ",";
    }
    std::snprintf(buf, sizeof(buf), "%.17g", pt.y());
    out << buf << "\n";
  }
  if (!out) throw DataError("save_csv: write failure on '" + path + "'");
}

}  // namespace stabconf
