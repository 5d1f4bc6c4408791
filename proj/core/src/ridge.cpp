#include "stabconf/ridge.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include "stabconf/trainer.hpp"

namespace stabconf::ridge {

namespace {

constexpr std::size_t kMaxDim = 64;

Eigen::MatrixXd design_matrix(const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto p = static_cast<Eigen::Index>(data.dim());
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = data[i].x()[j];
  return X;
}

Eigen::VectorXd response_vector(const Dataset& data) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = data[i].y();
  return y;
}

double ridge_weight(const Config& config, std::size_t n) {
  return config.penalty == Penalty::PerSample
             ? config.lambda * static_cast<double>(n)
             : config.lambda;
}

void check_config(const Config& config) {
  if (!(config.lambda > 0.0) || !std::isfinite(config.lambda))
    throw std::invalid_argument("ridge: lambda > 0 required");
}

}  // namespace

std::string to_string(Penalty p) {
  return p == Penalty::PerSample ? "per_sample" : "fixed_total";
}

Penalty penalty_from_string(const std::string& s) {
  if (s == "per_sample") return Penalty::PerSample;
  if (s == "fixed_total") return Penalty::FixedTotal;
  throw std::invalid_argument("ridge: unknown penalty '" + s + "'");
}

Model::Model(std::vector<double> beta, Config config, std::size_t n_fit)
    : beta_(std::move(beta)), config_(config), n_fit_(n_fit) {
  for (double v : beta_) {
    if (!std::isfinite(v))
      throw std::invalid_argument("ridge::Model: non-finite coefficient");
  }
}

double Model::predict(const std::vector<double>& x) const {
  if (x.size() != beta_.size())
    throw std::invalid_argument("ridge::Model::predict: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < beta_.size(); ++j) s += beta_[j] * x[j];
  return s;
}

std::string Model::to_json() const {
  std::ostringstream out;
  char buf[64];
  out << "{\"beta\":[";
  for (std::size_t j = 0; j < beta_.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", beta_[j]);
    out << (j ? "," : "") << buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", config_.lambda);
  out << "],\"lambda\":" << buf << ",\"parameterization\":\""
      << to_string(config_.penalty) << "\",\"n_fit\":" << n_fit_ << "}";
  return out.str();
}

Model fit(const Dataset& data, const Config& config) {
  check_config(config);
  if (data.dim() > kMaxDim)
    throw std::invalid_argument("ridge::fit: p <= 64 enforced");

  const Eigen::MatrixXd X = design_matrix(data);
  const Eigen::VectorXd y = response_vector(data);
  const auto p = static_cast<Eigen::Index>(data.dim());

  Eigen::MatrixXd A = X.transpose() * X;
  A.diagonal().array() += ridge_weight(config, data.size());
  const Eigen::VectorXd beta = A.ldlt().solve(X.transpose() * y);

  std::vector<double> out(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) out[static_cast<std::size_t>(j)] = beta(j);
  return Model(std::move(out), config, data.size());
}

double predict(const Model& model, const std::vector<double>& x) {
  return model.predict(x);
}

std::vector<Model> loo_models(const Dataset& data, const Config& config,
                              LooMethod method) {
  check_config(config);
  if (data.size() < 2)
    throw std::invalid_argument("ridge::loo_models: n >= 2 required");

  const std::size_t n = data.size();
  std::vector<Model> models;
  models.reserve(n);

  if (method == LooMethod::Naive) {
    for (std::size_t i = 0; i < n; ++i)
      models.push_back(fit(data.without(i), config));
    return models;
  }

  if (config.penalty != Penalty::FixedTotal)
    throw std::invalid_argument(
        "ridge::loo_models: fast method requires fixed_total penalty "
        "(per-sample removal rescales the ridge term; not a rank-one change)");

  const Eigen::MatrixXd X = design_matrix(data);
  const Eigen::VectorXd y = response_vector(data);
  const auto p = static_cast<Eigen::Index>(data.dim());

  Eigen::MatrixXd A = X.transpose() * X;
  A.diagonal().array() += config.lambda;
  const Eigen::LDLT<Eigen::MatrixXd> factor(A);
  const Eigen::VectorXd beta = factor.solve(X.transpose() * y);

  // Sherman-Morrison downdate: removing row i changes the solution by
  // -u (y_i - x_i'beta) / (1 - h_i) with u = A^-1 x_i, h_i = x_i'u < 1.
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = X.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::VectorXd u = factor.solve(xi);
    const double h = xi.dot(u);
    const double resid = y(static_cast<Eigen::Index>(i)) - xi.dot(beta);
    const Eigen::VectorXd beta_i = beta - u * (resid / (1.0 - h));
    std::vector<double> out(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j)
      out[static_cast<std::size_t>(j)] = beta_i(j);
    models.emplace_back(std::move(out), config, n - 1);
  }
  return models;
}

StabilityProfile stability_constants(int p, double b, double B, double lambda,
                                     Penalty penalty) {
  if (p <= 0 || !(b > 0.0) || !(B > 0.0) || !(lambda > 0.0))
    throw std::invalid_argument("stability_constants: positive inputs required");

  StabilityProfile profile;
  profile.p = p;
  profile.b = b;
  profile.B = B;
  profile.lambda = lambda;
  profile.kappa1 = b;
  profile.kappa2 = std::sqrt(static_cast<double>(p)) * b;
  profile.c = [b, B, lambda](long long n) {
    if (n < 1) throw std::invalid_argument("StabilityProfile: c_n needs n >= 1");
    return 16.0 * b * b * B * B / (lambda * static_cast<double>(n));
  };
  profile.certified = true;
  (void)penalty;  // recorded by callers; the c_n formula is the per-sample one
  return profile;
}

}  // namespace stabconf::ridge

namespace stabconf {

Trainer ridge_trainer(const ridge::Config& config) {
  return [config](const Dataset& data) -> Predictor {
    auto model = std::make_shared<ridge::Model>(ridge::fit(data, config));
    return [model](const std::vector<double>& x) { return model->predict(x); };
  };
}

Trainer mean_trainer() {
  return [](const Dataset& data) -> Predictor {
    double sum = 0.0;
    for (const auto& pt : data) sum += pt.y();
    const double mean = sum / static_cast<double>(data.size());
    return [mean](const std::vector<double>&) { return mean; };
  };
}

Trainer constant_trainer(double value) {
  return [value](const Dataset&) -> Predictor {
    return [value](const std::vector<double>&) { return value; };
  };
}

}  // namespace stabconf
