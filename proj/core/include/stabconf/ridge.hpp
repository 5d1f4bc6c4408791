#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stabconf/dataset.hpp"

namespace stabconf::ridge {

/// How the ridge penalty scales with the sample count.
///   PerSample:  (1/n) sum loss + lambda ||beta||^2   (certified stability)
///   FixedTotal: sum loss + lambda ||beta||^2         (rank-one LOO downdates)
enum class Penalty { PerSample, FixedTotal };

std::string to_string(Penalty p);
Penalty penalty_from_string(const std::string& s);

struct Config {
  double lambda = 1.0;
  Penalty penalty = Penalty::PerSample;
};

/// Fitted linear model: predictions are beta . x (no intercept).
class Model {
 public:
  Model(std::vector<double> beta, Config config, std::size_t n_fit);

  double predict(const std::vector<double>& x) const;
  const std::vector<double>& beta() const { return beta_; }
  const Config& config() const { return config_; }
  std::size_t n_fit() const { return n_fit_; }

  /// {"beta": [...], "lambda": ..., "parameterization": ..., "n_fit": ...}
  std::string to_json() const;

 private:
  std::vector<double> beta_;
  Config config_;
  std::size_t n_fit_;
};

/// Closed-form fit: beta = (X'X + n*lambda*I)^-1 X'y for PerSample,
/// with lambda replacing n*lambda for FixedTotal. Deterministic and
/// invariant under row permutations. p <= 64 enforced.
Model fit(const Dataset& data, const Config& config);

double predict(const Model& model, const std::vector<double>& x);

enum class LooMethod { Naive, Fast };

/// n leave-one-out refits; model i is fit(data.without(i)).
/// Fast uses a rank-one downdate of the normal equations, which is only a
/// rank-one change under FixedTotal; requesting it with PerSample throws.
std::vector<Model> loo_models(const Dataset& data, const Config& config,
                              LooMethod method);

/// Assumption parameters: uniform stability c_n, bi-Lipschitz kappas, and a
/// residual-density bound L_n. c and L are evaluated lazily since the bound
/// formulas index them at shifted sample sizes (n-1, n+1, n-m).
struct StabilityProfile {
  int p = 1;
  double b = 1.0;
  double B = 1.0;
  double lambda = 1.0;
  double kappa1 = 1.0;
  double kappa2 = 1.0;
  std::function<double(long long)> c;  ///< n -> c_n (strictly decreasing)
  std::function<double(long long)> L;  ///< n -> L_n (empty until a generator supplies it)
  bool certified = false;  ///< true when produced by a certified trainer
};

/// Ridge constants: c(n) = 16 b^2 B^2 / (lambda n), kappa1 = b,
/// kappa2 = sqrt(p) b. L is left unset; the data generator supplies it.
StabilityProfile stability_constants(int p, double b, double B, double lambda,
                                     Penalty penalty = Penalty::PerSample);

}  // namespace stabconf::ridge
