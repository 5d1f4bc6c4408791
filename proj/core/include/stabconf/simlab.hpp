#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stabconf/bounds.hpp"
#include "stabconf/conformal.hpp"
#include "stabconf/dataset.hpp"
#include "stabconf/ridge.hpp"
#include "stabconf/trainer.hpp"

namespace stabconf::simlab {

/// Noise families with analytic density bounds for the residual magnitude.
struct NoiseSpec {
  enum class Family { Uniform, TruncatedGaussian };
  Family family = Family::Uniform;
  double a = 1.0;      ///< uniform half-width: noise ~ U(-a, a)
  double sigma = 1.0;  ///< truncated gaussian scale
  double cut = 2.0;    ///< truncation at cut * sigma

  void validate() const;

  /// Upper bound on the density of |Y - mu(X)| for any fixed predictor:
  /// 1/a (uniform) or 2 phi(0) / (sigma * P(|Z| <= cut)) (truncated gaussian).
  double density_bound() const;

  /// Half-width of the noise support (a, or sigma * cut).
  double support_halfwidth() const;

  /// Scale used for default grid margins: a/sqrt(3) or sigma.
  double nominal_sigma() const;
};

/// Synthetic linear model Y = theta*.x + noise with X uniform on the
/// radius-b ball. The margin invariant ||theta*|| b + noise support <= B
/// keeps every response inside the box, so the rejection step in generate()
/// never distorts the noise density and the analytic L bound stays exact.
struct GeneratorSpec {
  int p = 1;
  double b = 1.0;
  double B = 1.0;
  std::vector<double> theta_star;  ///< size p
  NoiseSpec noise;

  void validate() const;
  double l_bound() const { return noise.density_bound(); }
  DomainBounds domain() const { return DomainBounds{b, B}; }
  double signal(const std::vector<double>& x) const;

  std::string to_canonical_json() const;
};

GeneratorSpec generator_spec_from_json(const std::string& json_text);

/// n i.i.d. draws, deterministic per seed.
Dataset generate(const GeneratorSpec& spec, std::size_t n, std::uint64_t seed);

/// Certified ridge constants for this generator, including the analytic
/// density bound L (constant in n).
ridge::StabilityProfile stability_profile(const GeneratorSpec& spec,
                                          double lambda,
                                          ridge::Penalty penalty);

/// Default full-conformal candidate grid for this generator:
/// [-B - 4 sigma, B + 4 sigma] with the noise's nominal sigma.
conformal::GridSpec default_grid(const GeneratorSpec& spec,
                                 std::size_t count = 2001);

struct PeEstimate {
  double pe = 0.0;
  double se = 0.0;  ///< binomial standard error sqrt(pe(1-pe)/n_test)
};

/// Membership test for a trained region: covers(x, y).
using CoverageFn = std::function<bool(const std::vector<double>&, double)>;

/// Fraction of n_test fresh test points falling outside the region.
PeEstimate estimate_pe(const CoverageFn& covers, const GeneratorSpec& spec,
                       std::size_t n_test, std::uint64_t seed);

/// Membership adapter for grid regions: nearest-grid-point lookup per test
/// point (the resolution guard: keep the grid covering every feasible y so
/// |y - nearest| <= step/2).
CoverageFn grid_coverage(
    std::function<conformal::GridRegion(const std::vector<double>&)> region_at);

enum class Method {
  Split,
  Full,
  Jackknife,
  JackknifePlus,
  JackknifePlusInflated,
  CvPlus,
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);

// ---------------------------------------------------------------------------
// Coverage experiments
// ---------------------------------------------------------------------------

struct CoverageConfig {
  Method method = Method::Split;
  GeneratorSpec spec;
  std::size_t n = 100;  ///< training points per trial (split: train + cal)
  double alpha = 0.1;
  std::size_t trials = 100;
  std::size_t n_test = 10000;
  std::vector<double> thresholds;  ///< exceedance queried at these t values
  ridge::Config trainer;
  std::size_t folds = 5;          ///< cv+
  double epsilon = 0.0;           ///< jackknife+eps inflation
  double train_fraction = 0.5;    ///< split
  std::uint64_t base_seed = 0;
  unsigned workers = 1;

  void validate() const;
  std::string to_canonical_json() const;
};

CoverageConfig coverage_config_from_json(const std::string& json_text);

struct ThresholdStat {
  double threshold = 0.0;
  double exceedance = 0.0;  ///< fraction of trials with pe > threshold
};

struct TrialReport {
  std::string method;
  std::size_t n = 0;
  double alpha = 0.0;
  std::size_t trials = 0;
  std::size_t n_test = 0;
  std::vector<double> pe_values;  ///< by trial index
  std::vector<ThresholdStat> exceedance;
  double mean_pe = 0.0;
  double se_mean = 0.0;  ///< sample sd of pe_values / sqrt(trials)
  std::uint64_t base_seed = 0;
  std::string config_hash;

  std::string to_json() const;
  std::string to_csv() const;  ///< header: trial,pe
};

TrialReport coverage_experiment(const CoverageConfig& config);

// ---------------------------------------------------------------------------
// Concentration experiments (appendix lemmas)
// ---------------------------------------------------------------------------

enum class Lemma { McDiarmidBeta, LooModels, FullModel, Dkw };

std::string to_string(Lemma target);
Lemma lemma_from_string(const std::string& s);

struct ConcentrationConfig {
  GeneratorSpec spec;
  Lemma target = Lemma::McDiarmidBeta;
  std::size_t n = 32;
  std::size_t trials = 1000;
  std::vector<double> eps_list;  ///< deviations (dkw: CDF sup deviations)
  ridge::Config trainer;
  std::size_t aux_factor = 10;   ///< R_aux = aux_factor * trials
  std::size_t grid_points = 1000;
  std::size_t reference_samples = 1000000;  ///< dkw reference CDF size
  std::uint64_t base_seed = 0;
  unsigned workers = 1;

  void validate() const;
  std::string to_canonical_json() const;
};

ConcentrationConfig concentration_config_from_json(const std::string& json_text);

struct ConcentrationRow {
  double eps = 0.0;
  double empirical = 0.0;
  double se = 0.0;  ///< binomial SE of the empirical frequency
  double theoretical = 0.0;
  bool vacuous = false;
};

struct ConcentrationTable {
  std::string target;
  std::size_t n = 0;
  std::size_t trials = 0;
  std::vector<ConcentrationRow> rows;
  /// Max componentwise SE carried by the estimated mean model (the lemmas
  /// reference an exact expectation no experiment can access).
  double mean_estimate_se = 0.0;
  std::uint64_t base_seed = 0;
  std::string config_hash;

  std::string to_csv() const;  ///< header: eps,empirical,se,theoretical,vacuous
  std::string to_json() const;
};

ConcentrationTable concentration_experiment(const ConcentrationConfig& config);

// ---------------------------------------------------------------------------
// Rate experiments (theory table joined with empirical quantiles)
// ---------------------------------------------------------------------------

struct RateConfig {
  GeneratorSpec spec;
  std::vector<long long> n_list;
  std::vector<Method> methods;  ///< empirical methods to run at each n
  double alpha = 0.1;
  double eps = 0.05;
  double delta = 0.05;
  double gamma = 0.1;
  std::size_t trials = 200;
  std::size_t n_test = 2000;
  ridge::Config trainer;
  std::size_t folds = 5;
  double train_fraction = 0.5;
  std::uint64_t base_seed = 0;
  unsigned workers = 1;

  void validate() const;
  std::string to_canonical_json() const;
};

RateConfig rate_config_from_json(const std::string& json_text);

struct RateMethodStat {
  Method method = Method::Split;
  double mean_pe = 0.0;
  double sd_pe = 0.0;
  double q95_pe = 0.0;       ///< ceil(0.95 R)-th smallest trial value
  double threshold = 0.0;    ///< matching theory threshold (NaN if none)
  bool threshold_vacuous = false;
};

struct RateJoinedRow {
  bounds::RateRow theory;
  std::vector<RateMethodStat> stats;
};

struct RateExperimentTable {
  std::vector<RateJoinedRow> rows;
  std::optional<long long> crossover_n;
  std::uint64_t base_seed = 0;
  std::string config_hash;

  /// Long format, one row per (n, method); theory columns repeat and match
  /// bounds::RateTable::to_csv byte for byte.
  std::string to_csv() const;
};

RateExperimentTable rate_experiment(const RateConfig& config);

/// FNV-1a 64-bit hash of a canonical config string, as 16 hex digits.
std::string config_hash_hex(const std::string& canonical);

}  // namespace stabconf::simlab
