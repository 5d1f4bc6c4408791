#include "stabconf/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "stabconf/rng.hpp"
#include "stabconf/scores.hpp"

namespace stabconf::simlab {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Trials are independent work units; results land in index-addressed slots,
// so the schedule cannot change any output byte.
void parallel_for(std::size_t count, unsigned workers,
                  const std::function<void(std::size_t)>& body) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned k = std::min<unsigned>(workers, 64);
  pool.reserve(k);
  for (unsigned t = 0; t < k; ++t) pool.emplace_back(run);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) /
                      static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double binomial_se(double phat, std::size_t n) {
  return std::sqrt(std::max(0.0, phat * (1.0 - phat)) / static_cast<double>(n));
}

void require_keys(const json& j,
                  std::initializer_list<const char*> required,
                  std::initializer_list<const char*> optional,
                  const std::string& ctx) {
  if (!j.is_object())
    throw std::invalid_argument(ctx + ": JSON object expected");
  for (const char* key : required) {
    if (!j.contains(key))
      throw std::invalid_argument(ctx + ": missing required key '" + key + "'");
  }
  for (const auto& item : j.items()) {
    const std::string& key = item.key();
    const bool known =
        std::any_of(required.begin(), required.end(),
                    [&](const char* k) { return key == k; }) ||
        std::any_of(optional.begin(), optional.end(),
                    [&](const char* k) { return key == k; });
    if (!known)
      throw std::invalid_argument(ctx + ": unknown key '" + key + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Noise and generator specs
// ---------------------------------------------------------------------------

void NoiseSpec::validate() const {
  switch (family) {
    case Family::Uniform:
      if (!(a > 0.0) || !std::isfinite(a))
        throw std::invalid_argument("NoiseSpec: uniform half-width a > 0 required");
      break;
    case Family::TruncatedGaussian:
      if (!(sigma > 0.0) || !(cut > 0.0) || !std::isfinite(sigma) ||
          !std::isfinite(cut))
        throw std::invalid_argument("NoiseSpec: sigma > 0 and cut > 0 required");
      break;
  }
}

double NoiseSpec::density_bound() const {
  validate();
  if (family == Family::Uniform) {
    // |d + U(-a,a)| has density f(t-d) + f(-t-d) <= 2 * (1/(2a)) = 1/a.
    return 1.0 / a;
  }
  // Truncated gaussian: density of the noise peaks at phi(0)/(sigma Z_cut)
  // with Z_cut = P(|Z| <= cut); folding doubles it.
  const double z_cut = std::erf(cut / std::sqrt(2.0));
  return 2.0 / (sigma * std::sqrt(2.0 * kPi) * z_cut);
}

double NoiseSpec::support_halfwidth() const {
  validate();
  return family == Family::Uniform ? a : sigma * cut;
}

double NoiseSpec::nominal_sigma() const {
  validate();
  return family == Family::Uniform ? a / std::sqrt(3.0) : sigma;
}

void GeneratorSpec::validate() const {
  if (p < 1) throw std::invalid_argument("GeneratorSpec: p >= 1 required");
  if (!(b > 0.0) || !(B > 0.0))
    throw std::invalid_argument("GeneratorSpec: b > 0 and B > 0 required");
  if (theta_star.size() != static_cast<std::size_t>(p))
    throw std::invalid_argument("GeneratorSpec: theta_star must have length p");
  noise.validate();
  const double reach = euclidean_norm(theta_star) * b + noise.support_halfwidth();
  if (reach > B * (1.0 + 1e-12))
    throw std::invalid_argument(
        "GeneratorSpec: ||theta*|| b + noise support = " + std::to_string(reach) +
        " exceeds B = " + std::to_string(B));
}

double GeneratorSpec::signal(const std::vector<double>& x) const {
  double s = 0.0;
  for (std::size_t j = 0; j < theta_star.size(); ++j) s += theta_star[j] * x[j];
  return s;
}

namespace {

json noise_to_json(const NoiseSpec& n) {
  json j;
  if (n.family == NoiseSpec::Family::Uniform) {
    j["family"] = "uniform";
    j["a"] = n.a;
  } else {
    j["family"] = "truncated_gaussian";
    j["sigma"] = n.sigma;
    j["cut"] = n.cut;
  }
  return j;
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec n;
  require_keys(j, {"family"}, {"a", "sigma", "cut"}, "noise");
  const std::string family = j.at("family").get<std::string>();
  if (family == "uniform") {
    n.family = NoiseSpec::Family::Uniform;
    n.a = j.at("a").get<double>();
  } else if (family == "truncated_gaussian") {
    n.family = NoiseSpec::Family::TruncatedGaussian;
    n.sigma = j.at("sigma").get<double>();
    n.cut = j.at("cut").get<double>();
  } else {
    throw std::invalid_argument("noise: unknown family '" + family + "'");
  }
  n.validate();
  return n;
}

json spec_to_json(const GeneratorSpec& s) {
  json j;
  j["p"] = s.p;
  j["b"] = s.b;
  j["B"] = s.B;
  j["theta_star"] = s.theta_star;
  j["noise"] = noise_to_json(s.noise);
  return j;
}

GeneratorSpec spec_from_json(const json& j) {
  require_keys(j, {"p", "b", "B", "theta_star", "noise"}, {}, "spec");
  GeneratorSpec s;
  s.p = j.at("p").get<int>();
  s.b = j.at("b").get<double>();
  s.B = j.at("B").get<double>();
  s.theta_star = j.at("theta_star").get<std::vector<double>>();
  s.noise = noise_from_json(j.at("noise"));
  s.validate();
  return s;
}

json trainer_to_json(const ridge::Config& c) {
  json j;
  j["lambda"] = c.lambda;
  j["penalty"] = ridge::to_string(c.penalty);
  return j;
}

ridge::Config trainer_from_json(const json& j) {
  require_keys(j, {"lambda"}, {"penalty"}, "trainer");
  ridge::Config c;
  c.lambda = j.at("lambda").get<double>();
  if (j.contains("penalty"))
    c.penalty = ridge::penalty_from_string(j.at("penalty").get<std::string>());
  if (!(c.lambda > 0.0))
    throw std::invalid_argument("trainer: lambda > 0 required");
  return c;
}

}  // namespace

std::string GeneratorSpec::to_canonical_json() const {
  return spec_to_json(*this).dump();
}

GeneratorSpec generator_spec_from_json(const std::string& json_text) {
  return spec_from_json(json::parse(json_text));
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace {

std::vector<double> draw_ball_point(std::mt19937_64& eng, int p, double b) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(p));
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& xi : x) {
      xi = gauss(eng);
      norm += xi * xi;
    }
    norm = std::sqrt(norm);
  } while (norm == 0.0);
  const double r =
      b * std::pow(unif(eng), 1.0 / static_cast<double>(p)) / norm;
  for (auto& xi : x) xi *= r;
  return x;
}

double draw_noise(std::mt19937_64& eng, const NoiseSpec& spec) {
  if (spec.family == NoiseSpec::Family::Uniform) {
    std::uniform_real_distribution<double> unif(-spec.a, spec.a);
    return unif(eng);
  }
  std::normal_distribution<double> gauss(0.0, spec.sigma);
  const double limit = spec.sigma * spec.cut;
  for (int tries = 0; tries < 100000; ++tries) {
    const double z = gauss(eng);
    if (std::abs(z) <= limit) return z;
  }
  throw std::runtime_error("draw_noise: truncation rejection did not terminate");
}

}  // namespace

Dataset generate(const GeneratorSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("generate: n >= 1 required");
  auto eng = rng::engine(seed);
  std::vector<DataPoint> points;
  points.reserve(n);
  const DomainBounds dom = spec.domain();
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x = draw_ball_point(eng, spec.p, spec.b);
    const double signal = spec.signal(x);
    double y = 0.0;
    bool ok = false;
    // The margin invariant makes this accept on the first draw; the loop
    // keeps the box constraint exact even if a spec sits on the boundary.
    for (int tries = 0; tries < 100000; ++tries) {
      y = signal + draw_noise(eng, spec.noise);
      if (std::abs(y) <= spec.B) {
        ok = true;
        break;
      }
    }
    if (!ok) throw std::runtime_error("generate: response rejection did not terminate");
    points.emplace_back(std::move(x), y, dom);
  }
  return Dataset(std::move(points));
}

ridge::StabilityProfile stability_profile(const GeneratorSpec& spec,
                                          double lambda,
                                          ridge::Penalty penalty) {
  spec.validate();
  auto profile = ridge::stability_constants(spec.p, spec.b, spec.B, lambda, penalty);
  const double L = spec.l_bound();
  profile.L = [L](long long) { return L; };
  return profile;
}

conformal::GridSpec default_grid(const GeneratorSpec& spec, std::size_t count) {
  spec.validate();
  return conformal::GridSpec::around(spec.B, 4.0 * spec.noise.nominal_sigma(),
                                     count);
}

PeEstimate estimate_pe(const CoverageFn& covers, const GeneratorSpec& spec,
                       std::size_t n_test, std::uint64_t seed) {
  spec.validate();
  if (n_test < 1) throw std::invalid_argument("estimate_pe: n_test >= 1 required");
  auto eng = rng::engine(seed);
  std::size_t misses = 0;
  for (std::size_t i = 0; i < n_test; ++i) {
    const std::vector<double> x = draw_ball_point(eng, spec.p, spec.b);
    double y = 0.0;
    const double signal = spec.signal(x);
    for (int tries = 0;; ++tries) {
      y = signal + draw_noise(eng, spec.noise);
      if (std::abs(y) <= spec.B) break;
      if (tries >= 100000)
        throw std::runtime_error("estimate_pe: rejection did not terminate");
    }
    if (!covers(x, y)) ++misses;
  }
  const double pe = static_cast<double>(misses) / static_cast<double>(n_test);
  return PeEstimate{pe, binomial_se(pe, n_test)};
}

CoverageFn grid_coverage(
    std::function<conformal::GridRegion(const std::vector<double>&)> region_at) {
  return [region_at = std::move(region_at)](const std::vector<double>& x,
                                            double y) {
    return region_at(x).contains_nearest(y);
  };
}

// ---------------------------------------------------------------------------
// Method names
// ---------------------------------------------------------------------------

std::string to_string(Method m) {
  switch (m) {
    case Method::Split: return "split";
    case Method::Full: return "full";
    case Method::Jackknife: return "jackknife";
    case Method::JackknifePlus: return "jackknife+";
    case Method::JackknifePlusInflated: return "jackknife+eps";
    case Method::CvPlus: return "cv+";
  }
  throw std::logic_error("to_string(Method): unreachable");
}

Method method_from_string(const std::string& s) {
  if (s == "split") return Method::Split;
  if (s == "full") return Method::Full;
  if (s == "jackknife") return Method::Jackknife;
  if (s == "jackknife+") return Method::JackknifePlus;
  if (s == "jackknife+eps") return Method::JackknifePlusInflated;
  if (s == "cv+") return Method::CvPlus;
  throw std::invalid_argument("unknown method '" + s + "'");
}

std::string to_string(Lemma target) {
  switch (target) {
    case Lemma::McDiarmidBeta: return "lemma1";
    case Lemma::LooModels: return "lemma2";
    case Lemma::FullModel: return "lemma3";
    case Lemma::Dkw: return "dkw";
  }
  throw std::logic_error("to_string(Lemma): unreachable");
}

Lemma lemma_from_string(const std::string& s) {
  if (s == "lemma1") return Lemma::McDiarmidBeta;
  if (s == "lemma2") return Lemma::LooModels;
  if (s == "lemma3") return Lemma::FullModel;
  if (s == "dkw") return Lemma::Dkw;
  throw std::invalid_argument("unknown concentration target '" + s + "'");
}

// ---------------------------------------------------------------------------
// Coverage experiments
// ---------------------------------------------------------------------------

void CoverageConfig::validate() const {
  spec.validate();
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("coverage: alpha in (0,1) required");
  if (trials < 1) throw std::invalid_argument("coverage: trials >= 1 required");
  if (n_test < 1) throw std::invalid_argument("coverage: n_test >= 1 required");
  if (!(trainer.lambda > 0.0))
    throw std::invalid_argument("coverage: trainer lambda > 0 required");
  switch (method) {
    case Method::Split: {
      const auto n_train =
          static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
      if (n < 2 || n_train < 1 || n_train >= n)
        throw std::invalid_argument("coverage: split needs 1 <= n_train < n");
      break;
    }
    case Method::CvPlus:
      if (folds < 2 || n % folds != 0)
        throw std::invalid_argument("coverage: cv+ needs folds >= 2 dividing n");
      break;
    case Method::JackknifePlusInflated:
      if (epsilon < 0.0)
        throw std::invalid_argument("coverage: epsilon >= 0 required");
      [[fallthrough]];
    case Method::Jackknife:
    case Method::JackknifePlus:
      if (n < 2) throw std::invalid_argument("coverage: n >= 2 required");
      break;
    case Method::Full:
      if (n < 1) throw std::invalid_argument("coverage: n >= 1 required");
      break;
  }
}

std::string CoverageConfig::to_canonical_json() const {
  json j;
  j["type"] = "coverage";
  j["method"] = to_string(method);
  j["spec"] = spec_to_json(spec);
  j["n"] = n;
  j["alpha"] = alpha;
  j["trials"] = trials;
  j["n_test"] = n_test;
  j["thresholds"] = thresholds;
  j["trainer"] = trainer_to_json(trainer);
  j["folds"] = folds;
  j["epsilon"] = epsilon;
  j["train_fraction"] = train_fraction;
  j["seed"] = base_seed;
  return j.dump();
}

CoverageConfig coverage_config_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  require_keys(j, {"method", "spec", "n", "alpha", "trials", "n_test"},
               {"type", "thresholds", "trainer", "folds", "epsilon",
                "train_fraction", "seed", "workers", "out_json", "out_csv"},
               "coverage config");
  if (j.contains("type") && j.at("type").get<std::string>() != "coverage")
    throw std::invalid_argument("coverage config: type must be 'coverage'");
  CoverageConfig c;
  c.method = method_from_string(j.at("method").get<std::string>());
  c.spec = spec_from_json(j.at("spec"));
  c.n = j.at("n").get<std::size_t>();
  c.alpha = j.at("alpha").get<double>();
  c.trials = j.at("trials").get<std::size_t>();
  c.n_test = j.at("n_test").get<std::size_t>();
  if (j.contains("thresholds"))
    c.thresholds = j.at("thresholds").get<std::vector<double>>();
  if (j.contains("trainer")) c.trainer = trainer_from_json(j.at("trainer"));
  if (j.contains("folds")) c.folds = j.at("folds").get<std::size_t>();
  if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
  if (j.contains("train_fraction"))
    c.train_fraction = j.at("train_fraction").get<double>();
  if (j.contains("seed")) c.base_seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("workers")) c.workers = j.at("workers").get<unsigned>();
  c.validate();
  return c;
}

namespace {

CoverageFn make_coverage_fn(const CoverageConfig& config, const Dataset& data) {
  const Trainer trainer = ridge_trainer(config.trainer);
  const double alpha = config.alpha;
  switch (config.method) {
    case Method::Split: {
      const auto n_train = static_cast<std::size_t>(
          std::llround(config.train_fraction * static_cast<double>(config.n)));
      auto sp = std::make_shared<conformal::SplitPredictor>(
          data.slice(0, n_train), data.slice(n_train, data.size()), trainer);
      return [sp, alpha](const std::vector<double>& x, double y) {
        return sp->region(x, alpha).contains(y);
      };
    }
    case Method::Jackknife: {
      auto lp = std::make_shared<conformal::LooPredictor>(data, trainer);
      return [lp, alpha](const std::vector<double>& x, double y) {
        return lp->baseline_region(x, alpha).contains(y);
      };
    }
    case Method::JackknifePlus: {
      auto lp = std::make_shared<conformal::LooPredictor>(data, trainer);
      return [lp, alpha](const std::vector<double>& x, double y) {
        return lp->plus_region(x, alpha).contains(y);
      };
    }
    case Method::JackknifePlusInflated: {
      auto lp = std::make_shared<conformal::LooPredictor>(data, trainer);
      const double eps = config.epsilon;
      return [lp, alpha, eps](const std::vector<double>& x, double y) {
        return lp->plus_inflated_region(x, alpha, eps).contains(y);
      };
    }
    case Method::CvPlus: {
      auto cp = std::make_shared<conformal::CvPredictor>(data, config.folds,
                                                         trainer);
      return [cp, alpha](const std::vector<double>& x, double y) {
        return cp->region(x, alpha).contains(y);
      };
    }
    case Method::Full: {
      // Exact single-candidate acceptance; criterion-checked against the
      // grid scan, and free of grid resolution error.
      auto fc = std::make_shared<conformal::RidgeFullConformal>(data,
                                                                config.trainer);
      return [fc, alpha](const std::vector<double>& x, double y) {
        return fc->accepts(x, y, alpha);
      };
    }
  }
  throw std::logic_error("make_coverage_fn: unreachable");
}

}  // namespace

TrialReport coverage_experiment(const CoverageConfig& config) {
  config.validate();
  const std::size_t R = config.trials;
  std::vector<double> pe(R, 0.0);

  parallel_for(R, config.workers, [&](std::size_t trial) {
    const Dataset data =
        generate(config.spec, config.n,
                 rng::derive(config.base_seed, trial, rng::Role::TrainData));
    const CoverageFn covers = make_coverage_fn(config, data);
    const PeEstimate est =
        estimate_pe(covers, config.spec, config.n_test,
                    rng::derive(config.base_seed, trial, rng::Role::TestData));
    pe[trial] = est.pe;
  });

  TrialReport report;
  report.method = to_string(config.method);
  report.n = config.n;
  report.alpha = config.alpha;
  report.trials = R;
  report.n_test = config.n_test;
  report.pe_values = std::move(pe);
  report.base_seed = config.base_seed;
  report.config_hash = config_hash_hex(config.to_canonical_json());

  double sum = 0.0;
  for (double v : report.pe_values) sum += v;
  report.mean_pe = sum / static_cast<double>(R);
  report.se_mean = sample_sd(report.pe_values) / std::sqrt(static_cast<double>(R));

  for (double t : config.thresholds) {
    std::size_t count = 0;
    for (double v : report.pe_values)
      if (v > t) ++count;
    report.exceedance.push_back(
        {t, static_cast<double>(count) / static_cast<double>(R)});
  }
  return report;
}

std::string TrialReport::to_json() const {
  json j;
  j["method"] = method;
  j["n"] = n;
  j["alpha"] = alpha;
  j["trials"] = trials;
  j["n_test"] = n_test;
  j["pe_values"] = pe_values;
  json exc = json::array();
  for (const auto& e : exceedance)
    exc.push_back({{"threshold", e.threshold}, {"exceedance", e.exceedance}});
  j["exceedance"] = exc;
  j["mean_pe"] = mean_pe;
  j["se_mean"] = se_mean;
  j["base_seed"] = base_seed;
  j["seed_scheme"] = "splitmix64(base_seed, trial, role)";
  j["config_hash"] = config_hash;
  return j.dump();
}

std::string TrialReport::to_csv() const {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << " base_seed=" << base_seed << "\n";
  out << "trial,pe\n";
  for (std::size_t i = 0; i < pe_values.size(); ++i)
    out << i << "," << fmt17(pe_values[i]) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Concentration experiments
// ---------------------------------------------------------------------------

void ConcentrationConfig::validate() const {
  spec.validate();
  if (n < 2) throw std::invalid_argument("concentration: n >= 2 required");
  if (trials < 100)
    throw std::invalid_argument("concentration: trials >= 100 required");
  if (eps_list.empty())
    throw std::invalid_argument("concentration: eps_list must be non-empty");
  for (double e : eps_list)
    if (!(e >= 0.0)) throw std::invalid_argument("concentration: eps >= 0 required");
  if (aux_factor < 1)
    throw std::invalid_argument("concentration: aux_factor >= 1 required");
  if (grid_points < 2)
    throw std::invalid_argument("concentration: grid_points >= 2 required");
  if (target == Lemma::Dkw && reference_samples < 1000)
    throw std::invalid_argument("concentration: reference_samples >= 1000 required");
  if (!(trainer.lambda > 0.0))
    throw std::invalid_argument("concentration: trainer lambda > 0 required");
}

std::string ConcentrationConfig::to_canonical_json() const {
  json j;
  j["type"] = "concentration";
  j["target"] = to_string(target);
  j["spec"] = spec_to_json(spec);
  j["n"] = n;
  j["trials"] = trials;
  j["eps_list"] = eps_list;
  j["trainer"] = trainer_to_json(trainer);
  j["aux_factor"] = aux_factor;
  j["grid_points"] = grid_points;
  j["reference_samples"] = reference_samples;
  j["seed"] = base_seed;
  return j.dump();
}

ConcentrationConfig concentration_config_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  require_keys(j, {"target", "spec", "n", "trials", "eps_list"},
               {"type", "trainer", "aux_factor", "grid_points",
                "reference_samples", "seed", "workers", "out_json", "out_csv"},
               "concentration config");
  if (j.contains("type") && j.at("type").get<std::string>() != "concentration")
    throw std::invalid_argument("concentration config: type must be 'concentration'");
  ConcentrationConfig c;
  c.target = lemma_from_string(j.at("target").get<std::string>());
  c.spec = spec_from_json(j.at("spec"));
  c.n = j.at("n").get<std::size_t>();
  c.trials = j.at("trials").get<std::size_t>();
  c.eps_list = j.at("eps_list").get<std::vector<double>>();
  if (j.contains("trainer")) c.trainer = trainer_from_json(j.at("trainer"));
  if (j.contains("aux_factor")) c.aux_factor = j.at("aux_factor").get<std::size_t>();
  if (j.contains("grid_points"))
    c.grid_points = j.at("grid_points").get<std::size_t>();
  if (j.contains("reference_samples"))
    c.reference_samples = j.at("reference_samples").get<std::size_t>();
  if (j.contains("seed")) c.base_seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("workers")) c.workers = j.at("workers").get<unsigned>();
  c.validate();
  return c;
}

namespace {

struct MeanModel {
  std::vector<double> beta;
  double max_se = 0.0;  // max componentwise SE of the average
};

// Average of ridge fits over fresh replicates of the given size; stands in
// for the unobservable expectation E beta-hat.
MeanModel estimate_mean_beta(const ConcentrationConfig& config,
                             std::size_t fit_size) {
  const std::size_t r_aux = config.aux_factor * config.trials;
  const auto p = static_cast<std::size_t>(config.spec.p);
  std::vector<std::vector<double>> betas(r_aux);
  parallel_for(r_aux, config.workers, [&](std::size_t rep) {
    const Dataset data =
        generate(config.spec, fit_size,
                 rng::derive(config.base_seed, rep, rng::Role::AuxData));
    betas[rep] = ridge::fit(data, config.trainer).beta();
  });

  MeanModel out;
  out.beta.assign(p, 0.0);
  for (const auto& beta : betas)
    for (std::size_t j = 0; j < p; ++j) out.beta[j] += beta[j];
  for (auto& v : out.beta) v /= static_cast<double>(r_aux);

  for (std::size_t j = 0; j < p; ++j) {
    double ss = 0.0;
    for (const auto& beta : betas) {
      const double d = beta[j] - out.beta[j];
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(r_aux - 1));
    out.max_se = std::max(out.max_se, sd / std::sqrt(static_cast<double>(r_aux)));
  }
  return out;
}

// Evaluation sites for sup norms over the feature ball: boundary points along
// deterministic random directions (the sup of a linear map lives there).
std::vector<std::vector<double>> direction_grid(const GeneratorSpec& spec,
                                                std::size_t count,
                                                std::uint64_t base_seed) {
  auto eng = rng::engine(base_seed, 0, rng::Role::Directions);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> grid;
  grid.reserve(count);
  const auto p = static_cast<std::size_t>(spec.p);
  while (grid.size() < count) {
    std::vector<double> u(p);
    double norm = 0.0;
    for (auto& v : u) {
      v = gauss(eng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (auto& v : u) v *= spec.b / norm;
    grid.push_back(std::move(u));
  }
  return grid;
}

double sup_on_grid(const std::vector<double>& beta_a,
                   const std::vector<double>& beta_b,
                   const std::vector<std::vector<double>>& grid) {
  double best = 0.0;
  for (const auto& x : grid) {
    double d = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j)
      d += (beta_a[j] - beta_b[j]) * x[j];
    best = std::max(best, std::abs(d));
  }
  return best;
}

double score_against(const std::vector<double>& beta,
                     const std::vector<double>& x, double y) {
  double pred = 0.0;
  for (std::size_t j = 0; j < beta.size(); ++j) pred += beta[j] * x[j];
  return std::abs(y - pred);
}

}  // namespace

ConcentrationTable concentration_experiment(const ConcentrationConfig& config) {
  config.validate();
  const std::size_t R = config.trials;
  const auto profile =
      stability_profile(config.spec, config.trainer.lambda, config.trainer.penalty);
  std::vector<double> deviations(R, 0.0);
  double mean_estimate_se = 0.0;

  switch (config.target) {
    case Lemma::McDiarmidBeta: {
      const MeanModel mean = estimate_mean_beta(config, config.n);
      mean_estimate_se = mean.max_se;
      parallel_for(R, config.workers, [&](std::size_t trial) {
        const Dataset data = generate(
            config.spec, config.n,
            rng::derive(config.base_seed, trial, rng::Role::TrainData));
        const auto beta = ridge::fit(data, config.trainer).beta();
        double dev = 0.0;
        for (std::size_t j = 0; j < beta.size(); ++j)
          dev = std::max(dev, std::abs(beta[j] - mean.beta[j]));
        deviations[trial] = dev;
      });
      break;
    }
    case Lemma::LooModels: {
      const MeanModel mean = estimate_mean_beta(config, config.n - 1);
      mean_estimate_se = mean.max_se;
      const auto grid =
          direction_grid(config.spec, config.grid_points, config.base_seed);
      parallel_for(R, config.workers, [&](std::size_t trial) {
        const Dataset data = generate(
            config.spec, config.n,
            rng::derive(config.base_seed, trial, rng::Role::TrainData));
        const auto models =
            ridge::loo_models(data, config.trainer, ridge::LooMethod::Naive);
        double dev = 0.0;
        for (const auto& model : models)
          dev = std::max(dev, sup_on_grid(model.beta(), mean.beta, grid));
        deviations[trial] = dev;
      });
      break;
    }
    case Lemma::FullModel: {
      const MeanModel mean = estimate_mean_beta(config, config.n);
      mean_estimate_se = mean.max_se;
      const auto grid =
          direction_grid(config.spec, config.grid_points, config.base_seed);
      parallel_for(R, config.workers, [&](std::size_t trial) {
        const Dataset data = generate(
            config.spec, config.n,
            rng::derive(config.base_seed, trial, rng::Role::TrainData));
        const auto beta = ridge::fit(data, config.trainer).beta();
        deviations[trial] = sup_on_grid(beta, mean.beta, grid);
      });
      break;
    }
    case Lemma::Dkw: {
      const MeanModel mean = estimate_mean_beta(config, config.n - 1);
      mean_estimate_se = mean.max_se;
      // Reference CDF for the score |Y - mu(X)| under the mean LOO model.
      std::vector<double> reference(config.reference_samples);
      {
        auto eng = rng::engine(config.base_seed, 0, rng::Role::Reference);
        for (auto& s : reference) {
          const std::vector<double> x =
              draw_ball_point(eng, config.spec.p, config.spec.b);
          double y = 0.0;
          const double signal = config.spec.signal(x);
          do {
            y = signal + draw_noise(eng, config.spec.noise);
          } while (std::abs(y) > config.spec.B);
          s = score_against(mean.beta, x, y);
        }
        std::sort(reference.begin(), reference.end());
      }
      const auto ref_cdf = [&reference](double t) {
        const auto it =
            std::upper_bound(reference.begin(), reference.end(), t);
        return static_cast<double>(it - reference.begin()) /
               static_cast<double>(reference.size());
      };
      parallel_for(R, config.workers, [&](std::size_t trial) {
        const Dataset data = generate(
            config.spec, config.n,
            rng::derive(config.base_seed, trial, rng::Role::TrainData));
        std::vector<double> scores;
        scores.reserve(data.size());
        for (const auto& pt : data)
          scores.push_back(score_against(mean.beta, pt.x(), pt.y()));
        std::sort(scores.begin(), scores.end());
        const double nn = static_cast<double>(scores.size());
        double d = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
          const double f = ref_cdf(scores[i]);
          d = std::max(d, std::max(f - static_cast<double>(i) / nn,
                                   static_cast<double>(i + 1) / nn - f));
        }
        deviations[trial] = d;
      });
      break;
    }
  }

  ConcentrationTable table;
  table.target = to_string(config.target);
  table.n = config.n;
  table.trials = R;
  table.mean_estimate_se = mean_estimate_se;
  table.base_seed = config.base_seed;
  table.config_hash = config_hash_hex(config.to_canonical_json());

  for (double eps : config.eps_list) {
    std::size_t count = 0;
    for (double d : deviations)
      if (d >= eps) ++count;
    const double empirical = static_cast<double>(count) / static_cast<double>(R);
    bounds::TailValue tail;
    switch (config.target) {
      case Lemma::McDiarmidBeta:
        tail = bounds::mcdiarmid_tail(eps, static_cast<long long>(config.n), profile);
        break;
      case Lemma::LooModels:
        tail = bounds::loo_concentration_tail(eps, static_cast<long long>(config.n),
                                              profile);
        break;
      case Lemma::FullModel:
        tail = bounds::full_model_concentration_tail(
            eps, static_cast<long long>(config.n), profile);
        break;
      case Lemma::Dkw:
        tail = bounds::dkw_tail(static_cast<long long>(config.n), eps);
        break;
    }
    table.rows.push_back(
        {eps, empirical, binomial_se(empirical, R), tail.value, tail.vacuous});
  }
  return table;
}

std::string ConcentrationTable::to_csv() const {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << " base_seed=" << base_seed << "\n";
  out << "eps,empirical,se,theoretical,vacuous\n";
  for (const auto& row : rows) {
    out << fmt17(row.eps) << "," << fmt17(row.empirical) << "," << fmt17(row.se)
        << "," << fmt17(row.theoretical) << "," << (row.vacuous ? 1 : 0) << "\n";
  }
  return out.str();
}

std::string ConcentrationTable::to_json() const {
  json j;
  j["target"] = target;
  j["n"] = n;
  j["trials"] = trials;
  json rows_json = json::array();
  for (const auto& row : rows) {
    rows_json.push_back({{"eps", row.eps},
                         {"empirical", row.empirical},
                         {"se", row.se},
                         {"theoretical", row.theoretical},
                         {"vacuous", row.vacuous}});
  }
  j["rows"] = rows_json;
  j["mean_estimate_se"] = mean_estimate_se;
  j["base_seed"] = base_seed;
  j["config_hash"] = config_hash;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Rate experiments
// ---------------------------------------------------------------------------

void RateConfig::validate() const {
  spec.validate();
  if (n_list.empty()) throw std::invalid_argument("rate: n_list must be non-empty");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1])
      throw std::invalid_argument("rate: n_list must increase");
  if (methods.empty()) throw std::invalid_argument("rate: methods must be non-empty");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("rate: alpha in (0,1) required");
  if (!(gamma > 0.0)) throw std::invalid_argument("rate: gamma > 0 required");
  if (trials < 2) throw std::invalid_argument("rate: trials >= 2 required");
}

std::string RateConfig::to_canonical_json() const {
  json j;
  j["type"] = "rate";
  j["spec"] = spec_to_json(spec);
  j["n_list"] = n_list;
  json methods_json = json::array();
  for (Method m : methods) methods_json.push_back(to_string(m));
  j["methods"] = methods_json;
  j["alpha"] = alpha;
  j["eps"] = eps;
  j["delta"] = delta;
  j["gamma"] = gamma;
  j["trials"] = trials;
  j["n_test"] = n_test;
  j["trainer"] = trainer_to_json(trainer);
  j["folds"] = folds;
  j["train_fraction"] = train_fraction;
  j["seed"] = base_seed;
  return j.dump();
}

RateConfig rate_config_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  require_keys(j, {"spec", "n_list", "methods", "alpha", "trials", "n_test"},
               {"type", "eps", "delta", "gamma", "trainer", "folds",
                "train_fraction", "seed", "workers", "out_json", "out_csv"},
               "rate config");
  if (j.contains("type") && j.at("type").get<std::string>() != "rate")
    throw std::invalid_argument("rate config: type must be 'rate'");
  RateConfig c;
  c.spec = spec_from_json(j.at("spec"));
  c.n_list = j.at("n_list").get<std::vector<long long>>();
  for (const auto& m : j.at("methods"))
    c.methods.push_back(method_from_string(m.get<std::string>()));
  c.alpha = j.at("alpha").get<double>();
  c.trials = j.at("trials").get<std::size_t>();
  c.n_test = j.at("n_test").get<std::size_t>();
  if (j.contains("eps")) c.eps = j.at("eps").get<double>();
  if (j.contains("delta")) c.delta = j.at("delta").get<double>();
  if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
  if (j.contains("trainer")) c.trainer = trainer_from_json(j.at("trainer"));
  if (j.contains("folds")) c.folds = j.at("folds").get<std::size_t>();
  if (j.contains("train_fraction"))
    c.train_fraction = j.at("train_fraction").get<double>();
  if (j.contains("seed")) c.base_seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("workers")) c.workers = j.at("workers").get<unsigned>();
  c.validate();
  return c;
}

RateExperimentTable rate_experiment(const RateConfig& config) {
  config.validate();
  const auto profile =
      stability_profile(config.spec, config.trainer.lambda, config.trainer.penalty);
  const bounds::RateTable theory = bounds::rate_comparison_table(
      config.n_list, profile, config.alpha, config.eps, config.delta,
      config.gamma);

  RateExperimentTable table;
  table.crossover_n = theory.crossover_n;
  table.base_seed = config.base_seed;
  table.config_hash = config_hash_hex(config.to_canonical_json());

  for (std::size_t ni = 0; ni < config.n_list.size(); ++ni) {
    const long long n = config.n_list[ni];
    RateJoinedRow row;
    row.theory = theory.rows[ni];

    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
      const Method method = config.methods[mi];
      CoverageConfig sub;
      sub.method = method;
      sub.spec = config.spec;
      sub.n = static_cast<std::size_t>(n);
      sub.alpha = config.alpha;
      sub.trials = config.trials;
      sub.n_test = config.n_test;
      sub.trainer = config.trainer;
      sub.folds = config.folds;
      sub.train_fraction = config.train_fraction;
      sub.base_seed = rng::derive(config.base_seed,
                                  (static_cast<std::uint64_t>(ni) << 16) | mi,
                                  rng::Role::Experiment);
      sub.workers = config.workers;
      const TrialReport report = coverage_experiment(sub);

      RateMethodStat stat;
      stat.method = method;
      stat.mean_pe = report.mean_pe;
      stat.sd_pe = sample_sd(report.pe_values);
      std::vector<double> sorted = report.pe_values;
      std::sort(sorted.begin(), sorted.end());
      const long q_rank = quantile_rank_ceil(0.95, static_cast<long>(sorted.size()));
      stat.q95_pe = sorted[static_cast<std::size_t>(std::max(1L, q_rank)) - 1];

      switch (method) {
        case Method::JackknifePlus:
          stat.threshold = config.alpha + row.theory.ours_jplus;
          break;
        case Method::Full:
          stat.threshold = config.alpha + row.theory.ours_fc;
          break;
        case Method::CvPlus: {
          bounds::Inputs in;
          in.alpha = config.alpha;
          in.eps = config.eps;
          in.delta = config.delta;
          in.n = n;
          in.profile = profile;
          in.K = static_cast<long long>(config.folds);
          stat.threshold = bounds::cv_plus_bound(in).threshold;
          break;
        }
        default:
          stat.threshold = std::numeric_limits<double>::quiet_NaN();
          break;
      }
      stat.threshold_vacuous =
          std::isnan(stat.threshold) || !(stat.threshold < 1.0);
      row.stats.push_back(stat);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string RateExperimentTable::to_csv() const {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << " base_seed=" << base_seed << "\n";
  out << "n,ours_jplus,ours_fc,lb_slack,lb_q,method,mean_pe,sd_pe,q95_pe,"
         "threshold,threshold_vacuous\n";
  for (const auto& row : rows) {
    for (const auto& stat : row.stats) {
      out << row.theory.n << "," << fmt17(row.theory.ours_jplus) << ","
          << fmt17(row.theory.ours_fc) << "," << fmt17(row.theory.lb_slack)
          << "," << fmt17(row.theory.lb_q) << "," << to_string(stat.method)
          << "," << fmt17(stat.mean_pe) << "," << fmt17(stat.sd_pe) << ","
          << fmt17(stat.q95_pe) << "," << fmt17(stat.threshold) << ","
          << (stat.threshold_vacuous ? 1 : 0) << "\n";
    }
  }
  return out.str();
}

std::string config_hash_hex(const std::string& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace stabconf::simlab
