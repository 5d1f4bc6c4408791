#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stabconf/bounds.hpp"
#include "stabconf/dataset.hpp"
#include "stabconf/simlab.hpp"

using namespace stabconf;
using simlab::CoverageConfig;
using simlab::GeneratorSpec;
using simlab::Method;
using simlab::NoiseSpec;

namespace {

GeneratorSpec uniform_spec(int p, double b, double B, double theta, double a) {
  GeneratorSpec spec;
  spec.p = p;
  spec.b = b;
  spec.B = B;
  spec.theta_star.assign(static_cast<std::size_t>(p),
                         theta / std::sqrt(static_cast<double>(p)));
  spec.noise.family = NoiseSpec::Family::Uniform;
  spec.noise.a = a;
  return spec;
}

}  // namespace

TEST_CASE("noise density bounds") {
  NoiseSpec uniform;
  uniform.family = NoiseSpec::Family::Uniform;
  uniform.a = 0.5;
  CHECK(uniform.density_bound() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(uniform.support_halfwidth() == 0.5);
  CHECK(uniform.nominal_sigma() ==
        doctest::Approx(0.5 / std::sqrt(3.0)).epsilon(1e-15));

  NoiseSpec trunc;
  trunc.family = NoiseSpec::Family::TruncatedGaussian;
  trunc.sigma = 0.5;
  trunc.cut = 2.0;
  CHECK(trunc.density_bound() ==
        doctest::Approx(1.6718382009405384).epsilon(1e-14));
  CHECK(trunc.support_halfwidth() == 1.0);
  CHECK(trunc.nominal_sigma() == 0.5);

  NoiseSpec bad;
  bad.a = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("generator spec validation") {
  auto spec = uniform_spec(2, 1.0, 1.0, 0.3, 0.5);
  CHECK_NOTHROW(spec.validate());

  auto tight = uniform_spec(2, 1.0, 1.0, 0.8, 0.5);  // 0.8 + 0.5 > 1
  CHECK_THROWS_AS(tight.validate(), std::invalid_argument);

  auto mismatched = spec;
  mismatched.theta_star.push_back(0.0);
  CHECK_THROWS_AS(mismatched.validate(), std::invalid_argument);
}

TEST_CASE("generate: determinism and exact constraint satisfaction") {
  const auto spec = uniform_spec(3, 1.0, 1.5, 0.4, 0.8);
  CHECK_THROWS_AS(simlab::generate(spec, 0, 1), std::invalid_argument);

  const auto d1 = simlab::generate(spec, 50, 42);
  const auto d2 = simlab::generate(spec, 50, 42);
  REQUIRE(d1.size() == d2.size());
  for (std::size_t i = 0; i < d1.size(); ++i) {
    CHECK(d1[i].y() == d2[i].y());
    for (std::size_t j = 0; j < d1.dim(); ++j)
      CHECK(d1[i].x()[j] == d2[i].x()[j]);
  }
  const auto d3 = simlab::generate(spec, 50, 43);
  CHECK(d3[0].y() != d1[0].y());

  // exhaustive scan: 1e5 draws all satisfy the ball and box constraints
  const auto big = simlab::generate(spec, 100000, 7);
  double max_norm = 0.0, max_y = 0.0;
  for (const auto& pt : big) {
    max_norm = std::max(max_norm, euclidean_norm(pt.x()));
    max_y = std::max(max_y, std::abs(pt.y()));
  }
  CHECK(max_norm <= spec.b);
  CHECK(max_y <= spec.B);
}

TEST_CASE("L_bound dominates a kernel-free histogram of |Y - mu(X)|") {
  // mu fixed at theta*: the score is |noise|; 1e6 samples, bins of 1e-2.
  for (int family = 0; family < 2; ++family) {
    GeneratorSpec spec = uniform_spec(1, 1.0, 2.0, 0.4, 1.0);
    if (family == 1) {
      spec.noise.family = NoiseSpec::Family::TruncatedGaussian;
      spec.noise.sigma = 0.5;
      spec.noise.cut = 2.0;
    }
    const double L = spec.l_bound();
    const double width = 1e-2;
    const double support = spec.noise.support_halfwidth();
    const std::size_t bins = static_cast<std::size_t>(std::ceil(support / width));
    std::vector<std::size_t> counts(bins, 0);

    const std::size_t N = 1000000;
    const auto data = simlab::generate(spec, N, 1234);
    for (const auto& pt : data) {
      const double score = std::abs(pt.y() - spec.signal(pt.x()));
      const auto bin = static_cast<std::size_t>(score / width);
      if (bin < bins) ++counts[bin];
    }
    for (std::size_t bin = 0; bin < bins; ++bin) {
      const double expected_cap = static_cast<double>(N) * width * L;
      const double se = std::sqrt(expected_cap);
      CHECK(static_cast<double>(counts[bin]) <= expected_cap + 3.0 * se);
    }
  }
}

TEST_CASE("stability_profile carries the analytic L and certified constants") {
  const auto spec = uniform_spec(2, 1.0, 2.0, 0.4, 0.5);
  const auto profile = simlab::stability_profile(spec, 1.0, ridge::Penalty::PerSample);
  CHECK(profile.certified);
  REQUIRE(profile.L);
  CHECK(profile.L(10) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(profile.c(16) == doctest::Approx(16.0 * 4.0 / 16.0).epsilon(1e-15));
  CHECK(profile.kappa2 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("default_grid spans [-B - 4 sigma, B + 4 sigma]") {
  const auto spec = uniform_spec(1, 1.0, 2.0, 0.4, 0.9);  // sigma = 0.9/sqrt(3)
  const auto grid = simlab::default_grid(spec);
  CHECK(grid.count == 2001);
  CHECK(grid.lo ==
        doctest::Approx(-2.0 - 4.0 * 0.9 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK(grid.hi == -grid.lo);
}

TEST_CASE("uncertified profiles flag their bound reports") {
  ridge::StabilityProfile handmade;
  handmade.p = 1;
  handmade.kappa1 = 1.0;
  handmade.kappa2 = 1.0;
  handmade.c = [](long long n) { return 1.0 / static_cast<double>(n); };
  handmade.L = [](long long) { return 1.0; };
  bounds::Inputs in;
  in.alpha = 0.1;
  in.eps = 0.05;
  in.delta = 0.05;
  in.n = 100;
  in.profile = handmade;
  CHECK(!bounds::jackknife_plus_bound(in).certified);
  CHECK(bounds::jackknife_plus_bound(in).to_json().find(
            "\"certified\":false") != std::string::npos);
}

TEST_CASE("estimate_pe: trivial regions") {
  const auto spec = uniform_spec(1, 1.0, 1.0, 0.3, 0.5);
  const auto entire = simlab::estimate_pe(
      [](const std::vector<double>&, double) { return true; }, spec, 500, 3);
  CHECK(entire.pe == 0.0);
  CHECK(entire.se == 0.0);
  const auto empty = simlab::estimate_pe(
      [](const std::vector<double>&, double) { return false; }, spec, 500, 3);
  CHECK(empty.pe == 1.0);
}

TEST_CASE("estimate_pe: quadrature oracle for a fixed interval region") {
  // p=1, x ~ U(-1,1), noise ~ U(-1.2, 1.2), theta* = 0.4, region [-1, 1]:
  // P_e = E_x[ P(|0.4 x + eps| > 1) ] = 0.1875 exactly (piecewise-linear
  // integrand; Simpson quadrature reproduces it below).
  const auto spec = uniform_spec(1, 1.0, 1.6, 0.4, 1.2);

  const auto pe_given_x = [&](double x) {
    const double t = 0.4 * x;
    const double a = 1.2;
    const double up = std::max(0.0, a - (1.0 - t)) / (2.0 * a);
    const double down = std::max(0.0, a - (1.0 + t)) / (2.0 * a);
    return up + down;
  };
  // composite Simpson over x in [-1, 1] with density 1/2
  const int segments = 4000;
  double integral = 0.0;
  const double h = 2.0 / segments;
  for (int s = 0; s < segments; ++s) {
    const double x0 = -1.0 + s * h;
    integral += (h / 6.0) *
                (pe_given_x(x0) + 4.0 * pe_given_x(x0 + h / 2.0) + pe_given_x(x0 + h));
  }
  const double oracle = integral / 2.0;
  CHECK(oracle == doctest::Approx(0.1875).epsilon(1e-6));

  const auto est = simlab::estimate_pe(
      [](const std::vector<double>&, double y) { return -1.0 <= y && y <= 1.0; },
      spec, 200000, 11);
  CHECK(std::abs(est.pe - oracle) <= 4.0 * est.se + 1e-6);
}

TEST_CASE("coverage_experiment: determinism and worker independence") {
  CoverageConfig config;
  config.method = Method::JackknifePlus;
  config.spec = uniform_spec(1, 1.0, 1.0, 0.3, 0.5);
  config.n = 12;
  config.alpha = 0.2;
  config.trials = 30;
  config.n_test = 100;
  config.thresholds = {0.0, 0.5, 1.0};
  config.trainer = {1.0, ridge::Penalty::PerSample};
  config.base_seed = 5;

  config.workers = 1;
  const auto serial = simlab::coverage_experiment(config);
  config.workers = 4;
  const auto parallel = simlab::coverage_experiment(config);

  CHECK(serial.to_json() == parallel.to_json());
  CHECK(serial.to_csv() == parallel.to_csv());
  REQUIRE(serial.pe_values.size() == 30);

  // exceedance is the trial fraction above each threshold
  for (std::size_t t = 0; t < serial.exceedance.size(); ++t) {
    std::size_t count = 0;
    for (double pe : serial.pe_values)
      if (pe > serial.exceedance[t].threshold) ++count;
    CHECK(serial.exceedance[t].exceedance ==
          doctest::Approx(static_cast<double>(count) / 30.0).epsilon(1e-15));
  }
  CHECK(serial.exceedance.back().exceedance == 0.0);  // nothing exceeds 1.0
  CHECK(serial.config_hash.size() == 16);

  // means are plausible: jackknife+ miscoverage lives well below 2 alpha
  CHECK(serial.mean_pe >= 0.0);
  CHECK(serial.mean_pe <= 0.4);
}

TEST_CASE("coverage_experiment: every method runs end to end") {
  for (Method method : {Method::Split, Method::Full, Method::Jackknife,
                        Method::JackknifePlus, Method::JackknifePlusInflated,
                        Method::CvPlus}) {
    CoverageConfig config;
    config.method = method;
    config.spec = uniform_spec(2, 1.0, 1.0, 0.3, 0.5);
    config.n = 12;
    config.alpha = 0.2;
    config.trials = 8;
    config.n_test = 50;
    config.trainer = {1.0, ridge::Penalty::PerSample};
    config.folds = 3;
    config.epsilon = 0.1;
    config.base_seed = 9;
    const auto report = simlab::coverage_experiment(config);
    CHECK(report.pe_values.size() == 8);
    CHECK(report.method == simlab::to_string(method));
    for (double pe : report.pe_values) {
      CHECK(pe >= 0.0);
      CHECK(pe <= 1.0);
    }
  }
}

TEST_CASE("concentration_experiment: lemma1 structure and a-priori ceiling") {
  simlab::ConcentrationConfig config;
  config.spec = uniform_spec(1, 1.0, 1.0, 0.3, 0.5);
  config.target = simlab::Lemma::McDiarmidBeta;
  config.n = 16;
  config.trials = 100;
  // ||beta|| <= bB/lambda = 1, so deviations can never reach 2.5
  config.eps_list = {0.05, 0.5, 2.5};
  config.trainer = {1.0, ridge::Penalty::PerSample};
  config.aux_factor = 5;
  config.base_seed = 17;

  const auto table = simlab::concentration_experiment(config);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[2].empirical == 0.0);
  for (const auto& row : table.rows) {
    CHECK(row.empirical >= 0.0);
    CHECK(row.empirical <= 1.0);
    CHECK(row.theoretical >= 0.0);
    CHECK(row.empirical <= row.theoretical + 3.0 * row.se + 1e-12);
  }
  CHECK(table.mean_estimate_se > 0.0);
  CHECK(table.mean_estimate_se < 0.1);
  const std::string csv = table.to_csv();
  CHECK(csv.rfind("# config_hash=", 0) == 0);  // provenance line first
  CHECK(csv.find("\neps,empirical,se,theoretical,vacuous\n") != std::string::npos);
}

TEST_CASE("concentration_experiment: lemma2 exceedance decreases with n") {
  simlab::ConcentrationConfig config;
  config.spec = uniform_spec(1, 1.0, 1.0, 0.3, 0.5);
  config.target = simlab::Lemma::LooModels;
  config.trials = 150;
  config.eps_list = {0.08};
  config.trainer = {1.0, ridge::Penalty::PerSample};
  config.aux_factor = 5;
  config.grid_points = 64;
  config.base_seed = 23;

  config.n = 16;
  const auto small = simlab::concentration_experiment(config);
  config.n = 64;
  const auto large = simlab::concentration_experiment(config);
  CHECK(large.rows[0].empirical <= small.rows[0].empirical);
}

TEST_CASE("concentration_experiment: dkw smoke") {
  simlab::ConcentrationConfig config;
  config.spec = uniform_spec(1, 1.0, 1.0, 0.3, 0.5);
  config.target = simlab::Lemma::Dkw;
  config.n = 50;
  config.trials = 200;
  config.eps_list = {0.1, 0.3};
  config.trainer = {1.0, ridge::Penalty::PerSample};
  config.aux_factor = 2;
  config.reference_samples = 100000;
  config.base_seed = 31;

  const auto table = simlab::concentration_experiment(config);
  for (const auto& row : table.rows)
    CHECK(row.empirical <= row.theoretical + 3.0 * row.se + 1e-12);
  // D_50 >= 0.3 is already a <= 2e-9 event; the bound at 0.1 is ~0.74
  CHECK(table.rows[1].empirical == 0.0);
}

TEST_CASE("rate_experiment: theory columns match the pure table bit for bit") {
  simlab::RateConfig config;
  config.spec = uniform_spec(1, 1.0, 1.0, 0.3, 0.5);
  config.n_list = {16, 32};
  config.methods = {Method::Split, Method::JackknifePlus};
  config.alpha = 0.1;
  config.trials = 25;
  config.n_test = 100;
  config.trainer = {1.0, ridge::Penalty::PerSample};
  config.base_seed = 3;

  const auto joined = simlab::rate_experiment(config);
  const auto profile =
      simlab::stability_profile(config.spec, 1.0, ridge::Penalty::PerSample);
  const auto pure = bounds::rate_comparison_table(config.n_list, profile, 0.1,
                                                  config.eps, config.delta,
                                                  config.gamma);
  REQUIRE(joined.rows.size() == pure.rows.size());
  for (std::size_t i = 0; i < pure.rows.size(); ++i) {
    CHECK(joined.rows[i].theory.ours_jplus == pure.rows[i].ours_jplus);
    CHECK(joined.rows[i].theory.ours_fc == pure.rows[i].ours_fc);
    CHECK(joined.rows[i].theory.lb_slack == pure.rows[i].lb_slack);
    CHECK(joined.rows[i].theory.lb_q == pure.rows[i].lb_q);
  }
  CHECK(joined.crossover_n == pure.crossover_n);

  // jackknife+ rows carry the Theorem-1 threshold; split rows carry none
  for (const auto& row : joined.rows) {
    REQUIRE(row.stats.size() == 2);
    CHECK(std::isnan(row.stats[0].threshold));  // split
    CHECK(row.stats[1].threshold ==
          doctest::Approx(0.1 + row.theory.ours_jplus).epsilon(1e-15));
  }
  const std::string csv = joined.to_csv();
  CHECK(csv.rfind("# config_hash=", 0) == 0);
  CHECK(csv.find("\nn,ours_jplus,ours_fc,lb_slack,lb_q,method,") !=
        std::string::npos);
}

TEST_CASE("rate_experiment: split P_e spread shrinks like n^(-1/2), and q95 "
          "sits below nonvacuous thresholds") {
  simlab::RateConfig config;
  config.spec = uniform_spec(2, 1.0, 2.0, 0.42, 1.0);
  config.n_list = {25, 50, 100, 200};
  config.methods = {Method::Split, Method::JackknifePlus};
  config.alpha = 0.1;
  config.trials = 300;
  config.n_test = 1000;
  config.trainer = {1000.0, ridge::Penalty::PerSample};  // nonvacuous bounds
  config.train_fraction = 0.5;
  config.base_seed = 1200;

  const auto table = simlab::rate_experiment(config);
  std::vector<double> log_n, log_sd;
  for (const auto& row : table.rows) {
    log_n.push_back(std::log(static_cast<double>(row.theory.n)));
    log_sd.push_back(std::log(row.stats[0].sd_pe));  // split
    // jackknife+ threshold is nonvacuous under heavy regularization and
    // dominates the empirical 0.95-quantile
    CHECK(!row.stats[1].threshold_vacuous);
    CHECK(row.stats[1].q95_pe < row.stats[1].threshold);
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    sx += log_n[i];
    sy += log_sd[i];
    sxx += log_n[i] * log_n[i];
    sxy += log_n[i] * log_sd[i];
  }
  const double k = static_cast<double>(log_n.size());
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  CHECK(std::abs(slope + 0.5) <= 0.1);
}

TEST_CASE("config JSON round trips, unknown keys rejected") {
  const std::string text = R"({
    "type": "coverage",
    "method": "cv+",
    "spec": {"p": 2, "b": 1.0, "B": 2.0, "theta_star": [0.3, 0.3],
             "noise": {"family": "uniform", "a": 0.5}},
    "n": 20, "alpha": 0.1, "trials": 10, "n_test": 50,
    "trainer": {"lambda": 2.0, "penalty": "per_sample"},
    "folds": 5, "seed": 77
  })";
  const auto config = simlab::coverage_config_from_json(text);
  CHECK(config.method == Method::CvPlus);
  CHECK(config.folds == 5);
  CHECK(config.base_seed == 77);
  CHECK(config.trainer.lambda == 2.0);
  CHECK(config.spec.noise.a == 0.5);

  // canonical form re-parses to the same canonical form
  const auto again = simlab::coverage_config_from_json(config.to_canonical_json());
  CHECK(again.to_canonical_json() == config.to_canonical_json());

  const std::string unknown = R"({
    "type": "coverage", "method": "split",
    "spec": {"p": 1, "b": 1.0, "B": 1.0, "theta_star": [0.3],
             "noise": {"family": "uniform", "a": 0.5}},
    "n": 20, "alpha": 0.1, "trials": 10, "n_test": 50,
    "surprise": true
  })";
  CHECK_THROWS_AS(simlab::coverage_config_from_json(unknown),
                  std::invalid_argument);

  CHECK(simlab::config_hash_hex("") == "cbf29ce484222325");
  CHECK(simlab::config_hash_hex("a") != simlab::config_hash_hex("b"));
}

TEST_CASE("method and lemma names") {
  for (const char* name :
       {"split", "full", "jackknife", "jackknife+", "jackknife+eps", "cv+"})
    CHECK(simlab::to_string(simlab::method_from_string(name)) == name);
  CHECK_THROWS_AS(simlab::method_from_string("bogus"), std::invalid_argument);
  for (const char* name : {"lemma1", "lemma2", "lemma3", "dkw"})
    CHECK(simlab::to_string(simlab::lemma_from_string(name)) == name);
}
