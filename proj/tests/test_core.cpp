#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <vector>

#include "stabconf/dataset.hpp"
#include "stabconf/scores.hpp"

using namespace stabconf;

namespace {

// Independent sort oracle with exact integer rank arithmetic for
// alpha = j/20: ceil((20-j)(m+1)/20) and floor(j(m+1)/20) never touch
// floating point.
struct ExactOracle {
  static long rank_upper(int j, long count) {  // ceil((20-j)*count/20)
    return (static_cast<long>(20 - j) * count + 19) / 20;
  }
  static long rank_lower(int j, long count) {  // floor(j*count/20)
    return static_cast<long>(j) * count / 20;
  }

  static double upper(const std::vector<double>& values, int j) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const long m = static_cast<long>(sorted.size());
    const long k = rank_upper(j, m + 1);
    if (k >= m + 1) return kInf;
    return sorted[static_cast<std::size_t>(k - 1)];
  }

  static double lower(const std::vector<double>& values, int j) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const long m = static_cast<long>(sorted.size());
    const long k = rank_lower(j, m + 1);
    if (k <= 0) return -kInf;
    return sorted[static_cast<std::size_t>(k - 1)];
  }

  static double threshold(const std::vector<double>& values, int j, bool augment) {
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    const long m = static_cast<long>(sorted.size());
    if (augment) {
      const long k = rank_upper(j, m + 1);
      if (k >= m + 1) return kInf;
      return sorted[static_cast<std::size_t>(k - 1)];
    }
    long k = rank_upper(j, m);
    if (k < 1) k = 1;
    return sorted[static_cast<std::size_t>(k - 1)];
  }
};

void enumerate_multisets(int max_size, const std::function<void(const std::vector<double>&)>& visit) {
  std::vector<double> current;
  const std::function<void(int, int)> recurse = [&](int remaining, int min_value) {
    if (!current.empty()) visit(current);
    if (remaining == 0) return;
    for (int v = min_value; v <= 3; ++v) {
      current.push_back(v);
      recurse(remaining - 1, v);
      current.pop_back();
    }
  };
  recurse(max_size, 0);
}

}  // namespace

TEST_CASE("abs_residual_score examples") {
  CHECK(abs_residual_score(0.5, 0.5) == 0.0);
  CHECK(abs_residual_score(0.0, -2.0) == 2.0);
  CHECK(abs_residual_score(1.25, -0.75) == 2.0);
  CHECK_THROWS_AS(abs_residual_score(kInf, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(abs_residual_score(0.0, std::nan("")), std::invalid_argument);
}

TEST_CASE("upper_quantile_plus spec examples") {
  CHECK(upper_quantile_plus(ScoreSet({1, 2, 3, 4}), 0.5) == 3.0);
  CHECK(upper_quantile_plus(ScoreSet({1, 2, 3, 4}), 0.1) == kInf);
  CHECK(upper_quantile_plus(ScoreSet({7}), 0.6) == 7.0);
  CHECK_THROWS_AS(upper_quantile_plus(ScoreSet({1.0}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(upper_quantile_plus(ScoreSet({1.0}), 1.0), std::invalid_argument);
}

TEST_CASE("lower_quantile_minus spec examples") {
  CHECK(lower_quantile_minus(ScoreSet({1, 2, 3, 4}), 0.5) == 2.0);
  CHECK(lower_quantile_minus(ScoreSet({1, 2, 3, 4}), 0.1) == -kInf);
  CHECK(lower_quantile_minus(ScoreSet({5, 9}), 0.4) == 5.0);
}

TEST_CASE("empirical_cdf spec examples") {
  CHECK(empirical_cdf(ScoreSet({1, 2, 3, 4}), 2.5) == 0.5);
  CHECK(empirical_cdf(ScoreSet({1, 2}), -10.0) == 0.0);
  CHECK(empirical_cdf(ScoreSet({1, 2}), 10.0) == 1.0);
  CHECK_THROWS_AS(empirical_cdf(ScoreSet({1, kInf}), 0.0), std::invalid_argument);
}

TEST_CASE("empirical_quantile_threshold spec examples") {
  CHECK(empirical_quantile_threshold(ScoreSet({1, 2, 3}), 0.25, true) == 3.0);
  CHECK(empirical_quantile_threshold(ScoreSet({1, 2, 3}), 0.2, true) == kInf);
  CHECK(empirical_quantile_threshold(ScoreSet({4}), 0.5, false) == 4.0);
}

TEST_CASE("grid-aligned alpha lands on the exact-arithmetic rank") {
  // (1-0.2)*(4+1) = 4 exactly; a naive float ceil would return +inf.
  CHECK(upper_quantile_plus(ScoreSet({1, 2, 3, 4}), 0.2) == 4.0);
  // 0.35*(19+1) = 7 exactly; a naive float floor would return rank 6.
  std::vector<double> v(19);
  for (int i = 0; i < 19; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  CHECK(lower_quantile_minus(ScoreSet(v), 0.35) == 7.0);
}

TEST_CASE("exhaustive sort-oracle agreement, all multisets <= 8 over {0,1,2,3}") {
  std::size_t checked = 0;
  enumerate_multisets(8, [&](const std::vector<double>& values) {
    const ScoreSet set{values};
    for (int j = 1; j <= 19; ++j) {
      const double alpha = j / 20.0;
      CHECK(upper_quantile_plus(set, alpha) == ExactOracle::upper(values, j));
      CHECK(lower_quantile_minus(set, alpha) == ExactOracle::lower(values, j));
      CHECK(empirical_quantile_threshold(set, alpha, true) ==
            ExactOracle::threshold(values, j, true));
      CHECK(empirical_quantile_threshold(set, alpha, false) ==
            ExactOracle::threshold(values, j, false));
    }
    ++checked;
  });
  CHECK(checked == 494);  // sum_{m=1}^{8} C(m+3, 3)
}

TEST_CASE("quantile properties on random score sets") {
  std::mt19937_64 eng(7);
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  std::uniform_int_distribution<int> size_dist(1, 40);

  for (int rep = 0; rep < 200; ++rep) {
    const int m = size_dist(eng);
    std::vector<double> values(static_cast<std::size_t>(m));
    for (auto& v : values) v = unif(eng);
    const ScoreSet set{values};

    // permutation invariance
    std::vector<double> shuffled = values;
    std::shuffle(shuffled.begin(), shuffled.end(), eng);
    const ScoreSet shuffled_set{shuffled};

    double previous_upper = kInf;
    double previous_lower = -kInf;
    for (int j = 1; j <= 19; ++j) {
      const double alpha = j / 20.0;
      const double up = upper_quantile_plus(set, alpha);
      const double lo = lower_quantile_minus(set, alpha);
      CHECK(up == upper_quantile_plus(shuffled_set, alpha));
      CHECK(lo == lower_quantile_minus(shuffled_set, alpha));

      // monotone in alpha; lower <= upper provably holds for alpha <= 1/2
      // (the ranks cross for large alpha: A={1,2}, alpha=0.95 gives 2 vs 1)
      CHECK(up <= previous_upper);
      CHECK(lo >= previous_lower);
      if (alpha <= 0.5) CHECK(lo <= up);
      previous_upper = up;
      previous_lower = lo;

      // exactness: members of A or the infinite sentinels
      if (std::isfinite(up))
        CHECK(std::count(values.begin(), values.end(), up) > 0);
      if (std::isfinite(lo))
        CHECK(std::count(values.begin(), values.end(), lo) > 0);

      // CDF of the finite upper quantile reaches its rank
      if (std::isfinite(up)) {
        const long k = quantile_rank_ceil(1.0 - alpha, m + 1);
        CHECK(empirical_cdf(set, up) >=
              static_cast<double>(k) / static_cast<double>(m) - 1e-15);
      }
    }
  }
}

TEST_CASE("ScoreSet invariants") {
  CHECK_THROWS_AS(ScoreSet(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(ScoreSet({std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(ScoreSet({-kInf}), std::invalid_argument);
  const ScoreSet with_inf({kInf, 1.0});
  CHECK(with_inf.has_infinite());
  CHECK(with_inf.kth_smallest(1) == 1.0);
  CHECK(with_inf.kth_smallest(2) == kInf);
}

TEST_CASE("DataPoint and Dataset invariants") {
  const DomainBounds dom{1.0, 2.0};
  CHECK_NOTHROW(DataPoint({0.6, 0.8}, 2.0, dom));
  CHECK_THROWS_AS(DataPoint({1.0, 1.0}, 0.0, dom), DataError);
  CHECK_THROWS_AS(DataPoint({0.0, 0.0}, 2.5, dom), DataError);
  CHECK_THROWS_AS(DataPoint({kInf}, 0.0), std::invalid_argument);

  const Dataset data({DataPoint({1.0}, 1.0), DataPoint({-1.0}, -1.0)});
  CHECK(data.size() == 2);
  CHECK(data.dim() == 1);
  CHECK(data.without(0).size() == 1);
  CHECK(data.without(0)[0].y() == -1.0);
  CHECK(data.with_point(DataPoint({0.0}, 0.5)).size() == 3);
  CHECK_THROWS_AS(Dataset({DataPoint({1.0}, 0.0), DataPoint({1.0, 2.0}, 0.0)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Dataset(std::vector<DataPoint>{}), std::invalid_argument);
}

TEST_CASE("CSV round trip and loader validation") {
  const std::string path = "test_core_roundtrip.csv";
  const Dataset data({DataPoint({0.25, -0.5}, 1.75), DataPoint({0.1, 0.2}, -0.3),
                      DataPoint({1.0 / 3.0, -2.0 / 7.0}, 0.123456789012345)});
  save_csv(path, data);
  const Dataset loaded = load_csv(path, DomainBounds{1.0, 2.0});
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded[i].y() == data[i].y());
    for (std::size_t j = 0; j < data.dim(); ++j)
      CHECK(loaded[i].x()[j] == data[i].x()[j]);
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_csv("does_not_exist.csv", DomainBounds{1, 1}), DataError);

  const std::string bad = "test_core_bad.csv";
  {
    std::ofstream out(bad);
    out << "x1,y\n0.5,99\n";  // y out of the box
  }
  CHECK_THROWS_AS(load_csv(bad, DomainBounds{1.0, 1.0}), DataError);
  {
    std::ofstream out(bad);
    out << "x1,x2\n0.5,0.5\n";  // header missing y
  }
  CHECK_THROWS_AS(load_csv(bad, DomainBounds{1.0, 1.0}), DataError);
  {
    std::ofstream out(bad);
    out << "x1,y\n0.5,oops\n";
  }
  CHECK_THROWS_AS(load_csv(bad, DomainBounds{1.0, 1.0}), DataError);
  std::remove(bad.c_str());
}
