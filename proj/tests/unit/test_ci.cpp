#include <doctest.h>

#include <cmath>
#include <limits>

#include "joinml/ci.hpp"
#include "joinml/rng.hpp"

using namespace joinml;

namespace {

StratifiedSample one_stratum(const std::vector<double>& x) {
  StratifiedSample s;
  s.strata = {x};
  return s;
}

}  // namespace

TEST_CASE("constant sample gives a point interval") {
  const auto sample = one_stratum(std::vector<double>(20, 4.0));
  LinearStatistic stat({1.5});
  const auto ci = bootstrap_t_ci(sample, stat, 0.95, {200, 1});
  REQUIRE(ci.size() == 1);
  CHECK(ci[0].estimate == doctest::Approx(5.5));
  CHECK(ci[0].low == ci[0].estimate);
  CHECK(ci[0].high == ci[0].estimate);
  CHECK(ci[0].degenerate);
}

TEST_CASE("bootstrap-t is deterministic for a fixed seed") {
  Rng rng(3);
  std::vector<double> x(40);
  for (auto& v : x) v = rng.gamma(2.0);
  const auto sample = one_stratum(x);
  LinearStatistic stat({0.0});
  const auto a = bootstrap_t_ci(sample, stat, 0.9, {300, 11});
  const auto b = bootstrap_t_ci(sample, stat, 0.9, {300, 11});
  CHECK(a[0].low == b[0].low);
  CHECK(a[0].high == b[0].high);
  CHECK(a[0].valid_resamples == 300);
  CHECK(a[0].low <= a[0].estimate);
  CHECK(a[0].estimate <= a[0].high);
  CHECK_THROWS_AS(bootstrap_t_ci(sample, stat, 0.9, {50, 11}), Error);
}

TEST_CASE("bootstrap-t interval is near-symmetric on normal data") {
  Rng rng(21);
  std::vector<double> x(400);
  for (auto& v : x) v = rng.normal();
  const auto ci = bootstrap_t_ci(one_stratum(x), LinearStatistic({0.0}), 0.95, {1000, 5});
  const double left = ci[0].estimate - ci[0].low;
  const double right = ci[0].high - ci[0].estimate;
  CHECK(std::abs(left - right) <= 0.1 * (ci[0].high - ci[0].low));
}

TEST_CASE("bootstrap-t covers the stratified mean") {
  Rng rng(8);
  int covered = 0;
  const int trials = 300;
  for (int trial = 0; trial < trials; ++trial) {
    StratifiedSample s;
    s.strata.resize(2);
    for (int j = 0; j < 60; ++j) s.strata[0].push_back(rng.normal() + 1.0);
    for (int j = 0; j < 40; ++j) s.strata[1].push_back(2.0 * rng.normal() - 3.0);
    const auto ci = bootstrap_t_ci(s, LinearStatistic({10.0}), 0.95, {200, static_cast<std::uint64_t>(trial)});
    if (ci[0].low <= 8.0 && 8.0 <= ci[0].high) ++covered;
  }
  CHECK(covered >= static_cast<int>(0.9 * trials));
}

TEST_CASE("linear statistic sums constants and stratum means") {
  StratifiedSample s;
  s.dims = 2;
  s.strata = {{1.0, 10.0, 3.0, 30.0}, {}, {5.0, 50.0}};
  std::vector<double> est(2), se(2);
  LinearStatistic({100.0, 200.0}).evaluate(SampleView(s), est, se);
  CHECK(est[0] == doctest::Approx(100.0 + 2.0 + 5.0));
  CHECK(est[1] == doctest::Approx(200.0 + 20.0 + 50.0));
  // Stratum 0: variance 2 over 2 draws; stratum 2 has one draw and no spread.
  CHECK(se[0] == doctest::Approx(1.0));
  CHECK(se[1] == doctest::Approx(10.0));
}

TEST_CASE("ratio statistic") {
  StratifiedSample s;
  s.dims = 2;
  s.strata = {{1.0, 2.0, 1.0, 4.0}};
  std::vector<double> est(1), se(1);
  RatioStatistic(0.0, 0.0, 0.0).evaluate(SampleView(s), est, se);
  CHECK(est[0] == doctest::Approx(3.0));
  RatioStatistic(2.0, 2.0, 0.0).evaluate(SampleView(s), est, se);
  CHECK(est[0] == doctest::Approx(5.0 / 3.0));
  s.strata = {{0.0, 0.0, 0.0, 0.0}};
  RatioStatistic(0.0, 0.0, 4.0).evaluate(SampleView(s), est, se);
  CHECK(std::isnan(est[0]));
}

TEST_CASE("quantile statistic") {
  StratifiedSample s;
  s.dims = 2;
  s.strata = {{}};
  std::vector<double> est(1), se(1);
  QuantileStatistic({3.0, 1.0, 2.0}).evaluate(SampleView(s), est, se);
  CHECK(est[0] == doctest::Approx(2.0));
  // Sampled rows (weight, value): two draws of weight 2 at value 10 outweigh the blocked values.
  s.strata = {{2.0, 10.0, 2.0, 10.0}};
  QuantileStatistic({1.0}).evaluate(SampleView(s), est, se);
  CHECK(est[0] == doctest::Approx(10.0));
  CHECK_THROWS_AS(QuantileStatistic({}, 1.0), Error);
}

TEST_CASE("weighted lower quantile") {
  std::vector<std::pair<double, double>> items{{3.0, 2.0}, {1.0, 1.0}, {2.0, 1.0}};
  CHECK(weighted_lower_quantile(items, 0.5) == 2.0);
  CHECK(weighted_lower_quantile(items, 0.25) == 1.0);
  CHECK(weighted_lower_quantile(items, 0.51) == 3.0);
  CHECK(weighted_lower_quantile(items, 1.0) == 3.0);
}

TEST_CASE("percentile") {
  std::vector<double> v{4.0, 1.0, 3.0, 2.0};
  CHECK(percentile(v, 0.5) == doctest::Approx(2.5));
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 4.0);
  CHECK(percentile(v, 1.0 / 3.0) == doctest::Approx(2.0));
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> w{1.0, inf, inf};
  CHECK(percentile(w, 0.9) == inf);
  CHECK(percentile(w, 0.0) == 1.0);
  std::vector<double> empty;
  CHECK(std::isnan(percentile(empty, 0.5)));
}

TEST_CASE("error ratio") {
  CHECK(error_ratio(100.0, 110.0, 90.0, 130.0) == doctest::Approx(0.5));
  CHECK(error_ratio(10.0, 12.0, 8.0, 12.0) == doctest::Approx(1.0));
  CHECK(error_ratio(10.0, 10.0, 10.0, 10.0) == 0.0);
  CHECK(std::isinf(error_ratio(10.0, 11.0, 11.0, 11.0)));
  EstimateReport r;
  r.estimate = 7.0;
  r.ci_low = 5.0;
  r.ci_high = 9.0;
  CHECK(error_ratio(6.0, r) == doctest::Approx(0.5));
}
