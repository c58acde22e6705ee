#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "joinml/core.hpp"

namespace joinml {

struct ResamplePlan {
  int resamples = 1000;
  std::uint64_t seed = 0;
};

/// Draws of the sampled strata. Each observation is a row of `dims` reals.
/// Blocked strata are not stored here; statistics hold them as constants.
struct StratifiedSample {
  std::size_t dims = 1;
  std::vector<std::vector<double>> strata;  // row-major, size n_i * dims

  std::size_t count(std::size_t i) const { return strata[i].size() / dims; }
};

/// A bootstrap view: per stratum, the observation rows that make up the resample.
class SampleView {
 public:
  explicit SampleView(const StratifiedSample& sample) : sample_(&sample) {}
  SampleView(const StratifiedSample& sample, const std::vector<std::vector<std::uint32_t>>& index)
      : sample_(&sample), index_(&index) {}

  std::size_t strata() const { return sample_->strata.size(); }
  std::size_t dims() const { return sample_->dims; }
  std::size_t count(std::size_t i) const { return index_ ? (*index_)[i].size() : sample_->count(i); }
  const double* row(std::size_t i, std::size_t j) const {
    const std::size_t r = index_ ? (*index_)[i][j] : j;
    return sample_->strata[i].data() + r * sample_->dims;
  }

 private:
  const StratifiedSample* sample_;
  const std::vector<std::vector<std::uint32_t>>* index_ = nullptr;
};

/// Estimator functional with a plug-in standard error, possibly multi-output.
class Statistic {
 public:
  virtual ~Statistic() = default;
  virtual std::size_t outputs() const { return 1; }
  /// Writes estimate and standard error per output; non-finite values mark a degenerate output.
  virtual void evaluate(const SampleView& view, std::span<double> estimate, std::span<double> se) const = 0;
};

/// Constant (blocked) part plus the sum of per-stratum means; column `d` of each row is output d.
class LinearStatistic final : public Statistic {
 public:
  explicit LinearStatistic(std::vector<double> constants) : constants_(std::move(constants)) {}
  std::size_t outputs() const override { return constants_.size(); }
  void evaluate(const SampleView& view, std::span<double> estimate, std::span<double> se) const override;

 private:
  std::vector<double> constants_;
};

/// AVG: rows are (O/pi, O*g/pi). Applies the second-order bias correction with
/// the given effective sample size; delta-method standard error.
class RatioStatistic final : public Statistic {
 public:
  RatioStatistic(double count_blocked, double sum_blocked, double effective_n)
      : count_b_(count_blocked), sum_b_(sum_blocked), n_eff_(effective_n) {}
  void evaluate(const SampleView& view, std::span<double> estimate, std::span<double> se) const override;

  double count_blocked() const { return count_b_; }
  double sum_blocked() const { return sum_b_; }

 private:
  double count_b_;
  double sum_b_;
  double n_eff_;
};

/// MEDIAN: rows are (O/pi, g). Blocked matched values enter with unit weight.
/// Lower inverse of the combined CDF; Woodruff standard error.
class QuantileStatistic final : public Statistic {
 public:
  explicit QuantileStatistic(std::vector<double> blocked_values, double q = 0.5);
  void evaluate(const SampleView& view, std::span<double> estimate, std::span<double> se) const override;

 private:
  std::vector<double> blocked_;  // sorted
  double q_;
};

/// Weighted lower quantile of (value, weight) pairs: the smallest value whose
/// cumulative weight share reaches q. Pairs are sorted in place.
double weighted_lower_quantile(std::vector<std::pair<double, double>>& items, double q);

struct BootstrapInterval {
  double estimate = 0.0;
  double se = 0.0;
  double low = 0.0;
  double high = 0.0;
  bool clamped = false;     // widened to contain the estimate
  bool degenerate = false;  // no resample had positive spread; point interval
  int valid_resamples = 0;
};

/// Stratified bootstrap-t. Every output gets its own interval.
std::vector<BootstrapInterval> bootstrap_t_ci(const StratifiedSample& sample, const Statistic& statistic, double p,
                                              const ResamplePlan& plan);

/// Percentile with linear interpolation between order statistics; `values` is sorted in place.
double percentile(std::vector<double>& values, double q);

/// |estimate - truth| / (|u - l| / 2).
double error_ratio(double truth, const EstimateReport& report);
double error_ratio(double truth, double estimate, double low, double high);

}  // namespace joinml
