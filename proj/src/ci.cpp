#include "joinml/ci.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "joinml/rng.hpp"

namespace joinml {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kWoodruffZ = 1.959963984540054;

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

// Mean and sample variance of f(row) over stratum i of the view.
template <class F>
Moments stratum_moments(const SampleView& view, std::size_t i, F&& f) {
  const std::size_t n = view.count(i);
  if (n == 0) return {};
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += f(view.row(i, j));
  mean /= static_cast<double>(n);
  if (n < 2) return {mean, 0.0};
  double ss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = f(view.row(i, j)) - mean;
    ss += d * d;
  }
  return {mean, ss / static_cast<double>(n - 1)};
}

}  // namespace

void LinearStatistic::evaluate(const SampleView& view, std::span<double> estimate, std::span<double> se) const {
  for (std::size_t d = 0; d < constants_.size(); ++d) {
    double est = constants_[d];
    double var = 0.0;
    for (std::size_t i = 0; i < view.strata(); ++i) {
      const std::size_t n = view.count(i);
      if (n == 0) continue;
      const auto m = stratum_moments(view, i, [d](const double* r) { return r[d]; });
      est += m.mean;
      var += m.var / static_cast<double>(n);
    }
    estimate[d] = est;
    se[d] = std::sqrt(var);
  }
}

void RatioStatistic::evaluate(const SampleView& view, std::span<double> estimate, std::span<double> se) const {
  double c = count_b_;
  double s = sum_b_;
  double var_c = 0.0;
  for (std::size_t i = 0; i < view.strata(); ++i) {
    const std::size_t n = view.count(i);
    if (n == 0) continue;
    const auto mc = stratum_moments(view, i, [](const double* r) { return r[0]; });
    const auto ms = stratum_moments(view, i, [](const double* r) { return r[1]; });
    c += mc.mean;
    s += ms.mean;
    var_c += mc.var / static_cast<double>(n);
  }
  if (!(c > 0.0)) {
    estimate[0] = kNaN;
    se[0] = kNaN;
    return;
  }
  const double ratio = s / c;
  double var_r = 0.0;
  for (std::size_t i = 0; i < view.strata(); ++i) {
    const std::size_t n = view.count(i);
    if (n == 0) continue;
    const auto m = stratum_moments(view, i, [ratio](const double* r) { return r[1] - ratio * r[0]; });
    var_r += m.var / static_cast<double>(n);
  }
  const double correction = n_eff_ > 0.0 ? 1.0 - var_c / (n_eff_ * c * c) : 1.0;
  estimate[0] = ratio * correction;
  se[0] = std::sqrt(var_r) / c;
}

QuantileStatistic::QuantileStatistic(std::vector<double> blocked_values, double q)
    : blocked_(std::move(blocked_values)), q_(q) {
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorKind::InvalidArgument, "quantile level must lie in (0,1)");
  std::sort(blocked_.begin(), blocked_.end());
}

double weighted_lower_quantile(std::vector<std::pair<double, double>>& items, double q) {
  std::sort(items.begin(), items.end());
  double total = 0.0;
  for (const auto& [v, w] : items) total += w;
  if (!(total > 0.0)) return kNaN;
  const double target = q * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    acc += items[i].second;
    // Treat equal values as one atom.
    if (i + 1 < items.size() && items[i + 1].first == items[i].first) continue;
    if (acc >= target * (1.0 - 1e-12)) return items[i].first;
  }
  return items.back().first;
}

void QuantileStatistic::evaluate(const SampleView& view, std::span<double> estimate, std::span<double> se) const {
  std::vector<std::pair<double, double>> items;
  items.reserve(blocked_.size() + 64);
  for (double v : blocked_) items.emplace_back(v, 1.0);
  for (std::size_t i = 0; i < view.strata(); ++i) {
    const std::size_t n = view.count(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* r = view.row(i, j);
      if (r[0] > 0.0) items.emplace_back(r[1], r[0] / static_cast<double>(n));
    }
  }
  double total = 0.0;
  for (const auto& it : items) total += it.second;
  if (!(total > 0.0)) {
    estimate[0] = kNaN;
    se[0] = kNaN;
    return;
  }
  const double m = weighted_lower_quantile(items, q_);

  double below = 0.0;
  for (const auto& [v, w] : items) {
    if (v <= m) below += w;
  }
  const double f = below / total;
  double var_f = 0.0;
  for (std::size_t i = 0; i < view.strata(); ++i) {
    const std::size_t n = view.count(i);
    if (n == 0) continue;
    const auto mo = stratum_moments(view, i, [m, f](const double* r) { return r[0] * ((r[1] <= m ? 1.0 : 0.0) - f); });
    var_f += mo.var / static_cast<double>(n);
  }
  const double se_f = std::sqrt(var_f) / total;
  const double lo = weighted_lower_quantile(items, std::clamp(q_ - kWoodruffZ * se_f, 1e-12, 1.0));
  const double hi = weighted_lower_quantile(items, std::clamp(q_ + kWoodruffZ * se_f, 1e-12, 1.0));
  estimate[0] = m;
  se[0] = (hi - lo) / (2.0 * kWoodruffZ);
}

double percentile(std::vector<double>& values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  if (std::isinf(values[hi])) return values[hi];
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<BootstrapInterval> bootstrap_t_ci(const StratifiedSample& sample, const Statistic& statistic, double p,
                                              const ResamplePlan& plan) {
  if (plan.resamples < 100) throw Error(ErrorKind::InvalidArgument, "at least 100 resamples are required");
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::InvalidArgument, "confidence must lie in (0,1)");
  const std::size_t outputs = statistic.outputs();
  std::vector<double> est0(outputs), se0(outputs);
  statistic.evaluate(SampleView(sample), est0, se0);

  std::vector<std::vector<double>> t(outputs);
  std::vector<bool> active(outputs);
  std::size_t open = 0;
  for (std::size_t o = 0; o < outputs; ++o) {
    active[o] = std::isfinite(est0[o]) && std::isfinite(se0[o]) && se0[o] > 0.0;
    if (active[o]) {
      ++open;
      t[o].reserve(static_cast<std::size_t>(plan.resamples));
    }
  }

  const std::size_t strata = sample.strata.size();
  std::vector<std::vector<std::uint32_t>> index(strata);
  for (std::size_t i = 0; i < strata; ++i) index[i].resize(sample.count(i));
  std::vector<double> est(outputs), se(outputs);
  const Rng base(plan.seed);
  const auto target = static_cast<std::size_t>(plan.resamples);
  const std::uint64_t cap = 10ULL * static_cast<std::uint64_t>(plan.resamples);

  for (std::uint64_t attempt = 0; open > 0 && attempt < cap; ++attempt) {
    Rng rng = base.split(attempt);
    for (std::size_t i = 0; i < strata; ++i) {
      const std::uint64_t n = index[i].size();
      for (auto& x : index[i]) x = static_cast<std::uint32_t>(rng.below(n));
    }
    statistic.evaluate(SampleView(sample, index), est, se);
    for (std::size_t o = 0; o < outputs; ++o) {
      if (!active[o] || t[o].size() >= target) continue;
      if (!std::isfinite(est[o]) || !std::isfinite(se[o]) || se[o] <= 0.0) continue;
      t[o].push_back((est[o] - est0[o]) / se[o]);
      if (t[o].size() == target) --open;
    }
  }

  std::vector<BootstrapInterval> out(outputs);
  for (std::size_t o = 0; o < outputs; ++o) {
    auto& ci = out[o];
    ci.estimate = est0[o];
    ci.se = se0[o];
    ci.valid_resamples = static_cast<int>(t[o].size());
    if (!std::isfinite(est0[o])) {
      ci.low = ci.high = kNaN;
      ci.degenerate = true;
      continue;
    }
    if (!active[o] || t[o].empty()) {
      ci.low = ci.high = est0[o];
      ci.degenerate = true;
      continue;
    }
    const double t_lo = percentile(t[o], (1.0 - p) / 2.0);
    const double t_hi = percentile(t[o], (1.0 + p) / 2.0);
    ci.low = est0[o] - t_hi * se0[o];
    ci.high = est0[o] - t_lo * se0[o];
    if (ci.low > ci.high) std::swap(ci.low, ci.high);
    if (ci.estimate < ci.low) {
      ci.low = ci.estimate;
      ci.clamped = true;
    }
    if (ci.estimate > ci.high) {
      ci.high = ci.estimate;
      ci.clamped = true;
    }
  }
  return out;
}

double error_ratio(double truth, double estimate, double low, double high) {
  const double err = std::abs(estimate - truth);
  const double half = std::abs(high - low) / 2.0;
  if (half == 0.0) return err == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return err / half;
}

double error_ratio(double truth, const EstimateReport& report) {
  return error_ratio(truth, report.estimate, report.ci_low, report.ci_high);
}

}  // namespace joinml
