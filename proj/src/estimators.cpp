#include "joinml/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

namespace joinml {

double normal_critical(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorKind::InvalidArgument, "confidence must lie in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), (1.0 + p) / 2.0);
}

ConfidenceInterval standard_ci(std::span<const double> x, double p, double scale) {
  if (x.size() < 2) throw Error(ErrorKind::TooFewSamples, "standard_ci needs at least two values");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double half = normal_critical(p) * sd / std::sqrt(n);
  return {scale * mean, scale * (mean - half), scale * (mean + half)};
}

double calibrate_threshold(std::span<const double> validation_scores) {
  if (validation_scores.empty()) throw Error(ErrorKind::EmptyValidation, "no validation positives");
  return *std::min_element(validation_scores.begin(), validation_scores.end());
}

namespace detail {

void fill_clt(EstimateReport& report, Aggregate aggregate, std::span<const double> c, std::span<const double> s,
              double p, double scale, double value_min, double value_max) {
  switch (aggregate) {
    case Aggregate::Count: {
      const auto ci = standard_ci(c, p, scale);
      report.estimate = ci.estimate;
      report.ci_low = ci.low;
      report.ci_high = ci.high;
      return;
    }
    case Aggregate::Sum: {
      const auto ci = standard_ci(s, p, scale);
      report.estimate = ci.estimate;
      report.ci_low = ci.low;
      report.ci_high = ci.high;
      return;
    }
    case Aggregate::Avg: {
      const double n = static_cast<double>(c.size());
      const double sc = std::accumulate(c.begin(), c.end(), 0.0);
      const double ss = std::accumulate(s.begin(), s.end(), 0.0);
      if (sc <= 0.0) {
        report.undefined = true;
        report.estimate = 0.5 * (value_min + value_max);
        report.ci_low = value_min;
        report.ci_high = value_max;
        return;
      }
      const double r = ss / sc;
      const double mc = sc / n;
      std::vector<double> z(c.size());
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = (s[i] - r * c[i]) / mc;
      const auto ci = standard_ci(z, p, 1.0);
      const double half = ci.high - ci.estimate;
      report.estimate = r;
      report.ci_low = r - half;
      report.ci_high = r + half;
      return;
    }
    default:
      throw Error(ErrorKind::InvalidArgument,
                  "aggregate " + std::string(to_string(aggregate)) + " is not supported by this estimator");
  }
}

}  // namespace detail

namespace {

EstimateReport base_report(const QuerySpec& spec, Method method) {
  EstimateReport r;
  r.confidence = spec.confidence;
  r.seed = spec.seed;
  r.method = std::string(to_string(method));
  r.aggregate = std::string(to_string(spec.aggregate));
  return r;
}

void require_linear_or_avg(const QuerySpec& spec) {
  if (!is_linear(spec.aggregate) && spec.aggregate != Aggregate::Avg) {
    throw Error(ErrorKind::InvalidArgument,
                "baseline estimators support COUNT, SUM and AVG, not " + std::string(to_string(spec.aggregate)));
  }
  if (spec.budget < 2) throw Error(ErrorKind::TooFewSamples, "budget below 2");
}

}  // namespace

EstimateReport uniform_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                                BudgetLedger& ledger) {
  require_linear_or_avg(spec);
  const std::int64_t before = ledger.used();
  Rng rng = Rng(spec.seed).split(1);
  const std::size_t n = static_cast<std::size_t>(spec.budget);
  std::vector<double> c(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TupleIndex t = rng.below(space.size());
    const double o = space.evaluate(oracle, t, ledger) ? 1.0 : 0.0;
    c[i] = o;
    s[i] = o * space.value(t);
  }
  EstimateReport r = base_report(spec, Method::Uniform);
  detail::fill_clt(r, spec.aggregate, c, s, spec.confidence, static_cast<double>(space.size()), space.min_value(),
                   space.max_value());
  r.budget_used = ledger.used() - before;
  return r;
}

EstimateReport uniform_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec) {
  BudgetLedger ledger(spec.budget);
  return uniform_estimate(space, oracle, spec, ledger);
}

EstimateReport wwj_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                            BudgetLedger& ledger) {
  require_linear_or_avg(spec);
  const std::int64_t before = ledger.used();
  Rng rng = Rng(spec.seed).split(2);
  const std::size_t n = static_cast<std::size_t>(spec.budget);
  std::vector<double> c(n), s(n);
  for (std::size_t i = 0; i < n; ++i) {
    const WalkSample w = weighted_walk(space, rng);
    const double o = space.evaluate(oracle, w.tuple, ledger) ? 1.0 : 0.0;
    c[i] = o / w.probability;
    s[i] = c[i] * space.value(w.tuple);
  }
  EstimateReport r = base_report(spec, Method::Wwj);
  detail::fill_clt(r, spec.aggregate, c, s, spec.confidence, 1.0, space.min_value(), space.max_value());
  r.budget_used = ledger.used() - before;
  return r;
}

EstimateReport wwj_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec) {
  BudgetLedger ledger(spec.budget);
  return wwj_estimate(space, oracle, spec, ledger);
}

EstimateReport blocking_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec, double tau,
                                 BudgetLedger& ledger) {
  require_linear_or_avg(spec);
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::InvalidArgument, "threshold must lie in (0,1]");
  if (space.size() > kDefaultMaterializationCap) {
    throw Error(ErrorKind::CapExceeded, "threshold blocking enumerates the cross product");
  }
  std::vector<TupleIndex> blocked;
  if (space.arity() == 2) {
    const auto& h = space.hop(0);
    for (std::size_t r = 0; r < h.rows(); ++r) {
      const auto row = h.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (row[c] >= tau) blocked.push_back(r * h.cols() + c);
      }
    }
  } else {
    for (TupleIndex t = 0; t < space.size(); ++t) {
      if (space.tuple_score(t) >= tau) blocked.push_back(t);
    }
  }

  const std::int64_t before = ledger.used();
  EstimateReport r = base_report(spec, Method::Blocking);
  const auto size = static_cast<std::int64_t>(blocked.size());
  if (size <= spec.budget) {
    double count = 0.0, sum = 0.0;
    for (TupleIndex t : blocked) {
      if (space.evaluate(oracle, t, ledger)) {
        count += 1.0;
        sum += space.value(t);
      }
    }
    if (spec.aggregate == Aggregate::Count) {
      r.estimate = count;
    } else if (spec.aggregate == Aggregate::Sum) {
      r.estimate = sum;
    } else if (count > 0.0) {
      r.estimate = sum / count;
    } else {
      r.undefined = true;
      r.estimate = 0.5 * (space.min_value() + space.max_value());
      r.ci_low = space.min_value();
      r.ci_high = space.max_value();
      r.budget_used = ledger.used() - before;
      return r;
    }
    r.ci_low = r.ci_high = r.estimate;
  } else {
    Rng rng = Rng(spec.seed).split(3);
    const std::size_t n = static_cast<std::size_t>(spec.budget);
    std::vector<double> c(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
      const TupleIndex t = blocked[rng.below(blocked.size())];
      const double o = space.evaluate(oracle, t, ledger) ? 1.0 : 0.0;
      c[i] = o;
      s[i] = o * space.value(t);
    }
    detail::fill_clt(r, spec.aggregate, c, s, spec.confidence, static_cast<double>(size), space.min_value(),
                     space.max_value());
  }
  r.budget_used = ledger.used() - before;
  return r;
}

EstimateReport blocking_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                                 double tau) {
  BudgetLedger ledger(spec.budget);
  return blocking_estimate(space, oracle, spec, tau, ledger);
}

}  // namespace joinml
