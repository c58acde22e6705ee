#include "joinml/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "joinml/estimators.hpp"

namespace joinml {

namespace {

// Views a sub-chain starting at hop `offset` of the parent Oracle.
class ShiftedOracle final : public OracleSource {
 public:
  ShiftedOracle(const OracleSource& base, std::size_t offset) : base_(base), offset_(offset) {}
  bool pair_matches(std::size_t hop, std::size_t left_row, std::size_t right_row) const override {
    return base_.pair_matches(hop + offset_, left_row, right_row);
  }

 private:
  const OracleSource& base_;
  std::size_t offset_;
};

std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const TrialLog& log) {
  auto trials = nlohmann::json::array();
  for (const auto& t : log.trials) {
    nlohmann::json row = {{"seed", t.seed}};
    if (t.report) {
      row["report"] = *t.report;
    } else {
      row["error"] = t.error;
    }
    trials.push_back(std::move(row));
  }
  j = nlohmann::json{{"spec", log.spec}, {"trials", std::move(trials)}};
}

TrialLog run_trials(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec, int repetitions,
                    const ThresholdFn& threshold) {
  if (repetitions < 1) throw Error(ErrorKind::InvalidArgument, "at least one repetition is required");
  TrialLog log;
  log.spec = spec;
  for (int r = 0; r < repetitions; ++r) {
    QuerySpec s = spec;
    s.seed = spec.seed + static_cast<std::uint64_t>(r);
    Trial trial;
    trial.seed = s.seed;
    const auto start = std::chrono::steady_clock::now();
    try {
      if (s.method == Method::Blocking && threshold) s.threshold = threshold(s.seed);
      BudgetLedger ledger(s.budget);
      trial.report = estimate(space, oracle, s, ledger);
    } catch (const Error& e) {
      trial.error = e.what();
    }
    log.wall_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    log.trials.push_back(std::move(trial));
  }
  return log;
}

RmseResult rmse(const std::vector<double>& estimates, double truth, std::size_t undefined_count) {
  if (estimates.empty()) throw Error(ErrorKind::TooFewSamples, "RMSE needs at least one defined estimate");
  double ss = 0.0;
  for (double e : estimates) ss += (e - truth) * (e - truth);
  RmseResult out;
  out.value = std::sqrt(ss / static_cast<double>(estimates.size()));
  out.relative = truth != 0.0;
  if (out.relative) out.value /= std::abs(truth);
  out.defined = estimates.size();
  out.undefined_count = undefined_count;
  return out;
}

RmseResult rmse(const TrialLog& log, double truth) {
  std::vector<double> est;
  std::size_t undefined = 0;
  for (const auto& t : log.trials) {
    if (!t.report) continue;
    if (t.report->undefined) {
      ++undefined;
    } else {
      est.push_back(t.report->estimate);
    }
  }
  return rmse(est, truth, undefined);
}

CoverageResult coverage_report(const TrialLog& log, double truth, double p) {
  CoverageResult out;
  std::vector<double> ratios;
  std::size_t covered = 0;
  for (const auto& t : log.trials) {
    if (!t.report) continue;
    const auto& r = *t.report;
    if (r.ci_low <= truth && truth <= r.ci_high) ++covered;
    ratios.push_back(error_ratio(truth, r));
  }
  out.trials = ratios.size();
  if (ratios.empty()) return out;
  out.coverage = static_cast<double>(covered) / static_cast<double>(ratios.size());
  out.p95_error_ratio = percentile(ratios, p);
  for (int q = 0; q <= 100; q += 5) out.curve.emplace_back(q / 100.0, percentile(ratios, q / 100.0));
  return out;
}

double validation_threshold(const CrossSpace& space, const std::vector<TupleIndex>& positives, std::uint64_t seed,
                            double fraction) {
  if (positives.empty()) throw Error(ErrorKind::EmptyValidation, "no positives to calibrate on");
  const auto want = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(positives.size()))));
  Rng rng = Rng(seed).split(7);
  std::vector<double> scores;
  std::size_t needed = want;
  for (std::size_t i = 0; i < positives.size() && needed > 0; ++i) {
    const std::size_t left = positives.size() - i;
    if (static_cast<double>(left) * rng.uniform() < static_cast<double>(needed)) {
      scores.push_back(space.tuple_score(positives[i]));
      --needed;
    }
  }
  return calibrate_threshold(scores);
}

std::vector<int> prefix_for_ratio(const Stratification& strat, std::int64_t budget, double ratio) {
  std::vector<int> out;
  if (ratio <= 0.0) return out;
  const double target = ratio * static_cast<double>(budget);
  double acc = 0.0;
  for (int i = 1; i <= strat.K(); ++i) {
    out.push_back(i);
    acc += static_cast<double>(strat.strata[static_cast<std::size_t>(i)].size);
    if (acc >= target) break;
  }
  return out;
}

std::vector<SweepRow> ablation_sweep(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                                     const std::vector<double>& ratios, int repetitions, double truth) {
  if (ratios.empty()) throw Error(ErrorKind::InvalidArgument, "ratio list is empty");
  QuerySpec base = spec;
  base.method = Method::Bas;
  base.alpha = std::max(spec.alpha, *std::max_element(ratios.begin(), ratios.end()));
  const Stratification strat = stratify(space, base.alpha, base.budget, base.strata_hint);

  std::vector<SweepRow> rows;
  for (double ratio : ratios) {
    SweepRow row;
    row.label = format_ratio(ratio);
    row.ratio = ratio;
    row.allocation = prefix_for_ratio(strat, base.budget, ratio);
    QuerySpec s = base;
    s.forced_allocation = row.allocation;
    row.error = rmse(run_trials(space, oracle, s, repetitions), truth);
    rows.push_back(std::move(row));
  }
  SweepRow adaptive;
  adaptive.label = "adaptive";
  adaptive.error = rmse(run_trials(space, oracle, base, repetitions), truth);
  rows.push_back(std::move(adaptive));
  return rows;
}

EstimateReport cardinality_estimate(const CrossSpace& space, const OracleSource& oracle, std::size_t first,
                                    std::size_t last, const QuerySpec& spec, BudgetLedger& ledger) {
  if (first >= last || last >= space.arity()) {
    throw Error(ErrorKind::InvalidArgument, "sub-join must be a contiguous chain of at least two tables");
  }
  const CrossSpace sub = space.subchain(first, last);
  const ShiftedOracle shifted(oracle, first);
  QuerySpec s = spec;
  s.aggregate = Aggregate::Count;
  s.method = Method::Bas;
  s.tables = sub.table_names();
  return bas_estimate(sub, shifted, s, ledger);
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "label,ratio,allocation,rmse,relative,defined,undefined\n";
  for (const auto& r : rows) {
    std::string alloc;
    for (std::size_t i = 0; i < r.allocation.size(); ++i) {
      if (i) alloc.push_back(';');
      alloc += std::to_string(r.allocation[i]);
    }
    out << r.label << ',' << r.ratio << ',' << alloc << ',' << r.error.value << ',' << (r.error.relative ? 1 : 0)
        << ',' << r.error.defined << ',' << r.error.undefined_count << '\n';
  }
  return out.str();
}

}  // namespace joinml
