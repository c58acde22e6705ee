#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "joinml/bas.hpp"
#include "joinml/core.hpp"
#include "joinml/synth.hpp"

namespace joinml {

struct Trial {
  std::uint64_t seed = 0;
  std::optional<EstimateReport> report;
  std::string error;  // set when the estimator threw
};

struct TrialLog {
  QuerySpec spec;
  std::vector<Trial> trials;
  std::vector<double> wall_seconds;  // not serialised into the log
};

void to_json(nlohmann::json& j, const TrialLog& log);

/// Optional blocking threshold supplier for Method::Blocking (called per trial with its seed).
using ThresholdFn = std::function<double(std::uint64_t seed)>;

/// R runs with seeds spec.seed + r, each with a fresh ledger.
TrialLog run_trials(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec, int repetitions,
                    const ThresholdFn& threshold = {});

struct RmseResult {
  double value = 0.0;
  bool relative = true;  // false when the truth is zero
  std::size_t defined = 0;
  std::size_t undefined_count = 0;
};

RmseResult rmse(const std::vector<double>& estimates, double truth, std::size_t undefined_count = 0);
RmseResult rmse(const TrialLog& log, double truth);

struct CoverageResult {
  double coverage = 0.0;
  double p95_error_ratio = 0.0;
  std::vector<std::pair<double, double>> curve;  // (percentile, error ratio)
  std::size_t trials = 0;
};

CoverageResult coverage_report(const TrialLog& log, double truth, double p);

/// Validation threshold: minimum score of a seeded 10% sample of the true positives.
double validation_threshold(const CrossSpace& space, const std::vector<TupleIndex>& positives, std::uint64_t seed,
                            double fraction = 0.1);

struct SweepRow {
  std::string label;  // "0.10" ... or "adaptive"
  double ratio = 0.0;
  std::vector<int> allocation;  // forced prefix (empty for adaptive)
  RmseResult error;
};

/// Fixed blocking ratios as forced prefixes of one stratification with
/// alpha = max(ratios), plus the adaptive allocation.
std::vector<SweepRow> ablation_sweep(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                                     const std::vector<double>& ratios, int repetitions, double truth);

/// Prefix of strata whose blocked share of the budget first reaches `ratio`.
std::vector<int> prefix_for_ratio(const Stratification& strat, std::int64_t budget, double ratio);

/// BaS COUNT over the contiguous sub-chain [first, last] of the query.
EstimateReport cardinality_estimate(const CrossSpace& space, const OracleSource& oracle, std::size_t first,
                                    std::size_t last, const QuerySpec& spec, BudgetLedger& ledger);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace joinml
