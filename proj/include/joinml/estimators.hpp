#pragma once

#include <span>
#include <vector>

#include "joinml/core.hpp"
#include "joinml/rng.hpp"
#include "joinml/similarity.hpp"

namespace joinml {

/// Two-sided standard normal critical value z_{(1+p)/2}.
double normal_critical(double p);

struct ConfidenceInterval {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
};

/// CLT interval: mean and sample standard deviation of x, all scaled by `scale`.
ConfidenceInterval standard_ci(std::span<const double> x, double p, double scale = 1.0);

/// Smallest validation-positive score (full recall on the validation set).
double calibrate_threshold(std::span<const double> validation_scores);

// The estimators charge `ledger` (which may be shared); budget_used in the
// report is the number of charges made by the call. The overloads without a
// ledger create one with limit spec.budget.

EstimateReport uniform_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                                BudgetLedger& ledger);
EstimateReport uniform_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec);

EstimateReport wwj_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                            BudgetLedger& ledger);
EstimateReport wwj_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec);

/// Threshold blocking over all tuples with score >= tau.
EstimateReport blocking_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec, double tau,
                                 BudgetLedger& ledger);
EstimateReport blocking_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec, double tau);

namespace detail {

/// Point estimate and CLT interval for COUNT/SUM/AVG from weighted draws:
/// count terms c_i = O/pi, sum terms s_i = O*g/pi. AVG uses the linearised ratio.
/// Sets `undefined` and the attribute-range CI when no draw matched.
void fill_clt(EstimateReport& report, Aggregate aggregate, std::span<const double> c, std::span<const double> s,
              double p, double scale, double value_min, double value_max);

}  // namespace detail

}  // namespace joinml
