#pragma once

#include <limits>
#include <string>
#include <vector>

#include "joinml/bas.hpp"

namespace joinml {

/// mu + (sigma / sqrt(n)) * sqrt(2 ln(2 / (1 - p))).
double ub(double mu, double sigma2, double n, double p);

/// gamma - (1 - gamma) * count_b / upper, clamped to [0, gamma].
double gamma_s_required(double gamma, double count_b, double upper);
/// Same, with upper = ub(mu, sigma2, n, p).
double gamma_s_required(double gamma, double count_b, double mu, double sigma2, double n, double p);

struct SelectionSpec {
  double recall = 0.9;
  double confidence = 0.95;
  std::int64_t budget = 1000;
  double alpha = 0.20;
  double pilot_fraction = 0.10;
  std::uint64_t seed = 0;
  std::optional<int> strata_hint;

  void validate() const;
};

struct SelectionResult {
  std::vector<TupleIndex> selected;  // ascending
  double threshold = std::numeric_limits<double>::infinity();  // tau_s over the sampling regime
  double gamma_s = 0.0;
  double count_blocked = 0.0;
  double count_sampled_ub = 0.0;
  std::vector<int> allocation;
  std::int64_t budget_used = 0;
  bool recall_infeasible = false;
};

SelectionResult bas_select(const CrossSpace& space, const OracleSource& oracle, const SelectionSpec& spec,
                           BudgetLedger& ledger);
SelectionResult bas_select(const CrossSpace& space, const OracleSource& oracle, const SelectionSpec& spec);

/// Baseline: uniform sample over the whole cross product, threshold certified the same way.
SelectionResult uniform_select(const CrossSpace& space, const OracleSource& oracle, const SelectionSpec& spec);

/// Importance-sampling recall lower bound for the tuples scoring >= tau among weighted draws.
/// Each element of `strata` holds draws of one stratum; `c` is the bound multiplier.
double recall_lower_bound(const std::vector<std::vector<Draw>>& strata, double tau, double c);

struct EntityEstimate {
  std::string entity;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct TopKResult {
  std::vector<EntityEstimate> ranked;  // all discovered entities, estimate descending
  std::vector<std::string> top;        // first K
  bool certified = false;
  std::vector<int> allocation;
  std::int64_t budget_used = 0;
};

/// Heavy hitters by COUNT over the grouping column of the space.
TopKResult topk_heavy_hitters(const CrossSpace& space, const OracleSource& oracle, int k, const QuerySpec& spec,
                              BudgetLedger& ledger);
TopKResult topk_heavy_hitters(const CrossSpace& space, const OracleSource& oracle, int k, const QuerySpec& spec);

void to_json(nlohmann::json& j, const SelectionResult& r);
void to_json(nlohmann::json& j, const TopKResult& r);

}  // namespace joinml
