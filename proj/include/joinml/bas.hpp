#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "joinml/ci.hpp"
#include "joinml/core.hpp"
#include "joinml/rng.hpp"
#include "joinml/similarity.hpp"

namespace joinml {

struct Stratum {
  int index = 0;
  std::uint64_t size = 0;
  double mass = 0.0;       // walk probability mass; sampling weight of the stratum
  std::size_t begin = 0;   // slice of the top regime (D_0 has an empty slice)
  std::size_t end = 0;
};

/// D_0 (residual regime, index 0) plus K equal-size, score-ordered strata of the top regime.
struct Stratification {
  std::shared_ptr<const TopRegime> top;
  std::vector<Stratum> strata;
  std::vector<double> cumulative;  // prefix sums of walk probability over top entries, size top->size() + 1

  int K() const { return static_cast<int>(strata.size()) - 1; }
  bool residual_empty() const { return strata.front().size == 0; }
  std::unordered_map<TupleIndex, int> lookup;  // top-regime tuple -> stratum

  /// Stratum holding tuple t (0 when outside the top regime).
  int stratum_of(TupleIndex t) const;
};

/// clamp(floor(alpha*b/1000), 5, 100), overridden by `hint`, and never above the regime size.
int strata_count(double alpha, std::int64_t budget, std::optional<int> hint, std::uint64_t regime_size);

/// Top floor(alpha*b) tuples, cut into K strata. Falls back to nearest-neighbour
/// blocking when the cross product exceeds `cap`.
Stratification stratify(const CrossSpace& space, double alpha, std::int64_t budget, std::optional<int> k_hint = {},
                        std::uint64_t cap = kDefaultMaterializationCap);

/// Stratifies a given regime into k strata.
Stratification stratify_regime(const CrossSpace& space, TopRegime top, int k);

/// One labelled draw. `prob` is the within-stratum sampling probability.
struct Draw {
  TupleIndex tuple = 0;
  double prob = 1.0;
  bool match = false;
  double value = 0.0;
  int group = -1;
  double score = 0.0;
};

/// Draws one tuple from stratum i with probability proportional to walk probability.
TupleIndex draw_tuple(const CrossSpace& space, const Stratification& strat, int i, Rng& rng, double& prob);

/// Draws and labels n tuples of stratum i (with replacement).
void sample_stratum(const CrossSpace& space, const OracleSource& oracle, BudgetLedger& ledger,
                    const Stratification& strat, int i, std::int64_t n, Rng& rng, std::vector<Draw>& out);

struct PilotResult {
  std::vector<std::vector<Draw>> draws;  // per stratum
  std::vector<std::int64_t> sizes;       // n_i^(1)
  // Per-stratum moments of X = O/pi (count) and X = O*g/pi (sum).
  std::vector<double> count_mean, count_var, sum_mean, sum_var;

  std::int64_t total() const;
};

/// max(2, round(b1 * mass_i)) per non-empty stratum.
std::vector<std::int64_t> pilot_sizes(const Stratification& strat, std::int64_t b1);

PilotResult pilot(const CrossSpace& space, const OracleSource& oracle, BudgetLedger& ledger,
                  const Stratification& strat, std::int64_t b1, Rng& rng);

/// Mean and sample variance (n - 1 denominator; 0 when n < 2).
std::pair<double, double> moments(std::span<const double> x);

// ---------------------------------------------------------------------------
// Allocation

/// Inputs to the allocation search, indexed by stratum 0..K.
struct AllocationProblem {
  std::vector<std::uint64_t> sizes;
  std::vector<double> masses;
  std::vector<double> variances;  // per-draw variance of the stratum estimator
};

AllocationProblem allocation_problem(const Stratification& strat, std::vector<double> variances);

/// blocked[i] for i in 0..K (blocked[0] is always false).
using BlockMask = std::vector<bool>;

BlockMask mask_from(const std::vector<int>& blocked, int k);
std::vector<int> blocked_list(const BlockMask& mask);

/// (b2 - sum of blocked sizes) * mass_i / (mass of unblocked strata).
double budget_assign(std::int64_t b2, const AllocationProblem& problem, const BlockMask& blocked, int i);

/// Integer budgets per stratum (largest remainder); blocked strata get |D_i|.
std::vector<std::int64_t> integer_budgets(std::int64_t b2, const AllocationProblem& problem, const BlockMask& blocked);

bool feasible(std::int64_t b2, const AllocationProblem& problem, const BlockMask& blocked);

/// Sum over unblocked strata of sigma_i^2 / n_i. Throws InfeasibleAllocation.
double estimate_mse(const AllocationProblem& problem, const BlockMask& blocked, std::int64_t b2);

/// AVG: (1/n) (S/C)^2 (MSE_C / C^2 + MSE_S / S^2) with n = b2 - sum of blocked sizes.
double estimate_avg_mse(const AllocationProblem& count, const AllocationProblem& sum, double count_hat,
                        double sum_hat, const BlockMask& blocked, std::int64_t b2);

struct Allocation {
  std::vector<int> blocked;            // 1-based stratum indices, ascending
  std::vector<std::int64_t> budgets;   // per stratum 0..K
  double objective = 0.0;
  bool feasible = true;
};

using AllocationObjective = std::function<double(const BlockMask&)>;

/// Local search (add/remove flips and one-for-one swaps) started from every feasible
/// prefix allocation; ties favour fewer blocked strata.
Allocation optimize_allocation(const AllocationProblem& problem, std::int64_t b2, const AllocationObjective& objective);
Allocation optimize_allocation(const AllocationProblem& problem, std::int64_t b2);

/// Exhaustive minimum over all 2^K subsets (test oracle; K <= 20).
Allocation exhaustive_allocation(const AllocationProblem& problem, std::int64_t b2, const AllocationObjective& objective);

// ---------------------------------------------------------------------------
// End-to-end

/// Everything observed in one BaS execution.
struct BasRun {
  Stratification strat;
  PilotResult pilot;
  Allocation allocation;
  std::vector<std::vector<Draw>> draws;  // pooled pilot + main draws of unblocked strata
  std::vector<std::vector<Draw>> blocked;  // exhaustive labels of blocked strata
  std::int64_t b1 = 0;
  std::int64_t b2 = 0;
  std::int64_t charged = 0;
};

/// Chooses the allocation after the pilot stage.
using AllocationPolicy = std::function<Allocation(const Stratification&, const PilotResult&, std::int64_t b2)>;

/// Stratify, pilot, allocate, execute. `forced_allocation` in the spec bypasses the policy.
BasRun run_bas(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec, BudgetLedger& ledger,
               const AllocationPolicy& policy);

/// The allocation rule used for COUNT/SUM/AVG.
Allocation linear_allocation(const Stratification& strat, const PilotResult& pilot, std::int64_t b2, Aggregate aggregate);

EstimateReport bas_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                            BudgetLedger& ledger);
EstimateReport bas_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec);

EstimateReport extreme_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                                BudgetLedger& ledger);
EstimateReport median_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                               BudgetLedger& ledger);

/// Generalised Pareto tail fit (method of moments) to the top fraction of `values`.
struct TailFit {
  double threshold = 0.0;
  double tail_fraction = 0.0;
  double shape = 0.0;
  double scale = 0.0;
  bool ok = false;
};
TailFit fit_gpd_tail(std::vector<double> values, double top_fraction = 0.2);
/// P[X > x] under the fit (empirical share above the threshold times the GPD survival).
double tail_exceedance(const TailFit& fit, double x);

struct GroupByResult {
  std::vector<EstimateReport> groups;     // discovered groups, by group name
  std::vector<std::string> undiscovered;  // groups with no observed match
};

GroupByResult groupby_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                               BudgetLedger& ledger);
GroupByResult groupby_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec);

namespace detail {

/// Per-stratum moments of X_g = O * (g or 1) * [group = g] / pi.
struct GroupMoments {
  std::vector<std::vector<double>> mean;  // [stratum][group]
  std::vector<std::vector<double>> var;
  std::vector<double> total;              // summed over strata
  std::vector<bool> seen;                 // any matching draw in the group
};
GroupMoments group_moments(const std::vector<std::vector<Draw>>& draws, std::size_t groups, bool use_value);

/// Per-group merged estimates with Bonferroni-split bootstrap-t intervals.
struct GroupedEstimate {
  std::vector<BootstrapInterval> ci;  // per group
  std::vector<bool> discovered;
  double confidence = 0.0;            // per-group confidence actually used
};
GroupedEstimate grouped_estimate(const BasRun& run, std::size_t groups, bool use_value, const QuerySpec& spec);

std::vector<StratumDiagnostics> diagnostics(const BasRun& run, const std::vector<double>& pilot_variance);

std::uint64_t bootstrap_seed(const QuerySpec& spec);

}  // namespace detail

/// Dispatch on spec.method and spec.aggregate for scalar aggregates.
EstimateReport estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                        BudgetLedger& ledger);
EstimateReport estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec);

}  // namespace joinml
