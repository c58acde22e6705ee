#include "joinml/bas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "joinml/estimators.hpp"

namespace joinml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_numeric(const QuerySpec& spec) {
  if (spec.budget < 10) throw Error(ErrorKind::InvalidArgument, "budget must be at least 10");
  if (!(spec.confidence > 0.0 && spec.confidence < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "confidence must lie in (0,1)");
  }
  if (!(spec.alpha > 0.0 && spec.alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0,1]");
  if (!(spec.pilot_fraction > 0.0 && spec.pilot_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "pilot_fraction must lie in (0,1)");
  }
}

EstimateReport base_report(const QuerySpec& spec) {
  EstimateReport r;
  r.confidence = spec.confidence;
  r.seed = spec.seed;
  r.method = std::string(to_string(Method::Bas));
  r.aggregate = std::string(to_string(spec.aggregate));
  return r;
}

// Lexicographic (objective, |beta|) with a relative tolerance on the objective.
bool improves(double value, std::size_t count, double best_value, std::size_t best_count) {
  if (std::isnan(value)) return false;
  if (std::isnan(best_value)) return true;
  if (value == best_value) return count < best_count;
  const double scale = std::max(std::abs(value), std::abs(best_value));
  if (std::isfinite(scale) && std::abs(value - best_value) <= 1e-12 * scale) return count < best_count;
  return value < best_value;
}

std::size_t popcount(const BlockMask& m) { return static_cast<std::size_t>(std::count(m.begin(), m.end(), true)); }

}  // namespace

// ---------------------------------------------------------------------------
// Stratification

int Stratification::stratum_of(TupleIndex t) const {
  const auto it = lookup.find(t);
  return it == lookup.end() ? 0 : it->second;
}

int strata_count(double alpha, std::int64_t budget, std::optional<int> hint, std::uint64_t regime_size) {
  if (regime_size == 0) return 0;
  int k = 0;
  if (hint) {
    if (*hint < 1) throw Error(ErrorKind::InvalidArgument, "stratum count must be positive");
    k = *hint;
  } else {
    const auto raw = static_cast<std::int64_t>(std::floor(alpha * static_cast<double>(budget) / 1000.0));
    k = static_cast<int>(std::clamp<std::int64_t>(raw, 5, 100));
  }
  return static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(k), regime_size));
}

Stratification stratify(const CrossSpace& space, double alpha, std::int64_t budget, std::optional<int> k_hint,
                        std::uint64_t cap) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0,1]");
  auto m = static_cast<std::uint64_t>(std::floor(alpha * static_cast<double>(budget)));
  m = std::min(m, space.size());
  TopRegime top = space.size() <= cap ? materialize_top(space, m, cap) : nn_blocking_top(space, m);
  const int k = strata_count(alpha, budget, k_hint, top.size());
  return stratify_regime(space, std::move(top), k);
}

Stratification stratify_regime(const CrossSpace& space, TopRegime top, int k) {
  const std::size_t m = top.size();
  if (m > 0 && k < 1) throw Error(ErrorKind::InvalidArgument, "a non-empty regime needs at least one stratum");
  if (static_cast<std::size_t>(std::max(k, 0)) > m) throw Error(ErrorKind::InvalidArgument, "more strata than tuples");
  Stratification s;
  s.cumulative.resize(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) s.cumulative[i + 1] = s.cumulative[i] + top.entries[i].walk_prob;

  Stratum d0;
  d0.index = 0;
  d0.size = space.size() - m;
  d0.mass = d0.size > 0 ? std::max(0.0, 1.0 - top.walk_mass) : 0.0;
  s.strata.push_back(d0);

  const std::size_t base = k > 0 ? m / static_cast<std::size_t>(k) : 0;
  const std::size_t extra = k > 0 ? m % static_cast<std::size_t>(k) : 0;
  std::size_t begin = 0;
  s.lookup.reserve(m * 2);
  for (int i = 1; i <= k; ++i) {
    Stratum st;
    st.index = i;
    st.begin = begin;
    st.size = base + (static_cast<std::size_t>(i) <= extra ? 1 : 0);
    st.end = begin + st.size;
    st.mass = s.cumulative[st.end] - s.cumulative[st.begin];
    for (std::size_t j = st.begin; j < st.end; ++j) s.lookup.emplace(top.entries[j].tuple, i);
    begin = st.end;
    s.strata.push_back(st);
  }
  s.top = std::make_shared<const TopRegime>(std::move(top));
  return s;
}

// ---------------------------------------------------------------------------
// Sampling

TupleIndex draw_tuple(const CrossSpace& space, const Stratification& strat, int i, Rng& rng, double& prob) {
  if (i == 0) {
    const WalkSample w = weighted_walk(space, rng, strat.top.get());
    prob = w.probability;
    return w.tuple;
  }
  const Stratum& st = strat.strata[static_cast<std::size_t>(i)];
  const auto first = strat.cumulative.begin() + static_cast<std::ptrdiff_t>(st.begin) + 1;
  const auto last = strat.cumulative.begin() + static_cast<std::ptrdiff_t>(st.end) + 1;
  const double target = strat.cumulative[st.begin] + rng.uniform() * st.mass;
  auto pos = static_cast<std::size_t>(std::upper_bound(first, last, target) - strat.cumulative.begin()) - 1;
  pos = std::clamp(pos, st.begin, st.end - 1);
  const TopEntry& e = strat.top->entries[pos];
  prob = e.walk_prob / st.mass;
  return e.tuple;
}

void sample_stratum(const CrossSpace& space, const OracleSource& oracle, BudgetLedger& ledger,
                    const Stratification& strat, int i, std::int64_t n, Rng& rng, std::vector<Draw>& out) {
  out.reserve(out.size() + static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
  for (std::int64_t j = 0; j < n; ++j) {
    Draw d;
    d.tuple = draw_tuple(space, strat, i, rng, d.prob);
    d.match = space.evaluate(oracle, d.tuple, ledger);
    d.value = space.value(d.tuple);
    d.group = space.group(d.tuple);
    d.score = space.tuple_score(d.tuple);
    out.push_back(d);
  }
}

std::pair<double, double> moments(std::span<const double> x) {
  if (x.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, ss / (n - 1.0)};
}

std::int64_t PilotResult::total() const { return std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0}); }

std::vector<std::int64_t> pilot_sizes(const Stratification& strat, std::int64_t b1) {
  double total = 0.0;
  for (const auto& s : strat.strata) {
    if (s.size > 0) total += s.mass;
  }
  std::vector<std::int64_t> sizes(strat.strata.size(), 0);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto& s = strat.strata[i];
    if (s.size == 0) continue;
    const double share = total > 0.0 ? s.mass / total : 0.0;
    sizes[i] = std::max<std::int64_t>(2, std::llround(static_cast<double>(b1) * share));
  }
  return sizes;
}

PilotResult pilot(const CrossSpace& space, const OracleSource& oracle, BudgetLedger& ledger,
                  const Stratification& strat, std::int64_t b1, Rng& rng) {
  PilotResult p;
  p.sizes = pilot_sizes(strat, b1);
  const std::size_t n = strat.strata.size();
  p.draws.resize(n);
  p.count_mean.assign(n, 0.0);
  p.count_var.assign(n, 0.0);
  p.sum_mean.assign(n, 0.0);
  p.sum_var.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (p.sizes[i] == 0) continue;
    Rng stream = rng.split(i);
    sample_stratum(space, oracle, ledger, strat, static_cast<int>(i), p.sizes[i], stream, p.draws[i]);
    std::vector<double> c, s;
    for (const auto& d : p.draws[i]) {
      c.push_back(d.match ? 1.0 / d.prob : 0.0);
      s.push_back(d.match ? d.value / d.prob : 0.0);
    }
    std::tie(p.count_mean[i], p.count_var[i]) = moments(c);
    std::tie(p.sum_mean[i], p.sum_var[i]) = moments(s);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Allocation

AllocationProblem allocation_problem(const Stratification& strat, std::vector<double> variances) {
  AllocationProblem p;
  for (const auto& s : strat.strata) {
    p.sizes.push_back(s.size);
    p.masses.push_back(s.mass);
  }
  if (variances.size() != p.sizes.size()) throw Error(ErrorKind::InvalidArgument, "one variance per stratum");
  p.variances = std::move(variances);
  return p;
}

BlockMask mask_from(const std::vector<int>& blocked, int k) {
  BlockMask m(static_cast<std::size_t>(k) + 1, false);
  for (int i : blocked) {
    if (i < 1 || i > k) throw Error(ErrorKind::InvalidArgument, "blocked stratum " + std::to_string(i) + " out of range");
    m[static_cast<std::size_t>(i)] = true;
  }
  return m;
}

std::vector<int> blocked_list(const BlockMask& mask) {
  std::vector<int> out;
  for (std::size_t i = 1; i < mask.size(); ++i) {
    if (mask[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

std::uint64_t blocked_size(const AllocationProblem& problem, const BlockMask& blocked) {
  std::uint64_t total = 0;
  for (std::size_t i = 1; i < blocked.size(); ++i) {
    if (blocked[i]) total += problem.sizes[i];
  }
  return total;
}

double unblocked_mass(const AllocationProblem& problem, const BlockMask& blocked) {
  double total = 0.0;
  for (std::size_t i = 0; i < problem.sizes.size(); ++i) {
    if (!blocked[i] && problem.sizes[i] > 0) total += problem.masses[i];
  }
  return total;
}

}  // namespace

bool feasible(std::int64_t b2, const AllocationProblem& problem, const BlockMask& blocked) {
  return b2 >= 0 && blocked_size(problem, blocked) <= static_cast<std::uint64_t>(b2);
}

double budget_assign(std::int64_t b2, const AllocationProblem& problem, const BlockMask& blocked, int i) {
  const auto idx = static_cast<std::size_t>(i);
  if (blocked[idx]) throw Error(ErrorKind::InvalidArgument, "stratum is blocked");
  if (!feasible(b2, problem, blocked)) throw Error(ErrorKind::InfeasibleAllocation, "blocked strata exceed b2");
  if (problem.sizes[idx] == 0) return 0.0;
  const double spare = static_cast<double>(static_cast<std::uint64_t>(b2) - blocked_size(problem, blocked));
  const double mass = unblocked_mass(problem, blocked);
  return mass > 0.0 ? spare * problem.masses[idx] / mass : 0.0;
}

std::vector<std::int64_t> integer_budgets(std::int64_t b2, const AllocationProblem& problem, const BlockMask& blocked) {
  if (!feasible(b2, problem, blocked)) throw Error(ErrorKind::InfeasibleAllocation, "blocked strata exceed b2");
  const std::size_t n = problem.sizes.size();
  std::vector<std::int64_t> out(n, 0);
  const auto spare = static_cast<std::int64_t>(static_cast<std::uint64_t>(b2) - blocked_size(problem, blocked));
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (blocked[i]) {
      out[i] = static_cast<std::int64_t>(problem.sizes[i]);
      continue;
    }
    if (problem.sizes[i] == 0) continue;
    const double x = budget_assign(b2, problem, blocked, static_cast<int>(i));
    out[i] = static_cast<std::int64_t>(std::floor(x));
    assigned += out[i];
    remainders.emplace_back(x - std::floor(x), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < spare && r < remainders.size(); ++r, ++assigned) ++out[remainders[r].second];
  return out;
}

double estimate_mse(const AllocationProblem& problem, const BlockMask& blocked, std::int64_t b2) {
  if (!feasible(b2, problem, blocked)) throw Error(ErrorKind::InfeasibleAllocation, "blocked strata exceed b2");
  const double spare = static_cast<double>(static_cast<std::uint64_t>(b2) - blocked_size(problem, blocked));
  const double mass = unblocked_mass(problem, blocked);
  double mse = 0.0;
  for (std::size_t i = 0; i < problem.sizes.size(); ++i) {
    if (blocked[i] || problem.sizes[i] == 0 || problem.variances[i] == 0.0) continue;
    const double n = mass > 0.0 ? spare * problem.masses[i] / mass : 0.0;
    if (n <= 0.0) return kInf;
    mse += problem.variances[i] / n;
  }
  return mse;
}

double estimate_avg_mse(const AllocationProblem& count, const AllocationProblem& sum, double count_hat,
                        double sum_hat, const BlockMask& blocked, std::int64_t b2) {
  const double mse_c = estimate_mse(count, blocked, b2);
  const double mse_s = estimate_mse(sum, blocked, b2);
  if (!(count_hat > 0.0)) return mse_c + mse_s;
  const double n = static_cast<double>(static_cast<std::uint64_t>(b2) - blocked_size(count, blocked));
  if (n <= 0.0) return (mse_c == 0.0 && mse_s == 0.0) ? 0.0 : kInf;
  const double c2 = count_hat * count_hat;
  return (sum_hat * sum_hat * mse_c / (c2 * c2) + mse_s / c2) / n;
}

Allocation optimize_allocation(const AllocationProblem& problem, std::int64_t b2, const AllocationObjective& objective) {
  const int k = static_cast<int>(problem.sizes.size()) - 1;
  auto eval = [&](const BlockMask& m) {
    if (!feasible(b2, problem, m)) return std::numeric_limits<double>::quiet_NaN();
    const double v = objective(m);
    return std::isnan(v) ? kInf : v;
  };

  // Best-improvement descent over add/remove flips and one-for-one swaps.
  auto descend = [&](BlockMask mask, double value) {
    for (int iter = 0; iter < 4 * (k + 1) * (k + 1); ++iter) {
      BlockMask move_mask;
      double move_value = value;
      std::size_t move_count = popcount(mask);
      bool found = false;
      auto consider = [&](BlockMask m) {
        const double v = eval(m);
        if (improves(v, popcount(m), move_value, move_count)) {
          move_mask = std::move(m);
          move_value = v;
          move_count = popcount(move_mask);
          found = true;
        }
      };
      for (int i = 1; i <= k; ++i) {
        BlockMask m = mask;
        m[static_cast<std::size_t>(i)] = !m[static_cast<std::size_t>(i)];
        consider(std::move(m));
      }
      for (int i = 1; i <= k; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        for (int j = 1; j <= k; ++j) {
          if (mask[static_cast<std::size_t>(j)]) continue;
          BlockMask m = mask;
          m[static_cast<std::size_t>(i)] = false;
          m[static_cast<std::size_t>(j)] = true;
          consider(std::move(m));
        }
      }
      if (!found) break;
      mask = std::move(move_mask);
      value = move_value;
    }
    return std::make_pair(std::move(mask), value);
  };

  BlockMask best(static_cast<std::size_t>(k) + 1, false);
  double best_value = eval(best);
  if (std::isnan(best_value)) throw Error(ErrorKind::InfeasibleAllocation, "negative sampling budget");
  BlockMask prefix = best;
  for (int j = 0; j <= k; ++j) {
    if (j > 0) prefix[static_cast<std::size_t>(j)] = true;
    const double v = eval(prefix);
    if (std::isnan(v)) break;
    auto [mask, value] = descend(prefix, v);
    if (improves(value, popcount(mask), best_value, popcount(best))) {
      best = std::move(mask);
      best_value = value;
    }
  }

  Allocation a;
  a.blocked = blocked_list(best);
  a.budgets = integer_budgets(b2, problem, best);
  a.objective = best_value;
  return a;
}

Allocation optimize_allocation(const AllocationProblem& problem, std::int64_t b2) {
  return optimize_allocation(problem, b2, [&](const BlockMask& m) { return estimate_mse(problem, m, b2); });
}

Allocation exhaustive_allocation(const AllocationProblem& problem, std::int64_t b2, const AllocationObjective& objective) {
  const int k = static_cast<int>(problem.sizes.size()) - 1;
  if (k > 20) throw Error(ErrorKind::InvalidArgument, "exhaustive search is limited to 20 strata");
  BlockMask best(static_cast<std::size_t>(k) + 1, false);
  double best_value = objective(best);
  for (std::uint32_t bits = 1; bits < (1u << k); ++bits) {
    BlockMask m(static_cast<std::size_t>(k) + 1, false);
    for (int i = 0; i < k; ++i) m[static_cast<std::size_t>(i) + 1] = (bits >> i) & 1u;
    if (!feasible(b2, problem, m)) continue;
    const double v = objective(m);
    if (improves(v, popcount(m), best_value, popcount(best))) {
      best = m;
      best_value = v;
    }
  }
  Allocation a;
  a.blocked = blocked_list(best);
  a.budgets = integer_budgets(b2, problem, best);
  a.objective = best_value;
  return a;
}

// ---------------------------------------------------------------------------
// Pipeline

BasRun run_bas(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec, BudgetLedger& ledger,
               const AllocationPolicy& policy) {
  check_numeric(spec);
  const std::int64_t before = ledger.used();
  BasRun run;
  run.strat = stratify(space, spec.alpha, spec.budget, spec.strata_hint);

  // The pilot needs two draws per stratum; shrink K when that would eat over half the budget.
  int k = run.strat.K();
  const std::int64_t half = spec.budget / 2;
  const int k_limit = static_cast<int>(std::max<std::int64_t>(1, half / 2 - 1));
  if (k > k_limit) {
    TopRegime top = *run.strat.top;
    k = k_limit;
    run.strat = stratify_regime(space, std::move(top), k);
  }
  std::int64_t nonempty = 0;
  for (const auto& s : run.strat.strata) nonempty += s.size > 0 ? 1 : 0;
  run.b1 = std::max<std::int64_t>(std::llround(spec.pilot_fraction * static_cast<double>(spec.budget)), 2 * nonempty);

  const Rng root(spec.seed);
  Rng pilot_rng = root.split(10);
  run.pilot = pilot(space, oracle, ledger, run.strat, run.b1, pilot_rng);
  run.b2 = spec.budget - run.pilot.total();
  if (run.b2 < 0) throw Error(ErrorKind::InvalidArgument, "budget too small for the pilot stage");

  const AllocationProblem shape = allocation_problem(run.strat, std::vector<double>(run.strat.strata.size(), 0.0));
  if (spec.forced_allocation) {
    const BlockMask m = mask_from(*spec.forced_allocation, run.strat.K());
    if (!feasible(run.b2, shape, m)) throw Error(ErrorKind::InfeasibleAllocation, "forced allocation exceeds b2");
    run.allocation.blocked = blocked_list(m);
    run.allocation.budgets = integer_budgets(run.b2, shape, m);
  } else {
    run.allocation = policy(run.strat, run.pilot, run.b2);
  }

  const std::size_t n = run.strat.strata.size();
  const BlockMask mask = mask_from(run.allocation.blocked, run.strat.K());
  run.draws.assign(n, {});
  run.blocked.assign(n, {});
  Rng main_rng = root.split(11);
  for (std::size_t i = 0; i < n; ++i) {
    const Stratum& st = run.strat.strata[i];
    if (mask[i]) {
      auto& out = run.blocked[i];
      out.reserve(st.size);
      for (std::size_t j = st.begin; j < st.end; ++j) {
        const TopEntry& e = run.strat.top->entries[j];
        Draw d;
        d.tuple = e.tuple;
        d.match = space.evaluate(oracle, e.tuple, ledger);
        d.value = space.value(e.tuple);
        d.group = space.group(e.tuple);
        d.score = e.score;
        out.push_back(d);
      }
      continue;
    }
    if (st.size == 0) continue;
    run.draws[i] = run.pilot.draws[i];
    Rng stream = main_rng.split(i);
    sample_stratum(space, oracle, ledger, run.strat, static_cast<int>(i), run.allocation.budgets[i], stream,
                   run.draws[i]);
  }
  run.charged = ledger.used() - before;
  return run;
}

Allocation linear_allocation(const Stratification& strat, const PilotResult& pilot, std::int64_t b2,
                             Aggregate aggregate) {
  switch (aggregate) {
    case Aggregate::Count: return optimize_allocation(allocation_problem(strat, pilot.count_var), b2);
    case Aggregate::Sum: return optimize_allocation(allocation_problem(strat, pilot.sum_var), b2);
    case Aggregate::Avg: {
      const auto pc = allocation_problem(strat, pilot.count_var);
      const auto ps = allocation_problem(strat, pilot.sum_var);
      const double c = std::accumulate(pilot.count_mean.begin(), pilot.count_mean.end(), 0.0);
      const double s = std::accumulate(pilot.sum_mean.begin(), pilot.sum_mean.end(), 0.0);
      return optimize_allocation(pc, b2, [&](const BlockMask& m) { return estimate_avg_mse(pc, ps, c, s, m, b2); });
    }
    default: throw Error(ErrorKind::InvalidArgument, "linear allocation covers COUNT, SUM and AVG");
  }
}

namespace detail {

std::vector<StratumDiagnostics> diagnostics(const BasRun& run, const std::vector<double>& pilot_variance) {
  std::vector<StratumDiagnostics> out;
  const BlockMask mask = mask_from(run.allocation.blocked, run.strat.K());
  for (std::size_t i = 0; i < run.strat.strata.size(); ++i) {
    StratumDiagnostics d;
    d.index = static_cast<int>(i);
    d.size = run.strat.strata[i].size;
    d.mass = run.strat.strata[i].mass;
    d.pilot_variance = pilot_variance[i];
    d.budget = run.allocation.budgets.empty() ? 0 : run.allocation.budgets[i];
    d.blocked = mask[i];
    out.push_back(d);
  }
  return out;
}

std::uint64_t bootstrap_seed(const QuerySpec& spec) {
  Rng r = Rng(spec.seed).split(12);
  return r();
}

GroupMoments group_moments(const std::vector<std::vector<Draw>>& draws, std::size_t groups, bool use_value) {
  GroupMoments gm;
  gm.mean.assign(draws.size(), std::vector<double>(groups, 0.0));
  gm.var.assign(draws.size(), std::vector<double>(groups, 0.0));
  gm.total.assign(groups, 0.0);
  gm.seen.assign(groups, false);
  std::vector<double> x;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    for (std::size_t g = 0; g < groups; ++g) {
      x.clear();
      for (const auto& d : draws[i]) {
        const bool hit = d.match && d.group == static_cast<int>(g);
        if (hit) gm.seen[g] = true;
        x.push_back(hit ? (use_value ? d.value : 1.0) / d.prob : 0.0);
      }
      std::tie(gm.mean[i][g], gm.var[i][g]) = moments(x);
      gm.total[g] += gm.mean[i][g];
    }
  }
  return gm;
}

GroupedEstimate grouped_estimate(const BasRun& run, std::size_t groups, bool use_value, const QuerySpec& spec) {
  GroupedEstimate out;
  std::vector<double> constants(groups, 0.0);
  out.discovered.assign(groups, false);
  for (const auto& stratum : run.blocked) {
    for (const auto& d : stratum) {
      if (d.match && d.group >= 0) {
        constants[static_cast<std::size_t>(d.group)] += use_value ? d.value : 1.0;
        out.discovered[static_cast<std::size_t>(d.group)] = true;
      }
    }
  }
  StratifiedSample sample;
  sample.dims = groups;
  for (const auto& stratum : run.draws) {
    if (stratum.empty()) continue;
    std::vector<double> rows(stratum.size() * groups, 0.0);
    for (std::size_t j = 0; j < stratum.size(); ++j) {
      const Draw& d = stratum[j];
      if (d.match && d.group >= 0) {
        rows[j * groups + static_cast<std::size_t>(d.group)] = (use_value ? d.value : 1.0) / d.prob;
        out.discovered[static_cast<std::size_t>(d.group)] = true;
      }
    }
    sample.strata.push_back(std::move(rows));
  }
  const auto g_disc = static_cast<double>(std::max<std::size_t>(
      1, static_cast<std::size_t>(std::count(out.discovered.begin(), out.discovered.end(), true))));
  out.confidence = 1.0 - (1.0 - spec.confidence) / g_disc;
  LinearStatistic stat(constants);
  if (spec.compute_ci) {
    out.ci = bootstrap_t_ci(sample, stat, out.confidence, {spec.resamples, bootstrap_seed(spec)});
  } else {
    std::vector<double> est(groups), se(groups);
    stat.evaluate(SampleView(sample), est, se);
    const double z = normal_critical(out.confidence);
    for (std::size_t g = 0; g < groups; ++g) {
      BootstrapInterval ci;
      ci.estimate = est[g];
      ci.se = se[g];
      ci.low = est[g] - z * se[g];
      ci.high = est[g] + z * se[g];
      out.ci.push_back(ci);
    }
  }
  return out;
}

}  // namespace detail

namespace {

void set_interval(EstimateReport& r, const BootstrapInterval& ci) {
  r.estimate = ci.estimate;
  r.ci_low = ci.low;
  r.ci_high = ci.high;
  r.ci_clamped = ci.clamped;
}

// Bootstrap or CLT interval for a single-output statistic.
BootstrapInterval interval(const StratifiedSample& sample, const Statistic& stat, const QuerySpec& spec) {
  if (spec.compute_ci) return bootstrap_t_ci(sample, stat, spec.confidence, {spec.resamples, detail::bootstrap_seed(spec)})[0];
  double est = 0.0, se = 0.0;
  stat.evaluate(SampleView(sample), {&est, 1}, {&se, 1});
  const double z = normal_critical(spec.confidence);
  BootstrapInterval ci;
  ci.estimate = est;
  ci.se = se;
  ci.low = std::isfinite(se) ? est - z * se : est;
  ci.high = std::isfinite(se) ? est + z * se : est;
  return ci;
}

void set_undefined(EstimateReport& r, const CrossSpace& space) {
  r.undefined = true;
  r.estimate = 0.5 * (space.min_value() + space.max_value());
  r.ci_low = space.min_value();
  r.ci_high = space.max_value();
}

std::int64_t blocked_total(const BasRun& run) {
  std::int64_t n = 0;
  for (const auto& b : run.blocked) n += static_cast<std::int64_t>(b.size());
  return n;
}

}  // namespace

EstimateReport bas_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                            BudgetLedger& ledger) {
  const Aggregate agg = spec.aggregate;
  if (!is_linear(agg) && agg != Aggregate::Avg) {
    throw Error(ErrorKind::InvalidArgument, "bas_estimate covers COUNT, SUM and AVG");
  }
  const BasRun run = run_bas(space, oracle, spec, ledger, [agg](const auto& s, const auto& p, std::int64_t b2) {
    return linear_allocation(s, p, b2, agg);
  });

  double count_b = 0.0, sum_b = 0.0;
  for (const auto& stratum : run.blocked) {
    for (const auto& d : stratum) {
      if (d.match) {
        count_b += 1.0;
        sum_b += d.value;
      }
    }
  }
  EstimateReport r = base_report(spec);
  r.allocation = run.allocation.blocked;
  r.budget_used = run.charged;
  r.per_stratum = detail::diagnostics(run, agg == Aggregate::Count ? run.pilot.count_var : run.pilot.sum_var);

  StratifiedSample sample;
  sample.dims = agg == Aggregate::Avg ? 2 : 1;
  bool any_match = count_b > 0.0;
  for (const auto& stratum : run.draws) {
    if (stratum.empty()) continue;
    std::vector<double> rows;
    rows.reserve(stratum.size() * sample.dims);
    for (const auto& d : stratum) {
      const double c = d.match ? 1.0 / d.prob : 0.0;
      const double s = d.match ? d.value / d.prob : 0.0;
      any_match = any_match || d.match;
      if (agg == Aggregate::Count) {
        rows.push_back(c);
      } else if (agg == Aggregate::Sum) {
        rows.push_back(s);
      } else {
        rows.push_back(c);
        rows.push_back(s);
      }
    }
    sample.strata.push_back(std::move(rows));
  }

  if (agg == Aggregate::Avg) {
    if (!any_match) {
      set_undefined(r, space);
      return r;
    }
    const double n_eff = static_cast<double>(spec.budget - blocked_total(run));
    set_interval(r, interval(sample, RatioStatistic(count_b, sum_b, n_eff), spec));
  } else {
    set_interval(r, interval(sample, LinearStatistic({agg == Aggregate::Count ? count_b : sum_b}), spec));
  }
  return r;
}

EstimateReport bas_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec) {
  BudgetLedger ledger(spec.budget);
  return bas_estimate(space, oracle, spec, ledger);
}

// ---------------------------------------------------------------------------
// MIN / MAX

TailFit fit_gpd_tail(std::vector<double> values, double top_fraction) {
  TailFit fit;
  if (values.size() < 5) return fit;
  std::sort(values.begin(), values.end(), std::greater<>());
  const std::size_t n = values.size();
  const std::size_t k = std::min(n - 1, std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(top_fraction * n))));
  fit.threshold = values[k];
  fit.tail_fraction = static_cast<double>(k) / static_cast<double>(n);
  std::vector<double> excess(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k));
  for (auto& e : excess) e -= fit.threshold;
  const auto [m, v] = moments(excess);
  fit.ok = true;
  if (m <= 0.0) {
    fit.scale = 0.0;
    return fit;
  }
  if (v <= 0.0) {
    fit.shape = 0.0;
    fit.scale = m;
    return fit;
  }
  const double r = m * m / v;
  fit.shape = 0.5 * (1.0 - r);
  fit.scale = 0.5 * m * (r + 1.0);
  return fit;
}

double tail_exceedance(const TailFit& fit, double x) {
  if (!fit.ok) return 0.0;
  if (x <= fit.threshold) return fit.tail_fraction;
  if (fit.scale <= 0.0) return 0.0;
  const double y = x - fit.threshold;
  double survival = 0.0;
  if (std::abs(fit.shape) < 1e-9) {
    survival = std::exp(-y / fit.scale);
  } else {
    const double base = 1.0 + fit.shape * y / fit.scale;
    survival = base <= 0.0 ? 0.0 : std::pow(base, -1.0 / fit.shape);
  }
  return fit.tail_fraction * survival;
}

EstimateReport extreme_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                                BudgetLedger& ledger) {
  const bool is_max = spec.aggregate == Aggregate::Max;
  if (!is_max && spec.aggregate != Aggregate::Min) throw Error(ErrorKind::InvalidArgument, "MIN or MAX expected");
  // MIN is MAX of the negated attribute.
  const double sign = is_max ? 1.0 : -1.0;

  auto policy = [sign](const Stratification& strat, const PilotResult& pilot, std::int64_t b2) {
    double best = -kInf;
    std::size_t matched = 0;
    std::vector<std::vector<double>> values(strat.strata.size());
    for (std::size_t i = 0; i < pilot.draws.size(); ++i) {
      for (const auto& d : pilot.draws[i]) {
        if (!d.match) continue;
        values[i].push_back(sign * d.value);
        best = std::max(best, sign * d.value);
        ++matched;
      }
    }
    std::vector<std::pair<double, int>> ranked;
    for (int i = 1; i <= strat.K(); ++i) {
      const double count = pilot.count_mean[static_cast<std::size_t>(i)];
      double p_exceed = 1.0;
      if (matched > 0) {
        const TailFit fit = fit_gpd_tail(values[static_cast<std::size_t>(i)]);
        p_exceed = fit.ok ? tail_exceedance(fit, best) : 1.0 / static_cast<double>(matched + 1);
      }
      const double score = count * p_exceed;
      if (score > 0.0) ranked.emplace_back(score, i);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const AllocationProblem problem = allocation_problem(strat, pilot.count_var);
    BlockMask mask(strat.strata.size(), false);
    for (const auto& [score, i] : ranked) {
      mask[static_cast<std::size_t>(i)] = true;
      if (!feasible(b2, problem, mask)) mask[static_cast<std::size_t>(i)] = false;
    }
    Allocation a;
    a.blocked = blocked_list(mask);
    a.budgets = integer_budgets(b2, problem, mask);
    a.objective = ranked.empty() ? 0.0 : ranked.front().first;
    return a;
  };
  const BasRun run = run_bas(space, oracle, spec, ledger, policy);

  EstimateReport r = base_report(spec);
  r.allocation = run.allocation.blocked;
  r.budget_used = run.charged;
  r.per_stratum = detail::diagnostics(run, run.pilot.count_var);
  double best = -kInf;
  for (const auto* group : {&run.blocked, &run.draws}) {
    for (const auto& stratum : *group) {
      for (const auto& d : stratum) {
        if (d.match) best = std::max(best, sign * d.value);
      }
    }
  }
  if (best == -kInf) {
    set_undefined(r, space);
    return r;
  }
  r.estimate = sign * best;
  if (is_max) {
    r.ci_low = r.estimate;
    r.ci_high = space.max_value();
  } else {
    r.ci_low = space.min_value();
    r.ci_high = r.estimate;
  }
  return r;
}

// ---------------------------------------------------------------------------
// MEDIAN

EstimateReport median_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                               BudgetLedger& ledger) {
  if (spec.aggregate != Aggregate::Median) throw Error(ErrorKind::InvalidArgument, "MEDIAN expected");

  std::vector<double> median_var;
  auto policy = [&median_var](const Stratification& strat, const PilotResult& pilot, std::int64_t b2) {
    std::vector<std::pair<double, double>> items;
    for (const auto& stratum : pilot.draws) {
      for (const auto& d : stratum) {
        if (d.match) items.emplace_back(d.value, 1.0 / (d.prob * static_cast<double>(stratum.size())));
      }
    }
    if (items.empty()) {
      median_var = pilot.count_var;
    } else {
      const double m = weighted_lower_quantile(items, 0.5);
      median_var.assign(strat.strata.size(), 0.0);
      for (std::size_t i = 0; i < pilot.draws.size(); ++i) {
        std::vector<double> x;
        for (const auto& d : pilot.draws[i]) x.push_back(d.match ? ((d.value <= m ? 1.0 : 0.0) - 0.5) / d.prob : 0.0);
        median_var[i] = moments(x).second;
      }
    }
    return optimize_allocation(allocation_problem(strat, median_var), b2);
  };
  const BasRun run = run_bas(space, oracle, spec, ledger, policy);
  if (median_var.empty()) median_var = run.pilot.count_var;

  EstimateReport r = base_report(spec);
  r.allocation = run.allocation.blocked;
  r.budget_used = run.charged;
  r.per_stratum = detail::diagnostics(run, median_var);

  std::vector<double> blocked_values;
  for (const auto& stratum : run.blocked) {
    for (const auto& d : stratum) {
      if (d.match) blocked_values.push_back(d.value);
    }
  }
  StratifiedSample sample;
  sample.dims = 2;
  bool any_match = !blocked_values.empty();
  for (const auto& stratum : run.draws) {
    if (stratum.empty()) continue;
    std::vector<double> rows;
    for (const auto& d : stratum) {
      rows.push_back(d.match ? 1.0 / d.prob : 0.0);
      rows.push_back(d.value);
      any_match = any_match || d.match;
    }
    sample.strata.push_back(std::move(rows));
  }
  if (!any_match) {
    set_undefined(r, space);
    return r;
  }
  set_interval(r, interval(sample, QuantileStatistic(std::move(blocked_values)), spec));
  return r;
}

// ---------------------------------------------------------------------------
// GROUPBY

GroupByResult groupby_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                               BudgetLedger& ledger) {
  const bool use_value = spec.aggregate == Aggregate::GroupBySum;
  if (!use_value && spec.aggregate != Aggregate::GroupByCount) {
    throw Error(ErrorKind::InvalidArgument, "GROUPBY-COUNT or GROUPBY-SUM expected");
  }
  const std::size_t groups = space.group_names().size();
  if (groups == 0) throw Error(ErrorKind::InvalidArgument, "the join space has no grouping column");

  auto policy = [groups, use_value](const Stratification& strat, const PilotResult& pilot, std::int64_t b2) {
    const auto gm = detail::group_moments(pilot.draws, groups, use_value);
    const auto fallback = allocation_problem(strat, use_value ? pilot.sum_var : pilot.count_var);
    std::vector<std::size_t> active;
    for (std::size_t g = 0; g < groups; ++g) {
      if (gm.seen[g] && gm.total[g] != 0.0) active.push_back(g);
    }
    if (active.empty()) return optimize_allocation(fallback, b2);
    return optimize_allocation(fallback, b2, [&](const BlockMask& m) {
      double worst = 0.0;
      for (std::size_t g : active) {
        double mse = 0.0;
        for (std::size_t i = 0; i < strat.strata.size(); ++i) {
          if (m[i] || strat.strata[i].size == 0 || gm.var[i][g] == 0.0) continue;
          const double n = budget_assign(b2, fallback, m, static_cast<int>(i));
          if (n <= 0.0) return kInf;
          mse += gm.var[i][g] / n;
        }
        worst = std::max(worst, mse / (gm.total[g] * gm.total[g]));
      }
      return worst;
    });
  };
  const BasRun run = run_bas(space, oracle, spec, ledger, policy);
  const auto est = detail::grouped_estimate(run, groups, use_value, spec);

  GroupByResult out;
  const auto diag = detail::diagnostics(run, use_value ? run.pilot.sum_var : run.pilot.count_var);
  for (std::size_t g = 0; g < groups; ++g) {
    if (!est.discovered[g]) {
      out.undiscovered.push_back(space.group_names()[g]);
      continue;
    }
    EstimateReport r = base_report(spec);
    r.confidence = est.confidence;
    r.group = space.group_names()[g];
    r.allocation = run.allocation.blocked;
    r.budget_used = run.charged;
    r.per_stratum = diag;
    set_interval(r, est.ci[g]);
    out.groups.push_back(std::move(r));
  }
  return out;
}

GroupByResult groupby_estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec) {
  BudgetLedger ledger(spec.budget);
  return groupby_estimate(space, oracle, spec, ledger);
}

// ---------------------------------------------------------------------------

EstimateReport estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec,
                        BudgetLedger& ledger) {
  switch (spec.method) {
    case Method::Uniform: return uniform_estimate(space, oracle, spec, ledger);
    case Method::Wwj: return wwj_estimate(space, oracle, spec, ledger);
    case Method::Blocking:
      if (!spec.threshold) throw Error(ErrorKind::InvalidArgument, "blocking needs a threshold");
      return blocking_estimate(space, oracle, spec, *spec.threshold, ledger);
    case Method::Bas:
      switch (spec.aggregate) {
        case Aggregate::Min:
        case Aggregate::Max: return extreme_estimate(space, oracle, spec, ledger);
        case Aggregate::Median: return median_estimate(space, oracle, spec, ledger);
        case Aggregate::GroupByCount:
        case Aggregate::GroupBySum:
          throw Error(ErrorKind::InvalidArgument, "GROUPBY returns one report per group; use groupby_estimate");
        default: return bas_estimate(space, oracle, spec, ledger);
      }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown method");
}

EstimateReport estimate(const CrossSpace& space, const OracleSource& oracle, const QuerySpec& spec) {
  BudgetLedger ledger(spec.budget);
  return estimate(space, oracle, spec, ledger);
}

}  // namespace joinml
