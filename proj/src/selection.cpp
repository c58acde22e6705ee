#include "joinml/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace joinml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double bound_multiplier(double p) {
  if (p >= 1.0) return kInf;
  return std::sqrt(2.0 * std::log(2.0 / (1.0 - p)));
}

QuerySpec count_spec(const SelectionSpec& s) {
  QuerySpec q;
  q.aggregate = Aggregate::Count;
  q.budget = s.budget;
  q.confidence = s.confidence;
  q.alpha = s.alpha;
  q.pilot_fraction = s.pilot_fraction;
  q.seed = s.seed;
  q.strata_hint = s.strata_hint;
  return q;
}

// Largest candidate score whose recall bound reaches `target`; nullopt when none does.
std::optional<double> certify_threshold(const std::vector<std::vector<Draw>>& strata, double target, double c) {
  std::vector<double> candidates;
  for (const auto& s : strata) {
    for (const auto& d : s) {
      if (d.match) candidates.push_back(d.score);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  // The bound is non-increasing in tau, so the certified candidates form a prefix.
  std::size_t lo = 0, hi = candidates.size();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (recall_lower_bound(strata, candidates[mid], c) >= target) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  if (lo == 0) return std::nullopt;
  return candidates[lo - 1];
}

// Every tuple outside `excluded` strata with score >= tau.
std::vector<TupleIndex> tuples_above(const CrossSpace& space, double tau, const Stratification* strat,
                                     const BlockMask* excluded) {
  std::vector<TupleIndex> out;
  auto keep = [&](TupleIndex t) {
    if (!strat) return true;
    return !(*excluded)[static_cast<std::size_t>(strat->stratum_of(t))];
  };
  if (space.size() > kDefaultMaterializationCap) throw Error(ErrorKind::CapExceeded, "selection scans the cross product");
  if (space.arity() == 2) {
    const auto& h = space.hop(0);
    for (std::size_t r = 0; r < h.rows(); ++r) {
      const auto row = h.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        const TupleIndex t = r * h.cols() + c;
        if (row[c] >= tau && keep(t)) out.push_back(t);
      }
    }
  } else {
    for (TupleIndex t = 0; t < space.size(); ++t) {
      if (space.tuple_score(t) >= tau && keep(t)) out.push_back(t);
    }
  }
  return out;
}

}  // namespace

double ub(double mu, double sigma2, double n, double p) {
  if (sigma2 < 0.0 || !(n > 0.0)) throw Error(ErrorKind::InvalidArgument, "ub needs sigma^2 >= 0 and n > 0");
  if (sigma2 == 0.0) return mu;
  return mu + std::sqrt(sigma2 / n) * bound_multiplier(p);
}

double gamma_s_required(double gamma, double count_b, double upper) {
  if (count_b <= 0.0) return gamma;
  if (!(upper > 0.0)) return 0.0;
  return std::clamp(gamma - (1.0 - gamma) * count_b / upper, 0.0, gamma);
}

double gamma_s_required(double gamma, double count_b, double mu, double sigma2, double n, double p) {
  return gamma_s_required(gamma, count_b, ub(mu, sigma2, n, p));
}

void SelectionSpec::validate() const {
  if (!(recall > 0.0 && recall < 1.0)) throw Error(ErrorKind::InvalidArgument, "recall target must lie in (0,1)");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorKind::InvalidArgument, "confidence must lie in (0,1)");
  if (budget < 10) throw Error(ErrorKind::InvalidArgument, "budget must be at least 10");
}

double recall_lower_bound(const std::vector<std::vector<Draw>>& strata, double tau, double c) {
  double a = 0.0, b = 0.0, var_a = 0.0, var_b = 0.0;
  std::vector<double> xa, xb;
  for (const auto& s : strata) {
    if (s.empty()) continue;
    xa.clear();
    xb.clear();
    for (const auto& d : s) {
      const double w = d.match ? 1.0 / d.prob : 0.0;
      xa.push_back(d.score >= tau ? w : 0.0);
      xb.push_back(d.score >= tau ? 0.0 : w);
    }
    const auto [ma, va] = moments(xa);
    const auto [mb, vb] = moments(xb);
    const double n = static_cast<double>(s.size());
    a += ma;
    b += mb;
    var_a += va / n;
    var_b += vb / n;
  }
  const double a_lb = std::max(0.0, a - c * std::sqrt(var_a));
  const double b_ub = b + c * std::sqrt(var_b);
  if (!(a_lb + b_ub > 0.0)) return 0.0;
  return a_lb / (a_lb + b_ub);
}

SelectionResult bas_select(const CrossSpace& space, const OracleSource& oracle, const SelectionSpec& spec,
                           BudgetLedger& ledger) {
  spec.validate();
  const double gamma = spec.recall;
  const double p = spec.confidence;

  auto policy = [gamma, p](const Stratification& strat, const PilotResult& pilot, std::int64_t b2) {
    const AllocationProblem problem = allocation_problem(strat, pilot.count_var);
    return optimize_allocation(problem, b2, [&](const BlockMask& m) {
      double count_b = 0.0;
      int k = 0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i]) {
          count_b += pilot.count_mean[i];
        } else if (strat.strata[i].size > 0) {
          ++k;
        }
      }
      if (k == 0) return -kInf;
      const double pk = (p + k - 1.0) / k;
      double upper = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m[i] || strat.strata[i].size == 0) continue;
        const double n = budget_assign(b2, problem, m, static_cast<int>(i));
        if (pilot.count_var[i] > 0.0 && n <= 0.0) return gamma;
        upper += n > 0.0 ? ub(pilot.count_mean[i], pilot.count_var[i], n, pk) : pilot.count_mean[i];
      }
      if (!(upper > 0.0)) return count_b > 0.0 ? -kInf : gamma;
      return gamma - (1.0 - gamma) * count_b / upper;
    });
  };
  const BasRun run = run_bas(space, oracle, count_spec(spec), ledger, policy);

  SelectionResult out;
  out.allocation = run.allocation.blocked;
  out.budget_used = run.charged;
  const BlockMask mask = mask_from(run.allocation.blocked, run.strat.K());
  for (const auto& stratum : run.blocked) {
    for (const auto& d : stratum) {
      if (d.match) {
        out.count_blocked += 1.0;
        out.selected.push_back(d.tuple);
      }
    }
  }

  // Three events share the failure probability: the count bound and the two recall bounds.
  const double p3 = (p + 2.0) / 3.0;
  double count_s = 0.0, var_s = 0.0;
  for (const auto& stratum : run.draws) {
    if (stratum.empty()) continue;
    std::vector<double> x;
    for (const auto& d : stratum) x.push_back(d.match ? 1.0 / d.prob : 0.0);
    const auto [m, v] = moments(x);
    count_s += m;
    var_s += v / static_cast<double>(x.size());
  }
  out.count_sampled_ub = ub(count_s, var_s, 1.0, p3);
  const double raw = out.count_blocked > 0.0 && out.count_sampled_ub > 0.0
                         ? gamma - (1.0 - gamma) * out.count_blocked / out.count_sampled_ub
                         : (out.count_blocked > 0.0 ? 0.0 : gamma);
  out.gamma_s = std::clamp(raw, 0.0, gamma);

  if (raw > 0.0) {
    const auto tau = certify_threshold(run.draws, out.gamma_s, bound_multiplier(p3));
    if (tau) {
      out.threshold = *tau;
    } else {
      out.threshold = 0.0;
      out.recall_infeasible = true;
    }
    const auto extra = tuples_above(space, out.threshold, &run.strat, &mask);
    out.selected.insert(out.selected.end(), extra.begin(), extra.end());
  }
  std::sort(out.selected.begin(), out.selected.end());
  out.selected.erase(std::unique(out.selected.begin(), out.selected.end()), out.selected.end());
  return out;
}

SelectionResult bas_select(const CrossSpace& space, const OracleSource& oracle, const SelectionSpec& spec) {
  BudgetLedger ledger(spec.budget);
  return bas_select(space, oracle, spec, ledger);
}

SelectionResult uniform_select(const CrossSpace& space, const OracleSource& oracle, const SelectionSpec& spec) {
  spec.validate();
  BudgetLedger ledger(spec.budget);
  Rng rng = Rng(spec.seed).split(4);
  std::vector<std::vector<Draw>> draws(1);
  const double prob = 1.0 / static_cast<double>(space.size());
  for (std::int64_t j = 0; j < spec.budget; ++j) {
    Draw d;
    d.tuple = rng.below(space.size());
    d.prob = prob;
    d.match = space.evaluate(oracle, d.tuple, ledger);
    d.score = space.tuple_score(d.tuple);
    draws[0].push_back(d);
  }
  SelectionResult out;
  out.budget_used = ledger.used();
  out.gamma_s = spec.recall;
  const auto tau = certify_threshold(draws, spec.recall, bound_multiplier((spec.confidence + 1.0) / 2.0));
  if (tau) {
    out.threshold = *tau;
  } else {
    out.threshold = 0.0;
    out.recall_infeasible = true;
  }
  out.selected = tuples_above(space, out.threshold, nullptr, nullptr);
  return out;
}

// ---------------------------------------------------------------------------

TopKResult topk_heavy_hitters(const CrossSpace& space, const OracleSource& oracle, int k, const QuerySpec& spec,
                              BudgetLedger& ledger) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "K must be positive");
  const std::size_t groups = space.group_names().size();
  if (groups == 0) throw Error(ErrorKind::InvalidArgument, "the join space has no entity column");
  QuerySpec q = spec;
  q.aggregate = Aggregate::GroupByCount;

  auto policy = [groups, k](const Stratification& strat, const PilotResult& pilot, std::int64_t b2) {
    const auto gm = detail::group_moments(pilot.draws, groups, false);
    const auto problem = allocation_problem(strat, pilot.count_var);
    std::vector<double> se(groups, 0.0);
    for (std::size_t g = 0; g < groups; ++g) {
      double v = 0.0;
      for (std::size_t i = 0; i < pilot.draws.size(); ++i) {
        if (!pilot.draws[i].empty()) v += gm.var[i][g] / static_cast<double>(pilot.draws[i].size());
      }
      se[g] = std::sqrt(v);
    }
    std::vector<std::size_t> order(groups);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gm.total[a] > gm.total[b]; });
    const double kth = gm.total[order[std::min<std::size_t>(static_cast<std::size_t>(k), groups) - 1]];
    std::vector<std::size_t> near;
    for (std::size_t r = 0; r < groups; ++r) {
      const std::size_t g = order[r];
      const bool boundary = r + 1 == static_cast<std::size_t>(k) || r == static_cast<std::size_t>(k);
      if (boundary || std::abs(gm.total[g] - kth) <= 2.0 * se[g]) near.push_back(g);
    }
    return optimize_allocation(problem, b2, [&](const BlockMask& m) {
      double total = 0.0;
      for (std::size_t i = 0; i < strat.strata.size(); ++i) {
        if (m[i] || strat.strata[i].size == 0) continue;
        double v = 0.0;
        for (std::size_t g : near) v += gm.var[i][g];
        if (v == 0.0) continue;
        const double n = budget_assign(b2, problem, m, static_cast<int>(i));
        if (n <= 0.0) return kInf;
        total += v / n;
      }
      return total;
    });
  };
  const BasRun run = run_bas(space, oracle, q, ledger, policy);
  const auto est = detail::grouped_estimate(run, groups, false, q);

  TopKResult out;
  out.allocation = run.allocation.blocked;
  out.budget_used = run.charged;
  for (std::size_t g = 0; g < groups; ++g) {
    if (!est.discovered[g]) continue;
    out.ranked.push_back({space.group_names()[g], est.ci[g].estimate, est.ci[g].low, est.ci[g].high});
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const auto& a, const auto& b) { return a.estimate > b.estimate; });
  const auto kk = static_cast<std::size_t>(k);
  for (std::size_t r = 0; r < std::min(kk, out.ranked.size()); ++r) out.top.push_back(out.ranked[r].entity);
  if (out.ranked.size() < kk) {
    out.certified = false;
  } else if (out.ranked.size() == kk) {
    out.certified = std::all_of(run.draws.begin(), run.draws.end(), [](const auto& s) { return s.empty(); });
  } else {
    out.certified = out.ranked[kk - 1].ci_low > out.ranked[kk].ci_high;
  }
  return out;
}

TopKResult topk_heavy_hitters(const CrossSpace& space, const OracleSource& oracle, int k, const QuerySpec& spec) {
  BudgetLedger ledger(spec.budget);
  return topk_heavy_hitters(space, oracle, k, spec, ledger);
}

void to_json(nlohmann::json& j, const SelectionResult& r) {
  j = nlohmann::json{{"selected_count", r.selected.size()},
                     {"threshold", number_to_json(r.threshold)},
                     {"gamma_s", r.gamma_s},
                     {"count_blocked", r.count_blocked},
                     {"count_sampled_ub", number_to_json(r.count_sampled_ub)},
                     {"allocation", r.allocation},
                     {"budget_used", r.budget_used},
                     {"recall_infeasible", r.recall_infeasible}};
}

void to_json(nlohmann::json& j, const TopKResult& r) {
  auto ranked = nlohmann::json::array();
  for (const auto& e : r.ranked) {
    ranked.push_back({{"entity", e.entity},
                      {"estimate", number_to_json(e.estimate)},
                      {"ci_low", number_to_json(e.ci_low)},
                      {"ci_high", number_to_json(e.ci_high)}});
  }
  j = nlohmann::json{{"top", r.top},
                     {"certified", r.certified},
                     {"ranked", ranked},
                     {"allocation", r.allocation},
                     {"budget_used", r.budget_used}};
}

}  // namespace joinml
