// Acceptance checks: one criterion per invocation, one PASS/FAIL line per criterion.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

#include "joinml/bench.hpp"
#include "joinml/estimators.hpp"
#include "joinml/selection.hpp"
#include "joinml/synth.hpp"
#include "toy.hpp"

using namespace joinml;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Reporting

struct Verdict {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    details.push_back(std::string(ok ? "  ok    " : "  MISS  ") + what);
    pass = pass && ok;
  }
};

template <class E>
std::string str(E e) {
  return std::string(to_string(e));
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Datasets

/// Desk-scale Syn(fnr, fpr): 2000 x 2000, selectivity 2e-3, seed 7.
struct Desk {
  std::string name;
  SynDataset syn;
  Dataset data;
  std::unique_ptr<CrossSpace> space;
  ExactResult truth;
  const OracleSource& oracle() const { return *data.oracle; }
};

std::unique_ptr<Desk> make_desk(double fnr, double fpr, std::size_t n = 2000, double selectivity = 2e-3,
                                std::uint64_t seed = 7) {
  SynParams p;
  p.n1 = n;
  p.n2 = n;
  p.selectivity = selectivity;
  p.fnr = fnr;
  p.fpr = fpr;
  p.seed = seed;
  auto d = std::make_unique<Desk>();
  d->name = "Syn(" + fmt(fnr) + "," + fmt(fpr) + ")";
  d->syn = gen_syn(p);
  d->data = d->syn.dataset();
  SpaceOptions opt;
  opt.group_column = "grp";
  d->space = std::make_unique<CrossSpace>(d->data.space(opt));
  d->truth = exact_evaluate(*d->space, d->oracle());
  return d;
}

const Desk& desk(double fnr, double fpr) {
  static std::map<std::pair<double, double>, std::unique_ptr<Desk>> cache;
  auto& slot = cache[{fnr, fpr}];
  if (!slot) slot = make_desk(fnr, fpr);
  return *slot;
}

const std::vector<std::pair<double, double>> kSynConfigs{{0.0, 0.0}, {0.3, 0.3}, {0.5, 0.5}};

QuerySpec query(const CrossSpace& space, Aggregate a, std::int64_t budget, Method m, std::uint64_t seed = 0) {
  QuerySpec q;
  q.tables = space.table_names();
  q.aggregate = a;
  q.budget = budget;
  q.method = m;
  q.seed = seed;
  if (a == Aggregate::GroupByCount || a == Aggregate::GroupBySum) q.group_key = "grp";
  return q;
}

double truth_of(const ExactResult& t, Aggregate a) { return *t.value(a); }

std::vector<double> estimates(const TrialLog& log) {
  std::vector<double> out;
  for (const auto& t : log.trials) {
    if (t.report && !t.report->undefined) out.push_back(t.report->estimate);
  }
  return out;
}

double mean(const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size()); }

double se_of_mean(const std::vector<double>& x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// 1. Budget contract

Verdict budget_contract() {
  Verdict v;
  std::int64_t runs = 0, worst_excess = std::numeric_limits<std::int64_t>::min();
  std::vector<std::string> violations;

  auto record = [&](const std::string& what, std::int64_t used, std::int64_t ledger_used, std::int64_t b) {
    ++runs;
    const std::int64_t excess = std::max(used, ledger_used) - b;
    worst_excess = std::max(worst_excess, excess);
    if (excess > 0 || used != ledger_used) violations.push_back(what);
  };
  auto guarded = [&](const std::string& what, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::BudgetExhausted) {
        violations.push_back(what + " exhausted its ledger");
      } else {
        violations.push_back(what + " threw " + e.what());
      }
    }
  };

  struct Case {
    std::string name;
    const CrossSpace* space;
    const OracleSource* oracle;
    std::vector<TupleIndex> positives;
    std::vector<std::int64_t> budgets;
  };
  std::vector<toy::Instance> toys;
  for (std::uint64_t s = 0; s < 3; ++s) toys.push_back(toy::random_pair_space(20, 20, 0.1 + 0.05 * s, 700 + s, 3));
  std::vector<Case> cases;
  for (const auto& [fnr, fpr] : kSynConfigs) {
    const auto& d = desk(fnr, fpr);
    cases.push_back({d.name, d.space.get(), &d.oracle(), d.truth.matches, {500, 5000}});
  }
  for (std::size_t i = 0; i < toys.size(); ++i) {
    cases.push_back({"toy" + std::to_string(i), &toys[i].space, &toys[i].oracle(),
                     exact_evaluate(toys[i].space, toys[i].oracle()).matches, {40, 150}});
  }

  const std::vector<Aggregate> linear{Aggregate::Count, Aggregate::Sum, Aggregate::Avg};
  const std::vector<Aggregate> bas_aggs{Aggregate::Count, Aggregate::Sum,    Aggregate::Avg,
                                        Aggregate::Min,   Aggregate::Max,    Aggregate::Median};
  for (const auto& c : cases) {
    for (std::int64_t b : c.budgets) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto run = [&](const QuerySpec& q, const std::string& label) {
          guarded(label, [&] {
            BudgetLedger ledger(q.budget);
            const auto r = estimate(*c.space, *c.oracle, q, ledger);
            record(label, r.budget_used, ledger.used(), q.budget);
          });
        };
        const std::string tag = c.name + " b=" + std::to_string(b) + " seed=" + std::to_string(seed);
        for (Aggregate a : linear) {
          for (Method m : {Method::Uniform, Method::Wwj, Method::Blocking}) {
            auto q = query(*c.space, a, b, m, seed);
            if (m == Method::Blocking) q.threshold = validation_threshold(*c.space, c.positives, seed);
            run(q, tag + " " + str(m) + " " + str(a));
          }
        }
        for (Aggregate a : bas_aggs) run(query(*c.space, a, b, Method::Bas, seed), tag + " bas " + str(a));
        for (Aggregate a : {Aggregate::GroupByCount, Aggregate::GroupBySum}) {
          guarded(tag + " bas " + str(a), [&] {
            const auto q = query(*c.space, a, b, Method::Bas, seed);
            BudgetLedger ledger(b);
            const auto g = groupby_estimate(*c.space, *c.oracle, q, ledger);
            const std::int64_t used = g.groups.empty() ? ledger.used() : g.groups.front().budget_used;
            record(tag + " bas " + str(a), used, ledger.used(), b);
          });
        }
        SelectionSpec s;
        s.budget = b;
        s.seed = seed;
        guarded(tag + " select", [&] {
          BudgetLedger ledger(b);
          const auto r = bas_select(*c.space, *c.oracle, s, ledger);
          record(tag + " select", r.budget_used, ledger.used(), b);
        });
        guarded(tag + " uniform select", [&] {
          const auto r = uniform_select(*c.space, *c.oracle, s);
          record(tag + " uniform select", r.budget_used, r.budget_used, b);
        });
        guarded(tag + " topk", [&] {
          BudgetLedger ledger(b);
          const auto r = topk_heavy_hitters(*c.space, *c.oracle, 2, query(*c.space, Aggregate::GroupByCount, b, Method::Bas, seed),
                                            ledger);
          record(tag + " topk", r.budget_used, ledger.used(), b);
        });
        guarded(tag + " cardinality", [&] {
          BudgetLedger ledger(b);
          const auto r = cardinality_estimate(*c.space, *c.oracle, 0, 1, query(*c.space, Aggregate::Count, b, Method::Bas, seed),
                                              ledger);
          record(tag + " cardinality", r.budget_used, ledger.used(), b);
        });
      }
    }
  }
  for (std::size_t i = 0; i < std::min<std::size_t>(violations.size(), 10); ++i) v.details.push_back("  " + violations[i]);
  v.check(violations.empty(), std::to_string(runs) + " runs, " + std::to_string(violations.size()) +
                                  " violations, max(used - b) = " + std::to_string(worst_excess));
  return v;
}

// ---------------------------------------------------------------------------
// 2. Unbiasedness

Verdict unbiasedness() {
  Verdict v;
  const int reps = 10000;
  for (std::uint64_t i = 0; i < 10; ++i) {
    Rng g(9000 + i);
    const double selectivity = 0.05 + 0.25 * g.uniform();
    auto inst = toy::random_pair_space(20, 20, selectivity, 9100 + i);
    const auto truth = exact_evaluate(inst.space, inst.oracle());
    for (Aggregate a : {Aggregate::Count, Aggregate::Sum}) {
      for (Method m : {Method::Uniform, Method::Wwj, Method::Bas}) {
        std::vector<double> est;
        est.reserve(reps);
        for (int r = 0; r < reps; ++r) {
          auto q = query(inst.space, a, 100, m, static_cast<std::uint64_t>(r));
          q.compute_ci = false;
          if (m == Method::Bas) q.forced_allocation = std::vector<int>{1};
          est.push_back(estimate(inst.space, inst.oracle(), q).estimate);
        }
        const double t = truth_of(truth, a);
        const double z = std::abs(mean(est) - t) / se_of_mean(est);
        v.check(z <= 3.0, "instance " + std::to_string(i) + " " + str(m) + " " + str(a) + ": truth " +
                              fmt(t) + ", mean " + fmt(mean(est)) + ", |z| = " + fmt(z));
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// 3. CI validity

Verdict ci_validity() {
  Verdict v;
  for (const auto& [fnr, fpr] : kSynConfigs) {
    const auto& d = desk(fnr, fpr);
    for (std::int64_t b : {5000, 20000}) {
      const auto log = run_trials(*d.space, d.oracle(), query(*d.space, Aggregate::Count, b, Method::Bas), 500);
      const auto cov = coverage_report(log, static_cast<double>(d.truth.count), 0.95);
      v.check(cov.trials == 500 && cov.coverage >= 0.93 && cov.p95_error_ratio <= 1.0,
              d.name + " b=" + std::to_string(b) + ": coverage " + fmt(cov.coverage) + ", p95 error ratio " +
                  fmt(cov.p95_error_ratio));
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// 4. Blocking baseline failure

Verdict blocking_failure() {
  Verdict v;
  const auto d = make_desk(0.3, 0.0, 1000, 2e-4, 7);
  const double truth = static_cast<double>(d->truth.count);
  const auto positives = d->truth.matches;
  const auto threshold = [&](std::uint64_t seed) { return validation_threshold(*d->space, positives, seed); };
  const std::vector<std::int64_t> budgets{10000, 100000, 400000, 800000, 1000000};
  std::vector<double> p95;
  for (std::int64_t b : budgets) {
    const auto log = run_trials(*d->space, d->oracle(), query(*d->space, Aggregate::Count, b, Method::Blocking), 100, threshold);
    const auto cov = coverage_report(log, truth, 0.95);
    p95.push_back(cov.p95_error_ratio);
    v.details.push_back("  b=" + std::to_string(b) + ": coverage " + fmt(cov.coverage) + ", p95 error ratio " +
                        fmt(cov.p95_error_ratio));
  }
  v.check(p95.back() > 1.0, "p95 error ratio at the largest budget exceeds 1: " + fmt(p95.back()));
  bool increasing = true;
  for (std::size_t i = 1; i < p95.size(); ++i) increasing = increasing && p95[i] > p95[i - 1];
  v.check(increasing, "p95 error ratio strictly increasing over the sweep");
  return v;
}

// ---------------------------------------------------------------------------
// 5. BaS versus WWJ

Verdict bas_vs_wwj() {
  Verdict v;
  auto rmse_of = [](const Desk& d, Method m) {
    const auto log = run_trials(*d.space, d.oracle(), query(*d.space, Aggregate::Count, 20000, m), 100);
    return rmse(log, static_cast<double>(d.truth.count)).value;
  };
  {
    const auto& d = desk(0.5, 0.5);
    const double bas = rmse_of(d, Method::Bas), wwj = rmse_of(d, Method::Wwj);
    v.check(bas < wwj, d.name + ": RMSE bas " + fmt(bas) + " < wwj " + fmt(wwj));
  }
  {
    const auto& d = desk(0.0, 0.0);
    const double bas = rmse_of(d, Method::Bas), wwj = rmse_of(d, Method::Wwj);
    v.check(bas <= 1.10 * wwj, d.name + ": RMSE bas " + fmt(bas) + " <= 1.10 * wwj " + fmt(wwj));
  }
  return v;
}

// ---------------------------------------------------------------------------
// 6. Allocation near-optimality

Verdict allocation_near_optimal() {
  Verdict v;
  const std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};
  for (const auto& [fnr, fpr] : kSynConfigs) {
    const auto& d = desk(fnr, fpr);
    const auto rows = ablation_sweep(*d.space, d.oracle(), query(*d.space, Aggregate::Count, 20000, Method::Bas), ratios,
                                     100, static_cast<double>(d.truth.count));
    double best = kInf, worst = 0.0, adaptive = 0.0;
    std::string table;
    for (const auto& r : rows) {
      table += " " + r.label + "=" + fmt(r.error.value);
      if (r.label == "adaptive") {
        adaptive = r.error.value;
      } else {
        best = std::min(best, r.error.value);
        worst = std::max(worst, r.error.value);
      }
    }
    v.details.push_back("  " + d.name + ":" + table);
    v.check(adaptive <= 1.25 * best && adaptive < worst,
            d.name + ": adaptive " + fmt(adaptive) + " vs best fixed " + fmt(best) + " (ratio " + fmt(adaptive / best) +
                "), worst fixed " + fmt(worst));
  }
  return v;
}

// ---------------------------------------------------------------------------
// 7. Optimizer against exhaustive search

Verdict optimizer_oracle() {
  Verdict v;
  Rng rng(77);
  int within = 0;
  double worst = 1.0;
  for (int c = 0; c < 50; ++c) {
    const double fnr = 0.5 * rng.uniform(), fpr = 0.5 * rng.uniform();
    auto d = make_desk(fnr, fpr, 150, 0.01 + 0.04 * rng.uniform(), 5000 + static_cast<std::uint64_t>(c));
    const int k = 2 + static_cast<int>(rng.below(7));
    const std::int64_t budget = 1000 + static_cast<std::int64_t>(rng.below(4000));
    const auto strat = stratify(*d->space, 0.2, budget, k);
    BudgetLedger ledger(budget);
    Rng prng = rng.split(static_cast<std::uint64_t>(c));
    const std::int64_t b1 = std::max<std::int64_t>(budget / 10, 2 * (strat.K() + 1));
    const auto pr = pilot(*d->space, d->oracle(), ledger, strat, b1, prng);
    const auto problem = allocation_problem(strat, c % 2 == 0 ? pr.count_var : pr.sum_var);
    const std::int64_t b2 = budget - pr.total();
    const auto a = optimize_allocation(problem, b2);
    const auto ex = exhaustive_allocation(problem, b2, [&](const BlockMask& m) { return estimate_mse(problem, m, b2); });
    const double mse = estimate_mse(problem, mask_from(a.blocked, strat.K()), b2);
    const double ratio = ex.objective > 0.0 ? mse / ex.objective : (mse == 0.0 ? 1.0 : kInf);
    worst = std::max(worst, ratio);
    if (ratio <= 1.01) ++within;
  }
  v.check(within == 50, std::to_string(within) + " / 50 cases within 1% of the exhaustive minimum (worst ratio " +
                            fmt(worst) + ")");
  return v;
}

// ---------------------------------------------------------------------------
// 8. Selection recall guarantee

Verdict selection_recall() {
  Verdict v;
  for (const auto& [fnr, fpr] : std::vector<std::pair<double, double>>{{0.0, 0.0}, {0.3, 0.3}}) {
    const auto& d = desk(fnr, fpr);
    const std::set<TupleIndex> truth(d.truth.matches.begin(), d.truth.matches.end());
    auto score = [&](const SelectionResult& r, double& recall, double& precision) {
      std::size_t hit = 0;
      for (TupleIndex t : r.selected) hit += truth.count(t);
      recall = static_cast<double>(hit) / static_cast<double>(truth.size());
      precision = r.selected.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(r.selected.size());
    };
    int met = 0;
    double bas_prec = 0.0, uni_prec = 0.0;
    const int reps = 200;
    for (int s = 0; s < reps; ++s) {
      SelectionSpec spec;
      spec.recall = 0.9;
      spec.confidence = 0.95;
      spec.budget = 20000;
      spec.seed = static_cast<std::uint64_t>(s);
      double recall = 0.0, precision = 0.0;
      score(bas_select(*d.space, d.oracle(), spec), recall, precision);
      met += recall >= 0.9 ? 1 : 0;
      bas_prec += precision;
      score(uniform_select(*d.space, d.oracle(), spec), recall, precision);
      uni_prec += precision;
    }
    const double rate = static_cast<double>(met) / reps;
    v.check(rate >= 0.92, d.name + ": P[recall >= 0.9] = " + fmt(rate));
    v.check(bas_prec >= uni_prec,
            d.name + ": mean precision bas " + fmt(bas_prec / reps) + " >= uniform " + fmt(uni_prec / reps));
  }
  return v;
}

// ---------------------------------------------------------------------------
// 9. Bound arithmetic

Verdict bound_arithmetic() {
  Verdict v;
  Rng rng(99);
  double worst = 0.0;
  auto rel = [](double a, long double b) {
    return b == 0.0L ? std::abs(a) : static_cast<double>(std::abs((static_cast<long double>(a) - b) / b));
  };
  for (int i = 0; i < 100; ++i) {
    const long double mu = 1000.0L * rng.uniform();
    const long double s2 = 500.0L * rng.uniform();
    const long double n = 1.0L + std::floor(1000.0L * rng.uniform());
    const long double p = 0.5L + 0.499L * rng.uniform();
    const long double gamma = 0.01L + 0.98L * rng.uniform();
    const long double count_b = 200.0L * rng.uniform();
    const long double expect_ub = mu + std::sqrt(s2) / std::sqrt(n) * std::sqrt(2.0L * std::log(2.0L / (1.0L - p)));
    long double expect_g = gamma - (1.0L - gamma) * count_b / expect_ub;
    expect_g = std::min(gamma, std::max(0.0L, expect_g));
    const double got_ub = ub(static_cast<double>(mu), static_cast<double>(s2), static_cast<double>(n), static_cast<double>(p));
    const double got_g = gamma_s_required(static_cast<double>(gamma), static_cast<double>(count_b), static_cast<double>(mu),
                                          static_cast<double>(s2), static_cast<double>(n), static_cast<double>(p));
    worst = std::max({worst, rel(got_ub, expect_ub), expect_g == 0.0L ? std::abs(got_g) : rel(got_g, expect_g)});
  }
  v.check(worst <= 1e-9, "max relative deviation over 100 draws: " + fmt(worst));
  return v;
}

// ---------------------------------------------------------------------------
// 10. Determinism

std::string bench_suite_log() {
  const auto d = make_desk(0.3, 0.3, 400, 5e-3, 21);
  nlohmann::json out = nlohmann::json::array();
  for (Method m : {Method::Uniform, Method::Wwj, Method::Blocking, Method::Bas}) {
    std::vector<Aggregate> aggs{Aggregate::Count, Aggregate::Sum, Aggregate::Avg};
    if (m == Method::Bas) {
      for (Aggregate a : {Aggregate::Min, Aggregate::Max, Aggregate::Median}) aggs.push_back(a);
    }
    for (Aggregate a : aggs) {
      const auto log = run_trials(*d->space, d->oracle(), query(*d->space, a, 2000, m, 11), 10,
                                  [&](std::uint64_t s) { return validation_threshold(*d->space, d->truth.matches, s); });
      out.push_back(log);
    }
  }
  auto q = query(*d->space, Aggregate::GroupByCount, 2000, Method::Bas, 11);
  const auto g = groupby_estimate(*d->space, d->oracle(), q);
  out.push_back({{"groups", g.groups}, {"undiscovered", g.undiscovered}});
  SelectionSpec s;
  s.budget = 2000;
  s.seed = 11;
  nlohmann::json sel = bas_select(*d->space, d->oracle(), s);
  out.push_back(sel);
  nlohmann::json top = topk_heavy_hitters(*d->space, d->oracle(), 2, q);
  out.push_back(top);
  const auto rows = ablation_sweep(*d->space, d->oracle(), query(*d->space, Aggregate::Count, 2000, Method::Bas, 11),
                                   {0.1, 0.3}, 5, static_cast<double>(d->truth.count));
  out.push_back(sweep_csv(rows));
  return out.dump();
}

Verdict determinism() {
  Verdict v;
  const std::string a = bench_suite_log();
  const std::string b = bench_suite_log();
  v.check(a == b, "two runs of the bench suite: " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
                      " bytes, " + (a == b ? "identical" : "different"));
  return v;
}

// ---------------------------------------------------------------------------
// 11. MEDIAN, MIN/MAX and GROUPBY handlers

Verdict handlers() {
  Verdict v;
  for (std::uint64_t i = 0; i < 5; ++i) {
    auto inst = toy::random_pair_space(20, 20, 0.1 + 0.02 * static_cast<double>(i), 11000 + i, 3);
    const auto truth = exact_evaluate(inst.space, inst.oracle());
    const std::string tag = "instance " + std::to_string(i);

    int covered = 0;
    bool max_below = true, max_covered = true;
    for (std::uint64_t s = 0; s < 500; ++s) {
      const auto med = estimate(inst.space, inst.oracle(), query(inst.space, Aggregate::Median, 150, Method::Bas, s));
      if (med.ci_low <= *truth.median && *truth.median <= med.ci_high) ++covered;
      const auto mx = estimate(inst.space, inst.oracle(), query(inst.space, Aggregate::Max, 150, Method::Bas, s));
      if (!mx.undefined && mx.estimate > *truth.max) max_below = false;
      if (!(mx.ci_low <= *truth.max && *truth.max <= mx.ci_high)) max_covered = false;
    }
    v.check(covered >= 465, tag + " MEDIAN coverage " + fmt(covered / 500.0));
    v.check(max_below && max_covered, tag + " MAX never above truth and CI always covers it over 500 runs");

    auto worst = [&](const GroupByResult& g) {
      double w = 0.0;
      for (const auto& [name, count] : truth.group_count) {
        double est = 0.0;
        for (const auto& r : g.groups) {
          if (*r.group == name) est = r.estimate;
        }
        w = std::max(w, std::abs(est - static_cast<double>(count)) / static_cast<double>(count));
      }
      return w;
    };
    double adaptive = 0.0, none = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      auto q = query(inst.space, Aggregate::GroupByCount, 150, Method::Bas, s);
      q.compute_ci = false;
      adaptive += worst(groupby_estimate(inst.space, inst.oracle(), q));
      q.forced_allocation = std::vector<int>{};
      none += worst(groupby_estimate(inst.space, inst.oracle(), q));
    }
    v.check(adaptive <= none, tag + " GROUPBY mean max relative error adaptive " + fmt(adaptive / 100) +
                                  " <= no blocking " + fmt(none / 100));
  }
  return v;
}

const std::map<int, std::pair<std::string, std::function<Verdict()>>>& criteria() {
  static const std::map<int, std::pair<std::string, std::function<Verdict()>>> table{
      {1, {"budget contract", budget_contract}},
      {2, {"unbiasedness of COUNT and SUM", unbiasedness}},
      {3, {"BaS interval validity", ci_validity}},
      {4, {"blocking baseline loses validity as the budget grows", blocking_failure}},
      {5, {"BaS versus WWJ", bas_vs_wwj}},
      {6, {"adaptive allocation versus fixed blocking ratios", allocation_near_optimal}},
      {7, {"allocation optimizer versus exhaustive search", optimizer_oracle}},
      {8, {"selection recall guarantee", selection_recall}},
      {9, {"bound arithmetic", bound_arithmetic}},
      {10, {"determinism", determinism}},
      {11, {"MEDIAN, MAX and GROUPBY handlers", handlers}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> selected;
  bool documented = false;
  app.add_option("--criterion", selected, "Criteria to run (default: all)")->check(CLI::Range(1, 11));
  app.add_flag("--documented-failure", documented, "A failure of this criterion is known and recorded; exit 0");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) {
    for (const auto& [id, entry] : criteria()) selected.push_back(id);
  }

  bool all_pass = true;
  for (int id : selected) {
    const auto& [name, fn] = criteria().at(id);
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.check(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& line : v.details) std::cout << line << '\n';
    std::cout << "criterion " << id << " (" << name << "): " << (v.pass ? "PASS" : "FAIL")
              << (!v.pass && documented ? " (documented)" : "") << " [" << fmt(secs) << " s]" << std::endl;
    all_pass = all_pass && v.pass;
  }
  return all_pass || documented ? 0 : 1;
}
