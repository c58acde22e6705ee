// joinml command-line interface.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "joinml/bas.hpp"
#include "joinml/bench.hpp"
#include "joinml/io.hpp"
#include "joinml/selection.hpp"
#include "joinml/synth.hpp"

namespace fs = std::filesystem;
using namespace joinml;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kUndefined = 2;

struct QueryFlags {
  std::string dataset;
  std::string config;
  std::string method;
  std::string aggregate;
  std::string group_key;
  std::optional<std::int64_t> budget;
  std::optional<double> confidence;
  std::optional<double> alpha;
  std::optional<double> pilot_fraction;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  int reps = 100;
  std::string out;
};

void add_query_flags(CLI::App* cmd, QueryFlags& f, bool with_reps) {
  cmd->add_option("--dataset", f.dataset, "Dataset directory");
  cmd->add_option("--config", f.config, "JSON config (QuerySpec fields plus \"dataset\")");
  cmd->add_option("--method", f.method, "uniform | wwj | blocking | bas");
  cmd->add_option("--aggregate", f.aggregate, "COUNT | SUM | AVG | MIN | MAX | MEDIAN | GROUPBY-COUNT | GROUPBY-SUM");
  cmd->add_option("--group-key", f.group_key, "Grouping column for GROUPBY / TopK");
  cmd->add_option("--budget", f.budget, "Oracle budget b");
  cmd->add_option("--confidence", f.confidence, "Confidence level p");
  cmd->add_option("--alpha", f.alpha, "Maximum blocking ratio");
  cmd->add_option("--pilot-fraction", f.pilot_fraction, "Pilot share of the budget");
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--threshold", f.threshold, "Blocking threshold tau");
  if (with_reps) cmd->add_option("--reps", f.reps, "Repetitions");
  cmd->add_option("--out", f.out, "Output file");
}

struct Loaded {
  Dataset data;
  QuerySpec spec;
  fs::path dir;
};

Loaded load(const QueryFlags& f) {
  nlohmann::json cfg = nlohmann::json::object();
  if (!f.config.empty()) cfg = io::read_json(f.config);
  Loaded l;
  l.spec = cfg.get<QuerySpec>();
  std::string dir = f.dataset;
  if (dir.empty() && cfg.contains("dataset")) dir = cfg.at("dataset").get<std::string>();
  if (dir.empty()) throw Error(ErrorKind::InvalidArgument, "--dataset is required");
  l.dir = dir;
  l.data = io::load_dataset(l.dir);
  if (!f.method.empty()) l.spec.method = parse_method(f.method);
  if (!f.aggregate.empty()) l.spec.aggregate = parse_aggregate(f.aggregate);
  if (!f.group_key.empty()) l.spec.group_key = f.group_key;
  if (f.budget) l.spec.budget = *f.budget;
  if (f.confidence) l.spec.confidence = *f.confidence;
  if (f.alpha) l.spec.alpha = *f.alpha;
  if (f.pilot_fraction) l.spec.pilot_fraction = *f.pilot_fraction;
  if (f.seed) l.spec.seed = *f.seed;
  if (f.threshold) l.spec.threshold = *f.threshold;
  if (l.spec.tables.empty()) {
    for (const auto& t : l.data.tables) l.spec.tables.push_back(t->name);
  }
  return l;
}

CrossSpace make_space(const Loaded& l) {
  SpaceOptions opt = io::space_options(l.data);
  if (l.spec.group_key) opt.group_column = l.spec.group_key;
  return l.data.space(opt);
}

void emit(const std::string& out, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    io::write_text(out, text);
  }
}

// Oracle cache shared across invocations when JOINML_CACHE_DIR is set.
class CacheScope {
 public:
  CacheScope(BudgetLedger& ledger, const fs::path& dataset) : ledger_(ledger) {
    if (const char* dir = std::getenv("JOINML_CACHE_DIR")) {
      path_ = fs::path(dir) / (fs::absolute(dataset).lexically_normal().filename().string() + ".oracle.csv");
      ledger_.load_cache(path_);
    }
  }
  ~CacheScope() {
    if (!path_.empty()) ledger_.persist(path_);
  }

 private:
  BudgetLedger& ledger_;
  fs::path path_;
};

double truth_for(const CrossSpace& space, const OracleSource& oracle, Aggregate a, bool& defined) {
  const auto exact = exact_evaluate(space, oracle);
  const auto v = exact.value(a);
  defined = v.has_value();
  return v.value_or(0.0);
}

int cmd_gen_syn(const SynParams& p, const std::string& out) {
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "--out directory is required");
  const auto data = gen_syn(p);
  io::write_syn_dataset(out, data);
  std::cout << "wrote " << data.positives.size() << " positive pairs to " << out << "\n";
  return kOk;
}

int cmd_exact(const QueryFlags& f) {
  const auto l = load(f);
  const auto space = make_space(l);
  const auto r = exact_evaluate(space, *l.data.oracle);
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"count", r.count}, {"sum", r.sum},       {"avg", opt(r.avg)},
                      {"min", opt(r.min)}, {"max", opt(r.max)}, {"median", opt(r.median)}};
  if (!r.group_count.empty()) {
    j["group_count"] = r.group_count;
    j["group_sum"] = r.group_sum;
  }
  emit(f.out, j);
  return kOk;
}

int cmd_estimate(const QueryFlags& f) {
  auto l = load(f);
  l.spec.validate();
  const auto space = make_space(l);
  BudgetLedger ledger(l.spec.budget);
  CacheScope cache(ledger, l.dir);
  if (l.spec.aggregate == Aggregate::GroupByCount || l.spec.aggregate == Aggregate::GroupBySum) {
    const auto r = groupby_estimate(space, *l.data.oracle, l.spec, ledger);
    emit(f.out, {{"groups", r.groups}, {"undiscovered", r.undiscovered}});
    return r.groups.empty() ? kUndefined : kOk;
  }
  const auto r = estimate(space, *l.data.oracle, l.spec, ledger);
  emit(f.out, r);
  return r.undefined ? kUndefined : kOk;
}

int cmd_bench(const QueryFlags& f) {
  auto l = load(f);
  l.spec.validate();
  const auto space = make_space(l);
  const auto& oracle = *l.data.oracle;
  bool defined = false;
  const double truth = truth_for(space, oracle, l.spec.aggregate, defined);
  ThresholdFn threshold;
  std::vector<TupleIndex> positives;
  if (l.spec.method == Method::Blocking && !l.spec.threshold) {
    positives = exact_evaluate(space, oracle).matches;
    threshold = [&](std::uint64_t seed) { return validation_threshold(space, positives, seed); };
  }
  const auto log = run_trials(space, oracle, l.spec, f.reps, threshold);
  nlohmann::json summary = {{"truth", defined ? nlohmann::json(truth) : nlohmann::json(nullptr)}};
  if (defined) {
    const auto e = rmse(log, truth);
    const auto c = coverage_report(log, truth, l.spec.confidence);
    summary["rmse"] = e.value;
    summary["relative"] = e.relative;
    summary["undefined_count"] = e.undefined_count;
    summary["coverage"] = c.coverage;
    summary["error_ratio_percentile"] = number_to_json(c.p95_error_ratio);
  }
  std::int64_t max_used = 0;
  for (const auto& t : log.trials) {
    if (t.report) max_used = std::max(max_used, t.report->budget_used);
  }
  summary["max_budget_used"] = max_used;
  if (!f.out.empty()) emit(f.out, log);
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

int cmd_sweep(const QueryFlags& f, const std::vector<double>& ratios) {
  auto l = load(f);
  l.spec.validate();
  const auto space = make_space(l);
  bool defined = false;
  const double truth = truth_for(space, *l.data.oracle, l.spec.aggregate, defined);
  if (!defined) throw Error(ErrorKind::InvalidArgument, "the exact aggregate is undefined on this dataset");
  const auto rows = ablation_sweep(space, *l.data.oracle, l.spec, ratios, f.reps, truth);
  const std::string csv = sweep_csv(rows);
  if (f.out.empty()) {
    std::cout << csv;
  } else {
    io::write_text(f.out, csv);
  }
  return kOk;
}

int cmd_select(const QueryFlags& f, double recall, bool uniform) {
  const auto l = load(f);
  const auto space = make_space(l);
  SelectionSpec s;
  s.recall = recall;
  s.confidence = l.spec.confidence;
  s.budget = l.spec.budget;
  s.alpha = l.spec.alpha;
  s.pilot_fraction = l.spec.pilot_fraction;
  s.seed = l.spec.seed;
  s.strata_hint = l.spec.strata_hint;
  SelectionResult r;
  if (uniform) {
    r = uniform_select(space, *l.data.oracle, s);
  } else {
    BudgetLedger ledger(s.budget);
    CacheScope cache(ledger, l.dir);
    r = bas_select(space, *l.data.oracle, s, ledger);
  }
  nlohmann::json j = r;
  auto keys = nlohmann::json::array();
  for (TupleIndex t : r.selected) keys.push_back(space.key(t));
  j["selected"] = std::move(keys);
  emit(f.out, j);
  return r.recall_infeasible ? kUndefined : kOk;
}

int cmd_topk(const QueryFlags& f, int k) {
  auto l = load(f);
  if (!l.spec.group_key) {
    const auto opt = io::space_options(l.data);
    if (opt.group_column) l.spec.group_key = opt.group_column;
  }
  const auto space = make_space(l);
  BudgetLedger ledger(l.spec.budget);
  CacheScope cache(ledger, l.dir);
  const auto r = topk_heavy_hitters(space, *l.data.oracle, k, l.spec, ledger);
  emit(f.out, r);
  return kOk;
}

int cmd_cardinality(const QueryFlags& f, std::size_t first, std::size_t last) {
  auto l = load(f);
  const auto space = make_space(l);
  BudgetLedger ledger(l.spec.budget);
  CacheScope cache(ledger, l.dir);
  const auto r = cardinality_estimate(space, *l.data.oracle, first, last, l.spec, ledger);
  emit(f.out, r);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Approximate semantic join aggregates under an Oracle budget"};
  app.require_subcommand(1);

  SynParams syn;
  std::string syn_out;
  auto* gen = app.add_subcommand("gen-syn", "Generate a Syn(fnr, fpr) dataset");
  gen->add_option("--n1", syn.n1, "Left table size");
  gen->add_option("--n2", syn.n2, "Right table size");
  gen->add_option("--selectivity", syn.selectivity, "Fraction of matching pairs");
  gen->add_option("--fnr", syn.fnr, "Share of positives with inverted scores");
  gen->add_option("--fpr", syn.fpr, "Share of negatives with inverted scores");
  gen->add_option("--groups", syn.groups, "Distinct values of the grp column");
  gen->add_option("--seed", syn.seed, "Generator seed");
  gen->add_option("--out", syn_out, "Output directory")->required();

  QueryFlags exact_f, est_f, bench_f, sweep_f, select_f, topk_f, card_f;
  add_query_flags(app.add_subcommand("exact", "Exact evaluation by enumeration"), exact_f, false);
  add_query_flags(app.add_subcommand("estimate", "One approximate query"), est_f, false);
  add_query_flags(app.add_subcommand("bench", "Repeated trials with RMSE and coverage"), bench_f, true);

  auto* sweep = app.add_subcommand("sweep", "Fixed blocking ratios versus adaptive allocation");
  add_query_flags(sweep, sweep_f, true);
  std::vector<double> ratios{0.1, 0.2, 0.3, 0.4, 0.5};
  sweep->add_option("--ratios", ratios, "Blocking ratios")->delimiter(',');

  auto* select = app.add_subcommand("select", "Selection with a recall target");
  add_query_flags(select, select_f, false);
  double recall = 0.9;
  bool uniform = false;
  select->add_option("--recall", recall, "Recall target gamma");
  select->add_flag("--uniform", uniform, "Uniform-sample threshold baseline");

  auto* topk = app.add_subcommand("topk", "TopK heavy hitters");
  add_query_flags(topk, topk_f, false);
  int k = 3;
  topk->add_option("--k", k, "Number of entities");

  auto* card = app.add_subcommand("cardinality", "COUNT of a contiguous sub-join");
  add_query_flags(card, card_f, false);
  std::size_t first = 0, last = 1;
  card->add_option("--first", first, "First table of the sub-chain");
  card->add_option("--last", last, "Last table of the sub-chain");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_syn(syn, syn_out);
    if (app.got_subcommand("exact")) return cmd_exact(exact_f);
    if (app.got_subcommand("estimate")) return cmd_estimate(est_f);
    if (app.got_subcommand("bench")) return cmd_bench(bench_f);
    if (*sweep) return cmd_sweep(sweep_f, ratios);
    if (*select) return cmd_select(select_f, recall, uniform);
    if (*topk) return cmd_topk(topk_f, k);
    if (*card) return cmd_cardinality(card_f, first, last);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kError;
  }
  return kError;
}
