#include "joinml/synth.hpp"

#include <algorithm>
#include <cmath>

#include "joinml/rng.hpp"

namespace joinml {

namespace {

constexpr double kHigh = 5.0;
constexpr double kLow = 0.5;

// Algorithm S: visit items in order, keeping each with probability needed/remaining.
class SelectionSampler {
 public:
  SelectionSampler(std::uint64_t total, std::uint64_t wanted, Rng rng) : left_(total), needed_(wanted), rng_(rng) {}

  bool next() {
    const bool take = needed_ > 0 && static_cast<double>(left_) * rng_.uniform() < static_cast<double>(needed_);
    --left_;
    if (take) --needed_;
    return take;
  }

 private:
  std::uint64_t left_;
  std::uint64_t needed_;
  Rng rng_;
};

}  // namespace

void SynParams::validate() const {
  if (n1 == 0 || n2 == 0) throw Error(ErrorKind::InvalidArgument, "table sizes must be positive");
  if (!(selectivity > 0.0 && selectivity < 1.0)) throw Error(ErrorKind::InvalidArgument, "selectivity must lie in (0,1)");
  if (!(fnr >= 0.0 && fnr <= 1.0)) throw Error(ErrorKind::InvalidArgument, "fnr must lie in [0,1]");
  if (!(fpr >= 0.0 && fpr <= 1.0)) throw Error(ErrorKind::InvalidArgument, "fpr must lie in [0,1]");
  if (groups < 1) throw Error(ErrorKind::InvalidArgument, "groups must be positive");
}

void to_json(nlohmann::json& j, const SynParams& p) {
  j = nlohmann::json{{"n1", p.n1},   {"n2", p.n2},     {"selectivity", p.selectivity}, {"fnr", p.fnr},
                     {"fpr", p.fpr}, {"seed", p.seed}, {"groups", p.groups}};
}

void from_json(const nlohmann::json& j, SynParams& p) {
  p = SynParams{};
  p.n1 = j.value("n1", p.n1);
  p.n2 = j.value("n2", p.n2);
  p.selectivity = j.value("selectivity", p.selectivity);
  p.fnr = j.value("fnr", p.fnr);
  p.fpr = j.value("fpr", p.fpr);
  p.seed = j.value("seed", p.seed);
  p.groups = j.value("groups", p.groups);
}

CrossSpace Dataset::space(SpaceOptions options) const { return CrossSpace(tables, similarity, std::move(options)); }

SynDataset gen_syn(const SynParams& params) {
  params.validate();
  const std::uint64_t cells = static_cast<std::uint64_t>(params.n1) * params.n2;
  const auto wanted = static_cast<std::uint64_t>(std::floor(params.selectivity * static_cast<double>(cells)));
  const auto inverted = static_cast<std::uint64_t>(std::llround(params.fnr * static_cast<double>(wanted)));

  const Rng base(params.seed);
  SelectionSampler pick(cells, wanted, base.split(1));
  SelectionSampler flip(wanted, inverted, base.split(2));
  Rng neg_flip = base.split(3);
  Rng score_rng = base.split(4);
  Rng value_rng = base.split(5);
  Rng group_rng = base.split(6);

  SynDataset out;
  out.params = params;
  out.scores.resize(cells);
  out.positives.reserve(wanted);
  out.inverted_positive.reserve(wanted);
  for (std::size_t r = 0; r < params.n1; ++r) {
    for (std::size_t c = 0; c < params.n2; ++c) {
      const bool match = pick.next();
      bool high = match;
      if (match) {
        const bool inv = flip.next();
        out.positives.emplace_back(r, c);
        out.inverted_positive.push_back(inv);
        high = !inv;
      } else if (neg_flip.bernoulli(params.fpr)) {
        high = true;
      }
      out.scores[r * params.n2 + c] =
          static_cast<float>(high ? score_rng.beta(kHigh, kLow) : score_rng.beta(kLow, kHigh));
    }
  }

  auto make_table = [&](const std::string& name, std::size_t n, bool grouped) {
    auto t = std::make_shared<Table>();
    t->name = name;
    if (grouped) t->attr_names = {"grp"};
    t->rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& rec = t->rows[i];
      rec.id = static_cast<std::int64_t>(i);
      rec.value = value_rng.uniform();
      if (grouped) rec.attrs = {"g" + std::to_string(group_rng.below(static_cast<std::uint64_t>(params.groups)))};
    }
    return std::shared_ptr<const Table>(std::move(t));
  };
  out.left = make_table("left", params.n1, true);
  out.right = make_table("right", params.n2, false);
  return out;
}

Dataset SynDataset::dataset() const {
  Dataset d;
  d.tables = {left, right};
  d.similarity.mode = SimilarityMode::Synthetic;
  d.similarity.hops = {std::make_shared<const HopWeights>(HopWeights::from_scores(params.n1, params.n2, scores))};
  d.oracle = std::make_shared<const PairLabelOracle>(
      std::vector<PairLabelOracle::Hop>{{params.n1, params.n2, positives}});
  nlohmann::json p = params;
  d.manifest = {{"kind", "syn"}, {"params", p}, {"tables", {"left", "right"}}, {"value_table", "left"}, {"group_column", "grp"}};
  return d;
}

std::optional<double> ExactResult::value(Aggregate a) const {
  switch (a) {
    case Aggregate::Count:
      return static_cast<double>(count);
    case Aggregate::Sum:
      return sum;
    case Aggregate::Avg:
      return avg;
    case Aggregate::Min:
      return min;
    case Aggregate::Max:
      return max;
    case Aggregate::Median:
      return median;
    default:
      throw Error(ErrorKind::InvalidArgument, "grouped truth lives in group_count / group_sum");
  }
}

ExactResult exact_evaluate(const CrossSpace& space, const OracleSource& oracle, std::uint64_t cap) {
  if (space.size() > cap) {
    throw Error(ErrorKind::CapExceeded, "cross product of " + std::to_string(space.size()) + " tuples exceeds the cap");
  }
  ExactResult out;
  std::vector<double> values;
  const bool grouped = !space.group_names().empty();
  for (TupleIndex t = 0; t < space.size(); ++t) {
    if (!space.label(oracle, t)) continue;
    const double v = space.value(t);
    out.matches.push_back(t);
    values.push_back(v);
    out.sum += v;
    if (grouped) {
      const int g = space.group(t);
      if (g >= 0) {
        const auto& name = space.group_names()[static_cast<std::size_t>(g)];
        out.group_count[name] += 1;
        out.group_sum[name] += v;
      }
    }
  }
  out.count = values.size();
  if (!values.empty()) {
    std::sort(values.begin(), values.end());
    out.avg = out.sum / static_cast<double>(values.size());
    out.min = values.front();
    out.max = values.back();
    out.median = values[(values.size() - 1) / 2];
  }
  return out;
}

}  // namespace joinml
