#include "joinml/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>

namespace joinml {

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::InvalidArgument, "embedding lengths differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::ZeroNorm, "zero embedding vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double weight_from_cosine(double c) { return std::max((1.0 + c) / 2.0, kWeightFloor); }

double pair_weight(std::span<const float> a, std::span<const float> b) { return weight_from_cosine(cosine(a, b)); }

// ---------------------------------------------------------------------------

HopWeights::HopWeights(std::size_t rows, std::size_t cols, std::vector<float> weights)
    : rows_(rows), cols_(cols), w_(std::move(weights)) {
  if (rows == 0 || cols == 0) throw Error(ErrorKind::InvalidArgument, "empty hop");
  if (w_.size() != rows * cols) throw Error(ErrorKind::InvalidArgument, "weight matrix has the wrong size");
  prefix_.resize(w_.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      float& w = w_[r * cols + c];
      if (!(w >= kWeightFloor)) w = static_cast<float>(kWeightFloor);
      acc += w;
      prefix_[r * cols + c] = acc;
    }
  }
}

HopWeights HopWeights::from_embeddings(const Table& left, const Table& right) {
  auto normalized = [](const Table& t) {
    std::vector<std::vector<double>> out;
    out.reserve(t.size());
    for (const auto& rec : t.rows) {
      double n = 0.0;
      for (float x : rec.embedding) n += static_cast<double>(x) * x;
      if (n == 0.0) throw Error(ErrorKind::ZeroNorm, "zero embedding for id " + std::to_string(rec.id) + " in " + t.name);
      n = std::sqrt(n);
      std::vector<double> v(rec.embedding.begin(), rec.embedding.end());
      for (auto& x : v) x /= n;
      out.push_back(std::move(v));
    }
    return out;
  };
  if (left.embedding_dim == 0 || left.embedding_dim != right.embedding_dim) {
    throw Error(ErrorKind::InvalidArgument, "tables " + left.name + " and " + right.name + " lack matching embeddings");
  }
  const auto a = normalized(left);
  const auto b = normalized(right);
  std::vector<float> w(a.size() * b.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t c = 0; c < b.size(); ++c) {
      double dot = 0.0;
      for (std::size_t d = 0; d < a[r].size(); ++d) dot += a[r][d] * b[c][d];
      w[r * b.size() + c] = static_cast<float>(weight_from_cosine(std::clamp(dot, -1.0, 1.0)));
    }
  }
  return HopWeights(a.size(), b.size(), std::move(w));
}

HopWeights HopWeights::from_scores(std::size_t rows, std::size_t cols, std::vector<float> scores) {
  return HopWeights(rows, cols, std::move(scores));
}

std::size_t HopWeights::sample_column(std::size_t r, double u) const {
  const auto first = prefix_.begin() + static_cast<std::ptrdiff_t>(r * cols_);
  const auto last = first + static_cast<std::ptrdiff_t>(cols_);
  const double target = u * row_sum(r);
  const auto it = std::upper_bound(first, last, target);
  return std::min<std::size_t>(static_cast<std::size_t>(it - first), cols_ - 1);
}

std::string_view to_string(SimilarityMode m) {
  switch (m) {
    case SimilarityMode::Embedding: return "embedding";
    case SimilarityMode::Matrix: return "matrix";
    case SimilarityMode::Synthetic: return "synthetic";
  }
  return "?";
}

// ---------------------------------------------------------------------------

CrossSpace::CrossSpace(std::vector<std::shared_ptr<const Table>> tables, SimilarityModel similarity,
                       SpaceOptions options)
    : tables_(std::move(tables)), similarity_(std::move(similarity)), options_(std::move(options)) {
  if (tables_.size() < 2) throw Error(ErrorKind::InvalidArgument, "a join needs at least two tables");
  if (similarity_.hops.size() != tables_.size() - 1) throw Error(ErrorKind::InvalidArgument, "one hop per table pair");
  if (options_.value_table >= tables_.size()) throw Error(ErrorKind::InvalidArgument, "value table out of range");
  for (std::size_t j = 0; j < tables_.size(); ++j) {
    names_.push_back(tables_[j]->name);
    if (j + 1 < tables_.size()) {
      const auto& h = *similarity_.hops[j];
      if (h.rows() != tables_[j]->size() || h.cols() != tables_[j + 1]->size()) {
        throw Error(ErrorKind::InvalidArgument, "hop " + std::to_string(j) + " does not match table sizes");
      }
    }
  }
  strides_.assign(tables_.size(), 1);
  for (std::size_t j = tables_.size(); j-- > 0;) {
    strides_[j] = size_;
    const std::uint64_t n = tables_[j]->size();
    if (size_ > std::numeric_limits<std::uint64_t>::max() / n) throw Error(ErrorKind::InvalidArgument, "cross product overflows");
    size_ *= n;
  }

  std::vector<double> v(tables_.back()->size(), 1.0);
  for (std::size_t j = tables_.size() - 1; j-- > 0;) {
    const auto& h = *similarity_.hops[j];
    std::vector<double> next(h.rows(), 0.0);
    for (std::size_t r = 0; r < h.rows(); ++r) {
      const auto row = h.row(r);
      double acc = 0.0;
      for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
      next[r] = acc;
    }
    v = std::move(next);
  }
  for (double x : v) total_mass_ += x;

  const Table& vt = *tables_[options_.value_table];
  min_value_ = max_value_ = vt.rows.front().value;
  for (const auto& r : vt.rows) {
    min_value_ = std::min(min_value_, r.value);
    max_value_ = std::max(max_value_, r.value);
  }

  if (options_.group_column) {
    std::vector<std::string> raw(vt.size());
    for (std::size_t i = 0; i < vt.size(); ++i) raw[i] = vt.attribute(i, *options_.group_column);
    std::map<std::string, int> ids;
    for (const auto& s : raw) ids.emplace(s, 0);
    int next = 0;
    for (auto& [name, id] : ids) {
      id = next++;
      group_names_.push_back(name);
    }
    row_group_.resize(vt.size());
    for (std::size_t i = 0; i < vt.size(); ++i) row_group_[i] = ids.at(raw[i]);
  }
}

CrossSpace CrossSpace::from_embeddings(std::vector<std::shared_ptr<const Table>> tables, SpaceOptions options) {
  SimilarityModel model;
  model.mode = SimilarityMode::Embedding;
  for (std::size_t j = 0; j + 1 < tables.size(); ++j) {
    model.hops.push_back(std::make_shared<const HopWeights>(HopWeights::from_embeddings(*tables[j], *tables[j + 1])));
  }
  return CrossSpace(std::move(tables), std::move(model), std::move(options));
}

TupleRows CrossSpace::decode(TupleIndex t) const {
  TupleRows rows(tables_.size());
  for (std::size_t j = 0; j < tables_.size(); ++j) {
    rows[j] = static_cast<std::size_t>(t / strides_[j]);
    t %= strides_[j];
  }
  return rows;
}

TupleIndex CrossSpace::encode(const TupleRows& rows) const {
  TupleIndex t = 0;
  for (std::size_t j = 0; j < tables_.size(); ++j) t += rows[j] * strides_[j];
  return t;
}

double CrossSpace::tuple_score(const TupleRows& rows) const {
  double s = 1.0;
  for (std::size_t j = 0; j + 1 < rows.size(); ++j) s *= similarity_.hops[j]->weight(rows[j], rows[j + 1]);
  return s;
}

double CrossSpace::tuple_score(TupleIndex t) const { return tuple_score(decode(t)); }

double CrossSpace::walk_probability(TupleIndex t) const {
  const auto rows = decode(t);
  double p = 1.0 / static_cast<double>(tables_.front()->size());
  for (std::size_t j = 0; j + 1 < rows.size(); ++j) {
    const auto& h = *similarity_.hops[j];
    p *= h.weight(rows[j], rows[j + 1]) / h.row_sum(rows[j]);
  }
  return p;
}

double CrossSpace::value(TupleIndex t) const {
  const std::size_t j = options_.value_table;
  return tables_[j]->rows[static_cast<std::size_t>((t / strides_[j]) % tables_[j]->size())].value;
}

int CrossSpace::group(TupleIndex t) const {
  if (row_group_.empty()) return -1;
  const std::size_t j = options_.value_table;
  return row_group_[static_cast<std::size_t>((t / strides_[j]) % tables_[j]->size())];
}

std::string CrossSpace::key(const TupleRows& rows) const {
  std::vector<std::int64_t> ids(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) ids[j] = tables_[j]->rows[rows[j]].id;
  return canonical_key(ids, names_);
}

std::string CrossSpace::key(TupleIndex t) const { return key(decode(t)); }

bool CrossSpace::filtered(const TupleRows& rows) const {
  if (!options_.exclude_self_pairs) return false;
  for (std::size_t j = 0; j + 1 < rows.size(); ++j) {
    const bool same_table = tables_[j] == tables_[j + 1] || names_[j] == names_[j + 1];
    if (same_table && tables_[j]->rows[rows[j]].id == tables_[j + 1]->rows[rows[j + 1]].id) return true;
  }
  return false;
}

bool CrossSpace::evaluate(const OracleSource& oracle, TupleIndex t, BudgetLedger& ledger) const {
  const auto rows = decode(t);
  if (filtered(rows)) return false;
  return oracle_eval(oracle, rows, key(rows), ledger);
}

bool CrossSpace::label(const OracleSource& oracle, const TupleRows& rows) const {
  if (filtered(rows)) return false;
  for (std::size_t j = 0; j + 1 < rows.size(); ++j) {
    if (!oracle.pair_matches(j, rows[j], rows[j + 1])) return false;
  }
  return true;
}

bool CrossSpace::label(const OracleSource& oracle, TupleIndex t) const { return label(oracle, decode(t)); }

CrossSpace CrossSpace::subchain(std::size_t first, std::size_t last) const {
  if (first >= last || last >= tables_.size()) throw Error(ErrorKind::InvalidArgument, "bad sub-chain range");
  std::vector<std::shared_ptr<const Table>> tables(tables_.begin() + static_cast<std::ptrdiff_t>(first),
                                                   tables_.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  SimilarityModel model;
  model.mode = similarity_.mode;
  model.hops.assign(similarity_.hops.begin() + static_cast<std::ptrdiff_t>(first),
                    similarity_.hops.begin() + static_cast<std::ptrdiff_t>(last));
  SpaceOptions opts = options_;
  if (opts.value_table >= first && opts.value_table <= last) {
    opts.value_table -= first;
  } else {
    opts.value_table = 0;
    opts.group_column.reset();
  }
  return CrossSpace(std::move(tables), std::move(model), std::move(opts));
}

// ---------------------------------------------------------------------------

namespace {

// Orders "better" first: higher score, then smaller tuple index.
struct Better {
  bool operator()(const TopEntry& a, const TopEntry& b) const {
    if (a.score != b.score) return a.score > b.score;
    return a.tuple < b.tuple;
  }
};

class TopCollector {
 public:
  explicit TopCollector(std::uint64_t m) : m_(m) {}

  void offer(TupleIndex t, double score) {
    if (m_ == 0) return;
    TopEntry e{t, score, 0.0};
    if (heap_.size() < m_) {
      heap_.push(e);
    } else if (Better{}(e, heap_.top())) {
      heap_.pop();
      heap_.push(e);
    }
  }

  TopRegime finish(const CrossSpace& space, bool approximate) {
    TopRegime top;
    top.approximate = approximate;
    top.entries.reserve(heap_.size());
    while (!heap_.empty()) {
      top.entries.push_back(heap_.top());
      heap_.pop();
    }
    std::sort(top.entries.begin(), top.entries.end(), Better{});
    top.members.reserve(top.entries.size() * 2);
    for (auto& e : top.entries) {
      e.walk_prob = space.walk_probability(e.tuple);
      top.mass += e.score;
      top.walk_mass += e.walk_prob;
      top.members.insert(e.tuple);
    }
    return top;
  }

 private:
  std::uint64_t m_;
  // Max-heap under Better puts the worst kept entry on top.
  std::priority_queue<TopEntry, std::vector<TopEntry>, Better> heap_;
};

}  // namespace

TopRegime materialize_top(const CrossSpace& space, std::uint64_t m, std::uint64_t cap) {
  if (space.size() > cap) {
    throw Error(ErrorKind::CapExceeded, "cross product of " + std::to_string(space.size()) + " tuples exceeds the cap");
  }
  m = std::min(m, space.size());
  TopCollector collector(m);
  if (m > 0) {
    if (space.arity() == 2) {
      const auto& h = space.hop(0);
      for (std::size_t r = 0; r < h.rows(); ++r) {
        const auto row = h.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) collector.offer(r * h.cols() + c, row[c]);
      }
    } else {
      for (TupleIndex t = 0; t < space.size(); ++t) collector.offer(t, space.tuple_score(t));
    }
  }
  return collector.finish(space, false);
}

std::size_t nn_fanout(const CrossSpace& space, std::uint64_t m) {
  if (m == 0) return 1;
  const double k1 = static_cast<double>(space.arity() - 1);
  const double base = static_cast<double>(m) / static_cast<double>(space.table(0).size());
  const double f = std::ceil(std::pow(base, 1.0 / k1) - 1e-12);
  return static_cast<std::size_t>(std::max(1.0, f));
}

TopRegime nn_blocking_top(const CrossSpace& space, std::uint64_t m, std::optional<std::size_t> fanout) {
  m = std::min(m, space.size());
  const std::size_t f = fanout ? std::max<std::size_t>(1, *fanout) : nn_fanout(space, m);
  TopCollector collector(m);
  if (m == 0) return collector.finish(space, true);

  const std::size_t hops = space.arity() - 1;
  std::vector<std::vector<std::vector<std::size_t>>> neighbours(hops);
  auto nearest = [&](std::size_t j, std::size_t r) -> const std::vector<std::size_t>& {
    auto& cache = neighbours[j];
    if (cache.empty()) cache.resize(space.hop(j).rows());
    auto& out = cache[r];
    if (out.empty()) {
      const auto row = space.hop(j).row(r);
      std::vector<std::size_t> cols(row.size());
      for (std::size_t c = 0; c < cols.size(); ++c) cols[c] = c;
      const std::size_t keep = std::min(f, cols.size());
      std::partial_sort(cols.begin(), cols.begin() + static_cast<std::ptrdiff_t>(keep), cols.end(),
                        [&](std::size_t a, std::size_t b) { return row[a] != row[b] ? row[a] > row[b] : a < b; });
      cols.resize(keep);
      out = std::move(cols);
    }
    return out;
  };

  TupleRows rows(space.arity());
  auto expand = [&](auto&& self, std::size_t j, double score) -> void {
    if (j == hops) {
      collector.offer(space.encode(rows), score);
      return;
    }
    for (std::size_t c : nearest(j, rows[j])) {
      rows[j + 1] = c;
      self(self, j + 1, score * space.hop(j).weight(rows[j], c));
    }
  };
  for (std::size_t r = 0; r < space.table(0).size(); ++r) {
    rows[0] = r;
    expand(expand, 0, 1.0);
  }
  return collector.finish(space, true);
}

WalkSample weighted_walk(const CrossSpace& space, Rng& rng, const TopRegime* forbidden) {
  double acceptance = 1.0;
  if (forbidden && !forbidden->entries.empty()) acceptance = std::max(0.0, 1.0 - forbidden->walk_mass);
  if (acceptance < 1e-9) throw Error(ErrorKind::DegenerateSpace, "blocked regime absorbs the walk distribution");

  const std::size_t n1 = space.table(0).size();
  TupleRows rows(space.arity());
  for (;;) {
    rows[0] = static_cast<std::size_t>(rng.below(n1));
    double p = 1.0 / static_cast<double>(n1);
    for (std::size_t j = 0; j + 1 < rows.size(); ++j) {
      const auto& h = space.hop(j);
      rows[j + 1] = h.sample_column(rows[j], rng.uniform());
      p *= h.weight(rows[j], rows[j + 1]) / h.row_sum(rows[j]);
    }
    const TupleIndex t = space.encode(rows);
    if (forbidden && forbidden->contains(t)) continue;
    return {t, p / acceptance};
  }
}

}  // namespace joinml
