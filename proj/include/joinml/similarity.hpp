#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "joinml/core.hpp"
#include "joinml/rng.hpp"

namespace joinml {

inline constexpr double kWeightFloor = 1e-6;
inline constexpr std::uint64_t kDefaultMaterializationCap = 100'000'000;

/// Linear index of a tuple in the mixed-radix cross product (row-major over the chain).
using TupleIndex = std::uint64_t;

double cosine(std::span<const float> a, std::span<const float> b);
/// max((1 + c) / 2, 1e-6).
double weight_from_cosine(double c);
double pair_weight(std::span<const float> a, std::span<const float> b);

/// Dense pair weights for one hop with per-row prefix sums for weighted choice.
class HopWeights {
 public:
  /// Weights are floored at kWeightFloor.
  HopWeights(std::size_t rows, std::size_t cols, std::vector<float> weights);

  static HopWeights from_embeddings(const Table& left, const Table& right);
  static HopWeights from_scores(std::size_t rows, std::size_t cols, std::vector<float> scores);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double weight(std::size_t r, std::size_t c) const { return w_[r * cols_ + c]; }
  double row_sum(std::size_t r) const { return prefix_[(r + 1) * cols_ - 1]; }
  std::span<const float> row(std::size_t r) const { return {w_.data() + r * cols_, cols_}; }

  /// Column drawn with probability weight(r, c) / row_sum(r); `u` uniform in [0, 1).
  std::size_t sample_column(std::size_t r, double u) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<float> w_;
  std::vector<double> prefix_;
};

enum class SimilarityMode { Embedding, Matrix, Synthetic };
std::string_view to_string(SimilarityMode m);

struct SimilarityModel {
  SimilarityMode mode = SimilarityMode::Embedding;
  std::vector<std::shared_ptr<const HopWeights>> hops;  // hop j joins table j and j+1
};

struct SpaceOptions {
  std::size_t value_table = 0;     // table whose `value` is the aggregated attribute g
  bool exclude_self_pairs = false; // WHERE a.id <> b.id for adjacent copies of one table
  std::optional<std::string> group_column;  // grouping column of the value table
};

/// Lazy k-way chain-join sampling space.
class CrossSpace {
 public:
  CrossSpace(std::vector<std::shared_ptr<const Table>> tables, SimilarityModel similarity, SpaceOptions options = {});

  /// Builds weights from table embeddings.
  static CrossSpace from_embeddings(std::vector<std::shared_ptr<const Table>> tables, SpaceOptions options = {});

  std::size_t arity() const { return tables_.size(); }
  std::uint64_t size() const { return size_; }
  const Table& table(std::size_t i) const { return *tables_[i]; }
  const std::vector<std::shared_ptr<const Table>>& tables() const { return tables_; }
  const std::vector<std::string>& table_names() const { return names_; }
  const SimilarityModel& similarity() const { return similarity_; }
  const HopWeights& hop(std::size_t j) const { return *similarity_.hops[j]; }
  const SpaceOptions& options() const { return options_; }

  TupleRows decode(TupleIndex t) const;
  TupleIndex encode(const TupleRows& rows) const;

  /// Product of adjacent pair weights.
  double tuple_score(TupleIndex t) const;
  double tuple_score(const TupleRows& rows) const;
  /// Probability that one unrestricted weighted walk yields this tuple.
  double walk_probability(TupleIndex t) const;
  /// Sum of tuple scores over the whole cross product (chain dynamic program).
  double total_mass() const { return total_mass_; }

  /// Aggregated attribute g of the tuple.
  double value(TupleIndex t) const;
  double value(const TupleRows& rows) const { return tables_[options_.value_table]->rows[rows[options_.value_table]].value; }
  /// Dense group id of the tuple (requires options().group_column), or -1.
  int group(TupleIndex t) const;
  const std::vector<std::string>& group_names() const { return group_names_; }

  std::string key(TupleIndex t) const;
  std::string key(const TupleRows& rows) const;

  /// True when the tuple fails the self-pair filter (its label is 0 without an Oracle call).
  bool filtered(const TupleRows& rows) const;

  /// Label through the ledger; filtered tuples cost nothing.
  bool evaluate(const OracleSource& oracle, TupleIndex t, BudgetLedger& ledger) const;
  /// Label without budget accounting (ground truth / test use).
  bool label(const OracleSource& oracle, TupleIndex t) const;
  bool label(const OracleSource& oracle, const TupleRows& rows) const;

  /// Contiguous sub-chain [first, last] of the join.
  CrossSpace subchain(std::size_t first, std::size_t last) const;

  /// Smallest / largest value of g ignoring the join condition.
  double min_value() const { return min_value_; }
  double max_value() const { return max_value_; }

 private:
  std::vector<std::shared_ptr<const Table>> tables_;
  std::vector<std::string> names_;
  SimilarityModel similarity_;
  SpaceOptions options_;
  std::uint64_t size_ = 1;
  std::vector<std::uint64_t> strides_;
  double total_mass_ = 0.0;
  double min_value_ = 0.0;
  double max_value_ = 0.0;
  std::vector<int> row_group_;
  std::vector<std::string> group_names_;
};

struct TopEntry {
  TupleIndex tuple = 0;
  double score = 0.0;
  double walk_prob = 0.0;
};

/// Highest-scoring tuples sorted by (score desc, tuple index asc).
struct TopRegime {
  std::vector<TopEntry> entries;
  std::unordered_set<TupleIndex> members;
  double mass = 0.0;       // sum of member scores
  double walk_mass = 0.0;  // probability an unrestricted walk lands in the regime
  bool approximate = false;

  bool contains(TupleIndex t) const { return members.count(t) != 0; }
  std::size_t size() const { return entries.size(); }
};

/// Exactly the m highest-scoring tuples. Throws CapExceeded when size() > cap.
TopRegime materialize_top(const CrossSpace& space, std::uint64_t m, std::uint64_t cap = kDefaultMaterializationCap);

/// Per-hop fanout used by nearest-neighbour blocking: ceil((m / |T_1|)^(1/(k-1))), at least 1.
std::size_t nn_fanout(const CrossSpace& space, std::uint64_t m);

/// Approximate top regime: each left record joins its top-`fanout` neighbours per hop;
/// the best m candidates are kept.
TopRegime nn_blocking_top(const CrossSpace& space, std::uint64_t m, std::optional<std::size_t> fanout = std::nullopt);

struct WalkSample {
  TupleIndex tuple = 0;
  double probability = 0.0;  // exact probability conditional on avoiding `forbidden`
};

/// Weighted Wander Join step: uniform first record, then similarity-proportional hops,
/// rejecting tuples inside `forbidden`. Throws DegenerateSpace when the acceptance
/// probability falls below 1e-9.
WalkSample weighted_walk(const CrossSpace& space, Rng& rng, const TopRegime* forbidden = nullptr);

}  // namespace joinml
