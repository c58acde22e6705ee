#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace joinml {

enum class ErrorKind {
  InvalidArgument,
  BudgetExhausted,
  ZeroNorm,
  CapExceeded,
  DegenerateSpace,
  EmptyValidation,
  TooFewSamples,
  InfeasibleAllocation,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Tables

struct Record {
  std::int64_t id = 0;
  std::optional<std::int64_t> entity;
  double value = 0.0;
  std::vector<float> embedding;
  std::vector<std::string> attrs;  // extra CSV columns, parallel to Table::attr_names
};

struct Table {
  std::string name;
  std::vector<Record> rows;
  std::size_t embedding_dim = 0;  // 0 when similarities come from a score matrix
  std::vector<std::string> attr_names;

  /// Throws InvalidArgument when ids repeat, the table is empty, or embeddings are ragged.
  void validate() const;

  std::size_t size() const { return rows.size(); }

  /// Column lookup used for grouping: "id", "entity", or an extra attribute name.
  std::string attribute(std::size_t row, const std::string& column) const;
};

// ---------------------------------------------------------------------------
// Queries

enum class Aggregate { Count, Sum, Avg, Min, Max, Median, GroupByCount, GroupBySum };
enum class Method { Uniform, Wwj, Blocking, Bas };

std::string_view to_string(Aggregate a);
std::string_view to_string(Method m);
Aggregate parse_aggregate(std::string_view s);
Method parse_method(std::string_view s);

bool is_linear(Aggregate a);  // COUNT or SUM

struct QuerySpec {
  std::vector<std::string> tables;  // chain-join order
  Aggregate aggregate = Aggregate::Count;
  std::optional<std::string> group_key;  // column of the value table
  std::int64_t budget = 1000;
  double confidence = 0.95;
  Method method = Method::Bas;
  double alpha = 0.20;
  double pilot_fraction = 0.10;
  std::uint64_t seed = 0;

  // Knobs beyond the query text.
  std::optional<int> strata_hint;                  // overrides the automatic K
  std::optional<std::vector<int>> forced_allocation;  // fixed blocked strata (1-based)
  std::optional<double> threshold;                 // blocking baseline tau
  int resamples = 1000;
  bool compute_ci = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const QuerySpec& s);
void from_json(const nlohmann::json& j, QuerySpec& s);

// ---------------------------------------------------------------------------
// Tuples and keys

/// Row positions of one tuple of the chain join, one per table.
using TupleRows = std::vector<std::size_t>;

/// "T:3|T:5" style key built from record ids and table names.
std::string canonical_key(const std::vector<std::int64_t>& ids, const std::vector<std::string>& tables);

class OracleSource;
class BudgetLedger;

/// Tuple label: conjunction of adjacent-pair Oracle labels. Charges the ledger
/// only on a cache miss; throws BudgetExhausted when the ledger is full.
bool oracle_eval(const OracleSource& oracle, const TupleRows& rows, const std::string& key, BudgetLedger& ledger);

// ---------------------------------------------------------------------------
// Oracle

/// Ground-truth labeler over adjacent record pairs of the chain.
class OracleSource {
 public:
  virtual ~OracleSource() = default;
  /// Label of (left_row of table hop, right_row of table hop+1).
  virtual bool pair_matches(std::size_t hop, std::size_t left_row, std::size_t right_row) const = 0;
};

/// Records match when both carry the same entity label.
class EntityOracle final : public OracleSource {
 public:
  explicit EntityOracle(std::vector<std::shared_ptr<const Table>> chain);
  bool pair_matches(std::size_t hop, std::size_t left_row, std::size_t right_row) const override;

 private:
  std::vector<std::shared_ptr<const Table>> chain_;
};

/// Explicit positive pairs per hop (row positions); everything else is a non-match.
class PairLabelOracle final : public OracleSource {
 public:
  struct Hop {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::pair<std::size_t, std::size_t>> positives;
  };
  explicit PairLabelOracle(std::vector<Hop> hops);
  bool pair_matches(std::size_t hop, std::size_t left_row, std::size_t right_row) const override;
  std::size_t positive_count(std::size_t hop) const;

 private:
  struct Index {
    std::size_t cols = 0;
    std::vector<bool> bits;  // dense bitmap when rows*cols is small enough
    std::unordered_map<std::uint64_t, bool> sparse;
    std::size_t count = 0;
  };
  std::vector<Index> hops_;
};

// ---------------------------------------------------------------------------
// Budget accounting

/// Distinct-tuple Oracle accounting. Single writer.
class BudgetLedger {
 public:
  explicit BudgetLedger(std::int64_t limit);

  std::int64_t limit() const { return limit_; }
  std::int64_t used() const { return used_; }
  std::int64_t remaining() const { return limit_ - used_; }

  std::optional<bool> lookup(const std::string& key) const;
  /// Records a fresh Oracle result and charges one unit. Throws BudgetExhausted when full.
  void charge(const std::string& key, bool label);
  /// Seeds the cache from a persisted store without charging.
  void preload(const std::string& key, bool label);

  /// Loads `key,label` lines from an append-only cache file, if present.
  void load_cache(const std::filesystem::path& path);
  /// Appends entries charged since construction (or the last persist) to the file.
  void persist(const std::filesystem::path& path);

  std::size_t cache_size() const { return cache_.size(); }

 private:
  std::int64_t limit_;
  std::int64_t used_ = 0;
  std::unordered_map<std::string, bool> cache_;
  std::vector<std::string> unsaved_;
};

// ---------------------------------------------------------------------------
// Results

struct StratumDiagnostics {
  int index = 0;
  std::uint64_t size = 0;
  double mass = 0.0;
  double pilot_variance = 0.0;
  std::int64_t budget = 0;
  bool blocked = false;
};

struct EstimateReport {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double confidence = 0.95;
  std::int64_t budget_used = 0;
  std::vector<int> allocation;
  std::uint64_t seed = 0;
  std::string method;
  std::string aggregate;
  bool undefined = false;       // no matching tuple observed (AVG/MIN/MAX/MEDIAN)
  bool ci_clamped = false;      // CI widened to contain an inverted bootstrap estimate
  bool approximate_top = false; // top regime built by nearest-neighbour blocking
  std::optional<std::string> group;
  std::vector<StratumDiagnostics> per_stratum;

  bool operator==(const EstimateReport& other) const;
};

void to_json(nlohmann::json& j, const EstimateReport& r);
void from_json(const nlohmann::json& j, EstimateReport& r);

/// JSON-safe doubles: non-finite values become the strings "inf", "-inf", "nan".
nlohmann::json number_to_json(double v);
double number_from_json(const nlohmann::json& j);

}  // namespace joinml
