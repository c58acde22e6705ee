#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "joinml/core.hpp"
#include "joinml/similarity.hpp"

namespace joinml {

struct SynParams {
  std::size_t n1 = 10000;
  std::size_t n2 = 10000;
  double selectivity = 1e-4;
  double fnr = 0.0;
  double fpr = 0.0;
  std::uint64_t seed = 0;
  int groups = 4;  // values of the `grp` column on the left table

  void validate() const;
};

void to_json(nlohmann::json& j, const SynParams& p);
void from_json(const nlohmann::json& j, SynParams& p);

/// A loaded or generated join workload.
struct Dataset {
  std::vector<std::shared_ptr<const Table>> tables;
  SimilarityModel similarity;
  std::shared_ptr<const OracleSource> oracle;
  nlohmann::json manifest;

  CrossSpace space(SpaceOptions options = {}) const;
};

/// Syn(fnr, fpr): left/right tables, a score matrix and positive pair labels.
struct SynDataset {
  SynParams params;
  std::shared_ptr<const Table> left;
  std::shared_ptr<const Table> right;
  std::vector<float> scores;  // n1 x n2, row-major
  std::vector<std::pair<std::size_t, std::size_t>> positives;  // ascending (row, col)
  std::vector<bool> inverted_positive;  // parallel to positives

  Dataset dataset() const;
};

SynDataset gen_syn(const SynParams& params);

struct ExactResult {
  std::uint64_t count = 0;
  double sum = 0.0;
  std::optional<double> avg;
  std::optional<double> min;
  std::optional<double> max;
  std::optional<double> median;  // lower median of the matched multiset
  std::map<std::string, std::uint64_t> group_count;
  std::map<std::string, double> group_sum;
  std::vector<TupleIndex> matches;  // ascending

  /// Truth for a scalar aggregate (nullopt when undefined).
  std::optional<double> value(Aggregate a) const;
};

inline constexpr std::uint64_t kExactCap = 10'000'000;

ExactResult exact_evaluate(const CrossSpace& space, const OracleSource& oracle, std::uint64_t cap = kExactCap);

}  // namespace joinml
