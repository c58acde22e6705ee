#include "joinml/core.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace joinml {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::BudgetExhausted: return "BudgetExhausted";
    case ErrorKind::ZeroNorm: return "ZeroNorm";
    case ErrorKind::CapExceeded: return "CapExceeded";
    case ErrorKind::DegenerateSpace: return "DegenerateSpace";
    case ErrorKind::EmptyValidation: return "EmptyValidation";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::InfeasibleAllocation: return "InfeasibleAllocation";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------

void Table::validate() const {
  if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "table '" + name + "' has no rows");
  std::unordered_set<std::int64_t> ids;
  ids.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.id < 0) throw Error(ErrorKind::InvalidArgument, "negative id in table '" + name + "'");
    if (!ids.insert(r.id).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate id " + std::to_string(r.id) + " in table '" + name + "'");
    }
    if (!std::isfinite(r.value)) throw Error(ErrorKind::InvalidArgument, "non-finite value in table '" + name + "'");
    if (embedding_dim > 0 && r.embedding.size() != embedding_dim) {
      throw Error(ErrorKind::InvalidArgument, "embedding length mismatch in table '" + name + "'");
    }
    if (r.attrs.size() != attr_names.size()) {
      throw Error(ErrorKind::InvalidArgument, "attribute count mismatch in table '" + name + "'");
    }
  }
}

std::string Table::attribute(std::size_t row, const std::string& column) const {
  const Record& r = rows.at(row);
  if (column == "id") return std::to_string(r.id);
  if (column == "entity") return r.entity ? std::to_string(*r.entity) : std::string();
  for (std::size_t i = 0; i < attr_names.size(); ++i) {
    if (attr_names[i] == column) return r.attrs[i];
  }
  throw Error(ErrorKind::InvalidArgument, "table '" + name + "' has no column '" + column + "'");
}

// ---------------------------------------------------------------------------

std::string_view to_string(Aggregate a) {
  switch (a) {
    case Aggregate::Count: return "COUNT";
    case Aggregate::Sum: return "SUM";
    case Aggregate::Avg: return "AVG";
    case Aggregate::Min: return "MIN";
    case Aggregate::Max: return "MAX";
    case Aggregate::Median: return "MEDIAN";
    case Aggregate::GroupByCount: return "GROUPBY-COUNT";
    case Aggregate::GroupBySum: return "GROUPBY-SUM";
  }
  return "?";
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Uniform: return "uniform";
    case Method::Wwj: return "wwj";
    case Method::Blocking: return "blocking";
    case Method::Bas: return "bas";
  }
  return "?";
}

Aggregate parse_aggregate(std::string_view s) {
  std::string u(s);
  for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto a : {Aggregate::Count, Aggregate::Sum, Aggregate::Avg, Aggregate::Min, Aggregate::Max, Aggregate::Median,
                 Aggregate::GroupByCount, Aggregate::GroupBySum}) {
    if (u == to_string(a)) return a;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown aggregate '" + std::string(s) + "'");
}

Method parse_method(std::string_view s) {
  for (auto m : {Method::Uniform, Method::Wwj, Method::Blocking, Method::Bas}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown method '" + std::string(s) + "'");
}

bool is_linear(Aggregate a) { return a == Aggregate::Count || a == Aggregate::Sum; }

void QuerySpec::validate() const {
  if (tables.size() < 2) throw Error(ErrorKind::InvalidArgument, "a join needs at least two tables");
  if (budget < 10) throw Error(ErrorKind::InvalidArgument, "budget must be at least 10");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorKind::InvalidArgument, "confidence must lie in (0,1)");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0,1]");
  if (!(pilot_fraction > 0.0 && pilot_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "pilot_fraction must lie in (0,1)");
  }
  if ((aggregate == Aggregate::GroupByCount || aggregate == Aggregate::GroupBySum) && !group_key) {
    throw Error(ErrorKind::InvalidArgument, "GROUPBY needs a group_key");
  }
  if (resamples < 100) throw Error(ErrorKind::InvalidArgument, "at least 100 bootstrap resamples are required");
}

void to_json(nlohmann::json& j, const QuerySpec& s) {
  j = nlohmann::json{{"tables", s.tables},
                     {"aggregate", std::string(to_string(s.aggregate))},
                     {"budget", s.budget},
                     {"confidence", s.confidence},
                     {"method", std::string(to_string(s.method))},
                     {"alpha", s.alpha},
                     {"pilot_fraction", s.pilot_fraction},
                     {"seed", s.seed},
                     {"resamples", s.resamples},
                     {"compute_ci", s.compute_ci}};
  if (s.group_key) j["group_key"] = *s.group_key;
  if (s.strata_hint) j["strata"] = *s.strata_hint;
  if (s.forced_allocation) j["forced_allocation"] = *s.forced_allocation;
  if (s.threshold) j["threshold"] = *s.threshold;
}

void from_json(const nlohmann::json& j, QuerySpec& s) {
  if (j.contains("tables")) s.tables = j.at("tables").get<std::vector<std::string>>();
  if (j.contains("aggregate")) s.aggregate = parse_aggregate(j.at("aggregate").get<std::string>());
  if (j.contains("group_key")) s.group_key = j.at("group_key").get<std::string>();
  if (j.contains("budget")) s.budget = j.at("budget").get<std::int64_t>();
  if (j.contains("confidence")) s.confidence = j.at("confidence").get<double>();
  if (j.contains("method")) s.method = parse_method(j.at("method").get<std::string>());
  if (j.contains("alpha")) s.alpha = j.at("alpha").get<double>();
  if (j.contains("pilot_fraction")) s.pilot_fraction = j.at("pilot_fraction").get<double>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("strata")) s.strata_hint = j.at("strata").get<int>();
  if (j.contains("forced_allocation")) s.forced_allocation = j.at("forced_allocation").get<std::vector<int>>();
  if (j.contains("threshold")) s.threshold = j.at("threshold").get<double>();
  if (j.contains("resamples")) s.resamples = j.at("resamples").get<int>();
  if (j.contains("compute_ci")) s.compute_ci = j.at("compute_ci").get<bool>();
}

// ---------------------------------------------------------------------------

std::string canonical_key(const std::vector<std::int64_t>& ids, const std::vector<std::string>& tables) {
  if (ids.size() != tables.size()) throw Error(ErrorKind::InvalidArgument, "key arity mismatch");
  std::string key;
  key.reserve(ids.size() * 12);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) key.push_back('|');
    key += tables[i];
    key.push_back(':');
    key += std::to_string(ids[i]);
  }
  return key;
}

bool oracle_eval(const OracleSource& oracle, const TupleRows& rows, const std::string& key, BudgetLedger& ledger) {
  if (auto hit = ledger.lookup(key)) return *hit;
  if (ledger.remaining() <= 0) {
    throw Error(ErrorKind::BudgetExhausted, "Oracle budget of " + std::to_string(ledger.limit()) + " spent");
  }
  bool label = true;
  for (std::size_t hop = 0; hop + 1 < rows.size() && label; ++hop) {
    label = oracle.pair_matches(hop, rows[hop], rows[hop + 1]);
  }
  ledger.charge(key, label);
  return label;
}

// ---------------------------------------------------------------------------

EntityOracle::EntityOracle(std::vector<std::shared_ptr<const Table>> chain) : chain_(std::move(chain)) {}

bool EntityOracle::pair_matches(std::size_t hop, std::size_t left_row, std::size_t right_row) const {
  const auto& a = chain_.at(hop)->rows.at(left_row).entity;
  const auto& b = chain_.at(hop + 1)->rows.at(right_row).entity;
  return a && b && *a == *b;
}

PairLabelOracle::PairLabelOracle(std::vector<Hop> hops) {
  constexpr std::size_t kDenseLimit = std::size_t{1} << 31;
  hops_.reserve(hops.size());
  for (auto& h : hops) {
    Index idx;
    idx.cols = h.cols;
    const bool dense = h.rows * h.cols <= kDenseLimit;
    if (dense) idx.bits.assign(h.rows * h.cols, false);
    for (auto [r, c] : h.positives) {
      if (r >= h.rows || c >= h.cols) throw Error(ErrorKind::InvalidArgument, "label outside the table bounds");
      const std::uint64_t flat = static_cast<std::uint64_t>(r) * h.cols + c;
      if (dense) {
        if (!idx.bits[flat]) ++idx.count;
        idx.bits[flat] = true;
      } else if (idx.sparse.emplace(flat, true).second) {
        ++idx.count;
      }
    }
    hops_.push_back(std::move(idx));
  }
}

bool PairLabelOracle::pair_matches(std::size_t hop, std::size_t left_row, std::size_t right_row) const {
  const Index& idx = hops_.at(hop);
  const std::uint64_t flat = static_cast<std::uint64_t>(left_row) * idx.cols + right_row;
  if (!idx.bits.empty()) return idx.bits[flat];
  return idx.sparse.count(flat) != 0;
}

std::size_t PairLabelOracle::positive_count(std::size_t hop) const { return hops_.at(hop).count; }

// ---------------------------------------------------------------------------

BudgetLedger::BudgetLedger(std::int64_t limit) : limit_(limit) {
  if (limit < 0) throw Error(ErrorKind::InvalidArgument, "negative budget");
}

std::optional<bool> BudgetLedger::lookup(const std::string& key) const {
  auto it = cache_.find(key);
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

void BudgetLedger::charge(const std::string& key, bool label) {
  if (cache_.count(key)) return;
  if (used_ >= limit_) throw Error(ErrorKind::BudgetExhausted, "ledger full");
  cache_.emplace(key, label);
  unsaved_.push_back(key);
  ++used_;
}

void BudgetLedger::preload(const std::string& key, bool label) { cache_.emplace(key, label); }

void BudgetLedger::load_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "key,label") continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw Error(ErrorKind::Io, "malformed cache line in " + path.string());
    preload(line.substr(0, comma), line.substr(comma + 1) == "1");
  }
}

void BudgetLedger::persist(const std::filesystem::path& path) {
  if (unsaved_.empty()) return;
  const bool fresh = !std::filesystem::exists(path);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(ErrorKind::Io, "cannot append to " + path.string());
  if (fresh) out << "key,label\n";
  for (const auto& k : unsaved_) out << k << ',' << (cache_.at(k) ? 1 : 0) << '\n';
  unsaved_.clear();
}

// ---------------------------------------------------------------------------

nlohmann::json number_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw Error(ErrorKind::Io, "bad number '" + s + "'");
  }
  return j.get<double>();
}

namespace {
bool same_number(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }
}  // namespace

bool EstimateReport::operator==(const EstimateReport& o) const {
  auto diag_eq = [](const StratumDiagnostics& a, const StratumDiagnostics& b) {
    return a.index == b.index && a.size == b.size && same_number(a.mass, b.mass) &&
           same_number(a.pilot_variance, b.pilot_variance) && a.budget == b.budget && a.blocked == b.blocked;
  };
  if (per_stratum.size() != o.per_stratum.size()) return false;
  for (std::size_t i = 0; i < per_stratum.size(); ++i) {
    if (!diag_eq(per_stratum[i], o.per_stratum[i])) return false;
  }
  return same_number(estimate, o.estimate) && same_number(ci_low, o.ci_low) && same_number(ci_high, o.ci_high) &&
         same_number(confidence, o.confidence) && budget_used == o.budget_used && allocation == o.allocation &&
         seed == o.seed && method == o.method && aggregate == o.aggregate && undefined == o.undefined &&
         ci_clamped == o.ci_clamped && approximate_top == o.approximate_top && group == o.group;
}

void to_json(nlohmann::json& j, const EstimateReport& r) {
  j = nlohmann::json{{"estimate", number_to_json(r.estimate)},
                     {"ci_low", number_to_json(r.ci_low)},
                     {"ci_high", number_to_json(r.ci_high)},
                     {"confidence", number_to_json(r.confidence)},
                     {"budget_used", r.budget_used},
                     {"allocation", r.allocation},
                     {"seed", r.seed},
                     {"method", r.method},
                     {"aggregate", r.aggregate},
                     {"undefined", r.undefined},
                     {"ci_clamped", r.ci_clamped},
                     {"approximate_top", r.approximate_top}};
  if (r.group) j["group"] = *r.group;
  if (!r.per_stratum.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& d : r.per_stratum) {
      arr.push_back({{"index", d.index},
                     {"size", d.size},
                     {"mass", number_to_json(d.mass)},
                     {"pilot_variance", number_to_json(d.pilot_variance)},
                     {"budget", d.budget},
                     {"blocked", d.blocked}});
    }
    j["per_stratum"] = std::move(arr);
  }
}

void from_json(const nlohmann::json& j, EstimateReport& r) {
  r.estimate = number_from_json(j.at("estimate"));
  r.ci_low = number_from_json(j.at("ci_low"));
  r.ci_high = number_from_json(j.at("ci_high"));
  r.confidence = number_from_json(j.at("confidence"));
  r.budget_used = j.at("budget_used").get<std::int64_t>();
  r.allocation = j.at("allocation").get<std::vector<int>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.method = j.at("method").get<std::string>();
  r.aggregate = j.at("aggregate").get<std::string>();
  r.undefined = j.value("undefined", false);
  r.ci_clamped = j.value("ci_clamped", false);
  r.approximate_top = j.value("approximate_top", false);
  if (j.contains("group")) r.group = j.at("group").get<std::string>();
  r.per_stratum.clear();
  if (j.contains("per_stratum")) {
    for (const auto& d : j.at("per_stratum")) {
      StratumDiagnostics s;
      s.index = d.at("index").get<int>();
      s.size = d.at("size").get<std::uint64_t>();
      s.mass = number_from_json(d.at("mass"));
      s.pilot_variance = number_from_json(d.at("pilot_variance"));
      s.budget = d.at("budget").get<std::int64_t>();
      s.blocked = d.at("blocked").get<bool>();
      r.per_stratum.push_back(s);
    }
  }
}

}  // namespace joinml
