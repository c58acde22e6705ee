#include "joinml/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace joinml::io {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

std::int64_t parse_int(const std::string& s, const fs::path& path) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::Io, "bad integer '" + s + "' in " + path.string());
  }
  return v;
}

double parse_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Io, "bad number '" + s + "' in " + path.string());
  }
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  return out;
}

fs::path meta_path(const fs::path& path) { return fs::path(path.string() + ".meta"); }

std::map<std::string, std::uint64_t> read_meta(const fs::path& path) {
  auto in = open_in(meta_path(path));
  std::map<std::string, std::uint64_t> out;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Io, "bad meta token '" + tok + "'");
    out[tok.substr(0, eq)] = static_cast<std::uint64_t>(parse_int(tok.substr(eq + 1), meta_path(path)));
  }
  return out;
}

std::vector<float> read_floats(const fs::path& path, std::size_t count) {
  auto in = open_in(path, std::ios::binary);
  std::vector<float> out(count);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(float))) {
    throw Error(ErrorKind::Io, "short read from " + path.string());
  }
  return out;
}

void write_floats(const fs::path& path, const float* data, std::size_t count) {
  auto out = open_out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
}

std::shared_ptr<const Table> load_table(const fs::path& dir, const std::string& name, bool embeddings) {
  auto t = std::make_shared<Table>(read_table_csv(dir / "tables" / (name + ".csv"), name));
  if (embeddings) read_embeddings(dir / "tables" / (name + ".emb"), *t);
  t->validate();
  return t;
}

}  // namespace

Table read_table_csv(const fs::path& path, const std::string& name) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Io, "empty table file " + path.string());
  const auto header = split(trim(line), ',');
  if (header.size() < 3 || header[0] != "id" || header[1] != "entity" || header[2] != "value") {
    throw Error(ErrorKind::Io, "table header must start with id,entity,value in " + path.string());
  }
  Table t;
  t.name = name;
  t.attr_names.assign(header.begin() + 3, header.end());
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != header.size()) throw Error(ErrorKind::Io, "ragged row in " + path.string());
    Record r;
    r.id = parse_int(cells[0], path);
    if (!cells[1].empty()) r.entity = parse_int(cells[1], path);
    r.value = parse_double(cells[2], path);
    r.attrs.assign(cells.begin() + 3, cells.end());
    t.rows.push_back(std::move(r));
  }
  return t;
}

void write_table_csv(const fs::path& path, const Table& table) {
  auto out = open_out(path);
  out << "id,entity,value";
  for (const auto& a : table.attr_names) out << ',' << a;
  out << '\n';
  out.precision(17);
  for (const auto& r : table.rows) {
    out << r.id << ',';
    if (r.entity) out << *r.entity;
    out << ',' << r.value;
    for (const auto& a : r.attrs) out << ',' << a;
    out << '\n';
  }
}

void read_embeddings(const fs::path& path, Table& table) {
  const auto meta = read_meta(path);
  const std::size_t dim = meta.at("dim");
  const std::size_t count = meta.at("count");
  if (count != table.rows.size()) throw Error(ErrorKind::Io, "embedding count does not match table " + table.name);
  const auto data = read_floats(path, dim * count);
  table.embedding_dim = dim;
  for (std::size_t i = 0; i < count; ++i) {
    table.rows[i].embedding.assign(data.begin() + static_cast<std::ptrdiff_t>(i * dim),
                                   data.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  }
}

void write_embeddings(const fs::path& path, const Table& table) {
  std::vector<float> data;
  data.reserve(table.rows.size() * table.embedding_dim);
  for (const auto& r : table.rows) data.insert(data.end(), r.embedding.begin(), r.embedding.end());
  write_floats(path, data.data(), data.size());
  write_text(meta_path(path), "dim=" + std::to_string(table.embedding_dim) + " count=" + std::to_string(table.size()) + "\n");
}

std::vector<float> read_score_matrix(const fs::path& path, std::size_t& rows, std::size_t& cols) {
  const auto meta = read_meta(path);
  rows = meta.at("rows");
  cols = meta.at("cols");
  return read_floats(path, rows * cols);
}

void write_score_matrix(const fs::path& path, const std::vector<float>& scores, std::size_t rows, std::size_t cols) {
  if (scores.size() != rows * cols) throw Error(ErrorKind::InvalidArgument, "score matrix has the wrong size");
  write_floats(path, scores.data(), scores.size());
  write_text(meta_path(path), "rows=" + std::to_string(rows) + " cols=" + std::to_string(cols) + "\n");
}

void write_syn_dataset(const fs::path& dir, const SynDataset& data) {
  fs::create_directories(dir / "tables");
  write_table_csv(dir / "tables" / "left.csv", *data.left);
  write_table_csv(dir / "tables" / "right.csv", *data.right);
  write_score_matrix(dir / "scores.bin", data.scores, data.params.n1, data.params.n2);
  {
    auto out = open_out(dir / "labels.csv");
    out << "key,label\n";
    for (const auto& [r, c] : data.positives) {
      out << canonical_key({data.left->rows[r].id, data.right->rows[c].id}, {"left", "right"}) << ",1\n";
    }
  }
  nlohmann::json p = data.params;
  const nlohmann::json manifest = {{"kind", "syn"},
                                   {"params", p},
                                   {"tables", {"left", "right"}},
                                   {"value_table", "left"},
                                   {"group_column", "grp"}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  const std::string kind = manifest.value("kind", "");
  Dataset d;
  d.manifest = manifest;
  if (kind == "syn") {
    auto left = load_table(dir, "left", false);
    auto right = load_table(dir, "right", false);
    std::size_t rows = 0, cols = 0;
    auto scores = read_score_matrix(dir / "scores.bin", rows, cols);
    if (rows != left->size() || cols != right->size()) throw Error(ErrorKind::Io, "score matrix shape mismatch");
    std::unordered_map<std::int64_t, std::size_t> lpos, rpos;
    for (std::size_t i = 0; i < left->size(); ++i) lpos[left->rows[i].id] = i;
    for (std::size_t i = 0; i < right->size(); ++i) rpos[right->rows[i].id] = i;
    PairLabelOracle::Hop hop{rows, cols, {}};
    auto in = open_in(dir / "labels.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      line = trim(line);
      if (line.empty()) continue;
      const auto cells = split(line, ',');
      if (cells.size() != 2) throw Error(ErrorKind::Io, "bad label line '" + line + "'");
      if (parse_int(cells[1], dir / "labels.csv") == 0) continue;
      const auto bar = cells[0].find('|');
      const auto c1 = cells[0].find(':');
      const auto c2 = cells[0].find(':', bar);
      if (bar == std::string::npos || c1 == std::string::npos || c2 == std::string::npos) {
        throw Error(ErrorKind::Io, "bad label key '" + cells[0] + "'");
      }
      const auto a = parse_int(cells[0].substr(c1 + 1, bar - c1 - 1), dir / "labels.csv");
      const auto b = parse_int(cells[0].substr(c2 + 1), dir / "labels.csv");
      hop.positives.emplace_back(lpos.at(a), rpos.at(b));
    }
    std::sort(hop.positives.begin(), hop.positives.end());
    d.tables = {left, right};
    d.similarity.mode = SimilarityMode::Synthetic;
    d.similarity.hops = {std::make_shared<const HopWeights>(HopWeights::from_scores(rows, cols, std::move(scores)))};
    d.oracle = std::make_shared<const PairLabelOracle>(std::vector<PairLabelOracle::Hop>{std::move(hop)});
  } else if (kind == "embedding") {
    std::map<std::string, std::shared_ptr<const Table>> loaded;
    for (const auto& name : manifest.at("tables").get<std::vector<std::string>>()) {
      auto it = loaded.find(name);
      if (it == loaded.end()) it = loaded.emplace(name, load_table(dir, name, true)).first;
      d.tables.push_back(it->second);
    }
    d.similarity.mode = SimilarityMode::Embedding;
    for (std::size_t j = 0; j + 1 < d.tables.size(); ++j) {
      d.similarity.hops.push_back(
          std::make_shared<const HopWeights>(HopWeights::from_embeddings(*d.tables[j], *d.tables[j + 1])));
    }
    d.oracle = std::make_shared<const EntityOracle>(d.tables);
  } else {
    throw Error(ErrorKind::Io, "unknown dataset kind '" + kind + "' in " + (dir / "manifest.json").string());
  }
  return d;
}

SpaceOptions space_options(const Dataset& dataset) {
  SpaceOptions o;
  const auto& m = dataset.manifest;
  if (m.contains("value_table")) {
    const auto name = m.at("value_table").get<std::string>();
    for (std::size_t i = 0; i < dataset.tables.size(); ++i) {
      if (dataset.tables[i]->name == name) {
        o.value_table = i;
        break;
      }
    }
  }
  if (m.contains("group_column")) o.group_column = m.at("group_column").get<std::string>();
  o.exclude_self_pairs = m.value("exclude_self_pairs", false);
  return o;
}

nlohmann::json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace joinml::io
